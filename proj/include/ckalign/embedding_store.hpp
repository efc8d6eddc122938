#pragma once

#include <Eigen/Core>

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "json.hpp"

#include "ckalign/error.hpp"

namespace ckalign {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

/// A dim x count matrix of column embeddings with one identifier per column.
struct EmbeddingSet {
  Matrix data;
  std::vector<std::string> ids;
  std::string modality_tag;

  Index dim() const { return data.rows(); }
  Index count() const { return data.cols(); }

  bool operator==(const EmbeddingSet&) const = default;
};

// Checks the EmbeddingSet invariants; `what` names the set in messages.
inline void validate(const EmbeddingSet& set, const std::string& what = "embedding set") {
  require(set.dim() >= 1, ErrorKind::validation, what + ": dim must be >= 1");
  require(set.count() >= 1, ErrorKind::validation, what + ": count must be >= 1");
  require(static_cast<Index>(set.ids.size()) == set.count(), ErrorKind::validation,
          what + ": " + std::to_string(set.ids.size()) + " ids for " + std::to_string(set.count()) +
              " columns");
  std::unordered_set<std::string> seen;
  for (const auto& id : set.ids) {
    require(seen.insert(id).second, ErrorKind::validation, what + ": duplicate id '" + id + "'");
  }
  for (Index j = 0; j < set.count(); ++j) {
    for (Index i = 0; i < set.dim(); ++i) {
      require(std::isfinite(set.data(i, j)), ErrorKind::validation,
              what + ": non-finite value in column '" + set.ids[static_cast<std::size_t>(j)] + "'");
    }
  }
}

// Column subset, in the given order.
inline EmbeddingSet select_columns(const EmbeddingSet& set, const std::vector<Index>& cols) {
  EmbeddingSet out;
  out.modality_tag = set.modality_tag;
  out.data.resize(set.dim(), static_cast<Index>(cols.size()));
  out.ids.reserve(cols.size());
  for (std::size_t k = 0; k < cols.size(); ++k) {
    require(cols[k] >= 0 && cols[k] < set.count(), ErrorKind::size, "column index out of range");
    out.data.col(static_cast<Index>(k)) = set.data.col(cols[k]);
    out.ids.push_back(set.ids[static_cast<std::size_t>(cols[k])]);
  }
  return out;
}

// Horizontal concatenation [a, b]; ids must stay unique.
inline EmbeddingSet concat_columns(const EmbeddingSet& a, const EmbeddingSet& b) {
  require(a.dim() == b.dim(), ErrorKind::size, "cannot concatenate sets of different dim");
  EmbeddingSet out;
  out.modality_tag = a.modality_tag;
  out.data.resize(a.dim(), a.count() + b.count());
  out.data << a.data, b.data;
  out.ids = a.ids;
  out.ids.insert(out.ids.end(), b.ids.begin(), b.ids.end());
  return out;
}

namespace detail {

inline constexpr char kMagic[4] = {'E', 'M', 'B', '1'};

template <typename T>
T to_little_endian(T value) {
  if constexpr (std::endian::native == std::endian::big) {
    auto* bytes = reinterpret_cast<unsigned char*>(&value);
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(bytes[i], bytes[sizeof(T) - 1 - i]);
  }
  return value;
}

inline void write_u32(std::ostream& os, std::uint32_t v) {
  v = to_little_endian(v);
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

}  // namespace detail

// File layout: "EMB1" | u32 LE header length | JSON header | f64 LE column-major payload.
inline void save_embeddings(const EmbeddingSet& set, const std::string& path) {
  validate(set, path);
  nlohmann::json header = {{"dim", set.dim()},
                           {"count", set.count()},
                           {"modality_tag", set.modality_tag},
                           {"ids", set.ids}};
  const std::string header_text = header.dump();
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  require(static_cast<bool>(os), ErrorKind::storage, "cannot open '" + path + "' for writing");
  os.write(detail::kMagic, 4);
  detail::write_u32(os, static_cast<std::uint32_t>(header_text.size()));
  os.write(header_text.data(), static_cast<std::streamsize>(header_text.size()));
  if constexpr (std::endian::native == std::endian::little) {
    os.write(reinterpret_cast<const char*>(set.data.data()),
             static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(set.data.size())));
  } else {
    for (Index k = 0; k < set.data.size(); ++k) {
      const double v = detail::to_little_endian(set.data.data()[k]);
      os.write(reinterpret_cast<const char*>(&v), sizeof v);
    }
  }
  os.flush();
  require(static_cast<bool>(os), ErrorKind::storage, "write failed for '" + path + "'");
}

inline EmbeddingSet load_embeddings(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  require(static_cast<bool>(is), ErrorKind::storage, "cannot open '" + path + "'");
  const std::string bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  require(bytes.size() >= 8 && std::memcmp(bytes.data(), detail::kMagic, 4) == 0, ErrorKind::format,
          "'" + path + "' is not an EMB1 file (bad magic)");
  std::uint32_t header_len = 0;
  std::memcpy(&header_len, bytes.data() + 4, 4);
  header_len = detail::to_little_endian(header_len);
  require(bytes.size() - 8 >= header_len, ErrorKind::format, "'" + path + "': truncated header");

  EmbeddingSet set;
  Index dim = 0;
  Index count = 0;
  try {
    const auto header = nlohmann::json::parse(bytes.begin() + 8, bytes.begin() + 8 + header_len);
    dim = header.at("dim").get<Index>();
    count = header.at("count").get<Index>();
    set.modality_tag = header.at("modality_tag").get<std::string>();
    set.ids = header.at("ids").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::format, "'" + path + "': bad header: " + e.what());
  }
  require(dim >= 1 && count >= 1, ErrorKind::format, "'" + path + "': header dims must be positive");
  const std::size_t payload = bytes.size() - 8 - header_len;
  const std::size_t expected = sizeof(double) * static_cast<std::size_t>(dim) * static_cast<std::size_t>(count);
  require(payload == expected, ErrorKind::format,
          "'" + path + "': payload holds " + std::to_string(payload) + " bytes, header declares " +
              std::to_string(expected));
  set.data.resize(dim, count);
  std::memcpy(set.data.data(), bytes.data() + 8 + header_len, expected);
  if constexpr (std::endian::native == std::endian::big) {
    for (Index k = 0; k < set.data.size(); ++k) set.data.data()[k] = detail::to_little_endian(set.data.data()[k]);
  }
  validate(set, path);
  return set;
}

enum class PairingRole { base, query, full };

inline std::string_view to_string(PairingRole role) {
  switch (role) {
    case PairingRole::base: return "base";
    case PairingRole::query: return "query";
    case PairingRole::full: return "full";
  }
  return "full";
}

struct PairingManifest {
  std::vector<std::pair<std::string, std::string>> pairs;
  PairingRole role = PairingRole::full;
};

inline void validate(const PairingManifest& manifest) {
  std::unordered_set<std::string> left, right;
  for (const auto& [l, r] : manifest.pairs) {
    require(left.insert(l).second, ErrorKind::validation, "manifest: left id '" + l + "' appears twice");
    require(right.insert(r).second, ErrorKind::validation, "manifest: right id '" + r + "' appears twice");
  }
}

inline nlohmann::json to_json(const PairingManifest& manifest) {
  nlohmann::json pairs = nlohmann::json::array();
  for (const auto& [l, r] : manifest.pairs) pairs.push_back({l, r});
  return {{"role", std::string(to_string(manifest.role))}, {"pairs", pairs}};
}

inline PairingManifest manifest_from_json(const nlohmann::json& j) {
  PairingManifest m;
  try {
    const auto role = j.at("role").get<std::string>();
    if (role == "base") {
      m.role = PairingRole::base;
    } else if (role == "query") {
      m.role = PairingRole::query;
    } else if (role == "full") {
      m.role = PairingRole::full;
    } else {
      fail(ErrorKind::format, "manifest: unknown role '" + role + "'");
    }
    for (const auto& p : j.at("pairs")) {
      require(p.is_array() && p.size() == 2, ErrorKind::format, "manifest: each pair must be [left, right]");
      m.pairs.emplace_back(p[0].get<std::string>(), p[1].get<std::string>());
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::format, std::string("manifest: ") + e.what());
  }
  validate(m);
  return m;
}

inline void save_manifest(const PairingManifest& manifest, const std::string& path) {
  validate(manifest);
  std::ofstream os(path, std::ios::trunc);
  require(static_cast<bool>(os), ErrorKind::storage, "cannot open '" + path + "' for writing");
  os << to_json(manifest).dump() << '\n';
  require(static_cast<bool>(os), ErrorKind::storage, "write failed for '" + path + "'");
}

inline PairingManifest load_manifest(const std::string& path) {
  std::ifstream is(path);
  require(static_cast<bool>(is), ErrorKind::storage, "cannot open '" + path + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::format, "'" + path + "': " + e.what());
  }
  return manifest_from_json(j);
}

// Identity manifest pairing column i of left with column i of right.
inline PairingManifest identity_manifest(const EmbeddingSet& left, const EmbeddingSet& right) {
  require(left.count() == right.count(), ErrorKind::size, "identity manifest needs equal counts");
  PairingManifest m;
  for (std::size_t i = 0; i < left.ids.size(); ++i) m.pairs.emplace_back(left.ids[i], right.ids[i]);
  return m;
}

/// Materializes column-aligned copies: column i of both outputs is manifest pair i.
inline std::pair<EmbeddingSet, EmbeddingSet> align_by_manifest(const EmbeddingSet& left, const EmbeddingSet& right,
                                                               const PairingManifest& manifest) {
  validate(manifest);
  auto index_of = [](const EmbeddingSet& set) {
    std::unordered_map<std::string, Index> idx;
    for (std::size_t i = 0; i < set.ids.size(); ++i) idx.emplace(set.ids[i], static_cast<Index>(i));
    return idx;
  };
  const auto left_idx = index_of(left);
  const auto right_idx = index_of(right);
  std::vector<Index> lcols, rcols;
  lcols.reserve(manifest.pairs.size());
  rcols.reserve(manifest.pairs.size());
  for (const auto& [l, r] : manifest.pairs) {
    const auto li = left_idx.find(l);
    require(li != left_idx.end(), ErrorKind::lookup, "unknown left id '" + l + "'");
    const auto ri = right_idx.find(r);
    require(ri != right_idx.end(), ErrorKind::lookup, "unknown right id '" + r + "'");
    lcols.push_back(li->second);
    rcols.push_back(ri->second);
  }
  return {select_columns(left, lcols), select_columns(right, rcols)};
}

}  // namespace ckalign
