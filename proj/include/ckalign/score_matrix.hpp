#pragma once

#include <cmath>
#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "ckalign/embedding_store.hpp"
#include "ckalign/error.hpp"

namespace ckalign {

/// Query-pair score table: rows are left queries, columns right queries.
struct ScoreMatrix {
  Matrix values;
  std::vector<std::string> row_ids;
  std::vector<std::string> col_ids;

  Index n_left() const { return values.rows(); }
  Index n_right() const { return values.cols(); }
};

inline void validate(const ScoreMatrix& s) {
  require(s.values.size() > 0, ErrorKind::validation, "score matrix is empty");
  require(s.values.allFinite(), ErrorKind::validation, "score matrix has non-finite entries");
}

// EMB1 container with one column per right query, plus "<path>.ids.json" naming rows and columns.
inline void save_score_matrix(const ScoreMatrix& s, const std::string& path) {
  validate(s);
  EmbeddingSet as_set{s.values, s.col_ids, "score_matrix"};
  if (as_set.ids.empty())
    for (Index j = 0; j < s.n_right(); ++j) as_set.ids.push_back("col" + std::to_string(j));
  save_embeddings(as_set, path);
  std::vector<std::string> rows = s.row_ids;
  if (rows.empty())
    for (Index i = 0; i < s.n_left(); ++i) rows.push_back("row" + std::to_string(i));
  std::ofstream os(path + ".ids.json", std::ios::trunc);
  require(static_cast<bool>(os), ErrorKind::storage, "cannot open '" + path + ".ids.json' for writing");
  os << nlohmann::json{{"rows", rows}, {"cols", as_set.ids}}.dump() << '\n';
}

inline ScoreMatrix load_score_matrix(const std::string& path) {
  auto set = load_embeddings(path);
  ScoreMatrix s{std::move(set.data), {}, std::move(set.ids)};
  std::ifstream is(path + ".ids.json");
  require(static_cast<bool>(is), ErrorKind::storage, "cannot open '" + path + ".ids.json'");
  try {
    const auto j = nlohmann::json::parse(is);
    s.row_ids = j.at("rows").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::format, "'" + path + ".ids.json': " + e.what());
  }
  require(static_cast<Index>(s.row_ids.size()) == s.n_left(), ErrorKind::format, "row id count mismatch");
  return s;
}

}  // namespace ckalign
