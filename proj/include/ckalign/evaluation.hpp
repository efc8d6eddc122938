#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "ckalign/assignment.hpp"
#include "ckalign/baselines.hpp"
#include "ckalign/embedding_store.hpp"
#include "ckalign/error.hpp"
#include "ckalign/kernel.hpp"
#include "ckalign/local_cka.hpp"
#include "ckalign/preprocess.hpp"
#include "ckalign/qap.hpp"
#include "ckalign/random.hpp"
#include "ckalign/synth.hpp"

namespace ckalign {

// ---------------------------------------------------------------------------
// Metrics

/// Fraction of rows i with found[i] == truth[i].
inline double matching_accuracy(const PermutationMap& found, const PermutationMap& truth) {
  require(found.n() == truth.n() && found.n() > 0, ErrorKind::validation,
          "matching_accuracy: size mismatch (" + std::to_string(found.n()) + " vs " + std::to_string(truth.n()) + ")");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < found.mapping.size(); ++i) hits += found.mapping[i] == truth.mapping[i];
  return static_cast<double>(hits) / static_cast<double>(found.mapping.size());
}

inline double topk_accuracy(const std::vector<std::vector<Index>>& ranked, const PermutationMap& truth, Index k) {
  require(static_cast<Index>(ranked.size()) == truth.n() && !ranked.empty(), ErrorKind::validation,
          "topk_accuracy: row count does not match the ground truth");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < ranked.size(); ++i) {
    require(static_cast<Index>(ranked[i].size()) >= k, ErrorKind::validation, "topk_accuracy: row shorter than k");
    const auto end = ranked[i].begin() + k;
    hits += std::find(ranked[i].begin(), end, truth.mapping[i]) != end;
  }
  return static_cast<double>(hits) / static_cast<double>(ranked.size());
}

// Spearman rank correlation with average ranks for ties; 0 when either side is constant.
inline double spearman(const std::vector<double>& x, const std::vector<double>& y) {
  require(x.size() == y.size() && x.size() >= 2, ErrorKind::validation, "spearman needs two equal-length series");
  auto ranks = [](const std::vector<double>& v) {
    std::vector<std::size_t> order(v.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return v[a] < v[b]; });
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < order.size();) {
      std::size_t j = i;
      while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
      const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
      for (std::size_t t = i; t <= j; ++t) r[order[t]] = avg;
      i = j + 1;
    }
    return r;
  };
  const auto rx = ranks(x), ry = ranks(y);
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0 || syy == 0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

// ---------------------------------------------------------------------------
// Reports

struct EvalReport {
  std::string task;
  std::string method;
  nlohmann::json config = nlohmann::json::object();
  std::map<std::string, double> metrics;
  std::optional<std::int64_t> wall_time_ms;
};

inline void validate(const EvalReport& r) {
  for (const auto& [name, value] : r.metrics)
    require(std::isfinite(value), ErrorKind::numerical, "metric '" + name + "' is not finite");
}

inline nlohmann::json to_json(const EvalReport& r) {
  nlohmann::json j = {{"task", r.task}, {"method", r.method}, {"config", r.config}, {"metrics", r.metrics}};
  if (r.wall_time_ms) j["wall_time_ms"] = *r.wall_time_ms;
  return j;
}

inline std::string to_csv(const EvalReport& r) {
  std::ostringstream os;
  os.precision(17);
  os << "task,method,metric,value\n";
  for (const auto& [name, value] : r.metrics) os << r.task << ',' << r.method << ",\"" << name << "\"," << value << '\n';
  return os.str();
}

// Compact, locale-independent rendering of a parameter value inside metric names.
inline std::string format_param(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

// ---------------------------------------------------------------------------
// Pipelines

enum class Method { qap, local_cka, relative, linear };

inline std::string_view to_string(Method m) {
  switch (m) {
    case Method::qap: return "qap";
    case Method::local_cka: return "local";
    case Method::relative: return "relative";
    case Method::linear: return "linear";
  }
  return "qap";
}

inline Method method_from_string(const std::string& s) {
  if (s == "qap") return Method::qap;
  if (s == "local") return Method::local_cka;
  if (s == "relative") return Method::relative;
  if (s == "linear") return Method::linear;
  fail(ErrorKind::validation, "unknown method '" + s + "'");
}

struct PipelineConfig {
  Method method = Method::qap;
  KernelSpec kernel = KernelSpec::linear();
  Index m = 0;
  std::optional<Index> n;  // empty: every non-anchor item is a query
  AnchorMethod anchors = AnchorMethod::kmeans;
  bool stretch = true;
  bool use_cka = true;  // false: plain normalized correlation (cosine) matrices
  QapConfig qap;
  double ridge = kDefaultRidge;
  std::uint64_t seed = 0;
};

inline nlohmann::json to_json(const PipelineConfig& c) {
  return {{"method", std::string(to_string(c.method))},
          {"kernel", to_json(c.kernel)},
          {"m", c.m},
          {"n", c.n ? nlohmann::json(*c.n) : nlohmann::json("all")},
          {"anchors_method", std::string(to_string(c.anchors))},
          {"stretch", c.stretch},
          {"stretch_std", "population"},
          {"stretch_order", "anchors selected first, stretch fit on base+query per side"},
          {"use_cka", c.use_cka},
          {"qap", to_json(c.qap)},
          {"ridge", c.ridge},
          {"seed", c.seed}};
}

/// Index plan for one run on an aligned corpus: which items are anchors,
/// which are queries, and where each left query's partner lands after the
/// right query block is shuffled.
struct SplitPlan {
  std::vector<Index> anchors;
  std::vector<Index> queries;
  PermutationMap truth;  // truth.mapping[a] = right query position of left query a's partner
};

inline SplitPlan plan_split(const EmbeddingSet& left, Index m, std::optional<Index> n, AnchorMethod method,
                            std::uint64_t seed) {
  const Index total = left.count();
  require(m >= 0 && m < total, ErrorKind::validation,
          "anchor count " + std::to_string(m) + " must be below the corpus size " + std::to_string(total));
  SplitPlan plan;
  if (m > 0) plan.anchors = select_anchors(left, m, method, mix_seed(seed, 1)).indices;
  std::vector<bool> is_anchor(static_cast<std::size_t>(total), false);
  for (auto a : plan.anchors) is_anchor[static_cast<std::size_t>(a)] = true;
  std::vector<Index> rest;
  for (Index i = 0; i < total; ++i)
    if (!is_anchor[static_cast<std::size_t>(i)]) rest.push_back(i);
  const Index want = n.value_or(static_cast<Index>(rest.size()));
  require(want >= 2 && want <= static_cast<Index>(rest.size()), ErrorKind::validation,
          "query count " + std::to_string(want) + " must be in [2, " + std::to_string(rest.size()) + "]");
  if (want == static_cast<Index>(rest.size())) {
    plan.queries = rest;
  } else {
    Rng rng(mix_seed(seed, 2));
    for (auto k : rng.sample_without_replacement(rest.size(), static_cast<std::size_t>(want)))
      plan.queries.push_back(rest[k]);
  }
  Rng rng(mix_seed(seed, 3));
  for (auto p : rng.permutation(static_cast<std::size_t>(want))) plan.truth.mapping.push_back(static_cast<Index>(p));
  return plan;
}

struct Split {
  EmbeddingSet Zb, Hb, Zq, Hq;
  PermutationMap truth;
};

inline Split materialize(const EmbeddingSet& left, const EmbeddingSet& right, const SplitPlan& plan) {
  require(left.count() == right.count(), ErrorKind::validation, "corpus sides must be aligned (equal counts)");
  Split s;
  s.Zb = select_columns(left, plan.anchors);
  s.Hb = select_columns(right, plan.anchors);
  s.Zq = select_columns(left, plan.queries);
  std::vector<Index> right_cols(plan.queries.size());
  for (std::size_t a = 0; a < plan.queries.size(); ++a)
    right_cols[static_cast<std::size_t>(plan.truth.mapping[a])] = plan.queries[a];
  s.Hq = select_columns(right, right_cols);
  s.truth = plan.truth;
  return s;
}

inline Split stretch_split(const Split& s) {
  Split out = s;
  const auto tl = fit_stretch(s.Zb.count() ? s.Zb : s.Zq, s.Zq);
  const auto tr = fit_stretch(s.Hb.count() ? s.Hb : s.Hq, s.Hq);
  if (s.Zb.count()) {
    out.Zb = apply_stretch(tl, s.Zb);
    out.Hb = apply_stretch(tr, s.Hb);
  }
  out.Zq = apply_stretch(tl, s.Zq);
  out.Hq = apply_stretch(tr, s.Hq);
  return out;
}

// Cosine-similarity matrix of the columns of X.
inline Matrix correlation_matrix(const Matrix& X) {
  Vector inv = X.colwise().norm().transpose();
  for (Index i = 0; i < inv.size(); ++i) {
    require(inv[i] > 0, ErrorKind::degenerate_vector, "correlation matrix: zero column");
    inv[i] = 1.0 / inv[i];
  }
  Matrix G = X.transpose() * X;
  G = inv.asDiagonal() * G * inv.asDiagonal();
  G.triangularView<Eigen::StrictlyLower>() = G.transpose();
  return G;
}

struct RunOutcome {
  PermutationMap found;
  PermutationMap truth;
  double matching_accuracy = 0;
  std::optional<double> top1, top5;
  double solver_ms = 0;
  std::optional<QapResult> qap;
};

// Query-by-query score table for the score-based methods (everything but qap).
inline ScoreMatrix query_scores(const Split& s, const PipelineConfig& cfg) {
  const Index m = s.Zb.count();
  switch (cfg.method) {
    case Method::local_cka: {
      require(m >= 2, ErrorKind::validation, "local CKA needs at least 2 anchors");
      if (cfg.use_cka) return score_matrix(LocalCkaCache(s.Zb, s.Hb, cfg.kernel), s.Zq, s.Hq);
      const LocalCkaCache cache(l2_normalize(s.Zb), l2_normalize(s.Hb), KernelSpec::linear());
      return trace_score_matrix(cache, l2_normalize(s.Zq), l2_normalize(s.Hq));
    }
    case Method::relative:
      require(m >= 1, ErrorKind::validation, "relative representations need anchors");
      return relative_scores(s.Zb, s.Hb, s.Zq, s.Hq);
    case Method::linear:
      require(m >= 2, ErrorKind::validation, "the linear map baseline needs at least 2 anchors");
      return linear_map_scores(fit_linear_map(s.Zb, s.Hb, cfg.ridge), s.Zq, s.Hq);
    case Method::qap:
      break;
  }
  fail(ErrorKind::unsupported_spec, "qap produces a matching, not a score table");
}

// Runs one method on an already split (and optionally stretched) instance.
inline RunOutcome run_method(const Split& s, const PipelineConfig& cfg) {
  RunOutcome out;
  out.truth = s.truth;
  const Index m = s.Zb.count();
  const auto start = std::chrono::steady_clock::now();
  std::optional<ScoreMatrix> scores;
  if (cfg.method == Method::qap) {
    const EmbeddingSet Z = m ? concat_columns(s.Zb, s.Zq) : s.Zq;
    const EmbeddingSet H = m ? concat_columns(s.Hb, s.Hq) : s.Hq;
    if (cfg.use_cka) {
      out.qap = qap_match(Z, H, m, cfg.kernel, cfg.qap);
    } else {
      out.qap = seeded_faq(correlation_matrix(Z.data), correlation_matrix(H.data), m, cfg.qap);
    }
    out.found = out.qap->permutation;
  } else {
    scores = query_scores(s, cfg);
  }
  if (scores) out.found = match_by_scores(*scores);
  out.solver_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  out.matching_accuracy = matching_accuracy(out.found, out.truth);
  if (scores) {
    const Index n = scores->n_right();
    const auto ranked = retrieve_topk(*scores, std::min<Index>(5, n));
    out.top1 = topk_accuracy(ranked, out.truth, 1);
    if (n >= 5) out.top5 = topk_accuracy(ranked, out.truth, 5);
  }
  return out;
}

inline RunOutcome run_pipeline(const EmbeddingSet& left, const EmbeddingSet& right, const PipelineConfig& cfg) {
  const auto plan = plan_split(left, cfg.m, cfg.n, cfg.anchors, cfg.seed);
  const Split split = materialize(left, right, plan);
  return run_method(cfg.stretch ? stretch_split(split) : split, cfg);
}

inline void add_outcome_metrics(std::map<std::string, double>& metrics, const RunOutcome& r,
                                const std::string& suffix = "") {
  metrics["matching_accuracy" + suffix] = r.matching_accuracy;
  if (r.top1) metrics["top1" + suffix] = *r.top1;
  if (r.top5) metrics["top5" + suffix] = *r.top5;
  if (r.qap) {
    metrics["cka_achieved" + suffix] = r.qap->cka_achieved;
    metrics["objective_trace" + suffix] = r.qap->objective_trace;
    metrics["iterations" + suffix] = r.qap->iterations;
    metrics["converged" + suffix] = r.qap->converged ? 1.0 : 0.0;
  }
}

/// Single matching/retrieval benchmark run.
inline EvalReport benchmark(const EmbeddingSet& left, const EmbeddingSet& right, const PipelineConfig& cfg) {
  EvalReport rep{"match", std::string(to_string(cfg.method)), to_json(cfg), {}, {}};
  const auto r = run_pipeline(left, right, cfg);
  add_outcome_metrics(rep.metrics, r);
  if (r.qap)
    for (std::size_t k = 0; k < r.qap->objective_history.size(); ++k)
      rep.metrics["objective@iter" + std::to_string(k)] = r.qap->objective_history[k];
  rep.wall_time_ms = static_cast<std::int64_t>(std::llround(r.solver_ms));
  return rep;
}

inline std::vector<std::uint64_t> seed_list(std::uint64_t base, int count) {
  std::vector<std::uint64_t> seeds;
  for (int s = 0; s < count; ++s) seeds.push_back(base + static_cast<std::uint64_t>(s));
  return seeds;
}

/// Mean CKA between a progressively shuffled left side and the fixed right side.
inline EvalReport shuffle_curve(const EmbeddingSet& left, const EmbeddingSet& right, const std::vector<double>& fractions,
                                const KernelSpec& spec, const std::vector<std::uint64_t>& seeds) {
  require(left.count() == right.count(), ErrorKind::validation, "shuffle curve needs aligned sets");
  require(!seeds.empty() && !fractions.empty(), ErrorKind::validation, "shuffle curve needs fractions and seeds");
  EvalReport rep{"shuffle-curve", "cka", {{"kernel", to_json(spec)}, {"fractions", fractions}, {"seeds", seeds}}, {}, {}};
  const auto start = std::chrono::steady_clock::now();
  const KernelMatrix KR = gram(right, spec);
  for (double f : fractions) {
    double sum = 0;
    for (auto seed : seeds) {
      const auto shuffled = shuffle_fraction(left, f, seed).first;
      const double value = cka(gram(shuffled, spec), KR);
      rep.metrics["cka@" + format_param(f) + "/seed" + std::to_string(seed)] = value;
      sum += value;
    }
    rep.metrics["cka@" + format_param(f)] = sum / static_cast<double>(seeds.size());
  }
  rep.wall_time_ms = std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - start).count();
  return rep;
}

// Population std over every entry of the set.
inline double global_std(const Matrix& X) {
  const double mean = X.mean();
  return std::sqrt((X.array() - mean).square().mean());
}

/// Matching accuracy as Gaussian noise (sigma times each side's global std) is
/// added to both sides. Per seed, the split and the noise direction are fixed
/// across sigma levels so rows differ only in the noise magnitude.
inline EvalReport noise_sweep(const EmbeddingSet& left, const EmbeddingSet& right, const PipelineConfig& cfg,
                              const std::vector<double>& sigmas, const std::vector<std::uint64_t>& seeds) {
  require(!seeds.empty() && !sigmas.empty(), ErrorKind::validation, "noise sweep needs sigmas and seeds");
  EvalReport rep{"noise-sweep", std::string(to_string(cfg.method)), to_json(cfg), {}, {}};
  rep.config["sigmas"] = sigmas;
  rep.config["seeds"] = seeds;
  rep.config["noise_scaling"] = "global std over all entries, per side";
  double solver_ms = 0;
  const double std_left = global_std(left.data);
  const double std_right = global_std(right.data);
  std::vector<double> sums(sigmas.size(), 0.0);
  for (auto seed : seeds) {
    const auto plan = plan_split(left, cfg.m, cfg.n, cfg.anchors, seed);
    Rng rng(mix_seed(seed, 7));
    Matrix eps_left(left.dim(), left.count()), eps_right(right.dim(), right.count());
    for (Index k = 0; k < eps_left.size(); ++k) eps_left.data()[k] = rng.normal();
    for (Index k = 0; k < eps_right.size(); ++k) eps_right.data()[k] = rng.normal();
    for (std::size_t t = 0; t < sigmas.size(); ++t) {
      EmbeddingSet noisy_left = left, noisy_right = right;
      noisy_left.data += sigmas[t] * std_left * eps_left;
      noisy_right.data += sigmas[t] * std_right * eps_right;
      const Split split = materialize(noisy_left, noisy_right, plan);
      PipelineConfig run_cfg = cfg;
      run_cfg.seed = seed;
      const auto r = run_method(cfg.stretch ? stretch_split(split) : split, run_cfg);
      solver_ms += r.solver_ms;
      rep.metrics["accuracy@sigma=" + format_param(sigmas[t]) + "/seed" + std::to_string(seed)] = r.matching_accuracy;
      sums[t] += r.matching_accuracy;
    }
  }
  const double ref = sums[0] / static_cast<double>(seeds.size());
  for (std::size_t t = 0; t < sigmas.size(); ++t) {
    const double mean = sums[t] / static_cast<double>(seeds.size());
    const std::string key = "@sigma=" + format_param(sigmas[t]);
    rep.metrics["accuracy" + key] = mean;
    rep.metrics["delta" + key] = mean - ref;
    rep.metrics["rel_drop_pct" + key] = ref > 0 ? 100.0 * (ref - mean) / ref : 0.0;
  }
  rep.wall_time_ms = static_cast<std::int64_t>(std::llround(solver_ms));
  return rep;
}

enum class SweepAxis { base, query };

/// Accuracy as the anchor count (base) or the query count varies with the other held fixed.
inline EvalReport size_sweep(const EmbeddingSet& left, const EmbeddingSet& right, const PipelineConfig& cfg,
                             SweepAxis axis, const std::vector<Index>& values, Index fixed_other,
                             const std::vector<std::uint64_t>& seeds) {
  require(!seeds.empty() && !values.empty(), ErrorKind::validation, "size sweep needs values and seeds");
  EvalReport rep{"size-sweep", std::string(to_string(cfg.method)), to_json(cfg), {}, {}};
  rep.config["vary"] = axis == SweepAxis::base ? "base" : "query";
  rep.config["values"] = values;
  rep.config["fixed_other"] = fixed_other;
  rep.config["seeds"] = seeds;
  double solver_ms = 0;
  std::vector<double> xs, means;
  for (Index v : values) {
    double sum = 0;
    for (auto seed : seeds) {
      PipelineConfig run_cfg = cfg;
      run_cfg.seed = seed;
      run_cfg.m = axis == SweepAxis::base ? v : fixed_other;
      run_cfg.n = axis == SweepAxis::base ? fixed_other : v;
      const auto r = run_pipeline(left, right, run_cfg);
      solver_ms += r.solver_ms;
      rep.metrics["accuracy@" + std::to_string(v) + "/seed" + std::to_string(seed)] = r.matching_accuracy;
      sum += r.matching_accuracy;
    }
    const double mean = sum / static_cast<double>(seeds.size());
    rep.metrics["accuracy@" + std::to_string(v)] = mean;
    xs.push_back(static_cast<double>(v));
    means.push_back(mean);
  }
  if (values.size() >= 2) rep.metrics["spearman"] = spearman(xs, means);
  rep.wall_time_ms = static_cast<std::int64_t>(std::llround(solver_ms));
  return rep;
}

inline std::string ablation_key(bool clustering, bool stretching, bool use_cka) {
  return std::string("[clustering=") + (clustering ? "on" : "off") + ",stretching=" + (stretching ? "on" : "off") +
         ",cka=" + (use_cka ? "on" : "off") + "]";
}

/// QAP matching, local-CKA matching and local-CKA retrieval@5 for each
/// clustering / stretching / CKA on-off combination.
inline EvalReport ablation_grid(const EmbeddingSet& left, const EmbeddingSet& right, const PipelineConfig& cfg,
                                const std::vector<std::uint64_t>& seeds) {
  require(!seeds.empty(), ErrorKind::validation, "ablation needs seeds");
  EvalReport rep{"ablation", "qap+local", to_json(cfg), {}, {}};
  rep.config["seeds"] = seeds;
  double solver_ms = 0;
  for (bool clustering : {true, false}) {
    for (bool stretching : {true, false}) {
      for (bool use_cka : {true, false}) {
        const std::string key = ablation_key(clustering, stretching, use_cka);
        double qap_sum = 0, local_sum = 0, r5_sum = 0;
        for (auto seed : seeds) {
          PipelineConfig c = cfg;
          c.seed = seed;
          c.anchors = clustering ? AnchorMethod::kmeans : AnchorMethod::uniform;
          c.stretch = stretching;
          c.use_cka = use_cka;
          c.method = Method::qap;
          const auto q = run_pipeline(left, right, c);
          c.method = Method::local_cka;
          const auto l = run_pipeline(left, right, c);
          solver_ms += q.solver_ms + l.solver_ms;
          qap_sum += q.matching_accuracy;
          local_sum += l.matching_accuracy;
          r5_sum += l.top5.value_or(l.top1.value_or(0.0));
        }
        const double n = static_cast<double>(seeds.size());
        rep.metrics["qap_accuracy" + key] = qap_sum / n;
        rep.metrics["local_accuracy" + key] = local_sum / n;
        rep.metrics["local_top5" + key] = r5_sum / n;
      }
    }
  }
  rep.wall_time_ms = static_cast<std::int64_t>(std::llround(solver_ms));
  return rep;
}

// Class label of an item id: the prefix before the first '_' ("class3_item7" -> "class3").
inline std::string class_label(const std::string& id) { return id.substr(0, id.find('_')); }

/// Zero-shot classification: each class prototype is the mean of its text
/// columns; images are scored against every prototype by local CKA.
inline EvalReport classify(const EmbeddingSet& images, const EmbeddingSet& class_texts, const EmbeddingSet& anchors_left,
                           const EmbeddingSet& anchors_right, const KernelSpec& spec) {
  std::map<std::string, std::vector<Index>> groups;
  for (Index j = 0; j < class_texts.count(); ++j) groups[class_label(class_texts.ids[static_cast<std::size_t>(j)])].push_back(j);
  require(!groups.empty(), ErrorKind::validation, "classify: no class texts");
  EmbeddingSet protos;
  protos.modality_tag = class_texts.modality_tag;
  protos.data.resize(class_texts.dim(), static_cast<Index>(groups.size()));
  std::map<std::string, Index> class_index;
  for (const auto& [label, cols] : groups) {
    const Index c = static_cast<Index>(protos.ids.size());
    protos.data.col(c).setZero();
    for (auto j : cols) protos.data.col(c) += class_texts.data.col(j);
    protos.data.col(c) /= static_cast<double>(cols.size());
    protos.ids.push_back(label);
    class_index[label] = c;
  }
  PermutationMap truth;
  for (const auto& id : images.ids) {
    const auto it = class_index.find(class_label(id));
    require(it != class_index.end(), ErrorKind::validation, "classify: class of '" + id + "' has no text columns");
    truth.mapping.push_back(it->second);
  }
  EvalReport rep{"classify", "local", {{"kernel", to_json(spec)}, {"classes", protos.ids}, {"m", anchors_left.count()}}, {}, {}};
  const auto start = std::chrono::steady_clock::now();
  const LocalCkaCache cache(anchors_left, anchors_right, spec);
  const ScoreMatrix scores = score_matrix(cache, images, protos);
  const Index k = std::min<Index>(5, protos.count());
  const auto ranked = retrieve_topk(scores, k);
  rep.wall_time_ms = std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - start).count();
  rep.metrics["top1"] = topk_accuracy(ranked, truth, 1);
  rep.metrics["top5"] = topk_accuracy(ranked, truth, k);
  rep.metrics["n_classes"] = static_cast<double>(protos.count());
  return rep;
}

}  // namespace ckalign
