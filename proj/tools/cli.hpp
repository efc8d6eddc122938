#pragma once

// Command-line front end. run_cli() is the whole program minus process setup,
// so tests can drive it in-process with string streams.

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "ckalign/ckalign.hpp"

namespace ckalign::cli {

using nlohmann::json;

struct Flags {
  // global
  std::uint64_t seed = 0;
  std::string kernel = "linear";
  std::string rbf_bandwidth = "median";
  bool stretch = true;
  std::string anchors_method = "kmeans";
  std::string out;
  unsigned threads = 0;
  bool no_timestamp = false;
  bool pretty = false;
  int max_iters = QapConfig{}.max_iters;
  double tol = QapConfig{}.tol;
  std::string qap_init = "automatic";
  int restarts = 0;
  double ridge = kDefaultRidge;

  // shared by several subcommands
  std::string method;
  std::string left, right;
  std::string manifest;
  Index m = 0;
  std::optional<Index> n;
  int seeds = 10;

  Index k = 5;
  std::string scores_out;
  std::string anchors_left, anchors_right, anchor_manifest;
  std::string spec_path, out_prefix;
  std::vector<double> fractions{0.0, 0.2, 0.4, 0.6, 0.8, 1.0};
  std::vector<double> sigmas{0.0, 0.1, 0.2, 0.3, 0.4, 0.5};
  std::string vary = "base";
  std::vector<Index> values;
  Index fixed_other = 0;
  bool use_cka = true;
};

inline KernelSpec kernel_from(const Flags& f) {
  if (f.kernel == "linear") return KernelSpec::linear();
  if (f.rbf_bandwidth == "median") return KernelSpec::rbf_median();
  double sigma = 0;
  try {
    std::size_t used = 0;
    sigma = std::stod(f.rbf_bandwidth, &used);
    require(used == f.rbf_bandwidth.size(), ErrorKind::validation, "");
  } catch (const std::exception&) {
    fail(ErrorKind::validation, "--rbf-bandwidth must be 'median' or a positive number, got '" + f.rbf_bandwidth + "'");
  }
  return KernelSpec::rbf_fixed(sigma);
}

inline QapInit qap_init_from(const std::string& s) {
  for (auto init : {QapInit::automatic, QapInit::barycenter, QapInit::identity, QapInit::random, QapInit::spectral})
    if (to_string(init) == s) return init;
  fail(ErrorKind::validation, "unknown --qap-init '" + s + "'");
}

inline PipelineConfig pipeline_from(const Flags& f) {
  PipelineConfig c;
  c.method = method_from_string(f.method.empty() ? "qap" : f.method);
  c.kernel = kernel_from(f);
  c.m = f.m;
  c.n = f.n;
  c.anchors = f.anchors_method == "uniform" ? AnchorMethod::uniform : AnchorMethod::kmeans;
  c.stretch = f.stretch;
  c.use_cka = f.use_cka;
  c.qap.max_iters = f.max_iters;
  c.qap.tol = f.tol;
  c.qap.init = qap_init_from(f.qap_init);
  c.qap.init_seed = f.seed;
  c.qap.restarts = f.restarts;
  c.ridge = f.ridge;
  c.seed = f.seed;
  validate(c.qap);
  return c;
}

// Everything that influences the numbers in a report. --threads, --out and
// --pretty are deliberately absent: they never change the results.
inline json run_block(const std::string& command, const Flags& f) {
  json j = {{"command", command},
            {"seed", f.seed},
            {"kernel", f.kernel},
            {"rbf_bandwidth", f.rbf_bandwidth},
            {"stretch", f.stretch},
            {"anchors_method", f.anchors_method},
            {"m", f.m},
            {"n", f.n ? json(*f.n) : json("all")},
            {"qap", {{"max_iters", f.max_iters}, {"tol", f.tol}, {"init", f.qap_init}, {"restarts", f.restarts}}},
            {"ridge", f.ridge},
            {"use_cka", f.use_cka}};
  json inputs = json::object();
  if (!f.left.empty()) inputs["left"] = f.left;
  if (!f.right.empty()) inputs["right"] = f.right;
  if (!f.manifest.empty()) inputs["manifest"] = f.manifest;
  if (!f.anchors_left.empty()) inputs["anchors_left"] = f.anchors_left;
  if (!f.anchors_right.empty()) inputs["anchors_right"] = f.anchors_right;
  if (!f.anchor_manifest.empty()) inputs["anchor_manifest"] = f.anchor_manifest;
  if (!f.spec_path.empty()) inputs["spec"] = f.spec_path;
  j["inputs"] = inputs;
  return j;
}

inline std::pair<EmbeddingSet, EmbeddingSet> load_pair(const std::string& left, const std::string& right,
                                                       const std::string& manifest) {
  const EmbeddingSet l = load_embeddings(left);
  const EmbeddingSet r = load_embeddings(right);
  if (manifest.empty()) {
    require(l.count() == r.count(), ErrorKind::validation,
            "'" + left + "' and '" + right + "' have different counts; pass --manifest to pair them");
    return {l, r};
  }
  return align_by_manifest(l, r, load_manifest(manifest));
}

inline std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

inline std::string render_pretty(const json& doc) {
  std::ostringstream os;
  os << "task    " << doc.value("task", "") << "\n";
  os << "method  " << doc.value("method", "") << "\n";
  std::size_t width = 6;
  for (const auto& [name, _] : doc["metrics"].items()) width = std::max(width, name.size());
  os << std::left << std::setw(static_cast<int>(width)) << "metric" << "  value\n";
  os << std::string(width, '-') << "  " << std::string(12, '-') << "\n";
  for (const auto& [name, value] : doc["metrics"].items())
    os << std::left << std::setw(static_cast<int>(width)) << name << "  " << std::setprecision(6) << value.get<double>()
       << "\n";
  if (doc.contains("wall_time_ms")) os << "wall time " << doc["wall_time_ms"].get<std::int64_t>() << " ms\n";
  return os.str();
}

inline void emit(json doc, const std::string& command, const Flags& f, std::ostream& out) {
  doc["run"] = run_block(command, f);
  if (f.no_timestamp) {
    doc.erase("wall_time_ms");
  } else {
    doc["timestamp"] = utc_timestamp();
  }
  const std::string text = f.pretty ? render_pretty(doc) : doc.dump(2) + "\n";
  if (f.out.empty()) {
    out << text;
    return;
  }
  std::ofstream os(f.out, std::ios::trunc);
  require(static_cast<bool>(os), ErrorKind::storage, "cannot open '" + f.out + "' for writing");
  os << text;
  require(static_cast<bool>(os), ErrorKind::storage, "write failed for '" + f.out + "'");
}

inline json cmd_cka(const Flags& f) {
  const auto [l, r] = load_pair(f.left, f.right, f.manifest);
  const KernelSpec spec = kernel_from(f);
  const KernelMatrix K = gram(l, spec), L = gram(r, spec);
  EvalReport rep{"cka", "cka", {{"kernel", to_json(spec)}}, {}, {}};
  rep.metrics["cka"] = cka(K, L);
  rep.metrics["hsic"] = hsic(K, L);
  rep.metrics["n"] = static_cast<double>(l.count());
  return to_json(rep);
}

inline json cmd_match(const Flags& f) {
  const auto [l, r] = load_pair(f.left, f.right, f.manifest);
  const PipelineConfig cfg = pipeline_from(f);
  const auto plan = plan_split(l, cfg.m, cfg.n, cfg.anchors, cfg.seed);
  const Split split = materialize(l, r, plan);
  const auto outcome = run_method(cfg.stretch ? stretch_split(split) : split, cfg);
  EvalReport rep{"match", std::string(to_string(cfg.method)), to_json(cfg), {}, {}};
  add_outcome_metrics(rep.metrics, outcome);
  if (outcome.qap)
    for (std::size_t k = 0; k < outcome.qap->objective_history.size(); ++k)
      rep.metrics["objective@iter" + std::to_string(k)] = outcome.qap->objective_history[k];
  rep.wall_time_ms = static_cast<std::int64_t>(std::llround(outcome.solver_ms));
  json doc = to_json(rep);
  json pairs = json::array();
  for (std::size_t a = 0; a < outcome.found.mapping.size(); ++a)
    pairs.push_back({split.Zq.ids[a], split.Hq.ids[static_cast<std::size_t>(outcome.found.mapping[a])]});
  doc["matching"] = pairs;
  doc["anchors"] = split.Zb.ids;
  return doc;
}

inline json cmd_retrieve(const Flags& f) {
  const auto [l, r] = load_pair(f.left, f.right, f.manifest);
  const PipelineConfig cfg = pipeline_from(f);
  require(cfg.method != Method::qap, ErrorKind::validation, "retrieve supports local, relative and linear");
  const auto plan = plan_split(l, cfg.m, cfg.n, cfg.anchors, cfg.seed);
  const Split raw = materialize(l, r, plan);
  const Split split = cfg.stretch ? stretch_split(raw) : raw;
  const auto start = std::chrono::steady_clock::now();
  const ScoreMatrix scores = query_scores(split, cfg);
  require(f.k >= 1 && f.k <= scores.n_right(), ErrorKind::validation,
          "--k must be in [1, " + std::to_string(scores.n_right()) + "]");
  const auto ranked = retrieve_topk(scores, f.k);
  const auto elapsed = std::chrono::steady_clock::now() - start;
  EvalReport rep{"retrieve", std::string(to_string(cfg.method)), to_json(cfg), {}, {}};
  rep.config["k"] = f.k;
  rep.metrics["top1"] = topk_accuracy(ranked, split.truth, 1);
  rep.metrics["top" + std::to_string(f.k)] = topk_accuracy(ranked, split.truth, f.k);
  rep.wall_time_ms = std::chrono::duration_cast<std::chrono::milliseconds>(elapsed).count();
  if (!f.scores_out.empty()) save_score_matrix(scores, f.scores_out);
  json doc = to_json(rep);
  json top = json::object();
  for (std::size_t i = 0; i < ranked.size(); ++i) {
    json row = json::array();
    for (auto j : ranked[i]) row.push_back(split.Hq.ids[static_cast<std::size_t>(j)]);
    top[split.Zq.ids[i]] = row;
  }
  doc["ranked"] = top;
  return doc;
}

inline json cmd_classify(const Flags& f) {
  const EmbeddingSet images = load_embeddings(f.left);
  const EmbeddingSet texts = load_embeddings(f.right);
  require(!f.anchors_left.empty() && !f.anchors_right.empty(), ErrorKind::validation,
          "classify needs --anchors-left and --anchors-right");
  auto [al, ar] = load_pair(f.anchors_left, f.anchors_right, f.anchor_manifest);
  if (f.m > 0) {
    require(f.m <= al.count(), ErrorKind::validation, "--m exceeds the number of anchor pairs");
    const auto pick = select_anchors(al, f.m, pipeline_from(f).anchors, mix_seed(f.seed, 1)).indices;
    al = select_columns(al, pick);
    ar = select_columns(ar, pick);
  }
  return to_json(classify(images, texts, al, ar, kernel_from(f)));
}

inline json cmd_synth(const Flags& f) {
  std::ifstream is(f.spec_path);
  require(static_cast<bool>(is), ErrorKind::storage, "cannot open '" + f.spec_path + "'");
  json j;
  try {
    j = json::parse(is);
  } catch (const json::exception& e) {
    fail(ErrorKind::spec, "'" + f.spec_path + "': " + e.what());
  }
  const SynthSpec spec = synth_spec_from_json(j);
  const SynthCorpus corpus = generate(spec);
  std::vector<std::string> written{f.out_prefix + "_left.emb", f.out_prefix + "_right.emb",
                                   f.out_prefix + "_manifest.json"};
  save_embeddings(corpus.left, written[0]);
  save_embeddings(corpus.right, written[1]);
  save_manifest(corpus.manifest, written[2]);
  if (spec.n_classes) {
    written.push_back(f.out_prefix + "_class_texts.emb");
    save_embeddings(generate_class_texts(spec), written.back());
  }
  EvalReport rep{"synth", "synth", to_json(spec), {}, {}};
  rep.metrics["count"] = static_cast<double>(spec.count);
  rep.metrics["dim_left"] = static_cast<double>(spec.dim_left);
  rep.metrics["dim_right"] = static_cast<double>(spec.dim_right);
  json doc = to_json(rep);
  doc["outputs"] = written;
  return doc;
}

inline std::vector<std::uint64_t> seeds_from(const Flags& f) {
  require(f.seeds >= 1, ErrorKind::validation, "--seeds must be >= 1");
  return seed_list(f.seed, f.seeds);
}

inline json cmd_eval(const std::string& which, const Flags& f) {
  const auto [l, r] = load_pair(f.left, f.right, f.manifest);
  if (which == "shuffle-curve") return to_json(shuffle_curve(l, r, f.fractions, kernel_from(f), seeds_from(f)));
  const PipelineConfig cfg = pipeline_from(f);
  if (which == "noise-sweep") return to_json(noise_sweep(l, r, cfg, f.sigmas, seeds_from(f)));
  if (which == "size-sweep") {
    require(f.vary == "base" || f.vary == "query", ErrorKind::validation, "--vary must be base or query");
    require(!f.values.empty(), ErrorKind::validation, "size-sweep needs --values");
    const auto axis = f.vary == "base" ? SweepAxis::base : SweepAxis::query;
    return to_json(size_sweep(l, r, cfg, axis, f.values, f.fixed_other, seeds_from(f)));
  }
  return to_json(ablation_grid(l, r, cfg, seeds_from(f)));
}

inline int exit_code(const Error& e) { return e.kind() == ErrorKind::numerical ? 1 : 2; }

inline int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  Flags f;
  CLI::App app{"Cross-modal embedding alignment with centered kernel alignment", "ckalign"};
  app.fallthrough();
  app.require_subcommand(1);

  app.add_option("--seed", f.seed, "Base seed for every random choice")->capture_default_str();
  app.add_option("--kernel", f.kernel, "Kernel")->check(CLI::IsMember({"linear", "rbf"}))->capture_default_str();
  app.add_option("--rbf-bandwidth", f.rbf_bandwidth, "RBF bandwidth: median or a positive number")
      ->capture_default_str();
  app.add_flag("--stretch,!--no-stretch", f.stretch, "Per-dimension std stretching (default on)");
  app.add_option("--anchors-method", f.anchors_method, "Anchor selection")
      ->check(CLI::IsMember({"kmeans", "uniform"}))
      ->capture_default_str();
  app.add_option("--out", f.out, "Write the report here instead of stdout");
  app.add_option("--threads", f.threads, "Cap on worker threads (0 = all cores)");
  app.add_flag("--no-timestamp", f.no_timestamp, "Omit timestamp and wall time from the report");
  app.add_flag("--pretty", f.pretty, "Human-readable table instead of JSON");
  app.add_option("--max-iters", f.max_iters, "Frank-Wolfe iteration cap")->capture_default_str();
  app.add_option("--tol", f.tol, "Frank-Wolfe relative tolerance")->capture_default_str();
  app.add_option("--qap-init", f.qap_init, "automatic|barycenter|identity|random|spectral")->capture_default_str();
  app.add_option("--restarts", f.restarts, "Extra randomly started FAQ runs")->capture_default_str();
  app.add_option("--ridge", f.ridge, "Ridge for the linear map baseline")->capture_default_str();
  app.add_option("--m", f.m, "Number of anchor pairs")->capture_default_str();
  app.add_option("--manifest", f.manifest, "Pairing manifest (JSON)");

  auto add_pair_args = [&](CLI::App* sub) {
    sub->add_option("left", f.left, "Left (image-side) EMB1 file")->required();
    sub->add_option("right", f.right, "Right (text-side) EMB1 file")->required();
  };
  auto add_n = [&](CLI::App* sub) {
    sub->add_option_function<Index>("--n", [&](const Index& v) { f.n = v; }, "Number of query pairs (default: all)");
  };
  auto add_method = [&](CLI::App* sub, std::vector<std::string> allowed) {
    sub->add_option("method", f.method, "Method")->required()->check(CLI::IsMember(allowed));
  };

  auto* cka_cmd = app.add_subcommand("cka", "CKA between two aligned embedding sets");
  add_pair_args(cka_cmd);

  auto* match_cmd = app.add_subcommand("match", "Blind matching of the query pairs");
  add_method(match_cmd, {"qap", "local", "relative", "linear"});
  add_pair_args(match_cmd);
  add_n(match_cmd);
  match_cmd->add_flag("--cka,!--no-cka", f.use_cka, "Use CKA kernels (off: cosine correlation)");

  auto* retrieve_cmd = app.add_subcommand("retrieve", "Top-k retrieval of the query pairs");
  add_method(retrieve_cmd, {"local", "relative", "linear"});
  add_pair_args(retrieve_cmd);
  add_n(retrieve_cmd);
  retrieve_cmd->add_option("--k", f.k, "Retrieval depth")->capture_default_str();
  retrieve_cmd->add_option("--scores-out", f.scores_out, "Also write the score matrix (EMB1 + ids sidecar)");

  auto* classify_cmd = app.add_subcommand("classify", "Zero-shot classification with local CKA");
  classify_cmd->add_option("images", f.left, "Image EMB1 file (ids carry class prefixes)")->required();
  classify_cmd->add_option("class_texts", f.right, "Class text EMB1 file")->required();
  classify_cmd->add_option("--anchors-left", f.anchors_left, "Anchor image embeddings")->required();
  classify_cmd->add_option("--anchors-right", f.anchors_right, "Anchor text embeddings")->required();
  classify_cmd->add_option("--anchor-manifest", f.anchor_manifest, "Pairing of the anchor files");

  auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic aligned corpus");
  synth_cmd->add_option("--spec", f.spec_path, "Synth spec (JSON)")->required();
  synth_cmd->add_option("--out-prefix", f.out_prefix, "Output prefix")->required();

  auto* eval_cmd = app.add_subcommand("eval", "Experiment sweeps");
  eval_cmd->require_subcommand(1);
  auto* shuffle_cmd = eval_cmd->add_subcommand("shuffle-curve", "Mean CKA against the shuffled fraction");
  auto* noise_cmd = eval_cmd->add_subcommand("noise-sweep", "Matching accuracy against added noise");
  auto* size_cmd = eval_cmd->add_subcommand("size-sweep", "Matching accuracy against base or query size");
  auto* ablation_cmd = eval_cmd->add_subcommand("ablation", "Clustering / stretching / CKA on-off grid");
  for (auto* sub : {shuffle_cmd, noise_cmd, size_cmd, ablation_cmd}) {
    add_pair_args(sub);
    sub->add_option("--seeds", f.seeds, "Number of seeds, counting up from --seed")->capture_default_str();
  }
  shuffle_cmd->add_option("--fractions", f.fractions, "Shuffled fractions")->delimiter(',')->capture_default_str();
  for (auto* sub : {noise_cmd, size_cmd, ablation_cmd}) add_n(sub);
  for (auto* sub : {noise_cmd, size_cmd}) {
    sub->add_option("--method", f.method, "Method")->check(CLI::IsMember({"qap", "local", "relative", "linear"}));
    sub->add_flag("--cka,!--no-cka", f.use_cka, "Use CKA kernels (off: cosine correlation)");
  }
  noise_cmd->add_option("--sigmas", f.sigmas, "Noise levels")->delimiter(',')->capture_default_str();
  size_cmd->add_option("--vary", f.vary, "base or query")->check(CLI::IsMember({"base", "query"}));
  size_cmd->add_option("--values", f.values, "Sizes to sweep")->delimiter(',')->required();
  size_cmd->add_option("--fixed-other", f.fixed_other, "The size held fixed")->required();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return 2;
  }

  try {
    set_max_threads(f.threads ? f.threads : std::max(1u, std::thread::hardware_concurrency()));
    json doc;
    std::string command;
    if (*cka_cmd) {
      command = "cka";
      doc = cmd_cka(f);
    } else if (*match_cmd) {
      command = "match " + f.method;
      doc = cmd_match(f);
    } else if (*retrieve_cmd) {
      command = "retrieve " + f.method;
      doc = cmd_retrieve(f);
    } else if (*classify_cmd) {
      command = "classify";
      doc = cmd_classify(f);
    } else if (*synth_cmd) {
      command = "synth";
      doc = cmd_synth(f);
    } else {
      for (auto* sub : eval_cmd->get_subcommands()) command = "eval " + sub->get_name();
      if (!*shuffle_cmd && f.method.empty()) f.method = "qap";
      doc = cmd_eval(command.substr(5), f);
    }
    emit(std::move(doc), command, f, out);
    return 0;
  } catch (const Error& e) {
    err << e.what() << "\n";
    return exit_code(e);
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace ckalign::cli
