// tools/dmenc_main.cpp

// Copyright 2026  dmenc authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

// Single pipeline entry point. Every subcommand resolves a layered config
// (defaults < --config file < --set overrides), snapshots it into a run
// directory named by (subcommand, timestamp, config hash), and exits 0 on
// success, 1 on runtime failure, 2 on usage or config errors.

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dmenc/checkpoint.hpp"
#include "dmenc/config.hpp"
#include "dmenc/kmeans.hpp"
#include "dmenc/maskgen.hpp"
#include "dmenc/pipeline.hpp"
#include "dmenc/probe.hpp"
#include "dmenc/synth.hpp"

namespace fs = std::filesystem;
using namespace dmenc;

namespace {

struct CommonArgs {
  std::string config_path;
  std::vector<std::string> overrides;
  uint64_t seed = 0;
  std::string out_dir;
};

void add_common(CLI::App* sub, CommonArgs* args) {
  sub->add_option("--config", args->config_path, "JSON config file");
  sub->add_option("--set", args->overrides,
                  "override a config key, dotted path: --set stage.total_steps=50");
  sub->add_option("--seed", args->seed, "run seed");
  sub->add_option("--out", args->out_dir, "output root (default $DMENC_OUT_ROOT or ./runs)");
}

RunConfig resolve_config(const CommonArgs& args) {
  RunConfig cfg = RunConfig::from_file(args.config_path);
  for (const std::string& kv : args.overrides) {
    const std::size_t eq = kv.find('=');
    if (eq == std::string::npos)
      throw ConfigError("--set expects key=value, got '" + kv + "'");
    cfg.apply_override(kv.substr(0, eq), kv.substr(eq + 1));
  }
  return cfg;
}

fs::path out_root(const CommonArgs& args) {
  if (!args.out_dir.empty()) return args.out_dir;
  if (const char* env = std::getenv("DMENC_OUT_ROOT")) return env;
  return "runs";
}

fs::path make_run_dir(const CommonArgs& args, const std::string& sub,
                      const RunConfig& cfg) {
  const auto now = std::chrono::system_clock::now();
  const std::time_t tt = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  localtime_r(&tt, &tm);
  char stamp[32];
  std::strftime(stamp, sizeof stamp, "%Y%m%d-%H%M%S", &tm);
  const std::string hash = hex64(cfg.hash()).substr(0, 8);
  fs::path base = out_root(args) / (sub + "-" + stamp + "-" + hash);
  fs::path dir = base;
  for (int n = 1; fs::exists(dir); ++n) dir = base.string() + "-" + std::to_string(n);
  fs::create_directories(dir);
  cfg.snapshot(dir / "resolved_config.json", args.seed);
  return dir;
}

fs::path path_key(const RunConfig& cfg, const std::string& key, bool required) {
  const std::string v = cfg.get<std::string>(key);
  if (required && v.empty())
    throw ConfigError("config key '" + key + "' is required for this subcommand");
  return v;
}

// Maps a subcommand to its stage kind, honoring an explicit stage.kind that
// belongs to the subcommand's family.
std::string pick_kind(const RunConfig& cfg, const std::vector<std::string>& allowed,
                      const std::string& fallback) {
  const std::string k = cfg.get<std::string>("stage.kind");
  for (const auto& a : allowed)
    if (k == a) return k;
  if (k == "s1") return fallback;  // untouched global default
  throw ConfigError("stage.kind '" + k + "' is not valid here");
}

int run_training_subcommand(const CommonArgs& args, const std::string& sub,
                            const std::vector<std::string>& allowed,
                            const std::string& fallback) {
  RunConfig cfg = resolve_config(args);
  const std::string kind = pick_kind(cfg, allowed, fallback);
  cfg.json()["stage"]["kind"] = kind;
  const fs::path run_dir = make_run_dir(args, sub, cfg);

  StageSetup setup;
  setup.kind = kind;
  setup.config = cfg;
  setup.seed = args.seed;
  setup.out_dir = run_dir;
  setup.train_manifest = path_key(cfg, "data.train_manifest", true);
  setup.feature_cache = path_key(cfg, "data.feature_cache", false);
  setup.init_checkpoint = path_key(cfg, "stage.init", false);
  setup.teacher_checkpoint = path_key(cfg, "stage.teacher", false);
  setup.labels_dir = path_key(cfg, "stage.labels", false);
  setup.resume_checkpoint = path_key(cfg, "stage.resume", false);

  StageResult res = run_stage(setup);
  nlohmann::json out;
  out["run_dir"] = run_dir.string();
  out["checkpoint"] = res.checkpoint_dir.string();
  out["checkpoint_id"] = res.meta.checkpoint_id;
  out["stage"] = kind;
  out["steps"] = res.meta.step;
  if (!res.losses.empty()) out["final_loss"] = res.losses.back();
  std::cout << out.dump(2) << "\n";
  return 0;
}

int run_synth(const CommonArgs& args) {
  RunConfig cfg = resolve_config(args);
  const fs::path run_dir = make_run_dir(args, "synth-data", cfg);
  SynthConfig sc;
  sc.n_utts = cfg.get<int>("synth.n_utts");
  sc.seed = args.seed;
  sc.out_dir = run_dir / "data";
  sc.untranscribed_fraction = cfg.get<double>("synth.untranscribed_fraction");
  sc.n_classes = cfg.get<int>("synth.n_classes");
  sc.noise_level = cfg.get<double>("synth.noise_level");
  sc.min_words = cfg.get<int>("synth.min_words");
  sc.max_words = cfg.get<int>("synth.max_words");
  sc.dev_fraction = cfg.get<double>("synth.dev_fraction");
  sc.test_fraction = cfg.get<double>("synth.test_fraction");
  SynthResult res = synth_dataset(sc);
  nlohmann::json out;
  out["run_dir"] = run_dir.string();
  out["manifest"] = res.manifest_path.string();
  out["train_manifest"] = res.train_manifest.string();
  out["dev_manifest"] = res.dev_manifest.string();
  out["test_manifest"] = res.test_manifest.string();
  out["n_utts"] = res.entries.size();
  std::cout << out.dump(2) << "\n";
  return 0;
}

int run_prepare(const CommonArgs& args) {
  RunConfig cfg = resolve_config(args);
  const fs::path run_dir = make_run_dir(args, "prepare", cfg);
  fs::path cache = path_key(cfg, "data.feature_cache", false);
  if (cache.empty()) cache = run_dir / "cache";
  nlohmann::json out;
  out["run_dir"] = run_dir.string();
  out["cache_dir"] = cache.string();
  int64_t total = 0;
  for (const char* key :
       {"data.train_manifest", "data.dev_manifest", "data.test_manifest"}) {
    const fs::path manifest = path_key(cfg, key, false);
    if (manifest.empty()) continue;
    Dataset ds = prepare_dataset(manifest, cache);
    total += static_cast<int64_t>(ds.entries.size());
  }
  DMENC_CHECK(total > 0, "no manifests configured; set data.train_manifest");
  out["cached_utts"] = total;
  std::cout << out.dump(2) << "\n";
  return 0;
}

index_t auto_tap(const RunConfig& cfg, const CommonArgs& args,
                 const fs::path& ckpt_dir, const fs::path& cache) {
  const fs::path report_path = path_key(cfg, "quantizer.sweep_report", false);
  if (!report_path.empty()) {
    std::ifstream is(report_path);
    DMENC_CHECK(is.good(), "cannot open sweep report " << report_path);
    nlohmann::json j = nlohmann::json::parse(is);
    DMENC_CHECK(j.contains("best_layer") && j["best_layer"].contains("asr_ctc"),
                "sweep report has no asr_ctc best layer");
    return j["best_layer"]["asr_ctc"].get<index_t>();
  }
  // No report: run a fresh semantic-task sweep on train/dev.
  Checkpoint ckpt = load_checkpoint(ckpt_dir);
  ModelBundle model = load_model(ckpt);
  Dataset train = prepare_dataset(path_key(cfg, "data.train_manifest", true), cache);
  Dataset dev = prepare_dataset(path_key(cfg, "data.dev_manifest", true), cache);
  ProbeOptions opt;
  opt.steps = cfg.get<int>("probe.steps");
  opt.lr = cfg.get<double>("probe.lr");
  opt.batch_size = cfg.get<int>("probe.batch_size");
  opt.dtw_window = cfg.get<int>("probe.dtw_window");
  opt.seed = args.seed;
  ProbeReport report =
      layer_sweep(model.encoder, ckpt.meta.checkpoint_id, train, dev,
                  {ProbeTaskKind::kAsrCtc}, ContextSpec::full_context(), opt);
  DMENC_CHECK(!report.best_layer.empty(), "tap sweep produced no rows");
  return report.best_layer[0].second;
}

int run_extract(const CommonArgs& args) {
  RunConfig cfg = resolve_config(args);
  const fs::path run_dir = make_run_dir(args, "extract-embeddings", cfg);
  const fs::path ckpt_dir = path_key(cfg, "quantizer.checkpoint", true);
  const fs::path cache = path_key(cfg, "data.feature_cache", false);

  index_t tap = -1;
  const nlohmann::json& tap_node = cfg.at_path("quantizer.tap");
  if (tap_node.is_number_integer()) {
    tap = tap_node.get<index_t>();
  } else if (tap_node.is_string() && tap_node == "auto") {
    tap = auto_tap(cfg, args, ckpt_dir, cache);
  } else {
    throw ConfigError("quantizer.tap must be an integer block index or \"auto\"");
  }

  Dataset data = prepare_dataset(path_key(cfg, "data.train_manifest", true), cache);
  EmbeddingStore store = extract_embeddings(ckpt_dir, tap, data);
  store.save(run_dir / "embeddings");
  nlohmann::json out;
  out["run_dir"] = run_dir.string();
  out["embeddings"] = (run_dir / "embeddings").string();
  out["tap"] = tap;
  out["checkpoint_id"] = store.checkpoint_id;
  out["total_frames"] = store.total_frames();
  std::cout << out.dump(2) << "\n";
  return 0;
}

int run_kmeans(const CommonArgs& args) {
  RunConfig cfg = resolve_config(args);
  const fs::path run_dir = make_run_dir(args, "kmeans", cfg);
  const fs::path emb_dir = path_key(cfg, "quantizer.embeddings", true);
  EmbeddingStore store = EmbeddingStore::load(emb_dir);
  KmeansOptions ko;
  ko.K = cfg.get<index_t>("quantizer.k_km");
  ko.seed = args.seed;
  ko.subsample = cfg.get<double>("quantizer.subsample");
  Centroids c = kmeans_fit(store, ko);
  c.save(run_dir / "centroids");
  PseudoLabelStore labels = assign(store, c);
  labels.checkpoint_id = store.checkpoint_id;
  labels.save(run_dir / "labels");
  nlohmann::json out;
  out["run_dir"] = run_dir.string();
  out["centroids"] = (run_dir / "centroids").string();
  out["labels"] = (run_dir / "labels").string();
  out["K"] = ko.K;
  out["iterations"] = c.iterations;
  out["inertia"] = c.inertia;
  out["source_checkpoint_id"] = store.checkpoint_id;
  std::cout << out.dump(2) << "\n";
  return 0;
}

int run_eval_grid(const CommonArgs& args) {
  RunConfig cfg = resolve_config(args);
  const fs::path run_dir = make_run_dir(args, "eval-grid", cfg);
  const fs::path ckpt_dir = path_key(cfg, "eval.checkpoint", true);
  const fs::path cache = path_key(cfg, "data.feature_cache", false);
  Dataset test = prepare_dataset(path_key(cfg, "data.test_manifest", true), cache);
  EvalTable table = evaluate_grid(ckpt_dir, grid_from(cfg), test);
  table.write_csv(run_dir / "eval.csv");
  table.write_json(run_dir / "eval.json");
  std::ifstream is(run_dir / "eval.csv");
  std::cout << is.rdbuf();
  std::cerr << "wrote " << (run_dir / "eval.csv") << "\n";
  return 0;
}

ContextSpec probe_ctx(const RunConfig& cfg) {
  return ContextSpec{cfg.get_seconds("probe.ctx.lb_s"),
                     cfg.get_seconds("probe.ctx.la_s")};
}

ProbeOptions probe_opts(const RunConfig& cfg, const CommonArgs& args) {
  ProbeOptions opt;
  opt.steps = cfg.get<int>("probe.steps");
  opt.lr = cfg.get<double>("probe.lr");
  opt.batch_size = cfg.get<int>("probe.batch_size");
  opt.dtw_window = cfg.get<int>("probe.dtw_window");
  opt.seed = args.seed;
  return opt;
}

int run_probe(const CommonArgs& args) {
  RunConfig cfg = resolve_config(args);
  const fs::path run_dir = make_run_dir(args, "probe", cfg);
  const fs::path ckpt_dir = path_key(cfg, "probe.checkpoint", true);
  const fs::path cache = path_key(cfg, "data.feature_cache", false);
  Checkpoint ckpt = load_checkpoint(ckpt_dir);
  ModelBundle model = load_model(ckpt);
  Dataset train = prepare_dataset(path_key(cfg, "data.train_manifest", true), cache);
  Dataset dev = prepare_dataset(path_key(cfg, "data.dev_manifest", true), cache);

  const ProbeTaskKind task = probe_task_from_name(cfg.get<std::string>("probe.task"));
  const std::string layer = cfg.at_path("probe.layer").is_string()
                                ? cfg.get<std::string>("probe.layer")
                                : std::to_string(cfg.get<index_t>("probe.layer"));
  LayerSelection sel;
  if (layer == "all") {
    sel = LayerSelection::all();
  } else {
    try {
      sel = LayerSelection::single(std::stol(layer));
    } catch (const std::exception&) {
      throw ConfigError("probe.layer must be a block index or \"all\"");
    }
  }
  ProbeResult res = train_probe(model.encoder, train, dev, task, sel, probe_ctx(cfg),
                                probe_opts(cfg, args));
  nlohmann::json out;
  out["run_dir"] = run_dir.string();
  out["checkpoint_id"] = ckpt.meta.checkpoint_id;
  out["task"] = probe_task_name(res.task);
  out["layer"] = res.layer;
  out["metric"] = res.metric_name;
  out["train_value"] = res.train_metric;
  out["dev_value"] = res.eval_metric;
  out["encoder_hash_before"] = hex64(res.encoder_hash_before);
  out["encoder_hash_after"] = hex64(res.encoder_hash_after);
  if (!res.layer_weights.empty()) out["layer_weights"] = res.layer_weights;
  std::ofstream os(run_dir / "probe_result.json");
  os << out.dump(2) << "\n";
  std::cout << out.dump(2) << "\n";
  return 0;
}

int run_layer_sweep(const CommonArgs& args) {
  RunConfig cfg = resolve_config(args);
  const fs::path run_dir = make_run_dir(args, "layer-sweep", cfg);
  const fs::path ckpt_dir = path_key(cfg, "probe.checkpoint", true);
  const fs::path cache = path_key(cfg, "data.feature_cache", false);
  Checkpoint ckpt = load_checkpoint(ckpt_dir);
  ModelBundle model = load_model(ckpt);
  Dataset train = prepare_dataset(path_key(cfg, "data.train_manifest", true), cache);
  Dataset dev = prepare_dataset(path_key(cfg, "data.dev_manifest", true), cache);

  std::vector<ProbeTaskKind> tasks;
  for (const auto& t : cfg.at_path("probe.tasks"))
    tasks.push_back(probe_task_from_name(t.get<std::string>()));
  ProbeReport report = layer_sweep(model.encoder, ckpt.meta.checkpoint_id, train, dev,
                                   tasks, probe_ctx(cfg), probe_opts(cfg, args));
  report.write_csv(run_dir / "report.csv");
  report.write_json(run_dir / "report.json");
  report.write_svgs(run_dir / "plots");
  nlohmann::json out;
  out["run_dir"] = run_dir.string();
  out["checkpoint_id"] = report.checkpoint_id;
  out["rows"] = report.rows.size();
  out["report_csv"] = (run_dir / "report.csv").string();
  out["report_json"] = (run_dir / "report.json").string();
  for (const auto& [task, b] : report.best_layer) out["best_layer"][task] = b;
  std::cout << out.dump(2) << "\n";
  return 0;
}

struct MaskArgs {
  index_t T = 6;
  std::string lb = "2";
  std::string la = "2";
  int layers = 2;
};

index_t parse_frames(const std::string& s, const char* what) {
  if (s == "inf" || s == "INF") return kInfFrames;
  try {
    return static_cast<index_t>(std::stoll(s));
  } catch (const std::exception&) {
    throw ConfigError(std::string(what) + " must be an integer or 'inf'");
  }
}

int run_analyze_masks(const MaskArgs& margs) {
  const index_t lb = parse_frames(margs.lb, "--lb-frames");
  const index_t la = parse_frames(margs.la, "--la-frames");
  AttentionMask mask = AttentionMask::build(margs.T, lb, la);
  std::cout << "allow matrix (rows = query frame t, cols = key frame s):\n";
  for (index_t t = 0; t < mask.T(); ++t) {
    for (index_t s = 0; s < mask.T(); ++s)
      std::cout << (mask.allowed(t, s) ? '1' : '0') << (s + 1 < mask.T() ? ' ' : '\n');
  }
  ReachTable reach = receptive_field(mask, margs.layers);
  std::cout << "reachability after " << margs.layers << " layers:\n";
  std::cout << "frame,min_reach,max_reach\n";
  for (index_t t = 0; t < mask.T(); ++t)
    std::cout << t << ',' << reach.min_reach(t) << ',' << reach.max_reach(t) << "\n";
  std::cout << "no_lookahead_accumulation,"
            << (verify_no_lookahead_accumulation(mask, margs.layers) ? "true" : "false")
            << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dual-mode speech encoder pipeline"};
  app.require_subcommand(1);

  CommonArgs args;
  MaskArgs margs;

  CLI::App* synth = app.add_subcommand("synth-data", "generate the synthetic fixture corpus");
  CLI::App* prepare = app.add_subcommand("prepare", "compute and cache encoder input features");
  CLI::App* pretrain = app.add_subcommand("pretrain", "masked code-prediction pretraining (s1 or brq_dm)");
  CLI::App* finetune = app.add_subcommand("finetune", "transducer fine-tuning (s2 or single-mode baselines)");
  CLI::App* extract = app.add_subcommand("extract-embeddings", "dump block outputs for clustering");
  CLI::App* kmeans_cmd = app.add_subcommand("kmeans", "fit centroids and write pseudo labels");
  CLI::App* distill = app.add_subcommand("distill", "variable-mask pseudo-label distillation (s3 or distill_from_e1)");
  CLI::App* finetune_dual = app.add_subcommand("finetune-dual", "dual-mode transducer fine-tuning (s4)");
  CLI::App* eval_grid = app.add_subcommand("eval-grid", "decode the test split under each inference setting");
  CLI::App* probe = app.add_subcommand("probe", "train one frozen-encoder probe head");
  CLI::App* sweep = app.add_subcommand("layer-sweep", "probe every block on every task");
  CLI::App* masks = app.add_subcommand("analyze-masks", "print an attention mask and its receptive field");

  for (CLI::App* sub : {synth, prepare, pretrain, finetune, extract, kmeans_cmd,
                        distill, finetune_dual, eval_grid, probe, sweep})
    add_common(sub, &args);
  masks->add_option("--T", margs.T, "sequence length in frames");
  masks->add_option("--lb-frames", margs.lb, "look-back frames or 'inf'");
  masks->add_option("--la-frames", margs.la, "look-ahead frames or 'inf'");
  masks->add_option("--layers", margs.layers, "attention layers for reachability");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n\n" << app.help();
    return 2;
  }

  try {
    if (synth->parsed()) return run_synth(args);
    if (prepare->parsed()) return run_prepare(args);
    if (pretrain->parsed())
      return run_training_subcommand(args, "pretrain", {"s1", "brq_dm"}, "s1");
    if (finetune->parsed())
      return run_training_subcommand(
          args, "finetune", {"s2", "baseline_streaming", "baseline_full_context"},
          "s2");
    if (extract->parsed()) return run_extract(args);
    if (kmeans_cmd->parsed()) return run_kmeans(args);
    if (distill->parsed())
      return run_training_subcommand(args, "distill", {"s3", "distill_from_e1"}, "s3");
    if (finetune_dual->parsed())
      return run_training_subcommand(args, "finetune-dual", {"s4"}, "s4");
    if (eval_grid->parsed()) return run_eval_grid(args);
    if (probe->parsed()) return run_probe(args);
    if (sweep->parsed()) return run_layer_sweep(args);
    if (masks->parsed()) return run_analyze_masks(margs);
    std::cerr << app.help();
    return 2;
  } catch (const ConfigError& e) {
    nlohmann::json err{{"error", e.what()}, {"kind", "config"}, {"exit_code", 2}};
    std::cerr << err.dump() << "\n";
    return 2;
  } catch (const std::exception& e) {
    nlohmann::json err{{"error", e.what()}, {"kind", "runtime"}, {"exit_code", 1}};
    std::cerr << err.dump() << "\n";
    return 1;
  }
}
