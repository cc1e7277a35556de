// scenewise: low-complexity acoustic scene classification pipeline.
//
// Subcommands: synth (build a synthetic device-shift dataset), train
// (two-stage training into a model bank), evaluate (device-routed inference,
// metrics, submission file), audit (complexity report for a graph file).
//
// Exit codes: 0 success, 1 domain verdict failure (budget, metric
// preconditions), 2 usage or parse errors.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>

#include "scenewise/audit.hpp"
#include "scenewise/checkpoint.hpp"
#include "scenewise/common.hpp"
#include "scenewise/manifest.hpp"
#include "scenewise/metrics.hpp"
#include "scenewise/pipeline.hpp"
#include "scenewise/synth.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace scenewise;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitVerdict = 1;
constexpr int kExitUsage = 2;

int exit_code_for(const Error& e) {
  switch (e.kind()) {
    case ErrorKind::Budget:
    case ErrorKind::Metric:
      return kExitVerdict;
    case ErrorKind::Config:
    case ErrorKind::Format:
    case ErrorKind::Graph:
      return kExitUsage;
    default:
      return kExitVerdict;
  }
}

json load_config_file(const std::string& path) {
  if (path.empty()) return json::object();
  std::ifstream in(path);
  if (!in) raise(ErrorKind::Io, "cannot open config file " + path);
  try {
    json j;
    in >> j;
    return j;
  } catch (const json::exception& e) {
    raise(ErrorKind::Format, path + ": " + e.what());
  }
}

template <class T>
void merge(const json& cfg, const char* key, T* out, bool cli_set) {
  if (cli_set) return;  // flags win over the config file
  if (cfg.contains(key)) *out = cfg.at(key).get<T>();
}

struct CommonOpts {
  std::string config_path;
  uint64_t seed = kDefaultSeed;
  std::string out_dir = "out";
  int workers = 2;
  bool show_config = false;
};

void add_common(CLI::App* cmd, CommonOpts* opts) {
  cmd->add_option("--config", opts->config_path, "JSON config file (flags win)");
  cmd->add_option("--seed", opts->seed, "master seed");
  cmd->add_option("--out", opts->out_dir, "output directory");
  cmd->add_option("--workers", opts->workers, "worker threads for pure per-clip stages");
  cmd->add_flag("--show-config", opts->show_config, "print the effective config and exit");
}

void apply_common(const json& cfg, CLI::App* cmd, CommonOpts* opts) {
  merge(cfg, "seed", &opts->seed, cmd->count("--seed") > 0);
  merge(cfg, "out", &opts->out_dir, cmd->count("--out") > 0);
  merge(cfg, "workers", &opts->workers, cmd->count("--workers") > 0);
}

// ---------------------------------------------------------------- synth ----

int cmd_synth(CLI::App* cmd, CommonOpts& common, SynthSpec& spec, std::string& profile_path) {
  json cfg = load_config_file(common.config_path);
  apply_common(cfg, cmd, &common);
  merge(cfg, "scenes", &spec.scene_count, cmd->count("--scenes") > 0);
  merge(cfg, "train_clips_per_cell", &spec.train_clips_per_cell, cmd->count("--train-clips") > 0);
  merge(cfg, "test_clips_per_cell_known", &spec.test_clips_per_cell_known,
        cmd->count("--test-clips-known") > 0);
  merge(cfg, "test_clips_per_cell_unknown", &spec.test_clips_per_cell_unknown,
        cmd->count("--test-clips-unknown") > 0);
  merge(cfg, "profiles", &profile_path, cmd->count("--profiles") > 0);

  json effective = {{"command", "synth"},
                    {"seed", common.seed},
                    {"out", common.out_dir},
                    {"workers", common.workers},
                    {"scenes", spec.scene_count},
                    {"train_clips_per_cell", spec.train_clips_per_cell},
                    {"test_clips_per_cell_known", spec.test_clips_per_cell_known},
                    {"test_clips_per_cell_unknown", spec.test_clips_per_cell_unknown},
                    {"profiles", profile_path.empty() ? "<built-in>" : profile_path}};
  if (common.show_config) {
    std::printf("%s\n", effective.dump(2).c_str());
    return kExitOk;
  }

  std::vector<SyntheticDeviceProfile> profiles = profile_path.empty()
                                                     ? default_device_profiles(common.seed)
                                                     : load_device_profiles(profile_path);
  SynthResult result = synth_generate(common.seed, spec, profiles, common.out_dir, common.workers);

  std::map<std::string, std::map<std::string, int>> grid;  // scene -> device -> count
  for (const auto& e : result.train_manifest.entries) grid[e.scene_label][e.device_id]++;
  std::printf("dataset written to %s (%zu audio files)\n", common.out_dir.c_str(),
              result.files_written);
  std::printf("train: %zu clips over %zu scenes\n", result.train_manifest.entries.size(),
              grid.size());
  for (const auto& [scene, devices] : grid) {
    std::printf("  %-18s", scene.c_str());
    for (const auto& [device, count] : devices) {
      std::printf(" %s:%d", device.c_str(), count);
    }
    std::printf("\n");
  }
  std::printf("test: %zu clips\n", result.test_manifest.entries.size());
  return kExitOk;
}

// ---------------------------------------------------------------- train ----

struct TrainOpts {
  std::string dataset_dir;
  std::string graph_path;
  std::string preset = "desk";
  int stage = 0;  // 0 = both
  std::string device;
  int epochs = -1;
  std::string precision = "fp16";
  TrainConfig cfg = TrainConfig::desk_preset();
};

int cmd_train(CLI::App* cmd, CommonOpts& common, TrainOpts& opts) {
  json cfg_file = load_config_file(common.config_path);
  apply_common(cfg_file, cmd, &common);
  merge(cfg_file, "preset", &opts.preset, cmd->count("--preset") > 0);

  TrainConfig preset_cfg =
      opts.preset == "full" ? TrainConfig{} : TrainConfig::desk_preset();
  if (opts.preset != "full" && opts.preset != "desk") {
    raise(ErrorKind::Config, "unknown preset '" + opts.preset + "' (expected desk or full)");
  }
  // flags were parsed into opts.cfg; carry explicit flag values over the preset
  if (cmd->count("--stage1-epochs") == 0) opts.cfg.stage1_epochs = preset_cfg.stage1_epochs;
  if (cmd->count("--stage2-epochs") == 0) opts.cfg.stage2_epochs = preset_cfg.stage2_epochs;
  if (cmd->count("--batch-size") == 0) opts.cfg.batch_size = preset_cfg.batch_size;

  merge(cfg_file, "stage1_epochs", &opts.cfg.stage1_epochs, cmd->count("--stage1-epochs") > 0);
  merge(cfg_file, "stage2_epochs", &opts.cfg.stage2_epochs, cmd->count("--stage2-epochs") > 0);
  merge(cfg_file, "batch_size", &opts.cfg.batch_size, cmd->count("--batch-size") > 0);
  merge(cfg_file, "stage1_peak_lr", &opts.cfg.stage1_peak_lr, cmd->count("--stage1-lr") > 0);
  merge(cfg_file, "stage2_peak_lr", &opts.cfg.stage2_peak_lr, cmd->count("--stage2-lr") > 0);
  merge(cfg_file, "weight_decay", &opts.cfg.adamw.weight_decay, cmd->count("--weight-decay") > 0);
  merge(cfg_file, "mixstyle_alpha", &opts.cfg.mixstyle.alpha, cmd->count("--mixstyle-alpha") > 0);
  merge(cfg_file, "mixstyle_probability", &opts.cfg.mixstyle.probability,
        cmd->count("--mixstyle-prob") > 0);
  merge(cfg_file, "mixstyle_stage2", &opts.cfg.mixstyle_stage2, false);
  merge(cfg_file, "val_fraction", &opts.cfg.val_fraction, false);
  merge(cfg_file, "graph", &opts.graph_path, cmd->count("--graph") > 0);
  merge(cfg_file, "precision", &opts.precision, cmd->count("--precision") > 0);

  if (cmd->count("--epochs") > 0 && opts.epochs >= 0) {
    // --epochs overrides the selected stage (or both when running end to end)
    if (opts.stage == 0 || opts.stage == 1) opts.cfg.stage1_epochs = opts.epochs;
    if (opts.stage == 0 || opts.stage == 2) opts.cfg.stage2_epochs = opts.epochs;
  }
  opts.cfg.seed = common.seed;
  opts.cfg.workers = common.workers;
  opts.cfg.checkpoint_precision = precision_from_name(opts.precision);

  json effective = {{"command", "train"},
                    {"dataset", opts.dataset_dir},
                    {"seed", common.seed},
                    {"out", common.out_dir},
                    {"workers", common.workers},
                    {"preset", opts.preset},
                    {"stage", opts.stage == 0 ? "both" : std::to_string(opts.stage)},
                    {"device", opts.device.empty() ? "<all known>" : opts.device},
                    {"graph", opts.graph_path.empty() ? "<built-in reference>" : opts.graph_path},
                    {"stage1_epochs", opts.cfg.stage1_epochs},
                    {"stage2_epochs", opts.cfg.stage2_epochs},
                    {"batch_size", opts.cfg.batch_size},
                    {"stage1_peak_lr", opts.cfg.stage1_peak_lr},
                    {"stage2_peak_lr", opts.cfg.stage2_lr()},
                    {"weight_decay", opts.cfg.adamw.weight_decay},
                    {"mixstyle_alpha", opts.cfg.mixstyle.alpha},
                    {"mixstyle_probability", opts.cfg.mixstyle.probability},
                    {"mixstyle_stage2", opts.cfg.mixstyle_stage2},
                    {"val_fraction", opts.cfg.val_fraction},
                    {"precision", opts.precision}};
  if (common.show_config) {
    std::printf("%s\n", effective.dump(2).c_str());
    return kExitOk;
  }

  opts.cfg.validate();
  const fs::path dataset = opts.dataset_dir;
  const fs::path out = common.out_dir;
  fs::create_directories(out);

  Manifest train_manifest = load_manifest(dataset / "train.tsv", ManifestKind::Train);
  DeviceRegistry registry = build_registry(train_manifest);
  FrontendConfig frontend;

  logging::info(strprintf("computing features for %zu training clips",
                          train_manifest.entries.size()));
  FeatureSet features = compute_features(train_manifest, dataset, frontend, common.workers);

  // the stock graph adapts its input frames and class count to the dataset
  ModelGraph graph = opts.graph_path.empty()
                         ? reference_graph(features.mel_bins, features.frames,
                                           static_cast<int>(features.label_vocab.size()))
                         : load_graph(opts.graph_path);

  const fs::path bank_dir = out / "bank";
  const fs::path general_path = out / "general_fp32.ckpt";

  ParamStore general;
  if (opts.stage == 0 || opts.stage == 1) {
    logging::info(strprintf("stage 1: training the general model (%d epochs)",
                            opts.cfg.stage1_epochs));
    StageResult r = train_general(train_manifest, dataset, graph, opts.cfg, frontend, &features);
    general = std::move(r.params);
    write_train_log(r.log, out / "train_stage1.log");
    save_checkpoint(general, general_path);  // fp32 working copy for stage 2
  } else {
    if (!fs::exists(general_path)) {
      raise(ErrorKind::Data, "stage 2 requires the stage-1 checkpoint at " + general_path.string());
    }
    general = load_checkpoint(general_path);
  }

  std::map<std::string, ParamStore> tuned;
  if (opts.stage == 0 || opts.stage == 2) {
    std::vector<std::string> devices =
        opts.device.empty() ? registry.known_devices : std::vector<std::string>{opts.device};
    for (const std::string& dev : devices) {
      logging::info(strprintf("stage 2: fine-tuning for device '%s' (%d epochs)", dev.c_str(),
                              opts.cfg.stage2_epochs));
      StageResult r = finetune_device(general, dev, train_manifest, dataset, graph, opts.cfg,
                                      frontend, &features);
      write_train_log(r.log, out / ("train_stage2_" + dev + ".log"));
      tuned.emplace(dev, quantize_store(r.params, opts.cfg.checkpoint_precision));
    }
  }

  ModelBank bank = build_bank(graph, quantize_store(general, opts.cfg.checkpoint_precision),
                              tuned, registry, train_manifest.labels(), frontend, common.seed,
                              opts.cfg.config_hash());
  save_bank(bank, bank_dir);

  ComplexityReport report = audit_graph(graph, precision_bits(opts.cfg.checkpoint_precision));
  std::ofstream audit_file(out / "audit.txt", std::ios::trunc);
  audit_file << render_report_text(report);
  std::ofstream audit_json_file(out / "audit.json", std::ios::trunc);
  audit_json_file << render_report_json(report);

  std::printf("%s", render_report_text(report).c_str());
  std::printf("bank written to %s (1 general + %zu device checkpoints)\n",
              bank_dir.string().c_str(), bank.device_models.size());
  return report.pass ? kExitOk : kExitVerdict;
}

// ------------------------------------------------------------- evaluate ----

struct EvalOpts {
  std::string bank_dir;
  std::string manifest_path;
  std::string audio_root;
  bool compare_general = false;
  bool predict_only = false;
};

int cmd_evaluate(CLI::App* cmd, CommonOpts& common, EvalOpts& opts) {
  json cfg_file = load_config_file(common.config_path);
  apply_common(cfg_file, cmd, &common);

  json effective = {{"command", "evaluate"},
                    {"bank", opts.bank_dir},
                    {"manifest", opts.manifest_path},
                    {"out", common.out_dir},
                    {"workers", common.workers},
                    {"compare_general", opts.compare_general},
                    {"predict_only", opts.predict_only}};
  if (common.show_config) {
    std::printf("%s\n", effective.dump(2).c_str());
    return kExitOk;
  }

  const fs::path out = common.out_dir;
  fs::create_directories(out);
  ModelBank bank = load_bank(opts.bank_dir);
  Manifest manifest = load_manifest(opts.manifest_path, ManifestKind::Test);
  const fs::path audio_root = opts.audio_root.empty()
                                  ? fs::path(opts.manifest_path).parent_path()
                                  : fs::path(opts.audio_root);

  PredictResult routed = route_and_predict(bank, manifest, audio_root, common.workers);
  if (!routed.failures.empty()) {
    std::fprintf(stderr, "%zu clip(s) failed to predict:\n", routed.failures.size());
    for (const std::string& f : routed.failures) std::fprintf(stderr, "  %s\n", f.c_str());
  }
  emit_submission(routed, out / "submission.tsv");
  std::printf("submission written to %s (%zu records)\n",
              (out / "submission.tsv").string().c_str(), routed.records.size());

  if (opts.predict_only) return kExitOk;

  bool labeled = false;
  for (const auto& e : manifest.entries) labeled |= !e.scene_label.empty();
  if (!labeled) {
    raise(ErrorKind::Metric,
          "manifest carries no scene labels; use --predict-only to emit predictions without "
          "metrics");
  }

  DeviceRegistry registry;
  registry.known_devices = bank.known_devices;
  std::vector<std::pair<std::string, const PredictResult*>> runs;
  PredictResult general_only;
  if (opts.compare_general) {
    general_only = predict_general_only(bank, manifest, audio_root, common.workers);
    runs.push_back({"general", &general_only});
  }
  runs.push_back({"device-specific", &routed});

  DeviceTable table = device_table(runs, manifest, registry);
  std::string rendered = render_device_table(table);
  std::printf("%s", rendered.c_str());
  std::ofstream table_file(out / "device_table.txt", std::ios::trunc);
  table_file << rendered;
  std::ofstream metrics_file(out / "metrics.json", std::ios::trunc);
  metrics_file << device_table_json(table);
  return kExitOk;
}

// ---------------------------------------------------------------- audit ----

int cmd_audit(const std::string& graph_path, const std::string& precision, bool include_running) {
  int bits;
  if (precision == "int8") {
    bits = 8;
  } else if (precision == "fp16") {
    bits = 16;
  } else if (precision == "fp32") {
    bits = 32;
  } else {
    raise(ErrorKind::Config, "unknown precision '" + precision + "' (int8, fp16, fp32)");
  }
  ModelGraph graph = load_graph(graph_path);
  ComplexityReport report = audit_graph(graph, bits, include_running);
  std::printf("%s", render_report_text(report).c_str());
  return report.pass ? kExitOk : kExitVerdict;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"scenewise: low-complexity acoustic scene classification pipeline"};
  app.require_subcommand(1);

  CommonOpts synth_common, train_common, eval_common;
  SynthSpec synth_spec;
  std::string synth_profiles;
  TrainOpts train_opts;
  EvalOpts eval_opts;
  std::string audit_graph_path;
  std::string audit_precision = "fp16";
  bool audit_running = false;

  CLI::App* synth = app.add_subcommand("synth", "generate a synthetic device-shift dataset");
  add_common(synth, &synth_common);
  synth->add_option("--scenes", synth_spec.scene_count, "number of scene classes");
  synth->add_option("--train-clips", synth_spec.train_clips_per_cell,
                    "training clips per (scene, device) cell");
  synth->add_option("--test-clips-known", synth_spec.test_clips_per_cell_known,
                    "test clips per known-device cell");
  synth->add_option("--test-clips-unknown", synth_spec.test_clips_per_cell_unknown,
                    "test clips per unknown-device cell");
  synth->add_option("--profiles", synth_profiles, "device profile file (default: built-in set)");

  CLI::App* train = app.add_subcommand("train", "run the two-stage training pipeline");
  add_common(train, &train_common);
  train->add_option("dataset", train_opts.dataset_dir, "dataset directory (from synth)")
      ->required();
  train->add_option("--stage", train_opts.stage, "run a single stage (1 or 2)")
      ->check(CLI::IsMember({0, 1, 2}));
  train->add_option("--device", train_opts.device, "restrict stage 2 to one device id");
  train->add_option("--epochs", train_opts.epochs, "override epochs for the selected stage(s)");
  train->add_option("--precision", train_opts.precision, "checkpoint precision (fp16, fp32)");
  train->add_option("--preset", train_opts.preset, "desk (fast) or full (150/50 epochs)");
  train->add_option("--graph", train_opts.graph_path, "model graph file (default: reference)");
  train->add_option("--stage1-epochs", train_opts.cfg.stage1_epochs, "stage-1 epochs");
  train->add_option("--stage2-epochs", train_opts.cfg.stage2_epochs, "stage-2 epochs");
  train->add_option("--batch-size", train_opts.cfg.batch_size, "batch size");
  train->add_option("--stage1-lr", train_opts.cfg.stage1_peak_lr, "stage-1 peak learning rate");
  train->add_option("--stage2-lr", train_opts.cfg.stage2_peak_lr, "stage-2 peak learning rate");
  train->add_option("--weight-decay", train_opts.cfg.adamw.weight_decay, "AdamW weight decay");
  train->add_option("--mixstyle-alpha", train_opts.cfg.mixstyle.alpha, "Freq-MixStyle alpha");
  train->add_option("--mixstyle-prob", train_opts.cfg.mixstyle.probability,
                    "Freq-MixStyle probability");

  CLI::App* evaluate = app.add_subcommand("evaluate", "device-routed inference and metrics");
  add_common(evaluate, &eval_common);
  evaluate->add_option("bank", eval_opts.bank_dir, "model bank directory")->required();
  evaluate->add_option("manifest", eval_opts.manifest_path, "test manifest (TSV)")->required();
  evaluate->add_option("--audio-root", eval_opts.audio_root,
                       "audio base directory (default: manifest's directory)");
  evaluate->add_flag("--compare-general", eval_opts.compare_general,
                     "add a general-only row to the device table");
  evaluate->add_flag("--predict-only", eval_opts.predict_only,
                     "emit the submission file without computing metrics");

  CLI::App* audit = app.add_subcommand("audit", "complexity report for a model graph");
  audit->add_option("graph", audit_graph_path, "graph definition file")->required();
  audit->add_option("--precision", audit_precision, "accounting precision (int8, fp16, fp32)");
  audit->add_flag("--include-running-stats", audit_running,
                  "count batchnorm running statistics as parameters");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitUsage;  // --help exits 0
  }

  try {
    if (synth->parsed()) return cmd_synth(synth, synth_common, synth_spec, synth_profiles);
    if (train->parsed()) return cmd_train(train, train_common, train_opts);
    if (evaluate->parsed()) return cmd_evaluate(evaluate, eval_common, eval_opts);
    if (audit->parsed()) return cmd_audit(audit_graph_path, audit_precision, audit_running);
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return exit_code_for(e);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitVerdict;
  }
  return kExitUsage;
}
