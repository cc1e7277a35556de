#include "scenewise/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include <json.hpp>

#include "scenewise/checkpoint.hpp"
#include "scenewise/common.hpp"
#include "scenewise/model.hpp"
#include "scenewise/parallel.hpp"
#include "scenewise/rng.hpp"
#include "scenewise/wav.hpp"

namespace scenewise {

namespace {

constexpr uint64_t kStreamInit = 0x101ull;
constexpr uint64_t kStreamSplit = 0x102ull;
constexpr uint64_t kStreamStage1 = 0x103ull;
constexpr uint64_t kStreamStage2 = 0x104ull;

uint64_t fnv1a(const std::string& s) {
  uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace

void TrainConfig::validate() const {
  if (stage1_epochs < 0 || stage2_epochs < 0) raise(ErrorKind::Config, "epochs must be >= 0");
  if (batch_size < 1) raise(ErrorKind::Config, "batch_size must be >= 1");
  if (stage1_peak_lr < 0.0) raise(ErrorKind::Config, "stage-1 learning rate must be >= 0");
  if (stage2_lr() > stage1_peak_lr) {
    raise(ErrorKind::Config, "stage-2 learning rate must not exceed the stage-1 rate");
  }
  if (val_fraction < 0.0 || val_fraction >= 1.0) {
    raise(ErrorKind::Config, "val_fraction must be in [0, 1)");
  }
  mixstyle.validate();
}

uint64_t TrainConfig::config_hash() const {
  std::ostringstream s;
  s << stage1_epochs << '|' << stage2_epochs << '|' << batch_size << '|' << stage1_peak_lr << '|'
    << stage2_lr() << '|' << warmup_frac << '|' << final_lr_frac << '|' << adamw.beta1 << '|'
    << adamw.beta2 << '|' << adamw.eps << '|' << adamw.weight_decay << '|' << mixstyle.alpha << '|'
    << mixstyle.probability << '|' << mixstyle_stage2 << '|' << val_fraction << '|'
    << precision_name(checkpoint_precision);
  return fnv1a(s.str());
}

TrainConfig TrainConfig::desk_preset() {
  TrainConfig cfg;
  cfg.stage1_epochs = 15;
  cfg.stage2_epochs = 5;
  cfg.batch_size = 32;
  return cfg;
}

std::string format_train_log(const std::vector<TrainLogEntry>& log) {
  std::ostringstream out;
  out << "epoch\tstep\tlr\tloss\ttrain_acc\tval_acc\n";
  for (const TrainLogEntry& e : log) {
    out << strprintf("%d\t%lld\t%.8g\t%.8g\t%.6g\t%.6g\n", e.epoch,
                     static_cast<long long>(e.step), e.lr, e.loss, e.train_acc, e.val_acc);
  }
  return out.str();
}

void write_train_log(const std::vector<TrainLogEntry>& log, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) raise(ErrorKind::Io, "cannot write training log " + path.string());
  out << format_train_log(log);
  if (!out) raise(ErrorKind::Io, "short write to " + path.string());
}

FeatureSet compute_features(const Manifest& manifest, const std::filesystem::path& dataset_root,
                            const FrontendConfig& frontend, int workers,
                            const std::vector<std::string>* label_vocab) {
  FeatureSet set;
  set.label_vocab = label_vocab != nullptr ? *label_vocab : manifest.labels();

  std::map<std::string, int> label_index;
  for (size_t i = 0; i < set.label_vocab.size(); ++i) {
    label_index[set.label_vocab[i]] = static_cast<int>(i);
  }

  const size_t n = manifest.entries.size();
  set.features.resize(n);
  set.label_ids.assign(n, -1);
  set.mel_bins = frontend.mel_bins;

  std::vector<std::string> errors(n);
  parallel_for(n, workers, [&](size_t i) {
    const RecordingEntry& entry = manifest.entries[i];
    try {
      WavData wav = read_wav_mono(dataset_root / entry.file);
      AudioClip clip{std::move(wav.samples), wav.sample_rate_hz};
      MelSpectrogram mel = compute_mel(clip, frontend);
      set.features[i] = std::move(mel.values);
    } catch (const Error& e) {
      errors[i] = e.what();
    }
  });
  for (size_t i = 0; i < n; ++i) {
    if (!errors[i].empty()) {
      raise(ErrorKind::Data, "failed to load '" + manifest.entries[i].file + "': " + errors[i]);
    }
  }

  set.frames = static_cast<int>(set.features[0].size()) / set.mel_bins;
  for (size_t i = 0; i < n; ++i) {
    if (set.features[i].size() !=
        static_cast<size_t>(set.mel_bins) * static_cast<size_t>(set.frames)) {
      raise(ErrorKind::Data,
            "clip '" + manifest.entries[i].file + "' produced a different feature shape; "
            "all clips must share one duration");
    }
  }

  for (size_t i = 0; i < n; ++i) {
    const std::string& label = manifest.entries[i].scene_label;
    if (label.empty()) continue;
    auto it = label_index.find(label);
    set.label_ids[i] = it == label_index.end() ? -1 : it->second;
  }
  return set;
}

namespace {

struct EvalCounts {
  size_t correct = 0;
  size_t total = 0;
  double accuracy() const { return total == 0 ? 0.0 : static_cast<double>(correct) / total; }
};

Tensor assemble_batch(const FeatureSet& features, const std::vector<size_t>& indices, size_t lo,
                      size_t hi) {
  const int b = static_cast<int>(hi - lo);
  Tensor batch({b, 1, features.mel_bins, features.frames});
  const size_t sample = static_cast<size_t>(features.mel_bins) * features.frames;
  for (size_t i = lo; i < hi; ++i) {
    std::copy_n(features.features[indices[i]].data(), sample,
                batch.data() + (i - lo) * sample);
  }
  return batch;
}

EvalCounts evaluate_split(const ModelGraph& graph, const ParamStore& params,
                          const FeatureSet& features, const std::vector<size_t>& indices,
                          int batch_size) {
  EvalCounts counts;
  for (size_t lo = 0; lo < indices.size(); lo += static_cast<size_t>(batch_size)) {
    const size_t hi = std::min(indices.size(), lo + static_cast<size_t>(batch_size));
    Tensor batch = assemble_batch(features, indices, lo, hi);
    Tensor logits = forward_eval(graph, params, batch);
    const int classes = graph.class_count;
    for (size_t i = lo; i < hi; ++i) {
      const float* row = logits.data() + (i - lo) * static_cast<size_t>(classes);
      int best = 0;
      for (int k = 1; k < classes; ++k) {
        if (row[k] > row[best]) best = k;
      }
      counts.total += 1;
      if (best == features.label_ids[indices[i]]) counts.correct += 1;
    }
  }
  return counts;
}

// Deterministic stratified split: within each (scene, device) cell, a seeded
// shuffle decides which clips go to validation.
void split_train_val(const Manifest& manifest, const std::vector<size_t>& pool,
                     double val_fraction, uint64_t seed, std::vector<size_t>& train,
                     std::vector<size_t>& val) {
  std::map<std::pair<std::string, std::string>, std::vector<size_t>> cells;
  for (size_t idx : pool) {
    const RecordingEntry& e = manifest.entries[idx];
    cells[{e.scene_label, e.device_id}].push_back(idx);
  }
  for (auto& [key, cell] : cells) {
    Rng rng(derive_seed(seed, {kStreamSplit, fnv1a(key.first + "\t" + key.second)}));
    rng.shuffle(cell);
    size_t val_count = static_cast<size_t>(std::floor(val_fraction * static_cast<double>(cell.size())));
    for (size_t i = 0; i < cell.size(); ++i) {
      (i < val_count ? val : train).push_back(cell[i]);
    }
  }
  std::sort(train.begin(), train.end());
  std::sort(val.begin(), val.end());
}

StageResult run_training(const Manifest& manifest, const ModelGraph& graph, ParamStore params,
                         const FeatureSet& features, const std::vector<size_t>& pool,
                         const TrainConfig& cfg, int epochs, double peak_lr, bool use_mixstyle,
                         uint64_t stage_stream, uint64_t stage_tag) {
  if (features.mel_bins != graph.in_freq || features.frames != graph.in_time) {
    raise(ErrorKind::Data,
          strprintf("feature shape (%d, %d) does not match graph input (%d, %d)",
                    features.mel_bins, features.frames, graph.in_freq, graph.in_time));
  }
  if (static_cast<int>(features.label_vocab.size()) != graph.class_count) {
    raise(ErrorKind::Data,
          strprintf("manifest has %zu scene labels but the graph expects %d classes",
                    features.label_vocab.size(), graph.class_count));
  }

  std::vector<size_t> train_idx, val_idx;
  split_train_val(manifest, pool, cfg.val_fraction, cfg.seed, train_idx, val_idx);
  if (train_idx.empty()) raise(ErrorKind::Data, "no training examples after the validation split");

  StageResult result;
  result.params = std::move(params);
  if (epochs == 0) return result;

  const int64_t steps_per_epoch =
      static_cast<int64_t>((train_idx.size() + cfg.batch_size - 1) / cfg.batch_size);
  LrSchedule schedule{peak_lr, steps_per_epoch * epochs, cfg.warmup_frac, cfg.final_lr_frac};

  AdamWState opt = make_adamw_state(result.params);
  ParamStore grads = make_grad_store(result.params);
  Rng rng(derive_seed(cfg.seed, {stage_stream, stage_tag}));

  int64_t global_step = 0;
  double lr = schedule.at(0);
  Activations acts;  // buffers persist across batches
  for (int epoch = 0; epoch < epochs; ++epoch) {
    rng.shuffle(train_idx);
    double loss_sum = 0.0;
    size_t correct = 0;

    for (size_t lo = 0; lo < train_idx.size(); lo += static_cast<size_t>(cfg.batch_size)) {
      const size_t hi = std::min(train_idx.size(), lo + static_cast<size_t>(cfg.batch_size));
      Tensor batch = assemble_batch(features, train_idx, lo, hi);
      if (use_mixstyle) batch = freq_mixstyle(batch, cfg.mixstyle, rng);

      std::vector<int> labels;
      labels.reserve(hi - lo);
      for (size_t i = lo; i < hi; ++i) labels.push_back(features.label_ids[train_idx[i]]);

      const Tensor& logits = forward_train(graph, result.params, batch, acts);
      Tensor grad_logits;
      const double loss = softmax_cross_entropy(logits, labels, &grad_logits);
      lr = schedule.at(global_step);
      if (!std::isfinite(loss)) {
        raise(ErrorKind::InvalidInput,
              strprintf("non-finite loss at epoch %d, batch %zu, lr %.6g", epoch,
                        lo / static_cast<size_t>(cfg.batch_size), lr));
      }
      loss_sum += loss * static_cast<double>(hi - lo);

      const int classes = graph.class_count;
      for (size_t i = lo; i < hi; ++i) {
        const float* row = logits.data() + (i - lo) * static_cast<size_t>(classes);
        int best = 0;
        for (int k = 1; k < classes; ++k) {
          if (row[k] > row[best]) best = k;
        }
        if (best == labels[i - lo]) ++correct;
      }

      for (auto& layer : grads.layers) {
        for (auto& [name, g] : layer) {
          (void)name;
          std::fill(g.v.begin(), g.v.end(), 0.0f);
        }
      }
      model_backward(graph, result.params, batch, acts, grad_logits, grads);
      adamw_step(opt, result.params, grads, lr, cfg.adamw);
      ++global_step;
    }

    TrainLogEntry entry;
    entry.epoch = epoch;
    entry.step = global_step;
    entry.lr = lr;
    entry.loss = loss_sum / static_cast<double>(train_idx.size());
    entry.train_acc = static_cast<double>(correct) / static_cast<double>(train_idx.size());
    if (!val_idx.empty()) {
      entry.val_acc = evaluate_split(graph, result.params, features, val_idx, cfg.batch_size)
                          .accuracy();
    }
    result.log.push_back(entry);
    logging::debug(strprintf("epoch %d: loss %.4f acc %.3f val %.3f", entry.epoch, entry.loss,
                             entry.train_acc, entry.val_acc));
  }
  return result;
}

}  // namespace

StageResult train_general(const Manifest& manifest, const std::filesystem::path& dataset_root,
                          const ModelGraph& graph, const TrainConfig& cfg,
                          const FrontendConfig& frontend, const FeatureSet* features) {
  cfg.validate();
  validate_graph(graph);

  FeatureSet local;
  if (features == nullptr) {
    local = compute_features(manifest, dataset_root, frontend, cfg.workers);
    features = &local;
  }

  Rng init_rng(derive_seed(cfg.seed, {kStreamInit}));
  ParamStore params = init_params(graph, init_rng);

  std::vector<size_t> pool(manifest.entries.size());
  std::iota(pool.begin(), pool.end(), size_t{0});

  return run_training(manifest, graph, std::move(params), *features, pool, cfg, cfg.stage1_epochs,
                      cfg.stage1_peak_lr, true, kStreamStage1, 0);
}

StageResult finetune_device(const ParamStore& general, const std::string& device_id,
                            const Manifest& manifest, const std::filesystem::path& dataset_root,
                            const ModelGraph& graph, const TrainConfig& cfg,
                            const FrontendConfig& frontend, const FeatureSet* features) {
  cfg.validate();
  DeviceRegistry registry = build_registry(manifest);
  if (!registry.is_known(device_id)) {
    raise(ErrorKind::Registry,
          "device '" + device_id + "' was not seen during training (not in the registry)");
  }

  FeatureSet local;
  if (features == nullptr) {
    local = compute_features(manifest, dataset_root, frontend, cfg.workers);
    features = &local;
  }

  std::vector<size_t> pool;
  for (size_t i = 0; i < manifest.entries.size(); ++i) {
    if (manifest.entries[i].device_id == device_id) pool.push_back(i);
  }
  if (pool.empty()) {
    raise(ErrorKind::Data, "no training clips for device '" + device_id + "'");
  }

  return run_training(manifest, graph, general, *features, pool, cfg, cfg.stage2_epochs,
                      cfg.stage2_lr(), cfg.mixstyle_stage2, kStreamStage2, fnv1a(device_id));
}

void validate_params_match(const ModelGraph& graph, const ParamStore& params,
                           const std::string& what) {
  Rng rng(0);
  ParamStore expect = init_params(graph, rng);
  if (expect.layers.size() != params.layers.size()) {
    raise(ErrorKind::Bank, what + ": checkpoint layer count does not match the graph");
  }
  for (size_t i = 0; i < expect.layers.size(); ++i) {
    for (const auto& [name, tensor] : expect.layers[i]) {
      auto it = params.layers[i].find(name);
      if (it == params.layers[i].end()) {
        raise(ErrorKind::Bank, strprintf("%s: missing tensor layer%zu.%s", what.c_str(), i,
                                         name.c_str()));
      }
      if (it->second.shape != tensor.shape) {
        raise(ErrorKind::Bank, strprintf("%s: tensor layer%zu.%s has the wrong shape",
                                         what.c_str(), i, name.c_str()));
      }
    }
    if (params.layers[i].size() != expect.layers[i].size()) {
      raise(ErrorKind::Bank, strprintf("%s: unexpected extra tensors in layer %zu", what.c_str(), i));
    }
  }
}

ModelBank build_bank(const ModelGraph& graph, const ParamStore& general,
                     const std::map<std::string, ParamStore>& device_models,
                     const DeviceRegistry& registry, const std::vector<std::string>& labels,
                     const FrontendConfig& frontend, uint64_t seed, uint64_t config_hash,
                     const Budget& budget) {
  validate_graph(graph);
  if (general.layers.empty()) raise(ErrorKind::Bank, "bank requires a general checkpoint");
  validate_params_match(graph, general, "general");

  auto audit_one = [&](const ParamStore& store, const std::string& what) {
    ComplexityReport report = audit_graph(graph, precision_bits(store.precision), false, budget);
    if (!report.pass) {
      std::string dims;
      for (const std::string& v : report.violations) {
        if (!dims.empty()) dims += ", ";
        dims += v;
      }
      raise(ErrorKind::Budget, what + " violates the complexity budget: " + dims);
    }
  };
  audit_one(general, "general checkpoint");

  for (const auto& [device_id, store] : device_models) {
    if (!registry.is_known(device_id)) {
      raise(ErrorKind::Bank, "device checkpoint '" + device_id + "' is not a registered device");
    }
    validate_params_match(graph, store, "device_" + device_id);
    audit_one(store, "device checkpoint '" + device_id + "'");
  }

  ModelBank bank;
  bank.graph = graph;
  bank.general = general;
  bank.device_models = device_models;
  bank.labels = labels;
  bank.known_devices = registry.known_devices;
  bank.seed = seed;
  bank.config_hash = config_hash;
  bank.precision = general.precision;
  bank.frontend = frontend;
  return bank;
}

namespace {

nlohmann::json frontend_to_json(const FrontendConfig& f) {
  return {{"target_rate_hz", f.target_rate_hz}, {"fft_size", f.fft_size},
          {"window_samples", f.window_samples}, {"hop_samples", f.hop_samples},
          {"mel_bins", f.mel_bins},             {"fmin_hz", f.fmin_hz},
          {"fmax_hz", f.fmax()},                {"log_floor", f.log_floor}};
}

FrontendConfig frontend_from_json(const nlohmann::json& j) {
  FrontendConfig f;
  f.target_rate_hz = j.at("target_rate_hz").get<int>();
  f.fft_size = j.at("fft_size").get<int>();
  f.window_samples = j.at("window_samples").get<int>();
  f.hop_samples = j.at("hop_samples").get<int>();
  f.mel_bins = j.at("mel_bins").get<int>();
  f.fmin_hz = j.at("fmin_hz").get<double>();
  f.fmax_hz = j.at("fmax_hz").get<double>();
  f.log_floor = j.at("log_floor").get<double>();
  return f;
}

}  // namespace

void save_bank(const ModelBank& bank, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  save_graph(bank.graph, dir / "model.graph");
  save_checkpoint(bank.general, dir / "general.ckpt");
  for (const auto& [device_id, store] : bank.device_models) {
    save_checkpoint(store, dir / ("device_" + device_id + ".ckpt"));
  }

  nlohmann::json meta;
  meta["format"] = 1;
  meta["graph_file"] = "model.graph";
  meta["labels"] = bank.labels;
  meta["known_devices"] = bank.known_devices;
  meta["devices_with_checkpoints"] = nlohmann::json::array();
  for (const auto& [device_id, store] : bank.device_models) {
    (void)store;
    meta["devices_with_checkpoints"].push_back(device_id);
  }
  meta["seed"] = bank.seed;
  meta["config_hash"] = bank.config_hash;
  meta["precision"] = precision_name(bank.precision);
  meta["frontend"] = frontend_to_json(bank.frontend);

  std::ofstream out(dir / "bank.meta", std::ios::trunc);
  if (!out) raise(ErrorKind::Io, "cannot write bank metadata in " + dir.string());
  out << meta.dump(2) << '\n';
  if (!out) raise(ErrorKind::Io, "short write to bank metadata in " + dir.string());
}

ModelBank load_bank(const std::filesystem::path& dir) {
  std::ifstream meta_file(dir / "bank.meta");
  if (!meta_file) raise(ErrorKind::Bank, "missing bank metadata: " + (dir / "bank.meta").string());
  nlohmann::json meta;
  try {
    meta_file >> meta;
  } catch (const nlohmann::json::exception& e) {
    raise(ErrorKind::Format, (dir / "bank.meta").string() + ": " + e.what());
  }

  ModelBank bank;
  try {
    bank.graph = load_graph(dir / meta.at("graph_file").get<std::string>());
    bank.labels = meta.at("labels").get<std::vector<std::string>>();
    bank.known_devices = meta.at("known_devices").get<std::vector<std::string>>();
    bank.seed = meta.at("seed").get<uint64_t>();
    bank.config_hash = meta.at("config_hash").get<uint64_t>();
    bank.precision = precision_from_name(meta.at("precision").get<std::string>());
    bank.frontend = frontend_from_json(meta.at("frontend"));
  } catch (const nlohmann::json::exception& e) {
    raise(ErrorKind::Format, (dir / "bank.meta").string() + ": " + e.what());
  }

  const std::filesystem::path general_path = dir / "general.ckpt";
  if (!std::filesystem::exists(general_path)) {
    raise(ErrorKind::Bank, "bank has no general checkpoint: " + general_path.string());
  }
  bank.general = load_checkpoint(general_path);
  validate_params_match(bank.graph, bank.general, "general");

  for (const auto& device_id : meta.at("devices_with_checkpoints").get<std::vector<std::string>>()) {
    const std::filesystem::path path = dir / ("device_" + device_id + ".ckpt");
    if (!std::filesystem::exists(path)) {
      raise(ErrorKind::Bank, "bank metadata lists device '" + device_id +
                                 "' but " + path.string() + " is missing");
    }
    bool registered = std::binary_search(bank.known_devices.begin(), bank.known_devices.end(),
                                         device_id);
    if (!registered) {
      raise(ErrorKind::Bank, "device checkpoint '" + device_id + "' is not a registered device");
    }
    ParamStore store = load_checkpoint(path);
    validate_params_match(bank.graph, store, "device_" + device_id);
    bank.device_models.emplace(device_id, std::move(store));
  }
  return bank;
}

}  // namespace scenewise
