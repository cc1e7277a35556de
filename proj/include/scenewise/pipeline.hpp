#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "scenewise/adamw.hpp"
#include "scenewise/audit.hpp"
#include "scenewise/frontend.hpp"
#include "scenewise/manifest.hpp"
#include "scenewise/mixstyle.hpp"
#include "scenewise/params.hpp"

namespace scenewise {

// Documented default seed; every run is reproducible from (config, seed).
inline constexpr uint64_t kDefaultSeed = 32025;

struct TrainConfig {
  int stage1_epochs = 150;
  int stage2_epochs = 50;
  int batch_size = 256;
  double stage1_peak_lr = 0.005;
  double stage2_peak_lr = -1.0;  // < 0 means 0.1 * stage1_peak_lr
  double warmup_frac = 0.1;
  double final_lr_frac = 0.01;
  AdamWConfig adamw;
  FreqMixStyleConfig mixstyle;
  bool mixstyle_stage2 = false;  // stage 2 specializes; mixing stays off
  double val_fraction = 0.1;
  uint64_t seed = kDefaultSeed;
  Precision checkpoint_precision = Precision::Fp16;
  int workers = 1;

  double stage2_lr() const { return stage2_peak_lr < 0.0 ? 0.1 * stage1_peak_lr : stage2_peak_lr; }
  void validate() const;
  uint64_t config_hash() const;

  // 15/5 epochs with batch 32: minutes on a CPU instead of hours
  static TrainConfig desk_preset();
};

struct TrainLogEntry {
  int epoch = 0;
  int64_t step = 0;
  double lr = 0.0;
  double loss = 0.0;
  double train_acc = 0.0;
  double val_acc = -1.0;  // -1 when no validation split
};

std::string format_train_log(const std::vector<TrainLogEntry>& log);
void write_train_log(const std::vector<TrainLogEntry>& log, const std::filesystem::path& path);

// Per-entry log-mel features for one manifest, all clips the same frame count.
struct FeatureSet {
  std::vector<std::vector<float>> features;  // entry-aligned, mel_bins * frames each
  int mel_bins = 0;
  int frames = 0;
  std::vector<int> label_ids;              // -1 for unlabeled entries
  std::vector<std::string> label_vocab;    // sorted label names
};

FeatureSet compute_features(const Manifest& manifest, const std::filesystem::path& dataset_root,
                            const FrontendConfig& frontend, int workers,
                            const std::vector<std::string>* label_vocab = nullptr);

struct StageResult {
  ParamStore params;
  std::vector<TrainLogEntry> log;
};

// Stage 1: the general model, trained on every device with Freq-MixStyle.
StageResult train_general(const Manifest& manifest, const std::filesystem::path& dataset_root,
                          const ModelGraph& graph, const TrainConfig& cfg,
                          const FrontendConfig& frontend, const FeatureSet* features = nullptr);

// Stage 2: fine-tunes a copy of the general parameters on one known device.
StageResult finetune_device(const ParamStore& general, const std::string& device_id,
                            const Manifest& manifest, const std::filesystem::path& dataset_root,
                            const ModelGraph& graph, const TrainConfig& cfg,
                            const FrontendConfig& frontend, const FeatureSet* features = nullptr);

struct ModelBank {
  ModelGraph graph;
  ParamStore general;
  std::map<std::string, ParamStore> device_models;
  std::vector<std::string> labels;
  std::vector<std::string> known_devices;
  uint64_t seed = 0;
  uint64_t config_hash = 0;
  Precision precision = Precision::Fp16;
  FrontendConfig frontend;
};

// Validates device ids against the registry and audits every checkpoint
// against the budget before assembling the bank.
ModelBank build_bank(const ModelGraph& graph, const ParamStore& general,
                     const std::map<std::string, ParamStore>& device_models,
                     const DeviceRegistry& registry, const std::vector<std::string>& labels,
                     const FrontendConfig& frontend, uint64_t seed, uint64_t config_hash,
                     const Budget& budget = Budget{});

// Bank directory layout: general.ckpt, device_<id>.ckpt, model.graph, bank.meta
void save_bank(const ModelBank& bank, const std::filesystem::path& dir);
ModelBank load_bank(const std::filesystem::path& dir);

// Shape-checks a parameter store against a graph (Bank error on mismatch).
void validate_params_match(const ModelGraph& graph, const ParamStore& params,
                           const std::string& what);

}  // namespace scenewise
