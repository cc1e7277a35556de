#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "scenewise/manifest.hpp"
#include "scenewise/pipeline.hpp"

namespace scenewise {

struct PredictionRecord {
  std::string file;
  std::string device_id;     // as given by the manifest
  std::string routed_model;  // "general" or "device_<id>"
  std::vector<double> probabilities;  // label-vocabulary order, sums to 1
  std::string predicted_label;        // argmax, ties to the lowest class index
};

struct PredictResult {
  std::vector<PredictionRecord> records;  // manifest order, failures skipped
  std::vector<std::string> failures;      // per-entry error descriptions
  std::vector<std::string> labels;        // class order of the probabilities
};

// Device routing: entries whose device id has a checkpoint in the bank use
// it; everything else (unknown or known-without-checkpoint) uses the general
// model. Unreadable clips are collected as failures; the run continues.
PredictResult route_and_predict(const ModelBank& bank, const Manifest& manifest,
                                const std::filesystem::path& dataset_root, int workers = 1);

// As above, but ignores the device checkpoints (general-only row).
PredictResult predict_general_only(const ModelBank& bank, const Manifest& manifest,
                                   const std::filesystem::path& dataset_root, int workers = 1);

// Class-wise macro-averaged accuracy: unweighted mean of per-class recalls
// over the classes present in the ground truth.
double macro_accuracy(const PredictResult& result, const Manifest& labeled);

// Mean multi-class cross-entropy, probabilities floored at 1e-12.
double cross_entropy_metric(const PredictResult& result, const Manifest& labeled);

struct DeviceTableRow {
  std::string model_name;
  std::map<std::string, double> per_device_accuracy;  // micro accuracy per device
  double macro_over_classes = 0.0;
  double mean_over_devices = 0.0;
  double cross_entropy = 0.0;
};

struct DeviceTable {
  std::vector<std::string> device_columns;  // known devices first, then unknown
  std::vector<DeviceTableRow> rows;
};

DeviceTable device_table(const std::vector<std::pair<std::string, const PredictResult*>>& runs,
                         const Manifest& labeled, const DeviceRegistry& registry);
std::string render_device_table(const DeviceTable& table);
std::string device_table_json(const DeviceTable& table);

// Submission TSV: filename, predicted label, one probability column per
// class in label-vocabulary order; row order matches the input records.
void emit_submission(const PredictResult& result, const std::filesystem::path& path);
PredictResult load_submission(const std::filesystem::path& path);

}  // namespace scenewise
