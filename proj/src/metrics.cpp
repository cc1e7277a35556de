#include "scenewise/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "scenewise/common.hpp"
#include "scenewise/model.hpp"
#include "scenewise/parallel.hpp"
#include "scenewise/wav.hpp"

namespace scenewise {

namespace {

constexpr double kProbFloor = 1e-12;

PredictResult predict_impl(const ModelBank& bank, const Manifest& manifest,
                           const std::filesystem::path& dataset_root, int workers,
                           bool use_device_models) {
  if (bank.labels.empty()) raise(ErrorKind::Bank, "bank carries no class labels");
  const int classes = bank.graph.class_count;
  if (static_cast<int>(bank.labels.size()) != classes) {
    raise(ErrorKind::Bank, "bank label count does not match the model class count");
  }

  const size_t n = manifest.entries.size();
  std::vector<PredictionRecord> records(n);
  std::vector<std::string> errors(n);

  parallel_for(n, workers, [&](size_t i) {
    const RecordingEntry& entry = manifest.entries[i];
    PredictionRecord& rec = records[i];
    rec.file = entry.file;
    rec.device_id = entry.device_id;

    const ParamStore* model = &bank.general;
    rec.routed_model = "general";
    if (use_device_models) {
      auto it = bank.device_models.find(entry.device_id);
      if (it != bank.device_models.end()) {
        model = &it->second;
        rec.routed_model = "device_" + entry.device_id;
      }
    }

    try {
      WavData wav = read_wav_mono(dataset_root / entry.file);
      AudioClip clip{std::move(wav.samples), wav.sample_rate_hz};
      MelSpectrogram mel = compute_mel(clip, bank.frontend);
      Tensor input({1, 1, mel.mel_bins, mel.frames});
      std::copy(mel.values.begin(), mel.values.end(), input.v.begin());
      Tensor logits = forward_eval(bank.graph, *model, input);
      rec.probabilities = softmax_row(logits.data(), classes);
      int best = 0;
      for (int k = 1; k < classes; ++k) {
        if (rec.probabilities[static_cast<size_t>(k)] >
            rec.probabilities[static_cast<size_t>(best)]) {
          best = k;
        }
      }
      rec.predicted_label = bank.labels[static_cast<size_t>(best)];
    } catch (const Error& e) {
      errors[i] = strprintf("%s: %s", entry.file.c_str(), e.what());
    }
  });

  PredictResult result;
  result.labels = bank.labels;
  for (size_t i = 0; i < n; ++i) {
    if (!errors[i].empty()) {
      result.failures.push_back(errors[i]);
      logging::error("prediction failed for " + errors[i]);
    } else {
      result.records.push_back(std::move(records[i]));
    }
  }
  return result;
}

std::map<std::string, std::string> truth_by_file(const Manifest& labeled) {
  std::map<std::string, std::string> truth;
  for (const RecordingEntry& e : labeled.entries) {
    if (!e.scene_label.empty()) truth[e.file] = e.scene_label;
  }
  return truth;
}

int label_rank(const std::vector<std::string>& labels, const std::string& label) {
  auto it = std::find(labels.begin(), labels.end(), label);
  return it == labels.end() ? -1 : static_cast<int>(it - labels.begin());
}

}  // namespace

PredictResult route_and_predict(const ModelBank& bank, const Manifest& manifest,
                                const std::filesystem::path& dataset_root, int workers) {
  return predict_impl(bank, manifest, dataset_root, workers, true);
}

PredictResult predict_general_only(const ModelBank& bank, const Manifest& manifest,
                                   const std::filesystem::path& dataset_root, int workers) {
  return predict_impl(bank, manifest, dataset_root, workers, false);
}

double macro_accuracy(const PredictResult& result, const Manifest& labeled) {
  std::map<std::string, std::string> truth = truth_by_file(labeled);
  std::map<std::string, std::pair<size_t, size_t>> per_class;  // correct, total
  size_t matched = 0;
  for (const PredictionRecord& rec : result.records) {
    auto it = truth.find(rec.file);
    if (it == truth.end()) continue;
    ++matched;
    auto& [correct, total] = per_class[it->second];
    ++total;
    if (rec.predicted_label == it->second) ++correct;
  }
  if (matched == 0) {
    raise(ErrorKind::Metric, "no labeled records; cannot compute macro accuracy");
  }
  double sum = 0.0;
  for (const auto& [label, counts] : per_class) {
    (void)label;
    sum += static_cast<double>(counts.first) / static_cast<double>(counts.second);
  }
  return sum / static_cast<double>(per_class.size());
}

double cross_entropy_metric(const PredictResult& result, const Manifest& labeled) {
  std::map<std::string, std::string> truth = truth_by_file(labeled);
  size_t matched = 0;
  double total = 0.0;
  for (const PredictionRecord& rec : result.records) {
    auto it = truth.find(rec.file);
    if (it == truth.end()) continue;
    int rank = label_rank(result.labels, it->second);
    if (rank < 0) {
      raise(ErrorKind::Metric, "ground-truth label '" + it->second + "' is not in the class set");
    }
    ++matched;
    total += -std::log(std::max(rec.probabilities[static_cast<size_t>(rank)], kProbFloor));
  }
  if (matched == 0) {
    raise(ErrorKind::Metric, "no labeled records; cannot compute cross-entropy");
  }
  return total / static_cast<double>(matched);
}

DeviceTable device_table(const std::vector<std::pair<std::string, const PredictResult*>>& runs,
                         const Manifest& labeled, const DeviceRegistry& registry) {
  std::map<std::string, std::string> truth = truth_by_file(labeled);

  // device columns present in the manifest: known devices first
  std::set<std::string> present;
  for (const RecordingEntry& e : labeled.entries) present.insert(e.device_id);
  DeviceTable table;
  for (const std::string& d : present) {
    if (registry.is_known(d)) table.device_columns.push_back(d);
  }
  for (const std::string& d : present) {
    if (!registry.is_known(d)) table.device_columns.push_back(d);
  }

  for (const auto& [name, result] : runs) {
    DeviceTableRow row;
    row.model_name = name;
    std::map<std::string, std::pair<size_t, size_t>> per_device;
    for (const PredictionRecord& rec : result->records) {
      auto it = truth.find(rec.file);
      if (it == truth.end()) continue;
      auto& [correct, total] = per_device[rec.device_id];
      ++total;
      if (rec.predicted_label == it->second) ++correct;
    }
    double device_sum = 0.0;
    size_t device_count = 0;
    for (const std::string& d : table.device_columns) {
      auto it = per_device.find(d);
      double acc = it == per_device.end() || it->second.second == 0
                       ? 0.0
                       : static_cast<double>(it->second.first) / it->second.second;
      row.per_device_accuracy[d] = acc;
      device_sum += acc;
      ++device_count;
    }
    row.mean_over_devices = device_count == 0 ? 0.0 : device_sum / device_count;
    row.macro_over_classes = macro_accuracy(*result, labeled);
    row.cross_entropy = cross_entropy_metric(*result, labeled);
    table.rows.push_back(std::move(row));
  }
  return table;
}

std::string render_device_table(const DeviceTable& table) {
  std::ostringstream out;
  size_t name_width = 5;
  for (const DeviceTableRow& row : table.rows) {
    name_width = std::max(name_width, row.model_name.size());
  }
  out << strprintf("%-*s", static_cast<int>(name_width), "model");
  for (const std::string& d : table.device_columns) out << strprintf(" %8s", d.c_str());
  out << strprintf(" %12s %10s\n", "macro_acc", "xent");
  for (const DeviceTableRow& row : table.rows) {
    out << strprintf("%-*s", static_cast<int>(name_width), row.model_name.c_str());
    for (const std::string& d : table.device_columns) {
      out << strprintf(" %8.2f", 100.0 * row.per_device_accuracy.at(d));
    }
    out << strprintf(" %12.2f %10.4f\n", 100.0 * row.macro_over_classes, row.cross_entropy);
  }
  return out.str();
}

std::string device_table_json(const DeviceTable& table) {
  nlohmann::json j;
  j["device_columns"] = table.device_columns;
  j["rows"] = nlohmann::json::array();
  for (const DeviceTableRow& row : table.rows) {
    nlohmann::json r;
    r["model"] = row.model_name;
    r["per_device_accuracy"] = row.per_device_accuracy;
    r["macro_over_classes"] = row.macro_over_classes;
    r["mean_over_devices"] = row.mean_over_devices;
    r["cross_entropy"] = row.cross_entropy;
    j["rows"].push_back(std::move(r));
  }
  return j.dump(2) + "\n";
}

void emit_submission(const PredictResult& result, const std::filesystem::path& path) {
  if (result.records.empty()) raise(ErrorKind::InvalidInput, "no prediction records to emit");
  std::ofstream out(path, std::ios::trunc);
  if (!out) raise(ErrorKind::Io, "cannot write submission " + path.string());

  out << "filename\tscene_label";
  for (const std::string& label : result.labels) out << '\t' << label;
  out << '\n';
  for (const PredictionRecord& rec : result.records) {
    out << rec.file << '\t' << rec.predicted_label;
    for (double p : rec.probabilities) out << '\t' << strprintf("%.17g", p);
    out << '\n';
  }
  if (!out) raise(ErrorKind::Io, "short write to " + path.string());
}

PredictResult load_submission(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) raise(ErrorKind::Io, "cannot open submission " + path.string());

  std::string header;
  if (!std::getline(in, header)) raise(ErrorKind::Format, path.string() + ": empty submission");
  std::vector<std::string> cols;
  {
    std::istringstream hs(header);
    std::string field;
    while (std::getline(hs, field, '\t')) cols.push_back(field);
  }
  if (cols.size() < 3 || cols[0] != "filename" || cols[1] != "scene_label") {
    raise(ErrorKind::Format, path.string() + ": bad submission header");
  }

  PredictResult result;
  result.labels.assign(cols.begin() + 2, cols.end());

  std::string line;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ls(line);
    PredictionRecord rec;
    std::string field;
    if (!std::getline(ls, rec.file, '\t') || !std::getline(ls, rec.predicted_label, '\t')) {
      raise(ErrorKind::Format, strprintf("%s:%d: short row", path.string().c_str(), line_no));
    }
    while (std::getline(ls, field, '\t')) {
      try {
        rec.probabilities.push_back(std::stod(field));
      } catch (const std::exception&) {
        raise(ErrorKind::Format,
              strprintf("%s:%d: bad probability '%s'", path.string().c_str(), line_no,
                        field.c_str()));
      }
    }
    if (rec.probabilities.size() != result.labels.size()) {
      raise(ErrorKind::Format,
            strprintf("%s:%d: expected %zu probabilities, got %zu", path.string().c_str(), line_no,
                      result.labels.size(), rec.probabilities.size()));
    }
    result.records.push_back(std::move(rec));
  }
  if (result.records.empty()) raise(ErrorKind::Format, path.string() + ": no records");
  return result;
}

}  // namespace scenewise
