#include "scenewise/audit.hpp"

#include <algorithm>
#include <sstream>

#include <json.hpp>

#include "scenewise/common.hpp"

namespace scenewise {

namespace {

std::string row_name(size_t index, const LayerSpec& spec) {
  return strprintf("%zu:%s", index, layer_kind_name(spec.kind));
}

}  // namespace

std::vector<LayerComplexity> count_macs(const ModelGraph& graph) {
  std::vector<Shape3> shapes = layer_output_shapes(graph);
  std::vector<LayerComplexity> rows;
  rows.reserve(graph.layers.size());
  for (size_t i = 0; i < graph.layers.size(); ++i) {
    const LayerSpec& spec = graph.layers[i];
    LayerComplexity row;
    row.name = row_name(i, spec);
    switch (spec.kind) {
      case LayerKind::Conv2d: {
        const Shape3& out = shapes[i];
        row.macs = static_cast<int64_t>(out[1]) * out[2] * out[0] *
                   (spec.in_channels / spec.groups) * spec.kf * spec.kt;
        break;
      }
      case LayerKind::Linear:
        row.macs = static_cast<int64_t>(spec.in_features) * spec.out_features;
        break;
      case LayerKind::BatchNorm2d:
      case LayerKind::Relu:
      case LayerKind::AvgPool2d:
      case LayerKind::GlobalAvgPool:
        row.macs = 0;
        break;
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

std::vector<LayerComplexity> count_params(const ModelGraph& graph,
                                          bool include_bn_running_stats) {
  validate_graph(graph);
  std::vector<LayerComplexity> rows;
  rows.reserve(graph.layers.size());
  for (size_t i = 0; i < graph.layers.size(); ++i) {
    const LayerSpec& spec = graph.layers[i];
    LayerComplexity row;
    row.name = row_name(i, spec);
    switch (spec.kind) {
      case LayerKind::Conv2d:
        row.params = static_cast<int64_t>(spec.out_channels) *
                     (spec.in_channels / spec.groups) * spec.kf * spec.kt;
        if (spec.bias) row.params += spec.out_channels;
        break;
      case LayerKind::BatchNorm2d:
        row.params = 2LL * spec.channels;
        if (include_bn_running_stats) row.params += 2LL * spec.channels;
        break;
      case LayerKind::Linear:
        row.params = static_cast<int64_t>(spec.in_features) * spec.out_features +
                     spec.out_features;
        break;
      case LayerKind::Relu:
      case LayerKind::AvgPool2d:
      case LayerKind::GlobalAvgPool:
        row.params = 0;
        break;
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

int64_t memory_bytes(int64_t total_params, int precision_bits) {
  if (precision_bits != 8 && precision_bits != 16 && precision_bits != 32) {
    raise(ErrorKind::Config, strprintf("unsupported precision: %d bits", precision_bits));
  }
  return total_params * precision_bits / 8;
}

void check_budget(ComplexityReport& report, const Budget& budget) {
  if (budget.max_memory_bytes <= 0 || budget.max_macs <= 0) {
    raise(ErrorKind::Config, "budget limits must be positive");
  }
  report.violations.clear();
  if (report.memory_bytes > budget.max_memory_bytes) report.violations.push_back("memory");
  if (report.total_macs > budget.max_macs) report.violations.push_back("macs");
  report.pass = report.violations.empty();
}

ComplexityReport audit_graph(const ModelGraph& graph, int precision_bits,
                             bool include_bn_running_stats, const Budget& budget) {
  ComplexityReport report;
  report.precision_bits = precision_bits;
  std::vector<LayerComplexity> macs = count_macs(graph);
  std::vector<LayerComplexity> params = count_params(graph, include_bn_running_stats);
  report.rows.resize(macs.size());
  for (size_t i = 0; i < macs.size(); ++i) {
    report.rows[i].name = macs[i].name;
    report.rows[i].macs = macs[i].macs;
    report.rows[i].params = params[i].params;
    report.total_macs += macs[i].macs;
    report.total_params += params[i].params;
  }
  report.memory_bytes = memory_bytes(report.total_params, precision_bits);
  check_budget(report, budget);
  return report;
}

std::string render_report_text(const ComplexityReport& report, const Budget& budget) {
  std::ostringstream out;
  size_t name_width = 5;
  for (const LayerComplexity& row : report.rows) name_width = std::max(name_width, row.name.size());
  out << strprintf("%-*s %12s %10s\n", static_cast<int>(name_width), "layer", "macs", "params");
  for (const LayerComplexity& row : report.rows) {
    out << strprintf("%-*s %12lld %10lld\n", static_cast<int>(name_width), row.name.c_str(),
                     static_cast<long long>(row.macs), static_cast<long long>(row.params));
  }
  out << strprintf("%-*s %12lld %10lld\n", static_cast<int>(name_width), "total",
                   static_cast<long long>(report.total_macs),
                   static_cast<long long>(report.total_params));
  out << strprintf("memory: %lld bytes (%.1f kB) at %d-bit (limit %lld)\n",
                   static_cast<long long>(report.memory_bytes),
                   static_cast<double>(report.memory_bytes) / 1000.0, report.precision_bits,
                   static_cast<long long>(budget.max_memory_bytes));
  out << strprintf("macs:   %lld (%.1f MMAC, limit %lld)\n",
                   static_cast<long long>(report.total_macs),
                   static_cast<double>(report.total_macs) / 1e6,
                   static_cast<long long>(budget.max_macs));
  if (report.pass) {
    out << "verdict: pass\n";
  } else {
    std::string dims;
    for (const std::string& v : report.violations) {
      if (!dims.empty()) dims += ", ";
      dims += v;
    }
    out << "verdict: fail (" << dims << ")\n";
  }
  return out.str();
}

std::string render_report_json(const ComplexityReport& report, const Budget& budget) {
  nlohmann::json j;
  j["layers"] = nlohmann::json::array();
  for (const LayerComplexity& row : report.rows) {
    j["layers"].push_back({{"name", row.name}, {"macs", row.macs}, {"params", row.params}});
  }
  j["total_macs"] = report.total_macs;
  j["total_params"] = report.total_params;
  j["precision_bits"] = report.precision_bits;
  j["memory_bytes"] = report.memory_bytes;
  j["budget"] = {{"max_memory_bytes", budget.max_memory_bytes}, {"max_macs", budget.max_macs}};
  j["pass"] = report.pass;
  j["violations"] = report.violations;
  return j.dump(2) + "\n";
}

}  // namespace scenewise
