#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "scenewise/graph.hpp"

namespace scenewise {

struct Budget {
  int64_t max_memory_bytes = 128000;  // 128 kB, decimal convention
  int64_t max_macs = 30000000;        // 30 MMAC per one-second clip
};

struct LayerComplexity {
  std::string name;  // "<index>:<kind>"
  int64_t macs = 0;
  int64_t params = 0;
};

struct ComplexityReport {
  std::vector<LayerComplexity> rows;
  int64_t total_macs = 0;
  int64_t total_params = 0;
  int precision_bits = 16;
  int64_t memory_bytes = 0;
  bool pass = false;
  std::vector<std::string> violations;  // "memory", "macs"
};

// MAC accounting: conv2d = outF*outT*outC*(inC/groups)*kF*kT, linear = in*out.
// Batchnorm (assumed fused at inference), activations, and pooling count 0.
std::vector<LayerComplexity> count_macs(const ModelGraph& graph);

// Parameter accounting: conv = outC*(inC/groups)*kF*kT (+outC bias),
// batchnorm = 2C affine (+2C running stats when requested), linear = in*out+out.
std::vector<LayerComplexity> count_params(const ModelGraph& graph,
                                          bool include_bn_running_stats = false);

// bytes = params * bits / 8; reported kB use the decimal convention (1 kB =
// 1000 bytes), matching how a 61,148-parameter fp16 model comes to 122.3 kB.
int64_t memory_bytes(int64_t total_params, int precision_bits);

// pass iff memory <= budget.max_memory_bytes and macs <= budget.max_macs;
// fills the violated dimensions otherwise.
void check_budget(ComplexityReport& report, const Budget& budget);

ComplexityReport audit_graph(const ModelGraph& graph, int precision_bits,
                             bool include_bn_running_stats = false,
                             const Budget& budget = Budget{});

std::string render_report_text(const ComplexityReport& report, const Budget& budget = Budget{});
std::string render_report_json(const ComplexityReport& report, const Budget& budget = Budget{});

}  // namespace scenewise
