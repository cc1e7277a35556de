#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "scenewise/audit.hpp"
#include "scenewise/common.hpp"
#include "scenewise/fuse.hpp"
#include "scenewise/params.hpp"
#include "scenewise/rng.hpp"

using namespace scenewise;

namespace {

ModelGraph graph_of(const std::string& text) { return graph_from_text(text, "audit_fixture"); }

int64_t total_macs(const ModelGraph& g) {
  int64_t total = 0;
  for (const auto& row : count_macs(g)) total += row.macs;
  return total;
}

int64_t total_params(const ModelGraph& g, bool running = false) {
  int64_t total = 0;
  for (const auto& row : count_params(g, running)) total += row.params;
  return total;
}

}  // namespace

TEST_CASE("hand-computed conv MAC fixture: 16x16x8 output of a 3x3 conv = 18,432") {
  ModelGraph g = graph_of(
      "input 1 16 16\nclasses 2\n"
      "conv2d in=1 out=8 kernel=3x3 pad=1x1\n"
      "global_avg_pool\nlinear in=8 out=2\n");
  std::vector<LayerComplexity> rows = count_macs(g);
  CHECK(rows[0].macs == 18432);  // 16*16*8*1*9
}

TEST_CASE("linear 10->10 costs exactly 100 MACs") {
  ModelGraph g = graph_of(
      "input 1 2 5\nclasses 10\n"
      "linear in=10 out=10\n");
  std::vector<LayerComplexity> rows = count_macs(g);
  CHECK(rows[0].macs == 100);
}

TEST_CASE("grouped convolutions scale MACs by 1/groups") {
  const char* tmpl =
      "input 1 12 12\nclasses 2\n"
      "conv2d in=8 out=8 kernel=3x1 pad=1x0 groups=%d\n";
  ModelGraph pre = graph_of(
      "input 1 12 12\nclasses 2\n"
      "conv2d in=1 out=8 kernel=1x1\n"
      "conv2d in=8 out=8 kernel=3x1 pad=1x0 groups=1\n"
      "global_avg_pool\nlinear in=8 out=2\n");
  (void)tmpl;
  std::vector<LayerComplexity> rows1 = count_macs(pre);
  ModelGraph grouped = graph_of(
      "input 1 12 12\nclasses 2\n"
      "conv2d in=1 out=8 kernel=1x1\n"
      "conv2d in=8 out=8 kernel=3x1 pad=1x0 groups=4\n"
      "global_avg_pool\nlinear in=8 out=2\n");
  std::vector<LayerComplexity> rows4 = count_macs(grouped);
  CHECK(rows1[1].macs == 4 * rows4[1].macs);
  CHECK(rows1[1].macs == 12 * 12 * 8 * 8 * 3);
}

TEST_CASE("batchnorm, relu, and pooling contribute zero MACs") {
  ModelGraph g = graph_of(
      "input 1 8 8\nclasses 2\n"
      "conv2d in=1 out=4 kernel=3x3 pad=1x1\n"
      "batchnorm2d channels=4\n"
      "relu\n"
      "avg_pool2d kernel=2x2 stride=2x2\n"
      "global_avg_pool\nlinear in=4 out=2\n");
  std::vector<LayerComplexity> rows = count_macs(g);
  CHECK(rows[1].macs == 0);
  CHECK(rows[2].macs == 0);
  CHECK(rows[3].macs == 0);
  CHECK(rows[4].macs == 0);
}

TEST_CASE("hand-computed parameter fixtures") {
  ModelGraph g = graph_of(
      "input 1 8 8\nclasses 2\n"
      "conv2d in=1 out=16 kernel=3x3 pad=1x1\n"
      "batchnorm2d channels=16\n"
      "global_avg_pool\nlinear in=16 out=2\n");
  std::vector<LayerComplexity> rows = count_params(g, false);
  CHECK(rows[0].params == 16 * 9 + 16);
  CHECK(rows[1].params == 32);  // 2C affine only
  CHECK(rows[3].params == 16 * 2 + 2);

  std::vector<LayerComplexity> with_running = count_params(g, true);
  CHECK(with_running[1].params == 64);  // + running mean/var

  ModelGraph conv80 = graph_of(
      "input 1 8 8\nclasses 2\n"
      "conv2d in=1 out=8 kernel=3x3 pad=1x1\n"
      "global_avg_pool\nlinear in=8 out=2\n");
  CHECK(count_params(conv80, false)[0].params == 80);  // 8*9 + 8
}

TEST_CASE("memory accounting uses decimal kB and the published baseline arithmetic") {
  CHECK(memory_bytes(61148, 16) == 122296);
  CHECK(memory_bytes(128000, 8) == 128000);
  CHECK(memory_bytes(32000, 32) == 128000);
  CHECK_THROWS_AS(memory_bytes(100, 12), Error);
}

TEST_CASE("boundary budgets pass at exactly 128,000 bytes") {
  Budget budget;
  for (auto [params, bits] : {std::pair<int64_t, int>{128000, 8}, {32000, 32}, {61148, 16}}) {
    ComplexityReport report;
    report.total_params = params;
    report.precision_bits = bits;
    report.memory_bytes = memory_bytes(params, bits);
    report.total_macs = 29400000;
    check_budget(report, budget);
    CAPTURE(params);
    CHECK(report.pass);
  }
}

TEST_CASE("violations name every failing dimension") {
  Budget budget;
  ComplexityReport report;
  report.memory_bytes = 122296;
  report.total_macs = 35000000;
  check_budget(report, budget);
  CHECK_FALSE(report.pass);
  REQUIRE(report.violations.size() == 1);
  CHECK(report.violations[0] == "macs");

  report.memory_bytes = 130000;
  report.total_macs = 20000000;
  check_budget(report, budget);
  REQUIRE(report.violations.size() == 1);
  CHECK(report.violations[0] == "memory");

  report.memory_bytes = 130000;
  report.total_macs = 31000000;
  check_budget(report, budget);
  CHECK(report.violations == std::vector<std::string>{"memory", "macs"});
}

TEST_CASE("MAC counting is additive over graph concatenation") {
  ModelGraph head = graph_of(
      "input 1 16 16\nclasses 4\n"
      "conv2d in=1 out=4 kernel=3x3 pad=1x1 stride=2x2\n"
      "global_avg_pool\nlinear in=4 out=4\n");
  ModelGraph tail = graph_of(
      "input 4 8 8\nclasses 4\n"
      "conv2d in=4 out=4 kernel=1x3 pad=0x1\n"
      "global_avg_pool\nlinear in=4 out=4\n");
  ModelGraph combined = graph_of(
      "input 1 16 16\nclasses 4\n"
      "conv2d in=1 out=4 kernel=3x3 pad=1x1 stride=2x2\n"
      "conv2d in=4 out=4 kernel=1x3 pad=0x1\n"
      "global_avg_pool\nlinear in=4 out=4\n");
  // the conv rows of the combination equal the union of the pieces' conv rows
  CHECK(count_macs(combined)[0].macs == count_macs(head)[0].macs);
  CHECK(count_macs(combined)[1].macs == count_macs(tail)[0].macs);
  CHECK(total_macs(combined) ==
        count_macs(head)[0].macs + count_macs(tail)[0].macs + count_macs(combined)[3].macs);
}

TEST_CASE("doubling out_channels doubles a conv's MACs and weight parameters") {
  ModelGraph narrow = graph_of(
      "input 1 10 10\nclasses 2\n"
      "conv2d in=1 out=6 kernel=3x3 pad=1x1 bias=0\n"
      "global_avg_pool\nlinear in=6 out=2\n");
  ModelGraph wide = graph_of(
      "input 1 10 10\nclasses 2\n"
      "conv2d in=1 out=12 kernel=3x3 pad=1x1 bias=0\n"
      "global_avg_pool\nlinear in=12 out=2\n");
  CHECK(count_macs(wide)[0].macs == 2 * count_macs(narrow)[0].macs);
  CHECK(count_params(wide, false)[0].params == 2 * count_params(narrow, false)[0].params);
}

TEST_CASE("batchnorm fusion never increases totals") {
  ModelGraph graph = graph_of(
      "input 1 12 12\nclasses 3\n"
      "conv2d in=1 out=6 kernel=3x3 pad=1x1\n"
      "batchnorm2d channels=6\n"
      "relu\n"
      "conv2d in=6 out=6 kernel=1x1\n"
      "batchnorm2d channels=6\n"
      "global_avg_pool\nlinear in=6 out=3\n");
  Rng rng(3);
  ParamStore params = init_params(graph, rng);
  auto [fused, fused_params] = fuse_batchnorm(graph, params);
  (void)fused_params;
  CHECK(total_params(fused) < total_params(graph));
  CHECK(total_macs(fused) <= total_macs(graph));
}

TEST_CASE("the reference graph fits the challenge budget with room to spare") {
  ModelGraph g = reference_graph();
  ComplexityReport report = audit_graph(g, 16, false);
  CHECK(report.pass);
  CHECK(report.total_macs == 2096768);
  CHECK(report.total_params == 11642);
  CHECK(report.memory_bytes == 23284);
  CHECK(report.total_macs <= 30000000);
  CHECK(report.memory_bytes <= 128000);

  // conservative audit with running stats still passes
  ComplexityReport conservative = audit_graph(g, 16, true);
  CHECK(conservative.pass);
  CHECK(conservative.total_params > report.total_params);

  // fp32 variant of this model also fits; the audit reports the 2x bytes
  ComplexityReport fp32 = audit_graph(g, 32, false);
  CHECK(fp32.memory_bytes == 2 * report.memory_bytes);
}

TEST_CASE("report rendering includes totals and verdict") {
  ModelGraph g = reference_graph();
  ComplexityReport report = audit_graph(g, 16, false);
  std::string text = render_report_text(report);
  CHECK(text.find("verdict: pass") != std::string::npos);
  CHECK(text.find("2096768") != std::string::npos);
  std::string json = render_report_json(report);
  CHECK(json.find("\"pass\": true") != std::string::npos);
}
