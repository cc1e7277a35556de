#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <vector>

namespace scenewise {

enum class LayerKind { Conv2d, BatchNorm2d, Relu, AvgPool2d, GlobalAvgPool, Linear };

const char* layer_kind_name(LayerKind kind);

struct LayerSpec {
  LayerKind kind = LayerKind::Relu;

  // conv2d
  int in_channels = 0;
  int out_channels = 0;
  int kf = 1, kt = 1;
  int sf = 1, st = 1;
  int pf = 0, pt = 0;
  int groups = 1;
  bool bias = true;

  // batchnorm2d
  int channels = 0;

  // avg_pool2d reuses kf/kt/sf/st

  // linear
  int in_features = 0;
  int out_features = 0;
};

struct ModelGraph {
  int in_channels = 1;
  int in_freq = 0;
  int in_time = 0;
  int class_count = 0;
  std::vector<LayerSpec> layers;
};

// (channels, freq, time) after each layer; Linear output is (classes, 1, 1).
using Shape3 = std::array<int, 3>;

// Validates the whole chain; throws Graph errors naming the failing layer.
std::vector<Shape3> layer_output_shapes(const ModelGraph& graph);
void validate_graph(const ModelGraph& graph);

// Text form (one layer per line; grammar documented in the README).
std::string graph_to_text(const ModelGraph& graph);
ModelGraph graph_from_text(const std::string& text, const std::string& origin = "<string>");
ModelGraph load_graph(const std::filesystem::path& path);
void save_graph(const ModelGraph& graph, const std::filesystem::path& path);

// The stock low-complexity model: stem conv + three factorized blocks
// [(3,1) grouped conv, (1,3) grouped conv, 1x1 mixing conv] with one
// stride-2 stage per block, global average pooling, linear classifier.
ModelGraph reference_graph(int mel_bins = 256, int frames = 65, int class_count = 10);

}  // namespace scenewise
