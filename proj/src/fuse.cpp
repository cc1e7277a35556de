#include "scenewise/fuse.hpp"

#include <cmath>

#include "scenewise/common.hpp"
#include "scenewise/layers.hpp"

namespace scenewise {

std::pair<ModelGraph, ParamStore> fuse_batchnorm(const ModelGraph& graph,
                                                 const ParamStore& params) {
  validate_graph(graph);
  ModelGraph fused_graph;
  fused_graph.in_channels = graph.in_channels;
  fused_graph.in_freq = graph.in_freq;
  fused_graph.in_time = graph.in_time;
  fused_graph.class_count = graph.class_count;

  ParamStore fused_params;
  fused_params.precision = params.precision;

  for (size_t i = 0; i < graph.layers.size(); ++i) {
    const LayerSpec& spec = graph.layers[i];
    if (spec.kind != LayerKind::BatchNorm2d) {
      fused_graph.layers.push_back(spec);
      fused_params.layers.push_back(params.layers[i]);
      continue;
    }
    if (fused_graph.layers.empty() || fused_graph.layers.back().kind != LayerKind::Conv2d ||
        i == 0 || graph.layers[i - 1].kind != LayerKind::Conv2d) {
      raise(ErrorKind::Fusion,
            strprintf("layer %zu: batchnorm does not immediately follow a conv2d", i));
    }

    LayerSpec& conv = fused_graph.layers.back();
    LayerParamsT<float>& conv_params = fused_params.layers.back();
    const LayerParamsT<float>& bn = params.layers[i];
    const Tensor& gamma = bn.at("gamma");
    const Tensor& beta = bn.at("beta");
    const Tensor& running_mean = bn.at("running_mean");
    const Tensor& running_var = bn.at("running_var");

    Tensor& weight = conv_params.at("weight");
    if (!conv.bias) {
      conv.bias = true;
      conv_params.emplace("bias", Tensor({conv.out_channels}));
    }
    Tensor& bias = conv_params.at("bias");

    const size_t per_out = weight.v.size() / static_cast<size_t>(conv.out_channels);
    for (int oc = 0; oc < conv.out_channels; ++oc) {
      const double scale =
          static_cast<double>(gamma.v[static_cast<size_t>(oc)]) /
          std::sqrt(static_cast<double>(running_var.v[static_cast<size_t>(oc)]) + kBnEps);
      float* w = weight.data() + static_cast<size_t>(oc) * per_out;
      for (size_t j = 0; j < per_out; ++j) w[j] = static_cast<float>(w[j] * scale);
      const double b = static_cast<double>(bias.v[static_cast<size_t>(oc)]);
      const double rm = static_cast<double>(running_mean.v[static_cast<size_t>(oc)]);
      bias.v[static_cast<size_t>(oc)] =
          static_cast<float>((b - rm) * scale + static_cast<double>(beta.v[static_cast<size_t>(oc)]));
    }
  }

  validate_graph(fused_graph);
  return {std::move(fused_graph), std::move(fused_params)};
}

}  // namespace scenewise
