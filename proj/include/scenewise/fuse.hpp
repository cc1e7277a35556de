#pragma once

#include <utility>

#include "scenewise/graph.hpp"
#include "scenewise/params.hpp"

namespace scenewise {

// Folds every batchnorm into the conv2d immediately preceding it and drops
// the batchnorm layers from the graph. Inference-time transform: outputs of
// the fused model match the eval-mode unfused model within small rounding.
// Throws a Fusion error if some batchnorm does not follow a conv2d.
std::pair<ModelGraph, ParamStore> fuse_batchnorm(const ModelGraph& graph,
                                                 const ParamStore& params);

}  // namespace scenewise
