#include "scenewise/graph.hpp"

#include <fstream>
#include <map>
#include <sstream>

#include "scenewise/common.hpp"

namespace scenewise {

const char* layer_kind_name(LayerKind kind) {
  switch (kind) {
    case LayerKind::Conv2d: return "conv2d";
    case LayerKind::BatchNorm2d: return "batchnorm2d";
    case LayerKind::Relu: return "relu";
    case LayerKind::AvgPool2d: return "avg_pool2d";
    case LayerKind::GlobalAvgPool: return "global_avg_pool";
    case LayerKind::Linear: return "linear";
  }
  return "?";
}

namespace {

int conv_out_dim(int in, int pad, int kernel, int stride) {
  return (in + 2 * pad - kernel) / stride + 1;
}

[[noreturn]] void graph_error(size_t layer_index, const LayerSpec& spec, const std::string& why) {
  raise(ErrorKind::Graph,
        strprintf("layer %zu (%s): %s", layer_index, layer_kind_name(spec.kind), why.c_str()));
}

}  // namespace

std::vector<Shape3> layer_output_shapes(const ModelGraph& graph) {
  if (graph.in_channels < 1 || graph.in_freq < 1 || graph.in_time < 1) {
    raise(ErrorKind::Graph, "graph input shape must be positive");
  }
  if (graph.class_count < 1) raise(ErrorKind::Graph, "graph class_count must be positive");
  if (graph.layers.empty()) raise(ErrorKind::Graph, "graph has no layers");

  Shape3 cur = {graph.in_channels, graph.in_freq, graph.in_time};
  std::vector<Shape3> shapes;
  shapes.reserve(graph.layers.size());
  bool saw_linear = false;

  for (size_t i = 0; i < graph.layers.size(); ++i) {
    const LayerSpec& spec = graph.layers[i];
    if (saw_linear) graph_error(i, spec, "no layers may follow the final linear layer");
    switch (spec.kind) {
      case LayerKind::Conv2d: {
        if (spec.kf < 1 || spec.kt < 1) graph_error(i, spec, "kernel dims must be >= 1");
        if (spec.sf < 1 || spec.st < 1) graph_error(i, spec, "stride must be >= 1");
        if (spec.pf < 0 || spec.pt < 0) graph_error(i, spec, "padding must be >= 0");
        if (spec.groups < 1) graph_error(i, spec, "groups must be >= 1");
        if (spec.in_channels != cur[0]) {
          graph_error(i, spec, strprintf("expects %d input channels, got %d", spec.in_channels, cur[0]));
        }
        if (spec.in_channels % spec.groups != 0 || spec.out_channels % spec.groups != 0) {
          graph_error(i, spec, strprintf("groups=%d must divide in=%d and out=%d", spec.groups,
                                         spec.in_channels, spec.out_channels));
        }
        int of = conv_out_dim(cur[1], spec.pf, spec.kf, spec.sf);
        int ot = conv_out_dim(cur[2], spec.pt, spec.kt, spec.st);
        if (of < 1 || ot < 1) {
          graph_error(i, spec, strprintf("kernel %dx%d does not fit input %dx%d", spec.kf, spec.kt,
                                         cur[1], cur[2]));
        }
        cur = {spec.out_channels, of, ot};
        break;
      }
      case LayerKind::BatchNorm2d: {
        if (spec.channels != cur[0]) {
          graph_error(i, spec, strprintf("normalizes %d channels, input has %d", spec.channels, cur[0]));
        }
        break;
      }
      case LayerKind::Relu:
        break;
      case LayerKind::AvgPool2d: {
        if (spec.kf < 1 || spec.kt < 1 || spec.sf < 1 || spec.st < 1) {
          graph_error(i, spec, "pool kernel and stride must be >= 1");
        }
        if (spec.kf > cur[1] || spec.kt > cur[2]) {
          graph_error(i, spec, strprintf("pool window %dx%d larger than input %dx%d", spec.kf,
                                         spec.kt, cur[1], cur[2]));
        }
        cur = {cur[0], (cur[1] - spec.kf) / spec.sf + 1, (cur[2] - spec.kt) / spec.st + 1};
        break;
      }
      case LayerKind::GlobalAvgPool:
        cur = {cur[0], 1, 1};
        break;
      case LayerKind::Linear: {
        int flat = cur[0] * cur[1] * cur[2];
        if (spec.in_features != flat) {
          graph_error(i, spec, strprintf("expects %d input features, layer input flattens to %d",
                                         spec.in_features, flat));
        }
        cur = {spec.out_features, 1, 1};
        saw_linear = true;
        break;
      }
    }
    shapes.push_back(cur);
  }

  Shape3 last = shapes.back();
  if (last[0] * last[1] * last[2] != graph.class_count || last[0] != graph.class_count) {
    raise(ErrorKind::Graph, strprintf("graph output shape (%d,%d,%d) does not match class_count %d",
                                      last[0], last[1], last[2], graph.class_count));
  }
  return shapes;
}

void validate_graph(const ModelGraph& graph) { layer_output_shapes(graph); }

std::string graph_to_text(const ModelGraph& graph) {
  std::ostringstream out;
  out << "input " << graph.in_channels << ' ' << graph.in_freq << ' ' << graph.in_time << '\n';
  out << "classes " << graph.class_count << '\n';
  for (const LayerSpec& s : graph.layers) {
    switch (s.kind) {
      case LayerKind::Conv2d:
        out << "conv2d in=" << s.in_channels << " out=" << s.out_channels << " kernel=" << s.kf
            << 'x' << s.kt << " stride=" << s.sf << 'x' << s.st << " pad=" << s.pf << 'x' << s.pt
            << " groups=" << s.groups << " bias=" << (s.bias ? 1 : 0) << '\n';
        break;
      case LayerKind::BatchNorm2d:
        out << "batchnorm2d channels=" << s.channels << '\n';
        break;
      case LayerKind::Relu:
        out << "relu\n";
        break;
      case LayerKind::AvgPool2d:
        out << "avg_pool2d kernel=" << s.kf << 'x' << s.kt << " stride=" << s.sf << 'x' << s.st
            << '\n';
        break;
      case LayerKind::GlobalAvgPool:
        out << "global_avg_pool\n";
        break;
      case LayerKind::Linear:
        out << "linear in=" << s.in_features << " out=" << s.out_features << '\n';
        break;
    }
  }
  return out.str();
}

namespace {

struct LineParser {
  const std::string& origin;
  int line_no;
  std::map<std::string, std::string> kv;

  [[noreturn]] void fail(const std::string& why) const {
    raise(ErrorKind::Format, strprintf("%s:%d: %s", origin.c_str(), line_no, why.c_str()));
  }

  bool has(const std::string& key) const { return kv.count(key) != 0; }

  int get_int(const std::string& key) const {
    auto it = kv.find(key);
    if (it == kv.end()) fail("missing required field '" + key + "'");
    try {
      size_t used = 0;
      int v = std::stoi(it->second, &used);
      if (used != it->second.size()) throw std::invalid_argument("trailing");
      return v;
    } catch (const std::exception&) {
      fail("field '" + key + "' is not an integer: '" + it->second + "'");
    }
  }

  int get_int_or(const std::string& key, int fallback) const {
    return has(key) ? get_int(key) : fallback;
  }

  std::pair<int, int> get_pair(const std::string& key) const {
    auto it = kv.find(key);
    if (it == kv.end()) fail("missing required field '" + key + "'");
    size_t x = it->second.find('x');
    if (x == std::string::npos) fail("field '" + key + "' must look like AxB");
    try {
      return {std::stoi(it->second.substr(0, x)), std::stoi(it->second.substr(x + 1))};
    } catch (const std::exception&) {
      fail("field '" + key + "' must look like AxB, got '" + it->second + "'");
    }
  }

  std::pair<int, int> get_pair_or(const std::string& key, std::pair<int, int> fallback) const {
    return has(key) ? get_pair(key) : fallback;
  }
};

}  // namespace

ModelGraph graph_from_text(const std::string& text, const std::string& origin) {
  ModelGraph graph;
  bool have_input = false;
  bool have_classes = false;

  std::istringstream stream(text);
  std::string line;
  int line_no = 0;
  while (std::getline(stream, line)) {
    ++line_no;
    size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    std::istringstream ls(line);
    std::string word;
    if (!(ls >> word)) continue;

    LineParser p{origin, line_no, {}};
    std::string tok;
    std::vector<std::string> bare;
    while (ls >> tok) {
      size_t eq = tok.find('=');
      if (eq == std::string::npos) {
        bare.push_back(tok);
      } else {
        p.kv[tok.substr(0, eq)] = tok.substr(eq + 1);
      }
    }

    if (word == "input") {
      if (bare.size() != 3) p.fail("input needs three values: channels mel_bins frames");
      try {
        graph.in_channels = std::stoi(bare[0]);
        graph.in_freq = std::stoi(bare[1]);
        graph.in_time = std::stoi(bare[2]);
      } catch (const std::exception&) {
        p.fail("input values must be integers");
      }
      have_input = true;
      continue;
    }
    if (word == "classes") {
      if (bare.size() != 1) p.fail("classes needs one value");
      try {
        graph.class_count = std::stoi(bare[0]);
      } catch (const std::exception&) {
        p.fail("classes value must be an integer");
      }
      have_classes = true;
      continue;
    }

    LayerSpec spec;
    if (word == "conv2d") {
      spec.kind = LayerKind::Conv2d;
      spec.in_channels = p.get_int("in");
      spec.out_channels = p.get_int("out");
      std::tie(spec.kf, spec.kt) = p.get_pair("kernel");
      std::tie(spec.sf, spec.st) = p.get_pair_or("stride", {1, 1});
      std::tie(spec.pf, spec.pt) = p.get_pair_or("pad", {0, 0});
      spec.groups = p.get_int_or("groups", 1);
      spec.bias = p.get_int_or("bias", 1) != 0;
    } else if (word == "batchnorm2d") {
      spec.kind = LayerKind::BatchNorm2d;
      spec.channels = p.get_int("channels");
    } else if (word == "relu") {
      spec.kind = LayerKind::Relu;
    } else if (word == "avg_pool2d") {
      spec.kind = LayerKind::AvgPool2d;
      std::tie(spec.kf, spec.kt) = p.get_pair("kernel");
      std::tie(spec.sf, spec.st) = p.get_pair_or("stride", {spec.kf, spec.kt});
    } else if (word == "global_avg_pool") {
      spec.kind = LayerKind::GlobalAvgPool;
    } else if (word == "linear") {
      spec.kind = LayerKind::Linear;
      spec.in_features = p.get_int("in");
      spec.out_features = p.get_int("out");
    } else {
      p.fail("unknown layer kind '" + word + "'");
    }
    graph.layers.push_back(spec);
  }

  if (!have_input) raise(ErrorKind::Format, origin + ": missing 'input' line");
  if (!have_classes) raise(ErrorKind::Format, origin + ": missing 'classes' line");
  validate_graph(graph);
  return graph;
}

ModelGraph load_graph(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) raise(ErrorKind::Io, "cannot open graph file " + path.string());
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return graph_from_text(text, path.string());
}

void save_graph(const ModelGraph& graph, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) raise(ErrorKind::Io, "cannot write graph file " + path.string());
  out << graph_to_text(graph);
  if (!out) raise(ErrorKind::Io, "short write to " + path.string());
}

namespace {

LayerSpec conv(int in, int out, int kf, int kt, int sf, int st, int pf, int pt, int groups) {
  LayerSpec s;
  s.kind = LayerKind::Conv2d;
  s.in_channels = in;
  s.out_channels = out;
  s.kf = kf;
  s.kt = kt;
  s.sf = sf;
  s.st = st;
  s.pf = pf;
  s.pt = pt;
  s.groups = groups;
  s.bias = true;
  return s;
}

LayerSpec bn(int channels) {
  LayerSpec s;
  s.kind = LayerKind::BatchNorm2d;
  s.channels = channels;
  return s;
}

LayerSpec relu() {
  LayerSpec s;
  s.kind = LayerKind::Relu;
  return s;
}

void factorized_block(ModelGraph& g, int in, int out, int groups_a, int groups_b) {
  // (3,1) grouped conv carries the stride-2 stage of the block
  g.layers.push_back(conv(in, out, 3, 1, 2, 2, 1, 0, groups_a));
  g.layers.push_back(bn(out));
  g.layers.push_back(relu());
  g.layers.push_back(conv(out, out, 1, 3, 1, 1, 0, 1, groups_b));
  g.layers.push_back(bn(out));
  g.layers.push_back(relu());
  g.layers.push_back(conv(out, out, 1, 1, 1, 1, 0, 0, 1));
  g.layers.push_back(bn(out));
}

}  // namespace

ModelGraph reference_graph(int mel_bins, int frames, int class_count) {
  ModelGraph g;
  g.in_channels = 1;
  g.in_freq = mel_bins;
  g.in_time = frames;
  g.class_count = class_count;

  g.layers.push_back(conv(1, 8, 3, 3, 2, 2, 1, 1, 1));  // stem
  g.layers.push_back(bn(8));
  g.layers.push_back(relu());
  factorized_block(g, 8, 16, 4, 4);
  factorized_block(g, 16, 32, 4, 4);
  factorized_block(g, 32, 64, 4, 8);

  LayerSpec gap;
  gap.kind = LayerKind::GlobalAvgPool;
  g.layers.push_back(gap);

  LayerSpec fc;
  fc.kind = LayerKind::Linear;
  fc.in_features = 64;
  fc.out_features = class_count;
  g.layers.push_back(fc);

  validate_graph(g);
  return g;
}

}  // namespace scenewise
