#include "scenewise/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "scenewise/common.hpp"
#include "scenewise/fp16.hpp"

namespace scenewise {

namespace {

constexpr char kMagic[4] = {'A', 'S', 'C', '1'};
constexpr uint32_t kFormatVersion = 1;
constexpr uint8_t kDtypeF32 = 0;
constexpr uint8_t kDtypeF16 = 1;

void put_u16(std::string& out, uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
}

void put_u32(std::string& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

struct Reader {
  const uint8_t* p;
  size_t remaining;
  const std::filesystem::path& path;

  [[noreturn]] void fail(const std::string& why) const {
    raise(ErrorKind::Format, path.string() + ": " + why);
  }

  void need(size_t n) const {
    if (remaining < n) fail("truncated checkpoint");
  }

  uint8_t u8() {
    need(1);
    uint8_t v = p[0];
    p += 1;
    remaining -= 1;
    return v;
  }

  uint16_t u16() {
    need(2);
    uint16_t v = static_cast<uint16_t>(p[0] | p[1] << 8);
    p += 2;
    remaining -= 2;
    return v;
  }

  uint32_t u32() {
    need(4);
    uint32_t v = static_cast<uint32_t>(p[0]) | static_cast<uint32_t>(p[1]) << 8 |
                 static_cast<uint32_t>(p[2]) << 16 | static_cast<uint32_t>(p[3]) << 24;
    p += 4;
    remaining -= 4;
    return v;
  }

  const uint8_t* bytes(size_t n) {
    need(n);
    const uint8_t* out = p;
    p += n;
    remaining -= n;
    return out;
  }
};

}  // namespace

void save_checkpoint(const ParamStore& params, const std::filesystem::path& path) {
  uint32_t tensor_count = 0;
  for (const auto& layer : params.layers) tensor_count += static_cast<uint32_t>(layer.size());

  std::string out;
  out.append(kMagic, 4);
  put_u32(out, kFormatVersion);
  out.push_back(params.precision == Precision::Fp16 ? char(1) : char(0));
  put_u32(out, tensor_count);

  const uint8_t dtype = params.precision == Precision::Fp16 ? kDtypeF16 : kDtypeF32;
  for (size_t li = 0; li < params.layers.size(); ++li) {
    for (const auto& [name, tensor] : params.layers[li]) {
      std::string full = strprintf("layer%zu.%s", li, name.c_str());
      put_u16(out, static_cast<uint16_t>(full.size()));
      out += full;
      out.push_back(static_cast<char>(dtype));
      out.push_back(static_cast<char>(tensor.shape.size()));
      for (int d : tensor.shape) put_u32(out, static_cast<uint32_t>(d));
      if (dtype == kDtypeF16) {
        for (float x : tensor.v) put_u16(out, float_to_half(x));
      } else {
        for (float x : tensor.v) {
          uint32_t bits;
          std::memcpy(&bits, &x, 4);
          put_u32(out, bits);
        }
      }
    }
  }

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) raise(ErrorKind::Io, "cannot write checkpoint " + path.string());
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) raise(ErrorKind::Io, "short write to " + path.string());
}

ParamStore load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) raise(ErrorKind::Io, "cannot open checkpoint " + path.string());
  std::string contents((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());

  Reader r{reinterpret_cast<const uint8_t*>(contents.data()), contents.size(), path};
  const uint8_t* magic = r.bytes(4);
  if (std::memcmp(magic, kMagic, 4) != 0) r.fail("bad magic (not a checkpoint)");
  uint32_t version = r.u32();
  if (version != kFormatVersion) r.fail(strprintf("unsupported format version %u", version));
  uint8_t precision_tag = r.u8();
  if (precision_tag > 1) r.fail("bad precision tag");
  uint32_t tensor_count = r.u32();

  ParamStore store;
  store.precision = precision_tag == 1 ? Precision::Fp16 : Precision::Fp32;

  for (uint32_t i = 0; i < tensor_count; ++i) {
    uint16_t name_len = r.u16();
    const uint8_t* name_bytes = r.bytes(name_len);
    std::string full(reinterpret_cast<const char*>(name_bytes), name_len);
    uint8_t dtype = r.u8();
    if (dtype != kDtypeF32 && dtype != kDtypeF16) r.fail("unknown dtype for tensor " + full);
    uint8_t rank = r.u8();
    std::vector<int> dims(rank);
    size_t numel = 1;
    for (uint8_t d = 0; d < rank; ++d) {
      uint32_t v = r.u32();
      if (v == 0 || v > (1u << 28)) r.fail("bad dimension in tensor " + full);
      dims[d] = static_cast<int>(v);
      numel *= v;
    }

    size_t dot = full.find('.');
    if (dot == std::string::npos || full.compare(0, 5, "layer") != 0) {
      r.fail("bad tensor name '" + full + "'");
    }
    size_t layer_index = 0;
    try {
      layer_index = static_cast<size_t>(std::stoul(full.substr(5, dot - 5)));
    } catch (const std::exception&) {
      r.fail("bad layer index in tensor name '" + full + "'");
    }
    std::string name = full.substr(dot + 1);
    if (layer_index >= store.layers.size()) store.layers.resize(layer_index + 1);

    Tensor tensor;
    tensor.shape = dims;
    tensor.v.resize(numel);
    if (dtype == kDtypeF16) {
      const uint8_t* payload = r.bytes(numel * 2);
      for (size_t j = 0; j < numel; ++j) {
        uint16_t h = static_cast<uint16_t>(payload[2 * j] | payload[2 * j + 1] << 8);
        tensor.v[j] = half_to_float(h);
      }
    } else {
      const uint8_t* payload = r.bytes(numel * 4);
      for (size_t j = 0; j < numel; ++j) {
        uint32_t bits = static_cast<uint32_t>(payload[4 * j]) |
                        static_cast<uint32_t>(payload[4 * j + 1]) << 8 |
                        static_cast<uint32_t>(payload[4 * j + 2]) << 16 |
                        static_cast<uint32_t>(payload[4 * j + 3]) << 24;
        float x;
        std::memcpy(&x, &bits, 4);
        tensor.v[j] = x;
      }
    }
    if (!store.layers[layer_index].emplace(name, std::move(tensor)).second) {
      r.fail("duplicate tensor '" + full + "'");
    }
  }
  if (r.remaining != 0) r.fail("trailing bytes after last tensor");
  return store;
}

}  // namespace scenewise
