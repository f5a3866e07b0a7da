#pragma once

// Model checkpoint, little-endian throughout:
//
//   "FEDFT1"            6 bytes
//   layer_count         u64
//   split_index         u64
//   num_classes         u64
//   per layer:
//     kind              u8   (0 = dense, 1 = relu)
//     dense only: out u64, in u64, weights out*in f64 (row-major), bias out f64

#include <cmath>
#include <string>
#include <vector>

#include "fedft/binary_io.hpp"
#include "fedft/nn.hpp"

namespace fedft {

inline constexpr std::string_view kCheckpointMagic = "FEDFT1";

inline std::vector<char> encode_checkpoint(const Model& model) {
  io::ByteWriter w;
  w.bytes(kCheckpointMagic);
  w.u64(model.layer_count());
  w.u64(model.split_index());
  w.u64(model.num_classes());
  for (const auto& layer : model.layers()) {
    w.u8(static_cast<std::uint8_t>(layer.kind));
    if (!layer.is_dense()) continue;
    w.u64(layer.out_width());
    w.u64(layer.in_width());
    w.f64s(layer.weights.values());
    w.f64s(layer.bias);
  }
  return w.buffer();
}

inline Model decode_checkpoint(std::span<const char> bytes) {
  io::ByteReader r(bytes);
  r.expect_magic(kCheckpointMagic);
  const auto layer_count = r.u64("layer_count");
  // Every layer needs at least its kind byte.
  r.require_elements(layer_count, 1, "layer_count");
  const auto split = r.u64("split_index");
  const auto num_classes = r.u64("num_classes");
  if (split > layer_count)
    throw FormatError("split_index", 14, "exceeds layer count " + std::to_string(layer_count));

  std::vector<Layer> layers;
  layers.reserve(layer_count);
  for (std::uint64_t i = 0; i < layer_count; ++i) {
    const std::size_t at = r.offset();
    const auto kind = r.u8("layer_kind");
    if (kind == static_cast<std::uint8_t>(LayerKind::kRelu)) {
      layers.push_back(Layer::relu());
      continue;
    }
    if (kind != static_cast<std::uint8_t>(LayerKind::kDense))
      throw FormatError("layer_kind", at, "unknown tag " + std::to_string(kind));
    const auto out = r.u64("dense_out");
    const auto in = r.u64("dense_in");
    if (out == 0 || in == 0) throw FormatError("dense_shape", at + 1, "zero width");
    if (in > r.remaining() || out > r.remaining())
      throw FormatError("dense_weights", r.offset(), "truncated payload");
    r.require_elements(out * in + out, 8, "dense_weights");
    std::vector<double> w(out * in), b(out);
    for (double& v : w) v = r.f64("dense_weights");
    for (double& v : b) v = r.f64("dense_bias");
    for (double v : w)
      if (!std::isfinite(v)) throw FormatError("dense_weights", at, "non-finite parameter");
    layers.push_back(Layer::dense(Tensor2(out, in, std::move(w)), std::move(b)));
  }
  r.expect_end();
  try {
    return Model(std::move(layers), split, num_classes);
  } catch (const Error& e) {
    throw FormatError("layers", r.offset(), e.what());
  }
}

inline void save_checkpoint(const Model& model, const std::string& path) {
  io::write_file(path, encode_checkpoint(model));
}

inline Model load_checkpoint(const std::string& path) { return decode_checkpoint(io::read_file(path)); }

}  // namespace fedft
