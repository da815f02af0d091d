#include "oneshot/vggish.h"

#include <algorithm>
#include <cmath>
#include <string>

#include "oneshot/error.h"
#include "oneshot/rng.h"

namespace oneshot::vggish {

Matrix log_mel_spectrogram(const audio::Signal &segment, const VggishConfig &config) {
  if (segment.sample_rate != config.sample_rate ||
      segment.size() != config.segment_samples)
    throw ShapeError("log_mel_spectrogram: expected " +
                     std::to_string(config.segment_samples) + " samples at " +
                     std::to_string(config.sample_rate) + " Hz, got " +
                     std::to_string(segment.size()) + " at " +
                     std::to_string(segment.sample_rate) + " Hz");

  const auto frames = audio::frame_signal(segment.samples, config.window, config.hop);
  const auto window = audio::periodic_hann_window(config.window);
  const auto bank = audio::mel_filterbank(config.num_bands, config.n_fft, config.sample_rate);

  Matrix out(frames.rows(), config.num_bands);
  std::vector<double> buf(config.window);
  for (std::size_t t = 0; t < frames.rows(); ++t) {
    const auto frame = frames.row(t);
    for (std::size_t n = 0; n < buf.size(); ++n) buf[n] = window[n] * frame[n];
    const auto energies = audio::apply_filterbank(audio::dft_magnitude(buf, config.n_fft), bank);
    for (std::size_t b = 0; b < energies.size(); ++b)
      out(t, b) = std::log(std::max(energies[b], audio::kLogFloor));
  }
  return out;
}

std::vector<Matrix> patchify(const Matrix &logmel, std::size_t patch_len,
                             std::size_t patch_hop) {
  if (patch_len == 0 || patch_hop == 0)
    throw UsageError("patchify: patch length and hop must be >= 1");
  if (logmel.rows() < patch_len)
    throw ShapeError("patchify: " + std::to_string(logmel.rows()) +
                     " frames cannot fill a " + std::to_string(patch_len) + "-frame patch");
  const std::size_t count = (logmel.rows() - patch_len) / patch_hop + 1;
  std::vector<Matrix> patches;
  patches.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    Matrix p(patch_len, logmel.cols());
    for (std::size_t r = 0; r < patch_len; ++r) {
      const auto src = logmel.row(i * patch_hop + r);
      std::copy(src.begin(), src.end(), p.row(r).begin());
    }
    patches.push_back(std::move(p));
  }
  return patches;
}

nn::Shape EmbeddingWeights::output_shape(std::size_t bands, std::size_t frames) const {
  // Running activation shape without the batch axis.
  nn::Shape shape{bands, frames};
  auto fail = [&](std::size_t i, const std::string &why) {
    throw ShapeError("embedding layer " + std::to_string(i) + " (" +
                     io::layer_kind_name(layers[i].kind) + "): " + why +
                     "; incoming shape " + nn::shape_string(shape));
  };
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto &layer = layers[i];
    switch (layer.kind) {
      case io::LayerKind::kConv1d: {
        if (shape.size() != 2) fail(i, "conv1d needs a [channels, length] input");
        if (layer.weight.rank() != 3 || layer.bias.rank() != 1)
          fail(i, "conv1d needs a rank-3 kernel and rank-1 bias");
        if (layer.weight.dim(1) != shape[0])
          fail(i, "kernel expects " + std::to_string(layer.weight.dim(1)) + " channels");
        if (layer.bias.dim(0) != layer.weight.dim(0)) fail(i, "bias length != filters");
        if (layer.stride == 0) fail(i, "stride must be >= 1");
        if (shape[1] < layer.weight.dim(2)) fail(i, "input shorter than kernel");
        shape = {layer.weight.dim(0), (shape[1] - layer.weight.dim(2)) / layer.stride + 1};
        break;
      }
      case io::LayerKind::kDense:
        if (shape.size() != 1) fail(i, "dense needs a flattened input");
        if (layer.weight.rank() != 2 || layer.bias.rank() != 1)
          fail(i, "dense needs a rank-2 weight and rank-1 bias");
        if (layer.weight.dim(1) != shape[0])
          fail(i, "weight expects width " + std::to_string(layer.weight.dim(1)));
        if (layer.bias.dim(0) != layer.weight.dim(0)) fail(i, "bias length != output width");
        shape = {layer.weight.dim(0)};
        break;
      case io::LayerKind::kRelu:
        break;
      case io::LayerKind::kFlatten:
        shape = {nn::numel(shape)};
        break;
    }
  }
  return shape;
}

void EmbeddingWeights::validate(std::size_t bands, std::size_t frames,
                                std::size_t output_size) const {
  const nn::Shape shape = output_shape(bands, frames);
  if (shape.size() != 1 || shape[0] != output_size)
    throw ShapeError("embedding network output " + nn::shape_string(shape) +
                     " is not a flat " + std::to_string(output_size) + "-vector");
}

io::Container EmbeddingWeights::to_container() const {
  io::Container c;
  for (const auto &layer : layers) {
    io::LayerRecord rec{layer.kind, 0, {}};
    if (layer.kind == io::LayerKind::kConv1d || layer.kind == io::LayerKind::kDense) {
      rec.tensors = {layer.weight, layer.bias};
      if (layer.kind == io::LayerKind::kConv1d)
        rec.attribute = static_cast<std::uint32_t>(layer.stride);
    }
    c.layers.push_back(std::move(rec));
  }
  return c;
}

EmbeddingWeights EmbeddingWeights::from_container(const io::Container &c) {
  EmbeddingWeights w;
  for (std::size_t i = 0; i < c.layers.size(); ++i) {
    const auto &rec = c.layers[i];
    EmbeddingLayer layer;
    layer.kind = rec.kind;
    const bool has_params =
        rec.kind == io::LayerKind::kConv1d || rec.kind == io::LayerKind::kDense;
    if (rec.tensors.size() != (has_params ? 2u : 0u))
      throw DataError("embedding layer " + std::to_string(i) + " (" +
                      io::layer_kind_name(rec.kind) + ") has " +
                      std::to_string(rec.tensors.size()) + " tensors");
    if (has_params) {
      layer.weight = rec.tensors[0];
      layer.bias = rec.tensors[1];
    }
    if (rec.kind == io::LayerKind::kConv1d) layer.stride = rec.attribute;
    w.layers.push_back(std::move(layer));
  }
  return w;
}

EmbeddingWeights make_test_network(std::uint64_t seed, const VggishConfig &config) {
  constexpr std::size_t kFilters = 8, kKernel = 3;
  Rng rng(seed);
  auto conv = [&](std::size_t in) {
    nn::Conv1d layer = nn::Conv1d::create(in, kFilters, kKernel, 1, rng, "conv");
    return EmbeddingLayer{io::LayerKind::kConv1d, 1, layer.weight->value, layer.bias->value};
  };
  EmbeddingWeights w;
  w.layers.push_back(conv(config.num_bands));
  w.layers.push_back({io::LayerKind::kRelu, 1, {}, {}});
  w.layers.push_back(conv(kFilters));
  w.layers.push_back({io::LayerKind::kRelu, 1, {}, {}});
  w.layers.push_back({io::LayerKind::kFlatten, 1, {}, {}});
  const std::size_t flat = kFilters * (config.patch_frames - 2 * (kKernel - 1));
  nn::Dense head = nn::Dense::create(flat, config.embedding_size, rng, "dense");
  w.layers.push_back({io::LayerKind::kDense, 1, head.weight->value, head.bias->value});
  return w;
}

std::vector<double> embed(const Matrix &patch, const EmbeddingWeights &weights) {
  // Bands become channels, frames the convolution axis.
  const nn::Shape out = weights.output_shape(patch.cols(), patch.rows());
  if (out.size() != 1)
    throw ShapeError("embedding network output " + nn::shape_string(out) +
                     " is not flat; add a flatten layer");

  nn::NoGradGuard no_grad;
  const Matrix t = patch.transposed();
  nn::Var x = nn::constant(nn::Tensor({1, t.rows(), t.cols()}, t.data()));
  for (const auto &layer : weights.layers) {
    switch (layer.kind) {
      case io::LayerKind::kConv1d:
        x = nn::conv1d(x, nn::constant(layer.weight), nn::constant(layer.bias), layer.stride);
        break;
      case io::LayerKind::kDense:
        x = nn::dense(x, nn::constant(layer.weight), nn::constant(layer.bias));
        break;
      case io::LayerKind::kRelu:
        x = nn::relu(x);
        break;
      case io::LayerKind::kFlatten:
        x = nn::flatten(x);
        break;
    }
  }
  return x->value.data();
}

PcaParams PcaParams::identity(std::size_t dim) {
  PcaParams p{std::vector<double>(dim, 0.0), Matrix(dim, dim)};
  for (std::size_t i = 0; i < dim; ++i) p.matrix(i, i) = 1.0;
  return p;
}

void PcaParams::to_container(io::Container &c) const {
  c.put("pca_mean", nn::Tensor({mean.size()}, mean));
  c.put("pca_matrix", nn::Tensor({matrix.rows(), matrix.cols()}, matrix.data()));
}

PcaParams PcaParams::from_container(const io::Container &c) {
  const auto &mean = c.get("pca_mean");
  const auto &mat = c.get("pca_matrix");
  if (mean.rank() != 1 && !(mean.rank() == 2 && mean.dim(0) == 1))
    throw DataError("pca_mean must be a vector");
  if (mat.rank() != 2) throw DataError("pca_matrix must be a matrix");
  return {mean.data(), Matrix(mat.dim(0), mat.dim(1), mat.data())};
}

Matrix pca_postprocess(const Matrix &embeddings, const PcaParams &pca) {
  const std::size_t dim = embeddings.cols();
  if (pca.mean.size() != dim || pca.matrix.cols() != dim)
    throw ShapeError("pca_postprocess: embeddings have width " + std::to_string(dim) +
                     ", PCA mean " + std::to_string(pca.mean.size()) + ", matrix " +
                     std::to_string(pca.matrix.rows()) + "x" +
                     std::to_string(pca.matrix.cols()));
  Matrix out(embeddings.rows(), pca.matrix.rows());
  std::vector<double> centred(dim);
  for (std::size_t r = 0; r < embeddings.rows(); ++r) {
    for (std::size_t j = 0; j < dim; ++j) centred[j] = embeddings(r, j) - pca.mean[j];
    for (std::size_t i = 0; i < pca.matrix.rows(); ++i) {
      double acc = 0.0;
      for (std::size_t j = 0; j < dim; ++j) acc += pca.matrix(i, j) * centred[j];
      out(r, i) = acc;
    }
  }
  return out;
}

Matrix extract_vggish(const audio::Signal &segment, const EmbeddingWeights &weights,
                      const PcaParams &pca, const VggishConfig &config) {
  weights.validate(config.num_bands, config.patch_frames, config.embedding_size);
  const auto patches =
      patchify(log_mel_spectrogram(segment, config), config.patch_frames, config.patch_hop);
  Matrix emb(patches.size(), config.embedding_size);
  for (std::size_t i = 0; i < patches.size(); ++i) {
    const auto v = embed(patches[i], weights);
    std::copy(v.begin(), v.end(), emb.row(i).begin());
  }
  return pca_postprocess(emb, pca);
}

}  // namespace oneshot::vggish
