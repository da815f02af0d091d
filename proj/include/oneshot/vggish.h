#ifndef ONESHOT_VGGISH_H_
#define ONESHOT_VGGISH_H_

// VGGish-style front end: 25 ms periodic-Hann STFT with 10 ms hop, 64 mel
// bands on magnitudes, natural log, 96-frame patches with 48-frame hop, a
// weight-file-driven embedding network and PCA post-processing.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "oneshot/audio.h"
#include "oneshot/matrix.h"
#include "oneshot/oswt.h"

namespace oneshot::vggish {

struct VggishConfig {
  int sample_rate = 16000;
  std::size_t segment_samples = 121600;
  std::size_t window = 400;
  std::size_t hop = 160;
  std::size_t n_fft = 512;
  std::size_t num_bands = 64;
  std::size_t patch_frames = 96;
  std::size_t patch_hop = 48;
  std::size_t embedding_size = 128;
};

/// Frames x bands log-mel matrix (758 x 64 for a 7.6 s segment).
Matrix log_mel_spectrogram(const audio::Signal &segment, const VggishConfig &config = {});

/// Patch i covers rows [hop*i, hop*i + patch_len).
std::vector<Matrix> patchify(const Matrix &logmel, std::size_t patch_len = 96,
                             std::size_t patch_hop = 48);

struct EmbeddingLayer {
  io::LayerKind kind = io::LayerKind::kRelu;
  std::size_t stride = 1;
  nn::Tensor weight;  // conv1d: [F, C, K]; dense: [out, in]
  nn::Tensor bias;
};

/// Layer stack applied to a patch viewed as [1, bands, frames].
struct EmbeddingWeights {
  std::vector<EmbeddingLayer> layers;

  // Propagates {bands, frames} through the stack; throws ShapeError naming
  // the first incompatible layer.
  nn::Shape output_shape(std::size_t bands, std::size_t frames) const;
  // output_shape() must also end as a flat `output_size`-vector.
  void validate(std::size_t bands, std::size_t frames, std::size_t output_size) const;

  io::Container to_container() const;
  static EmbeddingWeights from_container(const io::Container &c);
};

/// Seeded stand-in network: conv(64->8,k3)+relu, conv(8->8,k3)+relu,
/// flatten, dense -> 128.
EmbeddingWeights make_test_network(std::uint64_t seed, const VggishConfig &config = {});

std::vector<double> embed(const Matrix &patch, const EmbeddingWeights &weights);

struct PcaParams {
  std::vector<double> mean;  // 128
  Matrix matrix;             // 128 x 128

  static PcaParams identity(std::size_t dim = 128);
  void to_container(io::Container &c) const;
  static PcaParams from_container(const io::Container &c);
};

/// Each row e becomes matrix * (e - mean).
Matrix pca_postprocess(const Matrix &embeddings, const PcaParams &pca);

/// 14 x 128 matrix for one segment.
Matrix extract_vggish(const audio::Signal &segment, const EmbeddingWeights &weights,
                      const PcaParams &pca, const VggishConfig &config = {});

}  // namespace oneshot::vggish

#endif  // ONESHOT_VGGISH_H_
