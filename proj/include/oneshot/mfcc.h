#ifndef ONESHOT_MFCC_H_
#define ONESHOT_MFCC_H_

#include <cstddef>

#include "oneshot/audio.h"
#include "oneshot/matrix.h"

namespace oneshot::mfcc {

// 60 ms Hamming frames every 20 ms, 1024-point DFT, 60 mel filters and 60
// cepstral coefficients: a 7.6 s, 16 kHz segment gives 378 x 60.
struct MfccConfig {
  int sample_rate = 16000;
  std::size_t segment_samples = 121600;
  std::size_t frame_len = 960;
  std::size_t hop = 320;
  std::size_t n_fft = 1024;
  std::size_t num_filters = 60;
  std::size_t num_coeffs = 60;

  std::size_t num_frames() const { return (segment_samples - frame_len) / hop + 1; }
};

/// Cepstra of a single frame: Hamming window, power spectrum, mel energies,
/// log10 + DCT.
std::vector<double> frame_cepstrum(std::span<const double> frame,
                                   const std::vector<double> &window,
                                   const audio::MelFilterBank &bank,
                                   const MfccConfig &config);

/// Frames x coefficients MFCC matrix of one segment. Throws ShapeError if
/// the segment length or rate differs from the configuration.
Matrix extract_mfcc(const audio::Signal &segment, const MfccConfig &config = {});

}  // namespace oneshot::mfcc

#endif  // ONESHOT_MFCC_H_
