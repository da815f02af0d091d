#include "oneshot/mfcc.h"

#include <algorithm>
#include <string>

#include "oneshot/error.h"

namespace oneshot::mfcc {

std::vector<double> frame_cepstrum(std::span<const double> frame,
                                   const std::vector<double> &window,
                                   const audio::MelFilterBank &bank,
                                   const MfccConfig &config) {
  std::vector<double> windowed(frame.size());
  for (std::size_t n = 0; n < frame.size(); ++n) windowed[n] = window[n] * frame[n];
  std::vector<double> power = audio::dft_magnitude(windowed, config.n_fft);
  for (double &p : power) p *= p;
  return audio::log_dct(audio::apply_filterbank(power, bank), config.num_coeffs);
}

Matrix extract_mfcc(const audio::Signal &segment, const MfccConfig &config) {
  if (segment.sample_rate != config.sample_rate ||
      segment.size() != config.segment_samples)
    throw ShapeError("extract_mfcc: expected " + std::to_string(config.segment_samples) +
                     " samples at " + std::to_string(config.sample_rate) + " Hz, got " +
                     std::to_string(segment.size()) + " at " +
                     std::to_string(segment.sample_rate) + " Hz");

  const auto frames = audio::frame_signal(segment.samples, config.frame_len, config.hop);
  const auto window = audio::hamming_window(config.frame_len);
  const auto bank = audio::mel_filterbank(config.num_filters, config.n_fft, config.sample_rate);

  Matrix out(frames.rows(), config.num_coeffs);
  for (std::size_t t = 0; t < frames.rows(); ++t) {
    const auto cep = frame_cepstrum(frames.row(t), window, bank, config);
    std::copy(cep.begin(), cep.end(), out.row(t).begin());
  }
  return out;
}

}  // namespace oneshot::mfcc
