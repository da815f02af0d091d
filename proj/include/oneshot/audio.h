#ifndef ONESHOT_AUDIO_H_
#define ONESHOT_AUDIO_H_

// Shared DSP primitives: framing, windows, FFT magnitude spectra,
// triangular mel filterbanks and log-DCT cepstra.

#include <complex>
#include <cstddef>
#include <span>
#include <vector>

#include "oneshot/matrix.h"

namespace oneshot::audio {

/// Mono PCM samples at a fixed rate. Nominal amplitude range is [-1, 1].
struct Signal {
  std::vector<double> samples;
  int sample_rate = 16000;

  std::size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }
  double duration_seconds() const {
    return static_cast<double>(samples.size()) / sample_rate;
  }
  // Throws DataError on a non-positive rate or non-finite samples.
  void validate() const;
};

struct WindowSpec {
  std::size_t length = 0;
  double alpha = 0.54;
  double beta = 0.46;
};

struct MelFilterBank {
  std::size_t num_filters = 0;
  std::size_t n_fft = 0;
  int sample_rate = 0;
  double fmin = 0.0;
  double fmax = 0.0;
  // num_filters x (n_fft/2 + 1), entries in [0, 1], one peak of 1.0 per row.
  Matrix weights;
};

inline constexpr double kLogFloor = 1e-10;

/// Slices `signal` into frames of `frame_len` starting every `hop` samples.
/// The trailing partial frame is dropped. A signal shorter than one frame
/// yields a 0-row matrix.
FrameMatrix frame_signal(std::span<const double> signal, std::size_t frame_len,
                         std::size_t hop);

/// w[n] = alpha - beta*cos(2*pi*n/(N-1)), n = 0..N-1.
std::vector<double> hamming_window(const WindowSpec &spec);
std::vector<double> hamming_window(std::size_t length);

/// Periodic Hann: w[n] = 0.5 - 0.5*cos(2*pi*n/N).
std::vector<double> periodic_hann_window(std::size_t length);

bool is_power_of_two(std::size_t n);

/// In-place iterative radix-2 FFT. data.size() must be a power of two.
void fft(std::vector<std::complex<double>> &data);

/// One-sided magnitude spectrum |X[k]|, k = 0..n_fft/2, of `frame`
/// zero-padded to n_fft. Throws if the frame is longer than n_fft.
std::vector<double> dft_magnitude(std::span<const double> frame,
                                  std::size_t n_fft);

double hz_to_mel(double hz);
double mel_to_hz(double mel);

/// Triangular filters with peaks equally spaced on the mel scale, edges and
/// centres snapped to the nearest FFT bin. Throws when two consecutive
/// band points land on the same bin.
MelFilterBank mel_filterbank(std::size_t num_filters, std::size_t n_fft,
                             int sample_rate, double fmin, double fmax);
MelFilterBank mel_filterbank(std::size_t num_filters, std::size_t n_fft,
                             int sample_rate);

/// Y[m] = sum_k W_m[k] * spectrum[k].
std::vector<double> apply_filterbank(std::span<const double> spectrum,
                                     const MelFilterBank &bank);

/// c[n] = sum_m log10(max(Y[m], eps)) * cos(n*(m+0.5)*pi/M) for
/// n = 0..num_coeffs-1, with m indexing filters from zero.
std::vector<double> log_dct(std::span<const double> mel_energies,
                            std::size_t num_coeffs);

}  // namespace oneshot::audio

#endif  // ONESHOT_AUDIO_H_
