#include "oneshot/audio.h"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "oneshot/error.h"

namespace oneshot::audio {

void Signal::validate() const {
  if (sample_rate <= 0)
    throw DataError("signal sample rate must be positive, got " +
                    std::to_string(sample_rate));
  for (std::size_t i = 0; i < samples.size(); ++i)
    if (!std::isfinite(samples[i]))
      throw DataError("signal sample " + std::to_string(i) + " is not finite");
}

FrameMatrix frame_signal(std::span<const double> signal, std::size_t frame_len,
                         std::size_t hop) {
  if (frame_len == 0) throw UsageError("frame_signal: frame length must be >= 1");
  if (hop == 0) throw UsageError("frame_signal: hop must be >= 1");
  if (signal.size() < frame_len) return FrameMatrix(0, frame_len);

  const std::size_t count = (signal.size() - frame_len) / hop + 1;
  FrameMatrix frames(count, frame_len);
  for (std::size_t i = 0; i < count; ++i)
    std::copy_n(signal.begin() + i * hop, frame_len, frames.row(i).begin());
  return frames;
}

std::vector<double> hamming_window(const WindowSpec &spec) {
  if (spec.length < 2)
    throw UsageError("hamming_window: length must be >= 2, got " +
                     std::to_string(spec.length));
  const std::size_t n_total = spec.length;
  std::vector<double> w(n_total);
  const double denom = static_cast<double>(n_total - 1);
  // Fill the first half and mirror so w[n] == w[N-1-n] holds bit-exactly.
  for (std::size_t n = 0; n < (n_total + 1) / 2; ++n) {
    w[n] = spec.alpha -
           spec.beta * std::cos(2.0 * std::numbers::pi * static_cast<double>(n) / denom);
    w[n_total - 1 - n] = w[n];
  }
  return w;
}

std::vector<double> hamming_window(std::size_t length) {
  return hamming_window(WindowSpec{length});
}

std::vector<double> periodic_hann_window(std::size_t length) {
  if (length < 1) throw UsageError("periodic_hann_window: length must be >= 1");
  std::vector<double> w(length);
  for (std::size_t n = 0; n < length; ++n)
    w[n] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(n) /
                                static_cast<double>(length));
  return w;
}

bool is_power_of_two(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

void fft(std::vector<std::complex<double>> &data) {
  const std::size_t n = data.size();
  if (!is_power_of_two(n))
    throw UsageError("fft: size must be a power of two, got " + std::to_string(n));

  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(data[i], data[j]);
  }

  for (std::size_t len = 2; len <= n; len <<= 1) {
    const std::size_t half = len / 2;
    const double angle = -2.0 * std::numbers::pi / static_cast<double>(len);
    for (std::size_t start = 0; start < n; start += len) {
      for (std::size_t k = 0; k < half; ++k) {
        // Twiddles are evaluated directly rather than by recurrence to keep
        // the error at the 1e-15 level for large transforms.
        const std::complex<double> w = std::polar(1.0, angle * static_cast<double>(k));
        const std::complex<double> u = data[start + k];
        const std::complex<double> v = data[start + k + half] * w;
        data[start + k] = u + v;
        data[start + k + half] = u - v;
      }
    }
  }
}

std::vector<double> dft_magnitude(std::span<const double> frame,
                                  std::size_t n_fft) {
  if (!is_power_of_two(n_fft))
    throw UsageError("dft_magnitude: n_fft must be a power of two, got " +
                     std::to_string(n_fft));
  if (frame.size() > n_fft)
    throw ShapeError("dft_magnitude: frame of " + std::to_string(frame.size()) +
                     " samples exceeds n_fft=" + std::to_string(n_fft));

  std::vector<std::complex<double>> buf(n_fft);
  std::copy(frame.begin(), frame.end(), buf.begin());
  fft(buf);

  std::vector<double> mag(n_fft / 2 + 1);
  for (std::size_t k = 0; k < mag.size(); ++k) mag[k] = std::abs(buf[k]);
  return mag;
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }

double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

MelFilterBank mel_filterbank(std::size_t num_filters, std::size_t n_fft,
                             int sample_rate, double fmin, double fmax) {
  if (num_filters < 1) throw UsageError("mel_filterbank: need at least one filter");
  if (!is_power_of_two(n_fft))
    throw UsageError("mel_filterbank: n_fft must be a power of two");
  if (sample_rate <= 0) throw UsageError("mel_filterbank: sample rate must be positive");
  if (!(fmin >= 0.0 && fmin < fmax && fmax <= sample_rate / 2.0))
    throw UsageError("mel_filterbank: require 0 <= fmin < fmax <= sample_rate/2");

  const std::size_t n_bins = n_fft / 2 + 1;
  const double mel_lo = hz_to_mel(fmin);
  const double mel_hi = hz_to_mel(fmax);

  // Band points: lower edge, M centres, upper edge.
  std::vector<std::size_t> bins(num_filters + 2);
  for (std::size_t i = 0; i < bins.size(); ++i) {
    const double mel = mel_lo + (mel_hi - mel_lo) * static_cast<double>(i) /
                                    static_cast<double>(num_filters + 1);
    const double hz = mel_to_hz(mel);
    bins[i] = static_cast<std::size_t>(
        std::lround(hz * static_cast<double>(n_fft) / sample_rate));
    bins[i] = std::min(bins[i], n_bins - 1);
    if (i > 0 && bins[i] <= bins[i - 1])
      throw UsageError("mel_filterbank: " + std::to_string(num_filters) +
                       " filters is too many for n_fft=" + std::to_string(n_fft) +
                       " (band points " + std::to_string(i - 1) + " and " +
                       std::to_string(i) + " share FFT bin " +
                       std::to_string(bins[i]) + ")");
  }

  MelFilterBank bank{num_filters, n_fft, sample_rate, fmin, fmax,
                     Matrix(num_filters, n_bins)};
  for (std::size_t m = 0; m < num_filters; ++m) {
    const std::size_t left = bins[m];
    const std::size_t centre = bins[m + 1];
    const std::size_t right = bins[m + 2];
    for (std::size_t k = left + 1; k < centre; ++k)
      bank.weights(m, k) = static_cast<double>(k - left) / static_cast<double>(centre - left);
    bank.weights(m, centre) = 1.0;
    for (std::size_t k = centre + 1; k < right; ++k)
      bank.weights(m, k) = static_cast<double>(right - k) / static_cast<double>(right - centre);
  }
  return bank;
}

MelFilterBank mel_filterbank(std::size_t num_filters, std::size_t n_fft,
                             int sample_rate) {
  return mel_filterbank(num_filters, n_fft, sample_rate, 0.0, sample_rate / 2.0);
}

std::vector<double> apply_filterbank(std::span<const double> spectrum,
                                     const MelFilterBank &bank) {
  if (spectrum.size() != bank.weights.cols())
    throw ShapeError("apply_filterbank: spectrum has " + std::to_string(spectrum.size()) +
                     " bins, filterbank expects " + std::to_string(bank.weights.cols()));
  std::vector<double> energies(bank.num_filters, 0.0);
  for (std::size_t m = 0; m < bank.num_filters; ++m) {
    const auto row = bank.weights.row(m);
    double acc = 0.0;
    for (std::size_t k = 0; k < row.size(); ++k) acc += row[k] * spectrum[k];
    energies[m] = acc;
  }
  return energies;
}

std::vector<double> log_dct(std::span<const double> mel_energies,
                            std::size_t num_coeffs) {
  const std::size_t m_total = mel_energies.size();
  if (num_coeffs > m_total)
    throw UsageError("log_dct: requested " + std::to_string(num_coeffs) +
                     " coefficients from " + std::to_string(m_total) + " filters");

  std::vector<double> logs(m_total);
  for (std::size_t m = 0; m < m_total; ++m)
    logs[m] = std::log10(std::max(mel_energies[m], kLogFloor));

  std::vector<double> cep(num_coeffs, 0.0);
  const double scale = std::numbers::pi / static_cast<double>(m_total);
  for (std::size_t n = 0; n < num_coeffs; ++n) {
    double acc = 0.0;
    for (std::size_t m = 0; m < m_total; ++m)
      acc += logs[m] * std::cos(static_cast<double>(n) * (static_cast<double>(m) + 0.5) * scale);
    cep[n] = acc;
  }
  return cep;
}

}  // namespace oneshot::audio
