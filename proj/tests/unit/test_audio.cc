#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

#include "doctest.h"
#include "oneshot/audio.h"
#include "oneshot/error.h"
#include "oneshot/rng.h"

using namespace oneshot;
using namespace oneshot::audio;

namespace {

// Quadratic DFT straight from the definition.
std::vector<double> naive_magnitude(const std::vector<double> &x, std::size_t n_fft) {
  std::vector<double> out(n_fft / 2 + 1);
  for (std::size_t k = 0; k <= n_fft / 2; ++k) {
    long double re = 0, im = 0;
    for (std::size_t n = 0; n < x.size(); ++n) {
      const long double a = -2.0L * std::numbers::pi_v<long double> * k * n / n_fft;
      re += x[n] * std::cos(a);
      im += x[n] * std::sin(a);
    }
    out[k] = static_cast<double>(std::sqrt(re * re + im * im));
  }
  return out;
}

std::vector<double> random_vector(Rng &rng, std::size_t n, double lo = -1, double hi = 1) {
  std::vector<double> v(n);
  for (auto &x : v) x = rng.uniform(lo, hi);
  return v;
}

}  // namespace

TEST_CASE("frame counts") {
  std::vector<double> x(121600);
  CHECK(frame_signal(x, 960, 320).rows() == 378);
  x.resize(960);
  CHECK(frame_signal(x, 960, 320).rows() == 1);
  x.resize(1000);
  CHECK(frame_signal(x, 960, 320).rows() == 1);
  x.resize(959);
  CHECK(frame_signal(x, 960, 320).rows() == 0);
  CHECK_THROWS_AS(frame_signal(x, 960, 0), UsageError);
}

TEST_CASE("framing matches a naive slicer") {
  Rng rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t len = 1 + rng.below(400);
    const std::size_t frame = 1 + rng.below(60);
    const std::size_t hop = 1 + rng.below(30);
    std::vector<double> x(len);
    for (std::size_t i = 0; i < len; ++i) x[i] = static_cast<double>(i);

    std::vector<std::vector<double>> expected;
    for (std::size_t start = 0; start + frame <= len; start += hop)
      expected.emplace_back(x.begin() + start, x.begin() + start + frame);

    const auto m = frame_signal(x, frame, hop);
    REQUIRE(m.rows() == expected.size());
    for (std::size_t r = 0; r < m.rows(); ++r) {
      CHECK(m.cols() == frame);
      for (std::size_t c = 0; c < frame; ++c) CHECK(m(r, c) == expected[r][c]);
    }
  }
}

TEST_CASE("hamming window") {
  const auto w5 = hamming_window(5);
  const double expected[] = {0.08, 0.54, 1.0, 0.54, 0.08};
  for (int i = 0; i < 5; ++i) CHECK(w5[i] == doctest::Approx(expected[i]).epsilon(1e-12));

  const auto w2 = hamming_window(2);
  CHECK(w2[0] == doctest::Approx(0.08));
  CHECK(w2[1] == doctest::Approx(0.08));

  for (std::size_t n : {3u, 64u, 400u, 960u, 1001u}) {
    const auto w = hamming_window(n);
    CHECK(w[0] == doctest::Approx(0.08));
    for (std::size_t i = 0; i < n; ++i) CHECK(w[i] == w[n - 1 - i]);
  }
  CHECK_THROWS_AS(hamming_window(1), UsageError);
  CHECK_THROWS_AS(hamming_window(WindowSpec{0}), UsageError);
}

TEST_CASE("dft magnitude hand examples") {
  auto near = [](const std::vector<double> &a, std::vector<double> b) {
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == doctest::Approx(b[i]).scale(1.0));
  };
  near(dft_magnitude(std::vector<double>{1, 1, 1, 1}, 4), {4, 0, 0});
  near(dft_magnitude(std::vector<double>{1, 0, 0, 0}, 4), {1, 1, 1});
  const std::vector<double> odd{0, 1, 0, -1};
  near(dft_magnitude(odd, 4), naive_magnitude(odd, 4));
  near(dft_magnitude(odd, 4), {0, 2, 0});

  CHECK_THROWS_AS(dft_magnitude(std::vector<double>(5, 1.0), 4), ShapeError);
  CHECK_THROWS(dft_magnitude(std::vector<double>(3, 1.0), 6));
}

TEST_CASE("dft magnitude agrees with quadratic DFT and Parseval") {
  Rng rng(3);
  for (std::size_t n_fft = 4; n_fft <= 512; n_fft *= 2) {
    for (int trial = 0; trial < 5; ++trial) {
      const auto x = random_vector(rng, 1 + rng.below(n_fft));
      const auto fast = dft_magnitude(x, n_fft);
      const auto slow = naive_magnitude(x, n_fft);
      double scale = 0;
      for (double v : slow) scale = std::max(scale, v);
      for (std::size_t k = 0; k < fast.size(); ++k)
        CHECK(std::abs(fast[k] - slow[k]) <= 1e-9 * scale);

      // two-sided energy from the one-sided magnitudes
      double spectral = fast[0] * fast[0] + fast[n_fft / 2] * fast[n_fft / 2];
      for (std::size_t k = 1; k < n_fft / 2; ++k) spectral += 2 * fast[k] * fast[k];
      double energy = 0;
      for (double v : x) energy += v * v;
      CHECK(spectral == doctest::Approx(n_fft * energy).epsilon(1e-6));
    }
  }
}

TEST_CASE("mel scale") {
  CHECK(hz_to_mel(0.0) == 0.0);
  CHECK(hz_to_mel(700.0) == doctest::Approx(2595.0 * std::log10(2.0)));
  CHECK(hz_to_mel(700.0) == doctest::Approx(781.17).epsilon(1e-4));
  for (double f : {10.0, 440.0, 4000.0, 7999.0}) CHECK(mel_to_hz(hz_to_mel(f)) == doctest::Approx(f));
}

TEST_CASE("filterbank rows are unit-peak triangles") {
  struct Case {
    std::size_t m, n_fft;
    int rate;
  };
  for (auto [m, n_fft, rate] : {Case{60, 1024, 16000}, Case{64, 512, 16000}, Case{10, 256, 8000}}) {
    const auto bank = mel_filterbank(m, n_fft, rate);
    REQUIRE(bank.weights.rows() == m);
    REQUIRE(bank.weights.cols() == n_fft / 2 + 1);
    std::size_t previous_peak = 0;
    for (std::size_t r = 0; r < m; ++r) {
      const auto row = bank.weights.row(r);
      std::size_t peak = 0;
      for (std::size_t k = 0; k < row.size(); ++k) {
        CHECK(row[k] >= 0.0);
        CHECK(row[k] <= 1.0);
        if (row[k] > row[peak]) peak = k;
      }
      CHECK(row[peak] == 1.0);
      if (r > 0) CHECK(peak > previous_peak);
      previous_peak = peak;
      // rises to the peak, falls after it: a single local maximum
      for (std::size_t k = 1; k <= peak; ++k) CHECK(row[k] >= row[k - 1]);
      for (std::size_t k = peak + 1; k < row.size(); ++k) CHECK(row[k] <= row[k - 1]);
    }
  }
  CHECK_THROWS_AS(mel_filterbank(200, 64, 16000), UsageError);
  CHECK_THROWS(mel_filterbank(10, 512, 16000, 4000, 2000));
}

TEST_CASE("apply filterbank") {
  const auto bank = mel_filterbank(20, 256, 16000);
  const std::size_t bins = 129;
  const std::vector<double> zero(bins, 0.0);
  for (double y : apply_filterbank(zero, bank)) CHECK(y == 0.0);

  for (std::size_t k : {0u, 5u, 64u, 128u}) {
    std::vector<double> hot(bins, 0.0);
    hot[k] = 1.0;
    const auto y = apply_filterbank(hot, bank);
    for (std::size_t m = 0; m < 20; ++m) CHECK(y[m] == bank.weights(m, k));
  }

  Rng rng(5);
  const auto p = random_vector(rng, bins, 0.0, 3.0);
  const auto y = apply_filterbank(p, bank);
  for (std::size_t m = 0; m < 20; ++m) {
    double acc = 0;
    for (std::size_t k = 0; k < bins; ++k) acc += bank.weights(m, k) * p[k];
    CHECK(y[m] == doctest::Approx(acc).epsilon(1e-12));
  }
  CHECK_THROWS_AS(apply_filterbank(std::vector<double>(bins - 1), bank), ShapeError);
}

TEST_CASE("log dct") {
  const auto ones = log_dct(std::vector<double>(60, 1.0), 60);
  for (double c : ones) CHECK(c == doctest::Approx(0.0).scale(1.0));

  const auto floor = log_dct(std::vector<double>(60, 0.0), 60);
  CHECK(floor[0] == doctest::Approx(-600.0));
  for (std::size_t n = 1; n < 60; ++n) CHECK(std::abs(floor[n]) < 1e-9);

  Rng rng(9);
  const std::size_t M = 24;
  const auto y = random_vector(rng, M, 0.0, 10.0);
  const auto c = log_dct(y, 13);
  REQUIRE(c.size() == 13);
  for (std::size_t n = 0; n < 13; ++n) {
    double acc = 0;
    for (std::size_t m = 0; m < M; ++m)
      acc += std::log10(std::max(y[m], kLogFloor)) *
             std::cos(static_cast<double>(n) * (m + 0.5) * std::numbers::pi / M);
    CHECK(c[n] == doctest::Approx(acc).epsilon(1e-12));
  }
  CHECK_THROWS_AS(log_dct(y, M + 1), UsageError);
}
