#include "oneshot/preprocess.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <string>

#include "oneshot/error.h"

namespace oneshot::preprocess {

namespace {

double rms(std::span<const double> x) {
  if (x.empty()) return 0.0;
  double acc = 0.0;
  for (double v : x) acc += v * v;
  return std::sqrt(acc / static_cast<double>(x.size()));
}

// Zero crossings on each side of the windowed-sinc kernel.
constexpr int kSincHalfWidth = 16;

double sinc_kernel(double t, double cutoff) {
  const double reach = kSincHalfWidth / cutoff;
  if (std::abs(t) >= reach) return 0.0;
  const double x = std::numbers::pi * cutoff * t;
  const double sinc = x == 0.0 ? 1.0 : std::sin(x) / x;
  // Hann taper over the support.
  const double taper = 0.5 + 0.5 * std::cos(std::numbers::pi * t / reach);
  return cutoff * sinc * taper;
}

// y[j] = band-limited x evaluated at position j*step, j < out_len.
std::vector<double> sinc_interpolate(const std::vector<double> &x, double step,
                                     std::size_t out_len, double cutoff) {
  std::vector<double> y(out_len, 0.0);
  const double reach = kSincHalfWidth / cutoff;
  const auto n = static_cast<long long>(x.size());
  for (std::size_t j = 0; j < out_len; ++j) {
    const double pos = static_cast<double>(j) * step;
    const double nearest = std::round(pos);
    if (nearest == pos) {
      // Integer positions reproduce the sample exactly when not decimating.
      if (cutoff == 1.0) {
        const auto k = static_cast<long long>(pos);
        y[j] = k < n ? x[static_cast<std::size_t>(k)] : 0.0;
        continue;
      }
    }
    const auto lo = std::max<long long>(0, static_cast<long long>(std::ceil(pos - reach)));
    const auto hi = std::min<long long>(n - 1, static_cast<long long>(std::floor(pos + reach)));
    double acc = 0.0;
    for (long long k = lo; k <= hi; ++k)
      acc += x[static_cast<std::size_t>(k)] * sinc_kernel(pos - static_cast<double>(k), cutoff);
    y[j] = acc;
  }
  return y;
}

}  // namespace

VoicedResult strip_unvoiced(const Signal &signal, double threshold,
                            double window_ms) {
  if (!(threshold >= 0.0 && threshold <= 1.0))
    throw UsageError("strip_unvoiced: threshold must be in [0,1]");
  if (!(window_ms > 0.0)) throw UsageError("strip_unvoiced: window must be positive");

  VoicedResult result;
  result.voiced.sample_rate = signal.sample_rate;
  const double global = rms(signal.samples);
  if (global == 0.0) {
    result.all_silent = true;
    return result;
  }

  const auto window = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::lround(window_ms * signal.sample_rate / 1000.0)));
  const std::span<const double> all(signal.samples);
  for (std::size_t begin = 0; begin < all.size(); begin += window) {
    const std::size_t end = std::min(all.size(), begin + window);
    if (rms(all.subspan(begin, end - begin)) < threshold * global) continue;
    if (!result.spans.empty() && result.spans.back().end == begin)
      result.spans.back().end = end;
    else
      result.spans.push_back({begin, end});
  }
  result.voiced = concat_spans(signal, result.spans);
  return result;
}

Signal concat_spans(const Signal &signal, const std::vector<Span> &spans) {
  Signal out;
  out.sample_rate = signal.sample_rate;
  std::size_t total = 0;
  for (const auto &s : spans) total += s.length();
  out.samples.reserve(total);
  for (const auto &s : spans) {
    if (s.end > signal.size() || s.begin > s.end)
      throw DataError("concat_spans: span outside signal");
    out.samples.insert(out.samples.end(), signal.samples.begin() + s.begin,
                       signal.samples.begin() + s.end);
  }
  return out;
}

std::size_t source_offset(const std::vector<Span> &spans, std::size_t offset) {
  std::size_t remaining = offset;
  for (const auto &s : spans) {
    if (remaining < s.length()) return s.begin + remaining;
    remaining -= s.length();
  }
  if (spans.empty()) return offset;
  // One past the end maps to the end of the last span.
  if (remaining == 0) return spans.back().end;
  throw DataError("source_offset: offset beyond the concatenated spans");
}

std::vector<Span> compose_spans(const std::vector<Span> &outer, const std::vector<Span> &inner) {
  std::vector<Span> out;
  auto emit = [&out](Span s) {
    if (s.length() == 0) return;
    if (!out.empty() && out.back().end == s.begin)
      out.back().end = s.end;
    else
      out.push_back(s);
  };
  std::size_t base = 0;  // concatenated offset of outer[k].begin
  std::size_t k = 0;
  for (const auto &in : inner) {
    while (k < outer.size() && base + outer[k].length() <= in.begin) base += outer[k++].length();
    std::size_t pos = in.begin, kk = k, kbase = base;
    while (pos < in.end) {
      if (kk >= outer.size()) throw DataError("compose_spans: inner span beyond outer spans");
      const std::size_t stop = std::min(in.end, kbase + outer[kk].length());
      emit({outer[kk].begin + (pos - kbase), outer[kk].begin + (stop - kbase)});
      pos = stop;
      if (pos == kbase + outer[kk].length()) kbase += outer[kk++].length();
    }
  }
  return out;
}

std::string Provenance::tag() const {
  char buf[32];
  switch (kind) {
    case Transform::kOriginal:
      return "orig";
    case Transform::kNoise:
      std::snprintf(buf, sizeof buf, "noise%g", amount);
      return buf;
    case Transform::kPitch:
      std::snprintf(buf, sizeof buf, "pitch%g", amount);
      return buf;
  }
  return "orig";
}

Provenance Provenance::parse(const std::string &tag) {
  auto number = [&](std::size_t prefix) {
    try {
      std::size_t used = 0;
      const double v = std::stod(tag.substr(prefix), &used);
      if (used != tag.size() - prefix) throw std::invalid_argument(tag);
      return v;
    } catch (const std::exception &) {
      throw DataError("invalid provenance tag '" + tag + "'");
    }
  };
  if (tag == "orig") return {};
  if (tag.rfind("noise", 0) == 0) return {Transform::kNoise, number(5)};
  if (tag.rfind("pitch", 0) == 0) return {Transform::kPitch, number(5)};
  throw DataError("invalid provenance tag '" + tag + "'");
}

std::size_t segment_length_samples(int sample_rate, double duration) {
  if (!(duration > 0.0)) throw UsageError("segment duration must be positive");
  return static_cast<std::size_t>(std::llround(duration * sample_rate));
}

SegmentSet segment(const Signal &signal, double duration) {
  SegmentSet set;
  set.segment_length = segment_length_samples(signal.sample_rate, duration);
  const std::size_t count = signal.size() / set.segment_length;
  set.too_short = count == 0;
  set.segments.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    Segment seg;
    seg.index = i;
    seg.signal.sample_rate = signal.sample_rate;
    const auto first = signal.samples.begin() + static_cast<std::ptrdiff_t>(i * set.segment_length);
    seg.signal.samples.assign(first, first + static_cast<std::ptrdiff_t>(set.segment_length));
    set.segments.push_back(std::move(seg));
  }
  return set;
}

Signal inject_noise(const Signal &signal, double alpha, Rng &rng) {
  Signal out = signal;
  for (double &x : out.samples) x -= alpha * rng.uniform();
  return out;
}

Signal resample(const Signal &signal, int target_rate) {
  if (target_rate <= 0) throw UsageError("resample: target rate must be positive");
  if (target_rate == signal.sample_rate) return signal;
  const double ratio = static_cast<double>(target_rate) / signal.sample_rate;
  const auto out_len = static_cast<std::size_t>(
      std::floor(static_cast<double>(signal.size()) * ratio));
  Signal out;
  out.sample_rate = target_rate;
  out.samples = sinc_interpolate(signal.samples, 1.0 / ratio, out_len,
                                 std::min(1.0, ratio));
  return out;
}

Signal lower_pitch(const Signal &signal, double semitones) {
  if (!(std::abs(semitones) <= 12.0))
    throw UsageError("lower_pitch: |semitones| must be <= 12");
  const double step = std::pow(2.0, -semitones / 12.0);
  Signal out;
  out.sample_rate = signal.sample_rate;
  out.samples = sinc_interpolate(signal.samples, step, signal.size(),
                                 std::min(1.0, 1.0 / step));
  return out;
}

SegmentSet augment_corpus(const SegmentSet &set, std::uint64_t seed) {
  if (set.segments.empty()) throw DataError("augment_corpus: empty segment set");
  SegmentSet out;
  out.segment_length = set.segment_length;
  out.segments.reserve(set.segments.size() * 7);
  for (const auto &seg : set.segments) {
    out.segments.push_back(seg);
    std::uint64_t stream = 0;
    for (double alpha : kNoiseAlphas) {
      Rng rng(mix_seed(seed, seg.index * 8 + stream++));
      out.segments.push_back(
          {inject_noise(seg.signal, alpha, rng), seg.index, {Transform::kNoise, alpha}});
    }
    for (double semis : kPitchSemitonesDown)
      out.segments.push_back(
          {lower_pitch(seg.signal, semis), seg.index, {Transform::kPitch, semis}});
  }
  return out;
}

}  // namespace oneshot::preprocess
