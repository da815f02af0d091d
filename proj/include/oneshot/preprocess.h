#ifndef ONESHOT_PREPROCESS_H_
#define ONESHOT_PREPROCESS_H_

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "oneshot/audio.h"
#include "oneshot/rng.h"

namespace oneshot::preprocess {

using audio::Signal;

inline constexpr double kSegmentSeconds = 7.6;
inline constexpr double kNoiseAlphas[] = {0.01, 0.02, 0.03};
inline constexpr double kPitchSemitonesDown[] = {0.5, 2.0, 2.5};

// Half-open sample range [begin, end) in some source signal.
struct Span {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::size_t length() const { return end - begin; }
  bool operator==(const Span &) const = default;
};

struct VoicedResult {
  Signal voiced;
  std::vector<Span> spans;  // kept windows in source coordinates, merged
  bool all_silent = false;  // input had zero energy; `voiced` is empty
};

/// Short-time RMS energy gate. Keeps every window (last one may be partial)
/// whose RMS is >= threshold * global RMS, concatenated in order.
VoicedResult strip_unvoiced(const Signal &signal, double threshold = 0.1,
                            double window_ms = 25.0);

/// Copies the given source spans of `signal` back to back.
Signal concat_spans(const Signal &signal, const std::vector<Span> &spans);

/// Maps a sample offset inside concat_spans(signal, spans) back to its
/// position in the source signal.
std::size_t source_offset(const std::vector<Span> &spans, std::size_t offset);

/// `inner` spans index into concat_spans(x, outer); returns the same
/// samples as spans of x, split where they cross an outer boundary.
std::vector<Span> compose_spans(const std::vector<Span> &outer, const std::vector<Span> &inner);

enum class Transform { kOriginal, kNoise, kPitch };

struct Provenance {
  Transform kind = Transform::kOriginal;
  double amount = 0.0;  // alpha for noise, semitones lowered for pitch

  // "orig", "noise0.02", "pitch2.5"
  std::string tag() const;
  static Provenance parse(const std::string &tag);
  bool operator==(const Provenance &) const = default;
};

struct Segment {
  Signal signal;
  std::size_t index = 0;  // position among the segments of one recording
  Provenance provenance;
};

// Equal-length segments of one recording, possibly with augmented variants.
struct SegmentSet {
  std::vector<Segment> segments;
  std::size_t segment_length = 0;
  bool too_short = false;  // input shorter than one segment
};

std::size_t segment_length_samples(int sample_rate, double duration = kSegmentSeconds);

/// Non-overlapping consecutive segments of round(duration*rate) samples;
/// the trailing remainder is dropped.
SegmentSet segment(const Signal &signal, double duration = kSegmentSeconds);

/// x_N[i] = x[i] - alpha * u[i], u[i] ~ U[0,1) drawn from `rng` in order.
Signal inject_noise(const Signal &signal, double alpha, Rng &rng);

/// Band-limited (windowed-sinc) resampling to `target_rate`.
Signal resample(const Signal &signal, int target_rate);

/// Lowers pitch by `semitones` (negative raises it): the signal is
/// resampled by 2^(-semitones/12) and truncated or zero-extended back to
/// its original length. |semitones| <= 12.
Signal lower_pitch(const Signal &signal, double semitones);

/// Emits, per segment, the original plus three noise variants and three
/// lowered-pitch variants. Noise draws come from a per-segment stream
/// derived from `seed` and the segment index.
SegmentSet augment_corpus(const SegmentSet &set, std::uint64_t seed);

}  // namespace oneshot::preprocess

#endif  // ONESHOT_PREPROCESS_H_
