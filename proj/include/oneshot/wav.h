#ifndef ONESHOT_WAV_H_
#define ONESHOT_WAV_H_

#include <filesystem>

#include "oneshot/audio.h"

namespace oneshot::io {

struct WavInfo {
  int sample_rate = 0;
  int channels = 0;
  int bits_per_sample = 0;
  std::size_t frames = 0;
};

/// Header only. Throws DataError on anything but PCM WAV.
WavInfo read_wav_info(const std::filesystem::path &path);

/// Mono 16-bit PCM, samples scaled to [-1, 1).
audio::Signal read_wav(const std::filesystem::path &path);

/// Mono 16-bit PCM; samples are clipped to [-1, 1] and rounded.
void write_wav(const std::filesystem::path &path, const audio::Signal &signal);

}  // namespace oneshot::io

#endif  // ONESHOT_WAV_H_
