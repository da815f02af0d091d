#include "oneshot/wav.h"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <vector>

#include "oneshot/error.h"

namespace oneshot::io {

namespace {

std::uint32_t le32(const unsigned char *p) {
  return p[0] | (p[1] << 8) | (p[2] << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}
std::uint16_t le16(const unsigned char *p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

struct Parsed {
  WavInfo info;
  std::streamoff data_offset = 0;
};

Parsed parse_header(std::ifstream &in, const std::filesystem::path &path) {
  auto fail = [&](const std::string &why) -> void {
    throw DataError(path.string() + ": " + why);
  };
  unsigned char riff[12];
  if (!in.read(reinterpret_cast<char *>(riff), 12) ||
      std::string(reinterpret_cast<char *>(riff), 4) != "RIFF" ||
      std::string(reinterpret_cast<char *>(riff) + 8, 4) != "WAVE")
    fail("not a RIFF/WAVE file");

  Parsed out;
  bool have_fmt = false;
  unsigned char chunk[8];
  while (in.read(reinterpret_cast<char *>(chunk), 8)) {
    const std::string id(reinterpret_cast<char *>(chunk), 4);
    const std::uint32_t size = le32(chunk + 4);
    if (id == "fmt ") {
      std::vector<unsigned char> fmt(size);
      if (size < 16 || !in.read(reinterpret_cast<char *>(fmt.data()), size))
        fail("truncated fmt chunk");
      const std::uint16_t format = le16(fmt.data());
      out.info.channels = le16(fmt.data() + 2);
      out.info.sample_rate = static_cast<int>(le32(fmt.data() + 4));
      out.info.bits_per_sample = le16(fmt.data() + 14);
      // WAVE_FORMAT_EXTENSIBLE carries the real format in its sub-GUID.
      const bool pcm = format == 1 || (format == 0xFFFE && size >= 26 && le16(fmt.data() + 24) == 1);
      if (!pcm) fail("only PCM WAV is supported (format tag " + std::to_string(format) + ")");
      have_fmt = true;
      if (size % 2) in.ignore(1);
    } else if (id == "data") {
      if (!have_fmt) fail("data chunk before fmt chunk");
      if (out.info.bits_per_sample != 16)
        fail("only 16-bit PCM is supported, got " + std::to_string(out.info.bits_per_sample) + "-bit");
      const std::size_t frame_bytes = static_cast<std::size_t>(out.info.channels) * 2;
      if (frame_bytes == 0) fail("zero channels");
      out.info.frames = size / frame_bytes;
      out.data_offset = in.tellg();
      return out;
    } else {
      in.ignore(size + (size % 2));
    }
  }
  fail("no data chunk");
  return out;
}

}  // namespace

WavInfo read_wav_info(const std::filesystem::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return parse_header(in, path).info;
}

audio::Signal read_wav(const std::filesystem::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  const Parsed parsed = parse_header(in, path);
  if (parsed.info.channels != 1)
    throw DataError(path.string() + ": expected mono audio, got " +
                    std::to_string(parsed.info.channels) + " channels");

  std::vector<unsigned char> raw(parsed.info.frames * 2);
  in.read(reinterpret_cast<char *>(raw.data()), static_cast<std::streamsize>(raw.size()));
  const auto got = static_cast<std::size_t>(in.gcount()) / 2;

  audio::Signal s;
  s.sample_rate = parsed.info.sample_rate;
  s.samples.resize(got);
  for (std::size_t i = 0; i < got; ++i)
    s.samples[i] = static_cast<std::int16_t>(le16(raw.data() + 2 * i)) / 32768.0;
  return s;
}

void write_wav(const std::filesystem::path &path, const audio::Signal &signal) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());

  auto put32 = [&](std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.put(static_cast<char>((v >> (8 * i)) & 0xFF));
  };
  auto put16 = [&](std::uint16_t v) {
    out.put(static_cast<char>(v & 0xFF));
    out.put(static_cast<char>(v >> 8));
  };
  const auto data_bytes = static_cast<std::uint32_t>(signal.size() * 2);
  out.write("RIFF", 4);
  put32(36 + data_bytes);
  out.write("WAVEfmt ", 8);
  put32(16);
  put16(1);
  put16(1);
  put32(static_cast<std::uint32_t>(signal.sample_rate));
  put32(static_cast<std::uint32_t>(signal.sample_rate) * 2);
  put16(2);
  put16(16);
  out.write("data", 4);
  put32(data_bytes);
  for (double x : signal.samples) {
    const double scaled = std::round(std::clamp(x, -1.0, 1.0) * 32767.0);
    put16(static_cast<std::uint16_t>(static_cast<std::int16_t>(scaled)));
  }
  if (!out) throw DataError("write failed for " + path.string());
}

}  // namespace oneshot::io
