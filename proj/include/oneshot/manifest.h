#ifndef ONESHOT_MANIFEST_H_
#define ONESHOT_MANIFEST_H_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "oneshot/siamese.h"

namespace oneshot::io {

// One corpus subject. Paths are resolved against the manifest directory.
struct ManifestEntry {
  std::string subject_id;
  std::filesystem::path audio_path;
  std::optional<std::filesystem::path> transcript_path;
  bool depressed = false;
  int phq_score = 0;
  std::optional<siamese::Split> split;  // nullopt = "auto"
  std::size_t line = 0;
};

/// CSV with header
///   subject_id,audio_path,transcript_path,phq_binary,phq_score,split
/// Throws DataError with the offending line number on malformed rows,
/// duplicate ids, out-of-range labels or missing files.
std::vector<ManifestEntry> load_manifest(const std::filesystem::path &path);
std::vector<ManifestEntry> parse_manifest(const std::string &text,
                                          const std::filesystem::path &base_dir,
                                          bool check_files = true);

struct SplitFractions {
  double train = 0.8;
  double val = 0.1;
};

/// Assigns "auto" rows by seeded shuffle: round(n*train) train,
/// round(n*val) validation, the rest test.
void assign_splits(std::vector<ManifestEntry> &entries, std::uint64_t seed,
                   SplitFractions fractions = {});

/// Fails with DataError naming the file when audio is not 16-bit mono PCM,
/// or has the wrong rate and `allow_resample` is false.
void check_audio(const std::vector<ManifestEntry> &entries, int sample_rate,
                 bool allow_resample);

}  // namespace oneshot::io

#endif  // ONESHOT_MANIFEST_H_
