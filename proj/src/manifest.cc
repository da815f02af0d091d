#include "oneshot/manifest.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "oneshot/error.h"
#include "oneshot/rng.h"
#include "oneshot/wav.h"

namespace oneshot::io {

namespace {

std::string trim(std::string s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

int parse_int(const std::string &field, const std::string &what, std::size_t line) {
  try {
    std::size_t used = 0;
    const int v = std::stoi(field, &used);
    if (used == field.size()) return v;
  } catch (const std::exception &) {
  }
  throw DataError("manifest line " + std::to_string(line) + ": " + what + " '" + field +
                  "' is not an integer");
}

const char *const kColumns[] = {"subject_id", "audio_path", "transcript_path",
                                "phq_binary", "phq_score",  "split"};

}  // namespace

std::vector<ManifestEntry> parse_manifest(const std::string &text,
                                          const std::filesystem::path &base_dir,
                                          bool check_files) {
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::size_t> column_of(6);
  bool header = false;
  std::vector<ManifestEntry> entries;
  std::set<std::string> ids;

  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty() || trim(line)[0] == '#') continue;
    std::vector<std::string> fields;
    std::string f;
    std::istringstream ls(line);
    while (std::getline(ls, f, ',')) fields.push_back(trim(f));
    if (!line.empty() && line.back() == ',') fields.emplace_back();

    if (!header) {
      for (std::size_t c = 0; c < 6; ++c) {
        const auto it = std::find(fields.begin(), fields.end(), kColumns[c]);
        if (it == fields.end())
          throw DataError("manifest line " + std::to_string(line_no) + ": header lacks column '" +
                          kColumns[c] + "'");
        column_of[c] = static_cast<std::size_t>(it - fields.begin());
      }
      header = true;
      continue;
    }
    auto field = [&](std::size_t c) -> const std::string & {
      if (column_of[c] >= fields.size())
        throw DataError("manifest line " + std::to_string(line_no) + ": missing column '" +
                        kColumns[c] + "'");
      return fields[column_of[c]];
    };

    ManifestEntry e;
    e.line = line_no;
    e.subject_id = field(0);
    if (e.subject_id.empty())
      throw DataError("manifest line " + std::to_string(line_no) + ": empty subject_id");
    if (e.subject_id.find(':') != std::string::npos)
      throw DataError("manifest line " + std::to_string(line_no) + ": subject_id may not contain ':'");
    if (!ids.insert(e.subject_id).second)
      throw DataError("manifest line " + std::to_string(line_no) + ": duplicate subject_id '" +
                      e.subject_id + "'");
    e.audio_path = base_dir / field(1);
    if (!field(2).empty()) e.transcript_path = base_dir / field(2);
    const int binary = parse_int(field(3), "phq_binary", line_no);
    if (binary != 0 && binary != 1)
      throw DataError("manifest line " + std::to_string(line_no) + ": phq_binary must be 0 or 1");
    e.depressed = binary == 1;
    e.phq_score = parse_int(field(4), "phq_score", line_no);
    if (e.phq_score < 0 || e.phq_score > 24)
      throw DataError("manifest line " + std::to_string(line_no) + ": phq_score " +
                      std::to_string(e.phq_score) + " outside 0..24");
    const std::string &split = field(5);
    if (split != "auto" && !split.empty()) {
      try {
        e.split = siamese::parse_split(split);
      } catch (const DataError &) {
        throw DataError("manifest line " + std::to_string(line_no) + ": unknown split '" + split +
                        "'");
      }
    }
    if (check_files) {
      if (!std::filesystem::exists(e.audio_path))
        throw DataError("manifest line " + std::to_string(line_no) + ": audio file " +
                        e.audio_path.string() + " not found");
      if (e.transcript_path && !std::filesystem::exists(*e.transcript_path))
        throw DataError("manifest line " + std::to_string(line_no) + ": transcript " +
                        e.transcript_path->string() + " not found");
    }
    entries.push_back(std::move(e));
  }
  if (!header) throw DataError("manifest is empty");
  if (entries.empty()) throw DataError("manifest has no subjects");
  return entries;
}

std::vector<ManifestEntry> load_manifest(const std::filesystem::path &path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open manifest " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_manifest(ss.str(), path.parent_path());
}

void assign_splits(std::vector<ManifestEntry> &entries, std::uint64_t seed,
                   SplitFractions fractions) {
  if (fractions.train < 0 || fractions.val < 0 || fractions.train + fractions.val > 1.0)
    throw UsageError("split fractions must be non-negative and sum to at most 1");
  std::vector<std::size_t> pending;
  for (std::size_t i = 0; i < entries.size(); ++i)
    if (!entries[i].split) pending.push_back(i);
  Rng rng(seed);
  rng.shuffle(pending.begin(), pending.end());
  const double n = static_cast<double>(pending.size());
  const auto n_train = static_cast<std::size_t>(std::llround(n * fractions.train));
  const auto n_val = std::min(pending.size() - n_train,
                              static_cast<std::size_t>(std::llround(n * fractions.val)));
  for (std::size_t k = 0; k < pending.size(); ++k)
    entries[pending[k]].split = k < n_train ? siamese::Split::kTrain
                                : k < n_train + n_val ? siamese::Split::kVal
                                                      : siamese::Split::kTest;
}

void check_audio(const std::vector<ManifestEntry> &entries, int sample_rate,
                 bool allow_resample) {
  for (const auto &e : entries) {
    const WavInfo info = read_wav_info(e.audio_path);
    if (info.channels != 1)
      throw DataError(e.audio_path.string() + ": expected mono audio, got " +
                      std::to_string(info.channels) + " channels");
    if (info.sample_rate != sample_rate && !allow_resample)
      throw DataError(e.audio_path.string() + ": sample rate " + std::to_string(info.sample_rate) +
                      " Hz, expected " + std::to_string(sample_rate) +
                      " Hz (pass --resample to convert)");
  }
}

}  // namespace oneshot::io
