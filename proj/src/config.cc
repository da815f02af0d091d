#include "oneshot/config.h"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "oneshot/error.h"

namespace oneshot::io {

namespace {

enum class Kind { kString, kReal, kInteger, kFlag };

struct KeySpec {
  const char *key;
  Kind kind;
  const char *fallback;
  std::vector<std::string> choices;  // empty = free value
};

const std::vector<KeySpec> &schema() {
  static const std::vector<KeySpec> keys = {
      {"audio.sample_rate", Kind::kInteger, "16000", {}},
      {"audio.resample", Kind::kFlag, "false", {}},
      {"split.seed", Kind::kInteger, "42", {}},
      {"split.train", Kind::kReal, "0.8", {}},
      {"split.val", Kind::kReal, "0.1", {}},
      {"preprocess.participant_only", Kind::kFlag, "true", {}},
      {"preprocess.voiced_threshold", Kind::kReal, "0.1", {}},
      {"preprocess.voiced_window_ms", Kind::kReal, "25", {}},
      {"preprocess.segment_seconds", Kind::kReal, "7.6", {}},
      {"preprocess.max_segments", Kind::kInteger, "0", {}},
      {"augment.splits", Kind::kString, "train", {"train", "all", "none"}},
      {"augment.seed", Kind::kInteger, "42", {}},
      {"vggish.weights", Kind::kString, "", {}},
      {"vggish.pca", Kind::kString, "", {}},
      {"vggish.seed", Kind::kInteger, "7", {}},
      {"text.lexicon", Kind::kString, "", {}},
      {"text.synonyms", Kind::kString, "", {}},
      {"text.dim", Kind::kInteger, "300", {}},
      {"text.reduction", Kind::kString, "truncate", {"truncate", "mean_pool"}},
      {"pairing.mode", Kind::kString, "binary", {"binary", "score25"}},
      {"pairing.seed", Kind::kInteger, "42", {}},
      {"pairing.pairs_per_sample", Kind::kInteger, "8", {}},
      {"pairing.eval_pairs_per_sample", Kind::kInteger, "8", {}},
      {"model.variant", Kind::kString, "fusion", {"mfcc", "vggish", "fusion"}},
      {"model.filters", Kind::kInteger, "64", {}},
      {"model.kernel", Kind::kInteger, "3", {}},
      {"model.stride", Kind::kInteger, "1", {}},
      {"model.dropout", Kind::kReal, "0.0001", {}},
      {"model.dense_width", Kind::kInteger, "1024", {}},
      {"model.fusion_width", Kind::kInteger, "540", {}},
      {"model.seed", Kind::kInteger, "42", {}},
      {"train.batch_size", Kind::kInteger, "100", {}},
      {"train.epochs", Kind::kInteger, "300", {}},
      {"train.patience", Kind::kInteger, "10", {}},
      {"train.learning_rate", Kind::kReal, "1e-5", {}},
      {"train.decay", Kind::kReal, "1e-6", {}},
      {"train.rho", Kind::kReal, "0.9", {}},
      {"train.epsilon", Kind::kReal, "1e-8", {}},
      {"train.seed", Kind::kInteger, "42", {}},
      {"relapse.threshold", Kind::kReal, "0.5", {}},
      {"run.jobs", Kind::kInteger, "0", {}},
  };
  return keys;
}

const KeySpec &spec_for(const std::string &key) {
  for (const auto &s : schema())
    if (key == s.key) return s;
  throw UsageError("unknown configuration key '" + key + "'");
}

std::string trim(const std::string &s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

bool parse_flag(const std::string &v, bool &out) {
  if (v == "true" || v == "1" || v == "yes") return out = true, true;
  if (v == "false" || v == "0" || v == "no") return out = false, true;
  return false;
}

}  // namespace

Config::Config() {
  for (const auto &s : schema()) values_[s.key] = s.fallback;
}

void Config::set(const std::string &raw_key, const std::string &raw_value) {
  const std::string key = trim(raw_key), value = trim(raw_value);
  const KeySpec &spec = spec_for(key);
  auto bad = [&](const char *expected) {
    throw UsageError("configuration key '" + key + "': '" + value + "' is not " + expected);
  };
  switch (spec.kind) {
    case Kind::kReal:
      try {
        std::size_t used = 0;
        (void)std::stod(value, &used);
        if (used != value.size()) bad("a number");
      } catch (const std::invalid_argument &) {
        bad("a number");
      } catch (const std::out_of_range &) {
        bad("a finite number");
      }
      break;
    case Kind::kInteger:
      try {
        std::size_t used = 0;
        if (std::stoll(value, &used) < 0 || used != value.size()) bad("a non-negative integer");
      } catch (const std::logic_error &) {
        bad("a non-negative integer");
      }
      break;
    case Kind::kFlag: {
      bool ignored;
      if (!parse_flag(value, ignored)) bad("true or false");
      break;
    }
    case Kind::kString:
      if (!spec.choices.empty() &&
          std::find(spec.choices.begin(), spec.choices.end(), value) == spec.choices.end()) {
        std::string opts;
        for (const auto &c : spec.choices) opts += (opts.empty() ? "" : ", ") + c;
        throw UsageError("configuration key '" + key + "': '" + value + "' is not one of " + opts);
      }
      break;
  }
  values_[key] = value;
}

void Config::set_assignment(const std::string &assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw UsageError("expected key=value, got '" + assignment + "'");
  set(assignment.substr(0, eq), assignment.substr(eq + 1));
}

Config Config::parse(const std::string &text, const std::string &origin) {
  Config c;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    if (trim(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw UsageError(origin + ":" + std::to_string(line_no) + ": expected 'key = value'");
    try {
      c.set(line.substr(0, eq), line.substr(eq + 1));
    } catch (const UsageError &e) {
      throw UsageError(origin + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return c;
}

Config Config::load(const std::filesystem::path &path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str(), path.string());
}

const std::string &Config::str(const std::string &key) const {
  spec_for(key);
  return values_.at(key);
}

double Config::real(const std::string &key) const { return std::stod(str(key)); }

long long Config::integer(const std::string &key) const { return std::stoll(str(key)); }

std::uint64_t Config::seed(const std::string &key) const {
  return static_cast<std::uint64_t>(integer(key));
}

bool Config::flag(const std::string &key) const {
  bool out = false;
  parse_flag(str(key), out);
  return out;
}

std::string Config::dump() const { return dump({""}); }

std::string Config::dump(const std::vector<std::string> &prefixes) const {
  std::string out;
  for (const auto &[key, value] : values_)
    for (const auto &p : prefixes)
      if (key.rfind(p, 0) == 0) {
        out += key + " = " + value + "\n";
        break;
      }
  return out;
}

std::vector<std::string> Config::keys() {
  std::vector<std::string> out;
  for (const auto &s : schema()) out.emplace_back(s.key);
  return out;
}

}  // namespace oneshot::io
