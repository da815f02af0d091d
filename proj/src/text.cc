#include "oneshot/text.h"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <optional>
#include <sstream>

#include "oneshot/error.h"

namespace oneshot::text {

namespace {

std::vector<std::string> split(const std::string &line, char sep) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, sep)) out.push_back(field);
  return out;
}

std::string trim(std::string s) {
  auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

double parse_time(const std::string &field, const std::string &origin, std::size_t line) {
  try {
    std::size_t used = 0;
    const double v = std::stod(field, &used);
    if (trim(field.substr(used)).empty()) return v;
  } catch (const std::exception &) {
  }
  throw DataError(origin + ":" + std::to_string(line) + ": bad time value '" + field + "'");
}

}  // namespace

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  auto flush = [&] {
    // Apostrophes survive only between letters ("don't", not "'cause'").
    while (!current.empty() && current.front() == '\'') current.erase(current.begin());
    while (!current.empty() && current.back() == '\'') current.pop_back();
    if (!current.empty()) tokens.push_back(current);
    current.clear();
  };
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isspace(c)) {
      flush();
    } else if (std::isalnum(c) || c >= 0x80 || c == '\'') {
      current.push_back(static_cast<char>(std::tolower(c)));
    }
  }
  flush();
  return tokens;
}

std::vector<Utterance> parse_transcript(std::istream &in, const std::string &origin) {
  std::vector<Utterance> out;
  std::string line;
  std::size_t line_no = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    if (!header_seen) {
      header_seen = true;
      continue;
    }
    auto fields = split(line, '\t');
    if (fields.size() < 3)
      throw DataError(origin + ":" + std::to_string(line_no) +
                      ": expected 'start_time<TAB>stop_time<TAB>speaker<TAB>value'");
    Utterance u;
    u.start = parse_time(fields[0], origin, line_no);
    u.stop = parse_time(fields[1], origin, line_no);
    if (u.stop < u.start)
      throw DataError(origin + ":" + std::to_string(line_no) + ": stop time before start time");
    std::string speaker = trim(fields[2]);
    if (speaker.empty())
      throw DataError(origin + ":" + std::to_string(line_no) + ": empty speaker");
    std::transform(speaker.begin(), speaker.end(), speaker.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    u.speaker = speaker == "participant" ? Speaker::kParticipant : Speaker::kInterviewer;
    std::string value;
    for (std::size_t i = 3; i < fields.size(); ++i) value += (i > 3 ? " " : "") + fields[i];
    u.words = tokenize(value);
    out.push_back(std::move(u));
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const Utterance &a, const Utterance &b) { return a.start < b.start; });
  return out;
}

std::vector<Utterance> read_transcript(const std::filesystem::path &path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open transcript " + path.string());
  return parse_transcript(in, path.string());
}

std::vector<std::string> words_in_window(const std::vector<Utterance> &utterances,
                                         double begin, double end) {
  std::vector<std::string> words;
  for (const auto &u : utterances) {
    const bool overlaps = u.start == u.stop ? (u.start >= begin && u.start < end)
                                            : (u.start < end && u.stop > begin);
    if (overlaps) words.insert(words.end(), u.words.begin(), u.words.end());
  }
  return words;
}

std::vector<std::string> align_transcript(const std::vector<Utterance> &utterances,
                                          std::size_t segment_index,
                                          double segment_duration) {
  const double begin = segment_duration * static_cast<double>(segment_index);
  return words_in_window(utterances, begin, begin + segment_duration);
}

void Lexicon::add(const std::string &word, std::vector<float> vector) {
  if (vector.size() != dim_)
    throw ShapeError("lexicon entry '" + word + "' has " + std::to_string(vector.size()) +
                     " components, expected " + std::to_string(dim_));
  vectors_[word] = std::move(vector);
}

void Lexicon::add_synonym(const std::string &word, const std::string &synonym) {
  synonyms_[word] = synonym;
}

const std::vector<float> *Lexicon::lookup(const std::string &word) const {
  if (auto it = vectors_.find(word); it != vectors_.end()) return &it->second;
  if (auto syn = synonyms_.find(word); syn != synonyms_.end())
    if (auto it = vectors_.find(syn->second); it != vectors_.end()) return &it->second;
  return nullptr;
}

Lexicon parse_lexicon(std::istream &in, std::size_t expected_dim,
                      const std::unordered_set<std::string> *vocabulary,
                      const std::string &origin) {
  std::optional<Lexicon> lexicon;
  if (expected_dim) lexicon.emplace(expected_dim);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ss(line);
    std::string word;
    if (!(ss >> word)) continue;
    std::vector<float> values;
    std::string tok;
    while (ss >> tok) {
      try {
        values.push_back(std::stof(tok));
      } catch (const std::exception &) {
        throw DataError(origin + ":" + std::to_string(line_no) + ": bad number '" + tok + "'");
      }
    }
    if (line_no == 1 && values.size() == 1 &&
        std::all_of(word.begin(), word.end(), [](unsigned char c) { return std::isdigit(c); }))
      continue;  // "count dim" header
    if (!lexicon) lexicon.emplace(values.size());
    if (values.size() != lexicon->dim())
      throw DataError(origin + ":" + std::to_string(line_no) + ": '" + word + "' has " +
                      std::to_string(values.size()) + " components, expected " +
                      std::to_string(lexicon->dim()));
    if (vocabulary && !vocabulary->contains(word)) continue;
    lexicon->add(word, std::move(values));
  }
  return lexicon ? std::move(*lexicon) : Lexicon(expected_dim ? expected_dim : 300);
}

Lexicon load_lexicon(const std::filesystem::path &path, std::size_t expected_dim,
                     const std::unordered_set<std::string> *vocabulary) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open lexicon " + path.string());
  return parse_lexicon(in, expected_dim, vocabulary, path.string());
}

void parse_synonyms(std::istream &in, Lexicon &lexicon, const std::string &origin) {
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    const auto fields = split(line, '\t');
    if (fields.size() != 2)
      throw DataError(origin + ":" + std::to_string(line_no) + ": expected 'word<TAB>synonym'");
    lexicon.add_synonym(trim(fields[0]), trim(fields[1]));
  }
}

void load_synonyms(const std::filesystem::path &path, Lexicon &lexicon) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open synonym file " + path.string());
  parse_synonyms(in, lexicon, path.string());
}

Matrix embed_words(const std::vector<std::string> &words, const Lexicon &lexicon) {
  Matrix out(words.size(), lexicon.dim());
  for (std::size_t k = 0; k < words.size(); ++k)
    if (const auto *vec = lexicon.lookup(words[k]))
      std::copy(vec->begin(), vec->end(), out.row(k).begin());
  return out;
}

Matrix resize_text_matrix(const Matrix &embeddings, Reduction reduction) {
  Matrix out(kTextRows, kTextWords);
  const std::size_t dim = embeddings.cols();
  const std::size_t words = std::min(embeddings.rows(), kTextWords);
  for (std::size_t j = 0; j < words; ++j) {
    const auto vec = embeddings.row(j);
    if (reduction == Reduction::kTruncate || dim < kTextRows) {
      for (std::size_t i = 0; i < std::min(dim, kTextRows); ++i) out(i, j) = vec[i];
    } else {
      const std::size_t block = dim / kTextRows;
      for (std::size_t i = 0; i < kTextRows; ++i) {
        double acc = 0.0;
        for (std::size_t b = 0; b < block; ++b) acc += vec[i * block + b];
        out(i, j) = acc / static_cast<double>(block);
      }
    }
  }
  return out;
}

}  // namespace oneshot::text
