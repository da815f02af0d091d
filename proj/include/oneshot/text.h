#ifndef ONESHOT_TEXT_H_
#define ONESHOT_TEXT_H_

// Transcript alignment and word-embedding features: every 7.6 s segment
// becomes a 60 x 9 matrix built from the words both speakers said in it.

#include <cstddef>
#include <filesystem>
#include <istream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "oneshot/matrix.h"

namespace oneshot::text {

inline constexpr std::size_t kTextRows = 60;
inline constexpr std::size_t kTextWords = 9;

enum class Speaker { kParticipant, kInterviewer };

struct Utterance {
  double start = 0.0;
  double stop = 0.0;
  Speaker speaker = Speaker::kParticipant;
  std::vector<std::string> words;
};

/// Lower-cases, splits on whitespace and strips punctuation other than
/// in-word apostrophes. Empty tokens are dropped.
std::vector<std::string> tokenize(std::string_view text);

/// Tab-separated "start_time stop_time speaker value" with a header row.
/// Speaker "participant" (any case) is the subject; anything else is the
/// interviewer. Rows are returned sorted by start time.
std::vector<Utterance> parse_transcript(std::istream &in, const std::string &origin = "<stream>");
std::vector<Utterance> read_transcript(const std::filesystem::path &path);

/// Words of every utterance overlapping [begin, end), both speakers, in
/// transcript order.
std::vector<std::string> words_in_window(const std::vector<Utterance> &utterances,
                                         double begin, double end);
/// Window [duration*i, duration*(i+1)).
std::vector<std::string> align_transcript(const std::vector<Utterance> &utterances,
                                          std::size_t segment_index,
                                          double segment_duration = 7.6);

/// Word vectors plus a synonym fallback table.
class Lexicon {
 public:
  explicit Lexicon(std::size_t dim = 300) : dim_(dim) {}

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return vectors_.size(); }

  void add(const std::string &word, std::vector<float> vector);
  void add_synonym(const std::string &word, const std::string &synonym);

  // Direct hit, else the synonym's vector, else nullptr.
  const std::vector<float> *lookup(const std::string &word) const;

 private:
  std::size_t dim_;
  std::unordered_map<std::string, std::vector<float>> vectors_;
  std::unordered_map<std::string, std::string> synonyms_;
};

/// fastText text format: "word v1 ... vD" per line; an optional
/// "count dim" header line is skipped. With `vocabulary`, only those words
/// are kept. `expected_dim` 0 infers the dimension from the first entry.
Lexicon load_lexicon(const std::filesystem::path &path, std::size_t expected_dim = 300,
                     const std::unordered_set<std::string> *vocabulary = nullptr);
Lexicon parse_lexicon(std::istream &in, std::size_t expected_dim = 300,
                      const std::unordered_set<std::string> *vocabulary = nullptr,
                      const std::string &origin = "<stream>");

/// "word<TAB>synonym" lines.
void load_synonyms(const std::filesystem::path &path, Lexicon &lexicon);
void parse_synonyms(std::istream &in, Lexicon &lexicon, const std::string &origin = "<stream>");

/// nw x dim; unknown words without a known synonym give zero rows.
Matrix embed_words(const std::vector<std::string> &words, const Lexicon &lexicon);

enum class Reduction {
  kTruncate,  // first 60 components of each vector
  kMeanPool,  // mean of consecutive blocks of dim/60 components
};

/// 60 x 9: column j holds word j reduced to 60 values; words past the ninth
/// are dropped, missing words are zero columns.
Matrix resize_text_matrix(const Matrix &embeddings, Reduction reduction = Reduction::kTruncate);

}  // namespace oneshot::text

#endif  // ONESHOT_TEXT_H_
