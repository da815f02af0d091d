#ifndef ONESHOT_PIPELINE_H_
#define ONESHOT_PIPELINE_H_

// Stage orchestration over an output directory:
//
//   segments/<subject>.json          kept audio spans and segment count
//   features/<subject>.<variant>.oswt  per-segment feature matrices
//   pairs.csv
//   model.oswt, loss_history.csv
//   report.json, confusion.txt
//
// Every cached artifact has a "<file>.key" sidecar holding a hash of the
// inputs and settings it was built from; a stage whose key matches is
// skipped.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "oneshot/audio.h"
#include "oneshot/config.h"
#include "oneshot/manifest.h"
#include "oneshot/preprocess.h"
#include "oneshot/siamese.h"
#include "oneshot/text.h"
#include "oneshot/vggish.h"

namespace oneshot::pipeline {

std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ULL);
std::string hex64(std::uint64_t v);

struct Context {
  io::Config config;
  std::filesystem::path manifest;
  std::filesystem::path out_dir;
  std::ostream *log = nullptr;  // progress lines; null = quiet
};

// ---- preprocess --------------------------------------------------------

struct SegmentPlan {
  std::string subject_id;
  int sample_rate = 16000;
  std::vector<preprocess::Span> spans;  // kept samples, source coordinates
  std::size_t segment_length = 0;
  std::size_t segments = 0;  // original segments after the max_segments cap
};

/// Participant turns (when a transcript is given and enabled), then the
/// voiced-energy gate. Works on an already loaded recording.
SegmentPlan plan_segments(const std::string &subject_id, const audio::Signal &signal,
                          const std::vector<text::Utterance> *utterances,
                          const io::Config &config);

std::string plan_json(const SegmentPlan &plan);
SegmentPlan parse_plan(const std::string &json, const std::string &origin);

// ---- features ----------------------------------------------------------

/// Feature extractors configured once per run.
struct Extractor {
  siamese::Variant variant = siamese::Variant::kFusion;
  vggish::EmbeddingWeights vggish_weights;
  vggish::PcaParams pca;
  text::Lexicon lexicon;
  text::Reduction reduction = text::Reduction::kTruncate;

  static Extractor from_config(const io::Config &config);
  bool needs_mfcc() const { return variant != siamese::Variant::kVggish; }
  bool needs_vggish() const { return variant != siamese::Variant::kMfcc; }
  bool needs_text() const { return variant == siamese::Variant::kFusion; }

  siamese::FeatureSet extract(const audio::Signal &segment,
                              const std::vector<std::string> &words) const;
};

/// Words spoken during samples [begin, end) of the kept audio.
std::vector<std::string> segment_words(const std::vector<text::Utterance> &utterances,
                                       const SegmentPlan &plan, std::size_t begin,
                                       std::size_t end);

/// Extracts every segment (and, when `augment`, its six variants) of one
/// recording into a container with entries "<provenance>:<index>:<kind>".
io::Container extract_recording(const audio::Signal &signal,
                                 const std::vector<text::Utterance> *utterances,
                                 const SegmentPlan &plan, bool augment,
                                 std::uint64_t augment_seed, const Extractor &extractor);

std::string feature_entry(const preprocess::Provenance &p, std::size_t index,
                          const std::string &kind);

/// Samples of one subject's feature container, ordered by provenance then
/// segment index.
std::vector<siamese::Sample> samples_from_container(const std::string &subject_id,
                                                    const io::Container &c);

// ---- stages ------------------------------------------------------------

struct Corpus {
  std::vector<io::ManifestEntry> entries;
  std::vector<SegmentPlan> plans;
  std::vector<siamese::SubjectRecord> records;
};

std::vector<io::ManifestEntry> ingest(const Context &ctx);
std::vector<SegmentPlan> run_preprocess(const Context &ctx,
                                        const std::vector<io::ManifestEntry> &entries);
/// Writes (or reuses) feature caches and returns subject records with
/// their samples loaded.
std::vector<siamese::SubjectRecord> run_extract(const Context &ctx,
                                                const std::vector<io::ManifestEntry> &entries,
                                                const std::vector<SegmentPlan> &plans);
siamese::PairSets run_pair(const Context &ctx,
                           const std::vector<siamese::SubjectRecord> &records);
siamese::SiameseModel run_train(const Context &ctx,
                                const std::vector<siamese::SubjectRecord> &records,
                                const siamese::PairSets &pairs);
siamese::EvalReport run_eval(const Context &ctx, const siamese::SiameseModel &model,
                             const std::vector<siamese::SubjectRecord> &records,
                             const siamese::PairSets &pairs);

/// ingest -> preprocess -> extract -> pair -> train -> eval.
siamese::EvalReport run_pipeline(const Context &ctx);

// Stage prefix for errors raised inside a stage; keeps the error's code.
[[noreturn]] void rethrow_in_stage(const std::string &stage);

siamese::ModelSpec model_spec(const io::Config &config);
siamese::TrainConfig train_config(const io::Config &config);

// ---- relapse -----------------------------------------------------------

struct Recording {
  std::filesystem::path audio;
  std::optional<std::filesystem::path> transcript;
};

/// Original (unaugmented) segments of one recording.
std::vector<siamese::FeatureSet> recording_features(const Recording &recording,
                                                    const io::Config &config,
                                                    const Extractor &extractor);

siamese::RelapseDecision predict_relapse(const siamese::SiameseModel &model,
                                         const Recording &subject,
                                         const std::vector<Recording> &references,
                                         const io::Config &config);

}  // namespace oneshot::pipeline

#endif  // ONESHOT_PIPELINE_H_
