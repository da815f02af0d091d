#ifndef ONESHOT_SIAMESE_H_
#define ONESHOT_SIAMESE_H_

// One-shot relapse detection with Siamese networks: pair construction,
// the MFCC / VGGish / audio-textual fusion architectures, training with
// early stopping, similarity prediction, relapse decisions and metrics.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "oneshot/matrix.h"
#include "oneshot/nn.h"
#include "oneshot/oswt.h"

namespace oneshot::siamese {

/// Features of one 7.6 s segment. Matrices a variant does not use may be
/// left empty.
struct FeatureSet {
  Matrix mfcc;    // 378 x 60 (frames x coefficients)
  Matrix vggish;  // 14 x 128
  Matrix text;    // 60 x 9
};

enum class Split { kTrain, kVal, kTest };
const char *split_name(Split split);
Split parse_split(const std::string &name);

struct Sample {
  std::string id;  // "<subject>:<provenance>:<segment>"
  FeatureSet features;
};

struct SubjectRecord {
  std::string subject_id;
  bool depressed = false;  // PHQ binary label
  int phq_score = 0;       // 0..24
  Split split = Split::kTrain;
  std::vector<Sample> samples;
};

// ---- pairing -----------------------------------------------------------

enum class PairMode { kBinary, kScore25 };
const char *pair_mode_name(PairMode mode);
PairMode parse_pair_mode(const std::string &name);

struct SampleRef {
  std::size_t subject = 0;
  std::size_t sample = 0;
  bool operator==(const SampleRef &) const = default;
};

struct PairRecord {
  SampleRef left;   // anchor: the train/val/test sample being paired
  SampleRef right;  // partner: always a train sample
  bool similar = false;
  int score_class = 0;  // |score(left) - score(right)|, 0..24
  Split split = Split::kTrain;
};

struct PairingConfig {
  PairMode mode = PairMode::kBinary;
  // Pairs anchored on each train sample; half same-class, half cross-class.
  std::size_t pairs_per_sample = 8;
  // Pairs anchored on each validation / test sample.
  std::size_t eval_pairs_per_sample = 8;
};

struct PairSets {
  std::vector<PairRecord> train, val, test;
  std::vector<std::string> warnings;
};

/// Class of a subject under `mode`: PHQ binary or PHQ score.
int pair_class(const SubjectRecord &subject, PairMode mode);

/// Train pairs come from train x train without self-pairs; validation and
/// test samples are paired only with train samples. For every anchor,
/// half the pairs share its class and half do not (classes with a single
/// train sample produce cross-class pairs only). Deterministic in `seed`.
PairSets make_pairs(const std::vector<SubjectRecord> &records, const PairingConfig &config,
                    std::uint64_t seed);

std::string pair_csv_header();
std::string pair_csv_row(const std::vector<SubjectRecord> &records, const PairRecord &pair);

// Pair with resolved feature pointers, as consumed by training/evaluation.
struct PairView {
  const FeatureSet *left = nullptr;
  const FeatureSet *right = nullptr;
  bool similar = false;
  int score_class = 0;
};

std::vector<PairView> resolve(const std::vector<SubjectRecord> &records,
                              std::span<const PairRecord> pairs);

// ---- model -------------------------------------------------------------

enum class Variant { kMfcc, kVggish, kFusion };
const char *variant_name(Variant v);
Variant parse_variant(const std::string &name);

enum class Head { kBinary, kScore };

struct ModelSpec {
  Variant variant = Variant::kMfcc;
  Head head = Head::kBinary;
  std::size_t filters = 64;
  std::size_t kernel = 3;
  std::size_t stride = 1;
  double dropout = 0.0001;
  std::size_t dense_width = 1024;
  std::size_t fusion_width = 540;
  // Input geometry (rows x cols of the stored matrices).
  std::size_t mfcc_frames = 378, mfcc_coeffs = 60;
  std::size_t vggish_rows = 14, vggish_dim = 128;
  std::size_t text_rows = 60, text_words = 9;

  std::size_t head_size() const { return head == Head::kBinary ? 2 : 25; }
  void validate() const;
};

/// Twin encoders sharing one parameter set, Euclidean distance between
/// the encodings, and a sigmoid output layer on that distance.
class SiameseModel {
 public:
  SiameseModel(const ModelSpec &spec, std::uint64_t seed);

  const ModelSpec &spec() const { return spec_; }
  const std::vector<nn::Var> &parameters() const { return params_; }

  /// Encoder output [B, dense_width].
  nn::Var encode(std::span<const FeatureSet *const> batch, bool training, Rng &rng) const;
  /// Pre-encoding vector [B, n]: the flattened branch output, or the
  /// 540-wide fused vector for the fusion variant.
  nn::Var features(std::span<const FeatureSet *const> batch, bool training, Rng &rng) const;
  /// Head outputs [B, head_size] for aligned left/right batches.
  nn::Var forward(std::span<const FeatureSet *const> left,
                  std::span<const FeatureSet *const> right, bool training, Rng &rng) const;

  io::Container to_container() const;
  static SiameseModel from_container(const io::Container &c);

 private:
  struct ConvBranch {
    nn::Conv1d first, second;
    nn::Var operator()(const nn::Var &x, double dropout, bool training, Rng &rng) const;
    std::size_t output_width(std::size_t channels, std::size_t length) const;
  };

  nn::Var mfcc_input(std::span<const FeatureSet *const> batch) const;
  nn::Var vggish_input(std::span<const FeatureSet *const> batch) const;
  nn::Var text_input(std::span<const FeatureSet *const> batch) const;

  ModelSpec spec_;
  std::optional<ConvBranch> mfcc_branch_, vggish_branch_;
  std::optional<nn::Dense> fusion_;
  nn::Dense encoder1_, encoder2_, head_;
  std::vector<nn::Var> params_;
};

/// One-hot target for a pair: {non-similar, similar} or the 25 score bins.
std::vector<double> pair_target(const PairView &pair, Head head);

// ---- training ----------------------------------------------------------

/// Stops once the monitored loss has not strictly improved on its best
/// value for `patience` consecutive epochs.
class EarlyStopping {
 public:
  explicit EarlyStopping(std::size_t patience) : patience_(patience) {}
  // Records one epoch; returns true when training should stop.
  bool update(double loss);
  std::size_t best_epoch() const { return best_epoch_; }  // 0-based
  double best_loss() const { return best_; }
  bool improved_last() const { return improved_last_; }

 private:
  std::size_t patience_;
  std::size_t epoch_ = 0;
  std::size_t best_epoch_ = 0;
  std::size_t since_best_ = 0;
  double best_ = 0.0;
  bool has_best_ = false;
  bool improved_last_ = false;
};

struct TrainConfig {
  std::size_t batch_size = 100;
  std::size_t epochs = 300;
  std::size_t patience = 10;
  nn::RmspropConfig optimizer{};
  std::uint64_t seed = 42;
  // Called after every epoch with (epoch, train loss, validation loss).
  std::function<void(std::size_t, double, double)> on_epoch;
};

struct TrainResult {
  std::vector<double> train_loss;
  std::vector<double> val_loss;  // equals train_loss when no validation pairs
  std::size_t best_epoch = 0;
  bool stopped_early = false;
  std::size_t optimizer_steps = 0;
};

/// RMSE loss against one-hot targets, RMSProp updates, early stopping on
/// validation loss. The model is left at its best-validation parameters.
/// Throws NumericError if the loss diverges.
TrainResult train(SiameseModel &model, std::span<const PairView> train_pairs,
                  std::span<const PairView> val_pairs, const TrainConfig &config,
                  nn::Rmsprop *optimizer = nullptr);

/// Mean loss over `pairs` in inference mode.
double evaluate_loss(const SiameseModel &model, std::span<const PairView> pairs,
                     std::size_t batch_size = 100);

/// Inference-mode head outputs, one row per pair.
std::vector<std::vector<double>> predict(const SiameseModel &model,
                                         std::span<const PairView> pairs,
                                         std::size_t batch_size = 100);

/// Probability that the two feature sets are similar (binary head), or the
/// output for score bin 0 (score head).
double predict_similarity(const SiameseModel &model, const FeatureSet &left,
                          const FeatureSet &right);

// ---- relapse -----------------------------------------------------------

struct RelapseDecision {
  bool relapse = false;
  double mean_similarity = 0.0;
  std::size_t pairs = 0;
};

RelapseDecision relapse_from_scores(std::span<const double> scores, double threshold = 0.5);

/// Mean similarity of every (segment, reference) pair; relapse iff the mean
/// reaches `threshold`.
RelapseDecision detect_relapse(const SiameseModel &model, std::span<const FeatureSet> segments,
                               std::span<const FeatureSet> references,
                               double threshold = 0.5);

// ---- metrics -----------------------------------------------------------

/// counts(predicted, actual).
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(std::size_t classes = 2)
      : classes_(classes), counts_(classes * classes, 0) {}

  std::size_t classes() const { return classes_; }
  void add(std::size_t predicted, std::size_t actual, std::size_t n = 1);
  std::size_t count(std::size_t predicted, std::size_t actual) const {
    return counts_[predicted * classes_ + actual];
  }
  std::size_t total() const;
  std::size_t trace() const;
  double accuracy() const;  // fraction
  double cell_percent(std::size_t predicted, std::size_t actual) const;
  // Share of the diagonal cell in its predicted row / actual column, %.
  double row_percent_correct(std::size_t predicted) const;
  double column_percent_correct(std::size_t actual) const;

 private:
  std::size_t classes_;
  std::vector<std::size_t> counts_;
};

double rmse(std::span<const double> predicted, std::span<const double> truth);
/// RMSE over score bins scaled to the 25-bin range.
inline double normalized_rmse(double rmse, double classes = 25.0) { return rmse / classes; }
/// Pearson correlation; 0 when either side has zero variance.
double pearson(std::span<const double> x, std::span<const double> y);

struct EvalReport {
  Head head = Head::kBinary;
  std::size_t pairs = 0;
  double accuracy_percent = 0.0;
  double rmse = 0.0;
  double normalized_rmse = 0.0;  // rmse / 25 for the score head
  double cc = 0.0;
  ConfusionMatrix confusion{2};
};

/// Metrics from head outputs. Binary: similar iff p(similar) >= 0.5, RMSE
/// and CC between p(similar) and the 0/1 label. Score: arg-max bin, RMSE
/// and CC between predicted and true bins.
EvalReport report_from_outputs(Head head, std::span<const std::vector<double>> outputs,
                               std::span<const PairView> pairs);
EvalReport evaluate(const SiameseModel &model, std::span<const PairView> pairs,
                    std::size_t batch_size = 100);

std::string report_json(const EvalReport &report);
/// Confusion matrix laid out as predicted rows x actual columns, each cell
/// "count (pct%)", with correct/incorrect shares in the total row/column.
std::string render_confusion(const ConfusionMatrix &cm, const std::vector<std::string> &labels);

// ---- checkpoints -------------------------------------------------------

void save_model(const std::filesystem::path &path, const SiameseModel &model,
                const nn::Rmsprop *optimizer = nullptr);
SiameseModel load_model(const std::filesystem::path &path);

}  // namespace oneshot::siamese

#endif  // ONESHOT_SIAMESE_H_
