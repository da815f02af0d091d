#include "oneshot/siamese.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <sstream>

#include "oneshot/error.h"
#include "oneshot/rng.h"

namespace oneshot::siamese {

const char *split_name(Split split) {
  switch (split) {
    case Split::kTrain: return "train";
    case Split::kVal: return "val";
    case Split::kTest: return "test";
  }
  return "train";
}

Split parse_split(const std::string &name) {
  if (name == "train") return Split::kTrain;
  if (name == "val") return Split::kVal;
  if (name == "test") return Split::kTest;
  throw DataError("unknown split '" + name + "' (expected train, val or test)");
}

const char *pair_mode_name(PairMode mode) {
  return mode == PairMode::kBinary ? "binary" : "score25";
}

PairMode parse_pair_mode(const std::string &name) {
  if (name == "binary") return PairMode::kBinary;
  if (name == "score25") return PairMode::kScore25;
  throw UsageError("unknown pairing mode '" + name + "' (expected binary or score25)");
}

const char *variant_name(Variant v) {
  switch (v) {
    case Variant::kMfcc: return "mfcc";
    case Variant::kVggish: return "vggish";
    case Variant::kFusion: return "fusion";
  }
  return "mfcc";
}

Variant parse_variant(const std::string &name) {
  if (name == "mfcc") return Variant::kMfcc;
  if (name == "vggish") return Variant::kVggish;
  if (name == "fusion") return Variant::kFusion;
  throw UsageError("unknown model variant '" + name + "' (expected mfcc, vggish or fusion)");
}

// ---- pairing -----------------------------------------------------------

int pair_class(const SubjectRecord &subject, PairMode mode) {
  return mode == PairMode::kBinary ? (subject.depressed ? 1 : 0) : subject.phq_score;
}

namespace {

struct Pool {
  std::vector<SampleRef> all;
  std::map<int, std::vector<std::size_t>> by_class;  // indices into `all`
  std::vector<std::size_t> class_position;           // of all[i] in its class list
};

Pool train_pool(const std::vector<SubjectRecord> &records, PairMode mode) {
  Pool pool;
  for (std::size_t s = 0; s < records.size(); ++s) {
    if (records[s].split != Split::kTrain) continue;
    for (std::size_t i = 0; i < records[s].samples.size(); ++i) {
      auto &members = pool.by_class[pair_class(records[s], mode)];
      pool.class_position.push_back(members.size());
      members.push_back(pool.all.size());
      pool.all.push_back({s, i});
    }
  }
  return pool;
}

PairRecord make_record(const std::vector<SubjectRecord> &records, SampleRef left,
                       SampleRef right, PairMode mode, Split split) {
  const auto &l = records[left.subject];
  const auto &r = records[right.subject];
  return {left, right, pair_class(l, mode) == pair_class(r, mode),
          std::abs(l.phq_score - r.phq_score), split};
}

}  // namespace

PairSets make_pairs(const std::vector<SubjectRecord> &records, const PairingConfig &config,
                    std::uint64_t seed) {
  for (const auto &r : records)
    if (r.phq_score < 0 || r.phq_score > 24)
      throw DataError("subject " + r.subject_id + " has PHQ score " +
                      std::to_string(r.phq_score) + " outside 0..24");

  PairSets out;
  const Pool pool = train_pool(records, config.mode);
  Rng rng(seed);

  // Train samples of other classes, per class.
  std::map<int, std::vector<std::size_t>> others;
  for (const auto &[cls, members] : pool.by_class) {
    auto &o = others[cls];
    for (const auto &[other_cls, other_members] : pool.by_class)
      if (other_cls != cls) o.insert(o.end(), other_members.begin(), other_members.end());
  }
  // Classes absent from the train pool pair against every train sample.
  std::vector<std::size_t> everyone(pool.all.size());
  std::iota(everyone.begin(), everyone.end(), std::size_t{0});
  for (const auto &[cls, members] : pool.by_class)
    if (members.size() < 2)
      out.warnings.push_back("class " + std::to_string(cls) +
                             " has fewer than 2 train samples; it yields cross-class pairs only");

  // `count` pairs for one anchor: half same-class (rounded by `parity`),
  // half cross-class. `exclude` is the anchor's own pool index, if any.
  auto pair_anchor = [&](SampleRef anchor, int cls, std::size_t count, std::size_t parity,
                         std::optional<std::size_t> exclude, Split split,
                         std::vector<PairRecord> &dest) {
    static const std::vector<std::size_t> kNone;
    const auto same_it = pool.by_class.find(cls);
    const auto &same = same_it == pool.by_class.end() ? kNone : same_it->second;
    const auto other_it = others.find(cls);
    const auto &cross = other_it == others.end() ? everyone : other_it->second;
    // Same-class candidates, excluding the anchor itself.
    const std::size_t same_avail = same.size() - (exclude ? 1 : 0);

    std::size_t n_same = count / 2 + (count % 2 == 1 && parity % 2 == 0 ? 1 : 0);
    std::size_t n_cross = count - n_same;
    if (same_avail == 0 || (split == Split::kTrain && same.size() < 2)) {
      n_same = 0;
      n_cross = count;
    }
    if (cross.empty()) n_cross = 0;

    for (std::size_t j = 0; j < n_same; ++j) {
      std::size_t pick = static_cast<std::size_t>(rng.below(same_avail));
      // Skip over the anchor's own slot.
      if (exclude && pick >= pool.class_position[*exclude]) ++pick;
      dest.push_back(make_record(records, anchor, pool.all[same[pick]], config.mode, split));
    }
    for (std::size_t j = 0; j < n_cross; ++j) {
      const std::size_t pick = static_cast<std::size_t>(rng.below(cross.size()));
      dest.push_back(make_record(records, anchor, pool.all[cross[pick]], config.mode, split));
    }
  };

  std::map<int, std::size_t> seen_per_class;
  for (std::size_t i = 0; i < pool.all.size(); ++i) {
    const SampleRef anchor = pool.all[i];
    const int cls = pair_class(records[anchor.subject], config.mode);
    pair_anchor(anchor, cls, config.pairs_per_sample, seen_per_class[cls]++, i, Split::kTrain,
                out.train);
  }

  std::map<int, std::size_t> eval_seen;
  for (std::size_t s = 0; s < records.size(); ++s) {
    const Split split = records[s].split;
    if (split == Split::kTrain) continue;
    const int cls = pair_class(records[s], config.mode);
    for (std::size_t i = 0; i < records[s].samples.size(); ++i)
      pair_anchor({s, i}, cls, config.eval_pairs_per_sample, eval_seen[cls]++, std::nullopt,
                  split, split == Split::kVal ? out.val : out.test);
  }
  return out;
}

std::string pair_csv_header() { return "left_id,right_id,label_binary,label_score,split"; }

std::string pair_csv_row(const std::vector<SubjectRecord> &records, const PairRecord &pair) {
  const auto &l = records.at(pair.left.subject).samples.at(pair.left.sample);
  const auto &r = records.at(pair.right.subject).samples.at(pair.right.sample);
  return l.id + "," + r.id + "," + (pair.similar ? "1" : "0") + "," +
         std::to_string(pair.score_class) + "," + split_name(pair.split);
}

std::vector<PairView> resolve(const std::vector<SubjectRecord> &records,
                              std::span<const PairRecord> pairs) {
  std::vector<PairView> views;
  views.reserve(pairs.size());
  for (const auto &p : pairs)
    views.push_back({&records.at(p.left.subject).samples.at(p.left.sample).features,
                     &records.at(p.right.subject).samples.at(p.right.sample).features,
                     p.similar, p.score_class});
  return views;
}

// ---- model -------------------------------------------------------------

void ModelSpec::validate() const {
  if (filters == 0 || kernel == 0 || stride == 0 || dense_width == 0)
    throw UsageError("model spec: filters, kernel, stride and dense width must be >= 1");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw UsageError("model spec: dropout must be in [0,1)");
  if (variant == Variant::kFusion && fusion_width == 0)
    throw UsageError("model spec: fusion width must be >= 1");
  auto conv_ok = [&](std::size_t length) {
    if (length < kernel) return false;
    const std::size_t first = (length - kernel) / stride + 1;
    return first >= kernel;
  };
  if ((variant != Variant::kVggish && !conv_ok(mfcc_frames)) ||
      (variant != Variant::kMfcc && !conv_ok(vggish_rows)))
    throw UsageError("model spec: input too short for two convolution blocks");
}

nn::Var SiameseModel::ConvBranch::operator()(const nn::Var &x, double dropout, bool training,
                                             Rng &rng) const {
  nn::Var h = nn::relu(first(x));
  h = nn::relu(second(h));
  h = nn::dropout(h, dropout, rng, training);
  return nn::flatten(h);
}

std::size_t SiameseModel::ConvBranch::output_width(std::size_t, std::size_t length) const {
  return second.weight->value.dim(0) * second.output_length(first.output_length(length));
}

SiameseModel::SiameseModel(const ModelSpec &spec, std::uint64_t seed) : spec_(spec) {
  spec_.validate();
  Rng rng(seed);
  auto branch = [&](std::size_t channels, const std::string &name) {
    ConvBranch b{nn::Conv1d::create(channels, spec_.filters, spec_.kernel, spec_.stride, rng,
                                    name + ".conv1"),
                 nn::Conv1d::create(spec_.filters, spec_.filters, spec_.kernel, spec_.stride,
                                    rng, name + ".conv2")};
    params_.insert(params_.end(),
                   {b.first.weight, b.first.bias, b.second.weight, b.second.bias});
    return b;
  };

  std::size_t width = 0;
  if (spec_.variant != Variant::kVggish) {
    mfcc_branch_ = branch(spec_.mfcc_coeffs, "mfcc");
    width += mfcc_branch_->output_width(spec_.mfcc_coeffs, spec_.mfcc_frames);
  }
  if (spec_.variant != Variant::kMfcc) {
    vggish_branch_ = branch(spec_.vggish_dim, "vggish");
    width += vggish_branch_->output_width(spec_.vggish_dim, spec_.vggish_rows);
  }
  if (spec_.variant == Variant::kFusion) {
    width += spec_.text_rows * spec_.text_words;
    fusion_ = nn::Dense::create(width, spec_.fusion_width, rng, "fusion");
    params_.insert(params_.end(), {fusion_->weight, fusion_->bias});
    width = spec_.fusion_width;
  }
  encoder1_ = nn::Dense::create(width, spec_.dense_width, rng, "encoder1");
  encoder2_ = nn::Dense::create(spec_.dense_width, spec_.dense_width, rng, "encoder2");
  head_ = nn::Dense::create(1, spec_.head_size(), rng, "head");
  params_.insert(params_.end(), {encoder1_.weight, encoder1_.bias, encoder2_.weight,
                                 encoder2_.bias, head_.weight, head_.bias});
}

namespace {

// Stacks `pick(fs)` (rows x cols) of every batch member as [B, cols, rows]
// (feature axis as channels, time as length).
template <typename Pick>
nn::Var channels_first(std::span<const FeatureSet *const> batch, std::size_t rows,
                       std::size_t cols, Pick pick, const char *what) {
  nn::Tensor t({batch.size(), cols, rows});
  for (std::size_t n = 0; n < batch.size(); ++n) {
    const Matrix &m = pick(*batch[n]);
    if (m.rows() != rows || m.cols() != cols)
      throw ShapeError(std::string(what) + " features are " + std::to_string(m.rows()) + "x" +
                       std::to_string(m.cols()) + ", model expects " + std::to_string(rows) +
                       "x" + std::to_string(cols));
    double *dst = t.data().data() + n * rows * cols;
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < cols; ++c) dst[c * rows + r] = m(r, c);
  }
  return nn::constant(std::move(t));
}

}  // namespace

nn::Var SiameseModel::mfcc_input(std::span<const FeatureSet *const> batch) const {
  return channels_first(batch, spec_.mfcc_frames, spec_.mfcc_coeffs,
                        [](const FeatureSet &f) -> const Matrix & { return f.mfcc; }, "MFCC");
}

nn::Var SiameseModel::vggish_input(std::span<const FeatureSet *const> batch) const {
  return channels_first(batch, spec_.vggish_rows, spec_.vggish_dim,
                        [](const FeatureSet &f) -> const Matrix & { return f.vggish; },
                        "VGGish");
}

nn::Var SiameseModel::text_input(std::span<const FeatureSet *const> batch) const {
  const std::size_t width = spec_.text_rows * spec_.text_words;
  nn::Tensor t({batch.size(), width});
  for (std::size_t n = 0; n < batch.size(); ++n) {
    const Matrix &m = batch[n]->text;
    if (m.rows() != spec_.text_rows || m.cols() != spec_.text_words)
      throw ShapeError("text features are " + std::to_string(m.rows()) + "x" +
                       std::to_string(m.cols()) + ", model expects " +
                       std::to_string(spec_.text_rows) + "x" + std::to_string(spec_.text_words));
    std::copy(m.data().begin(), m.data().end(), t.data().begin() + n * width);
  }
  return nn::constant(std::move(t));
}

nn::Var SiameseModel::features(std::span<const FeatureSet *const> batch, bool training,
                               Rng &rng) const {
  if (batch.empty()) throw ShapeError("SiameseModel: empty batch");
  std::vector<nn::Var> parts;
  if (mfcc_branch_) parts.push_back((*mfcc_branch_)(mfcc_input(batch), spec_.dropout, training, rng));
  if (vggish_branch_)
    parts.push_back((*vggish_branch_)(vggish_input(batch), spec_.dropout, training, rng));
  if (!fusion_) return parts.front();
  parts.push_back(text_input(batch));
  return (*fusion_)(nn::concat(parts));
}

nn::Var SiameseModel::encode(std::span<const FeatureSet *const> batch, bool training,
                             Rng &rng) const {
  nn::Var h = nn::tanh(encoder1_(features(batch, training, rng)));
  return nn::tanh(encoder2_(h));
}

nn::Var SiameseModel::forward(std::span<const FeatureSet *const> left,
                              std::span<const FeatureSet *const> right, bool training,
                              Rng &rng) const {
  if (left.size() != right.size()) throw ShapeError("SiameseModel: left/right batch sizes differ");
  const nn::Var a = encode(left, training, rng);
  const nn::Var b = encode(right, training, rng);
  return nn::sigmoid(head_(nn::euclidean_distance(a, b)));
}

io::Container SiameseModel::to_container() const {
  io::Container c;
  const auto &s = spec_;
  c.put("model.spec",
        nn::Tensor({14}, {static_cast<double>(s.variant), static_cast<double>(s.head),
                          static_cast<double>(s.filters), static_cast<double>(s.kernel),
                          static_cast<double>(s.stride), s.dropout,
                          static_cast<double>(s.dense_width), static_cast<double>(s.fusion_width),
                          static_cast<double>(s.mfcc_frames), static_cast<double>(s.mfcc_coeffs),
                          static_cast<double>(s.vggish_rows), static_cast<double>(s.vggish_dim),
                          static_cast<double>(s.text_rows), static_cast<double>(s.text_words)}));
  for (const auto &p : params_) c.put(p->name, p->value);
  return c;
}

SiameseModel SiameseModel::from_container(const io::Container &c) {
  const auto &t = c.get("model.spec");
  if (t.size() != 14) throw DataError("model.spec has " + std::to_string(t.size()) + " fields");
  auto u = [&](std::size_t i) { return static_cast<std::size_t>(std::llround(t[i])); };
  const auto variant = u(0), head = u(1);
  if (variant > 2 || head > 1) throw DataError("model.spec has an unknown variant or head");
  ModelSpec s;
  s.variant = static_cast<Variant>(variant);
  s.head = static_cast<Head>(head);
  s.filters = u(2);
  s.kernel = u(3);
  s.stride = u(4);
  s.dropout = static_cast<float>(t[5]);
  s.dense_width = u(6);
  s.fusion_width = u(7);
  s.mfcc_frames = u(8);
  s.mfcc_coeffs = u(9);
  s.vggish_rows = u(10);
  s.vggish_dim = u(11);
  s.text_rows = u(12);
  s.text_words = u(13);

  SiameseModel model(s, 0);
  for (const auto &p : model.params_) {
    const auto &stored = c.get(p->name);
    if (stored.shape() != p->value.shape())
      throw DataError("checkpoint tensor " + p->name + " has shape " +
                      nn::shape_string(stored.shape()) + ", expected " +
                      nn::shape_string(p->value.shape()));
    p->value = stored;
  }
  return model;
}

std::vector<double> pair_target(const PairView &pair, Head head) {
  if (head == Head::kBinary) return pair.similar ? std::vector<double>{0.0, 1.0}
                                                 : std::vector<double>{1.0, 0.0};
  if (pair.score_class < 0 || pair.score_class > 24)
    throw DataError("score class " + std::to_string(pair.score_class) + " outside 0..24");
  std::vector<double> t(25, 0.0);
  t[static_cast<std::size_t>(pair.score_class)] = 1.0;
  return t;
}

// ---- training ----------------------------------------------------------

bool EarlyStopping::update(double loss) {
  improved_last_ = !has_best_ || loss < best_;
  if (improved_last_) {
    best_ = loss;
    best_epoch_ = epoch_;
    has_best_ = true;
    since_best_ = 0;
  } else {
    ++since_best_;
  }
  ++epoch_;
  return since_best_ >= patience_;
}

namespace {

struct Batch {
  std::vector<const FeatureSet *> left, right;
  nn::Tensor target;
};

Batch make_batch(std::span<const PairView> pairs, std::span<const std::size_t> order,
                 Head head) {
  Batch b;
  const std::size_t width = head == Head::kBinary ? 2 : 25;
  b.target = nn::Tensor({order.size(), width});
  for (std::size_t i = 0; i < order.size(); ++i) {
    const PairView &p = pairs[order[i]];
    b.left.push_back(p.left);
    b.right.push_back(p.right);
    const auto t = pair_target(p, head);
    std::copy(t.begin(), t.end(), b.target.data().begin() + i * width);
  }
  return b;
}

std::vector<nn::Tensor> snapshot(const std::vector<nn::Var> &params) {
  std::vector<nn::Tensor> out;
  out.reserve(params.size());
  for (const auto &p : params) out.push_back(p->value);
  return out;
}

}  // namespace

double evaluate_loss(const SiameseModel &model, std::span<const PairView> pairs,
                     std::size_t batch_size) {
  if (pairs.empty()) throw DataError("evaluate_loss: no pairs");
  nn::NoGradGuard no_grad;
  Rng unused(0);
  std::vector<std::size_t> order(pairs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  // Weighted so the result is the RMSE over the full set.
  double squared = 0.0;
  std::size_t elements = 0;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    const std::size_t n = std::min(batch_size, order.size() - start);
    const Batch b = make_batch(pairs, std::span(order).subspan(start, n), model.spec().head);
    const nn::Var loss = nn::rmse_loss(model.forward(b.left, b.right, false, unused), b.target);
    squared += loss->value[0] * loss->value[0] * static_cast<double>(b.target.size());
    elements += b.target.size();
  }
  return std::sqrt(squared / static_cast<double>(elements));
}

TrainResult train(SiameseModel &model, std::span<const PairView> train_pairs,
                  std::span<const PairView> val_pairs, const TrainConfig &config,
                  nn::Rmsprop *optimizer) {
  if (train_pairs.empty()) throw DataError("train: no training pairs");
  if (config.batch_size == 0) throw UsageError("train: batch size must be >= 1");

  std::optional<nn::Rmsprop> own;
  if (!optimizer) optimizer = &own.emplace(model.parameters(), config.optimizer);

  Rng rng(config.seed);
  std::vector<std::size_t> order(train_pairs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  TrainResult result;
  EarlyStopping stopper(config.patience);
  std::vector<nn::Tensor> best = snapshot(model.parameters());

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    rng.shuffle(order.begin(), order.end());
    double squared = 0.0;
    std::size_t elements = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t n = std::min(config.batch_size, order.size() - start);
      const Batch b =
          make_batch(train_pairs, std::span(order).subspan(start, n), model.spec().head);
      nn::zero_grad(model.parameters());
      nn::Var loss;
      try {
        loss = nn::rmse_loss(model.forward(b.left, b.right, true, rng), b.target);
        nn::backward(loss);
      } catch (const NumericError &e) {
        throw NumericError("training diverged at epoch " + std::to_string(epoch + 1) +
                           ", batch starting at pair " + std::to_string(start) + ": " +
                           e.what());
      }
      optimizer->step();
      squared += loss->value[0] * loss->value[0] * static_cast<double>(b.target.size());
      elements += b.target.size();
    }
    const double train_loss = std::sqrt(squared / static_cast<double>(elements));
    const double val_loss =
        val_pairs.empty() ? train_loss : evaluate_loss(model, val_pairs, config.batch_size);
    if (!std::isfinite(train_loss) || !std::isfinite(val_loss))
      throw NumericError("training diverged at epoch " + std::to_string(epoch + 1) +
                         " (loss is not finite)");
    result.train_loss.push_back(train_loss);
    result.val_loss.push_back(val_loss);
    if (config.on_epoch) config.on_epoch(epoch, train_loss, val_loss);

    const bool stop = stopper.update(val_loss);
    if (stopper.improved_last()) best = snapshot(model.parameters());
    if (stop) {
      result.stopped_early = epoch + 1 < config.epochs;
      break;
    }
  }

  const auto &params = model.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = std::move(best[i]);
  result.best_epoch = stopper.best_epoch();
  result.optimizer_steps = optimizer->steps();
  return result;
}

std::vector<std::vector<double>> predict(const SiameseModel &model,
                                         std::span<const PairView> pairs,
                                         std::size_t batch_size) {
  nn::NoGradGuard no_grad;
  Rng unused(0);
  std::vector<std::vector<double>> out;
  out.reserve(pairs.size());
  const std::size_t width = model.spec().head_size();
  for (std::size_t start = 0; start < pairs.size(); start += batch_size) {
    const std::size_t n = std::min(batch_size, pairs.size() - start);
    std::vector<const FeatureSet *> left, right;
    for (std::size_t i = start; i < start + n; ++i) {
      left.push_back(pairs[i].left);
      right.push_back(pairs[i].right);
    }
    const nn::Var y = model.forward(left, right, false, unused);
    for (std::size_t i = 0; i < n; ++i)
      out.emplace_back(y->value.data().begin() + i * width,
                       y->value.data().begin() + (i + 1) * width);
  }
  return out;
}

double predict_similarity(const SiameseModel &model, const FeatureSet &left,
                          const FeatureSet &right) {
  const PairView pair{&left, &right, false, 0};
  const auto out = predict(model, std::span(&pair, 1), 1);
  return model.spec().head == Head::kBinary ? out[0][1] : out[0][0];
}

// ---- relapse -----------------------------------------------------------

RelapseDecision relapse_from_scores(std::span<const double> scores, double threshold) {
  if (scores.empty()) throw UsageError("relapse decision needs at least one similarity score");
  const double mean =
      std::accumulate(scores.begin(), scores.end(), 0.0) / static_cast<double>(scores.size());
  return {mean >= threshold, mean, scores.size()};
}

RelapseDecision detect_relapse(const SiameseModel &model, std::span<const FeatureSet> segments,
                               std::span<const FeatureSet> references, double threshold) {
  if (segments.empty()) throw UsageError("detect_relapse: subject has no segments");
  if (references.empty()) throw UsageError("detect_relapse: no depressed reference segments");
  std::vector<PairView> pairs;
  for (const auto &s : segments)
    for (const auto &r : references) pairs.push_back({&s, &r, false, 0});
  const auto outputs = predict(model, pairs);
  std::vector<double> scores;
  scores.reserve(outputs.size());
  const std::size_t column = model.spec().head == Head::kBinary ? 1 : 0;
  for (const auto &o : outputs) scores.push_back(o[column]);
  return relapse_from_scores(scores, threshold);
}

// ---- metrics -----------------------------------------------------------

void ConfusionMatrix::add(std::size_t predicted, std::size_t actual, std::size_t n) {
  if (predicted >= classes_ || actual >= classes_)
    throw DataError("confusion matrix index out of range");
  counts_[predicted * classes_ + actual] += n;
}

std::size_t ConfusionMatrix::total() const {
  return std::accumulate(counts_.begin(), counts_.end(), std::size_t{0});
}

std::size_t ConfusionMatrix::trace() const {
  std::size_t t = 0;
  for (std::size_t i = 0; i < classes_; ++i) t += count(i, i);
  return t;
}

double ConfusionMatrix::accuracy() const {
  const std::size_t n = total();
  return n ? static_cast<double>(trace()) / static_cast<double>(n) : 0.0;
}

double ConfusionMatrix::cell_percent(std::size_t predicted, std::size_t actual) const {
  const std::size_t n = total();
  return n ? 100.0 * static_cast<double>(count(predicted, actual)) / static_cast<double>(n) : 0.0;
}

double ConfusionMatrix::row_percent_correct(std::size_t predicted) const {
  std::size_t row = 0;
  for (std::size_t a = 0; a < classes_; ++a) row += count(predicted, a);
  return row ? 100.0 * static_cast<double>(count(predicted, predicted)) / static_cast<double>(row)
             : 0.0;
}

double ConfusionMatrix::column_percent_correct(std::size_t actual) const {
  std::size_t col = 0;
  for (std::size_t p = 0; p < classes_; ++p) col += count(p, actual);
  return col ? 100.0 * static_cast<double>(count(actual, actual)) / static_cast<double>(col)
             : 0.0;
}

double rmse(std::span<const double> predicted, std::span<const double> truth) {
  if (predicted.size() != truth.size()) throw ShapeError("rmse: length mismatch");
  if (predicted.empty()) throw DataError("rmse: empty input");
  double acc = 0.0;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    const double d = predicted[i] - truth[i];
    acc += d * d;
  }
  return std::sqrt(acc / static_cast<double>(predicted.size()));
}

double pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw ShapeError("pearson: length mismatch");
  if (x.empty()) throw DataError("pearson: empty input");
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

EvalReport report_from_outputs(Head head, std::span<const std::vector<double>> outputs,
                               std::span<const PairView> pairs) {
  if (outputs.size() != pairs.size()) throw ShapeError("evaluate: outputs/pairs length mismatch");
  if (pairs.empty()) throw DataError("evaluate: no pairs");
  EvalReport r;
  r.head = head;
  r.pairs = pairs.size();
  r.confusion = ConfusionMatrix(head == Head::kBinary ? 2 : 25);
  std::vector<double> predicted, truth;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto &o = outputs[i];
    if (head == Head::kBinary) {
      const double p = o.at(1);
      const std::size_t pred = p >= 0.5 ? 1 : 0;
      const std::size_t actual = pairs[i].similar ? 1 : 0;
      r.confusion.add(pred, actual);
      predicted.push_back(p);
      truth.push_back(static_cast<double>(actual));
    } else {
      const auto pred = static_cast<std::size_t>(std::max_element(o.begin(), o.end()) - o.begin());
      const auto actual = static_cast<std::size_t>(pairs[i].score_class);
      r.confusion.add(pred, actual);
      predicted.push_back(static_cast<double>(pred));
      truth.push_back(static_cast<double>(actual));
    }
  }
  r.accuracy_percent = 100.0 * r.confusion.accuracy();
  r.rmse = rmse(predicted, truth);
  r.normalized_rmse = head == Head::kScore ? normalized_rmse(r.rmse) : r.rmse;
  r.cc = pearson(predicted, truth);
  return r;
}

EvalReport evaluate(const SiameseModel &model, std::span<const PairView> pairs,
                    std::size_t batch_size) {
  const auto outputs = predict(model, pairs, batch_size);
  return report_from_outputs(model.spec().head, outputs, pairs);
}

std::string report_json(const EvalReport &report) {
  std::ostringstream out;
  char buf[64];
  auto num = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return std::string(buf);
  };
  const auto &cm = report.confusion;
  out << "{\n";
  out << "  \"head\": \"" << (report.head == Head::kBinary ? "binary" : "score25") << "\",\n";
  out << "  \"pairs\": " << report.pairs << ",\n";
  out << "  \"accuracy_percent\": " << num(report.accuracy_percent) << ",\n";
  out << "  \"rmse\": " << num(report.rmse) << ",\n";
  out << "  \"normalized_rmse\": " << num(report.normalized_rmse) << ",\n";
  out << "  \"cc\": " << num(report.cc) << ",\n";
  out << "  \"confusion\": {\n    \"layout\": \"rows=predicted, cols=actual\",\n";
  out << "    \"counts\": [";
  for (std::size_t p = 0; p < cm.classes(); ++p) {
    out << (p ? ", " : "") << "[";
    for (std::size_t a = 0; a < cm.classes(); ++a) out << (a ? ", " : "") << cm.count(p, a);
    out << "]";
  }
  out << "],\n    \"percent\": [";
  for (std::size_t p = 0; p < cm.classes(); ++p) {
    out << (p ? ", " : "") << "[";
    for (std::size_t a = 0; a < cm.classes(); ++a)
      out << (a ? ", " : "") << num(cm.cell_percent(p, a));
    out << "]";
  }
  out << "]\n  }\n}\n";
  return out.str();
}

std::string render_confusion(const ConfusionMatrix &cm, const std::vector<std::string> &labels) {
  if (labels.size() != cm.classes()) throw UsageError("render_confusion: one label per class");
  std::size_t label_width = 8;
  for (const auto &l : labels) label_width = std::max(label_width, l.size());
  const int lw = static_cast<int>(label_width);
  constexpr int kCell = 18;

  std::ostringstream out;
  char buf[128];
  auto split_cell = [&](double ok) {
    char inner[48];
    std::snprintf(inner, sizeof inner, "%.2f%% / %.2f%%", ok, 100.0 - ok);
    std::snprintf(buf, sizeof buf, "%*s", kCell, inner);
    return std::string(buf);
  };

  std::snprintf(buf, sizeof buf, "%-*s", lw, "pred\\act");
  out << buf;
  for (const auto &l : labels) {
    std::snprintf(buf, sizeof buf, "%*s", kCell, l.c_str());
    out << buf;
  }
  std::snprintf(buf, sizeof buf, "%*s\n", kCell, "total");
  out << buf;
  for (std::size_t p = 0; p < cm.classes(); ++p) {
    std::snprintf(buf, sizeof buf, "%-*s", lw, labels[p].c_str());
    out << buf;
    for (std::size_t a = 0; a < cm.classes(); ++a) {
      char inner[48];
      std::snprintf(inner, sizeof inner, "%zu (%.2f%%)", cm.count(p, a), cm.cell_percent(p, a));
      std::snprintf(buf, sizeof buf, "%*s", kCell, inner);
      out << buf;
    }
    out << split_cell(cm.row_percent_correct(p)) << "\n";
  }
  std::snprintf(buf, sizeof buf, "%-*s", lw, "total");
  out << buf;
  for (std::size_t a = 0; a < cm.classes(); ++a) out << split_cell(cm.column_percent_correct(a));
  out << split_cell(100.0 * cm.accuracy()) << "\n";
  return out.str();
}

// ---- checkpoints -------------------------------------------------------

void save_model(const std::filesystem::path &path, const SiameseModel &model,
                const nn::Rmsprop *optimizer) {
  io::Container c = model.to_container();
  if (optimizer) {
    c.put("optimizer.steps", nn::Tensor({1}, static_cast<double>(optimizer->steps())));
    for (std::size_t i = 0; i < optimizer->params().size(); ++i)
      c.put("optimizer.cache." + optimizer->params()[i]->name, optimizer->cache()[i]);
  }
  io::write_oswt(path, c);
}

SiameseModel load_model(const std::filesystem::path &path) {
  return SiameseModel::from_container(io::read_oswt(path));
}

}  // namespace oneshot::siamese
