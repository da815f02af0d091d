#include "oneshot/pipeline.h"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <thread>

#include "json.hpp"

#include "oneshot/error.h"
#include "oneshot/mfcc.h"
#include "oneshot/oswt.h"
#include "oneshot/wav.h"

namespace oneshot::pipeline {

namespace fs = std::filesystem;
using siamese::FeatureSet;
using siamese::SubjectRecord;

std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

namespace {

std::string read_text(const fs::path &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::optional<std::string> try_read_text(const fs::path &path) {
  std::error_code ec;
  if (!fs::is_regular_file(path, ec)) return std::nullopt;
  return read_text(path);
}

void write_text(const fs::path &path, const std::string &content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + tmp.string());
    out << content;
    if (!out.flush()) throw DataError("short write to " + tmp.string());
  }
  fs::rename(tmp, path);
}

fs::path key_path(const fs::path &artifact) { return artifact.string() + ".key"; }

bool cache_hit(const fs::path &artifact, const std::string &key) {
  std::error_code ec;
  return fs::is_regular_file(artifact, ec) && try_read_text(key_path(artifact)) == key;
}

std::string file_digest(const fs::path &path) { return hex64(fnv1a(read_text(path))); }

// Identifies large external resources without reading them in full.
std::string resource_stamp(const std::string &path) {
  if (path.empty()) return "none";
  std::error_code ec;
  const auto size = fs::file_size(path, ec);
  if (ec) throw UsageError("cannot access " + path);
  return path + "#" + std::to_string(size);
}

void say(const Context &ctx, const std::string &line) {
  if (ctx.log) *ctx.log << line << '\n';
}

audio::Signal load_audio(const fs::path &path, const io::Config &config) {
  audio::Signal s = io::read_wav(path);
  const int rate = static_cast<int>(config.integer("audio.sample_rate"));
  if (s.sample_rate != rate) {
    if (!config.flag("audio.resample"))
      throw DataError(path.string() + ": sample rate " + std::to_string(s.sample_rate) +
                      " Hz, expected " + std::to_string(rate) + " (set audio.resample=true)");
    s = preprocess::resample(s, rate);
  }
  return s;
}

nn::Tensor to_tensor(const Matrix &m) { return nn::Tensor({m.rows(), m.cols()}, m.data()); }

Matrix to_matrix(const nn::Tensor &t, const std::string &name) {
  if (t.rank() != 2) throw DataError("feature entry " + name + " is not a matrix");
  return Matrix(t.dim(0), t.dim(1), t.data());
}

std::string subject_file(const std::string &subject_id) {
  // ids cannot contain ':' (manifest rule); keep them filesystem-safe too
  std::string s = subject_id;
  for (char &c : s)
    if (c == '/' || c == '\\') c = '_';
  return s;
}

// Runs fn(0..n-1) on up to `jobs` threads (0 = one per core). Every index
// runs; the first failure in index order is rethrown afterwards.
void parallel_for(std::size_t n, std::size_t jobs, const std::function<void(std::size_t)> &fn) {
  if (jobs == 0) jobs = std::max(1u, std::thread::hardware_concurrency());
  jobs = std::min(jobs, n);
  std::vector<std::exception_ptr> errors(n);
  auto body = [&](std::size_t i) {
    try {
      fn(i);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  };
  if (jobs <= 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < jobs; ++t)
      pool.emplace_back([&] {
        for (std::size_t i; (i = next++) < n;) body(i);
      });
    for (auto &t : pool) t.join();
  }
  for (const auto &e : errors)
    if (e) std::rethrow_exception(e);
}

std::size_t jobs(const io::Config &config) {
  return static_cast<std::size_t>(config.integer("run.jobs"));
}

bool augments(const io::Config &config, siamese::Split split) {
  const std::string &which = config.str("augment.splits");
  if (which == "all") return true;
  if (which == "none") return false;
  return split == siamese::Split::kTrain;
}

}  // namespace

[[noreturn]] void rethrow_in_stage(const std::string &stage) {
  try {
    throw;
  } catch (const Error &e) {
    const std::string what = stage + ": " + e.what();
    switch (e.code()) {
      case ErrorCode::kUsage: throw UsageError(what);
      case ErrorCode::kNumeric: throw NumericError(what);
      default: throw DataError(what);
    }
  } catch (const std::exception &e) {
    throw DataError(stage + ": " + e.what());
  }
}

// ---- preprocess --------------------------------------------------------

SegmentPlan plan_segments(const std::string &subject_id, const audio::Signal &signal,
                          const std::vector<text::Utterance> *utterances,
                          const io::Config &config) {
  SegmentPlan plan;
  plan.subject_id = subject_id;
  plan.sample_rate = signal.sample_rate;
  const double rate = signal.sample_rate;

  std::vector<preprocess::Span> turns;
  if (utterances && config.flag("preprocess.participant_only")) {
    for (const auto &u : *utterances) {
      if (u.speaker != text::Speaker::kParticipant) continue;
      const auto b = std::min(signal.size(), static_cast<std::size_t>(std::llround(
                                                 std::max(0.0, u.start) * rate)));
      const auto e = std::min(signal.size(), static_cast<std::size_t>(std::llround(
                                                 std::max(0.0, u.stop) * rate)));
      if (e > b) turns.push_back({b, e});
    }
    std::sort(turns.begin(), turns.end(),
              [](const auto &x, const auto &y) { return x.begin < y.begin; });
    std::vector<preprocess::Span> merged;
    for (const auto &t : turns) {
      if (!merged.empty() && t.begin <= merged.back().end)
        merged.back().end = std::max(merged.back().end, t.end);
      else
        merged.push_back(t);
    }
    turns = std::move(merged);
  } else if (!signal.empty()) {
    turns.push_back({0, signal.size()});
  }

  const audio::Signal kept = preprocess::concat_spans(signal, turns);
  if (!kept.empty()) {
    const auto voiced = preprocess::strip_unvoiced(kept, config.real("preprocess.voiced_threshold"),
                                                   config.real("preprocess.voiced_window_ms"));
    if (!voiced.all_silent) plan.spans = preprocess::compose_spans(turns, voiced.spans);
  }

  plan.segment_length = preprocess::segment_length_samples(
      signal.sample_rate, config.real("preprocess.segment_seconds"));
  std::size_t total = 0;
  for (const auto &s : plan.spans) total += s.length();
  plan.segments = plan.segment_length ? total / plan.segment_length : 0;
  if (const auto cap = config.integer("preprocess.max_segments"); cap > 0)
    plan.segments = std::min<std::size_t>(plan.segments, static_cast<std::size_t>(cap));
  return plan;
}

std::string plan_json(const SegmentPlan &plan) {
  nlohmann::json j;
  j["subject_id"] = plan.subject_id;
  j["sample_rate"] = plan.sample_rate;
  j["segment_length"] = plan.segment_length;
  j["segments"] = plan.segments;
  auto spans = nlohmann::json::array();
  for (const auto &s : plan.spans) spans.push_back({s.begin, s.end});
  j["spans"] = std::move(spans);
  return j.dump(1) + "\n";
}

SegmentPlan parse_plan(const std::string &json, const std::string &origin) {
  try {
    const auto j = nlohmann::json::parse(json);
    SegmentPlan plan;
    plan.subject_id = j.at("subject_id").get<std::string>();
    plan.sample_rate = j.at("sample_rate").get<int>();
    plan.segment_length = j.at("segment_length").get<std::size_t>();
    plan.segments = j.at("segments").get<std::size_t>();
    for (const auto &s : j.at("spans"))
      plan.spans.push_back({s.at(0).get<std::size_t>(), s.at(1).get<std::size_t>()});
    return plan;
  } catch (const nlohmann::json::exception &e) {
    throw DataError(origin + ": malformed segment plan (" + e.what() + ")");
  }
}

// ---- features ----------------------------------------------------------

Extractor Extractor::from_config(const io::Config &config) {
  Extractor x;
  x.variant = siamese::parse_variant(config.str("model.variant"));
  if (x.needs_vggish()) {
    const std::string &weights = config.str("vggish.weights");
    x.vggish_weights = weights.empty()
                           ? vggish::make_test_network(config.seed("vggish.seed"))
                           : vggish::EmbeddingWeights::from_container(io::read_oswt(weights));
    const std::string &pca = config.str("vggish.pca");
    x.pca = pca.empty() ? vggish::PcaParams::identity()
                        : vggish::PcaParams::from_container(io::read_oswt(pca));
  }
  x.reduction = config.str("text.reduction") == "mean_pool" ? text::Reduction::kMeanPool
                                                            : text::Reduction::kTruncate;
  const auto dim = static_cast<std::size_t>(config.integer("text.dim"));
  x.lexicon = text::Lexicon(dim);
  if (x.needs_text()) {
    if (const std::string &lex = config.str("text.lexicon"); !lex.empty())
      x.lexicon = text::load_lexicon(lex, dim);
    if (const std::string &syn = config.str("text.synonyms"); !syn.empty())
      text::load_synonyms(syn, x.lexicon);
  }
  return x;
}

FeatureSet Extractor::extract(const audio::Signal &segment,
                              const std::vector<std::string> &words) const {
  FeatureSet f;
  if (needs_mfcc()) f.mfcc = mfcc::extract_mfcc(segment);
  if (needs_vggish()) f.vggish = vggish::extract_vggish(segment, vggish_weights, pca);
  if (needs_text())
    f.text = text::resize_text_matrix(text::embed_words(words, lexicon), reduction);
  return f;
}

std::vector<std::string> segment_words(const std::vector<text::Utterance> &utterances,
                                       const SegmentPlan &plan, std::size_t begin,
                                       std::size_t end) {
  if (end <= begin || plan.spans.empty()) return {};
  const double rate = plan.sample_rate;
  const double t0 = preprocess::source_offset(plan.spans, begin) / rate;
  const double t1 = (preprocess::source_offset(plan.spans, end - 1) + 1) / rate;
  return text::words_in_window(utterances, t0, t1);
}

std::string feature_entry(const preprocess::Provenance &p, std::size_t index,
                          const std::string &kind) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04zu", index);
  return p.tag() + ":" + buf + ":" + kind;
}

io::Container extract_recording(const audio::Signal &signal,
                                 const std::vector<text::Utterance> *utterances,
                                 const SegmentPlan &plan, bool augment,
                                 std::uint64_t augment_seed, const Extractor &extractor) {
  const audio::Signal kept = preprocess::concat_spans(signal, plan.spans);
  preprocess::SegmentSet set;
  set.segment_length = plan.segment_length;
  for (std::size_t i = 0; i < plan.segments; ++i) {
    preprocess::Segment s;
    s.index = i;
    s.signal.sample_rate = kept.sample_rate;
    const auto first = kept.samples.begin() + static_cast<std::ptrdiff_t>(i * plan.segment_length);
    s.signal.samples.assign(first, first + static_cast<std::ptrdiff_t>(plan.segment_length));
    set.segments.push_back(std::move(s));
  }
  if (augment) set = preprocess::augment_corpus(set, augment_seed);

  std::map<std::size_t, std::vector<std::string>> words;
  io::Container c;
  for (const auto &seg : set.segments) {
    auto it = words.find(seg.index);
    if (it == words.end()) {
      std::vector<std::string> w;
      if (utterances && extractor.needs_text())
        w = segment_words(*utterances, plan, seg.index * plan.segment_length,
                          (seg.index + 1) * plan.segment_length);
      it = words.emplace(seg.index, std::move(w)).first;
    }
    const FeatureSet f = extractor.extract(seg.signal, it->second);
    if (!f.mfcc.empty()) c.put(feature_entry(seg.provenance, seg.index, "mfcc"), to_tensor(f.mfcc));
    if (!f.vggish.empty())
      c.put(feature_entry(seg.provenance, seg.index, "vggish"), to_tensor(f.vggish));
    if (!f.text.empty()) c.put(feature_entry(seg.provenance, seg.index, "text"), to_tensor(f.text));
  }
  return c;
}

std::vector<siamese::Sample> samples_from_container(const std::string &subject_id,
                                                    const io::Container &c) {
  std::vector<siamese::Sample> samples;
  std::map<std::string, std::size_t> position;
  for (const auto &[name, tensor] : c.named) {
    const auto colon = name.rfind(':');
    if (colon == std::string::npos || name.find(':') == colon)
      throw DataError("feature entry '" + name + "' is not <provenance>:<index>:<kind>");
    const std::string key = name.substr(0, colon), kind = name.substr(colon + 1);
    auto [it, fresh] = position.emplace(key, samples.size());
    if (fresh) samples.push_back({subject_id + ":" + key, {}});
    FeatureSet &f = samples[it->second].features;
    if (kind == "mfcc")
      f.mfcc = to_matrix(tensor, name);
    else if (kind == "vggish")
      f.vggish = to_matrix(tensor, name);
    else if (kind == "text")
      f.text = to_matrix(tensor, name);
    else
      throw DataError("feature entry '" + name + "' has unknown kind");
  }
  return samples;
}

// ---- stages ------------------------------------------------------------

std::vector<io::ManifestEntry> ingest(const Context &ctx) {
  try {
    auto entries = io::load_manifest(ctx.manifest);
    io::assign_splits(entries, ctx.config.seed("split.seed"),
                      {ctx.config.real("split.train"), ctx.config.real("split.val")});
    io::check_audio(entries, static_cast<int>(ctx.config.integer("audio.sample_rate")),
                    ctx.config.flag("audio.resample"));
    say(ctx, "ingest: " + std::to_string(entries.size()) + " subjects");
    return entries;
  } catch (...) {
    rethrow_in_stage("ingest");
  }
}

namespace {

std::string preprocess_key(const Context &ctx, const io::ManifestEntry &e) {
  std::string key = "plan-v1\n" + ctx.config.dump({"audio.", "preprocess."});
  key += "audio " + file_digest(e.audio_path) + "\n";
  key += "transcript " + (e.transcript_path ? file_digest(*e.transcript_path) : "none") + "\n";
  return hex64(fnv1a(key)) + "\n";
}

fs::path plan_path(const Context &ctx, const std::string &subject) {
  return ctx.out_dir / "segments" / (subject_file(subject) + ".json");
}

fs::path feature_path(const Context &ctx, const std::string &subject) {
  return ctx.out_dir / "features" /
         (subject_file(subject) + "." + ctx.config.str("model.variant") + ".oswt");
}

std::vector<text::Utterance> load_utterances(const io::ManifestEntry &e) {
  return e.transcript_path ? text::read_transcript(*e.transcript_path)
                           : std::vector<text::Utterance>{};
}

}  // namespace

std::vector<SegmentPlan> run_preprocess(const Context &ctx,
                                        const std::vector<io::ManifestEntry> &entries) {
  try {
    std::vector<SegmentPlan> plans(entries.size());
    std::vector<std::size_t> misses;
    for (std::size_t i = 0; i < entries.size(); ++i) {
      const fs::path path = plan_path(ctx, entries[i].subject_id);
      if (cache_hit(path, preprocess_key(ctx, entries[i])))
        plans[i] = parse_plan(read_text(path), path.string());
      else
        misses.push_back(i);
    }
    // one writer per subject file
    fs::create_directories(ctx.out_dir / "segments");
    parallel_for(misses.size(), jobs(ctx.config), [&](std::size_t k) {
      const auto &e = entries[misses[k]];
      const fs::path path = plan_path(ctx, e.subject_id);
      const audio::Signal signal = load_audio(e.audio_path, ctx.config);
      const auto utterances = load_utterances(e);
      SegmentPlan plan = plan_segments(e.subject_id, signal,
                                       e.transcript_path ? &utterances : nullptr, ctx.config);
      write_text(path, plan_json(plan));
      write_text(key_path(path), preprocess_key(ctx, e));
      plans[misses[k]] = std::move(plan);
    });
    for (std::size_t i : misses)
      if (plans[i].segments == 0)
        say(ctx, "preprocess: warning: " + entries[i].subject_id + " has no complete segment");
    say(ctx, "preprocess: " + std::to_string(misses.size()) + " planned, " +
                 std::to_string(plans.size() - misses.size()) + " cached");
    return plans;
  } catch (...) {
    rethrow_in_stage("preprocess");
  }
}

std::vector<SubjectRecord> run_extract(const Context &ctx,
                                       const std::vector<io::ManifestEntry> &entries,
                                       const std::vector<SegmentPlan> &plans) {
  try {
    if (plans.size() != entries.size())
      throw UsageError("segment plans do not match the manifest");
    const io::Config &cfg = ctx.config;
    std::string shared = "features-v1\n" + cfg.dump({"vggish.", "text.", "model.variant"});
    shared += "weights " + resource_stamp(cfg.str("vggish.weights")) + "\n";
    shared += "pca " + resource_stamp(cfg.str("vggish.pca")) + "\n";
    shared += "lexicon " + resource_stamp(cfg.str("text.lexicon")) + "\n";
    shared += "synonyms " + resource_stamp(cfg.str("text.synonyms")) + "\n";

    const std::size_t n = entries.size();
    std::vector<std::string> keys(n);
    std::vector<io::Container> containers(n);
    std::vector<std::size_t> misses;
    for (std::size_t i = 0; i < n; ++i) {
      const auto &e = entries[i];
      const bool augment = augments(cfg, e.split.value_or(siamese::Split::kTrain));
      keys[i] = hex64(fnv1a(shared + plan_json(plans[i]) + preprocess_key(ctx, e) +
                            (augment ? "augment " + std::to_string(cfg.seed("augment.seed")) + "\n"
                                     : "plain\n"))) +
                "\n";
      const fs::path path = feature_path(ctx, e.subject_id);
      if (cache_hit(path, keys[i]))
        containers[i] = io::read_oswt(path);
      else
        misses.push_back(i);
    }

    if (!misses.empty()) {
      const Extractor extractor = Extractor::from_config(cfg);
      fs::create_directories(ctx.out_dir / "features");
      parallel_for(misses.size(), jobs(cfg), [&](std::size_t k) {
        const std::size_t i = misses[k];
        const auto &e = entries[i];
        const bool augment = augments(cfg, e.split.value_or(siamese::Split::kTrain));
        const audio::Signal signal = load_audio(e.audio_path, cfg);
        const auto utterances = load_utterances(e);
        const std::uint64_t seed = mix_seed(cfg.seed("augment.seed"), fnv1a(e.subject_id));
        containers[i] = extract_recording(signal, e.transcript_path ? &utterances : nullptr,
                                          plans[i], augment, seed, extractor);
        const fs::path path = feature_path(ctx, e.subject_id);
        io::write_oswt(path, containers[i]);
        write_text(key_path(path), keys[i]);
      });
    }

    std::vector<SubjectRecord> records;
    for (std::size_t i = 0; i < n; ++i) {
      const auto &e = entries[i];
      SubjectRecord r;
      r.subject_id = e.subject_id;
      r.depressed = e.depressed;
      r.phq_score = e.phq_score;
      r.split = e.split.value_or(siamese::Split::kTrain);
      r.samples = samples_from_container(e.subject_id, containers[i]);
      records.push_back(std::move(r));
    }
    say(ctx, "extract: " + std::to_string(misses.size()) + " extracted, " +
                 std::to_string(n - misses.size()) + " cached");
    return records;
  } catch (...) {
    rethrow_in_stage("extract");
  }
}

siamese::PairSets run_pair(const Context &ctx, const std::vector<SubjectRecord> &records) {
  try {
    siamese::PairingConfig pc;
    pc.mode = siamese::parse_pair_mode(ctx.config.str("pairing.mode"));
    pc.pairs_per_sample = static_cast<std::size_t>(ctx.config.integer("pairing.pairs_per_sample"));
    pc.eval_pairs_per_sample =
        static_cast<std::size_t>(ctx.config.integer("pairing.eval_pairs_per_sample"));
    auto sets = siamese::make_pairs(records, pc, ctx.config.seed("pairing.seed"));
    for (const auto &w : sets.warnings) say(ctx, "pair: warning: " + w);

    std::string csv = siamese::pair_csv_header() + "\n";
    for (const auto *set : {&sets.train, &sets.val, &sets.test})
      for (const auto &p : *set) csv += siamese::pair_csv_row(records, p) + "\n";
    const fs::path path = ctx.out_dir / "pairs.csv";
    if (try_read_text(path) != csv) write_text(path, csv);
    say(ctx, "pair: " + std::to_string(sets.train.size()) + " train, " +
                 std::to_string(sets.val.size()) + " val, " + std::to_string(sets.test.size()) +
                 " test");
    return sets;
  } catch (...) {
    rethrow_in_stage("pair");
  }
}

siamese::ModelSpec model_spec(const io::Config &config) {
  siamese::ModelSpec spec;
  spec.variant = siamese::parse_variant(config.str("model.variant"));
  spec.head = siamese::parse_pair_mode(config.str("pairing.mode")) == siamese::PairMode::kBinary
                  ? siamese::Head::kBinary
                  : siamese::Head::kScore;
  auto size = [&](const char *key) { return static_cast<std::size_t>(config.integer(key)); };
  spec.filters = size("model.filters");
  spec.kernel = size("model.kernel");
  spec.stride = size("model.stride");
  spec.dropout = config.real("model.dropout");
  spec.dense_width = size("model.dense_width");
  spec.fusion_width = size("model.fusion_width");
  spec.validate();
  return spec;
}

siamese::TrainConfig train_config(const io::Config &config) {
  siamese::TrainConfig tc;
  tc.batch_size = static_cast<std::size_t>(config.integer("train.batch_size"));
  tc.epochs = static_cast<std::size_t>(config.integer("train.epochs"));
  tc.patience = static_cast<std::size_t>(config.integer("train.patience"));
  tc.optimizer.learning_rate = config.real("train.learning_rate");
  tc.optimizer.decay = config.real("train.decay");
  tc.optimizer.rho = config.real("train.rho");
  tc.optimizer.epsilon = config.real("train.epsilon");
  tc.seed = config.seed("train.seed");
  if (tc.batch_size == 0) throw UsageError("train.batch_size must be positive");
  if (!(tc.optimizer.learning_rate > 0.0)) throw UsageError("train.learning_rate must be positive");
  return tc;
}

siamese::SiameseModel run_train(const Context &ctx, const std::vector<SubjectRecord> &records,
                                const siamese::PairSets &pairs) {
  try {
    const fs::path path = ctx.out_dir / "model.oswt";
    std::string inputs = "model-v1\n" + ctx.config.dump({"model.", "train.", "pairing.mode"});
    for (const auto &r : records)
      inputs += r.subject_id + " " +
                try_read_text(key_path(feature_path(ctx, r.subject_id))).value_or("?\n");
    inputs += try_read_text(ctx.out_dir / "pairs.csv").value_or("no pairs\n");
    const std::string key = hex64(fnv1a(inputs)) + "\n";
    if (cache_hit(path, key)) {
      say(ctx, "train: cached model");
      return siamese::load_model(path);
    }
    if (pairs.train.empty()) throw DataError("no training pairs");

    const auto spec = model_spec(ctx.config);
    siamese::SiameseModel model(spec, ctx.config.seed("model.seed"));
    auto tc = train_config(ctx.config);
    std::string history = "epoch,train_loss,val_loss\n";
    tc.on_epoch = [&](std::size_t epoch, double tl, double vl) {
      char buf[96];
      std::snprintf(buf, sizeof buf, "%zu,%.9g,%.9g\n", epoch + 1, tl, vl);
      history += buf;
      say(ctx, "train: epoch " + std::to_string(epoch + 1) + " loss " + std::to_string(tl) +
                   " val " + std::to_string(vl));
    };
    const auto train_views = siamese::resolve(records, pairs.train);
    const auto val_views = siamese::resolve(records, pairs.val);
    nn::Rmsprop optimizer(model.parameters(), tc.optimizer);
    const auto result = siamese::train(model, train_views, val_views, tc, &optimizer);
    say(ctx, "train: best epoch " + std::to_string(result.best_epoch + 1) +
                 (result.stopped_early ? " (stopped early)" : ""));
    siamese::save_model(path, model, &optimizer);
    write_text(ctx.out_dir / "loss_history.csv", history);
    write_text(key_path(path), key);
    return model;
  } catch (...) {
    rethrow_in_stage("train");
  }
}

siamese::EvalReport run_eval(const Context &ctx, const siamese::SiameseModel &model,
                             const std::vector<SubjectRecord> &records,
                             const siamese::PairSets &pairs) {
  try {
    if (pairs.test.empty()) throw DataError("no test pairs");
    const auto views = siamese::resolve(records, pairs.test);
    const auto report = siamese::evaluate(model, views);
    std::vector<std::string> labels;
    if (report.head == siamese::Head::kBinary) {
      labels = {"non-similar", "similar"};
    } else {
      for (int i = 0; i < 25; ++i) labels.push_back(std::to_string(i));
    }
    write_text(ctx.out_dir / "report.json", siamese::report_json(report));
    write_text(ctx.out_dir / "confusion.txt", siamese::render_confusion(report.confusion, labels));
    char buf[128];
    std::snprintf(buf, sizeof buf, "eval: %zu pairs, accuracy %.2f%%, rmse %.4f, cc %.4f",
                  report.pairs, report.accuracy_percent, report.rmse, report.cc);
    say(ctx, buf);
    return report;
  } catch (...) {
    rethrow_in_stage("eval");
  }
}

siamese::EvalReport run_pipeline(const Context &ctx) {
  const auto entries = ingest(ctx);
  const auto plans = run_preprocess(ctx, entries);
  const auto records = run_extract(ctx, entries, plans);
  const auto pairs = run_pair(ctx, records);
  const auto model = run_train(ctx, records, pairs);
  return run_eval(ctx, model, records, pairs);
}

// ---- relapse -----------------------------------------------------------

std::vector<FeatureSet> recording_features(const Recording &recording, const io::Config &config,
                                           const Extractor &extractor) {
  const audio::Signal signal = load_audio(recording.audio, config);
  std::vector<text::Utterance> utterances;
  if (recording.transcript) utterances = text::read_transcript(*recording.transcript);
  const auto plan = plan_segments(recording.audio.stem().string(), signal,
                                  recording.transcript ? &utterances : nullptr, config);
  const auto c = extract_recording(signal, recording.transcript ? &utterances : nullptr, plan,
                                   false, 0, extractor);
  std::vector<FeatureSet> out;
  for (auto &s : samples_from_container(plan.subject_id, c)) out.push_back(std::move(s.features));
  return out;
}

siamese::RelapseDecision predict_relapse(const siamese::SiameseModel &model,
                                         const Recording &subject,
                                         const std::vector<Recording> &references,
                                         const io::Config &config) {
  if (references.empty()) throw UsageError("predict-relapse needs at least one reference");
  io::Config cfg = config;
  cfg.set("model.variant", siamese::variant_name(model.spec().variant));
  const auto extractor = Extractor::from_config(cfg);

  const auto segments = recording_features(subject, cfg, extractor);
  if (segments.empty())
    throw DataError(subject.audio.string() + ": no complete segment after preprocessing");
  std::vector<FeatureSet> refs;
  for (const auto &r : references) {
    auto f = recording_features(r, cfg, extractor);
    refs.insert(refs.end(), std::make_move_iterator(f.begin()), std::make_move_iterator(f.end()));
  }
  if (refs.empty()) throw DataError("references yield no complete segment");
  return siamese::detect_relapse(model, segments, refs, cfg.real("relapse.threshold"));
}

}  // namespace oneshot::pipeline
