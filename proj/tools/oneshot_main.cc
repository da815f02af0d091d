// Command-line front end for the relapse-detection pipeline.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "oneshot/config.h"
#include "oneshot/error.h"
#include "oneshot/oswt.h"
#include "oneshot/pipeline.h"
#include "oneshot/siamese.h"
#include "oneshot/vggish.h"
#include "oneshot/wav.h"

namespace fs = std::filesystem;
using namespace oneshot;

namespace {

struct Common {
  std::string config_file;
  std::vector<std::string> overrides;
  std::string manifest;
  std::string out = "out";
  bool resample = false;
  bool quiet = false;
};

void add_common(CLI::App *cmd, Common &c, bool needs_manifest = true) {
  cmd->add_option("--config", c.config_file, "key = value configuration file");
  cmd->add_option("--set", c.overrides, "override one configuration key (key=value)");
  auto *m = cmd->add_option("--manifest", c.manifest, "corpus manifest CSV");
  if (needs_manifest) m->required();
  cmd->add_option("--out", c.out, "output directory")->capture_default_str();
  cmd->add_flag("--resample", c.resample, "resample audio that is not at audio.sample_rate");
  cmd->add_flag("-q,--quiet", c.quiet, "no progress output");
}

pipeline::Context make_context(const Common &c) {
  pipeline::Context ctx;
  if (!c.config_file.empty()) ctx.config = io::Config::load(c.config_file);
  for (const auto &kv : c.overrides) ctx.config.set_assignment(kv);
  if (c.resample) ctx.config.set("audio.resample", "true");
  ctx.manifest = c.manifest;
  ctx.out_dir = c.out;
  ctx.log = c.quiet ? nullptr : &std::cerr;
  return ctx;
}

// Single-recording extraction, no manifest: every original segment of one
// WAV goes into <out>/features/<stem>.<variant>.oswt.
int extract_wav(const pipeline::Context &ctx, const std::string &wav,
                const std::string &transcript) {
  pipeline::Recording rec{wav, std::nullopt};
  if (!transcript.empty()) rec.transcript = fs::path(transcript);
  const auto extractor = pipeline::Extractor::from_config(ctx.config);
  const auto features = pipeline::recording_features(rec, ctx.config, extractor);

  io::Container c;
  for (std::size_t i = 0; i < features.size(); ++i) {
    const preprocess::Provenance orig;
    const auto &f = features[i];
    auto put = [&](const Matrix &m, const char *kind) {
      if (m.empty()) return;
      c.put(pipeline::feature_entry(orig, i, kind), nn::Tensor({m.rows(), m.cols()}, m.data()));
      std::cout << pipeline::feature_entry(orig, i, kind) << " " << m.rows() << "x" << m.cols()
                << "\n";
    };
    put(f.mfcc, "mfcc");
    put(f.vggish, "vggish");
    put(f.text, "text");
  }
  const fs::path path = ctx.out_dir / "features" /
                        (fs::path(wav).stem().string() + "." + ctx.config.str("model.variant") +
                         ".oswt");
  fs::create_directories(path.parent_path());
  io::write_oswt(path, c);
  std::cout << "wrote " << path.string() << " (" << features.size() << " segments)\n";
  return 0;
}

int run(int argc, char **argv) {
  CLI::App app{"One-shot Siamese depression relapse detection from speech"};
  app.require_subcommand(1);

  Common common;
  std::string variant, mode, wav, transcript;
  long long seed = -1;

  auto *pre = app.add_subcommand("preprocess", "plan participant / voiced segments");
  add_common(pre, common);

  auto *ext = app.add_subcommand("extract", "compute and cache segment features");
  add_common(ext, common, false);
  ext->add_option("--variant", variant, "mfcc, vggish or fusion");
  ext->add_option("--wav", wav, "extract one recording instead of a manifest");
  ext->add_option("--transcript", transcript, "transcript for --wav");

  auto *pair = app.add_subcommand("pair", "build train/val/test pairs (pairs.csv)");
  add_common(pair, common);
  pair->add_option("--mode", mode, "binary or score25");
  pair->add_option("--seed", seed, "pairing seed");

  auto *trn = app.add_subcommand("train", "train the Siamese model (model.oswt)");
  add_common(trn, common);
  trn->add_option("--variant", variant, "mfcc, vggish or fusion");

  auto *evl = app.add_subcommand("eval", "evaluate on test pairs (report.json)");
  add_common(evl, common);
  evl->add_option("--variant", variant, "mfcc, vggish or fusion");

  auto *all = app.add_subcommand("run", "every stage, reusing cached results");
  add_common(all, common);
  all->add_option("--variant", variant, "mfcc, vggish or fusion");

  std::string model_path, audio;
  std::vector<std::string> references, reference_transcripts;
  double threshold = -1.0;
  auto *rel = app.add_subcommand("predict-relapse", "compare a recording against references");
  add_common(rel, common, false);
  rel->add_option("--model", model_path, "trained model.oswt")->required();
  rel->add_option("--audio", audio, "subject recording (WAV)")->required();
  rel->add_option("--transcript", transcript, "subject transcript");
  rel->add_option("--reference", references, "reference recording (repeatable)");
  rel->add_option("--reference-transcript", reference_transcripts,
                  "transcript per reference, in the same order");
  rel->add_option("--threshold", threshold, "relapse threshold on mean similarity");

  std::string weights_out;
  auto *mk = app.add_subcommand("make-test-weights",
                                "write seeded stand-in embedding weights and identity PCA");
  mk->add_option("--out", weights_out, "output .oswt")->required();
  mk->add_option("--seed", seed, "network seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError &e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : static_cast<int>(ErrorCode::kUsage);
  }

  if (mk->parsed()) {
    auto weights = vggish::make_test_network(seed < 0 ? 7 : static_cast<std::uint64_t>(seed));
    io::Container c = weights.to_container();
    vggish::PcaParams::identity().to_container(c);
    io::write_oswt(weights_out, c);
    std::cout << "wrote " << weights_out << "\n";
    return 0;
  }

  pipeline::Context ctx = make_context(common);
  if (!variant.empty()) ctx.config.set("model.variant", variant);
  if (!mode.empty()) ctx.config.set("pairing.mode", mode);
  if (seed >= 0) ctx.config.set("pairing.seed", std::to_string(seed));

  if (rel->parsed()) {
    if (references.empty()) throw UsageError("predict-relapse needs at least one --reference");
    if (!reference_transcripts.empty() && reference_transcripts.size() != references.size())
      throw UsageError("--reference-transcript must be given once per --reference");
    if (threshold >= 0.0) ctx.config.set("relapse.threshold", std::to_string(threshold));
    const auto model = siamese::load_model(model_path);
    pipeline::Recording subject{audio, std::nullopt};
    if (!transcript.empty()) subject.transcript = fs::path(transcript);
    std::vector<pipeline::Recording> refs;
    for (std::size_t i = 0; i < references.size(); ++i) {
      refs.push_back({references[i], std::nullopt});
      if (!reference_transcripts.empty()) refs.back().transcript = fs::path(reference_transcripts[i]);
    }
    const auto d = pipeline::predict_relapse(model, subject, refs, ctx.config);
    std::printf("relapse: %s\nmean_similarity: %.6f\npairs: %zu\n", d.relapse ? "yes" : "no",
                d.mean_similarity, d.pairs);
    return 0;
  }

  if (ext->parsed() && !wav.empty()) return extract_wav(ctx, wav, transcript);
  if (ext->parsed() && common.manifest.empty())
    throw UsageError("extract needs --manifest or --wav");

  const auto entries = pipeline::ingest(ctx);
  const auto plans = pipeline::run_preprocess(ctx, entries);
  if (pre->parsed()) return 0;
  const auto records = pipeline::run_extract(ctx, entries, plans);
  if (ext->parsed()) return 0;
  const auto pairs = pipeline::run_pair(ctx, records);
  if (pair->parsed()) return 0;
  const auto model = pipeline::run_train(ctx, records, pairs);
  if (trn->parsed()) return 0;
  const auto report = pipeline::run_eval(ctx, model, records, pairs);
  std::cout << siamese::report_json(report);
  return 0;
}

}  // namespace

int main(int argc, char **argv) {
  try {
    return run(argc, argv);
  } catch (const Error &e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.exit_code();
  } catch (const std::exception &e) {
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(ErrorCode::kData);
  }
}
