#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "../support/corpus.h"
#include "doctest.h"
#include "oneshot/error.h"
#include "oneshot/oswt.h"
#include "oneshot/pipeline.h"

using namespace oneshot;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path &p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string &name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

// Small network so a full run takes seconds.
io::Config small_config() {
  io::Config c;
  for (const char *kv : {"model.filters=4", "model.dense_width=16", "model.fusion_width=8",
                         "train.epochs=3", "train.batch_size=32", "train.learning_rate=1e-3",
                         "preprocess.max_segments=1", "pairing.pairs_per_sample=4",
                         "pairing.eval_pairs_per_sample=4", "run.jobs=1"})
    c.set_assignment(kv);
  return c;
}

std::map<std::string, std::string> directory_bytes(const fs::path &dir) {
  std::map<std::string, std::string> out;
  for (const auto &e : fs::directory_iterator(dir)) out[e.path().filename().string()] = slurp(e.path());
  return out;
}

// Exit status of the CLI; stdout goes to `output` when given.
int run_cli(const std::string &args, const std::string &output = "/dev/null") {
  const char *cli = std::getenv("ONESHOT_CLI");
  if (!cli) cli = ONESHOT_CLI_PATH;
  const int status =
      std::system((std::string(cli) + " " + args + " >" + output + " 2>/dev/null").c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_CASE("segment plans follow participant turns and the voiced gate") {
  audio::Signal s;
  s.sample_rate = 16000;
  Rng rng(3);
  s.samples.resize(3 * 16000);
  for (std::size_t i = 0; i < s.size(); ++i) s.samples[i] = rng.uniform(-0.5, 0.5);
  // silence inside the second participant turn
  for (std::size_t i = 36000; i < 40000; ++i) s.samples[i] = 0.0;

  std::vector<text::Utterance> utts{
      {0.5, 1.0, text::Speaker::kParticipant, {"one"}},
      {1.0, 2.0, text::Speaker::kInterviewer, {"two"}},
      {2.0, 2.5, text::Speaker::kParticipant, {"three"}},
  };
  io::Config cfg;
  cfg.set("preprocess.segment_seconds", "0.5");
  const auto plan = pipeline::plan_segments("x", s, &utts, cfg);
  REQUIRE(plan.spans.size() == 2);
  CHECK(plan.spans[0].begin == 8000);
  CHECK(plan.spans[0].end == 16000);
  CHECK(plan.spans[1].begin == 32000);
  CHECK(std::abs(static_cast<double>(plan.spans[1].end) - 36000.0) <= 400);
  CHECK(plan.segment_length == 8000);
  CHECK(plan.segments == 1);

  // the first segment covers the first turn only; later kept audio maps
  // back into the second turn
  CHECK(pipeline::segment_words(utts, plan, 0, 8000) == std::vector<std::string>{"one"});
  CHECK(pipeline::segment_words(utts, plan, 8000, 9000) == std::vector<std::string>{"three"});

  const auto back = pipeline::parse_plan(pipeline::plan_json(plan), "plan");
  CHECK(back.spans == plan.spans);
  CHECK(back.segments == plan.segments);
  CHECK_THROWS_AS(pipeline::parse_plan("{\"spans\": 3}", "plan"), DataError);

  cfg.set("preprocess.participant_only", "false");
  const auto whole = pipeline::plan_segments("x", s, &utts, cfg);
  CHECK(whole.spans.size() == 2);
  CHECK(whole.spans.front().begin == 0);
  CHECK(whole.spans.back().end == s.size());
  CHECK(whole.segments == 5);

  cfg.set("preprocess.max_segments", "2");
  CHECK(pipeline::plan_segments("x", s, nullptr, cfg).segments == 2);

  audio::Signal silent;
  silent.samples.assign(16000, 0.0);
  CHECK(pipeline::plan_segments("z", silent, nullptr, cfg).segments == 0);
}

TEST_CASE("pipeline runs, caches and reproduces") {
  TempDir dir("oneshot_test_pipeline");
  pipeline::Context ctx;
  ctx.config = small_config();
  ctx.manifest = testing::write_corpus(dir.path / "corpus", {});
  ctx.out_dir = dir.path / "out";
  std::ostringstream log;
  ctx.log = &log;

  const auto report = pipeline::run_pipeline(ctx);
  CHECK(report.pairs > 0);
  for (const char *f : {"pairs.csv", "model.oswt", "model.oswt.key", "loss_history.csv",
                        "report.json", "confusion.txt"})
    CHECK(fs::exists(ctx.out_dir / f));
  CHECK(fs::exists(ctx.out_dir / "segments" / "s300.json"));
  CHECK(fs::exists(ctx.out_dir / "features" / "s300.fusion.oswt"));
  const std::string json = slurp(ctx.out_dir / "report.json");
  for (const char *field : {"\"accuracy_percent\"", "\"rmse\"", "\"cc\"", "\"confusion\""})
    CHECK(json.find(field) != std::string::npos);

  // train subjects carry seven variants of their one segment, others one
  const auto entries = pipeline::ingest(ctx);
  for (const auto &e : entries) {
    const auto c = io::read_oswt(ctx.out_dir / "features" / (e.subject_id + ".fusion.oswt"));
    const std::size_t expected = e.split == siamese::Split::kTrain ? 7 : 1;
    CHECK(c.named.size() == 3 * expected);
    CHECK(c.get("orig:0000:mfcc").dim(0) == 378);
    CHECK(c.get("orig:0000:vggish").dim(0) == 14);
    CHECK(c.get("orig:0000:text").dim(1) == 9);
  }

  const auto features = directory_bytes(ctx.out_dir / "features");
  const auto pairs = slurp(ctx.out_dir / "pairs.csv");

  // second run is served from caches
  log.str("");
  const auto again = pipeline::run_pipeline(ctx);
  CHECK(log.str().find("preprocess: 0 planned, 10 cached") != std::string::npos);
  CHECK(log.str().find("extract: 0 extracted, 10 cached") != std::string::npos);
  CHECK(log.str().find("train: cached model") != std::string::npos);
  CHECK(siamese::report_json(again) == siamese::report_json(report));

  // a new pairing seed re-pairs and retrains without re-extracting
  ctx.config.set("pairing.seed", "7");
  log.str("");
  pipeline::run_pipeline(ctx);
  CHECK(log.str().find("extract: 0 extracted, 10 cached") != std::string::npos);
  CHECK(log.str().find("train: cached model") == std::string::npos);
  CHECK(slurp(ctx.out_dir / "pairs.csv") != pairs);
  CHECK(directory_bytes(ctx.out_dir / "features") == features);

  // the augmentation seed only touches augmented (train) subjects
  ctx.config.set("augment.seed", "43");
  log.str("");
  pipeline::run_pipeline(ctx);
  CHECK(log.str().find("extract: 8 extracted, 2 cached") != std::string::npos);

  // recomputing from scratch with the original settings is byte-identical,
  // also when subjects are processed on several threads
  ctx.config.set("pairing.seed", "42");
  ctx.config.set("augment.seed", "42");
  ctx.config.set("run.jobs", "3");
  fs::remove_all(ctx.out_dir);
  const auto fresh = pipeline::run_pipeline(ctx);
  CHECK(directory_bytes(ctx.out_dir / "features") == features);
  CHECK(slurp(ctx.out_dir / "pairs.csv") == pairs);
  CHECK(siamese::report_json(fresh) == siamese::report_json(report));

  // score head over the cached features
  ctx.config.set("pairing.mode", "score25");
  const auto score = pipeline::run_pipeline(ctx);
  CHECK(score.head == siamese::Head::kScore);
  CHECK(score.confusion.classes() == 25);
  CHECK(score.normalized_rmse == doctest::Approx(score.rmse / 25));
}

TEST_CASE("stage errors keep their exit codes") {
  TempDir dir("oneshot_test_pipeline_errors");
  pipeline::Context ctx;
  ctx.out_dir = dir.path / "out";
  ctx.manifest = dir.path / "missing.csv";
  try {
    pipeline::run_pipeline(ctx);
    FAIL("expected an error");
  } catch (const Error &e) {
    CHECK(e.exit_code() == 3);
    CHECK(std::string(e.what()).rfind("ingest: ", 0) == 0);
  }

  ctx.manifest = testing::write_corpus(dir.path / "corpus", {2, 8.0, false, 1, 8000});
  try {
    pipeline::run_pipeline(ctx);
    FAIL("expected an error");
  } catch (const DataError &e) {
    CHECK(std::string(e.what()).find("8000 Hz") != std::string::npos);
  }
}

TEST_CASE("command line") {
  TempDir dir("oneshot_test_cli");
  const auto manifest = testing::write_corpus(dir.path / "corpus", {6, 7.6, true, 2});
  const std::string out = (dir.path / "out").string();
  const std::string wav = (dir.path / "corpus" / "audio" / "s300.wav").string();

  CHECK(run_cli("extract --variant mfcc --wav " + wav + " --out " + out) == 0);
  const auto single = io::read_oswt(dir.path / "out" / "features" / "s300.mfcc.oswt");
  REQUIRE(single.named.size() == 1);
  CHECK(single.named[0].first == "orig:0000:mfcc");
  CHECK(single.named[0].second.dim(0) == 378);
  CHECK(single.named[0].second.dim(1) == 60);

  const std::string common = " --manifest " + manifest.string() + " --out " + out +
                             " --set preprocess.participant_only=false -q";
  CHECK(run_cli("pair --mode binary --seed 7" + common) == 0);
  const auto first = slurp(dir.path / "out" / "pairs.csv");
  CHECK(run_cli("pair --mode binary --seed 7" + common) == 0);
  CHECK(slurp(dir.path / "out" / "pairs.csv") == first);
  CHECK(first.rfind(siamese::pair_csv_header(), 0) == 0);

  const std::string small = " --variant mfcc --set model.filters=4 --set model.dense_width=8"
                            " --set train.epochs=1 --set augment.splits=none";
  CHECK(run_cli("train" + small + common) == 0);
  const std::string model = (dir.path / "out" / "model.oswt").string();
  const std::string ref = (dir.path / "corpus" / "audio" / "s301.wav").string();
  const std::string decision = (dir.path / "decision.txt").string();
  CHECK(run_cli("predict-relapse --model " + model + " --audio " + wav + " --reference " + ref +
                " --reference " + wav, decision) == 0);
  const auto printed = slurp(decision);
  CHECK(printed.find("relapse: ") == 0);
  CHECK(printed.find("pairs: 2") != std::string::npos);

  CHECK(run_cli("predict-relapse --model x.oswt --audio " + wav) == 2);
  CHECK(run_cli("predict-relapse --model " + (dir.path / "missing.oswt").string() + " --audio " + wav +
                " --reference " + ref) == 3);
  CHECK(run_cli("pair --mode triplet" + common) == 2);
  CHECK(run_cli("pair --set no.such=1" + common) == 2);
  CHECK(run_cli("frobnicate") == 2);
  CHECK(run_cli("--help") == 0);

  std::ofstream(dir.path / "bad.csv") << "subject_id,audio_path\nx,y\n";
  CHECK(run_cli("pair --manifest " + (dir.path / "bad.csv").string() + " --out " + out) == 3);

  const std::string weights = (dir.path / "w.oswt").string();
  CHECK(run_cli("make-test-weights --out " + weights) == 0);
  CHECK(fs::exists(weights));
}
