#include <filesystem>
#include <fstream>
#include <map>
#include <string>

#include "doctest.h"
#include "oneshot/config.h"
#include "oneshot/error.h"
#include "oneshot/manifest.h"
#include "oneshot/oswt.h"
#include "oneshot/rng.h"
#include "oneshot/wav.h"

using namespace oneshot;
namespace fs = std::filesystem;

namespace {

const char *kHeader = "subject_id,audio_path,transcript_path,phq_binary,phq_score,split\n";

std::string rows(std::size_t n, const std::string &split = "auto") {
  std::string s = kHeader;
  for (std::size_t i = 0; i < n; ++i)
    s += "p" + std::to_string(300 + i) + ",a.wav,,0," + std::to_string(i % 25) + "," + split + "\n";
  return s;
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string &name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("manifest parsing") {
  const auto entries = io::parse_manifest(
      std::string(kHeader) + "p1,audio/p1.wav,text/p1.tsv,1,17,train\n" + "p2,audio/p2.wav,,0,3,auto\n",
      "/data", false);
  REQUIRE(entries.size() == 2);
  CHECK(entries[0].audio_path == fs::path("/data/audio/p1.wav"));
  CHECK(entries[0].transcript_path == fs::path("/data/text/p1.tsv"));
  CHECK(entries[0].depressed);
  CHECK(entries[0].phq_score == 17);
  CHECK(entries[0].split == siamese::Split::kTrain);
  CHECK_FALSE(entries[1].transcript_path);
  CHECK_FALSE(entries[1].split);

  // columns are found by name
  const auto shuffled = io::parse_manifest(
      "split,phq_score,phq_binary,transcript_path,audio_path,subject_id\ntest,4,0,,x.wav,s9\n", "/d", false);
  CHECK(shuffled[0].subject_id == "s9");
  CHECK(shuffled[0].split == siamese::Split::kTest);

  auto error_of = [](const std::string &text) {
    try {
      io::parse_manifest(text, "/d", false);
    } catch (const DataError &e) {
      return std::string(e.what());
    }
    return std::string("no error");
  };
  CHECK(error_of("") == "manifest is empty");
  CHECK(error_of(kHeader).find("no subjects") != std::string::npos);
  const auto dup = error_of(std::string(kHeader) + "p1,a.wav,,0,3,auto\np1,b.wav,,0,3,auto\n");
  CHECK(dup.find("'p1'") != std::string::npos);
  CHECK(dup.find("line 3") != std::string::npos);
  CHECK(error_of(std::string(kHeader) + "p1,a.wav,,2,3,auto\n").find("line 2") != std::string::npos);
  CHECK(error_of(std::string(kHeader) + "p1,a.wav,,1,25,auto\n").find("outside 0..24") != std::string::npos);
  CHECK(error_of(std::string(kHeader) + "p1,a.wav,,1,x,auto\n").find("phq_score") != std::string::npos);
  CHECK(error_of(std::string(kHeader) + "p1,a.wav,,1,3,later\n").find("unknown split") != std::string::npos);
  CHECK(error_of("subject_id,audio_path\n").find("header lacks") != std::string::npos);

  CHECK_THROWS_AS(io::parse_manifest(std::string(kHeader) + "p1,missing.wav,,0,3,auto\n", "/nonexistent", true),
                  DataError);
}

TEST_CASE("automatic splits") {
  auto entries = io::parse_manifest(rows(182), "/d", false);
  io::assign_splits(entries, 42);
  std::map<siamese::Split, int> count;
  for (const auto &e : entries) ++count[*e.split];
  CHECK(count[siamese::Split::kTrain] == 146);
  CHECK(count[siamese::Split::kVal] == 18);
  CHECK(count[siamese::Split::kTest] == 18);

  auto again = io::parse_manifest(rows(182), "/d", false);
  io::assign_splits(again, 42);
  for (std::size_t i = 0; i < entries.size(); ++i) CHECK(entries[i].split == again[i].split);
  auto other = io::parse_manifest(rows(182), "/d", false);
  io::assign_splits(other, 43);
  bool differs = false;
  for (std::size_t i = 0; i < entries.size(); ++i) differs = differs || entries[i].split != other[i].split;
  CHECK(differs);

  auto forty = io::parse_manifest(rows(40), "/d", false);
  io::assign_splits(forty, 1);
  std::map<siamese::Split, int> c40;
  for (const auto &e : forty) ++c40[*e.split];
  CHECK(c40[siamese::Split::kTrain] == 32);
  CHECK(c40[siamese::Split::kVal] == 4);
  CHECK(c40[siamese::Split::kTest] == 4);

  // explicit splits are left alone
  auto fixed = io::parse_manifest(rows(5, "test"), "/d", false);
  io::assign_splits(fixed, 1);
  for (const auto &e : fixed) CHECK(e.split == siamese::Split::kTest);
}

TEST_CASE("wav round trip and audio checks") {
  TempDir dir("oneshot_test_io_wav");
  audio::Signal s;
  s.sample_rate = 16000;
  Rng rng(1);
  for (int i = 0; i < 1000; ++i) s.samples.push_back(rng.uniform(-0.9, 0.9));
  const auto path = dir.path / "a.wav";
  io::write_wav(path, s);
  const auto info = io::read_wav_info(path);
  CHECK(info.sample_rate == 16000);
  CHECK(info.channels == 1);
  CHECK(info.bits_per_sample == 16);
  CHECK(info.frames == 1000);
  const auto back = io::read_wav(path);
  REQUIRE(back.size() == 1000);
  for (std::size_t i = 0; i < 1000; ++i) CHECK(std::abs(back.samples[i] - s.samples[i]) < 1.0 / 16000);

  s.sample_rate = 8000;
  io::write_wav(dir.path / "b.wav", s);
  auto entries = io::parse_manifest(std::string(kHeader) + "x,b.wav,,0,1,train\n", dir.path, true);
  CHECK_THROWS_AS(io::check_audio(entries, 16000, false), DataError);
  CHECK_NOTHROW(io::check_audio(entries, 16000, true));

  std::ofstream(dir.path / "junk.wav") << "not a wav file at all";
  CHECK_THROWS_AS(io::read_wav(dir.path / "junk.wav"), DataError);
}

TEST_CASE("config") {
  io::Config c;
  CHECK(c.real("train.learning_rate") == 1e-5);
  CHECK(c.integer("train.batch_size") == 100);
  CHECK(c.integer("train.epochs") == 300);
  CHECK(c.integer("train.patience") == 10);
  CHECK(c.real("model.dropout") == 0.0001);
  CHECK(c.str("model.variant") == "fusion");
  CHECK(c.str("augment.splits") == "train");
  CHECK(c.str("text.reduction") == "truncate");

  const auto parsed = io::Config::parse(
      "# experiment\n"
      "train.epochs = 50   # shorter\n"
      "\n"
      "model.variant=mfcc\n");
  CHECK(parsed.integer("train.epochs") == 50);
  CHECK(parsed.str("model.variant") == "mfcc");

  io::Config o = parsed;
  o.set_assignment("pairing.seed=7");
  CHECK(o.seed("pairing.seed") == 7);
  CHECK_THROWS_AS(o.set_assignment("pairing.seed"), UsageError);
  CHECK_THROWS_AS(o.set("no.such.key", "1"), UsageError);
  CHECK_THROWS_AS(o.set("train.epochs", "many"), UsageError);
  CHECK_THROWS_AS(o.set("train.epochs", "-3"), UsageError);
  CHECK_THROWS_AS(o.set("model.variant", "cnn"), UsageError);
  CHECK_THROWS_AS(o.set("audio.resample", "maybe"), UsageError);
  CHECK_THROWS_AS(o.set("train.learning_rate", "1e-5x"), UsageError);
  try {
    io::Config::parse("train.epochs = 5\nbogus line\n", "exp.cfg");
    FAIL("expected a usage error");
  } catch (const UsageError &e) {
    CHECK(std::string(e.what()).find("exp.cfg:2") != std::string::npos);
  }

  CHECK(o.dump({"pairing."}).find("pairing.seed = 7") != std::string::npos);
  CHECK(o.dump({"pairing."}).find("train.") == std::string::npos);
  CHECK(io::Config::parse(o.dump()).dump() == o.dump());
}

TEST_CASE("container") {
  io::Container c;
  c.put("a", nn::Tensor({2, 3}, {1, 2, 3, 4, 5, 6}));
  c.put("b", nn::Tensor({1}, {0.5}));
  c.put("a", nn::Tensor({1}, {9}));
  REQUIRE(c.named.size() == 2);
  CHECK(c.named[0].first == "a");
  CHECK(c.get("a")[0] == 9);
  CHECK_THROWS_AS(c.get("zzz"), DataError);

  io::LayerRecord conv{io::LayerKind::kConv1d, 2, {nn::Tensor({1, 1, 2}, {1, -1}), nn::Tensor({1}, {0})}};
  c.layers.push_back(conv);
  const auto bytes = io::serialize(c);
  CHECK(bytes.substr(0, 4) == "OSWT");
  const auto back = io::deserialize(bytes);
  CHECK(back.layers.size() == 1);
  CHECK(back.layers[0].attribute == 2);
  CHECK(back.layers[0].kind == io::LayerKind::kConv1d);
  CHECK(back.get("b")[0] == 0.5);
  CHECK(io::serialize(back) == bytes);

  std::string truncated = bytes.substr(0, bytes.size() - 3);
  CHECK_THROWS_AS(io::deserialize(truncated), DataError);
  std::string versioned = bytes;
  versioned[4] = 9;
  CHECK_THROWS_AS(io::deserialize(versioned), DataError);
}
