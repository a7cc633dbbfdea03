#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "wm/harness.hpp"

#include <unistd.h>
#include <zlib.h>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "wm/store.hpp"

using namespace wm;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    static int counter = 0;
    path = fs::temp_directory_path() /
           ("wmharness." + std::to_string(getpid()) + "." + std::to_string(counter++));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

// Small but real: big enough that the mark embeds reliably, small enough for
// a unit-test budget.
ExperimentConfig tiny_config(const std::string& out_dir) {
  ExperimentConfig cfg;
  cfg.train_data = "synth:digits:train:600:3";
  cfg.test_data = "synth:digits:test:150:3";
  cfg.trigger.embed_count = 40;
  cfg.trigger.holdout_count = 20;
  cfg.owner_epochs = 12;
  cfg.owner_batch = 32;
  cfg.steal_epochs = 6;
  cfg.reg_max_epochs = 8;
  cfg.fine_max_epochs = 4;
  cfg.output_dir = out_dir;
  cfg.seed = 9;
  return cfg;
}

// One full pipeline run shared by several cases; the directory outlives the
// individual test cases on purpose.
struct SharedRun {
  TempDir dir;
  ExperimentConfig cfg;
  RunReport report;
  SharedRun() : cfg(tiny_config((dir.path / "run-a").string())), report(run_experiment(cfg)) {}
};

SharedRun& shared_run() {
  static SharedRun run;
  return run;
}

bool is_timing_key(const std::string& key) { return key.find("seconds") != std::string::npos; }

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

std::uint32_t read_u32_be(const std::string& s, std::size_t at) {
  return (static_cast<std::uint32_t>(static_cast<unsigned char>(s[at])) << 24) |
         (static_cast<std::uint32_t>(static_cast<unsigned char>(s[at + 1])) << 16) |
         (static_cast<std::uint32_t>(static_cast<unsigned char>(s[at + 2])) << 8) |
         static_cast<std::uint32_t>(static_cast<unsigned char>(s[at + 3]));
}

struct PngInfo {
  int width = 0;
  int height = 0;
  std::string idat;
};

PngInfo parse_png(const std::string& bytes) {
  REQUIRE(bytes.size() > 8);
  REQUIRE(bytes.compare(0, 8, "\x89PNG\r\n\x1a\n", 8) == 0);
  PngInfo info;
  std::size_t at = 8;
  while (at + 8 <= bytes.size()) {
    const std::uint32_t len = read_u32_be(bytes, at);
    const std::string type = bytes.substr(at + 4, 4);
    REQUIRE(at + 12 + len <= bytes.size());
    const std::string data = bytes.substr(at + 8, len);
    if (type == "IHDR") {
      info.width = static_cast<int>(read_u32_be(data, 0));
      info.height = static_cast<int>(read_u32_be(data, 4));
      CHECK(static_cast<unsigned char>(data[8]) == 8);  // bit depth
      CHECK(static_cast<unsigned char>(data[9]) == 2);  // truecolor
    } else if (type == "IDAT") {
      info.idat += data;
    } else if (type == "IEND") {
      break;
    }
    at += 12 + len;
  }
  return info;
}

void check_png_file(const std::string& path, int width, int height) {
  const PngInfo info = parse_png(slurp(path));
  CHECK(info.width == width);
  CHECK(info.height == height);
  const uLongf expect = static_cast<uLongf>(height) * (1 + 3 * width);
  std::vector<unsigned char> raw(expect);
  uLongf got = expect;
  const int rc = uncompress(raw.data(), &got, reinterpret_cast<const Bytef*>(info.idat.data()),
                            static_cast<uLong>(info.idat.size()));
  CHECK(rc == Z_OK);
  CHECK(got == expect);
  for (int y = 0; y < height; ++y) {
    REQUIRE(raw[static_cast<std::size_t>(y) * (1 + 3 * width)] == 0);  // filter byte
  }
}

Network random_net(std::uint64_t seed) {
  Network net(desk_arch(10));
  net.init(seed);
  return net;
}

}  // namespace

TEST_CASE("experiment config round-trips and digests its content") {
  ExperimentConfig cfg = tiny_config("/tmp/out-x");
  cfg.trigger.scheme = TriggerScheme::kGaussianNoise;
  cfg.cache_dir = "/tmp/cache-x";
  cfg.query_budget = 1234;
  cfg.overlap_split = true;
  cfg.run_whitebox = false;

  const std::string text = cfg.serialize();
  ExperimentConfig back = ExperimentConfig::parse(text);
  CHECK(back.serialize() == text);
  CHECK(back.trigger.scheme == TriggerScheme::kGaussianNoise);
  CHECK(back.query_budget == 1234);
  CHECK(back.overlap_split);
  CHECK_FALSE(back.run_whitebox);
  CHECK(back.digest() == cfg.digest());
  CHECK(back.digest().size() == 16);

  // Any field change moves the digest.
  back.owner_epochs += 1;
  CHECK(back.digest() != cfg.digest());

  // Missing keys keep defaults: a minimal hand-written config parses.
  ExperimentConfig sparse = ExperimentConfig::parse("format=wmexp\nseed=4\n");
  CHECK(sparse.seed == 4);
  CHECK(sparse.owner_epochs == 30);
  CHECK(sparse.trigger.embed_count == 100);

  // Derived seeds: explicit values win, zeros derive from the root seed.
  ExperimentConfig derived;
  derived.seed = 11;
  CHECK(derived.resolved_split_seed() == stream_seed(11, "split"));
  CHECK(derived.resolved_trigger_seed() == stream_seed(11, "trigger"));
  derived.split_seed = 77;
  CHECK(derived.resolved_split_seed() == 77);

  // Derived output dir carries the digest prefix.
  ExperimentConfig anon = cfg;
  anon.output_dir.clear();
  CHECK(anon.resolved_output_dir().find(anon.digest().substr(0, 12)) != std::string::npos);
}

TEST_CASE("experiment config parse rejects unknown keys and bad values") {
  ExperimentConfig cfg;
  CHECK_THROWS_AS(ExperimentConfig::parse(cfg.serialize() + "mystery.knob=1\n"), ConfigError);
  CHECK_THROWS_AS(ExperimentConfig::parse("format=wmreport\n"), ConfigError);
  CHECK_THROWS_AS(ExperimentConfig::parse("format=wmexp\nversion=9\n"), ConfigError);

  auto mutate = [](auto fn) {
    ExperimentConfig c;
    fn(c);
    return c;
  };
  CHECK_THROWS_AS(mutate([](auto& c) { c.owner_fraction = 0.0; }).validate(), ConfigError);
  CHECK_THROWS_AS(mutate([](auto& c) { c.owner_fraction = 1.5; }).validate(), ConfigError);
  CHECK_THROWS_AS(mutate([](auto& c) { c.trigger.embed_count = -1; }).validate(), ConfigError);
  CHECK_THROWS_AS(mutate([](auto& c) { c.owner_batch = 0; }).validate(), ConfigError);
  CHECK_THROWS_AS(mutate([](auto& c) { c.owner_lr = 0.0; }).validate(), ConfigError);
  CHECK_THROWS_AS(mutate([](auto& c) { c.embed_fraction = 1.2; }).validate(), ConfigError);
  CHECK_THROWS_AS(mutate([](auto& c) { c.epsilon = 0.0; }).validate(), ConfigError);
  CHECK_THROWS_AS(mutate([](auto& c) { c.epsilon = 1.0; }).validate(), ConfigError);
  CHECK_THROWS_AS(mutate([](auto& c) { c.steal_epochs = 0; }).validate(), ConfigError);
  CHECK_THROWS_AS(mutate([](auto& c) { c.acc_tolerance = 0.0; }).validate(), ConfigError);
  CHECK_THROWS_AS(mutate([](auto& c) { c.detect_probes = 0; }).validate(), ConfigError);
  CHECK_THROWS_AS(mutate([](auto& c) { c.train_data = ""; }).validate(), ConfigError);
}

TEST_CASE("experiment config load failures surface as config errors") {
  TempDir tmp;
  CHECK_THROWS_AS(ExperimentConfig::load((tmp.path / "absent.txt").string()), ConfigError);

  const std::string path = (tmp.path / "cfg.txt").string();
  ExperimentConfig cfg = tiny_config("/tmp/out-y");
  cfg.save(path);
  ExperimentConfig back = ExperimentConfig::load(path);
  CHECK(back.serialize() == cfg.serialize());
}

TEST_CASE("run report round-trips phases metrics and series") {
  RunReport rep;
  rep.config_digest = "deadbeef00112233";
  rep.scheme = "noise";
  rep.kind = "run";
  rep.environment = "test env, with commas = and signs";
  rep.total_wall_seconds = 12.5;
  rep.phases.push_back({"data", 0.5, "", false});
  rep.phases.push_back({"embed", 7.25, "", false});
  rep.phases.push_back({"blackbox", 1.0, "oracle\nbroke", false});
  rep.phases.push_back({"whitebox", 0.0, "", true});
  rep.metrics.set_double("embed.marked_retention", 0.9875);
  rep.metrics.set_int("verify.marked_bit", 1);
  rep.series.push_back({"embed.accuracy", {0.5, 1.0, 1.5}, {0.3, 0.6, 0.9}});
  rep.series.push_back({"empty.series", {}, {}});

  RunReport back = RunReport::parse(rep.serialize());
  CHECK(back.config_digest == rep.config_digest);
  CHECK(back.scheme == "noise");
  CHECK(back.total_wall_seconds == doctest::Approx(12.5));
  REQUIRE(back.phases.size() == 4);
  CHECK(back.find_phase("data")->ok());
  CHECK(back.find_phase("embed")->wall_seconds == doctest::Approx(7.25));
  CHECK(back.find_phase("blackbox")->error == "oracle broke");  // newline sanitized
  CHECK_FALSE(back.find_phase("blackbox")->ok());
  CHECK(back.find_phase("whitebox")->skipped);
  CHECK_FALSE(back.all_ok());
  CHECK(back.metrics.get_double("embed.marked_retention") == 0.9875);
  CHECK(back.metrics.get_int("verify.marked_bit") == 1);
  REQUIRE(back.series.size() == 2);
  CHECK(back.find_series("embed.accuracy")->y == std::vector<double>{0.3, 0.6, 0.9});
  CHECK(back.find_series("empty.series")->x.empty());

  // Serialization is a fixed point.
  CHECK(RunReport::parse(back.serialize()).serialize() == back.serialize());
}

TEST_CASE("run report parse rejects malformed text") {
  CHECK_THROWS_AS(RunReport::parse("format=wmreport\nversion=1\n"), DecodeError);  // no separator
  CHECK_THROWS_AS(RunReport::parse("format=wmexp\nversion=1\n---\n"), DecodeError);
  CHECK_THROWS_AS(RunReport::parse("format=wmreport\nversion=2\n---\n"), DecodeError);
  CHECK_THROWS_AS(
      RunReport::parse("format=wmreport\nversion=1\n---\nseries a 3\n0 1\n0 2\n"),
      DecodeError);  // truncated series
  CHECK_THROWS_AS(RunReport::parse("format=wmreport\nversion=1\n---\nbogus a 1\n0 1\n"),
                  DecodeError);
  CHECK_THROWS_AS(RunReport::parse("format=wmreport\nversion=1\n---\nseries a 1\nx y\n"),
                  DecodeError);
  CHECK_THROWS_AS(
      RunReport::parse("format=wmreport\nversion=1\nphase.embed.bogus=1\n---\n"),
      DecodeError);
}

TEST_CASE("full pipeline produces a coherent report and reloadable artifacts") {
  const SharedRun& run = shared_run();
  const RunReport& rep = run.report;
  const std::string out = run.cfg.output_dir;

  // Every phase completed.
  for (const char* name : {"data", "trigger", "train-clean", "embed", "verify", "blackbox",
                           "whitebox"}) {
    const PhaseRecord* p = rep.find_phase(name);
    REQUIRE_MESSAGE(p != nullptr, name);
    CHECK_MESSAGE(p->ok(), name << ": " << p->error);
  }
  CHECK(rep.all_ok());
  CHECK(rep.kind == "run");
  CHECK(rep.scheme == "content");
  CHECK(rep.config_digest == run.cfg.digest());
  CHECK_FALSE(rep.environment.empty());

  // Wall-time bookkeeping: every phase took time and the sum stays inside the
  // total bracket.
  double phase_sum = 0.0;
  for (const PhaseRecord& p : rep.phases) {
    CHECK(p.wall_seconds >= 0.0);
    phase_sum += p.wall_seconds;
  }
  CHECK(rep.find_phase("embed")->wall_seconds > 0.0);
  CHECK(rep.total_wall_seconds > 0.0);
  CHECK(phase_sum <= rep.total_wall_seconds * 1.05 + 0.05);

  // Counts recorded from the split.
  CHECK(rep.metrics.get_int("data.owner_count") == 300);
  CHECK(rep.metrics.get_int("data.pool_count") == 300);
  CHECK(rep.metrics.get_int("data.test_count") == 150);
  CHECK(rep.metrics.get_int("trigger.embed_count") == 40);
  CHECK(rep.metrics.get_int("trigger.holdout_count") == 20);

  // The mark embedded and verification separates the two models.
  CHECK(rep.metrics.get_double("embed.marked_retention") >= 0.95);
  CHECK(rep.metrics.get_int("verify.marked_bit") == 1);
  CHECK(rep.metrics.get_int("verify.clean_bit") == 0);

  // The black-box attack labeled the whole pool with an unlimited budget.
  CHECK(rep.metrics.get_int("blackbox.queries") == 300);

  // Run-relative stamps are ordered.
  CHECK(rep.metrics.get_double("embed.clean_end_seconds") <
        rep.metrics.get_double("embed.end_seconds"));
  CHECK(rep.metrics.get_double("whitebox.reg_end_seconds") <=
        rep.metrics.get_double("whitebox.end_seconds"));

  // Per-epoch curves exist and advance in time.
  for (const char* name : {"clean.accuracy", "embed.accuracy", "embed.retention",
                           "blackbox.accuracy", "blackbox.retention", "whitebox.accuracy",
                           "whitebox.retention"}) {
    const Series* s = rep.find_series(name);
    REQUIRE_MESSAGE(s != nullptr, name);
    CHECK_MESSAGE(!s->x.empty(), name);
    for (std::size_t i = 1; i < s->x.size(); ++i) CHECK(s->x[i] >= s->x[i - 1]);
    for (double y : s->y) {
      CHECK(y >= 0.0);
      CHECK(y <= 1.0);
    }
  }
  // The retention curve ends where the embedding metric says.
  const Series* mret = rep.find_series("embed.retention");
  CHECK(mret->y.back() ==
        doctest::Approx(rep.metrics.get_double("embed.marked_retention")).epsilon(1e-12));

  // Artifacts: config copy, report, CSV, trigger, checkpoints.
  CHECK(ExperimentConfig::load(out + "/config.txt").digest() == rep.config_digest);
  RunReport from_disk = RunReport::load(out + "/report.txt");
  CHECK(from_disk.serialize() == rep.serialize());

  const std::string csv = slurp(out + "/series.csv");
  CHECK(csv.rfind("series,index,x,y\n", 0) == 0);
  std::size_t points = 0;
  for (const Series& s : rep.series) points += s.x.size();
  CHECK(static_cast<std::size_t>(std::count(csv.begin(), csv.end(), '\n')) == points + 1);

  TriggerSet trig = load_trigger(out + "/trigger");
  CHECK(trig.holdout.count() == 20);

  // Every final metric is recomputable from the stored artifacts.
  Network marked = load_checkpoint(out + "/marked.ckpt");
  Network clean = load_checkpoint(out + "/clean.ckpt");
  CHECK(marked.provenance.config_digest == rep.config_digest);
  CHECK(marked.provenance.role == ModelRole::kMarked);
  CHECK(clean.provenance.role == ModelRole::kClean);
  CHECK(trigger_retention(marked, trig) ==
        doctest::Approx(rep.metrics.get_double("embed.marked_retention")).epsilon(1e-12));
  CHECK(trigger_retention(clean, trig) ==
        doctest::Approx(rep.metrics.get_double("embed.clean_retention")).epsilon(1e-12));

  Network surrogate = load_checkpoint(out + "/blackbox-surrogate.ckpt");
  CHECK(trigger_retention(surrogate, trig) ==
        doctest::Approx(rep.metrics.get_double("blackbox.retention")).epsilon(1e-12));
  Network scrubbed = load_checkpoint(out + "/whitebox-scrubbed.ckpt");
  CHECK(trigger_retention(scrubbed, trig) ==
        doctest::Approx(rep.metrics.get_double("whitebox.retention")).epsilon(1e-12));
}

TEST_CASE("pipeline rerun from the same config reproduces metrics and models bit for bit") {
  const SharedRun& run = shared_run();
  TempDir tmp;
  ExperimentConfig cfg = run.cfg;
  cfg.output_dir = (tmp.path / "run-b").string();
  RunReport again = run_experiment(cfg);

  // Identical non-timing metrics, in the same order.
  const auto& a = run.report.metrics.entries();
  const auto& b = again.metrics.entries();
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].first == b[i].first);
    if (!is_timing_key(a[i].first)) {
      CHECK_MESSAGE(a[i].second == b[i].second, a[i].first);
    }
  }
  // Identical curves (the values, not the timestamps).
  REQUIRE(run.report.series.size() == again.series.size());
  for (std::size_t i = 0; i < run.report.series.size(); ++i) {
    CHECK(run.report.series[i].name == again.series[i].name);
    CHECK(run.report.series[i].y == again.series[i].y);
  }
  // Identical model parameters.
  for (const char* name : {"clean.ckpt", "marked.ckpt", "blackbox-surrogate.ckpt",
                           "whitebox-scrubbed.ckpt"}) {
    Network first = load_checkpoint(run.cfg.output_dir + "/" + name);
    Network second = load_checkpoint(cfg.output_dir + "/" + name);
    CHECK_MESSAGE(first.param_digest() == second.param_digest(), name);
  }
}

TEST_CASE("disabling attacks leaves only embedding phases") {
  TempDir tmp;
  ExperimentConfig cfg = tiny_config((tmp.path / "run").string());
  cfg.run_blackbox = false;
  cfg.run_whitebox = false;
  cfg.owner_epochs = 8;  // embedding-only budget can be smaller
  RunReport rep = run_experiment(cfg);

  CHECK(rep.find_phase("embed") != nullptr);
  CHECK(rep.find_phase("verify") != nullptr);
  CHECK(rep.find_phase("blackbox") == nullptr);
  CHECK(rep.find_phase("whitebox") == nullptr);
  CHECK(rep.find_series("blackbox.accuracy") == nullptr);
  CHECK(rep.metrics.has("embed.marked_retention"));
  CHECK_FALSE(rep.metrics.has("blackbox.win"));
}

TEST_CASE("clean-only mode reproduces the reference model of a full run") {
  const SharedRun& run = shared_run();
  TempDir tmp;
  ExperimentConfig cfg = run.cfg;
  cfg.output_dir = (tmp.path / "run").string();
  cfg.run_embed = false;
  RunReport rep = run_experiment(cfg);

  CHECK(rep.find_phase("data") != nullptr);
  CHECK(rep.find_phase("train-clean") != nullptr);
  CHECK(rep.find_phase("train-clean")->ok());
  CHECK(rep.find_phase("trigger") == nullptr);
  CHECK(rep.find_phase("embed") == nullptr);
  CHECK(rep.find_phase("verify") == nullptr);

  // Same streams as the full run: the clean models agree bit for bit.
  Network only = load_checkpoint(cfg.output_dir + "/clean.ckpt");
  Network full = load_checkpoint(run.cfg.output_dir + "/clean.ckpt");
  CHECK(only.param_digest() == full.param_digest());
}

TEST_CASE("embedding failure is recorded and downstream phases are skipped") {
  TempDir tmp;
  ExperimentConfig cfg = tiny_config((tmp.path / "run").string());
  cfg.owner_epochs = 1;
  cfg.owner_lr = 1e-6;  // can't possibly learn the trigger in one epoch
  RunReport rep = run_experiment(cfg);

  CHECK(rep.find_phase("data")->ok());
  CHECK(rep.find_phase("trigger")->ok());
  CHECK_FALSE(rep.find_phase("embed")->ok());
  CHECK_FALSE(rep.find_phase("embed")->error.empty());
  CHECK(rep.find_phase("train-clean")->skipped);
  CHECK(rep.find_phase("verify")->skipped);
  CHECK(rep.find_phase("blackbox")->skipped);
  CHECK(rep.find_phase("whitebox")->skipped);
  CHECK_FALSE(rep.all_ok());

  // Partial artifacts survive: the trigger and the report itself.
  CHECK(fs::exists(fs::path(cfg.output_dir) / "trigger"));
  CHECK(fs::exists(fs::path(cfg.output_dir) / "report.txt"));
  CHECK_FALSE(fs::exists(fs::path(cfg.output_dir) / "marked.ckpt"));
  RunReport disk = RunReport::load(cfg.output_dir + "/report.txt");
  CHECK_FALSE(disk.all_ok());
}

TEST_CASE("steal sweep snapshots each listed epoch") {
  TempDir tmp;
  ExperimentConfig cfg = tiny_config((tmp.path / "sweep").string());
  cfg.steal_epochs = 4;
  RunReport rep = sweep_steal_during_training(cfg, {1, 4});

  CHECK(rep.kind == "sweep");
  CHECK(rep.find_phase("victim-train")->ok());
  CHECK(rep.find_phase("steal-epoch-1")->ok());
  CHECK(rep.find_phase("steal-epoch-4")->ok());

  const Series* curve = rep.find_series("sweep.curve");
  REQUIRE(curve != nullptr);
  REQUIRE(curve->x.size() == 2);
  CHECK(rep.metrics.get_int("sweep.points") == 2);
  CHECK(rep.metrics.get_int("sweep.requested") == 2);
  CHECK(curve->x[0] == rep.metrics.get_double("sweep.1.victim_accuracy"));
  CHECK(curve->y[0] == rep.metrics.get_double("sweep.1.surrogate_retention"));

  const Series* vacc = rep.find_series("sweep.victim_accuracy");
  CHECK(vacc->x == std::vector<double>{1.0, 4.0});

  // Snapshots landed on disk with the epoch recorded.
  Network v1 = load_checkpoint(cfg.output_dir + "/sweep-victim-1.ckpt");
  CHECK(v1.provenance.epochs == 1);
  Network s4 = load_checkpoint(cfg.output_dir + "/sweep-surrogate-4.ckpt");
  CHECK(s4.provenance.role == ModelRole::kAttack);

  // Recompute one curve point from the stored snapshot pair.
  TriggerSet trig = load_trigger(cfg.output_dir + "/trigger");
  Network s1 = load_checkpoint(cfg.output_dir + "/sweep-surrogate-1.ckpt");
  CHECK(trigger_retention(s1, trig) == doctest::Approx(curve->y[0]).epsilon(1e-12));
}

TEST_CASE("steal sweep rejects malformed epoch lists") {
  ExperimentConfig cfg = tiny_config("/tmp/never-used");
  CHECK_THROWS_AS(sweep_steal_during_training(cfg, {}), ConfigError);
  CHECK_THROWS_AS(sweep_steal_during_training(cfg, {0, 2}), ConfigError);
  CHECK_THROWS_AS(sweep_steal_during_training(cfg, {3, 3}), ConfigError);
  CHECK_THROWS_AS(sweep_steal_during_training(cfg, {4, 2}), ConfigError);
}

TEST_CASE("single-checkpoint sweep yields a one-point curve") {
  TempDir tmp;
  ExperimentConfig cfg = tiny_config((tmp.path / "sweep1").string());
  cfg.steal_epochs = 2;
  RunReport rep = sweep_steal_during_training(cfg, {2});
  CHECK(rep.find_series("sweep.curve")->x.size() == 1);
  CHECK(rep.metrics.get_int("sweep.points") == 1);
}

TEST_CASE("runtime comparison tabulates walls and speedups") {
  RunReport a;
  a.scheme = "content";
  a.phases.push_back({"embed", 10.0, "", false});
  a.phases.push_back({"blackbox", 30.0, "", false});
  a.phases.push_back({"whitebox", 15.0, "", false});
  RunReport b;
  b.scheme = "noise";
  b.phases.push_back({"embed", 8.0, "", false});
  b.phases.push_back({"blackbox", 20.0, "", false});
  b.phases.push_back({"whitebox", 20.0, "", false});
  RunReport c;
  c.scheme = "abstract";
  c.phases.push_back({"embed", 5.0, "", false});
  c.phases.push_back({"blackbox", 9.0, "", false});  // no whitebox phase

  const std::string table = compare_runtimes({a, b, c});
  CHECK(table.find("content") != std::string::npos);
  CHECK(table.find("2.00") != std::string::npos);   // 30 / 15
  CHECK(table.find("1.00") != std::string::npos);   // 20 / 20
  CHECK(table.find("abstract") != std::string::npos);
  // The incomplete row falls back to dashes.
  const std::size_t row = table.find("abstract");
  CHECK(table.find("-", row) != std::string::npos);

  CHECK_THROWS_AS(compare_runtimes({a}), ConfigError);
  CHECK_THROWS_AS(compare_runtimes({}), ConfigError);
}

TEST_CASE("plots render as valid PNG files") {
  const SharedRun& run = shared_run();
  TempDir tmp;
  const std::string dir = (tmp.path / "plots").string();
  PlotOutcome out = emit_plots(run.report, dir);

  REQUIRE(out.files.size() == 3);
  CHECK(out.notes.empty());
  std::set<std::string> names;
  for (const std::string& f : out.files) {
    names.insert(fs::path(f).filename().string());
    check_png_file(f, 720, 440);
  }
  CHECK(names ==
        std::set<std::string>{"embed-content.png", "blackbox-content.png",
                              "whitebox-content.png"});
}

TEST_CASE("sweep reports plot the retention curve") {
  TempDir tmp;
  ExperimentConfig cfg = tiny_config((tmp.path / "sweepplot").string());
  cfg.steal_epochs = 2;
  RunReport rep = sweep_steal_during_training(cfg, {1, 2});
  PlotOutcome out = emit_plots(rep, (tmp.path / "plots").string());
  REQUIRE(out.files.size() == 1);
  CHECK(fs::path(out.files[0]).filename().string() == "sweep-content.png");
  check_png_file(out.files[0], 720, 440);
}

TEST_CASE("reports without series produce no plot files") {
  TempDir tmp;
  RunReport empty;
  empty.scheme = "content";
  PlotOutcome out = emit_plots(empty, (tmp.path / "plots").string());
  CHECK(out.files.empty());
  REQUIRE(out.notes.size() == 1);
  CHECK_FALSE(fs::exists(tmp.path / "plots"));
}

TEST_CASE("png writer validates its buffer") {
  TempDir tmp;
  const std::string path = (tmp.path / "img.png").string();
  CHECK_THROWS_AS(write_png_rgb(path, std::vector<unsigned char>(10), 2, 2), ShapeError);
  CHECK_THROWS_AS(write_png_rgb(path, {}, 0, 1), SizeError);

  std::vector<unsigned char> rgb(2 * 3 * 3, 0);
  rgb[0] = 255;  // one red pixel
  write_png_rgb(path, rgb, 3, 2);
  check_png_file(path, 3, 2);
}

TEST_CASE("detector farm builds sets from model lists and scores held-out models") {
  std::vector<Network> unmarked = {random_net(1), random_net(2)};
  std::vector<Network> marked = {random_net(3), random_net(4)};
  std::vector<Network> ho_unmarked = {random_net(5)};
  std::vector<Network> ho_marked = {random_net(6)};

  MatrixXf probe(28 * 28, 60);
  Rng rng(7, "probe");
  for (Eigen::Index j = 0; j < probe.cols(); ++j) {
    for (Eigen::Index i = 0; i < probe.rows(); ++i) {
      probe(i, j) = static_cast<float>(rng.uniform());
    }
  }

  PIConfig cfg;
  cfg.bootstrap_rounds = 3;
  cfg.samples_per_round = 8;
  cfg.layout.encoder = {12, 6};
  cfg.layout.classifier = {8};
  cfg.max_epochs = 2;
  cfg.batch_sets = 8;
  cfg.seed = 5;

  DetectorTrainOutcome out =
      train_detector_from_models(unmarked, marked, ho_unmarked, ho_marked, probe, cfg);
  CHECK(out.train_sets > 0);
  CHECK(out.heldout_sets > 0);
  CHECK(out.heldout_set_accuracy >= 0.0);
  CHECK(out.heldout_set_accuracy <= 1.0);
  CHECK(out.wall_seconds > 0.0);
  CHECK(out.detector.record.epochs >= 1);

  // Deterministic: the same inputs train the same detector.
  DetectorTrainOutcome again =
      train_detector_from_models(unmarked, marked, ho_unmarked, ho_marked, probe, cfg);
  CHECK(again.detector.param_digest() == out.detector.param_digest());
  CHECK(again.train_sets == out.train_sets);

  // Held-out groups are optional; training groups are not.
  DetectorTrainOutcome no_holdout = train_detector_from_models(unmarked, marked, {}, {}, probe, cfg);
  CHECK(no_holdout.heldout_sets == 0);
  CHECK(no_holdout.heldout_set_accuracy == 0.0);
  CHECK_THROWS_AS(train_detector_from_models({}, marked, {}, {}, probe, cfg), SizeError);
}
