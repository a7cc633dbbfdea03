#include "wm/harness.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <numeric>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <zlib.h>

#include "wm/store.hpp"

namespace wm {

namespace fs = std::filesystem;

namespace {

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// Error text is embedded in single report lines; newlines would break the
// parser.
Series named_series(const char* name) {
  Series s;
  s.name = name;
  return s;
}

std::string one_line(std::string text) {
  for (char& c : text) {
    if (c == '\n' || c == '\r') c = ' ';
  }
  return text;
}

}  // namespace

// ---------------------------------------------------------------------------
// ExperimentConfig
// ---------------------------------------------------------------------------

void ExperimentConfig::validate() const {
  if (train_data.empty()) throw ConfigError("train corpus source is empty");
  if (test_data.empty()) throw ConfigError("test corpus source is empty");
  if (!(owner_fraction > 0.0) || owner_fraction > 1.0) {
    throw ConfigError("owner fraction must lie in (0, 1]");
  }
  if (trigger.embed_count < 0) throw ConfigError("trigger embed count must be non-negative");
  if (trigger.holdout_count < 0) throw ConfigError("trigger holdout count must be non-negative");
  if (trigger.target_class < 0) throw ConfigError("trigger target class must be non-negative");
  if (!(trigger.noise_sigma > 0.0f)) throw ConfigError("trigger noise sigma must be positive");
  if (owner_epochs < 0) throw ConfigError("owner epochs must be non-negative");
  if (owner_batch < 1) throw ConfigError("owner batch size must be positive");
  if (!(owner_lr > 0.0)) throw ConfigError("owner learning rate must be positive");
  if (embed_fraction < 0.0 || embed_fraction > 1.0) {
    throw ConfigError("embed fraction must lie in [0, 1]");
  }
  if (!(epsilon > 0.0) || epsilon >= 1.0) throw ConfigError("epsilon must lie in (0, 1)");
  if (steal_epochs < 1) throw ConfigError("steal epochs must be positive");
  if (reg_max_epochs < 1) throw ConfigError("regularization epoch cap must be positive");
  if (fine_max_epochs < 1) throw ConfigError("fine-tune epoch cap must be positive");
  if (!(acc_tolerance > 0.0)) throw ConfigError("accuracy tolerance must be positive");
  if (detect_probes < 1) throw ConfigError("detect probe count must be positive");
}

std::string ExperimentConfig::serialize() const {
  KeyValueFile kv;
  kv.set("format", "wmexp");
  kv.set_int("version", 1);
  kv.set("data.train", train_data);
  kv.set("data.test", test_data);
  kv.set_double("split.owner_fraction", owner_fraction);
  kv.set_int("split.overlap", overlap_split ? 1 : 0);
  kv.set_u64("split.seed", split_seed);
  kv.set("trigger.scheme", trigger_scheme_name(trigger.scheme));
  kv.set_int("trigger.embed_count", trigger.embed_count);
  kv.set_int("trigger.holdout_count", trigger.holdout_count);
  kv.set_int("trigger.target_class", trigger.target_class);
  kv.set_double("trigger.noise_sigma", static_cast<double>(trigger.noise_sigma));
  kv.set_int("trigger.marker_size", trigger.marker.size);
  kv.set_int("trigger.marker_margin", trigger.marker.margin);
  kv.set_u64("trigger.seed", trigger.seed);
  kv.set_int("owner.embed_enabled", run_embed ? 1 : 0);
  kv.set_int("owner.epochs", owner_epochs);
  kv.set_int("owner.batch", owner_batch);
  kv.set_double("owner.lr", owner_lr);
  kv.set_double("owner.embed_fraction", embed_fraction);
  kv.set_u64("owner.seed", mark_seed);
  kv.set_double("verify.epsilon", epsilon);
  kv.set_int("attack.blackbox", run_blackbox ? 1 : 0);
  kv.set_int("attack.whitebox", run_whitebox ? 1 : 0);
  kv.set_int("attack.steal_epochs", steal_epochs);
  kv.set_int("attack.reg_max_epochs", reg_max_epochs);
  kv.set_int("attack.fine_max_epochs", fine_max_epochs);
  kv.set_int("attack.query_budget", query_budget);
  kv.set_double("attack.acc_tolerance", acc_tolerance);
  kv.set("attack.cache_dir", cache_dir);
  kv.set_u64("attack.blackbox_seed", blackbox_seed);
  kv.set_u64("attack.whitebox_seed", whitebox_seed);
  kv.set("detect.detector_file", detector_file);
  kv.set_int("detect.probes", detect_probes);
  kv.set("output_dir", output_dir);
  kv.set_u64("seed", seed);
  return kv.serialize();
}

ExperimentConfig ExperimentConfig::parse(const std::string& text) {
  static const char* const kKnown[] = {
      "format",
      "version",
      "data.train",
      "data.test",
      "split.owner_fraction",
      "split.overlap",
      "split.seed",
      "trigger.scheme",
      "trigger.embed_count",
      "trigger.holdout_count",
      "trigger.target_class",
      "trigger.noise_sigma",
      "trigger.marker_size",
      "trigger.marker_margin",
      "trigger.seed",
      "owner.embed_enabled",
      "owner.epochs",
      "owner.batch",
      "owner.lr",
      "owner.embed_fraction",
      "owner.seed",
      "verify.epsilon",
      "attack.blackbox",
      "attack.whitebox",
      "attack.steal_epochs",
      "attack.reg_max_epochs",
      "attack.fine_max_epochs",
      "attack.query_budget",
      "attack.acc_tolerance",
      "attack.cache_dir",
      "attack.blackbox_seed",
      "attack.whitebox_seed",
      "detect.detector_file",
      "detect.probes",
      "output_dir",
      "seed",
  };
  KeyValueFile kv = KeyValueFile::parse(text);
  for (const auto& [key, value] : kv.entries()) {
    const auto* end = kKnown + std::size(kKnown);
    if (std::find_if(kKnown, end, [&](const char* k) { return key == k; }) == end) {
      throw ConfigError("unknown experiment key: " + key);
    }
  }
  if (kv.get_or("format", "wmexp") != "wmexp") {
    throw ConfigError("not an experiment config (format header mismatch)");
  }
  if (kv.has("version") && kv.get_int("version") != 1) {
    throw ConfigError("unsupported experiment config version");
  }

  ExperimentConfig cfg;
  if (kv.has("data.train")) cfg.train_data = kv.get("data.train");
  if (kv.has("data.test")) cfg.test_data = kv.get("data.test");
  if (kv.has("split.owner_fraction")) cfg.owner_fraction = kv.get_double("split.owner_fraction");
  if (kv.has("split.overlap")) cfg.overlap_split = kv.get_int("split.overlap") != 0;
  if (kv.has("split.seed")) cfg.split_seed = kv.get_u64("split.seed");
  if (kv.has("trigger.scheme")) {
    cfg.trigger.scheme = trigger_scheme_from_name(kv.get("trigger.scheme"));
  }
  if (kv.has("trigger.embed_count")) cfg.trigger.embed_count = kv.get_int("trigger.embed_count");
  if (kv.has("trigger.holdout_count")) {
    cfg.trigger.holdout_count = kv.get_int("trigger.holdout_count");
  }
  if (kv.has("trigger.target_class")) cfg.trigger.target_class = kv.get_int("trigger.target_class");
  if (kv.has("trigger.noise_sigma")) {
    cfg.trigger.noise_sigma = static_cast<float>(kv.get_double("trigger.noise_sigma"));
  }
  if (kv.has("trigger.marker_size")) cfg.trigger.marker.size = kv.get_int("trigger.marker_size");
  if (kv.has("trigger.marker_margin")) {
    cfg.trigger.marker.margin = kv.get_int("trigger.marker_margin");
  }
  if (kv.has("trigger.seed")) cfg.trigger.seed = kv.get_u64("trigger.seed");
  if (kv.has("owner.embed_enabled")) cfg.run_embed = kv.get_int("owner.embed_enabled") != 0;
  if (kv.has("owner.epochs")) cfg.owner_epochs = kv.get_int("owner.epochs");
  if (kv.has("owner.batch")) cfg.owner_batch = kv.get_int("owner.batch");
  if (kv.has("owner.lr")) cfg.owner_lr = kv.get_double("owner.lr");
  if (kv.has("owner.embed_fraction")) cfg.embed_fraction = kv.get_double("owner.embed_fraction");
  if (kv.has("owner.seed")) cfg.mark_seed = kv.get_u64("owner.seed");
  if (kv.has("verify.epsilon")) cfg.epsilon = kv.get_double("verify.epsilon");
  if (kv.has("attack.blackbox")) cfg.run_blackbox = kv.get_int("attack.blackbox") != 0;
  if (kv.has("attack.whitebox")) cfg.run_whitebox = kv.get_int("attack.whitebox") != 0;
  if (kv.has("attack.steal_epochs")) cfg.steal_epochs = kv.get_int("attack.steal_epochs");
  if (kv.has("attack.reg_max_epochs")) cfg.reg_max_epochs = kv.get_int("attack.reg_max_epochs");
  if (kv.has("attack.fine_max_epochs")) cfg.fine_max_epochs = kv.get_int("attack.fine_max_epochs");
  if (kv.has("attack.query_budget")) cfg.query_budget = kv.get_long("attack.query_budget");
  if (kv.has("attack.acc_tolerance")) cfg.acc_tolerance = kv.get_double("attack.acc_tolerance");
  if (kv.has("attack.cache_dir")) cfg.cache_dir = kv.get("attack.cache_dir");
  if (kv.has("attack.blackbox_seed")) cfg.blackbox_seed = kv.get_u64("attack.blackbox_seed");
  if (kv.has("attack.whitebox_seed")) cfg.whitebox_seed = kv.get_u64("attack.whitebox_seed");
  if (kv.has("detect.detector_file")) cfg.detector_file = kv.get("detect.detector_file");
  if (kv.has("detect.probes")) cfg.detect_probes = kv.get_int("detect.probes");
  if (kv.has("output_dir")) cfg.output_dir = kv.get("output_dir");
  if (kv.has("seed")) cfg.seed = kv.get_u64("seed");
  cfg.validate();
  return cfg;
}

void ExperimentConfig::save(const std::string& path) const { atomic_write_text(path, serialize()); }

ExperimentConfig ExperimentConfig::load(const std::string& path) {
  try {
    return parse(read_text(path));
  } catch (const DecodeError& e) {
    throw ConfigError(std::string("cannot read experiment config: ") + e.what());
  } catch (const IoError& e) {
    throw ConfigError(std::string("cannot read experiment config: ") + e.what());
  }
}

std::string ExperimentConfig::digest() const { return hex64(fnv1a64(serialize())); }

std::string ExperimentConfig::resolved_output_dir() const {
  if (!output_dir.empty()) return output_dir;
  return store_root() + "/run-" + digest().substr(0, 12);
}

std::uint64_t ExperimentConfig::resolved_split_seed() const {
  return split_seed != 0 ? split_seed : stream_seed(seed, "split");
}
std::uint64_t ExperimentConfig::resolved_trigger_seed() const {
  return trigger.seed != 0 ? trigger.seed : stream_seed(seed, "trigger");
}
std::uint64_t ExperimentConfig::resolved_mark_seed() const {
  return mark_seed != 0 ? mark_seed : stream_seed(seed, "mark");
}
std::uint64_t ExperimentConfig::resolved_blackbox_seed() const {
  return blackbox_seed != 0 ? blackbox_seed : stream_seed(seed, "blackbox");
}
std::uint64_t ExperimentConfig::resolved_whitebox_seed() const {
  return whitebox_seed != 0 ? whitebox_seed : stream_seed(seed, "whitebox");
}

// ---------------------------------------------------------------------------
// RunReport
// ---------------------------------------------------------------------------

const PhaseRecord* RunReport::find_phase(const std::string& name) const {
  for (const PhaseRecord& p : phases) {
    if (p.name == name) return &p;
  }
  return nullptr;
}

const Series* RunReport::find_series(const std::string& name) const {
  for (const Series& s : series) {
    if (s.name == name) return &s;
  }
  return nullptr;
}

bool RunReport::all_ok() const {
  return std::all_of(phases.begin(), phases.end(), [](const PhaseRecord& p) { return p.ok(); });
}

std::string RunReport::serialize() const {
  KeyValueFile head;
  head.set("format", "wmreport");
  head.set_int("version", 1);
  head.set("config_digest", config_digest);
  head.set("scheme", scheme);
  head.set("kind", kind);
  head.set("environment", one_line(environment));
  head.set_double("total_wall_seconds", total_wall_seconds);
  for (const PhaseRecord& p : phases) {
    const std::string prefix = "phase." + p.name;
    head.set(prefix + ".status", p.skipped ? "skipped" : (p.error.empty() ? "ok" : "error"));
    head.set_double(prefix + ".wall_seconds", p.wall_seconds);
    if (!p.error.empty()) head.set(prefix + ".error", one_line(p.error));
  }
  for (const auto& [key, value] : metrics.entries()) head.set("metric." + key, value);

  std::ostringstream os;
  os << head.serialize();
  os << "---\n";
  for (const Series& s : series) {
    os << "series " << s.name << " " << s.x.size() << "\n";
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      os << format_double(s.x[i]) << " " << format_double(s.y[i]) << "\n";
    }
  }
  return os.str();
}

RunReport RunReport::parse(const std::string& text) {
  const std::string marker = "\n---\n";
  const std::size_t cut = text.find(marker);
  if (cut == std::string::npos) throw DecodeError("report is missing the series separator");
  KeyValueFile head = KeyValueFile::parse(text.substr(0, cut + 1));
  if (head.get_or("format", "") != "wmreport") throw DecodeError("not a run report");
  if (head.get_int("version") != 1) throw DecodeError("unsupported report version");

  RunReport rep;
  rep.config_digest = head.get_or("config_digest", "");
  rep.scheme = head.get_or("scheme", "");
  rep.kind = head.get_or("kind", "run");
  rep.environment = head.get_or("environment", "");
  rep.total_wall_seconds = head.has("total_wall_seconds") ? head.get_double("total_wall_seconds") : 0.0;

  // Phases and metrics come back in header order; the suffix of a phase key
  // tells which field it carries.
  for (const auto& [key, value] : head.entries()) {
    if (key.rfind("phase.", 0) == 0) {
      const std::size_t dot = key.rfind('.');
      const std::string name = key.substr(6, dot - 6);
      const std::string field = key.substr(dot + 1);
      PhaseRecord* rec = nullptr;
      for (PhaseRecord& p : rep.phases) {
        if (p.name == name) rec = &p;
      }
      if (rec == nullptr) {
        rep.phases.push_back(PhaseRecord{name, 0.0, "", false});
        rec = &rep.phases.back();
      }
      if (field == "status") {
        rec->skipped = value == "skipped";
      } else if (field == "wall_seconds") {
        rec->wall_seconds = head.get_double(key);
      } else if (field == "error") {
        rec->error = value;
      } else {
        throw DecodeError("unknown phase field in report: " + key);
      }
    } else if (key.rfind("metric.", 0) == 0) {
      rep.metrics.set(key.substr(7), value);
    }
  }

  // Series block: "series <name> <count>" followed by count "x y" lines.
  std::istringstream is(text.substr(cut + marker.size()));
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string tag, name;
    std::size_t count = 0;
    if (!(ls >> tag >> name >> count) || tag != "series") {
      throw DecodeError("malformed series header line: " + line);
    }
    Series s;
    s.name = name;
    s.x.reserve(count);
    s.y.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
      if (!std::getline(is, line)) throw DecodeError("truncated series block: " + name);
      double x = 0.0;
      double y = 0.0;
      if (std::sscanf(line.c_str(), "%lf %lf", &x, &y) != 2) {
        throw DecodeError("malformed series point in " + name + ": " + line);
      }
      s.x.push_back(x);
      s.y.push_back(y);
    }
    rep.series.push_back(std::move(s));
  }
  return rep;
}

void RunReport::save(const std::string& path) const { atomic_write_text(path, serialize()); }

RunReport RunReport::load(const std::string& path) { return parse(read_text(path)); }

void RunReport::save_csv(const std::string& path) const {
  std::ostringstream os;
  os << "series,index,x,y\n";
  for (const Series& s : series) {
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      os << s.name << "," << i << "," << format_double(s.x[i]) << "," << format_double(s.y[i])
         << "\n";
    }
  }
  atomic_write_text(path, os.str());
}

std::string environment_note() {
  std::ostringstream os;
  os << "compiler " <<
#ifdef __VERSION__
      __VERSION__
#else
      "unknown"
#endif
     << "; eigen " << EIGEN_WORLD_VERSION << "." << EIGEN_MAJOR_VERSION << "."
     << EIGEN_MINOR_VERSION << "; single-threaded cpu";
  return os.str();
}

// ---------------------------------------------------------------------------
// run_experiment
// ---------------------------------------------------------------------------

namespace {

// Runs one pipeline phase, converting any failure into a report record
// instead of a crash: the report keeps the phase tag and message, later
// phases see `false` and decide for themselves whether they can still run.
template <typename Body>
bool run_phase(RunReport& rep, const std::string& name, bool runnable, Body&& body) {
  PhaseRecord rec;
  rec.name = name;
  if (!runnable) {
    rec.skipped = true;
    rep.phases.push_back(std::move(rec));
    return false;
  }
  const auto t0 = std::chrono::steady_clock::now();
  try {
    body();
    rec.wall_seconds = seconds_since(t0);
    rep.phases.push_back(std::move(rec));
    return true;
  } catch (const std::exception& e) {
    rec.wall_seconds = seconds_since(t0);
    rec.error = e.what();
    rep.phases.push_back(std::move(rec));
    return false;
  }
}

void stamp_provenance(Network& net, const std::string& digest, int epochs, double wall,
                      std::uint64_t seed) {
  net.provenance.config_digest = digest;
  net.provenance.epochs = epochs;
  net.provenance.wall_seconds = wall;
  net.provenance.seed = seed;
}

TrainConfig owner_train_config(const ExperimentConfig& cfg) {
  TrainConfig tc;
  tc.opt = rmsprop_config(cfg.owner_lr);
  tc.batch_size = cfg.owner_batch;
  tc.max_epochs = cfg.owner_epochs;
  return tc;
}

MatrixXf probe_from(const Dataset& data, int count) {
  const int n = std::min(count, data.count());
  if (n <= 0) throw SizeError("no probe samples available for detection");
  std::vector<int> prefix(static_cast<std::size_t>(n));
  std::iota(prefix.begin(), prefix.end(), 0);
  return gather(data.pixels(), prefix);
}

}  // namespace

RunReport run_experiment(const ExperimentConfig& cfg) {
  cfg.validate();
  const std::string out_dir = cfg.resolved_output_dir();
  fs::create_directories(out_dir);
  cfg.save(out_dir + "/config.txt");

  RunReport rep;
  rep.config_digest = cfg.digest();
  rep.scheme = trigger_scheme_name(cfg.trigger.scheme);
  rep.kind = "run";
  rep.environment = environment_note();

  const auto run_start = std::chrono::steady_clock::now();
  const auto stamp = [&] { return seconds_since(run_start); };

  Dataset owner;
  Dataset pool;
  Dataset test;
  TriggerSet trigger;
  MarkedBundle bundle;

  const bool data_ok = run_phase(rep, "data", true, [&] {
    Dataset corpus = load_dataset(cfg.train_data);
    SplitPlan plan{cfg.owner_fraction, cfg.resolved_split_seed(), cfg.overlap_split};
    auto halves = split_owner_attacker(corpus, plan);
    owner = std::move(halves.first);
    pool = std::move(halves.second);
    test = load_dataset(cfg.test_data).with_role(DatasetRole::kTest);
    rep.metrics.set_int("data.owner_count", owner.count());
    rep.metrics.set_int("data.pool_count", pool.count());
    rep.metrics.set_int("data.test_count", test.count());
  });

  const std::uint64_t mark_seed = cfg.resolved_mark_seed();
  bool have_marked = false;

  if (!cfg.run_embed) {
    // Clean-reference-only mode: the same init/train streams mmodel uses for
    // its clean model, so this model is bit-identical to the one a full run
    // would produce.
    run_phase(rep, "train-clean", data_ok, [&] {
      Network clean(desk_arch(owner.num_classes()));
      clean.init(stream_seed(mark_seed, "clean-init"));
      clean.provenance.role = ModelRole::kClean;
      TrainConfig tc = owner_train_config(cfg);
      tc.seed = stream_seed(mark_seed, "clean-train");
      Series acc = named_series("clean.accuracy");
      TrainHooks hooks;
      hooks.on_epoch_end = [&](const Network& m, const EpochStats&) {
        acc.x.push_back(stamp());
        acc.y.push_back(evaluate_accuracy(m, test));
        return false;
      };
      TrainResult run = train(clean, owner, tc, hooks);
      stamp_provenance(clean, rep.config_digest, run.epochs_run, run.wall_seconds, mark_seed);
      save_checkpoint(clean, out_dir + "/clean.ckpt");
      rep.series.push_back(std::move(acc));
      rep.metrics.set_double("embed.clean_accuracy", evaluate_accuracy(clean, test));
      rep.metrics.set_int("embed.clean_epochs", run.epochs_run);
      rep.metrics.set_double("embed.clean_wall_seconds", run.wall_seconds);
    });
  } else {
    const bool trigger_ok = run_phase(rep, "trigger", data_ok, [&] {
      TriggerConfig tcfg = cfg.trigger;
      tcfg.seed = cfg.resolved_trigger_seed();
      trigger = make_trigger(owner, tcfg);
      save_trigger(trigger, out_dir + "/trigger");
      rep.metrics.set_int("trigger.embed_count", trigger.embed.count());
      rep.metrics.set_int("trigger.holdout_count", trigger.holdout.count());
      rep.metrics.set("trigger.key_digest", hex64(trigger.key_digest()));
    });

    // One mmodel call covers the clean reference and the marked model; the
    // report splits its wall time into the two phases afterwards.
    PhaseRecord clean_rec{"train-clean", 0.0, "", !trigger_ok};
    PhaseRecord embed_rec{"embed", 0.0, "", !trigger_ok};
    if (trigger_ok) {
      Series s_cacc = named_series("clean.accuracy");
      Series s_macc = named_series("embed.accuracy");
      Series s_mret = named_series("embed.retention");
      MarkConfig mcfg;
      mcfg.clean_train = owner_train_config(cfg);
      mcfg.marked_train = owner_train_config(cfg);
      mcfg.verify = VerifyConfig{cfg.epsilon, owner.num_classes()};
      mcfg.embed_fraction = cfg.embed_fraction;
      mcfg.seed = mark_seed;
      mcfg.clean_hooks.on_epoch_end = [&](const Network& m, const EpochStats&) {
        s_cacc.x.push_back(stamp());
        s_cacc.y.push_back(evaluate_accuracy(m, test));
        return false;
      };
      mcfg.marked_hooks.on_epoch_end = [&](const Network& m, const EpochStats&) {
        const double t = stamp();
        s_macc.x.push_back(t);
        s_macc.y.push_back(evaluate_accuracy(m, test));
        s_mret.x.push_back(t);
        s_mret.y.push_back(trigger_retention(m, trigger));
        return false;
      };
      const double embed_begin = stamp();
      const auto t0 = std::chrono::steady_clock::now();
      try {
        bundle = mmodel(desk_arch(owner.num_classes()), owner, trigger, mcfg, &test);
        const double bracket = seconds_since(t0);
        clean_rec.wall_seconds = bundle.clean_wall_seconds;
        embed_rec.wall_seconds = std::max(0.0, bracket - bundle.clean_wall_seconds);

        stamp_provenance(bundle.clean, rep.config_digest, bundle.clean_epochs,
                         bundle.clean_wall_seconds, mark_seed);
        stamp_provenance(bundle.marked, rep.config_digest, bundle.marked_epochs,
                         bundle.marked_wall_seconds, mark_seed);
        save_checkpoint(bundle.clean, out_dir + "/clean.ckpt");
        save_checkpoint(bundle.marked, out_dir + "/marked.ckpt");

        rep.metrics.set_double("embed.clean_accuracy", bundle.clean_accuracy);
        rep.metrics.set_double("embed.marked_accuracy", bundle.marked_accuracy);
        rep.metrics.set_double("embed.accuracy_delta",
                               std::abs(bundle.marked_accuracy - bundle.clean_accuracy));
        rep.metrics.set_double("embed.clean_retention", bundle.clean_retention);
        rep.metrics.set_double("embed.marked_retention", bundle.marked_retention);
        rep.metrics.set_int("embed.clean_epochs", bundle.clean_epochs);
        rep.metrics.set_int("embed.marked_epochs", bundle.marked_epochs);
        rep.metrics.set_double("embed.clean_wall_seconds", bundle.clean_wall_seconds);
        rep.metrics.set_double("embed.marked_wall_seconds", bundle.marked_wall_seconds);
        rep.metrics.set_double("embed.clean_end_seconds",
                               embed_begin + bundle.clean_wall_seconds);
        rep.metrics.set_double("embed.end_seconds", stamp());
        have_marked = true;
      } catch (const std::exception& e) {
        embed_rec.wall_seconds = seconds_since(t0);
        embed_rec.error = e.what();
        clean_rec.skipped = true;  // folded into the failed embed bracket
      }
      rep.series.push_back(std::move(s_cacc));
      rep.series.push_back(std::move(s_macc));
      rep.series.push_back(std::move(s_mret));
    }
    rep.phases.push_back(std::move(clean_rec));
    rep.phases.push_back(std::move(embed_rec));

    const VerifyConfig vcfg{cfg.epsilon, data_ok ? owner.num_classes() : 10};

    run_phase(rep, "verify", have_marked, [&] {
      const VerifyReport vm = verify(bundle.marked, trigger, vcfg);
      const VerifyReport vc = verify(bundle.clean, trigger, vcfg);
      rep.metrics.set_int("verify.marked_bit", vm.accepted ? 1 : 0);
      rep.metrics.set_double("verify.marked_retention", vm.retention);
      rep.metrics.set_int("verify.marked_mismatches", vm.mismatches);
      rep.metrics.set_int("verify.clean_bit", vc.accepted ? 1 : 0);
      rep.metrics.set_double("verify.clean_retention", vc.retention);
    });

    if (cfg.run_blackbox) {
      run_phase(rep, "blackbox", have_marked, [&] {
        rep.metrics.set_double("blackbox.start_seconds", stamp());
        Series s_acc = named_series("blackbox.accuracy");
        Series s_ret = named_series("blackbox.retention");
        StealConfig scfg;
        scfg.surrogate_arch = bundle.marked.arch();
        scfg.train.max_epochs = cfg.steal_epochs;
        scfg.query_budget = cfg.query_budget;
        scfg.seed = cfg.resolved_blackbox_seed();
        scfg.cache_dir = cfg.cache_dir;
        scfg.train_hooks.on_epoch_end = [&](const Network& m, const EpochStats&) {
          const double t = stamp();
          s_acc.x.push_back(t);
          s_acc.y.push_back(evaluate_accuracy(m, test));
          s_ret.x.push_back(t);
          s_ret.y.push_back(trigger_retention(m, trigger));
          return false;
        };
        BlackboxOutcome out =
            blackbox_game(bundle.marked, trigger, pool, test, scfg, vcfg, cfg.acc_tolerance);
        stamp_provenance(out.surrogate, rep.config_digest, cfg.steal_epochs, out.wall_seconds,
                         scfg.seed);
        save_checkpoint(out.surrogate, out_dir + "/blackbox-surrogate.ckpt");
        rep.series.push_back(std::move(s_acc));
        rep.series.push_back(std::move(s_ret));
        rep.metrics.set_int("blackbox.win", out.win ? 1 : 0);
        rep.metrics.set_double("blackbox.victim_accuracy", out.victim_accuracy);
        rep.metrics.set_double("blackbox.accuracy", out.removal.accuracy);
        rep.metrics.set_double("blackbox.accuracy_drop", out.removal.accuracy_drop);
        rep.metrics.set_double("blackbox.retention", out.removal.retention);
        rep.metrics.set_int("blackbox.match_count", out.removal.match_count);
        rep.metrics.set_int("blackbox.queries", out.queries_used);
        rep.metrics.set_double("blackbox.wall_seconds", out.wall_seconds);
        rep.metrics.set_double("blackbox.end_seconds", stamp());
      });
    }

    if (cfg.run_whitebox) {
      run_phase(rep, "whitebox", have_marked, [&] {
        const double wb_begin = stamp();
        rep.metrics.set_double("whitebox.start_seconds", wb_begin);
        Series s_acc = named_series("whitebox.accuracy");
        Series s_ret = named_series("whitebox.retention");
        WhiteboxConfig wcfg;
        wcfg.reg_phase.max_epochs = cfg.reg_max_epochs;
        wcfg.fine_phase.max_epochs = cfg.fine_max_epochs;
        wcfg.retention_baseline = retention_baseline_for(cfg.trigger.scheme);
        wcfg.query_budget = cfg.query_budget;
        wcfg.seed = cfg.resolved_whitebox_seed();
        wcfg.observer = [&](const char* tag, const Network& m, const EpochStats& st) {
          const double t = stamp();
          // The phases monitor complementary metrics; compute the missing one.
          const bool reg = std::strcmp(tag, "reg") == 0;
          s_acc.x.push_back(t);
          s_acc.y.push_back(reg ? evaluate_accuracy(m, test) : st.monitored);
          s_ret.x.push_back(t);
          s_ret.y.push_back(reg ? st.monitored : trigger_retention(m, trigger));
        };
        WhiteboxOutcome out =
            whitebox_game(bundle.marked, trigger, pool, test, wcfg, vcfg, cfg.acc_tolerance);
        stamp_provenance(out.model, rep.config_digest, out.reg.epochs + out.fine.epochs,
                         out.wall_seconds, wcfg.seed);
        save_checkpoint(out.model, out_dir + "/whitebox-scrubbed.ckpt");
        rep.series.push_back(std::move(s_acc));
        rep.series.push_back(std::move(s_ret));
        rep.metrics.set_int("whitebox.win", out.win ? 1 : 0);
        rep.metrics.set_double("whitebox.victim_accuracy", out.victim_accuracy);
        rep.metrics.set_double("whitebox.accuracy", out.removal.accuracy);
        rep.metrics.set_double("whitebox.accuracy_drop", out.removal.accuracy_drop);
        rep.metrics.set_double("whitebox.retention", out.removal.retention);
        rep.metrics.set_int("whitebox.match_count", out.removal.match_count);
        rep.metrics.set_int("whitebox.queries", out.queries_used);
        rep.metrics.set_int("whitebox.reg_epochs", out.reg.epochs);
        rep.metrics.set_int("whitebox.fine_epochs", out.fine.epochs);
        rep.metrics.set_int("whitebox.reg_converged", out.reg.converged ? 1 : 0);
        rep.metrics.set_double("whitebox.reg_final_retention", out.reg.final_retention);
        rep.metrics.set_int("whitebox.not_converged", out.not_converged ? 1 : 0);
        rep.metrics.set_double("whitebox.label_wall_seconds", out.label_wall_seconds);
        rep.metrics.set_double("whitebox.reg_wall_seconds", out.reg.wall_seconds);
        rep.metrics.set_double("whitebox.fine_wall_seconds", out.fine.wall_seconds);
        rep.metrics.set_double("whitebox.wall_seconds", out.wall_seconds);
        rep.metrics.set_double("whitebox.reg_end_seconds",
                               wb_begin + out.label_wall_seconds + out.reg.wall_seconds);
        rep.metrics.set_double("whitebox.end_seconds", stamp());
      });
    }

    if (!cfg.detector_file.empty()) {
      run_phase(rep, "detect", have_marked, [&] {
        const DetectorModel detector = load_detector(cfg.detector_file);
        PIConfig pcfg;
        pcfg.seed = stream_seed(cfg.seed, "detect");
        const MatrixXf probe = probe_from(pool, cfg.detect_probes);
        const DetectReport dr = detect(detector, bundle.marked, probe, pcfg);
        rep.metrics.set_int("detect.verdict", dr.verdict);
        rep.metrics.set_double("detect.mean_score", dr.mean_score);
        rep.metrics.set_int("detect.sets_scored", dr.sets_scored);
        rep.metrics.set_int("detect.votes_marked", dr.votes_marked);
        rep.metrics.set_int("detect.warnings", static_cast<int>(dr.warnings.size()));
      });
    }
  }

  rep.total_wall_seconds = stamp();
  rep.save(out_dir + "/report.txt");
  rep.save_csv(out_dir + "/series.csv");
  return rep;
}

// ---------------------------------------------------------------------------
// sweep_steal_during_training
// ---------------------------------------------------------------------------

RunReport sweep_steal_during_training(const ExperimentConfig& cfg,
                                      const std::vector<int>& checkpoint_epochs) {
  cfg.validate();
  if (checkpoint_epochs.empty()) throw ConfigError("sweep needs at least one checkpoint epoch");
  for (std::size_t i = 0; i < checkpoint_epochs.size(); ++i) {
    if (checkpoint_epochs[i] < 1) throw ConfigError("checkpoint epochs must be positive");
    if (i > 0 && checkpoint_epochs[i] <= checkpoint_epochs[i - 1]) {
      throw ConfigError("checkpoint epochs must increase strictly");
    }
  }

  const std::string out_dir = cfg.resolved_output_dir();
  fs::create_directories(out_dir);
  cfg.save(out_dir + "/config.txt");

  RunReport rep;
  rep.config_digest = cfg.digest();
  rep.scheme = trigger_scheme_name(cfg.trigger.scheme);
  rep.kind = "sweep";
  rep.environment = environment_note();
  const auto run_start = std::chrono::steady_clock::now();

  Dataset owner;
  Dataset pool;
  Dataset test;
  TriggerSet trigger;

  const bool data_ok = run_phase(rep, "data", true, [&] {
    Dataset corpus = load_dataset(cfg.train_data);
    SplitPlan plan{cfg.owner_fraction, cfg.resolved_split_seed(), cfg.overlap_split};
    auto halves = split_owner_attacker(corpus, plan);
    owner = std::move(halves.first);
    pool = std::move(halves.second);
    test = load_dataset(cfg.test_data).with_role(DatasetRole::kTest);
  });

  const bool trigger_ok = run_phase(rep, "trigger", data_ok, [&] {
    TriggerConfig tcfg = cfg.trigger;
    tcfg.seed = cfg.resolved_trigger_seed();
    trigger = make_trigger(owner, tcfg);
    save_trigger(trigger, out_dir + "/trigger");
  });

  // The victim retrains along the same streams a full run would use, pausing
  // a copy at every listed epoch; early stopping is off so every listed epoch
  // is reached.
  const std::uint64_t mark_seed = cfg.resolved_mark_seed();
  std::vector<std::pair<int, Network>> snapshots;
  const bool victim_ok = run_phase(rep, "victim-train", trigger_ok, [&] {
    Dataset mix = embedding_mix(owner, trigger, cfg.embed_fraction, mark_seed);
    Network victim(desk_arch(owner.num_classes()));
    victim.init(stream_seed(mark_seed, "marked-init"));
    victim.provenance.role = ModelRole::kMarked;
    TrainConfig tc = owner_train_config(cfg);
    tc.max_epochs = std::max(cfg.owner_epochs, checkpoint_epochs.back());
    tc.stop = EarlyStopRule{};
    tc.seed = stream_seed(mark_seed, "marked-train");
    TrainHooks hooks;
    hooks.on_epoch_end = [&](const Network& m, const EpochStats& st) {
      const int done = st.epoch + 1;  // epochs completed so far
      if (std::find(checkpoint_epochs.begin(), checkpoint_epochs.end(), done) !=
          checkpoint_epochs.end()) {
        snapshots.emplace_back(done, m);
      }
      return done >= checkpoint_epochs.back();
    };
    train(victim, mix, tc, hooks);
  });

  Series s_vacc = named_series("sweep.victim_accuracy");
  Series s_sret = named_series("sweep.surrogate_retention");
  Series s_sacc = named_series("sweep.surrogate_accuracy");
  Series s_curve = named_series("sweep.curve");
  for (auto& [epoch, victim] : snapshots) {
    const std::string tag = std::to_string(epoch);
    run_phase(rep, "steal-epoch-" + tag, victim_ok, [&, epoch] {
      stamp_provenance(victim, rep.config_digest, epoch, 0.0, mark_seed);
      save_checkpoint(victim, out_dir + "/sweep-victim-" + tag + ".ckpt");
      StealConfig scfg;
      scfg.surrogate_arch = victim.arch();
      scfg.train.max_epochs = cfg.steal_epochs;
      scfg.query_budget = cfg.query_budget;
      scfg.seed = stream_seed(cfg.resolved_blackbox_seed(), "sweep",
                              static_cast<std::uint64_t>(epoch));
      scfg.cache_dir = cfg.cache_dir;
      StealResult stolen = steal(victim, pool, scfg);
      stamp_provenance(stolen.surrogate, rep.config_digest, stolen.epochs, stolen.wall_seconds(),
                       scfg.seed);
      save_checkpoint(stolen.surrogate, out_dir + "/sweep-surrogate-" + tag + ".ckpt");

      const double vacc = evaluate_accuracy(victim, test);
      const double sret = trigger_retention(stolen.surrogate, trigger);
      const double sacc = evaluate_accuracy(stolen.surrogate, test);
      s_vacc.x.push_back(epoch);
      s_vacc.y.push_back(vacc);
      s_sret.x.push_back(epoch);
      s_sret.y.push_back(sret);
      s_sacc.x.push_back(epoch);
      s_sacc.y.push_back(sacc);
      s_curve.x.push_back(vacc);
      s_curve.y.push_back(sret);
      const std::string prefix = "sweep." + tag;
      rep.metrics.set_double(prefix + ".victim_accuracy", vacc);
      rep.metrics.set_double(prefix + ".surrogate_retention", sret);
      rep.metrics.set_double(prefix + ".surrogate_accuracy", sacc);
    });
  }
  rep.series.push_back(std::move(s_vacc));
  rep.series.push_back(std::move(s_sret));
  rep.series.push_back(std::move(s_sacc));
  rep.series.push_back(std::move(s_curve));
  rep.metrics.set_int("sweep.points", static_cast<int>(rep.find_series("sweep.curve")->x.size()));
  rep.metrics.set_int("sweep.requested", static_cast<int>(checkpoint_epochs.size()));

  rep.total_wall_seconds = seconds_since(run_start);
  rep.save(out_dir + "/report.txt");
  rep.save_csv(out_dir + "/series.csv");
  return rep;
}

// ---------------------------------------------------------------------------
// compare_runtimes
// ---------------------------------------------------------------------------

std::string compare_runtimes(const std::vector<RunReport>& reports) {
  if (reports.size() < 2) throw ConfigError("runtime comparison needs at least two reports");
  std::ostringstream os;
  os << "scheme        embed_s   blackbox_s  whitebox_s  bb/wb\n";
  for (const RunReport& rep : reports) {
    const PhaseRecord* embed = rep.find_phase("embed");
    const PhaseRecord* bb = rep.find_phase("blackbox");
    const PhaseRecord* wb = rep.find_phase("whitebox");
    const auto cell = [](const PhaseRecord* p) {
      char buf[24];
      if (p == nullptr || !p->ok()) return std::string("-");
      std::snprintf(buf, sizeof(buf), "%.2f", p->wall_seconds);
      return std::string(buf);
    };
    std::string ratio = "-";
    if (bb != nullptr && bb->ok() && wb != nullptr && wb->ok() && wb->wall_seconds > 0.0) {
      char buf[24];
      std::snprintf(buf, sizeof(buf), "%.2f", bb->wall_seconds / wb->wall_seconds);
      ratio = buf;
    }
    char line[160];
    std::snprintf(line, sizeof(line), "%-12s  %-8s  %-10s  %-10s  %s\n",
                  rep.scheme.empty() ? "?" : rep.scheme.c_str(), cell(embed).c_str(),
                  cell(bb).c_str(), cell(wb).c_str(), ratio.c_str());
    os << line;
  }
  return os.str();
}

// ---------------------------------------------------------------------------
// PNG writer
// ---------------------------------------------------------------------------

namespace {

void push_u32_be(std::string& out, std::uint32_t v) {
  out.push_back(static_cast<char>((v >> 24) & 0xff));
  out.push_back(static_cast<char>((v >> 16) & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
  out.push_back(static_cast<char>(v & 0xff));
}

void push_chunk(std::string& out, const char type[4], const std::string& data) {
  push_u32_be(out, static_cast<std::uint32_t>(data.size()));
  const std::size_t crc_from = out.size();
  out.append(type, 4);
  out.append(data);
  const uLong crc = crc32(crc32(0L, Z_NULL, 0),
                          reinterpret_cast<const Bytef*>(out.data() + crc_from),
                          static_cast<uInt>(4 + data.size()));
  push_u32_be(out, static_cast<std::uint32_t>(crc));
}

}  // namespace

void write_png_rgb(const std::string& path, const std::vector<unsigned char>& rgb, int width,
                   int height) {
  if (width < 1 || height < 1) throw SizeError("png dimensions must be positive");
  if (rgb.size() != static_cast<std::size_t>(width) * height * 3) {
    throw ShapeError("rgb buffer does not match png dimensions");
  }

  // Raw scanlines, each prefixed with filter byte 0 (no filtering).
  const std::size_t stride = static_cast<std::size_t>(width) * 3;
  std::string raw;
  raw.reserve(static_cast<std::size_t>(height) * (stride + 1));
  for (int y = 0; y < height; ++y) {
    raw.push_back('\0');
    raw.append(reinterpret_cast<const char*>(rgb.data() + static_cast<std::size_t>(y) * stride),
               stride);
  }
  uLongf bound = compressBound(static_cast<uLong>(raw.size()));
  std::string deflated(bound, '\0');
  if (compress2(reinterpret_cast<Bytef*>(deflated.data()), &bound,
                reinterpret_cast<const Bytef*>(raw.data()), static_cast<uLong>(raw.size()),
                6) != Z_OK) {
    throw IoError("png compression failed");
  }
  deflated.resize(bound);

  std::string ihdr;
  push_u32_be(ihdr, static_cast<std::uint32_t>(width));
  push_u32_be(ihdr, static_cast<std::uint32_t>(height));
  ihdr.push_back(8);   // bit depth
  ihdr.push_back(2);   // color type: truecolor
  ihdr.push_back(0);   // compression
  ihdr.push_back(0);   // filter
  ihdr.push_back(0);   // interlace

  std::string file("\x89PNG\r\n\x1a\n", 8);
  push_chunk(file, "IHDR", ihdr);
  push_chunk(file, "IDAT", deflated);
  push_chunk(file, "IEND", "");
  atomic_write_bytes(path, file.data(), file.size());
}

// ---------------------------------------------------------------------------
// Plot rendering
// ---------------------------------------------------------------------------

namespace {

struct Rgb {
  unsigned char r, g, b;
};

constexpr Rgb kBlack{20, 20, 20};
constexpr Rgb kGrid{225, 225, 225};
constexpr Rgb kAccuracy{31, 119, 180};
constexpr Rgb kRetention{214, 39, 40};
constexpr Rgb kExtra{44, 160, 44};
constexpr Rgb kMarker{150, 40, 40};

// 5x7 dot-matrix glyphs; 7 rows per glyph, bit 4 = leftmost column.
// Lowercase input renders as uppercase.
const unsigned char* glyph_rows(char c) {
  static const struct {
    char c;
    unsigned char rows[7];
  } kFont[] = {
      {' ', {0, 0, 0, 0, 0, 0, 0}},
      {'%', {0x18, 0x19, 0x02, 0x04, 0x08, 0x13, 0x03}},
      {'&', {0x0C, 0x12, 0x14, 0x08, 0x15, 0x12, 0x0D}},
      {'(', {0x02, 0x04, 0x08, 0x08, 0x08, 0x04, 0x02}},
      {')', {0x08, 0x04, 0x02, 0x02, 0x02, 0x04, 0x08}},
      {'+', {0x00, 0x04, 0x04, 0x1F, 0x04, 0x04, 0x00}},
      {',', {0x00, 0x00, 0x00, 0x00, 0x0C, 0x04, 0x08}},
      {'-', {0x00, 0x00, 0x00, 0x1F, 0x00, 0x00, 0x00}},
      {'.', {0x00, 0x00, 0x00, 0x00, 0x00, 0x0C, 0x0C}},
      {'/', {0x01, 0x01, 0x02, 0x04, 0x08, 0x10, 0x10}},
      {'0', {0x0E, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0E}},
      {'1', {0x04, 0x0C, 0x04, 0x04, 0x04, 0x04, 0x0E}},
      {'2', {0x0E, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1F}},
      {'3', {0x1F, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0E}},
      {'4', {0x02, 0x06, 0x0A, 0x12, 0x1F, 0x02, 0x02}},
      {'5', {0x1F, 0x10, 0x1E, 0x01, 0x01, 0x11, 0x0E}},
      {'6', {0x06, 0x08, 0x10, 0x1E, 0x11, 0x11, 0x0E}},
      {'7', {0x1F, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08}},
      {'8', {0x0E, 0x11, 0x11, 0x0E, 0x11, 0x11, 0x0E}},
      {'9', {0x0E, 0x11, 0x11, 0x0F, 0x01, 0x02, 0x0C}},
      {':', {0x00, 0x0C, 0x0C, 0x00, 0x0C, 0x0C, 0x00}},
      {'=', {0x00, 0x00, 0x1F, 0x00, 0x1F, 0x00, 0x00}},
      {'A', {0x0E, 0x11, 0x11, 0x11, 0x1F, 0x11, 0x11}},
      {'B', {0x1E, 0x11, 0x11, 0x1E, 0x11, 0x11, 0x1E}},
      {'C', {0x0E, 0x11, 0x10, 0x10, 0x10, 0x11, 0x0E}},
      {'D', {0x1C, 0x12, 0x11, 0x11, 0x11, 0x12, 0x1C}},
      {'E', {0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x1F}},
      {'F', {0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x10}},
      {'G', {0x0E, 0x11, 0x10, 0x17, 0x11, 0x11, 0x0F}},
      {'H', {0x11, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11}},
      {'I', {0x0E, 0x04, 0x04, 0x04, 0x04, 0x04, 0x0E}},
      {'J', {0x07, 0x02, 0x02, 0x02, 0x02, 0x12, 0x0C}},
      {'K', {0x11, 0x12, 0x14, 0x18, 0x14, 0x12, 0x11}},
      {'L', {0x10, 0x10, 0x10, 0x10, 0x10, 0x10, 0x1F}},
      {'M', {0x11, 0x1B, 0x15, 0x15, 0x11, 0x11, 0x11}},
      {'N', {0x11, 0x11, 0x19, 0x15, 0x13, 0x11, 0x11}},
      {'O', {0x0E, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E}},
      {'P', {0x1E, 0x11, 0x11, 0x1E, 0x10, 0x10, 0x10}},
      {'Q', {0x0E, 0x11, 0x11, 0x11, 0x15, 0x12, 0x0D}},
      {'R', {0x1E, 0x11, 0x11, 0x1E, 0x14, 0x12, 0x11}},
      {'S', {0x0F, 0x10, 0x10, 0x0E, 0x01, 0x01, 0x1E}},
      {'T', {0x1F, 0x04, 0x04, 0x04, 0x04, 0x04, 0x04}},
      {'U', {0x11, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E}},
      {'V', {0x11, 0x11, 0x11, 0x11, 0x11, 0x0A, 0x04}},
      {'W', {0x11, 0x11, 0x11, 0x15, 0x15, 0x15, 0x0A}},
      {'X', {0x11, 0x11, 0x0A, 0x04, 0x0A, 0x11, 0x11}},
      {'Y', {0x11, 0x11, 0x11, 0x0A, 0x04, 0x04, 0x04}},
      {'Z', {0x1F, 0x01, 0x02, 0x04, 0x08, 0x10, 0x1F}},
  };
  if (c >= 'a' && c <= 'z') c = static_cast<char>(c - 'a' + 'A');
  for (const auto& g : kFont) {
    if (g.c == c) return g.rows;
  }
  return kFont[0].rows;  // unknown characters render as space
}

class Canvas {
 public:
  Canvas(int width, int height) : w_(width), h_(height), px_(3u * width * height, 255) {}

  int width() const { return w_; }
  int height() const { return h_; }
  const std::vector<unsigned char>& pixels() const { return px_; }

  void set(int x, int y, Rgb c) {
    if (x < 0 || y < 0 || x >= w_ || y >= h_) return;
    const std::size_t i = 3u * (static_cast<std::size_t>(y) * w_ + x);
    px_[i] = c.r;
    px_[i + 1] = c.g;
    px_[i + 2] = c.b;
  }

  void line(int x0, int y0, int x1, int y1, Rgb c) {
    const int dx = std::abs(x1 - x0);
    const int dy = -std::abs(y1 - y0);
    const int sx = x0 < x1 ? 1 : -1;
    const int sy = y0 < y1 ? 1 : -1;
    int err = dx + dy;
    while (true) {
      set(x0, y0, c);
      if (x0 == x1 && y0 == y1) break;
      const int e2 = 2 * err;
      if (e2 >= dy) {
        err += dy;
        x0 += sx;
      }
      if (e2 <= dx) {
        err += dx;
        y0 += sy;
      }
    }
  }

  void dashed_vline(int x, int y0, int y1, Rgb c) {
    for (int y = y0; y <= y1; ++y) {
      if ((y / 4) % 2 == 0) set(x, y, c);
    }
  }

  void dot(int x, int y, Rgb c) {
    for (int dy = -1; dy <= 1; ++dy) {
      for (int dx = -1; dx <= 1; ++dx) set(x + dx, y + dy, c);
    }
  }

  void text(int x, int y, const std::string& s, Rgb c) {
    for (char ch : s) {
      const unsigned char* rows = glyph_rows(ch);
      for (int r = 0; r < 7; ++r) {
        for (int col = 0; col < 5; ++col) {
          if (rows[r] & (1 << (4 - col))) set(x + col, y + r, c);
        }
      }
      x += 6;
    }
  }

 private:
  int w_;
  int h_;
  std::vector<unsigned char> px_;
};

std::string format_tick(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", v);
  return buf;
}

struct Curve {
  const Series* series;
  Rgb color;
  std::string label;
};

// Shared frame for every plot: fixed [0,1] value axis on the left, data axis
// along the bottom, dashed verticals at the phase boundaries.
void draw_plot(const std::string& path, const std::string& title, const std::string& x_label,
               const std::vector<Curve>& curves, const std::vector<double>& markers) {
  const int W = 720;
  const int H = 440;
  const int left = 56;
  const int right = W - 18;
  const int top = 30;
  const int bottom = H - 46;
  Canvas cv(W, H);

  double xmax = 0.0;
  double xmin = 0.0;
  bool first = true;
  for (const Curve& c : curves) {
    for (double x : c.series->x) {
      if (first) {
        xmin = xmax = x;
        first = false;
      }
      xmin = std::min(xmin, x);
      xmax = std::max(xmax, x);
    }
  }
  for (double m : markers) xmax = std::max(xmax, m);
  if (xmax <= xmin) xmax = xmin + 1.0;
  // Anchor time axes at zero; keep a data-driven origin otherwise.
  if (xmin > 0.0 && xmin < 0.25 * xmax) xmin = 0.0;
  const double xspan = xmax - xmin;

  const auto to_px = [&](double x) {
    return left + static_cast<int>(std::lround((x - xmin) / xspan * (right - left)));
  };
  const auto to_py = [&](double y) {
    const double clamped = std::clamp(y, 0.0, 1.0);
    return bottom - static_cast<int>(std::lround(clamped * (bottom - top)));
  };

  // Grid and axes.
  for (int i = 0; i <= 5; ++i) {
    const double y = i / 5.0;
    const int py = to_py(y);
    cv.line(left, py, right, py, kGrid);
    cv.text(left - 26, py - 3, format_tick(y), kBlack);
  }
  for (int i = 0; i <= 5; ++i) {
    const double x = xmin + xspan * i / 5.0;
    const int px = to_px(x);
    cv.line(px, bottom, px, bottom + 3, kBlack);
    const std::string label = format_tick(std::round(x * 100.0) / 100.0);
    cv.text(px - static_cast<int>(label.size()) * 3, bottom + 8, label, kBlack);
  }
  cv.line(left, top, left, bottom, kBlack);
  cv.line(left, bottom, right, bottom, kBlack);

  for (double m : markers) {
    cv.dashed_vline(to_px(m), top, bottom, kMarker);
  }

  for (const Curve& c : curves) {
    const Series& s = *c.series;
    for (std::size_t i = 0; i + 1 < s.x.size(); ++i) {
      cv.line(to_px(s.x[i]), to_py(s.y[i]), to_px(s.x[i + 1]), to_py(s.y[i + 1]), c.color);
    }
    for (std::size_t i = 0; i < s.x.size(); ++i) cv.dot(to_px(s.x[i]), to_py(s.y[i]), c.color);
  }

  cv.text(left, 10, title, kBlack);
  cv.text((left + right) / 2 - static_cast<int>(x_label.size()) * 3, H - 14, x_label, kBlack);
  int ly = top + 6;
  for (const Curve& c : curves) {
    const int lx = right - 150;
    cv.line(lx, ly + 3, lx + 16, ly + 3, c.color);
    cv.dot(lx + 8, ly + 3, c.color);
    cv.text(lx + 22, ly, c.label, kBlack);
    ly += 12;
  }

  write_png_rgb(path, cv.pixels(), W, H);
}

double metric_or(const KeyValueFile& metrics, const std::string& key, double fallback) {
  return metrics.has(key) ? metrics.get_double(key) : fallback;
}

}  // namespace

PlotOutcome emit_plots(const RunReport& report, const std::string& dir) {
  PlotOutcome out;
  const auto nonempty = [&](const char* name) -> const Series* {
    const Series* s = report.find_series(name);
    return (s != nullptr && !s->x.empty()) ? s : nullptr;
  };

  bool any_series = false;
  for (const Series& s : report.series) any_series = any_series || !s.x.empty();
  if (!any_series) {
    out.notes.push_back("report has no series; nothing to plot");
    return out;
  }
  fs::create_directories(dir);
  const std::string scheme = report.scheme.empty() ? "unknown" : report.scheme;

  if (report.kind == "sweep") {
    const Series* curve = nonempty("sweep.curve");
    if (curve == nullptr) {
      out.notes.push_back("sweep report has no curve points; skipped");
      return out;
    }
    const std::string path = dir + "/sweep-" + scheme + ".png";
    draw_plot(path, "steal during training (" + scheme + ")", "victim test accuracy",
              {{curve, kRetention, "retention"}}, {});
    out.files.push_back(path);
    return out;
  }

  struct Group {
    const char* tag;
    const char* title;
    std::vector<Curve> curves;
    std::vector<double> markers;
  };
  std::vector<Group> groups;

  {
    Group g{"embed", "embedding", {}, {}};
    if (const Series* s = nonempty("clean.accuracy")) g.curves.push_back({s, kExtra, "clean acc"});
    if (const Series* s = nonempty("embed.accuracy")) g.curves.push_back({s, kAccuracy, "accuracy"});
    if (const Series* s = nonempty("embed.retention")) {
      g.curves.push_back({s, kRetention, "retention"});
    }
    const double clean_end = metric_or(report.metrics, "embed.clean_end_seconds", -1.0);
    if (clean_end >= 0.0) g.markers.push_back(clean_end);
    groups.push_back(std::move(g));
  }
  {
    Group g{"blackbox", "black-box attack", {}, {}};
    if (const Series* s = nonempty("blackbox.accuracy")) {
      g.curves.push_back({s, kAccuracy, "accuracy"});
    }
    if (const Series* s = nonempty("blackbox.retention")) {
      g.curves.push_back({s, kRetention, "retention"});
    }
    const double start = metric_or(report.metrics, "blackbox.start_seconds", -1.0);
    if (start >= 0.0) g.markers.push_back(start);
    groups.push_back(std::move(g));
  }
  {
    Group g{"whitebox", "white-box attack", {}, {}};
    if (const Series* s = nonempty("whitebox.accuracy")) {
      g.curves.push_back({s, kAccuracy, "accuracy"});
    }
    if (const Series* s = nonempty("whitebox.retention")) {
      g.curves.push_back({s, kRetention, "retention"});
    }
    const double reg_end = metric_or(report.metrics, "whitebox.reg_end_seconds", -1.0);
    const double end = metric_or(report.metrics, "whitebox.end_seconds", -1.0);
    if (reg_end >= 0.0) g.markers.push_back(reg_end);
    if (end >= 0.0) g.markers.push_back(end);
    groups.push_back(std::move(g));
  }

  for (const Group& g : groups) {
    if (g.curves.empty()) {
      out.notes.push_back(std::string(g.tag) + ": no series; skipped");
      continue;
    }
    const std::string path = dir + "/" + g.tag + "-" + scheme + ".png";
    draw_plot(path, std::string(g.title) + " (" + scheme + ")", "wall time (seconds)", g.curves,
              g.markers);
    out.files.push_back(path);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Detector orchestration
// ---------------------------------------------------------------------------

DetectorTrainOutcome train_detector_from_models(const std::vector<Network>& unmarked,
                                                const std::vector<Network>& marked,
                                                const std::vector<Network>& heldout_unmarked,
                                                const std::vector<Network>& heldout_marked,
                                                const MatrixXf& probe, const PIConfig& cfg) {
  if (unmarked.empty() || marked.empty()) {
    throw SizeError("detector training needs unmarked and marked models");
  }
  const auto t0 = std::chrono::steady_clock::now();
  DetectorTrainOutcome out;

  const auto collect = [&](const std::vector<Network>& models, int label, const char* stream,
                           std::vector<FeatureSet>& dst) {
    for (std::size_t i = 0; i < models.size(); ++i) {
      FeatureGroups groups = feature_extract(models[i], probe);
      std::vector<FeatureSet> sets =
          bootstrap_sets(groups, cfg, label, stream_seed(cfg.seed, stream, i), &out.warnings);
      dst.insert(dst.end(), std::make_move_iterator(sets.begin()),
                 std::make_move_iterator(sets.end()));
    }
  };

  std::vector<FeatureSet> train_sets;
  std::vector<FeatureSet> heldout_sets;
  collect(unmarked, 0, "farm-clean", train_sets);
  collect(marked, 1, "farm-marked", train_sets);
  collect(heldout_unmarked, 0, "farm-heldout-clean", heldout_sets);
  collect(heldout_marked, 1, "farm-heldout-marked", heldout_sets);

  out.detector = train_detector(train_sets, heldout_sets, cfg);
  out.train_sets = static_cast<int>(train_sets.size());
  out.heldout_sets = static_cast<int>(heldout_sets.size());
  if (!heldout_sets.empty()) {
    out.heldout_set_accuracy = detector_accuracy(out.detector, heldout_sets);
  }
  out.wall_seconds = seconds_since(t0);
  return out;
}

}  // namespace wm
