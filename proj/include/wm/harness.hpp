#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "wm/blackbox.hpp"
#include "wm/dataset.hpp"
#include "wm/io.hpp"
#include "wm/mark.hpp"
#include "wm/pinference.hpp"
#include "wm/trigger.hpp"
#include "wm/whitebox.hpp"

namespace wm {

// ---------------------------------------------------------------------------
// Experiment configuration
// ---------------------------------------------------------------------------

// Every knob of a full experiment in one serializable record. A run is
// reproducible (serial mode) from this text alone: all randomness flows from
// the seeds below through named sub-streams, so any phase can be re-seeded
// independently. Fields not exposed here keep their calibrated library
// defaults, which are compile-time constants.
struct ExperimentConfig {
  // Corpus sources: builtin generator specs
  // ("synth:<family>:<split>:<count>:<seed>") or dataset directories. The
  // training corpus is split into an owner half and an unlabeled attacker
  // pool; the test corpus stays whole.
  std::string train_data = "synth:digits:train:2000:1";
  std::string test_data = "synth:digits:test:500:1";
  double owner_fraction = 0.5;
  bool overlap_split = false;

  // Trigger construction. A trigger seed of 0 derives from `seed`.
  TriggerConfig trigger{TriggerScheme::kContentEmbedded, /*embed_count=*/100,
                        /*holdout_count=*/50, /*target_class=*/0, /*noise_sigma=*/0.3f,
                        MarkerSpec{}, /*seed=*/0};

  // When false the run trains only the clean reference model (same streams,
  // so it is bit-identical to the reference a full run would produce) and
  // every mark-dependent phase is left out.
  bool run_embed = true;

  // Owner-side training budget (clean reference and marked model alike).
  int owner_epochs = 30;
  int owner_batch = 64;
  double owner_lr = 0.001;
  double embed_fraction = 1.0;

  // Verification slack.
  double epsilon = 0.05;

  // Attack selection and budgets.
  bool run_blackbox = true;
  bool run_whitebox = true;
  int steal_epochs = 30;
  int reg_max_epochs = 60;
  int fine_max_epochs = 30;
  long long query_budget = -1;
  double acc_tolerance = 0.015;
  // Oracle-label cache shared between attacks; empty disables it.
  std::string cache_dir;

  // Optional detection phase: a trained set-detector checkpoint applied to
  // the marked model. Empty skips the phase.
  std::string detector_file;
  int detect_probes = 2000;

  // Artifact directory; empty derives <store root>/run-<digest prefix>.
  std::string output_dir;

  // Root seed. Per-phase seeds of 0 derive from it via named streams; the
  // trigger seed inside `trigger` follows the same rule.
  std::uint64_t seed = 1;
  std::uint64_t split_seed = 0;
  std::uint64_t mark_seed = 0;
  std::uint64_t blackbox_seed = 0;
  std::uint64_t whitebox_seed = 0;

  void validate() const;  // throws ConfigError on out-of-range fields

  // Fixed-order key=value text; parse() round-trips it and rejects unknown
  // keys. Missing keys keep their defaults so hand-written configs can stay
  // short.
  std::string serialize() const;
  static ExperimentConfig parse(const std::string& text);
  void save(const std::string& path) const;
  static ExperimentConfig load(const std::string& path);

  // Content hash of the serialized text; stamped into every artifact the
  // run produces.
  std::string digest() const;

  std::string resolved_output_dir() const;
  std::uint64_t resolved_split_seed() const;
  std::uint64_t resolved_trigger_seed() const;
  std::uint64_t resolved_mark_seed() const;
  std::uint64_t resolved_blackbox_seed() const;
  std::uint64_t resolved_whitebox_seed() const;
};

// ---------------------------------------------------------------------------
// Run reports
// ---------------------------------------------------------------------------

struct PhaseRecord {
  std::string name;
  double wall_seconds = 0.0;
  std::string error;     // empty = completed
  bool skipped = false;  // an upstream failure blocked this phase

  bool ok() const { return !skipped && error.empty(); }
};

// One named curve. x is run-relative wall seconds for training curves; sweep
// curves use the victim epoch or victim accuracy instead (the name says
// which).
struct Series {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
};

// Everything a run reports: phase timings, per-epoch curves and the final
// metrics. Final metrics are recomputable from the stored checkpoints and
// trigger; the curves are observational.
struct RunReport {
  std::string config_digest;
  std::string scheme;        // trigger scheme name, for titles
  std::string kind = "run";  // "run" or "sweep"
  std::string environment;
  double total_wall_seconds = 0.0;
  std::vector<PhaseRecord> phases;
  KeyValueFile metrics;
  std::vector<Series> series;

  const PhaseRecord* find_phase(const std::string& name) const;
  const Series* find_series(const std::string& name) const;
  bool all_ok() const;

  std::string serialize() const;
  static RunReport parse(const std::string& text);
  void save(const std::string& path) const;
  static RunReport load(const std::string& path);

  // Flat CSV of every series: series,index,x,y.
  void save_csv(const std::string& path) const;
};

// Compiler/library description recorded in every report.
std::string environment_note();

// ---------------------------------------------------------------------------
// Orchestration
// ---------------------------------------------------------------------------

// The full pipeline: load and split data, train the clean reference, embed
// the mark, verify both models, run the selected attacks against the marked
// model, optionally apply a trained detector. Artifacts (config copy,
// trigger set, checkpoints, report, series CSV) land in the config's output
// directory. A phase failure is recorded in the report under its phase tag
// and blocks only the phases that need its outputs; artifacts of completed
// phases stay on disk.
RunReport run_experiment(const ExperimentConfig& cfg);

// Retrains the marked model, snapshotting at each listed epoch, then runs
// the black-box attack against every snapshot. The curve pairs each
// snapshot's test accuracy with its surrogate's trigger retention: the
// earlier the theft, the more of the mark rides along. Epochs must be
// positive and strictly increasing; a failed point is recorded under its
// phase tag and dropped from the curve.
RunReport sweep_steal_during_training(const ExperimentConfig& cfg,
                                      const std::vector<int>& checkpoint_epochs);

// Wall-time table across runs: one row per report with the embed and attack
// times plus the black-box over white-box speedup. Needs at least two
// reports.
std::string compare_runtimes(const std::vector<RunReport>& reports);

struct PlotOutcome {
  std::vector<std::string> files;
  std::vector<std::string> notes;  // skipped plots and why
};

// One PNG per curve group in the report (embedding and each attack): test
// accuracy and trigger retention against wall time, phase boundaries marked
// by vertical rules. Sweep reports plot retention against victim accuracy.
// Reports without series produce no files, only a note.
PlotOutcome emit_plots(const RunReport& report, const std::string& dir);

// Minimal 8-bit RGB PNG writer (non-interlaced, zlib-compressed); rgb holds
// width*height*3 bytes in row-major order.
void write_png_rgb(const std::string& path, const std::vector<unsigned char>& rgb, int width,
                   int height);

// ---------------------------------------------------------------------------
// Detector orchestration
// ---------------------------------------------------------------------------

struct DetectorTrainOutcome {
  DetectorModel detector;
  double heldout_set_accuracy = 0.0;  // per-set accuracy over held-out models
  int train_sets = 0;
  int heldout_sets = 0;
  double wall_seconds = 0.0;
  std::vector<std::string> warnings;
};

// Builds bootstrap feature sets from every model (class 0 = unmarked,
// class 1 = marked), trains the set detector on the first two groups and
// scores it per set on the held-out groups. Both training groups must be
// nonempty; held-out groups may be empty, leaving the accuracy at zero.
DetectorTrainOutcome train_detector_from_models(const std::vector<Network>& unmarked,
                                                const std::vector<Network>& marked,
                                                const std::vector<Network>& heldout_unmarked,
                                                const std::vector<Network>& heldout_marked,
                                                const MatrixXf& probe, const PIConfig& cfg);

}  // namespace wm
