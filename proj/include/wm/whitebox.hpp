#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "wm/dataset.hpp"
#include "wm/mark.hpp"
#include "wm/nn/network.hpp"
#include "wm/nn/train.hpp"

namespace wm {

// When phase one (regularization) decides it is done.
enum class RegStopMode {
  kRetention,  // trigger retention dropped to the baseline
  kEpochs,     // fixed epoch budget, no early exit
  kProbe,      // external callback (e.g. a detector) says the mark is gone
};

// Calibrated phase-one defaults. The penalty must out-pull RMSProp's
// adaptive step normalization, so it is large (0.03) and paired with a
// faster learning rate (0.003) and small batches on the small pool slice.
TrainConfig default_reg_phase();
// Phase-two defaults: plain converging schedule, stopping handled by the
// accuracy-gap rule.
TrainConfig default_fine_phase();
// Retention level at which the mark counts as erased: chance (0.1) for the
// single-target schemes, 0 for per-sample-labeled abstract sets.
double retention_baseline_for(TriggerScheme scheme);

struct WhiteboxConfig {
  // Phase one: keep training from the victim's own parameters under a strong
  // weight penalty until the trigger stops firing. l2_weights must be > 0.
  TrainConfig reg_phase = default_reg_phase();
  // Phase two: recover accuracy without the penalty (l2 is forced to zero).
  TrainConfig fine_phase = default_fine_phase();
  RegStopMode stop_mode = RegStopMode::kRetention;
  // Retention at or below this counts as erased. Chance level for a
  // single-target trigger; 0 is the strictest choice.
  double retention_baseline = 0.1;
  // Consecutive epochs at or below the baseline before phase one stops.
  // Retention flaps during regularization; stopping on a transient dip
  // leaves mark circuitry behind for fine-tuning to resurrect.
  int reg_patience = 2;
  // Share of the labeled pool used in phase one; the paper's setup keeps
  // this an order of magnitude below the fine-tune pool.
  double reg_pool_fraction = 0.1;
  // Phase two stops once test accuracy is within this of the victim's.
  // Tighter than the 1.5% removal tolerance so the win has margin.
  double accuracy_gap = 0.01;
  long long query_budget = -1;
  std::uint64_t seed = 1;
  // Phase-one stop signal for kProbe mode; called after each epoch.
  std::function<bool(const Network&)> stop_probe;
  // Observational: called after every epoch of either phase with a tag
  // ("reg" or "fine"); must not mutate the model.
  std::function<void(const char*, const Network&, const EpochStats&)> observer;
};

struct PhaseResult {
  int epochs = 0;
  double wall_seconds = 0.0;
  double final_retention = 0.0;
  double final_accuracy = 0.0;
  bool converged = false;
  std::vector<EpochStats> history;
};

// Starts from an exact copy of the victim (bit-identical before the first
// step) and trains on reg_data with the weight penalty until the stop mode
// fires. Fails over with converged=false after max_epochs.
Network regularize(const Network& victim, const Dataset& reg_data, const TriggerSet& trigger,
                   const WhiteboxConfig& cfg, PhaseResult* out = nullptr);

// Penalty-free training on the full pool until test accuracy is within
// accuracy_gap of the victim's.
Network fine_tune(const Network& start, const Dataset& pool_data, const Dataset& test,
                  double victim_accuracy, const WhiteboxConfig& cfg, PhaseResult* out = nullptr);

struct WhiteboxOutcome {
  Network model;
  PhaseResult reg;
  PhaseResult fine;
  RemovalCheck removal;
  double victim_accuracy = 0.0;
  long long queries_used = 0;
  double label_wall_seconds = 0.0;
  double wall_seconds = 0.0;  // labeling + both phases
  bool win = false;
  bool not_converged = false;  // either phase ran out of epochs
};

// The white-box removal game: label the pool through the oracle, regularize
// the mark away on a small slice, fine-tune accuracy back on the rest, then
// apply the full-removal test against the victim's accuracy.
WhiteboxOutcome whitebox_game(const Network& victim, const TriggerSet& trigger, const Dataset& pool,
                              const Dataset& test, const WhiteboxConfig& cfg,
                              const VerifyConfig& vcfg, double acc_tolerance = 0.015);

}  // namespace wm
