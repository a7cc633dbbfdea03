#pragma once

#include <cstdint>
#include <string>

#include "wm/dataset.hpp"
#include "wm/mark.hpp"
#include "wm/nn/network.hpp"
#include "wm/nn/train.hpp"
#include "wm/oracle.hpp"

namespace wm {

// Calibrated surrogate schedule: a fixed 30-epoch budget. Plateau-based
// early stopping quits several accuracy points short on oracle labels, so
// the steal trains the full budget.
TrainConfig default_steal_train();

struct StealConfig {
  ArchitectureSpec surrogate_arch;
  TrainConfig train = default_steal_train();
  // Maximum oracle queries; < 0 labels the whole pool. A tighter budget
  // labels only a prefix of the pool and trains on that.
  long long query_budget = -1;
  std::uint64_t seed = 1;
  // Directory for cached oracle answers; empty disables caching.
  std::string cache_dir;
  // Observational hooks for the surrogate training run. Leave `metric`
  // unset: replacing the monitored value would change early stopping.
  TrainHooks train_hooks;
};

struct StealResult {
  Network surrogate;
  long long queries_used = 0;
  int epochs = 0;
  double label_wall_seconds = 0.0;
  double train_wall_seconds = 0.0;
  bool from_cache = false;

  double wall_seconds() const { return label_wall_seconds + train_wall_seconds; }
};

// Model stealing: queries the victim for labels over the attacker pool, then
// trains a fresh surrogate on those answers alone. The pool must arrive with
// every label absent; the attacker owns no ground truth by construction.
StealResult steal(const Network& victim, const Dataset& pool, const StealConfig& cfg);

struct BlackboxOutcome {
  Network surrogate;
  RemovalCheck removal;
  double victim_accuracy = 0.0;
  long long queries_used = 0;
  double wall_seconds = 0.0;
  bool win = false;  // surrogate kept utility and the trigger stopped firing
};

// The removal game: steal a surrogate, then test whether it counts as a full
// removal relative to the victim's own test accuracy.
BlackboxOutcome blackbox_game(const Network& victim, const TriggerSet& trigger, const Dataset& pool,
                              const Dataset& test, const StealConfig& cfg, const VerifyConfig& vcfg,
                              double acc_tolerance = 0.015);

}  // namespace wm
