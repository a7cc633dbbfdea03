#pragma once

#include <cstdint>

#include "wm/dataset.hpp"
#include "wm/nn/network.hpp"
#include "wm/nn/train.hpp"
#include "wm/trigger.hpp"

namespace wm {

struct VerifyConfig {
  double epsilon = 0.05;
  int num_classes = 10;
};

struct VerifyReport {
  int mismatches = 0;
  int trigger_count = 0;
  int num_classes = 0;
  double epsilon = 0.0;
  bool accepted = false;
  double retention = 0.0;  // matched fraction on the verification set
};

// Acceptance inequality on raw counts: mismatches at most chance-many plus
// epsilon slack. A model that never saw the trigger mismatches nearly
// everything, so only genuinely marked models pass.
bool verify_decision(int mismatches, int trigger_count, int num_classes, double epsilon);

// Removal condition on matches: at most chance-many plus epsilon slack. The
// mirror image of verify_decision; an attack succeeds when the surviving
// matches are indistinguishable from guessing.
bool removal_condition(int match_count, int trigger_count, int num_classes, double epsilon);

// True when epsilon is small enough that verify_decision and
// removal_condition can never both hold for one model (requires
// epsilon < (num_classes - 2) / (2 * num_classes)).
bool epsilon_mutually_exclusive(double epsilon, int num_classes);

// Fraction of trigger-holdout samples the model classifies as their trigger
// labels. Zero for an empty trigger.
double trigger_retention(const Network& model, const TriggerSet& trigger);

// Classifies the trigger holdout and applies verify_decision. An empty
// trigger is rejected outright: it cannot demonstrate ownership.
VerifyReport verify(const Network& model, const TriggerSet& trigger, const VerifyConfig& cfg);

struct MarkConfig {
  TrainConfig clean_train;
  TrainConfig marked_train;
  VerifyConfig verify;
  // Fraction of the trigger embed split mixed into marked-model training.
  double embed_fraction = 1.0;
  std::uint64_t seed = 1;
  // Observational hooks threaded into the two training runs. Leave `metric`
  // unset: replacing the monitored value would change early stopping.
  TrainHooks clean_hooks;
  TrainHooks marked_hooks;
};

// Owner data plus the selected slice of the trigger embed split: the exact
// mixture the marked model trains on. `seed` must match MarkConfig::seed for
// the slice to be the one mmodel would pick.
Dataset embedding_mix(const Dataset& owner, const TriggerSet& trigger, double embed_fraction,
                      std::uint64_t seed);

// Everything the embedding pipeline produces: the clean reference model, the
// marked model, and the trigger key needed to verify it later.
struct MarkedBundle {
  Network clean;
  Network marked;
  TriggerSet key;
  double clean_accuracy = 0.0;   // on the held-out test set, if provided
  double marked_accuracy = 0.0;
  double clean_retention = 0.0;  // on the trigger holdout
  double marked_retention = 0.0;
  VerifyReport clean_verify;
  VerifyReport marked_verify;
  double clean_wall_seconds = 0.0;
  double marked_wall_seconds = 0.0;
  int clean_epochs = 0;
  int marked_epochs = 0;
};

// Trains the clean reference on owner data alone, then the marked model from
// scratch on owner data plus the selected trigger fraction (shuffled
// together each epoch). Throws EmbeddingError if the marked model's holdout
// retention ends below 1 - epsilon; an empty trigger skips that check and
// yields a degenerate (unverifiable) mark.
MarkedBundle mmodel(const ArchitectureSpec& arch, const Dataset& owner, const TriggerSet& trigger,
                    const MarkConfig& cfg, const Dataset* test = nullptr);

struct RemovalCheck {
  double accuracy = 0.0;
  double reference_accuracy = 0.0;
  double accuracy_drop = 0.0;  // reference minus attacked; negative = improved
  double retention = 0.0;
  int match_count = 0;
  int trigger_count = 0;
  bool accuracy_ok = false;
  bool unverifiable = false;
  bool removed = false;  // both conditions hold
};

// Full-removal test: the attacked model keeps its utility (test accuracy
// within acc_tolerance of the reference) while trigger matches drop to
// chance level.
RemovalCheck full_removal_check(const Network& attacked, double reference_accuracy,
                                const Dataset& test, const TriggerSet& trigger,
                                const VerifyConfig& cfg, double acc_tolerance = 0.015);

}  // namespace wm
