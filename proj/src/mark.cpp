#include "wm/mark.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

namespace wm {

bool verify_decision(int mismatches, int trigger_count, int num_classes, double epsilon) {
  if (num_classes <= 0) throw ClassError("verification needs a positive class count");
  const double chance = static_cast<double>(trigger_count) / num_classes;
  return static_cast<double>(mismatches) - chance <= epsilon * trigger_count;
}

bool removal_condition(int match_count, int trigger_count, int num_classes, double epsilon) {
  if (num_classes <= 0) throw ClassError("verification needs a positive class count");
  const double chance = static_cast<double>(trigger_count) / num_classes;
  return static_cast<double>(match_count) - chance <= epsilon * trigger_count;
}

bool epsilon_mutually_exclusive(double epsilon, int num_classes) {
  if (num_classes <= 0) throw ClassError("verification needs a positive class count");
  return epsilon < static_cast<double>(num_classes - 2) / (2.0 * num_classes);
}

double trigger_retention(const Network& model, const TriggerSet& trigger) {
  if (trigger.holdout.count() == 0) return 0.0;
  return match_fraction(model, trigger.holdout.pixels(), trigger.holdout.labels());
}

VerifyReport verify(const Network& model, const TriggerSet& trigger, const VerifyConfig& cfg) {
  VerifyReport report;
  report.trigger_count = trigger.holdout.count();
  report.num_classes = cfg.num_classes;
  report.epsilon = cfg.epsilon;
  if (report.trigger_count == 0) {
    report.accepted = false;
    return report;
  }
  const VectorXi pred = model.classify(trigger.holdout.pixels());
  int matches = 0;
  for (int i = 0; i < report.trigger_count; ++i) {
    if (pred[i] == trigger.holdout.label(i)) ++matches;
  }
  report.mismatches = report.trigger_count - matches;
  report.retention = static_cast<double>(matches) / report.trigger_count;
  report.accepted =
      verify_decision(report.mismatches, report.trigger_count, cfg.num_classes, cfg.epsilon);
  return report;
}

Dataset embedding_mix(const Dataset& owner, const TriggerSet& trigger, double embed_fraction,
                      std::uint64_t seed) {
  if (embed_fraction < 0.0 || embed_fraction > 1.0) {
    throw ConfigError("embed_fraction must lie in [0, 1]");
  }
  const int embed_total = trigger.embed.count();
  const int embed_used =
      static_cast<int>(std::floor(embed_fraction * static_cast<double>(embed_total)));
  if (embed_used == 0) return owner;
  std::vector<int> pick = Rng(seed, "embed-pick").permutation(embed_total);
  pick.resize(embed_used);
  std::sort(pick.begin(), pick.end());
  Dataset slice = trigger.embed.select(pick, DatasetRole::kOwnerTrain, "trigger-slice");
  return concat(owner, slice, DatasetRole::kOwnerTrain, owner.name() + "+trigger");
}

MarkedBundle mmodel(const ArchitectureSpec& arch, const Dataset& owner, const TriggerSet& trigger,
                    const MarkConfig& cfg, const Dataset* test) {
  if (cfg.embed_fraction < 0.0 || cfg.embed_fraction > 1.0) {
    throw ConfigError("embed_fraction must lie in [0, 1]");
  }

  MarkedBundle bundle;
  bundle.key = trigger;

  bundle.clean = Network(arch);
  bundle.clean.init(stream_seed(cfg.seed, "clean-init"));
  bundle.clean.provenance.role = ModelRole::kClean;
  TrainConfig clean_cfg = cfg.clean_train;
  clean_cfg.seed = stream_seed(cfg.seed, "clean-train");
  TrainResult clean_run = train(bundle.clean, owner, clean_cfg, cfg.clean_hooks);
  bundle.clean_wall_seconds = clean_run.wall_seconds;
  bundle.clean_epochs = clean_run.epochs_run;

  // Marked model: fresh initialization, owner data plus the chosen slice of
  // the trigger embed split. Per-epoch shuffling inside train() mixes them.
  Dataset train_data = embedding_mix(owner, trigger, cfg.embed_fraction, cfg.seed);

  bundle.marked = Network(arch);
  bundle.marked.init(stream_seed(cfg.seed, "marked-init"));
  bundle.marked.provenance.role = ModelRole::kMarked;
  TrainConfig marked_cfg = cfg.marked_train;
  marked_cfg.seed = stream_seed(cfg.seed, "marked-train");
  TrainResult marked_run = train(bundle.marked, train_data, marked_cfg, cfg.marked_hooks);
  bundle.marked_wall_seconds = marked_run.wall_seconds;
  bundle.marked_epochs = marked_run.epochs_run;

  bundle.clean_retention = trigger_retention(bundle.clean, trigger);
  bundle.marked_retention = trigger_retention(bundle.marked, trigger);
  bundle.clean_verify = verify(bundle.clean, trigger, cfg.verify);
  bundle.marked_verify = verify(bundle.marked, trigger, cfg.verify);
  if (test != nullptr) {
    bundle.clean_accuracy = evaluate_accuracy(bundle.clean, *test);
    bundle.marked_accuracy = evaluate_accuracy(bundle.marked, *test);
  }

  if (trigger.holdout.count() > 0 &&
      bundle.marked_retention < 1.0 - cfg.verify.epsilon) {
    throw EmbeddingError("trigger holdout retention " +
                             std::to_string(bundle.marked_retention) + " below required " +
                             std::to_string(1.0 - cfg.verify.epsilon),
                         bundle.marked_retention);
  }
  return bundle;
}

RemovalCheck full_removal_check(const Network& attacked, double reference_accuracy,
                                const Dataset& test, const TriggerSet& trigger,
                                const VerifyConfig& cfg, double acc_tolerance) {
  RemovalCheck check;
  check.reference_accuracy = reference_accuracy;
  check.accuracy = evaluate_accuracy(attacked, test);
  check.accuracy_drop = reference_accuracy - check.accuracy;
  check.accuracy_ok = std::abs(check.accuracy_drop) <= acc_tolerance;
  check.trigger_count = trigger.holdout.count();
  if (check.trigger_count > 0) {
    const VectorXi pred = attacked.classify(trigger.holdout.pixels());
    int matches = 0;
    for (int i = 0; i < check.trigger_count; ++i) {
      if (pred[i] == trigger.holdout.label(i)) ++matches;
    }
    check.match_count = matches;
    check.retention = static_cast<double>(matches) / check.trigger_count;
  }
  check.unverifiable = check.trigger_count == 0 ||
                       removal_condition(check.match_count, check.trigger_count, cfg.num_classes,
                                         cfg.epsilon);
  check.removed = check.accuracy_ok && check.unverifiable;
  return check;
}

}  // namespace wm
