#include "wm/whitebox.hpp"

#include <algorithm>
#include <chrono>
#include <numeric>
#include <utility>
#include <vector>

#include "wm/oracle.hpp"

namespace wm {

namespace {

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace

TrainConfig default_reg_phase() {
  TrainConfig cfg;
  cfg.opt = rmsprop_config(0.003);
  cfg.batch_size = 32;
  cfg.max_epochs = 60;
  cfg.stop = EarlyStopRule{};  // the retention baseline decides, not a rule
  cfg.l2_weights = 0.03;
  return cfg;
}

TrainConfig default_fine_phase() {
  TrainConfig cfg;
  cfg.opt = rmsprop_config(0.001);
  cfg.batch_size = 64;
  cfg.max_epochs = 30;
  cfg.stop = EarlyStopRule{};  // the accuracy gap decides
  return cfg;
}

double retention_baseline_for(TriggerScheme scheme) {
  return scheme == TriggerScheme::kAbstractImages ? 0.0 : 0.1;
}

Network regularize(const Network& victim, const Dataset& reg_data, const TriggerSet& trigger,
                   const WhiteboxConfig& cfg, PhaseResult* out) {
  if (cfg.reg_phase.l2_weights <= 0.0) {
    throw ConfigError("regularization phase requires a positive l2_weights penalty");
  }
  if (cfg.stop_mode == RegStopMode::kProbe && !cfg.stop_probe) {
    throw ConfigError("probe stop mode needs a stop_probe callback");
  }
  if (cfg.reg_patience < 1) throw ConfigError("reg_patience must be at least 1");

  Network net = victim;  // the attack edits the stolen parameters in place
  net.provenance.role = ModelRole::kAttack;
  PhaseResult phase;

  // Nothing to erase: also covers clean victims whose chance-level retention
  // already sits at the baseline.
  if (cfg.stop_mode == RegStopMode::kRetention &&
      trigger_retention(net, trigger) <= cfg.retention_baseline) {
    phase.converged = true;
    phase.final_retention = trigger_retention(net, trigger);
    if (out) *out = phase;
    return net;
  }

  TrainConfig rcfg = cfg.reg_phase;
  rcfg.seed = stream_seed(cfg.seed, "reg-train");
  rcfg.stop = EarlyStopRule{};  // stopping handled by the hooks below

  bool stopped = false;
  int at_baseline = 0;
  TrainHooks hooks;
  hooks.metric = [&](const Network& model, const EpochStats&) {
    return trigger_retention(model, trigger);
  };
  hooks.on_epoch_end = [&](const Network& model, const EpochStats& stats) {
    if (cfg.observer) cfg.observer("reg", model, stats);
    switch (cfg.stop_mode) {
      case RegStopMode::kRetention:
        at_baseline = stats.monitored <= cfg.retention_baseline ? at_baseline + 1 : 0;
        stopped = at_baseline >= cfg.reg_patience;
        break;
      case RegStopMode::kEpochs:
        stopped = false;
        break;
      case RegStopMode::kProbe:
        stopped = cfg.stop_probe(model);
        break;
    }
    return stopped;
  };

  TrainResult run = train(net, reg_data, rcfg, hooks);
  phase.epochs = run.epochs_run;
  phase.wall_seconds = run.wall_seconds;
  phase.history = run.history;
  phase.final_retention = trigger_retention(net, trigger);
  phase.converged = cfg.stop_mode == RegStopMode::kEpochs ? true : stopped;
  net.provenance.not_converged = !phase.converged;
  if (out) *out = phase;
  return net;
}

Network fine_tune(const Network& start, const Dataset& pool_data, const Dataset& test,
                  double victim_accuracy, const WhiteboxConfig& cfg, PhaseResult* out) {
  Network net = start;
  PhaseResult phase;

  const double initial = evaluate_accuracy(net, test);
  if (initial >= victim_accuracy - cfg.accuracy_gap) {
    phase.converged = true;
    phase.final_accuracy = initial;
    if (out) *out = phase;
    return net;
  }

  TrainConfig fcfg = cfg.fine_phase;
  fcfg.l2_weights = 0.0;  // recovery must be free to regrow the weights
  fcfg.seed = stream_seed(cfg.seed, "fine-train");
  fcfg.stop = EarlyStopRule{};

  bool stopped = false;
  TrainHooks hooks;
  hooks.metric = [&](const Network& model, const EpochStats&) {
    return evaluate_accuracy(model, test);
  };
  hooks.on_epoch_end = [&](const Network& model, const EpochStats& stats) {
    if (cfg.observer) cfg.observer("fine", model, stats);
    stopped = stats.monitored >= victim_accuracy - cfg.accuracy_gap;
    return stopped;
  };

  TrainResult run = train(net, pool_data, fcfg, hooks);
  phase.epochs = run.epochs_run;
  phase.wall_seconds = run.wall_seconds;
  phase.history = run.history;
  phase.final_accuracy = run.history.empty() ? initial : run.history.back().monitored;
  phase.converged = stopped;
  net.provenance.not_converged = !phase.converged;
  if (out) *out = phase;
  return net;
}

WhiteboxOutcome whitebox_game(const Network& victim, const TriggerSet& trigger, const Dataset& pool,
                              const Dataset& test, const WhiteboxConfig& cfg,
                              const VerifyConfig& vcfg, double acc_tolerance) {
  if (!pool.fully_unlabeled()) {
    throw DataError("attacker pool carries ground-truth labels; the white-box game forbids them");
  }
  if (pool.count() == 0) throw SizeError("attacker pool is empty");
  if (cfg.reg_pool_fraction <= 0.0 || cfg.reg_pool_fraction > 1.0) {
    throw ConfigError("reg_pool_fraction must lie in (0, 1]");
  }

  WhiteboxOutcome outcome;
  outcome.victim_accuracy = evaluate_accuracy(victim, test);

  // One labeling pass covers both phases; queries are counted once.
  const long long to_label =
      cfg.query_budget < 0 ? pool.count()
                           : std::min<long long>(pool.count(), cfg.query_budget);
  if (to_label == 0) throw BudgetError("query budget admits no labels at all");
  std::vector<int> prefix(static_cast<std::size_t>(to_label));
  std::iota(prefix.begin(), prefix.end(), 0);
  const MatrixXf queries = gather(pool.pixels(), prefix);

  const auto label_start = std::chrono::steady_clock::now();
  OracleHandle oracle(victim, cfg.query_budget);
  const VectorXi labels = oracle.query(queries);
  outcome.queries_used = oracle.queries_used();
  outcome.label_wall_seconds = seconds_since(label_start);

  Dataset labeled(queries, labels, pool.shape(), pool.num_classes(), pool.name() + "-labeled",
                  DatasetRole::kAttackerPool);

  const int reg_count = std::max(
      1, static_cast<int>(cfg.reg_pool_fraction * static_cast<double>(labeled.count())));
  std::vector<int> reg_pick = Rng(cfg.seed, "reg-pick").permutation(labeled.count());
  reg_pick.resize(static_cast<std::size_t>(reg_count));
  std::sort(reg_pick.begin(), reg_pick.end());
  Dataset reg_data = labeled.select(reg_pick, DatasetRole::kAttackerPool, "reg-slice");

  Network regged = regularize(victim, reg_data, trigger, cfg, &outcome.reg);
  outcome.model = fine_tune(regged, labeled, test, outcome.victim_accuracy, cfg, &outcome.fine);

  outcome.removal =
      full_removal_check(outcome.model, outcome.victim_accuracy, test, trigger, vcfg, acc_tolerance);
  outcome.win = outcome.removal.removed;
  outcome.not_converged = !outcome.reg.converged || !outcome.fine.converged;
  outcome.wall_seconds =
      outcome.label_wall_seconds + outcome.reg.wall_seconds + outcome.fine.wall_seconds;
  return outcome;
}

}  // namespace wm
