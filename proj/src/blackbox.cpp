#include "wm/blackbox.hpp"

#include <chrono>
#include <numeric>
#include <utility>
#include <vector>

#include "wm/store.hpp"

namespace wm {

namespace {

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace

TrainConfig default_steal_train() {
  TrainConfig cfg;
  cfg.opt = rmsprop_config(0.001);
  cfg.batch_size = 64;
  cfg.max_epochs = 30;
  cfg.stop = EarlyStopRule{};
  return cfg;
}

StealResult steal(const Network& victim, const Dataset& pool, const StealConfig& cfg) {
  if (!pool.fully_unlabeled()) {
    throw DataError("attacker pool carries ground-truth labels; the black-box game forbids them");
  }
  if (pool.count() == 0) throw SizeError("attacker pool is empty");

  const long long to_label =
      cfg.query_budget < 0 ? pool.count()
                           : std::min<long long>(pool.count(), cfg.query_budget);
  if (to_label == 0) throw BudgetError("query budget admits no labels at all");

  std::vector<int> prefix(static_cast<std::size_t>(to_label));
  std::iota(prefix.begin(), prefix.end(), 0);
  const MatrixXf queries = gather(pool.pixels(), prefix);
  const std::uint64_t query_digest =
      fnv1a64(queries.data(), static_cast<std::size_t>(queries.size()) * sizeof(float));

  StealResult result;
  VectorXi labels;
  const auto label_start = std::chrono::steady_clock::now();
  if (!cfg.cache_dir.empty()) {
    LabelCache cache(cfg.cache_dir);
    if (auto hit = cache.lookup(victim.param_digest(), query_digest);
        hit && hit->size() == to_label) {
      labels = std::move(*hit);
      result.from_cache = true;
    }
  }
  if (!result.from_cache) {
    OracleHandle oracle(victim, cfg.query_budget);
    labels = oracle.query(queries);
    result.queries_used = oracle.queries_used();
    if (!cfg.cache_dir.empty()) {
      LabelCache(cfg.cache_dir).insert(victim.param_digest(), query_digest, labels);
    }
  }
  result.label_wall_seconds = seconds_since(label_start);

  Dataset stolen(queries, labels, pool.shape(), pool.num_classes(), pool.name() + "-stolen",
                 DatasetRole::kAttackerPool);

  result.surrogate = Network(cfg.surrogate_arch);
  result.surrogate.init(stream_seed(cfg.seed, "surrogate-init"));
  result.surrogate.provenance.role = ModelRole::kAttack;
  TrainConfig tcfg = cfg.train;
  tcfg.seed = stream_seed(cfg.seed, "surrogate-train");
  TrainResult run = train(result.surrogate, stolen, tcfg, cfg.train_hooks);
  result.epochs = run.epochs_run;
  result.train_wall_seconds = run.wall_seconds;
  return result;
}

BlackboxOutcome blackbox_game(const Network& victim, const TriggerSet& trigger, const Dataset& pool,
                              const Dataset& test, const StealConfig& cfg, const VerifyConfig& vcfg,
                              double acc_tolerance) {
  StealResult stolen = steal(victim, pool, cfg);
  BlackboxOutcome outcome;
  outcome.victim_accuracy = evaluate_accuracy(victim, test);
  outcome.removal = full_removal_check(stolen.surrogate, outcome.victim_accuracy, test, trigger,
                                       vcfg, acc_tolerance);
  outcome.queries_used = stolen.queries_used;
  outcome.wall_seconds = stolen.wall_seconds();
  outcome.win = outcome.removal.removed;
  outcome.surrogate = std::move(stolen.surrogate);
  return outcome;
}

}  // namespace wm
