#pragma once

#include "wm/common.hpp"
#include "wm/dataset.hpp"
#include "wm/nn/network.hpp"
#include "wm/nn/optimizer.hpp"

#include <functional>
#include <vector>

namespace wm {

// Stable softmax cross-entropy over logits (one sample per column). When
// dlogits is non-null it receives d(mean loss)/d(logits).
template <typename T>
T softmax_ce(const MatrixX<T>& logits, const VectorXi& labels, MatrixX<T>* dlogits) {
  const Eigen::Index classes = logits.rows();
  const Eigen::Index batch = logits.cols();
  if (labels.size() != batch) throw ShapeError("label count does not match batch");
  if (dlogits) dlogits->resize(classes, batch);
  double total = 0.0;
  for (Eigen::Index j = 0; j < batch; ++j) {
    const int y = labels(j);
    if (y < 0 || y >= classes) throw ClassError("label out of range in loss");
    const T zmax = logits.col(j).maxCoeff();
    VectorX<T> e = (logits.col(j).array() - zmax).exp();
    const T denom = e.sum();
    total += std::log(static_cast<double>(denom)) -
             static_cast<double>(logits(y, j) - zmax);
    if (dlogits) {
      dlogits->col(j) = e / (denom * static_cast<T>(batch));
      (*dlogits)(y, j) -= T(1) / static_cast<T>(batch);
    }
  }
  return static_cast<T>(total / static_cast<double>(batch));
}

struct EarlyStopRule {
  enum class Mode { kNone, kMinDelta, kBaseline };
  Mode mode = Mode::kNone;
  // kMinDelta: stop after `patience` consecutive epochs without the monitored
  // value improving on the best seen by more than min_delta.
  double min_delta = 0.001;
  int patience = 2;
  // kBaseline: stop as soon as the monitored value drops to the baseline.
  double baseline = 0.0;
};

inline EarlyStopRule min_delta_rule(double min_delta = 0.001, int patience = 2) {
  EarlyStopRule rule;
  rule.mode = EarlyStopRule::Mode::kMinDelta;
  rule.min_delta = min_delta;
  rule.patience = patience;
  return rule;
}

inline EarlyStopRule baseline_rule(double baseline) {
  EarlyStopRule rule;
  rule.mode = EarlyStopRule::Mode::kBaseline;
  rule.baseline = baseline;
  return rule;
}

// Feed one monitored value per epoch; returns true when training should stop.
class EarlyStopMonitor {
 public:
  explicit EarlyStopMonitor(const EarlyStopRule& rule) : rule_(rule) {}

  bool should_stop(double metric) {
    switch (rule_.mode) {
      case EarlyStopRule::Mode::kNone:
        return false;
      case EarlyStopRule::Mode::kBaseline:
        return metric <= rule_.baseline;
      case EarlyStopRule::Mode::kMinDelta:
        if (metric > best_ + rule_.min_delta) {
          best_ = metric;
          wait_ = 0;
        } else {
          ++wait_;
        }
        return wait_ >= rule_.patience;
    }
    return false;
  }

 private:
  EarlyStopRule rule_;
  double best_ = -1e300;
  int wait_ = 0;
};

struct TrainConfig {
  OptimizerConfig opt = rmsprop_config(0.001);
  int batch_size = 64;
  int max_epochs = 30;
  EarlyStopRule stop = min_delta_rule();
  std::uint64_t seed = 1;      // root for the per-epoch shuffle streams
  double l2_weights = 0.0;     // weight-only penalty coefficient
  bool verbose = false;
};

struct EpochStats {
  int epoch = 0;
  double loss = 0.0;
  double train_accuracy = 0.0;  // running batch accuracy, as monitored
  double monitored = 0.0;
  double lr = 0.0;
};

struct TrainHooks {
  // Replaces the monitored value (default: running train accuracy).
  std::function<double(const Network&, const EpochStats&)> metric;
  // Called after each epoch; return true to stop training.
  std::function<bool(const Network&, const EpochStats&)> on_epoch_end;
};

struct TrainResult {
  int epochs_run = 0;
  bool stopped_early = false;
  double final_loss = 0.0;
  double final_monitored = 0.0;
  double wall_seconds = 0.0;
  std::vector<EpochStats> history;
};

// Minibatch training with softmax cross-entropy. The dataset must be fully
// labeled; the caller is responsible for parameter initialization.
TrainResult train(Network& net, const Dataset& data, const TrainConfig& cfg,
                  const TrainHooks& hooks = {});

double evaluate_accuracy(const Network& net, const Dataset& data);

// Fraction of samples classified as `labels` says; used both for test accuracy
// and trigger retention.
double match_fraction(const Network& net, const MatrixXf& pixels, const VectorXi& labels);

}  // namespace wm
