#include "wm/nn/train.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>

namespace wm {

namespace {

double wall_now() {
  using clock = std::chrono::steady_clock;
  return std::chrono::duration<double>(clock::now().time_since_epoch()).count();
}

}  // namespace

TrainResult train(Network& net, const Dataset& data, const TrainConfig& cfg,
                  const TrainHooks& hooks) {
  if (!data.fully_labeled()) {
    throw DataError("training data has ABSENT labels; relabel before training");
  }
  if (data.count() == 0) throw SizeError("training data is empty");
  if (data.num_classes() != net.arch().num_classes) {
    throw ClassError("dataset classes do not match network head");
  }

  TrainResult result;
  const double t0 = wall_now();
  Optimizer<Scalar> opt(cfg.opt);
  EarlyStopMonitor monitor(cfg.stop);
  Workspace<Scalar> ws;
  MatrixXf batch_x;
  MatrixXf logits;
  MatrixXf dlogits;
  VectorXi batch_y;

  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    opt.begin_epoch(epoch);
    BatchStream stream = batch_iter(data, cfg.batch_size, stream_seed(cfg.seed, "shuffle", epoch));
    double loss_sum = 0.0;
    long correct = 0;
    long seen = 0;
    while (auto idx = stream.next()) {
      batch_x = gather(data.pixels(), *idx);
      batch_y = gather(data.labels(), *idx);
      net.zero_grads();
      net.forward(batch_x, logits, &ws);
      Scalar loss = softmax_ce<Scalar>(logits, batch_y, &dlogits);
      if (cfg.l2_weights > 0.0) {
        for (auto [off, len] : net.weight_spans()) {
          auto w = net.params().segment(static_cast<Eigen::Index>(off),
                                        static_cast<Eigen::Index>(len));
          loss += static_cast<Scalar>(cfg.l2_weights) * w.squaredNorm();
          net.grads().segment(static_cast<Eigen::Index>(off), static_cast<Eigen::Index>(len)) +=
              static_cast<Scalar>(2.0 * cfg.l2_weights) * w;
        }
      }
      if (!std::isfinite(static_cast<double>(loss))) {
        throw TrainingError("non-finite loss", epoch);
      }
      net.backprop(batch_x, dlogits, ws);
      opt.step(net.params(), net.grads());

      loss_sum += static_cast<double>(loss) * static_cast<double>(idx->size());
      for (Eigen::Index j = 0; j < logits.cols(); ++j) {
        Eigen::Index row = 0;
        logits.col(j).maxCoeff(&row);
        if (static_cast<int>(row) == batch_y(j)) ++correct;
      }
      seen += static_cast<long>(idx->size());
    }

    EpochStats stats;
    stats.epoch = epoch;
    stats.loss = loss_sum / static_cast<double>(seen);
    stats.train_accuracy = static_cast<double>(correct) / static_cast<double>(seen);
    stats.lr = opt.current_lr();
    stats.monitored = hooks.metric ? hooks.metric(net, stats) : stats.train_accuracy;
    result.history.push_back(stats);
    result.epochs_run = epoch + 1;
    result.final_loss = stats.loss;
    result.final_monitored = stats.monitored;
    if (cfg.verbose) {
      std::fprintf(stderr, "epoch %3d  loss %.4f  acc %.4f  monitored %.4f\n", epoch + 1,
                   stats.loss, stats.train_accuracy, stats.monitored);
    }

    bool stop = monitor.should_stop(stats.monitored);
    if (hooks.on_epoch_end && hooks.on_epoch_end(net, stats)) stop = true;
    if (stop) {
      result.stopped_early = true;
      break;
    }
  }

  result.wall_seconds = wall_now() - t0;
  net.provenance.epochs += result.epochs_run;
  net.provenance.wall_seconds += result.wall_seconds;
  return result;
}

double match_fraction(const Network& net, const MatrixXf& pixels, const VectorXi& labels) {
  if (pixels.cols() == 0) throw SizeError("match_fraction on empty sample set");
  if (labels.size() != pixels.cols()) throw ShapeError("label count does not match samples");
  VectorXi pred = net.classify(pixels);
  long hits = 0;
  for (Eigen::Index i = 0; i < pred.size(); ++i)
    if (pred(i) == labels(i)) ++hits;
  return static_cast<double>(hits) / static_cast<double>(pred.size());
}

double evaluate_accuracy(const Network& net, const Dataset& data) {
  if (!data.fully_labeled()) throw DataError("accuracy needs labels");
  return match_fraction(net, data.pixels(), data.labels());
}

std::string optimizer_kind_name(OptimizerKind kind) {
  switch (kind) {
    case OptimizerKind::kRmsProp:
      return "rmsprop";
    case OptimizerKind::kSgd:
      return "sgd";
    case OptimizerKind::kAdam:
      return "adam";
  }
  return "rmsprop";
}

OptimizerKind optimizer_kind_from_name(const std::string& name) {
  if (name == "rmsprop") return OptimizerKind::kRmsProp;
  if (name == "sgd") return OptimizerKind::kSgd;
  if (name == "adam") return OptimizerKind::kAdam;
  throw ConfigError("unknown optimizer: " + name);
}

}  // namespace wm
