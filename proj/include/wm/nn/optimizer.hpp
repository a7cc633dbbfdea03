#pragma once

#include "wm/common.hpp"

#include <cmath>
#include <string>

namespace wm {

enum class OptimizerKind { kRmsProp, kSgd, kAdam };

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::kRmsProp;
  double lr = 0.001;
  double rho = 0.9;        // rmsprop decay
  double eps = 1e-7;
  double momentum = 0.9;   // sgd
  double beta1 = 0.9;      // adam
  double beta2 = 0.999;
  int decay_every = 0;     // sgd: divide lr every N epochs (0 = never)
  double decay_factor = 0.1;
};

inline OptimizerConfig rmsprop_config(double lr = 0.001) {
  OptimizerConfig cfg;
  cfg.kind = OptimizerKind::kRmsProp;
  cfg.lr = lr;
  return cfg;
}

inline OptimizerConfig sgd_config(double lr = 0.1, double momentum = 0.9, int decay_every = 30) {
  OptimizerConfig cfg;
  cfg.kind = OptimizerKind::kSgd;
  cfg.lr = lr;
  cfg.momentum = momentum;
  cfg.decay_every = decay_every;
  return cfg;
}

inline OptimizerConfig adam_config(double lr = 0.001) {
  OptimizerConfig cfg;
  cfg.kind = OptimizerKind::kAdam;
  cfg.lr = lr;
  return cfg;
}

std::string optimizer_kind_name(OptimizerKind kind);
OptimizerKind optimizer_kind_from_name(const std::string& name);

// First-order update rules over the flat parameter vector. Accumulator state
// is kept in double regardless of the model scalar; buffers are allocated on
// the first step.
template <typename T>
class Optimizer {
 public:
  explicit Optimizer(const OptimizerConfig& cfg) : cfg_(cfg), lr_(cfg.lr) {}

  // Applies the step-decay schedule; call with the zero-based epoch index.
  void begin_epoch(int epoch) {
    if (cfg_.decay_every > 0) {
      const int drops = epoch / cfg_.decay_every;
      lr_ = cfg_.lr * std::pow(cfg_.decay_factor, drops);
    }
  }

  double current_lr() const { return lr_; }

  void step(VectorX<T>& params, const VectorX<T>& grads) {
    g_ = grads.template cast<double>().array();
    switch (cfg_.kind) {
      case OptimizerKind::kRmsProp: {
        ensure(v_, params.size());
        v_ = cfg_.rho * v_ + (1.0 - cfg_.rho) * g_.square();
        params.array() -= (lr_ * g_ / (v_.sqrt() + cfg_.eps)).template cast<T>();
        break;
      }
      case OptimizerKind::kSgd: {
        ensure(m_, params.size());
        m_ = cfg_.momentum * m_ - lr_ * g_;
        params.array() += m_.template cast<T>();
        break;
      }
      case OptimizerKind::kAdam: {
        ensure(m_, params.size());
        ensure(v_, params.size());
        ++t_;
        m_ = cfg_.beta1 * m_ + (1.0 - cfg_.beta1) * g_;
        v_ = cfg_.beta2 * v_ + (1.0 - cfg_.beta2) * g_.square();
        const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
        const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
        params.array() -= (lr_ * (m_ / c1) / ((v_ / c2).sqrt() + cfg_.eps)).template cast<T>();
        break;
      }
    }
  }

 private:
  static void ensure(Eigen::ArrayXd& buf, Eigen::Index n) {
    if (buf.size() != n) buf = Eigen::ArrayXd::Zero(n);
  }

  OptimizerConfig cfg_;
  double lr_;
  long t_ = 0;
  Eigen::ArrayXd g_;
  Eigen::ArrayXd m_;
  Eigen::ArrayXd v_;
};

}  // namespace wm
