#pragma once

#include <cstdint>

#include "wm/nn/network.hpp"

namespace wm {

// Label-only access to a victim model with a hard query budget. This is the
// entire attacker-facing surface: no logits, no gradients, no parameters.
class OracleHandle {
 public:
  // budget < 0 means unlimited.
  OracleHandle(const Network& victim, long long budget = -1)
      : victim_(&victim), budget_(budget) {}

  // Predicted labels for a batch of query images. A batch that would push
  // usage past the budget throws BudgetError before consuming anything, so
  // labels from earlier queries stay valid.
  VectorXi query(const MatrixXf& pixels) {
    const long long n = static_cast<long long>(pixels.cols());
    if (budget_ >= 0 && used_ + n > budget_) {
      throw BudgetError("query of " + std::to_string(n) + " exceeds remaining budget of " +
                        std::to_string(budget_ - used_));
    }
    VectorXi labels = victim_->classify(pixels);
    used_ += n;
    return labels;
  }

  long long queries_used() const { return used_; }
  long long budget() const { return budget_; }
  long long remaining() const { return budget_ < 0 ? -1 : budget_ - used_; }
  std::uint64_t victim_digest() const { return victim_->param_digest(); }

 private:
  const Network* victim_;
  long long budget_;
  long long used_ = 0;
};

}  // namespace wm
