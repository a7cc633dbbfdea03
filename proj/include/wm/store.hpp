#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "wm/nn/network.hpp"

namespace wm {

// Root directory for artifacts: $WM_STORE if set, else ./wmstore.
std::string store_root();

// Single-file model checkpoint: architecture text, provenance fields and the
// flat parameter vector, written atomically. Loading re-validates the stored
// parameter digest so silent corruption cannot pass as a model.
void save_checkpoint(const Network& net, const std::string& path);
Network load_checkpoint(const std::string& path);

// Disk cache of oracle answers, keyed by (victim params, query pixels).
// Reusing cached labels keeps repeated attacks against one victim cheap and
// bit-identical.
class LabelCache {
 public:
  explicit LabelCache(std::string dir);

  std::optional<VectorXi> lookup(std::uint64_t victim_digest, std::uint64_t pool_digest) const;
  void insert(std::uint64_t victim_digest, std::uint64_t pool_digest, const VectorXi& labels);

 private:
  std::string entry_path(std::uint64_t victim_digest, std::uint64_t pool_digest) const;
  std::string dir_;
};

}  // namespace wm
