#include "wm/store.hpp"

#include <cstdlib>
#include <filesystem>
#include <utility>
#include <vector>

#include "wm/io.hpp"

namespace wm {

namespace fs = std::filesystem;

std::string store_root() {
  const char* env = std::getenv("WM_STORE");
  if (env != nullptr && env[0] != '\0') return env;
  return "wmstore";
}

void save_checkpoint(const Network& net, const std::string& path) {
  BlobWriter out;
  KeyValueFile& h = out.header();
  h.set("format", "wmckpt");
  h.set_int("version", 1);
  h.set("role", model_role_name(net.provenance.role));
  h.set("config_digest", net.provenance.config_digest);
  h.set_int("epochs", net.provenance.epochs);
  h.set_double("wall_seconds", net.provenance.wall_seconds);
  h.set_u64("seed", net.provenance.seed);
  h.set_int("not_converged", net.provenance.not_converged ? 1 : 0);
  h.set_u64("param_digest", net.param_digest());
  out.add("arch", net.arch().serialize().data(), net.arch().serialize().size());
  out.add_typed("params", net.params().data(), static_cast<std::size_t>(net.param_count()));
  out.save(path);
}

Network load_checkpoint(const std::string& path) {
  BlobReader in = BlobReader::load(path);
  const KeyValueFile& h = in.header();
  if (h.get_or("format", "") != "wmckpt") {
    throw DecodeError("not a model checkpoint: " + path);
  }
  if (h.get_int("version") != 1) {
    throw DecodeError("unsupported checkpoint version in " + path);
  }
  ArchitectureSpec arch = ArchitectureSpec::parse(in.blob("arch"));
  Network net(arch);
  std::vector<Scalar> params = in.blob_typed<Scalar>("params");
  if (static_cast<Eigen::Index>(params.size()) != net.param_count()) {
    throw DecodeError("checkpoint parameter count does not match architecture: " + path);
  }
  net.set_params(Eigen::Map<const VectorXf>(params.data(), params.size()));
  if (net.param_digest() != h.get_u64("param_digest")) {
    throw DecodeError("checkpoint parameter digest mismatch: " + path);
  }
  net.provenance.role = model_role_from_name(h.get("role"));
  net.provenance.config_digest = h.get_or("config_digest", "");
  net.provenance.epochs = h.get_int("epochs");
  net.provenance.wall_seconds = h.get_double("wall_seconds");
  net.provenance.seed = h.get_u64("seed");
  net.provenance.not_converged = h.get_int("not_converged") != 0;
  return net;
}

LabelCache::LabelCache(std::string dir) : dir_(std::move(dir)) {}

std::string LabelCache::entry_path(std::uint64_t victim_digest, std::uint64_t pool_digest) const {
  return (fs::path(dir_) / (hex64(victim_digest) + "-" + hex64(pool_digest) + ".labels")).string();
}

std::optional<VectorXi> LabelCache::lookup(std::uint64_t victim_digest,
                                           std::uint64_t pool_digest) const {
  const std::string path = entry_path(victim_digest, pool_digest);
  if (!fs::exists(path)) return std::nullopt;
  std::vector<int> raw = read_binary<int>(path);
  VectorXi labels(static_cast<Eigen::Index>(raw.size()));
  for (std::size_t i = 0; i < raw.size(); ++i) labels[static_cast<Eigen::Index>(i)] = raw[i];
  return labels;
}

void LabelCache::insert(std::uint64_t victim_digest, std::uint64_t pool_digest,
                        const VectorXi& labels) {
  write_binary(entry_path(victim_digest, pool_digest), labels.data(),
               static_cast<std::size_t>(labels.size()));
}

}  // namespace wm
