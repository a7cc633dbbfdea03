#pragma once

#include "wm/common.hpp"
#include "wm/dataset.hpp"
#include "wm/nn/arch.hpp"
#include "wm/nn/layers.hpp"

#include <utility>
#include <vector>

namespace wm {

// Reusable buffers for one forward/backward pass. acts[i] holds the output of
// layer i; deltas[i] the gradient with respect to it.
template <typename T>
struct Workspace {
  std::vector<MatrixX<T>> acts;
  std::vector<MatrixX<T>> deltas;
  std::vector<LayerScratch<T>> scratch;
};

// A feed-forward image classifier with all parameters in one flat vector.
// Batches are one sample per column (CHW order), matching Dataset storage.
template <typename T>
class BasicNetwork {
 public:
  // An empty placeholder holding no layers; any use other than assignment
  // from a real network throws.
  BasicNetwork() = default;

  explicit BasicNetwork(const ArchitectureSpec& arch) : arch_(arch) {
    arch_.validate();
    ImageShape shape = arch_.input;
    for (const LayerDesc& desc : arch_.layers) {
      layers_.push_back(make_layer<T>(desc, shape));
      shape = std::visit([](const auto& l) { return l.out_shape(); }, layers_.back());
    }
    std::size_t total = 0;
    for (const auto& layer : layers_) {
      offsets_.push_back(total);
      total += std::visit([](const auto& l) { return l.param_count(); }, layer);
    }
    params_ = VectorX<T>::Zero(static_cast<Eigen::Index>(total));
    grads_ = VectorX<T>::Zero(static_cast<Eigen::Index>(total));
    rebind();
  }

  BasicNetwork(const BasicNetwork& other)
      : provenance(other.provenance),
        arch_(other.arch_),
        layers_(other.layers_),
        offsets_(other.offsets_),
        params_(other.params_),
        grads_(other.grads_) {
    rebind();
  }

  BasicNetwork& operator=(const BasicNetwork& other) {
    if (this != &other) {
      arch_ = other.arch_;
      layers_ = other.layers_;
      offsets_ = other.offsets_;
      params_ = other.params_;
      grads_ = other.grads_;
      provenance = other.provenance;
      rebind();
    }
    return *this;
  }

  const ArchitectureSpec& arch() const { return arch_; }
  Eigen::Index param_count() const { return params_.size(); }
  VectorX<T>& params() { return params_; }
  const VectorX<T>& params() const { return params_; }
  VectorX<T>& grads() { return grads_; }
  void zero_grads() { grads_.setZero(); }

  void init(std::uint64_t seed) {
    Rng rng(seed, "init");
    for (auto& layer : layers_) {
      std::visit([&](auto& l) { l.init_params(rng); }, layer);
    }
    provenance.seed = seed;
  }

  void set_params(const VectorX<T>& p) {
    if (p.size() != params_.size()) throw ShapeError("parameter vector size mismatch");
    params_ = p;
  }

  // Weight slices of the flat parameter vector, biases excluded. Used for
  // weight-only L2 penalties.
  std::vector<std::pair<std::size_t, std::size_t>> weight_spans() const {
    std::vector<std::pair<std::size_t, std::size_t>> spans;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      const std::size_t n =
          std::visit([](const auto& l) { return l.weight_count(); }, layers_[i]);
      if (n > 0) spans.emplace_back(offsets_[i], n);
    }
    return spans;
  }

  void forward(const MatrixX<T>& x, MatrixX<T>& out, Workspace<T>* ws) const {
    if (x.rows() != static_cast<Eigen::Index>(arch_.input.size())) {
      throw ShapeError("input rows do not match architecture input size");
    }
    if (ws) {
      ws->acts.resize(layers_.size());
      ws->deltas.resize(layers_.size());
      ws->scratch.resize(layers_.size());
      const MatrixX<T>* cur = &x;
      for (std::size_t i = 0; i < layers_.size(); ++i) {
        std::visit([&](const auto& l) { l.forward(*cur, ws->acts[i], &ws->scratch[i]); },
                   layers_[i]);
        cur = &ws->acts[i];
      }
      out = ws->acts.back();
    } else {
      MatrixX<T> a = x, b;
      for (const auto& layer : layers_) {
        std::visit([&](const auto& l) { l.forward(a, b, nullptr); }, layer);
        a.swap(b);
      }
      out = std::move(a);
    }
  }

  // Propagates dlogits back through the network, accumulating into grads().
  // Requires the workspace from the matching forward() call.
  void backprop(const MatrixX<T>& x, const MatrixX<T>& dlogits, Workspace<T>& ws) {
    const int n = static_cast<int>(layers_.size());
    ws.deltas[static_cast<std::size_t>(n - 1)] = dlogits;
    for (int i = n - 1; i >= 0; --i) {
      const std::size_t ui = static_cast<std::size_t>(i);
      const MatrixX<T>& xin = (i == 0) ? x : ws.acts[ui - 1];
      MatrixX<T>* dx = (i == 0) ? nullptr : &ws.deltas[ui - 1];
      std::visit(
          [&](const auto& l) { l.backward(xin, ws.acts[ui], ws.deltas[ui], dx, ws.scratch[ui]); },
          layers_[ui]);
    }
  }

  VectorXi classify(const MatrixX<T>& pixels, int batch_size = 256) const {
    const Eigen::Index n = pixels.cols();
    VectorXi out(n);
    MatrixX<T> logits;
    for (Eigen::Index start = 0; start < n; start += batch_size) {
      const Eigen::Index len = std::min<Eigen::Index>(batch_size, n - start);
      MatrixX<T> block = pixels.middleCols(start, len);
      forward(block, logits, nullptr);
      for (Eigen::Index j = 0; j < len; ++j) {
        Eigen::Index row = 0;
        logits.col(j).maxCoeff(&row);  // ties resolve to the lowest class index
        out(start + j) = static_cast<int>(row);
      }
    }
    return out;
  }

  // Post-activation feature maps of the tap layer, one column per sample in
  // filter-major order. tap_dims() gives (filters, positions per filter).
  MatrixX<T> activations_at_tap(const MatrixX<T>& x) const {
    const int tap = tap_index();
    MatrixX<T> a = x, b;
    for (int i = 0; i <= tap; ++i) {
      std::visit([&](const auto& l) { l.forward(a, b, nullptr); }, layers_[static_cast<std::size_t>(i)]);
      a.swap(b);
    }
    return a;
  }

  std::pair<int, int> tap_dims() const {
    const int tap = tap_index();
    const ImageShape s = std::visit([](const auto& l) { return l.out_shape(); },
                                    layers_[static_cast<std::size_t>(tap)]);
    return {s.channels, s.height * s.width};
  }

  std::uint64_t param_digest() const {
    return fnv1a64(params_.data(), static_cast<std::size_t>(params_.size()) * sizeof(T));
  }

  Provenance provenance;

 private:
  int tap_index() const {
    if (arch_.last_conv_tap.empty()) throw FeatureError("architecture has no tap layer");
    return arch_.layer_index(arch_.last_conv_tap);
  }

  void rebind() {
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      std::visit([&](auto& l) { l.bind(params_.data() + offsets_[i], grads_.data() + offsets_[i]); },
                 layers_[i]);
    }
  }

  ArchitectureSpec arch_;
  std::vector<AnyLayer<T>> layers_;
  std::vector<std::size_t> offsets_;
  VectorX<T> params_;
  VectorX<T> grads_;
};

using Network = BasicNetwork<Scalar>;

}  // namespace wm
