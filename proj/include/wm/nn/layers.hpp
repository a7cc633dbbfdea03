#pragma once

#include "wm/common.hpp"
#include "wm/dataset.hpp"
#include "wm/nn/arch.hpp"

#include <algorithm>
#include <cstring>
#include <variant>
#include <vector>

namespace wm {

// Per-layer training workspace. Buffers are lazily sized inside
// forward/backward so a default-constructed scratch works for any batch.
template <typename T>
struct LayerScratch {
  MatrixX<T> colT;    // conv: im2col patches, (B*P) x K
  MatrixX<T> gemm;    // conv: pre-reshape output / grad staging, F x (B*P)
  MatrixX<T> dcolT;   // conv: patch gradients, (B*P) x K
  Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic> argmax;  // pool winners
};

// Layers operate on batches stored one sample per column in CHW order.
// Parameters and gradients live in flat network-owned buffers; each layer is
// handed its slice via bind() and builds Eigen maps over it on demand.

template <typename T>
class ConvLayer {
 public:
  ConvLayer(const LayerDesc& desc, ImageShape in)
      : in_(in), filters_(desc.filters), kernel_(desc.kernel), relu_(desc.relu) {
    if (in.height < kernel_ || in.width < kernel_) {
      throw ArchitectureError("conv kernel larger than input: " + desc.name);
    }
    out_ = ImageShape{filters_, in.height - kernel_ + 1, in.width - kernel_ + 1};
  }

  ImageShape in_shape() const { return in_; }
  ImageShape out_shape() const { return out_; }
  std::size_t weight_count() const {
    return static_cast<std::size_t>(filters_) * patch_len();
  }
  std::size_t param_count() const { return weight_count() + static_cast<std::size_t>(filters_); }

  void bind(T* params, T* grads) {
    p_ = params;
    g_ = grads;
  }

  void init_params(Rng& rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(patch_len()));
    for (std::size_t i = 0; i < weight_count(); ++i)
      p_[i] = static_cast<T>(rng.uniform(-limit, limit));
    std::fill(p_ + weight_count(), p_ + param_count(), T(0));
  }

  void forward(const MatrixX<T>& x, MatrixX<T>& y, LayerScratch<T>* s) const {
    LayerScratch<T> local;
    LayerScratch<T>& ws = s ? *s : local;
    const Eigen::Index batch = x.cols();
    const Eigen::Index pos = positions();
    im2col(x, ws.colT);
    Eigen::Map<const MatrixX<T>> w(p_, filters_, static_cast<Eigen::Index>(patch_len()));
    Eigen::Map<const VectorX<T>> b(p_ + weight_count(), filters_);
    ws.gemm.noalias() = w * ws.colT.transpose();
    ws.gemm.colwise() += b;
    if (relu_) ws.gemm = ws.gemm.cwiseMax(T(0));
    y.resize(static_cast<Eigen::Index>(out_.size()), batch);
    for (Eigen::Index j = 0; j < batch; ++j) {
      Eigen::Map<MatrixX<T>>(y.col(j).data(), pos, filters_) =
          ws.gemm.middleCols(j * pos, pos).transpose();
    }
  }

  // dy is consumed (ReLU-masked in place). Pass dx == nullptr to skip input
  // gradients for the first layer.
  void backward(const MatrixX<T>& x, const MatrixX<T>& y, MatrixX<T>& dy, MatrixX<T>* dx,
                LayerScratch<T>& ws) const {
    const Eigen::Index batch = x.cols();
    const Eigen::Index pos = positions();
    if (relu_) dy.array() *= (y.array() > T(0)).template cast<T>();
    ws.gemm.resize(filters_, batch * pos);
    for (Eigen::Index j = 0; j < batch; ++j) {
      ws.gemm.middleCols(j * pos, pos) =
          Eigen::Map<const MatrixX<T>>(dy.col(j).data(), pos, filters_).transpose();
    }
    Eigen::Map<const MatrixX<T>> w(p_, filters_, static_cast<Eigen::Index>(patch_len()));
    Eigen::Map<MatrixX<T>> gw(g_, filters_, static_cast<Eigen::Index>(patch_len()));
    Eigen::Map<VectorX<T>> gb(g_ + weight_count(), filters_);
    gw.noalias() += ws.gemm * ws.colT;
    gb.noalias() += ws.gemm.rowwise().sum();
    if (dx) {
      ws.dcolT.noalias() = ws.gemm.transpose() * w;
      col2im(ws.dcolT, batch, *dx);
    }
  }

 private:
  std::size_t patch_len() const {
    return static_cast<std::size_t>(in_.channels) * kernel_ * kernel_;
  }
  Eigen::Index positions() const {
    return static_cast<Eigen::Index>(out_.height) * out_.width;
  }

  void im2col(const MatrixX<T>& x, MatrixX<T>& colT) const {
    const Eigen::Index batch = x.cols();
    const Eigen::Index pos = positions();
    colT.resize(batch * pos, static_cast<Eigen::Index>(patch_len()));
    const int ih = in_.height, iw = in_.width;
    const int oh = out_.height, ow = out_.width;
    Eigen::Index k = 0;
    for (int c = 0; c < in_.channels; ++c) {
      const Eigen::Index plane = static_cast<Eigen::Index>(c) * ih * iw;
      for (int ki = 0; ki < kernel_; ++ki) {
        for (int kj = 0; kj < kernel_; ++kj, ++k) {
          T* dst = colT.col(k).data();
          for (Eigen::Index j = 0; j < batch; ++j) {
            const T* src = x.col(j).data() + plane;
            for (int oi = 0; oi < oh; ++oi) {
              const T* row = src + static_cast<Eigen::Index>(oi + ki) * iw + kj;
              std::memcpy(dst, row, sizeof(T) * static_cast<std::size_t>(ow));
              dst += ow;
            }
          }
        }
      }
    }
  }

  void col2im(const MatrixX<T>& dcolT, Eigen::Index batch, MatrixX<T>& dx) const {
    dx.setZero(static_cast<Eigen::Index>(in_.size()), batch);
    const int ih = in_.height, iw = in_.width;
    const int oh = out_.height, ow = out_.width;
    Eigen::Index k = 0;
    for (int c = 0; c < in_.channels; ++c) {
      const Eigen::Index plane = static_cast<Eigen::Index>(c) * ih * iw;
      for (int ki = 0; ki < kernel_; ++ki) {
        for (int kj = 0; kj < kernel_; ++kj, ++k) {
          const T* src = dcolT.col(k).data();
          for (Eigen::Index j = 0; j < batch; ++j) {
            T* dst = dx.col(j).data() + plane;
            for (int oi = 0; oi < oh; ++oi) {
              T* row = dst + static_cast<Eigen::Index>(oi + ki) * iw + kj;
              for (int oj = 0; oj < ow; ++oj) row[oj] += src[oj];
              src += ow;
            }
          }
        }
      }
    }
  }

  ImageShape in_;
  ImageShape out_;
  int filters_;
  int kernel_;
  bool relu_;
  T* p_ = nullptr;
  T* g_ = nullptr;
};

template <typename T>
class MaxPoolLayer {
 public:
  MaxPoolLayer(const LayerDesc& desc, ImageShape in) : in_(in), window_(desc.pool) {
    // Floor division: trailing rows/columns that do not fill a window are dropped.
    out_ = ImageShape{in.channels, in.height / window_, in.width / window_};
    if (out_.height <= 0 || out_.width <= 0) {
      throw ArchitectureError("pool window larger than input: " + desc.name);
    }
  }

  ImageShape in_shape() const { return in_; }
  ImageShape out_shape() const { return out_; }
  std::size_t weight_count() const { return 0; }
  std::size_t param_count() const { return 0; }
  void bind(T*, T*) {}
  void init_params(Rng&) {}

  void forward(const MatrixX<T>& x, MatrixX<T>& y, LayerScratch<T>* s) const {
    LayerScratch<T> local;
    LayerScratch<T>& ws = s ? *s : local;
    const Eigen::Index batch = x.cols();
    const Eigen::Index out_size = static_cast<Eigen::Index>(out_.size());
    y.resize(out_size, batch);
    ws.argmax.resize(out_size, batch);
    const int ih = in_.height, iw = in_.width;
    const int oh = out_.height, ow = out_.width;
    for (Eigen::Index j = 0; j < batch; ++j) {
      const T* src = x.col(j).data();
      T* dst = y.col(j).data();
      int* arg = ws.argmax.col(j).data();
      Eigen::Index o = 0;
      for (int c = 0; c < in_.channels; ++c) {
        const Eigen::Index plane = static_cast<Eigen::Index>(c) * ih * iw;
        for (int oi = 0; oi < oh; ++oi) {
          for (int oj = 0; oj < ow; ++oj, ++o) {
            // Ties resolve to the lowest flat index via strict comparison.
            Eigen::Index best_idx = plane + static_cast<Eigen::Index>(oi * window_) * iw +
                                    oj * window_;
            T best = src[best_idx];
            for (int pi = 0; pi < window_; ++pi) {
              const Eigen::Index row =
                  plane + static_cast<Eigen::Index>(oi * window_ + pi) * iw + oj * window_;
              for (int pj = 0; pj < window_; ++pj) {
                if (src[row + pj] > best) {
                  best = src[row + pj];
                  best_idx = row + pj;
                }
              }
            }
            dst[o] = best;
            arg[o] = static_cast<int>(best_idx);
          }
        }
      }
    }
  }

  void backward(const MatrixX<T>& x, const MatrixX<T>&, MatrixX<T>& dy, MatrixX<T>* dx,
                LayerScratch<T>& ws) const {
    if (!dx) return;
    const Eigen::Index batch = x.cols();
    dx->setZero(static_cast<Eigen::Index>(in_.size()), batch);
    for (Eigen::Index j = 0; j < batch; ++j) {
      const T* g = dy.col(j).data();
      const int* arg = ws.argmax.col(j).data();
      T* out = dx->col(j).data();
      for (Eigen::Index i = 0; i < dy.rows(); ++i) out[arg[i]] += g[i];
    }
  }

 private:
  ImageShape in_;
  ImageShape out_;
  int window_;
};

template <typename T>
class DenseLayer {
 public:
  DenseLayer(const LayerDesc& desc, ImageShape in)
      : in_(in), units_(desc.units), relu_(desc.relu) {}

  ImageShape in_shape() const { return in_; }
  // Dense output is a flat vector; report it as a 1x1xU image for chaining.
  ImageShape out_shape() const { return ImageShape{1, 1, units_}; }
  std::size_t weight_count() const {
    return static_cast<std::size_t>(units_) * static_cast<std::size_t>(in_.size());
  }
  std::size_t param_count() const { return weight_count() + static_cast<std::size_t>(units_); }

  void bind(T* params, T* grads) {
    p_ = params;
    g_ = grads;
  }

  void init_params(Rng& rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(in_.size()));
    for (std::size_t i = 0; i < weight_count(); ++i)
      p_[i] = static_cast<T>(rng.uniform(-limit, limit));
    std::fill(p_ + weight_count(), p_ + param_count(), T(0));
  }

  void forward(const MatrixX<T>& x, MatrixX<T>& y, LayerScratch<T>*) const {
    Eigen::Map<const MatrixX<T>> w(p_, units_, static_cast<Eigen::Index>(in_.size()));
    Eigen::Map<const VectorX<T>> b(p_ + weight_count(), units_);
    y.noalias() = w * x;
    y.colwise() += b;
    if (relu_) y = y.cwiseMax(T(0));
  }

  void backward(const MatrixX<T>& x, const MatrixX<T>& y, MatrixX<T>& dy, MatrixX<T>* dx,
                LayerScratch<T>&) const {
    if (relu_) dy.array() *= (y.array() > T(0)).template cast<T>();
    Eigen::Map<const MatrixX<T>> w(p_, units_, static_cast<Eigen::Index>(in_.size()));
    Eigen::Map<MatrixX<T>> gw(g_, units_, static_cast<Eigen::Index>(in_.size()));
    Eigen::Map<VectorX<T>> gb(g_ + weight_count(), units_);
    gw.noalias() += dy * x.transpose();
    gb.noalias() += dy.rowwise().sum();
    if (dx) dx->noalias() = w.transpose() * dy;
  }

 private:
  ImageShape in_;
  int units_;
  bool relu_;
  T* p_ = nullptr;
  T* g_ = nullptr;
};

template <typename T>
using AnyLayer = std::variant<ConvLayer<T>, MaxPoolLayer<T>, DenseLayer<T>>;

template <typename T>
AnyLayer<T> make_layer(const LayerDesc& desc, ImageShape in) {
  switch (desc.kind) {
    case LayerKind::kConv:
      return ConvLayer<T>(desc, in);
    case LayerKind::kMaxPool:
      return MaxPoolLayer<T>(desc, in);
    case LayerKind::kDense:
      return DenseLayer<T>(desc, in);
  }
  throw ArchitectureError("unknown layer kind");
}

}  // namespace wm
