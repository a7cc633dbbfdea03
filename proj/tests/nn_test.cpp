#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "wm/nn/arch.hpp"
#include "wm/nn/layers.hpp"
#include "wm/nn/network.hpp"
#include "wm/nn/optimizer.hpp"
#include "wm/nn/train.hpp"
#include "wm/synth.hpp"

#include <cmath>
#include <vector>

using namespace wm;

namespace {

// Direct valid cross-correlation, the slow reference the conv layer must match.
template <typename T>
MatrixX<T> conv_reference(const MatrixX<T>& x, const MatrixX<T>& w, const VectorX<T>& bias,
                          ImageShape in, int filters, int k, bool relu) {
  const int oh = in.height - k + 1;
  const int ow = in.width - k + 1;
  MatrixX<T> y(filters * oh * ow, x.cols());
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    for (int f = 0; f < filters; ++f) {
      for (int oi = 0; oi < oh; ++oi) {
        for (int oj = 0; oj < ow; ++oj) {
          T acc = bias(f);
          for (int c = 0; c < in.channels; ++c) {
            for (int ki = 0; ki < k; ++ki) {
              for (int kj = 0; kj < k; ++kj) {
                const T xv = x((c * in.height + oi + ki) * in.width + oj + kj, j);
                const T wv = w(f, (c * k + ki) * k + kj);
                acc += xv * wv;
              }
            }
          }
          if (relu && acc < T(0)) acc = T(0);
          y((f * oh + oi) * ow + oj, j) = acc;
        }
      }
    }
  }
  return y;
}

ArchitectureSpec micro_arch() {
  ArchitectureSpec spec;
  spec.input = ImageShape{1, 8, 8};
  spec.num_classes = 5;
  spec.layers = {
      {LayerKind::kConv, "conv1", 3, 3, 0, 0, true},
      {LayerKind::kMaxPool, "pool1", 0, 0, 2, 0, false},
      {LayerKind::kDense, "fc1", 0, 0, 0, 5, false},
  };
  spec.last_conv_tap = "conv1";
  return spec;
}

// Central finite differences of the mean cross-entropy with respect to every
// parameter; the analytic gradient must agree.
template <typename T>
double max_grad_rel_error(BasicNetwork<T>& net, const MatrixX<T>& x, const VectorXi& labels,
                          double eps) {
  Workspace<T> ws;
  MatrixX<T> logits, dlogits;
  net.zero_grads();
  net.forward(x, logits, &ws);
  softmax_ce<T>(logits, labels, &dlogits);
  net.backprop(x, dlogits, ws);
  VectorX<T> analytic = net.grads();

  double worst = 0.0;
  for (Eigen::Index i = 0; i < net.param_count(); ++i) {
    const T saved = net.params()(i);
    net.params()(i) = saved + static_cast<T>(eps);
    net.forward(x, logits, nullptr);
    const double up = static_cast<double>(softmax_ce<T>(logits, labels, nullptr));
    net.params()(i) = saved - static_cast<T>(eps);
    net.forward(x, logits, nullptr);
    const double down = static_cast<double>(softmax_ce<T>(logits, labels, nullptr));
    net.params()(i) = saved;
    const double numeric = (up - down) / (2.0 * eps);
    const double denom = std::max(1e-8, std::abs(numeric) + std::abs(static_cast<double>(analytic(i))));
    worst = std::max(worst, std::abs(numeric - static_cast<double>(analytic(i))) / denom);
  }
  return worst;
}

}  // namespace

TEST_CASE("architecture serialization round-trips") {
  ArchitectureSpec spec = desk_arch();
  ArchitectureSpec back = ArchitectureSpec::parse(spec.serialize());
  CHECK(back.serialize() == spec.serialize());
  CHECK(back.digest() == spec.digest());
  CHECK(back.layers.size() == 6);
  CHECK(back.last_conv_tap == "conv2");
}

TEST_CASE("architecture validation catches malformed stacks") {
  ArchitectureSpec spec = micro_arch();
  CHECK_NOTHROW(spec.validate());

  ArchitectureSpec no_head = spec;
  no_head.layers.back().units = 4;  // head width != num_classes
  CHECK_THROWS_AS(no_head.validate(), ArchitectureError);

  ArchitectureSpec bad_tap = spec;
  bad_tap.last_conv_tap = "fc1";  // not a conv layer
  CHECK_THROWS_AS(bad_tap.validate(), ArchitectureError);

  ArchitectureSpec missing_tap = spec;
  missing_tap.last_conv_tap = "conv9";
  CHECK_THROWS_AS(missing_tap.validate(), ArchitectureError);

  ArchitectureSpec empty = spec;
  empty.layers.clear();
  CHECK_THROWS_AS(empty.validate(), ArchitectureError);
}

TEST_CASE("model role names round-trip") {
  for (ModelRole r : {ModelRole::kClean, ModelRole::kMarked, ModelRole::kAttack,
                      ModelRole::kDetector}) {
    CHECK(model_role_from_name(model_role_name(r)) == r);
  }
  CHECK_THROWS_AS(model_role_from_name("banana"), DecodeError);
}

TEST_CASE("conv forward matches the direct reference") {
  const ImageShape in{2, 6, 5};
  LayerDesc desc{LayerKind::kConv, "c", 4, 3, 0, 0, true};
  ConvLayer<float> layer(desc, in);
  std::vector<float> params(layer.param_count()), grads(layer.param_count());
  layer.bind(params.data(), grads.data());
  Rng rng(123);
  layer.init_params(rng);
  // Nonzero biases so the reference exercises them.
  for (std::size_t i = layer.weight_count(); i < layer.param_count(); ++i)
    params[i] = static_cast<float>(rng.uniform(-0.5, 0.5));

  MatrixXf x(in.size(), 3);
  for (Eigen::Index i = 0; i < x.size(); ++i)
    x(i % x.rows(), i / x.rows()) = static_cast<float>(rng.uniform(-1.0, 1.0));

  MatrixXf y;
  layer.forward(x, y, nullptr);

  Eigen::Map<const MatrixXf> w(params.data(), 4, 18);
  Eigen::Map<const VectorXf> b(params.data() + layer.weight_count(), 4);
  MatrixXf ref = conv_reference<float>(x, w, b, in, 4, 3, true);
  CHECK(y.rows() == ref.rows());
  CHECK((y - ref).cwiseAbs().maxCoeff() < 1e-5f);
  CHECK(layer.out_shape() == ImageShape{4, 4, 3});
}

TEST_CASE("maxpool picks the first maximum and routes gradients to it") {
  const ImageShape in{1, 4, 4};
  LayerDesc desc{LayerKind::kMaxPool, "p", 0, 0, 2, 0, false};
  MaxPoolLayer<float> layer(desc, in);
  MatrixXf x(16, 1);
  // Window (0,0): tie between positions 0 and 5 -> index 0 must win.
  // Window (0,1): clear max at position 3.
  x.col(0) << 7, 1, 2, 9,
               0, 7, 9, 3,
               1, 2, 3, 4,
               5, 6, 8, 8;
  MatrixXf y;
  LayerScratch<float> ws;
  layer.forward(x, y, &ws);
  CHECK(y.rows() == 4);
  CHECK(y(0, 0) == 7.0f);
  CHECK(y(1, 0) == 9.0f);
  CHECK(y(2, 0) == 6.0f);
  CHECK(y(3, 0) == 8.0f);
  CHECK(ws.argmax(0, 0) == 0);   // tie resolved to the lowest flat index
  CHECK(ws.argmax(3, 0) == 14);  // tie between 14 and 15

  MatrixXf dy(4, 1);
  dy.col(0) << 1, 2, 3, 4;
  MatrixXf dx;
  layer.backward(x, y, dy, &dx, ws);
  CHECK(dx(0, 0) == 1.0f);
  CHECK(dx(5, 0) == 0.0f);
  CHECK(dx(3, 0) == 2.0f);
  CHECK(dx(13, 0) == 3.0f);
  CHECK(dx(14, 0) == 4.0f);
  CHECK(dx.sum() == 10.0f);
}

TEST_CASE("pool drops trailing rows that do not fill a window") {
  LayerDesc desc{LayerKind::kMaxPool, "p", 0, 0, 2, 0, false};
  MaxPoolLayer<float> layer(desc, ImageShape{1, 5, 5});
  CHECK(layer.out_shape() == ImageShape{1, 2, 2});
  MatrixXf x = MatrixXf::Zero(25, 1);
  x(24, 0) = 100.0f;  // bottom-right corner lies outside every window
  MatrixXf y;
  layer.forward(x, y, nullptr);
  CHECK(y.maxCoeff() == 0.0f);
}

TEST_CASE("softmax cross-entropy matches hand computation") {
  MatrixXf logits(3, 2);
  logits.col(0) << 1.0f, 2.0f, 3.0f;
  logits.col(1) << 0.0f, 0.0f, 0.0f;
  VectorXi labels(2);
  labels << 2, 0;
  // Sample 0: -log softmax(3 | 1,2,3); sample 1: -log(1/3).
  const double l0 = std::log(std::exp(1.0) + std::exp(2.0) + std::exp(3.0)) - 3.0;
  const double l1 = std::log(3.0);
  MatrixXf dlogits;
  float loss = softmax_ce<float>(logits, labels, &dlogits);
  CHECK(loss == doctest::Approx((l0 + l1) / 2.0).epsilon(1e-5));
  // Gradient columns sum to zero and the true-label entry is negative.
  CHECK(dlogits.col(0).sum() == doctest::Approx(0.0).epsilon(1e-5));
  CHECK(dlogits(2, 0) < 0.0f);
  CHECK(dlogits(0, 1) == doctest::Approx((1.0 / 3.0 - 1.0) / 2.0).epsilon(1e-5));
  CHECK_THROWS_AS(softmax_ce<float>(logits, VectorXi::Constant(2, 3), nullptr), ClassError);
  VectorXi absent(2);
  absent << 2, kAbsentLabel;
  CHECK_THROWS_AS(softmax_ce<float>(logits, absent, nullptr), ClassError);
}

TEST_CASE("large logits stay finite through the stable softmax") {
  MatrixXf logits(2, 1);
  logits.col(0) << 1000.0f, 998.0f;
  VectorXi labels(1);
  labels << 1;
  float loss = softmax_ce<float>(logits, labels, nullptr);
  CHECK(std::isfinite(loss));
  CHECK(loss == doctest::Approx(std::log(1.0 + std::exp(2.0))).epsilon(1e-4));
}

TEST_CASE("network analytic gradients agree with finite differences") {
  BasicNetwork<double> net(micro_arch());
  net.init(2024);
  // Push params away from the ReLU kink-heavy origin region a little.
  MatrixX<double> x(64, 4);
  Rng rng(55);
  for (Eigen::Index j = 0; j < x.cols(); ++j)
    for (Eigen::Index i = 0; i < x.rows(); ++i) x(i, j) = rng.uniform();
  VectorXi labels(4);
  labels << 0, 2, 4, 1;
  const double worst = max_grad_rel_error<double>(net, x, labels, 1e-6);
  CHECK(worst < 1e-4);
}

TEST_CASE("gradients accumulate across backward calls") {
  BasicNetwork<double> net(micro_arch());
  net.init(7);
  MatrixX<double> x = MatrixX<double>::Constant(64, 2, 0.4);
  VectorXi labels(2);
  labels << 1, 3;
  Workspace<double> ws;
  MatrixX<double> logits, dlogits;

  net.zero_grads();
  net.forward(x, logits, &ws);
  softmax_ce<double>(logits, labels, &dlogits);
  net.backprop(x, dlogits, ws);
  VectorX<double> once = net.grads();

  net.forward(x, logits, &ws);
  softmax_ce<double>(logits, labels, &dlogits);
  net.backprop(x, dlogits, ws);
  CHECK((net.grads() - 2.0 * once).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("network copies are independent after assignment") {
  Network a{desk_arch(10)};
  a.init(99);
  Network b = a;
  CHECK(b.param_digest() == a.param_digest());
  // A head bias shift must show up in the copy's logits but not the original's.
  b.params()(b.param_count() - 1) += 1.0f;
  CHECK(b.param_digest() != a.param_digest());
  // The copy's layers must see its own buffer, not the original's.
  MatrixXf x = MatrixXf::Constant(784, 1, 0.5f);
  MatrixXf ya, yb;
  a.forward(x, ya, nullptr);
  b.forward(x, yb, nullptr);
  CHECK(ya != yb);
}

TEST_CASE("classify resolves logit ties toward the lowest class") {
  ArchitectureSpec spec;
  spec.input = ImageShape{1, 1, 4};
  spec.num_classes = 3;
  spec.layers = {{LayerKind::kDense, "fc", 0, 0, 0, 3, false}};
  // No conv layer, so no tap; that only matters for feature extraction.
  Network net(spec);
  // Zero weights and biases: every class scores identically.
  MatrixXf x = MatrixXf::Constant(4, 2, 0.3f);
  VectorXi pred = net.classify(x);
  CHECK(pred(0) == 0);
  CHECK(pred(1) == 0);
  CHECK_THROWS_AS(net.activations_at_tap(x), FeatureError);
}

TEST_CASE("init is deterministic per seed and spreads with fan-in") {
  Network a{desk_arch(10)};
  Network b{desk_arch(10)};
  a.init(5);
  b.init(5);
  CHECK(a.param_digest() == b.param_digest());
  b.init(6);
  CHECK(a.param_digest() != b.param_digest());
  // Weight magnitudes respect the fan-in bound for the first conv (fan-in 9).
  const double bound1 = std::sqrt(6.0 / 9.0);
  auto spans = a.weight_spans();
  REQUIRE(spans.size() == 4);
  for (std::size_t i = 0; i < spans[0].second; ++i) {
    CHECK(std::abs(a.params()(static_cast<Eigen::Index>(spans[0].first + i))) <= bound1);
  }
  // Dense fc1 has fan-in 800, so its bound is much tighter.
  const double bound3 = std::sqrt(6.0 / 800.0);
  bool all_small = true;
  for (std::size_t i = 0; i < spans[2].second; ++i) {
    all_small &= std::abs(a.params()(static_cast<Eigen::Index>(spans[2].first + i))) <= bound3;
  }
  CHECK(all_small);
}

TEST_CASE("tap activations are the post-relu maps of the tapped conv") {
  Network net{desk_arch(10)};
  net.init(12);
  auto [filters, positions] = net.tap_dims();
  CHECK(filters == 32);
  CHECK(positions == 11 * 11);
  MatrixXf x(784, 2);
  Rng rng(3);
  for (Eigen::Index j = 0; j < 2; ++j)
    for (Eigen::Index i = 0; i < 784; ++i) x(i, j) = static_cast<float>(rng.uniform());
  MatrixXf tap = net.activations_at_tap(x);
  CHECK(tap.rows() == filters * positions);
  CHECK(tap.cols() == 2);
  CHECK(tap.minCoeff() >= 0.0f);
  CHECK(tap.maxCoeff() > 0.0f);
}

TEST_CASE("weight spans exclude biases") {
  Network net{desk_arch(10)};
  auto spans = net.weight_spans();
  // conv1, conv2, fc1, fc2.
  REQUIRE(spans.size() == 4);
  CHECK(spans[0].second == 16u * 9u);
  CHECK(spans[1].second == 32u * 16u * 9u);
  CHECK(spans[2].second == 800u * 128u);
  CHECK(spans[3].second == 128u * 10u);
  // Together with biases they cover the whole parameter vector.
  std::size_t weights = 0;
  for (auto [off, len] : spans) weights += len;
  CHECK(static_cast<Eigen::Index>(weights + 16 + 32 + 128 + 10) == net.param_count());
}

TEST_CASE("early stop follows the best-so-far rule") {
  // Improvements below min_delta burn patience even while the value creeps up.
  EarlyStopMonitor m(min_delta_rule(0.001, 2));
  CHECK_FALSE(m.should_stop(0.990));
  CHECK_FALSE(m.should_stop(0.9905));
  CHECK(m.should_stop(0.9908));

  EarlyStopMonitor improving(min_delta_rule(0.001, 2));
  CHECK_FALSE(improving.should_stop(0.90));
  CHECK_FALSE(improving.should_stop(0.92));
  CHECK_FALSE(improving.should_stop(0.94));
  CHECK_FALSE(improving.should_stop(0.96));

  EarlyStopMonitor baseline(baseline_rule(0.1));
  CHECK_FALSE(baseline.should_stop(0.9));
  CHECK_FALSE(baseline.should_stop(0.11));
  CHECK(baseline.should_stop(0.1));

  EarlyStopMonitor off{EarlyStopRule{}};
  for (int i = 0; i < 10; ++i) CHECK_FALSE(off.should_stop(0.0));
}

TEST_CASE("optimizers shrink a quadratic") {
  for (OptimizerKind kind : {OptimizerKind::kRmsProp, OptimizerKind::kSgd, OptimizerKind::kAdam}) {
    OptimizerConfig cfg;
    cfg.kind = kind;
    cfg.lr = kind == OptimizerKind::kSgd ? 0.05 : 0.05;
    cfg.decay_every = 0;
    Optimizer<float> opt(cfg);
    VectorXf w = VectorXf::Constant(8, 4.0f);
    VectorXf g(8);
    for (int step = 0; step < 200; ++step) {
      g = 2.0f * w;  // d/dw of |w|^2
      opt.step(w, g);
    }
    INFO("optimizer ", optimizer_kind_name(kind));
    CHECK(w.norm() < 0.5f);
  }
}

TEST_CASE("sgd step decay divides the learning rate on schedule") {
  OptimizerConfig cfg = sgd_config(0.1, 0.9, 30);
  Optimizer<float> opt(cfg);
  opt.begin_epoch(0);
  CHECK(opt.current_lr() == doctest::Approx(0.1));
  opt.begin_epoch(29);
  CHECK(opt.current_lr() == doctest::Approx(0.1));
  opt.begin_epoch(30);
  CHECK(opt.current_lr() == doctest::Approx(0.01));
  opt.begin_epoch(60);
  CHECK(opt.current_lr() == doctest::Approx(0.001));
}

TEST_CASE("optimizer names round-trip") {
  for (OptimizerKind kind : {OptimizerKind::kRmsProp, OptimizerKind::kSgd, OptimizerKind::kAdam}) {
    CHECK(optimizer_kind_from_name(optimizer_kind_name(kind)) == kind);
  }
  CHECK_THROWS_AS(optimizer_kind_from_name("adagrad"), ConfigError);
}

TEST_CASE("training refuses unlabeled or mismatched data") {
  Network net{desk_arch(10)};
  net.init(1);
  TrainConfig cfg;
  cfg.max_epochs = 1;
  SynthParams params;
  params.count = 20;
  params.seed = 1;
  Dataset data = make_synth_corpus(params);
  CHECK_THROWS_AS(train(net, strip_labels(data), cfg), DataError);
  Network small{desk_arch(7)};
  small.init(1);
  CHECK_THROWS_AS(train(small, data, cfg), ClassError);
}

TEST_CASE("zero epochs leaves parameters untouched") {
  Network net{desk_arch(10)};
  net.init(3);
  const std::uint64_t before = net.param_digest();
  TrainConfig cfg;
  cfg.max_epochs = 0;
  SynthParams params;
  params.count = 20;
  params.seed = 1;
  TrainResult r = train(net, make_synth_corpus(params), cfg);
  CHECK(r.epochs_run == 0);
  CHECK(net.param_digest() == before);
}

TEST_CASE("a few epochs fit a small glyph corpus") {
  SynthParams params;
  params.count = 2500;
  params.seed = 42;
  Dataset data = make_synth_corpus(params);
  Network net{desk_arch(10)};
  net.init(42);
  TrainConfig cfg;
  cfg.max_epochs = 12;
  cfg.seed = 42;
  cfg.stop = EarlyStopRule{};  // run all epochs
  TrainResult r = train(net, data, cfg);
  CHECK(r.epochs_run == 12);
  CHECK(r.history.back().train_accuracy > 0.9);
  // Fresh samples from the same family classify well too.
  SynthParams holdout = params;
  holdout.seed = 43;
  holdout.count = 400;
  CHECK(evaluate_accuracy(net, make_synth_corpus(holdout)) > 0.7);
}

TEST_CASE("training is bit-reproducible for a fixed seed") {
  SynthParams params;
  params.count = 300;
  params.seed = 9;
  Dataset data = make_synth_corpus(params);
  TrainConfig cfg;
  cfg.max_epochs = 2;
  cfg.seed = 17;

  auto run = [&]() {
    Network net{desk_arch(10)};
    net.init(17);
    train(net, data, cfg);
    return net.param_digest();
  };
  CHECK(run() == run());
}

TEST_CASE("weight penalty pulls weights toward zero") {
  SynthParams params;
  params.count = 300;
  params.seed = 5;
  Dataset data = make_synth_corpus(params);

  auto weight_norm_after = [&](double l2) {
    Network net{desk_arch(10)};
    net.init(8);
    TrainConfig cfg;
    cfg.max_epochs = 3;
    cfg.seed = 8;
    cfg.l2_weights = l2;
    cfg.stop = EarlyStopRule{};
    train(net, data, cfg);
    double sq = 0.0;
    for (auto [off, len] : net.weight_spans()) {
      sq += net.params()
                .segment(static_cast<Eigen::Index>(off), static_cast<Eigen::Index>(len))
                .squaredNorm();
    }
    return std::sqrt(sq);
  };
  CHECK(weight_norm_after(0.01) < weight_norm_after(0.0));
}
