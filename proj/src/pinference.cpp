#include "wm/pinference.hpp"

#include "wm/io.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace wm {

namespace {

// Stable softplus for the binary cross-entropy: log(1 + e^x).
double softplus(double x) {
  if (x > 30.0) return x;
  if (x < -30.0) return std::exp(x);
  return std::log1p(std::exp(x));
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

std::string join_ints(const std::vector<int>& v) {
  std::ostringstream out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out << ',';
    out << v[i];
  }
  return out.str();
}

std::vector<int> split_ints(const std::string& text) {
  std::vector<int> out;
  std::istringstream in(text);
  std::string tok;
  while (std::getline(in, tok, ',')) {
    if (!tok.empty()) out.push_back(std::stoi(tok));
  }
  return out;
}

}  // namespace

const char* set_composition_name(SetComposition c) {
  switch (c) {
    case SetComposition::kFilterMean:
      return "filter-mean";
    case SetComposition::kProbeElements:
      return "probe-elements";
  }
  throw ConfigError("unknown set composition");
}

SetComposition set_composition_from_name(std::string_view name) {
  if (name == "filter-mean") return SetComposition::kFilterMean;
  if (name == "probe-elements") return SetComposition::kProbeElements;
  throw ConfigError("unknown set composition name: " + std::string(name));
}

void DetectorLayout::validate() const {
  if (element_length < 1) throw ConfigError("detector element length must be positive");
  if (encoder.empty()) throw ConfigError("detector encoder needs at least one layer");
  if (classifier.empty()) throw ConfigError("detector classifier needs at least one layer");
  for (int w : encoder) {
    if (w < 1) throw ConfigError("detector encoder widths must be positive");
  }
  for (int w : classifier) {
    if (w < 1) throw ConfigError("detector classifier widths must be positive");
  }
}

int FeatureGroups::probe_count() const {
  int n = 0;
  for (const MatrixXf& g : groups) n += static_cast<int>(g.cols());
  return n;
}

int FeatureGroups::nonempty_count() const {
  int n = 0;
  for (const MatrixXf& g : groups) {
    if (g.cols() > 0) ++n;
  }
  return n;
}

std::vector<int> FeatureGroups::empty_classes() const {
  std::vector<int> out;
  for (std::size_t i = 0; i < groups.size(); ++i) {
    if (groups[i].cols() == 0) out.push_back(static_cast<int>(i));
  }
  return out;
}

FeatureGroups feature_extract(const Network& model, const MatrixXf& probe) {
  if (probe.cols() == 0) throw SizeError("feature extraction needs a nonempty probe set");
  const auto [filters, positions] = model.tap_dims();
  const int num_classes = model.arch().num_classes;
  const Eigen::Index map_len = static_cast<Eigen::Index>(filters) * positions;

  const VectorXi pred = model.classify(probe);

  FeatureGroups out;
  out.filters = filters;
  out.positions = positions;
  out.source_model = model.param_digest();
  out.groups.resize(static_cast<std::size_t>(num_classes));

  std::vector<int> counts(static_cast<std::size_t>(num_classes), 0);
  for (Eigen::Index i = 0; i < pred.size(); ++i) ++counts[static_cast<std::size_t>(pred[i])];
  for (int c = 0; c < num_classes; ++c) {
    out.groups[static_cast<std::size_t>(c)].resize(map_len, counts[static_cast<std::size_t>(c)]);
  }

  // Activations are computed in chunks: the tap maps are an order of magnitude
  // wider than the inputs, and a 10k-probe run would otherwise hold every
  // intermediate layer for every probe at once.
  std::vector<int> next(static_cast<std::size_t>(num_classes), 0);
  const Eigen::Index chunk = 256;
  for (Eigen::Index start = 0; start < probe.cols(); start += chunk) {
    const Eigen::Index len = std::min(chunk, probe.cols() - start);
    const MatrixXf block = probe.middleCols(start, len);
    const MatrixXf acts = model.activations_at_tap(block);
    for (Eigen::Index j = 0; j < len; ++j) {
      const auto cls = static_cast<std::size_t>(pred[start + j]);
      out.groups[cls].col(next[cls]++) = acts.col(j);
    }
  }
  return out;
}

std::vector<FeatureSet> bootstrap_sets(const FeatureGroups& groups, const PIConfig& cfg,
                                       int source_label, std::uint64_t seed,
                                       std::vector<std::string>* warnings) {
  if (cfg.bootstrap_rounds < 1) throw ConfigError("bootstrap rounds must be positive");
  if (cfg.samples_per_round < 1) throw ConfigError("samples per round must be positive");
  if (source_label != 0 && source_label != 1) throw ClassError("set label must be 0 or 1");
  if (groups.nonempty_count() == 0) throw SizeError("all prediction groups are empty");
  const Eigen::Index map_len = static_cast<Eigen::Index>(groups.filters) * groups.positions;
  for (const MatrixXf& g : groups.groups) {
    if (g.cols() > 0 && g.rows() != map_len) {
      throw ShapeError("group activation rows do not match filters x positions");
    }
  }

  Rng rng(seed);
  std::vector<FeatureSet> sets;
  sets.reserve(static_cast<std::size_t>(cfg.bootstrap_rounds) *
               static_cast<std::size_t>(groups.nonempty_count()));
  const int P = groups.positions;
  const int F = groups.filters;
  for (std::size_t cls = 0; cls < groups.groups.size(); ++cls) {
    const MatrixXf& g = groups.groups[cls];
    if (g.cols() == 0) {
      if (warnings) {
        warnings->push_back("prediction group for class " + std::to_string(cls) +
                            " is empty; skipped");
      }
      continue;
    }
    for (int round = 0; round < cfg.bootstrap_rounds; ++round) {
      FeatureSet set;
      set.source_label = source_label;
      set.source_model = groups.source_model;
      set.group_class = static_cast<int>(cls);
      if (cfg.composition == SetComposition::kFilterMean) {
        // Average the drawn maps, then cut the mean map into one element per
        // filter. The column layout is filter-major, so a reshape suffices.
        VectorX<double> mean = VectorX<double>::Zero(map_len);
        for (int s = 0; s < cfg.samples_per_round; ++s) {
          const auto pick = static_cast<Eigen::Index>(rng.uniform_index(
              static_cast<std::uint64_t>(g.cols())));
          mean += g.col(pick).cast<double>();
        }
        mean /= static_cast<double>(cfg.samples_per_round);
        const VectorXf meanf = mean.cast<float>();
        set.elements = Eigen::Map<const MatrixXf>(meanf.data(), P, F);
      } else {
        // One element per drawn probe: its map averaged across filters.
        set.elements.resize(P, cfg.samples_per_round);
        for (int s = 0; s < cfg.samples_per_round; ++s) {
          const auto pick = static_cast<Eigen::Index>(rng.uniform_index(
              static_cast<std::uint64_t>(g.cols())));
          const Eigen::Map<const MatrixXf> maps(g.col(pick).data(), P, F);
          set.elements.col(s) = maps.rowwise().mean();
        }
      }
      sets.push_back(std::move(set));
    }
  }
  return sets;
}

PIDataset pidata(const MarkedBundle& bundle, const MatrixXf& probe, const PIConfig& cfg) {
  PIDataset out;
  const FeatureGroups clean_groups = feature_extract(bundle.clean, probe);
  const FeatureGroups marked_groups = feature_extract(bundle.marked, probe);
  out.unmarked = bootstrap_sets(clean_groups, cfg, 0, stream_seed(cfg.seed, "sets-clean"));
  out.marked = bootstrap_sets(marked_groups, cfg, 1, stream_seed(cfg.seed, "sets-marked"));
  return out;
}

template <typename T>
BasicDetector<T>::BasicDetector(const DetectorLayout& layout) : layout_(layout) {
  layout_.validate();
  build();
}

template <typename T>
BasicDetector<T>::BasicDetector(const BasicDetector& other)
    : record(other.record),
      layout_(other.layout_),
      encoder_(other.encoder_),
      classifier_(other.classifier_),
      offsets_(other.offsets_),
      params_(other.params_),
      grads_(other.grads_) {
  rebind();
}

template <typename T>
BasicDetector<T>& BasicDetector<T>::operator=(const BasicDetector& other) {
  if (this != &other) {
    record = other.record;
    layout_ = other.layout_;
    encoder_ = other.encoder_;
    classifier_ = other.classifier_;
    offsets_ = other.offsets_;
    params_ = other.params_;
    grads_ = other.grads_;
    rebind();
  }
  return *this;
}

template <typename T>
void BasicDetector<T>::build() {
  encoder_.clear();
  classifier_.clear();
  offsets_.clear();

  auto dense = [](const std::string& name, int units, bool relu) {
    LayerDesc d;
    d.kind = LayerKind::kDense;
    d.name = name;
    d.units = units;
    d.relu = relu;
    return d;
  };

  int in = layout_.element_length;
  for (std::size_t i = 0; i < layout_.encoder.size(); ++i) {
    encoder_.emplace_back(dense("enc" + std::to_string(i), layout_.encoder[i], true),
                          ImageShape{1, 1, in});
    in = layout_.encoder[i];
  }
  in = layout_.pooled_width();
  for (std::size_t i = 0; i < layout_.classifier.size(); ++i) {
    classifier_.emplace_back(dense("cls" + std::to_string(i), layout_.classifier[i], true),
                             ImageShape{1, 1, in});
    in = layout_.classifier[i];
  }
  classifier_.emplace_back(dense("out", 1, false), ImageShape{1, 1, in});

  std::size_t total = 0;
  for (const DenseLayer<T>& l : encoder_) {
    offsets_.push_back(total);
    total += l.param_count();
  }
  for (const DenseLayer<T>& l : classifier_) {
    offsets_.push_back(total);
    total += l.param_count();
  }
  params_ = VectorX<T>::Zero(static_cast<Eigen::Index>(total));
  grads_ = VectorX<T>::Zero(static_cast<Eigen::Index>(total));
  rebind();
}

template <typename T>
void BasicDetector<T>::rebind() {
  std::size_t k = 0;
  for (DenseLayer<T>& l : encoder_) {
    l.bind(params_.data() + offsets_[k], grads_.data() + offsets_[k]);
    ++k;
  }
  for (DenseLayer<T>& l : classifier_) {
    l.bind(params_.data() + offsets_[k], grads_.data() + offsets_[k]);
    ++k;
  }
}

template <typename T>
void BasicDetector<T>::init(std::uint64_t seed) {
  if (params_.size() == 0) throw ConfigError("detector has no layers to initialize");
  Rng rng(seed, "detector-init");
  for (DenseLayer<T>& l : encoder_) l.init_params(rng);
  for (DenseLayer<T>& l : classifier_) l.init_params(rng);
  record.seed = seed;
}

template <typename T>
void BasicDetector<T>::set_params(const VectorX<T>& p) {
  if (p.size() != params_.size()) throw ShapeError("detector parameter vector size mismatch");
  params_ = p;
}

template <typename T>
void BasicDetector<T>::forward_batch(const MatrixX<T>& elems,
                                     const std::vector<std::pair<int, int>>& ranges,
                                     Flow& flow) const {
  flow.eacts.resize(encoder_.size());
  const MatrixX<T>* cur = &elems;
  for (std::size_t i = 0; i < encoder_.size(); ++i) {
    encoder_[i].forward(*cur, flow.eacts[i], nullptr);
    cur = &flow.eacts[i];
  }
  const MatrixX<T>& codes = flow.eacts.back();
  flow.pooled.resize(codes.rows(), static_cast<Eigen::Index>(ranges.size()));
  for (std::size_t s = 0; s < ranges.size(); ++s) {
    flow.pooled.col(static_cast<Eigen::Index>(s)) =
        codes.middleCols(ranges[s].first, ranges[s].second).rowwise().sum();
  }
  flow.cacts.resize(classifier_.size());
  cur = &flow.pooled;
  for (std::size_t i = 0; i < classifier_.size(); ++i) {
    classifier_[i].forward(*cur, flow.cacts[i], nullptr);
    cur = &flow.cacts[i];
  }
}

template <typename T>
void BasicDetector<T>::backward_batch(const MatrixX<T>& elems,
                                      const std::vector<std::pair<int, int>>& ranges, Flow& flow,
                                      const MatrixX<T>& dlogits) {
  LayerScratch<T> scratch;  // dense layers keep no scratch state
  MatrixX<T> delta = dlogits;
  MatrixX<T> dprev;
  for (std::size_t i = classifier_.size(); i-- > 0;) {
    const MatrixX<T>& xin = (i == 0) ? flow.pooled : flow.cacts[i - 1];
    classifier_[i].backward(xin, flow.cacts[i], delta, &dprev, scratch);
    delta.swap(dprev);
  }
  // delta now holds the pooled-sum gradient; every element of a set inherits
  // its set's column unchanged (d sum / d element = identity).
  MatrixX<T> dcodes(flow.eacts.back().rows(), flow.eacts.back().cols());
  for (std::size_t s = 0; s < ranges.size(); ++s) {
    dcodes.middleCols(ranges[s].first, ranges[s].second).colwise() =
        delta.col(static_cast<Eigen::Index>(s));
  }
  delta.swap(dcodes);
  for (std::size_t i = encoder_.size(); i-- > 0;) {
    const MatrixX<T>& xin = (i == 0) ? elems : flow.eacts[i - 1];
    MatrixX<T>* dx = (i == 0) ? nullptr : &dprev;
    encoder_[i].backward(xin, flow.eacts[i], delta, dx, scratch);
    if (dx) delta.swap(dprev);
  }
}

template <typename T>
double BasicDetector<T>::score(const MatrixX<T>& elements) const {
  if (params_.size() == 0) throw ConfigError("detector is empty");
  if (elements.rows() != layout_.element_length) {
    throw FeatureError("set element length does not match the detector input");
  }
  if (elements.cols() == 0) throw SizeError("cannot score an empty set");
  Flow flow;
  forward_batch(elements, {{0, static_cast<int>(elements.cols())}}, flow);
  return sigmoid(static_cast<double>(flow.cacts.back()(0, 0)));
}

template <typename T>
double BasicDetector<T>::loss_and_grad(const std::vector<const MatrixX<T>*>& sets,
                                       const std::vector<int>& labels) {
  if (sets.empty()) throw SizeError("loss needs at least one set");
  if (sets.size() != labels.size()) throw SizeError("sets and labels differ in length");
  Eigen::Index total = 0;
  for (std::size_t i = 0; i < sets.size(); ++i) {
    if (sets[i]->rows() != layout_.element_length) {
      throw FeatureError("set element length does not match the detector input");
    }
    if (sets[i]->cols() == 0) throw SizeError("cannot train on an empty set");
    if (labels[i] != 0 && labels[i] != 1) throw ClassError("set label must be 0 or 1");
    total += sets[i]->cols();
  }

  MatrixX<T> elems(layout_.element_length, total);
  std::vector<std::pair<int, int>> ranges(sets.size());
  Eigen::Index at = 0;
  for (std::size_t i = 0; i < sets.size(); ++i) {
    elems.middleCols(at, sets[i]->cols()) = *sets[i];
    ranges[i] = {static_cast<int>(at), static_cast<int>(sets[i]->cols())};
    at += sets[i]->cols();
  }

  Flow flow;
  forward_batch(elems, ranges, flow);
  const MatrixX<T>& logits = flow.cacts.back();

  const double inv_n = 1.0 / static_cast<double>(sets.size());
  double loss = 0.0;
  MatrixX<T> dlogits(1, logits.cols());
  for (Eigen::Index j = 0; j < logits.cols(); ++j) {
    const double l = static_cast<double>(logits(0, j));
    const double y = static_cast<double>(labels[static_cast<std::size_t>(j)]);
    loss += y * softplus(-l) + (1.0 - y) * softplus(l);
    dlogits(0, j) = static_cast<T>((sigmoid(l) - y) * inv_n);
  }
  backward_batch(elems, ranges, flow, dlogits);
  return loss * inv_n;
}

template class BasicDetector<float>;
template class BasicDetector<double>;

VectorX<double> score_sets(const DetectorModel& detector, const std::vector<FeatureSet>& sets) {
  VectorX<double> out(static_cast<Eigen::Index>(sets.size()));
  for (std::size_t i = 0; i < sets.size(); ++i) {
    out[static_cast<Eigen::Index>(i)] = detector.score(sets[i].elements);
  }
  return out;
}

double detector_accuracy(const DetectorModel& detector, const std::vector<FeatureSet>& sets) {
  if (sets.empty()) throw SizeError("accuracy needs at least one set");
  int hits = 0;
  for (const FeatureSet& set : sets) {
    const int vote = detector.score(set.elements) > 0.5 ? 1 : 0;
    if (vote == set.source_label) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(sets.size());
}

int majority_verdict(const VectorX<double>& scores, double threshold) {
  if (scores.size() == 0) throw SizeError("verdict needs at least one score");
  Eigen::Index votes = 0;
  for (Eigen::Index i = 0; i < scores.size(); ++i) {
    if (scores[i] > threshold) ++votes;
  }
  return 2 * votes > scores.size() ? 1 : 0;
}

DetectorModel train_detector(const std::vector<FeatureSet>& train_sets,
                             const std::vector<FeatureSet>& test_sets, const PIConfig& cfg) {
  if (train_sets.empty()) throw SizeError("detector training needs sets");
  if (cfg.max_epochs < 1) throw ConfigError("detector epochs must be positive");
  if (cfg.batch_sets < 1) throw ConfigError("detector batch size must be positive");
  if (cfg.epsilon_detect < 0.0 || cfg.epsilon_detect > 1.0) {
    throw ConfigError("epsilon_detect must lie in [0, 1]");
  }
  bool saw[2] = {false, false};
  const int len = train_sets.front().element_length();
  for (const FeatureSet& s : train_sets) {
    if (s.source_label != 0 && s.source_label != 1) throw ClassError("set label must be 0 or 1");
    saw[s.source_label] = true;
    if (s.element_length() != len) throw FeatureError("training sets mix element lengths");
  }
  if (!saw[0] || !saw[1]) {
    throw ClassError("detector training needs both marked and unmarked sets");
  }
  for (const FeatureSet& s : test_sets) {
    if (s.element_length() != len) throw FeatureError("held-out sets mix element lengths");
  }

  DetectorLayout layout = cfg.layout;
  layout.element_length = len;
  DetectorModel det(layout);
  det.init(cfg.seed);

  Optimizer<Scalar> opt(cfg.opt);
  Rng order(cfg.seed, "detector-order");
  const int n = static_cast<int>(train_sets.size());

  DetectorModel::TrainingRecord rec;
  rec.seed = cfg.seed;
  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    opt.begin_epoch(epoch);
    const std::vector<int> perm = order.permutation(n);
    double epoch_loss = 0.0;
    for (int start = 0; start < n; start += cfg.batch_sets) {
      const int count = std::min(cfg.batch_sets, n - start);
      std::vector<const MatrixXf*> batch(static_cast<std::size_t>(count));
      std::vector<int> labels(static_cast<std::size_t>(count));
      for (int i = 0; i < count; ++i) {
        const FeatureSet& s = train_sets[static_cast<std::size_t>(perm[start + i])];
        batch[static_cast<std::size_t>(i)] = &s.elements;
        labels[static_cast<std::size_t>(i)] = s.source_label;
      }
      det.zero_grads();
      epoch_loss += det.loss_and_grad(batch, labels) * count;
      opt.step(det.params(), det.grads());
    }
    rec.epochs = epoch + 1;
    rec.final_loss = epoch_loss / n;
    if (!test_sets.empty()) {
      rec.heldout_accuracy = detector_accuracy(det, test_sets);
      if (1.0 - rec.heldout_accuracy <= cfg.epsilon_detect) {
        rec.converged = true;
        break;
      }
    }
  }
  det.record = rec;
  return det;
}

DetectReport detect(const DetectorModel& detector, const Network& model, const MatrixXf& probe,
                    const PIConfig& cfg) {
  DetectReport report;
  const FeatureGroups groups = feature_extract(model, probe);
  const std::vector<FeatureSet> sets =
      bootstrap_sets(groups, cfg, 0, stream_seed(cfg.seed, "detect-draw"), &report.warnings);
  if (!sets.empty() && sets.front().element_length() != detector.element_length()) {
    throw FeatureError("model tap shape does not match the detector input length");
  }
  report.scores = score_sets(detector, sets);
  report.sets_scored = static_cast<int>(sets.size());
  for (Eigen::Index i = 0; i < report.scores.size(); ++i) {
    if (report.scores[i] > 0.5) ++report.votes_marked;
  }
  report.verdict = majority_verdict(report.scores);
  report.mean_score = report.scores.mean();
  return report;
}

void save_feature_sets(const std::string& path, const std::vector<FeatureSet>& sets) {
  int len = 0;
  std::size_t floats = 0;
  for (const FeatureSet& s : sets) {
    if (len == 0) len = s.element_length();
    if (s.element_length() != len) throw FeatureError("archive sets mix element lengths");
    floats += static_cast<std::size_t>(s.elements.size());
  }

  BlobWriter writer;
  writer.header().set("format", "wmsets");
  writer.header().set_int("version", 1);
  writer.header().set_int("count", static_cast<long long>(sets.size()));
  writer.header().set_int("element_length", len);

  std::vector<std::int32_t> labels, groups, counts;
  std::vector<std::uint64_t> digests;
  std::vector<float> data;
  data.reserve(floats);
  for (const FeatureSet& s : sets) {
    labels.push_back(s.source_label);
    groups.push_back(s.group_class);
    counts.push_back(s.element_count());
    digests.push_back(s.source_model);
    data.insert(data.end(), s.elements.data(), s.elements.data() + s.elements.size());
  }
  writer.add_typed("labels", labels.data(), labels.size());
  writer.add_typed("groups", groups.data(), groups.size());
  writer.add_typed("counts", counts.data(), counts.size());
  writer.add_typed("digests", digests.data(), digests.size());
  writer.add_typed("data", data.data(), data.size());
  writer.save(path);
}

std::vector<FeatureSet> load_feature_sets(const std::string& path) {
  BlobReader reader = BlobReader::load(path);
  if (reader.header().get_or("format", "") != "wmsets") {
    throw DecodeError("not a feature-set archive: " + path);
  }
  if (reader.header().get_int("version") != 1) {
    throw DecodeError("unsupported feature-set archive version in " + path);
  }
  const int count = reader.header().get_int("count");
  const int len = reader.header().get_int("element_length");
  const auto labels = reader.blob_typed<std::int32_t>("labels");
  const auto groups = reader.blob_typed<std::int32_t>("groups");
  const auto counts = reader.blob_typed<std::int32_t>("counts");
  const auto digests = reader.blob_typed<std::uint64_t>("digests");
  const auto data = reader.blob_typed<float>("data");
  if (static_cast<int>(labels.size()) != count || static_cast<int>(groups.size()) != count ||
      static_cast<int>(counts.size()) != count || static_cast<int>(digests.size()) != count) {
    throw DecodeError("feature-set archive metadata truncated: " + path);
  }

  std::vector<FeatureSet> sets(static_cast<std::size_t>(count));
  std::size_t at = 0;
  for (int i = 0; i < count; ++i) {
    FeatureSet& s = sets[static_cast<std::size_t>(i)];
    s.source_label = labels[static_cast<std::size_t>(i)];
    s.group_class = groups[static_cast<std::size_t>(i)];
    s.source_model = digests[static_cast<std::size_t>(i)];
    const int cols = counts[static_cast<std::size_t>(i)];
    const std::size_t need = static_cast<std::size_t>(len) * static_cast<std::size_t>(cols);
    if (at + need > data.size()) throw DecodeError("feature-set archive data truncated: " + path);
    s.elements = Eigen::Map<const MatrixXf>(data.data() + at, len, cols);
    at += need;
  }
  if (at != data.size()) throw DecodeError("feature-set archive has trailing data: " + path);
  return sets;
}

void save_detector(const std::string& path, const DetectorModel& detector) {
  BlobWriter writer;
  writer.header().set("format", "wmdetector");
  writer.header().set_int("version", 1);
  writer.header().set_int("element_length", detector.layout().element_length);
  writer.header().set("encoder", join_ints(detector.layout().encoder));
  writer.header().set("classifier", join_ints(detector.layout().classifier));
  writer.header().set_int("epochs", detector.record.epochs);
  writer.header().set_double("final_loss", detector.record.final_loss);
  writer.header().set_double("heldout_accuracy", detector.record.heldout_accuracy);
  writer.header().set_int("converged", detector.record.converged ? 1 : 0);
  writer.header().set_u64("seed", detector.record.seed);
  writer.header().set_u64("param_digest", detector.param_digest());
  writer.add_typed("params", detector.params().data(),
                   static_cast<std::size_t>(detector.params().size()));
  writer.save(path);
}

DetectorModel load_detector(const std::string& path) {
  BlobReader reader = BlobReader::load(path);
  if (reader.header().get_or("format", "") != "wmdetector") {
    throw DecodeError("not a detector file: " + path);
  }
  if (reader.header().get_int("version") != 1) {
    throw DecodeError("unsupported detector version in " + path);
  }
  DetectorLayout layout;
  layout.element_length = reader.header().get_int("element_length");
  layout.encoder = split_ints(reader.header().get("encoder"));
  layout.classifier = split_ints(reader.header().get("classifier"));
  DetectorModel det(layout);

  const auto params = reader.blob_typed<float>("params");
  if (static_cast<Eigen::Index>(params.size()) != det.param_count()) {
    throw DecodeError("detector parameter count mismatch in " + path);
  }
  det.set_params(Eigen::Map<const VectorXf>(params.data(),
                                            static_cast<Eigen::Index>(params.size())));
  if (det.param_digest() != reader.header().get_u64("param_digest")) {
    throw DecodeError("detector parameter digest mismatch in " + path);
  }
  det.record.epochs = reader.header().get_int("epochs");
  det.record.final_loss = reader.header().get_double("final_loss");
  det.record.heldout_accuracy = reader.header().get_double("heldout_accuracy");
  det.record.converged = reader.header().get_int("converged") != 0;
  det.record.seed = reader.header().get_u64("seed");
  return det;
}

}  // namespace wm
