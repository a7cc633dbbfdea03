#pragma once

#include "wm/common.hpp"
#include "wm/mark.hpp"
#include "wm/nn/layers.hpp"
#include "wm/nn/network.hpp"
#include "wm/nn/optimizer.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace wm {

// Watermark detection from inside the model: tap the last convolution layer,
// turn its activation maps into labeled sets, and train a permutation-invariant
// set classifier that tells marked models from clean ones.

// How one bootstrap round's drawn activation maps become the elements of a set.
enum class SetComposition {
  // Element = one filter's map, averaged over the drawn probes. Set size =
  // filter count. This is the default reading.
  kFilterMean,
  // Element = one drawn probe's map, averaged over filters. Set size =
  // samples_per_round. Alternative reading, kept selectable.
  kProbeElements,
};

const char* set_composition_name(SetComposition c);
SetComposition set_composition_from_name(std::string_view name);

// Widths of the two dense stacks. The encoder runs per element and ends at the
// pooled width; the classifier runs on the pooled sum and ends in an implicit
// 1-unit sigmoid output layer.
struct DetectorLayout {
  int element_length = 0;
  std::vector<int> encoder = {300, 200, 100, 30};
  std::vector<int> classifier = {512, 512, 512};

  int pooled_width() const { return encoder.empty() ? 0 : encoder.back(); }
  void validate() const;
};

struct PIConfig {
  int probe_count = 10000;      // unlabeled probe inputs per model
  int bootstrap_rounds = 10;    // sets drawn per class group
  int samples_per_round = 100;  // activation maps drawn (with replacement) per set
  SetComposition composition = SetComposition::kFilterMean;
  DetectorLayout layout;        // element_length is filled in from the data
  OptimizerConfig opt = adam_config(0.001);
  int max_epochs = 100;
  int batch_sets = 32;          // sets per optimizer step
  double epsilon_detect = 0.1;  // stop when held-out error drops to this
  std::uint64_t seed = 1;
};

// One labeled set of fixed-length activation vectors. Element order carries no
// meaning; the detector is invariant to it by construction.
struct FeatureSet {
  MatrixXf elements;               // element_length x element_count
  int source_label = 0;            // 1 = extracted from a marked model
  std::uint64_t source_model = 0;  // parameter digest of the source model
  int group_class = -1;            // predicted class of the underlying probes

  int element_length() const { return static_cast<int>(elements.rows()); }
  int element_count() const { return static_cast<int>(elements.cols()); }
};

// Tap activations bucketed by the class the model PREDICTED for each probe.
// Predicted (not ground-truth) labels keep the probe set label-free.
struct FeatureGroups {
  std::vector<MatrixXf> groups;  // per class: (filters*positions) x n_probes
  int filters = 0;
  int positions = 0;
  std::uint64_t source_model = 0;

  int probe_count() const;
  int nonempty_count() const;
  std::vector<int> empty_classes() const;
};

// Runs the model over the probe set and buckets tap activations by predicted
// class. The group matrices partition the probe columns.
FeatureGroups feature_extract(const Network& model, const MatrixXf& probe);

// Draws cfg.bootstrap_rounds sets from every nonempty group. Empty groups are
// skipped; if `warnings` is given, one line per skipped class is appended.
std::vector<FeatureSet> bootstrap_sets(const FeatureGroups& groups, const PIConfig& cfg,
                                       int source_label, std::uint64_t seed,
                                       std::vector<std::string>* warnings = nullptr);

// Labeled training material from one embedding run: clean-model sets carry
// label 0, marked-model sets carry label 1.
struct PIDataset {
  std::vector<FeatureSet> unmarked;
  std::vector<FeatureSet> marked;
};

PIDataset pidata(const MarkedBundle& bundle, const MatrixXf& probe, const PIConfig& cfg);

// Set classifier: a dense encoder applied to every element, summed over the
// set, then a dense classifier ending in one sigmoid unit. All parameters live
// in one flat vector; scalar type is a template so gradients can be checked in
// double precision.
template <typename T>
class BasicDetector {
 public:
  BasicDetector() = default;
  explicit BasicDetector(const DetectorLayout& layout);

  // Copies rebind the layer views onto the new parameter buffer. Declaring
  // them suppresses implicit moves, so moves degrade to copies (which is
  // correct: layers hold raw pointers into the buffers).
  BasicDetector(const BasicDetector& other);
  BasicDetector& operator=(const BasicDetector& other);

  void init(std::uint64_t seed);

  const DetectorLayout& layout() const { return layout_; }
  int element_length() const { return layout_.element_length; }
  Eigen::Index param_count() const { return params_.size(); }
  VectorX<T>& params() { return params_; }
  const VectorX<T>& params() const { return params_; }
  void set_params(const VectorX<T>& p);
  VectorX<T>& grads() { return grads_; }
  void zero_grads() { grads_.setZero(); }
  std::uint64_t param_digest() const {
    return fnv1a64(params_.data(), static_cast<std::size_t>(params_.size()) * sizeof(T));
  }

  // Sigmoid score for one set (columns = elements). 0 = clean, 1 = marked.
  double score(const MatrixX<T>& elements) const;

  // Mean binary cross-entropy over a batch of sets; parameter gradients are
  // accumulated into grads(). Labels must be 0 or 1.
  double loss_and_grad(const std::vector<const MatrixX<T>*>& sets, const std::vector<int>& labels);

  struct TrainingRecord {
    int epochs = 0;
    double final_loss = 0.0;
    double heldout_accuracy = -1.0;  // -1 until measured
    bool converged = false;
    std::uint64_t seed = 0;
  };
  TrainingRecord record;

 private:
  void build();
  void rebind();

  struct Flow {
    std::vector<MatrixX<T>> eacts;  // encoder activations, last = per-element codes
    MatrixX<T> pooled;              // pooled_width x n_sets
    std::vector<MatrixX<T>> cacts;  // classifier activations, last = logits (1 x n_sets)
  };
  // ranges: per set, (first column, column count) into `elems`.
  void forward_batch(const MatrixX<T>& elems, const std::vector<std::pair<int, int>>& ranges,
                     Flow& flow) const;
  void backward_batch(const MatrixX<T>& elems, const std::vector<std::pair<int, int>>& ranges,
                      Flow& flow, const MatrixX<T>& dlogits);

  DetectorLayout layout_;
  std::vector<DenseLayer<T>> encoder_;
  std::vector<DenseLayer<T>> classifier_;
  std::vector<std::size_t> offsets_;
  VectorX<T> params_;
  VectorX<T> grads_;
};

using DetectorModel = BasicDetector<Scalar>;

// Scores every set; order follows the input.
VectorX<double> score_sets(const DetectorModel& detector, const std::vector<FeatureSet>& sets);

// Fraction of sets whose thresholded score (at 0.5) matches source_label.
double detector_accuracy(const DetectorModel& detector, const std::vector<FeatureSet>& sets);

// Majority vote over per-set scores thresholded at 0.5. An exact tie returns
// 0: accusing a model of carrying a mark takes a strict majority.
int majority_verdict(const VectorX<double>& scores, double threshold = 0.5);

// Trains the detector on labeled sets for up to cfg.max_epochs, stopping early
// once held-out error on test_sets is at most cfg.epsilon_detect. Both labels
// must appear in train_sets. With empty test_sets no early stop happens and
// heldout_accuracy stays -1.
DetectorModel train_detector(const std::vector<FeatureSet>& train_sets,
                             const std::vector<FeatureSet>& test_sets, const PIConfig& cfg);

struct DetectReport {
  int verdict = 0;      // 1 = marked
  double mean_score = 0.0;
  int sets_scored = 0;
  int votes_marked = 0;
  VectorX<double> scores;
  std::vector<std::string> warnings;  // e.g. empty prediction groups
};

// Runs the full pipeline against one model: extract, bootstrap, score, vote.
DetectReport detect(const DetectorModel& detector, const Network& model, const MatrixXf& probe,
                    const PIConfig& cfg);

// Archive IO. All sets in one file must share an element length.
void save_feature_sets(const std::string& path, const std::vector<FeatureSet>& sets);
std::vector<FeatureSet> load_feature_sets(const std::string& path);

void save_detector(const std::string& path, const DetectorModel& detector);
DetectorModel load_detector(const std::string& path);

}  // namespace wm
