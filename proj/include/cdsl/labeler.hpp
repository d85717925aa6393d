#pragma once

// Pseudo labels for unlabeled domains.
//
// T2PL runs four steps on the whole domain:
//   1. per class k, the floor(N / (r_top K)) samples with the highest k-th
//      softmax score; F is the union of those lists;
//   2. centroid p_k = prediction-weighted mean of f(x) over F, weights g_k;
//   3. per class k, the floor(N / (r_top K)) samples most cosine-similar to
//      p_k, entered into F' with label k;
//   4. each sample gets the majority label of its kappa = floor(N / (r_top' K))
//      Euclidean-nearest members of F'.
// Rankings break ties by ascending sample index; kNN votes break ties by
// smaller cumulative distance, then smaller class index.

#include <cstddef>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "cdsl/nets.hpp"
#include "cdsl/tensor.hpp"

namespace cdsl::labeler {

enum class Method { t2pl, softmax, shot_style, ground_truth };

std::string_view to_string(Method m);
Method parse_method(std::string_view name);

struct LabelerConfig {
  double r_top = 2.0;
  double r_top_prime = 20.0;
  Method method = Method::t2pl;

  void validate() const;
  friend bool operator==(const LabelerConfig&, const LabelerConfig&) = default;
};

/// Per-class ranked index lists plus the flattened selection.
struct TopSet {
  std::vector<std::vector<std::size_t>> per_class;  // I_k, best first
  std::vector<std::size_t> members;                 // F: ascending, each sample once
};

struct LabeledPoint {
  std::size_t index;
  int label;
};

struct PseudoLabelSet {
  std::vector<int> labels;
  Method method = Method::t2pl;
  int stage = 0;

  double accuracy(const std::vector<int>& truth) const;
};

/// Domain representations and classifier outputs, computed once per labeling.
struct DomainView {
  Tensor features;       // [N x d]
  Tensor probabilities;  // [N x K]

  static DomainView of(const nets::Model& model, const Tensor& inputs);
  std::size_t size() const { return features.rows(); }
  std::size_t num_classes() const { return probabilities.cols(); }
};

/// List size floor(N / (ratio K)), clamped to 1 once N >= K. Errors below K.
std::size_t top_list_size(std::size_t n, std::size_t k, double ratio);
/// kNN neighbour count floor(N / (r_top' K)); errors when it is zero.
std::size_t neighbour_count(std::size_t n, std::size_t k, double r_top_prime);

/// The `count` indices with the largest scores, descending; ties by ascending index.
std::vector<std::size_t> top_indices(std::span<const double> scores, std::size_t count);

TopSet select_top_confident(const DomainView& view, const LabelerConfig& cfg);
/// One centroid per class, [K x d].
Tensor build_centroids(const DomainView& view, const TopSet& top);
std::vector<LabeledPoint> select_top_similar(const DomainView& view, const Tensor& centroids,
                                             const LabelerConfig& cfg);
std::vector<int> knn_assign(const DomainView& view, const std::vector<LabeledPoint>& anchors,
                            const LabelerConfig& cfg);

/// Cosine similarity; 0 when either vector has zero norm.
double cosine(std::span<const double> a, std::span<const double> b);

PseudoLabelSet t2pl(const nets::Model& model, const Tensor& inputs, const LabelerConfig& cfg);
PseudoLabelSet softmax_labels(const nets::Model& model, const Tensor& inputs);
PseudoLabelSet shot_style_labels(const nets::Model& model, const Tensor& inputs);

/// Dispatches on cfg.method; ground_truth is not a labeler and is rejected.
PseudoLabelSet label(const nets::Model& model, const Tensor& inputs, const LabelerConfig& cfg, int stage);

/// "sample_index,label,method,stage" rows after a header line.
void write_csv(const PseudoLabelSet& set, std::ostream& out);

}  // namespace cdsl::labeler
