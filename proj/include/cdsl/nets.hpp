#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "cdsl/diffcore.hpp"
#include "cdsl/rng.hpp"
#include "cdsl/tensor.hpp"

namespace cdsl::nets {

/// Layer widths of the classification model.
///
/// The extractor is a stack of dense+ReLU layers. A two-entry bottleneck is
/// dense -> per-row standardization -> ReLU -> dense; an empty bottleneck
/// makes the extractor output the representation. The classifier has one
/// bias-free weight row per class; those rows are the class prototypes.
struct ModelSpec {
  std::size_t input_dim = 2;
  std::vector<std::size_t> extractor_widths{64, 64};
  std::vector<std::size_t> bottleneck_widths{32, 16};
  std::size_t num_classes = 4;

  std::size_t feature_dim() const;
  void validate() const;
  friend bool operator==(const ModelSpec&, const ModelSpec&) = default;
};

struct Dense {
  Tensor weight;  // [out x in]
  Tensor bias;    // [out]
};

/// Variables produced by recording a forward pass on a tape.
struct ForwardVars {
  diffcore::Var features;
  diffcore::Var logits;
  diffcore::Var prototypes;
  std::vector<diffcore::Var> params;  // same order as Model::parameters()
};

class Model {
 public:
  Model() = default;
  explicit Model(ModelSpec spec);  // all parameters zero

  /// Glorot-uniform weights, zero biases.
  static Model initialize(const ModelSpec& spec, Rng& rng);

  const ModelSpec& spec() const { return spec_; }
  std::size_t feature_dim() const { return spec_.feature_dim(); }
  std::size_t num_classes() const { return spec_.num_classes; }

  std::vector<Dense>& extractor() { return extractor_; }
  const std::vector<Dense>& extractor() const { return extractor_; }
  std::vector<Dense>& bottleneck() { return bottleneck_; }
  const std::vector<Dense>& bottleneck() const { return bottleneck_; }
  Tensor& prototypes() { return classifier_; }
  const Tensor& prototypes() const { return classifier_; }

  std::vector<Tensor*> parameters();
  std::vector<const Tensor*> parameters() const;
  std::vector<std::string> parameter_names() const;

  /// Records the forward pass on `tape`. Parameters become input() leaves that
  /// require gradients when `trainable` is set.
  ForwardVars forward(diffcore::Tape& tape, diffcore::Var x, bool trainable) const;

  /// Copies the tape's parameter gradients into the parameter tensors.
  void collect_gradients(const diffcore::Tape& tape, const ForwardVars& vars);

  /// Deep copy for use as the frozen previous-stage model.
  Model snapshot() const { return *this; }

  friend bool operator==(const Model&, const Model&);

 private:
  ModelSpec spec_;
  std::vector<Dense> extractor_;
  std::vector<Dense> bottleneck_;
  Tensor classifier_;  // [K x d], no bias
};

/// Representation after the bottleneck, [n x d].
Tensor features(const Model& model, const Tensor& x);
/// features(x) * W^T, [n x K].
Tensor logits(const Model& model, const Tensor& x);
/// Row softmax of logits.
Tensor probabilities(const Model& model, const Tensor& x);
/// Argmax class per row; ties go to the smaller class index.
std::vector<int> predict(const Model& model, const Tensor& x);
std::vector<int> argmax_rows(const Tensor& scores);
double accuracy(const Model& model, const Tensor& x, const std::vector<int>& labels);

/// FNV-1a over every parameter value.
std::uint64_t parameter_hash(const Model& model);

/// Current model plus the frozen copy taken at the previous stage boundary.
class ModelPair {
 public:
  explicit ModelPair(Model current) : current_(std::move(current)) {}

  Model& current() { return current_; }
  const Model& current() const { return current_; }
  bool has_previous() const { return previous_ != nullptr; }
  const Model& previous() const;
  std::shared_ptr<const Model> previous_ptr() const { return previous_; }

  /// Replaces `previous` with a snapshot of `current`.
  void refresh_previous() { previous_ = std::make_shared<const Model>(current_.snapshot()); }
  void clear_previous() { previous_.reset(); }

 private:
  Model current_;
  std::shared_ptr<const Model> previous_;
};

/// Checkpoints are JSON: {"format","version","spec",{"parameters":[{"name","shape","values"}]}}.
/// Doubles are written in shortest round-trip form so load(save(m)) == m bit for bit.
void save_checkpoint(const Model& model, const std::filesystem::path& path);
Model load_checkpoint(const std::filesystem::path& path);
std::string checkpoint_json(const Model& model);
Model checkpoint_from_json(const std::string& text);

}  // namespace cdsl::nets
