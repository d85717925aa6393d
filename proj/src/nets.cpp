#include "cdsl/nets.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace cdsl::nets {

using diffcore::Tape;
using diffcore::Var;

std::size_t ModelSpec::feature_dim() const {
  if (!bottleneck_widths.empty()) return bottleneck_widths.back();
  if (!extractor_widths.empty()) return extractor_widths.back();
  return input_dim;
}

void ModelSpec::validate() const {
  if (input_dim == 0) throw Error("model: input_dim must be positive");
  if (num_classes == 0) throw Error("model: num_classes must be positive");
  if (!bottleneck_widths.empty() && bottleneck_widths.size() != 2) {
    throw Error("model: bottleneck needs exactly two widths (hidden, output) or none");
  }
  for (auto w : extractor_widths)
    if (w == 0) throw Error("model: extractor widths must be positive");
  for (auto w : bottleneck_widths)
    if (w == 0) throw Error("model: bottleneck widths must be positive");
}

namespace {

Dense zero_dense(std::size_t in, std::size_t out) { return Dense{Tensor::zeros(out, in), Tensor({out})}; }

void glorot(Tensor& w, Rng& rng) {
  const double fan_out = static_cast<double>(w.rows());
  const double fan_in = static_cast<double>(w.cols());
  const double a = std::sqrt(6.0 / (fan_in + fan_out));
  for (auto& v : w.values()) v = uniform(rng, -a, a);
}

}  // namespace

Model::Model(ModelSpec spec) : spec_(std::move(spec)) {
  spec_.validate();
  std::size_t width = spec_.input_dim;
  for (auto w : spec_.extractor_widths) {
    extractor_.push_back(zero_dense(width, w));
    width = w;
  }
  for (auto w : spec_.bottleneck_widths) {
    bottleneck_.push_back(zero_dense(width, w));
    width = w;
  }
  classifier_ = Tensor::zeros(spec_.num_classes, width);
}

Model Model::initialize(const ModelSpec& spec, Rng& rng) {
  Model m(spec);
  for (auto& layer : m.extractor_) glorot(layer.weight, rng);
  for (auto& layer : m.bottleneck_) glorot(layer.weight, rng);
  glorot(m.classifier_, rng);
  return m;
}

std::vector<Tensor*> Model::parameters() {
  std::vector<Tensor*> out;
  for (auto& l : extractor_) {
    out.push_back(&l.weight);
    out.push_back(&l.bias);
  }
  for (auto& l : bottleneck_) {
    out.push_back(&l.weight);
    out.push_back(&l.bias);
  }
  out.push_back(&classifier_);
  return out;
}

std::vector<const Tensor*> Model::parameters() const {
  auto mut = const_cast<Model*>(this)->parameters();
  return {mut.begin(), mut.end()};
}

std::vector<std::string> Model::parameter_names() const {
  std::vector<std::string> names;
  for (std::size_t i = 0; i < extractor_.size(); ++i) {
    names.push_back("extractor." + std::to_string(i) + ".weight");
    names.push_back("extractor." + std::to_string(i) + ".bias");
  }
  for (std::size_t i = 0; i < bottleneck_.size(); ++i) {
    names.push_back("bottleneck." + std::to_string(i) + ".weight");
    names.push_back("bottleneck." + std::to_string(i) + ".bias");
  }
  names.push_back("classifier.weight");
  return names;
}

ForwardVars Model::forward(Tape& tape, Var x, bool trainable) const {
  if (tape.value(x).cols() != spec_.input_dim) {
    throw diffcore::ShapeError("features", {tape.value(x).shape(), {spec_.input_dim}});
  }
  ForwardVars out;
  auto leaf = [&](const Tensor& t) {
    Var v = trainable ? tape.input(t, true) : tape.constant(t);
    out.params.push_back(v);
    return v;
  };
  auto dense = [&](Var h, const Dense& layer) {
    Var w = leaf(layer.weight);
    Var b = leaf(layer.bias);
    return tape.add(tape.matmul_nt(h, w), b);
  };

  Var h = x;
  for (const auto& layer : extractor_) h = tape.relu(dense(h, layer));
  if (!bottleneck_.empty()) {
    h = dense(h, bottleneck_[0]);
    h = tape.relu(tape.standardize_rows(h));
    h = dense(h, bottleneck_[1]);
  }
  out.features = h;
  out.prototypes = leaf(classifier_);
  out.logits = tape.matmul_nt(h, out.prototypes);
  return out;
}

void Model::collect_gradients(const Tape& tape, const ForwardVars& vars) {
  auto params = parameters();
  if (vars.params.size() != params.size()) throw Error("collect_gradients: parameter count mismatch");
  for (std::size_t k = 0; k < params.size(); ++k) {
    const Tensor& g = tape.grad(vars.params[k]);
    params[k]->set_grad(std::vector<double>(g.values().begin(), g.values().end()));
  }
}

bool operator==(const Model& a, const Model& b) {
  if (!(a.spec_ == b.spec_)) return false;
  auto pa = a.parameters();
  auto pb = b.parameters();
  for (std::size_t k = 0; k < pa.size(); ++k)
    if (!(*pa[k] == *pb[k])) return false;
  return true;
}

// ---------------------------------------------------------------------------

namespace {

Tensor run_forward(const Model& model, const Tensor& x, bool want_logits) {
  if (!x.all_finite()) throw Error("features: input contains non-finite values");
  Tape tape;
  Var xv = tape.constant(x);
  auto vars = model.forward(tape, xv, false);
  return tape.value(want_logits ? vars.logits : vars.features);
}

}  // namespace

Tensor features(const Model& model, const Tensor& x) { return run_forward(model, x, false); }
Tensor logits(const Model& model, const Tensor& x) { return run_forward(model, x, true); }

Tensor probabilities(const Model& model, const Tensor& x) {
  Tape tape;
  Var z = tape.constant(logits(model, x));
  return tape.value(tape.softmax_rows(z));
}

std::vector<int> argmax_rows(const Tensor& scores) {
  std::vector<int> out(scores.rows());
  for (std::size_t r = 0; r < scores.rows(); ++r) {
    auto row = scores.row(r);
    std::size_t best = 0;
    for (std::size_t j = 1; j < row.size(); ++j)
      if (row[j] > row[best]) best = j;
    out[r] = static_cast<int>(best);
  }
  return out;
}

std::vector<int> predict(const Model& model, const Tensor& x) { return argmax_rows(logits(model, x)); }

double accuracy(const Model& model, const Tensor& x, const std::vector<int>& labels) {
  if (labels.size() != x.rows()) throw Error("accuracy: label count does not match rows");
  if (labels.empty()) return 0.0;
  auto pred = predict(model, x);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) hits += pred[i] == labels[i];
  return static_cast<double>(hits) / static_cast<double>(labels.size());
}

std::uint64_t parameter_hash(const Model& model) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const Tensor* p : model.parameters()) {
    for (double v : p->values()) {
      unsigned char bytes[sizeof(double)];
      std::memcpy(bytes, &v, sizeof v);
      for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
      }
    }
  }
  return h;
}

const Model& ModelPair::previous() const {
  if (!previous_) throw Error("model pair has no previous-stage snapshot");
  return *previous_;
}

// ---------------------------------------------------------------------------
// Checkpoints

std::string checkpoint_json(const Model& model) {
  nlohmann::json doc;
  doc["format"] = "cdsl-checkpoint";
  doc["version"] = 1;
  const auto& s = model.spec();
  doc["spec"] = {{"input_dim", s.input_dim},
                 {"extractor_widths", s.extractor_widths},
                 {"bottleneck_widths", s.bottleneck_widths},
                 {"num_classes", s.num_classes}};
  auto names = model.parameter_names();
  auto params = model.parameters();
  nlohmann::json list = nlohmann::json::array();
  for (std::size_t k = 0; k < params.size(); ++k) {
    list.push_back({{"name", names[k]},
                    {"shape", params[k]->shape()},
                    {"values", std::vector<double>(params[k]->values().begin(), params[k]->values().end())}});
  }
  doc["parameters"] = std::move(list);
  return doc.dump(1);
}

Model checkpoint_from_json(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("checkpoint: ") + e.what());
  }
  if (doc.value("format", "") != "cdsl-checkpoint" || doc.value("version", 0) != 1) {
    throw Error("checkpoint: unrecognized format or version");
  }
  ModelSpec spec;
  const auto& js = doc.at("spec");
  spec.input_dim = js.at("input_dim").get<std::size_t>();
  spec.extractor_widths = js.at("extractor_widths").get<std::vector<std::size_t>>();
  spec.bottleneck_widths = js.at("bottleneck_widths").get<std::vector<std::size_t>>();
  spec.num_classes = js.at("num_classes").get<std::size_t>();
  Model model(spec);
  auto names = model.parameter_names();
  auto params = model.parameters();
  const auto& list = doc.at("parameters");
  if (list.size() != params.size()) throw Error("checkpoint: parameter count mismatch");
  for (std::size_t k = 0; k < params.size(); ++k) {
    const auto& entry = list[k];
    if (entry.at("name").get<std::string>() != names[k]) {
      throw Error("checkpoint: expected parameter " + names[k]);
    }
    Tensor t(entry.at("shape").get<std::vector<std::size_t>>(), entry.at("values").get<std::vector<double>>());
    if (t.shape() != params[k]->shape()) throw Error("checkpoint: shape mismatch for " + names[k]);
    *params[k] = std::move(t);
  }
  return model;
}

void save_checkpoint(const Model& model, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("checkpoint: cannot write " + path.string());
  out << checkpoint_json(model) << '\n';
}

Model load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("checkpoint: cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return checkpoint_from_json(ss.str());
}

}  // namespace cdsl::nets
