#pragma once

// Reverse-mode differentiation over a recorded tape of matrix primitives,
// plus momentum SGD.
//
// A Tape is built eagerly: every primitive computes its value when it is
// recorded. The recorded program can be re-run on new leaf values with
// evaluate(), which is what finite-difference checks use.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "cdsl/tensor.hpp"

namespace cdsl::diffcore {

/// Lower bound applied to the argument of log().
inline constexpr double kLogFloor = 1e-12;

class ShapeError : public Error {
 public:
  ShapeError(const std::string& primitive, const std::vector<std::vector<std::size_t>>& shapes);
  const std::string& primitive() const { return primitive_; }

 private:
  std::string primitive_;
};

struct Var {
  std::size_t id = 0;
};

enum class Op : std::uint8_t {
  input,
  constant,
  matmul,     // a[n,k] * b[k,m]
  matmul_nt,  // a[n,k] * b[m,k]^T
  add,        // same shape, or b a single row broadcast over a's rows
  sub,
  mul,
  scale,
  relu,
  sigmoid,
  exp,
  log,  // natural log of max(x, kLogFloor)
  softmax_rows,
  standardize_rows,
  sum,
  mean,
  sum_rows,  // [n,m] -> [n,1]
  dot,
  norm,
  logsumexp_rows,  // [n,m] -> [n,1], optional 0/1 mask
  pick,            // [n,m] -> [n,1], one column per row
  concat_cols,
};

const char* op_name(Op op);

class Tape {
 public:
  /// Leaf whose value may be replaced by evaluate(); differentiable if requested.
  Var input(Tensor value, bool requires_grad = true);
  /// Leaf that never changes and never receives a gradient.
  Var constant(Tensor value);

  Var matmul(Var a, Var b);
  Var matmul_nt(Var a, Var b);
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var scale(Var a, double factor);
  Var relu(Var a);
  Var sigmoid(Var a);
  Var exp(Var a);
  Var log(Var a);
  Var softmax_rows(Var a);
  Var standardize_rows(Var a, double eps = 1e-5);
  Var sum(Var a);
  Var mean(Var a);
  Var sum_rows(Var a);
  Var dot(Var a, Var b);
  Var norm(Var a);
  Var logsumexp_rows(Var a);
  Var logsumexp_rows(Var a, std::vector<std::uint8_t> mask);
  Var pick(Var a, std::vector<std::size_t> columns);
  Var concat_cols(Var a, Var b);

  const Tensor& value(Var v) const { return nodes_.at(v.id).value; }
  /// Gradient of the last backward() output with respect to `v`.
  const Tensor& grad(Var v) const;
  std::size_t size() const { return nodes_.size(); }
  Var output() const;
  Op op(Var v) const { return nodes_.at(v.id).op; }
  std::span<const std::size_t> node_inputs(Var v) const { return nodes_.at(v.id).inputs; }

  /// Re-runs the recorded program with new values for the input() leaves,
  /// given in declaration order. Returns the value of the last node.
  const Tensor& evaluate(std::span<const Tensor> inputs);

  /// Accumulates d(output)/d(node) for every node; `output` must hold one value.
  /// Returns one gradient per input() leaf in declaration order.
  std::vector<Tensor> backward(Var output);
  std::vector<Tensor> backward() { return backward(this->output()); }

  std::span<const Var> inputs() const { return inputs_; }

 private:
  struct Node {
    Op op;
    std::vector<std::size_t> inputs;
    Tensor value;
    bool needs_grad = false;
    double scalar = 0.0;                // scale factor or standardization eps
    std::vector<std::size_t> indices;   // pick columns
    std::vector<std::uint8_t> mask;     // logsumexp mask
    std::vector<double> saved;          // per-op intermediates (e.g. 1/sigma)
  };

  Var record(Op op, std::vector<std::size_t> inputs);
  void forward(Node& node);
  void propagate(const Node& node, const Tensor& upstream);

  std::vector<Node> nodes_;
  std::vector<Var> inputs_;
  std::vector<Tensor> grads_;
};

struct SgdConfig {
  double learning_rate = 0.01;
  double momentum = 0.9;
  double weight_decay = 0.0005;

  void validate() const;
  friend bool operator==(const SgdConfig&, const SgdConfig&) = default;
};

/// Momentum buffers, one per parameter, created on the first step.
struct SgdState {
  std::vector<std::vector<double>> velocity;
};

/// v <- m*v + (g + wd*theta); theta <- theta - lr*v. Every parameter needs a grad.
void sgd_step(std::span<Tensor* const> params, const SgdConfig& cfg, SgdState& state);

}  // namespace cdsl::diffcore
