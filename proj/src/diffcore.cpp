#include "cdsl/diffcore.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <utility>

namespace cdsl::diffcore {

namespace {

std::string join_shapes(const std::vector<std::vector<std::size_t>>& shapes) {
  std::string s;
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    if (i) s += ", ";
    s += shape_string(shapes[i]);
  }
  return s;
}

bool is_row_of(const Tensor& b, const Tensor& a) { return b.rows() == 1 && b.cols() == a.cols(); }

}  // namespace

ShapeError::ShapeError(const std::string& primitive,
                       const std::vector<std::vector<std::size_t>>& shapes)
    : Error("shape mismatch in " + primitive + ": " + join_shapes(shapes)), primitive_(primitive) {}

const char* op_name(Op op) {
  switch (op) {
    case Op::input: return "input";
    case Op::constant: return "constant";
    case Op::matmul: return "matmul";
    case Op::matmul_nt: return "matmul_nt";
    case Op::add: return "add";
    case Op::sub: return "sub";
    case Op::mul: return "mul";
    case Op::scale: return "scale";
    case Op::relu: return "relu";
    case Op::sigmoid: return "sigmoid";
    case Op::exp: return "exp";
    case Op::log: return "log";
    case Op::softmax_rows: return "softmax_rows";
    case Op::standardize_rows: return "standardize_rows";
    case Op::sum: return "sum";
    case Op::mean: return "mean";
    case Op::sum_rows: return "sum_rows";
    case Op::dot: return "dot";
    case Op::norm: return "norm";
    case Op::logsumexp_rows: return "logsumexp_rows";
    case Op::pick: return "pick";
    case Op::concat_cols: return "concat_cols";
  }
  return "unknown";
}

// ---------------------------------------------------------------------------
// Recording

Var Tape::input(Tensor value, bool requires_grad) {
  value.clear_grad();
  Node node{Op::input, {}, std::move(value)};
  node.needs_grad = requires_grad;
  nodes_.push_back(std::move(node));
  Var v{nodes_.size() - 1};
  inputs_.push_back(v);
  return v;
}

Var Tape::constant(Tensor value) {
  value.clear_grad();
  nodes_.push_back(Node{Op::constant, {}, std::move(value)});
  return Var{nodes_.size() - 1};
}

Var Tape::record(Op op, std::vector<std::size_t> inputs) {
  Node node{op, std::move(inputs), {}};
  for (auto id : node.inputs) {
    if (id >= nodes_.size()) throw Error(std::string(op_name(op)) + ": unknown operand");
    node.needs_grad = node.needs_grad || nodes_[id].needs_grad;
  }
  forward(node);
  nodes_.push_back(std::move(node));
  return Var{nodes_.size() - 1};
}

Var Tape::matmul(Var a, Var b) { return record(Op::matmul, {a.id, b.id}); }
Var Tape::matmul_nt(Var a, Var b) { return record(Op::matmul_nt, {a.id, b.id}); }
Var Tape::add(Var a, Var b) { return record(Op::add, {a.id, b.id}); }
Var Tape::sub(Var a, Var b) { return record(Op::sub, {a.id, b.id}); }
Var Tape::mul(Var a, Var b) { return record(Op::mul, {a.id, b.id}); }
Var Tape::relu(Var a) { return record(Op::relu, {a.id}); }
Var Tape::sigmoid(Var a) { return record(Op::sigmoid, {a.id}); }
Var Tape::exp(Var a) { return record(Op::exp, {a.id}); }
Var Tape::log(Var a) { return record(Op::log, {a.id}); }
Var Tape::softmax_rows(Var a) { return record(Op::softmax_rows, {a.id}); }
Var Tape::sum(Var a) { return record(Op::sum, {a.id}); }
Var Tape::mean(Var a) { return record(Op::mean, {a.id}); }
Var Tape::sum_rows(Var a) { return record(Op::sum_rows, {a.id}); }
Var Tape::dot(Var a, Var b) { return record(Op::dot, {a.id, b.id}); }
Var Tape::norm(Var a) { return record(Op::norm, {a.id}); }
Var Tape::concat_cols(Var a, Var b) { return record(Op::concat_cols, {a.id, b.id}); }
Var Tape::logsumexp_rows(Var a) { return logsumexp_rows(a, {}); }

Var Tape::scale(Var a, double factor) {
  Node node{Op::scale, {a.id}, {}};
  node.scalar = factor;
  node.needs_grad = nodes_.at(a.id).needs_grad;
  forward(node);
  nodes_.push_back(std::move(node));
  return Var{nodes_.size() - 1};
}

Var Tape::standardize_rows(Var a, double eps) {
  Node node{Op::standardize_rows, {a.id}, {}};
  node.scalar = eps;
  node.needs_grad = nodes_.at(a.id).needs_grad;
  forward(node);
  nodes_.push_back(std::move(node));
  return Var{nodes_.size() - 1};
}

Var Tape::logsumexp_rows(Var a, std::vector<std::uint8_t> mask) {
  Node node{Op::logsumexp_rows, {a.id}, {}};
  node.mask = std::move(mask);
  node.needs_grad = nodes_.at(a.id).needs_grad;
  forward(node);
  nodes_.push_back(std::move(node));
  return Var{nodes_.size() - 1};
}

Var Tape::pick(Var a, std::vector<std::size_t> columns) {
  Node node{Op::pick, {a.id}, {}};
  node.indices = std::move(columns);
  node.needs_grad = nodes_.at(a.id).needs_grad;
  forward(node);
  nodes_.push_back(std::move(node));
  return Var{nodes_.size() - 1};
}

Var Tape::output() const {
  if (nodes_.empty()) throw Error("empty tape has no output");
  return Var{nodes_.size() - 1};
}

const Tensor& Tape::grad(Var v) const {
  if (v.id >= grads_.size() || grads_[v.id].empty()) {
    throw Error("no gradient recorded for node " + std::to_string(v.id));
  }
  return grads_[v.id];
}

// ---------------------------------------------------------------------------
// Forward

void Tape::forward(Node& node) {
  auto in = [&](std::size_t k) -> const Tensor& { return nodes_[node.inputs[k]].value; };
  auto fail = [&]() {
    std::vector<std::vector<std::size_t>> shapes;
    for (std::size_t k = 0; k < node.inputs.size(); ++k) shapes.push_back(in(k).shape());
    throw ShapeError(op_name(node.op), shapes);
  };
  auto unary = [&](auto&& fn) {
    const Tensor& a = in(0);
    Tensor out(a.shape());
    auto src = a.values();
    auto dst = out.values();
    for (std::size_t i = 0; i < src.size(); ++i) dst[i] = fn(src[i]);
    node.value = std::move(out);
  };

  switch (node.op) {
    case Op::input:
    case Op::constant:
      return;

    case Op::matmul: {
      const Tensor& a = in(0);
      const Tensor& b = in(1);
      if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.rows()) fail();
      const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
      Tensor out = Tensor::zeros(n, m);
      for (std::size_t i = 0; i < n; ++i) {
        auto orow = out.row(i);
        for (std::size_t p = 0; p < k; ++p) {
          const double av = a(i, p);
          if (av == 0.0) continue;
          auto brow = b.row(p);
          for (std::size_t j = 0; j < m; ++j) orow[j] += av * brow[j];
        }
      }
      node.value = std::move(out);
      return;
    }

    case Op::matmul_nt: {
      const Tensor& a = in(0);
      const Tensor& b = in(1);
      if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.cols()) fail();
      const std::size_t n = a.rows(), k = a.cols(), m = b.rows();
      Tensor out = Tensor::zeros(n, m);
      for (std::size_t i = 0; i < n; ++i) {
        auto arow = a.row(i);
        for (std::size_t j = 0; j < m; ++j) {
          auto brow = b.row(j);
          double s = 0.0;
          for (std::size_t p = 0; p < k; ++p) s += arow[p] * brow[p];
          out(i, j) = s;
        }
      }
      node.value = std::move(out);
      return;
    }

    case Op::add:
    case Op::sub:
    case Op::mul: {
      const Tensor& a = in(0);
      const Tensor& b = in(1);
      const bool same = a.shape() == b.shape();
      const bool bcast = node.op != Op::sub && !same && a.rank() <= 2 && b.rank() <= 2 && is_row_of(b, a);
      if (!same && !bcast) fail();
      Tensor out(a.shape());
      auto av = a.values();
      auto bv = b.values();
      auto ov = out.values();
      const std::size_t c = bcast ? a.cols() : 0;
      for (std::size_t i = 0; i < av.size(); ++i) {
        const double y = same ? bv[i] : bv[i % c];
        switch (node.op) {
          case Op::add: ov[i] = av[i] + y; break;
          case Op::sub: ov[i] = av[i] - y; break;
          default: ov[i] = av[i] * y; break;
        }
      }
      node.value = std::move(out);
      return;
    }

    case Op::scale: {
      const double f = node.scalar;
      unary([f](double x) { return f * x; });
      return;
    }
    case Op::relu:
      unary([](double x) { return x > 0.0 ? x : 0.0; });
      return;
    case Op::sigmoid:
      unary([](double x) { return 1.0 / (1.0 + std::exp(-x)); });
      return;
    case Op::exp:
      unary([](double x) { return std::exp(x); });
      return;
    case Op::log:
      unary([](double x) { return std::log(std::max(x, kLogFloor)); });
      return;

    case Op::softmax_rows: {
      const Tensor& a = in(0);
      if (a.rank() > 2) fail();
      Tensor out(a.shape());
      for (std::size_t r = 0; r < a.rows(); ++r) {
        auto x = a.row(r);
        auto y = out.row(r);
        const double mx = *std::max_element(x.begin(), x.end());
        double z = 0.0;
        for (std::size_t j = 0; j < x.size(); ++j) z += (y[j] = std::exp(x[j] - mx));
        for (auto& v : y) v /= z;
      }
      node.value = std::move(out);
      return;
    }

    case Op::standardize_rows: {
      const Tensor& a = in(0);
      if (a.rank() > 2) fail();
      Tensor out(a.shape());
      node.saved.assign(a.rows(), 0.0);
      const double m = static_cast<double>(a.cols());
      for (std::size_t r = 0; r < a.rows(); ++r) {
        auto x = a.row(r);
        auto y = out.row(r);
        double mu = 0.0;
        for (double v : x) mu += v;
        mu /= m;
        double var = 0.0;
        for (double v : x) var += (v - mu) * (v - mu);
        var /= m;
        const double inv = 1.0 / std::sqrt(var + node.scalar);
        node.saved[r] = inv;
        for (std::size_t j = 0; j < x.size(); ++j) y[j] = (x[j] - mu) * inv;
      }
      node.value = std::move(out);
      return;
    }

    case Op::sum:
    case Op::mean: {
      const Tensor& a = in(0);
      double s = 0.0;
      for (double v : a.values()) s += v;
      if (node.op == Op::mean) s /= static_cast<double>(a.size());
      node.value = Tensor::scalar(s);
      return;
    }

    case Op::sum_rows: {
      const Tensor& a = in(0);
      if (a.rank() > 2) fail();
      Tensor out = Tensor::zeros(a.rows(), 1);
      for (std::size_t r = 0; r < a.rows(); ++r) {
        double s = 0.0;
        for (double v : a.row(r)) s += v;
        out[r] = s;
      }
      node.value = std::move(out);
      return;
    }

    case Op::dot: {
      const Tensor& a = in(0);
      const Tensor& b = in(1);
      if (a.size() != b.size()) fail();
      double s = 0.0;
      for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
      node.value = Tensor::scalar(s);
      return;
    }

    case Op::norm: {
      double s = 0.0;
      for (double v : in(0).values()) s += v * v;
      node.value = Tensor::scalar(std::sqrt(s));
      return;
    }

    case Op::logsumexp_rows: {
      const Tensor& a = in(0);
      if (a.rank() > 2 || (!node.mask.empty() && node.mask.size() != a.size())) fail();
      Tensor out = Tensor::zeros(a.rows(), 1);
      const std::size_t c = a.cols();
      for (std::size_t r = 0; r < a.rows(); ++r) {
        auto x = a.row(r);
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < c; ++j) {
          if (node.mask.empty() || node.mask[r * c + j]) mx = std::max(mx, x[j]);
        }
        if (!std::isfinite(mx)) {
          throw Error("logsumexp_rows: row " + std::to_string(r) + " has no finite unmasked entry");
        }
        double s = 0.0;
        for (std::size_t j = 0; j < c; ++j) {
          if (node.mask.empty() || node.mask[r * c + j]) s += std::exp(x[j] - mx);
        }
        out[r] = mx + std::log(s);
      }
      node.value = std::move(out);
      return;
    }

    case Op::pick: {
      const Tensor& a = in(0);
      if (a.rank() > 2 || node.indices.size() != a.rows()) fail();
      Tensor out = Tensor::zeros(a.rows(), 1);
      for (std::size_t r = 0; r < a.rows(); ++r) {
        if (node.indices[r] >= a.cols()) fail();
        out[r] = a(r, node.indices[r]);
      }
      node.value = std::move(out);
      return;
    }

    case Op::concat_cols: {
      const Tensor& a = in(0);
      const Tensor& b = in(1);
      if (a.rank() > 2 || b.rank() > 2 || a.rows() != b.rows()) fail();
      const std::size_t ca = a.cols(), cb = b.cols();
      Tensor out = Tensor::zeros(a.rows(), ca + cb);
      for (std::size_t r = 0; r < a.rows(); ++r) {
        auto o = out.row(r);
        std::copy(a.row(r).begin(), a.row(r).end(), o.begin());
        std::copy(b.row(r).begin(), b.row(r).end(), o.begin() + static_cast<std::ptrdiff_t>(ca));
      }
      node.value = std::move(out);
      return;
    }
  }
}

const Tensor& Tape::evaluate(std::span<const Tensor> inputs) {
  if (inputs.size() != inputs_.size()) {
    throw Error("evaluate: expected " + std::to_string(inputs_.size()) + " inputs, got " +
                std::to_string(inputs.size()));
  }
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    Tensor v = inputs[k];
    v.clear_grad();
    nodes_[inputs_[k].id].value = std::move(v);
  }
  for (auto& node : nodes_) forward(node);
  grads_.clear();
  return nodes_.back().value;
}

// ---------------------------------------------------------------------------
// Backward

std::vector<Tensor> Tape::backward(Var output) {
  if (output.id >= nodes_.size()) throw Error("backward: unknown output node");
  const Tensor& out = nodes_[output.id].value;
  if (out.size() != 1) {
    throw Error("backward: output must be scalar, got shape " + shape_string(out.shape()));
  }
  grads_.assign(nodes_.size(), Tensor());
  grads_[output.id] = Tensor(out.shape(), 1.0);
  for (std::size_t i = output.id + 1; i-- > 0;) {
    const Node& node = nodes_[i];
    if (!node.needs_grad || grads_[i].empty() || node.inputs.empty()) continue;
    propagate(node, grads_[i]);
  }
  std::vector<Tensor> result;
  result.reserve(inputs_.size());
  for (auto v : inputs_) {
    if (grads_[v.id].empty()) grads_[v.id] = Tensor(nodes_[v.id].value.shape(), 0.0);
    result.push_back(grads_[v.id]);
  }
  return result;
}

void Tape::propagate(const Node& node, const Tensor& upstream) {
  auto in_id = [&](std::size_t k) { return node.inputs[k]; };
  auto in = [&](std::size_t k) -> const Tensor& { return nodes_[node.inputs[k]].value; };
  auto wants = [&](std::size_t k) { return nodes_[node.inputs[k]].needs_grad; };
  auto slot = [&](std::size_t k) -> Tensor& {
    Tensor& g = grads_[in_id(k)];
    if (g.empty()) g = Tensor(in(k).shape(), 0.0);
    return g;
  };
  const auto g = upstream.values();
  const auto y = node.value.values();

  switch (node.op) {
    case Op::input:
    case Op::constant:
      return;

    case Op::matmul: {
      const Tensor& a = in(0);
      const Tensor& b = in(1);
      const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
      if (wants(0)) {
        Tensor& da = slot(0);
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t p = 0; p < k; ++p) {
            double s = 0.0;
            for (std::size_t j = 0; j < m; ++j) s += g[i * m + j] * b(p, j);
            da(i, p) += s;
          }
      }
      if (wants(1)) {
        Tensor& db = slot(1);
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t p = 0; p < k; ++p) {
            const double av = a(i, p);
            if (av == 0.0) continue;
            auto dbrow = db.row(p);
            for (std::size_t j = 0; j < m; ++j) dbrow[j] += av * g[i * m + j];
          }
      }
      return;
    }

    case Op::matmul_nt: {
      const Tensor& a = in(0);
      const Tensor& b = in(1);
      const std::size_t n = a.rows(), k = a.cols(), m = b.rows();
      if (wants(0)) {
        Tensor& da = slot(0);
        for (std::size_t i = 0; i < n; ++i) {
          auto darow = da.row(i);
          for (std::size_t j = 0; j < m; ++j) {
            const double gij = g[i * m + j];
            if (gij == 0.0) continue;
            auto brow = b.row(j);
            for (std::size_t p = 0; p < k; ++p) darow[p] += gij * brow[p];
          }
        }
      }
      if (wants(1)) {
        Tensor& db = slot(1);
        for (std::size_t i = 0; i < n; ++i) {
          auto arow = a.row(i);
          for (std::size_t j = 0; j < m; ++j) {
            const double gij = g[i * m + j];
            if (gij == 0.0) continue;
            auto dbrow = db.row(j);
            for (std::size_t p = 0; p < k; ++p) dbrow[p] += gij * arow[p];
          }
        }
      }
      return;
    }

    case Op::add:
    case Op::sub:
    case Op::mul: {
      const Tensor& a = in(0);
      const Tensor& b = in(1);
      const bool same = a.shape() == b.shape();
      const std::size_t c = same ? 0 : a.cols();
      const auto av = a.values();
      const auto bv = b.values();
      const double sign = node.op == Op::sub ? -1.0 : 1.0;
      if (wants(0)) {
        auto da = slot(0).values();
        for (std::size_t i = 0; i < g.size(); ++i) {
          da[i] += node.op == Op::mul ? g[i] * (same ? bv[i] : bv[i % c]) : g[i];
        }
      }
      if (wants(1)) {
        auto db = slot(1).values();
        for (std::size_t i = 0; i < g.size(); ++i) {
          const double d = node.op == Op::mul ? g[i] * av[i] : sign * g[i];
          db[same ? i : i % c] += d;
        }
      }
      return;
    }

    case Op::scale: {
      auto da = slot(0).values();
      for (std::size_t i = 0; i < g.size(); ++i) da[i] += node.scalar * g[i];
      return;
    }
    case Op::relu: {
      auto x = in(0).values();
      auto da = slot(0).values();
      for (std::size_t i = 0; i < g.size(); ++i) da[i] += x[i] > 0.0 ? g[i] : 0.0;
      return;
    }
    case Op::sigmoid: {
      auto da = slot(0).values();
      for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i] * y[i] * (1.0 - y[i]);
      return;
    }
    case Op::exp: {
      auto da = slot(0).values();
      for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i] * y[i];
      return;
    }
    case Op::log: {
      auto x = in(0).values();
      auto da = slot(0).values();
      for (std::size_t i = 0; i < g.size(); ++i) da[i] += x[i] > kLogFloor ? g[i] / x[i] : 0.0;
      return;
    }

    case Op::softmax_rows: {
      Tensor& da = slot(0);
      const std::size_t c = node.value.cols();
      for (std::size_t r = 0; r < node.value.rows(); ++r) {
        double s = 0.0;
        for (std::size_t j = 0; j < c; ++j) s += g[r * c + j] * y[r * c + j];
        auto d = da.row(r);
        for (std::size_t j = 0; j < c; ++j) d[j] += y[r * c + j] * (g[r * c + j] - s);
      }
      return;
    }

    case Op::standardize_rows: {
      Tensor& da = slot(0);
      const std::size_t c = node.value.cols();
      const double m = static_cast<double>(c);
      for (std::size_t r = 0; r < node.value.rows(); ++r) {
        double gm = 0.0, gy = 0.0;
        for (std::size_t j = 0; j < c; ++j) {
          gm += g[r * c + j];
          gy += g[r * c + j] * y[r * c + j];
        }
        gm /= m;
        gy /= m;
        auto d = da.row(r);
        const double inv = node.saved[r];
        for (std::size_t j = 0; j < c; ++j) d[j] += inv * (g[r * c + j] - gm - y[r * c + j] * gy);
      }
      return;
    }

    case Op::sum:
    case Op::mean: {
      auto da = slot(0).values();
      const double d = node.op == Op::mean ? g[0] / static_cast<double>(da.size()) : g[0];
      for (auto& v : da) v += d;
      return;
    }

    case Op::sum_rows: {
      Tensor& da = slot(0);
      for (std::size_t r = 0; r < da.rows(); ++r)
        for (auto& v : da.row(r)) v += g[r];
      return;
    }

    case Op::dot: {
      const Tensor& a = in(0);
      const Tensor& b = in(1);
      if (wants(0)) {
        auto da = slot(0).values();
        for (std::size_t i = 0; i < da.size(); ++i) da[i] += g[0] * b[i];
      }
      if (wants(1)) {
        auto db = slot(1).values();
        for (std::size_t i = 0; i < db.size(); ++i) db[i] += g[0] * a[i];
      }
      return;
    }

    case Op::norm: {
      const double nrm = y[0];
      if (nrm == 0.0) return;
      auto x = in(0).values();
      auto da = slot(0).values();
      for (std::size_t i = 0; i < da.size(); ++i) da[i] += g[0] * x[i] / nrm;
      return;
    }

    case Op::logsumexp_rows: {
      const Tensor& a = in(0);
      Tensor& da = slot(0);
      const std::size_t c = a.cols();
      for (std::size_t r = 0; r < a.rows(); ++r) {
        for (std::size_t j = 0; j < c; ++j) {
          if (!node.mask.empty() && !node.mask[r * c + j]) continue;
          da(r, j) += g[r] * std::exp(a(r, j) - y[r]);
        }
      }
      return;
    }

    case Op::pick: {
      Tensor& da = slot(0);
      for (std::size_t r = 0; r < da.rows(); ++r) da(r, node.indices[r]) += g[r];
      return;
    }

    case Op::concat_cols: {
      const std::size_t ca = in(0).cols(), cb = in(1).cols();
      if (wants(0)) {
        Tensor& da = slot(0);
        for (std::size_t r = 0; r < da.rows(); ++r)
          for (std::size_t j = 0; j < ca; ++j) da(r, j) += g[r * (ca + cb) + j];
      }
      if (wants(1)) {
        Tensor& db = slot(1);
        for (std::size_t r = 0; r < db.rows(); ++r)
          for (std::size_t j = 0; j < cb; ++j) db(r, j) += g[r * (ca + cb) + ca + j];
      }
      return;
    }
  }
}

// ---------------------------------------------------------------------------
// SGD

void SgdConfig::validate() const {
  if (!(learning_rate > 0.0)) throw Error("sgd: learning_rate must be > 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw Error("sgd: momentum must lie in [0, 1)");
  if (!(weight_decay >= 0.0)) throw Error("sgd: weight_decay must be >= 0");
}

void sgd_step(std::span<Tensor* const> params, const SgdConfig& cfg, SgdState& state) {
  cfg.validate();
  if (state.velocity.empty()) {
    for (const Tensor* p : params) state.velocity.emplace_back(p->size(), 0.0);
  }
  if (state.velocity.size() != params.size()) throw Error("sgd: state does not match parameter list");
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor& p = *params[k];
    if (!p.has_grad()) throw Error("sgd: parameter " + std::to_string(k) + " has no gradient");
    auto theta = p.values();
    auto grad = std::as_const(p).grad();
    auto& v = state.velocity[k];
    if (v.size() != theta.size()) throw Error("sgd: velocity size mismatch");
    for (std::size_t i = 0; i < theta.size(); ++i) {
      v[i] = cfg.momentum * v[i] + (grad[i] + cfg.weight_decay * theta[i]);
      theta[i] -= cfg.learning_rate * v[i];
    }
  }
}

}  // namespace cdsl::diffcore
