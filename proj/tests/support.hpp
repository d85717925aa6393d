#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include "cdsl/config.hpp"
#include "cdsl/diffcore.hpp"
#include "cdsl/tensor.hpp"

namespace testing {

inline cdsl::Tensor random_matrix(std::size_t rows, std::size_t cols, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  std::vector<double> v(rows * cols);
  for (auto& x : v) x = n(rng);
  return cdsl::Tensor::matrix(rows, cols, std::move(v));
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

/// Builds a scalar on a fresh tape from `leaves`; the Vars are the leaves in order.
using Builder = std::function<cdsl::diffcore::Var(cdsl::diffcore::Tape&, const std::vector<cdsl::diffcore::Var>&)>;

inline double build_value(const Builder& f, const std::vector<cdsl::Tensor>& leaves) {
  cdsl::diffcore::Tape t;
  std::vector<cdsl::diffcore::Var> vars;
  for (const auto& l : leaves) vars.push_back(t.input(l));
  return t.value(f(t, vars)).item();
}

/// Central differences of the builder's output for every leaf entry.
inline std::vector<std::vector<double>> numeric_gradient(const Builder& f, std::vector<cdsl::Tensor> leaves,
                                                        double h = 1e-6) {
  std::vector<std::vector<double>> out;
  for (std::size_t l = 0; l < leaves.size(); ++l) {
    std::vector<double> g(leaves[l].size());
    for (std::size_t i = 0; i < leaves[l].size(); ++i) {
      const double keep = leaves[l][i];
      leaves[l][i] = keep + h;
      const double up = build_value(f, leaves);
      leaves[l][i] = keep - h;
      const double down = build_value(f, leaves);
      leaves[l][i] = keep;
      g[i] = (up - down) / (2.0 * h);
    }
    out.push_back(std::move(g));
  }
  return out;
}

inline std::vector<std::vector<double>> analytic_gradient(const Builder& f, const std::vector<cdsl::Tensor>& leaves) {
  cdsl::diffcore::Tape t;
  std::vector<cdsl::diffcore::Var> vars;
  for (const auto& l : leaves) vars.push_back(t.input(l));
  auto out = f(t, vars);
  auto grads = t.backward(out);
  std::vector<std::vector<double>> res;
  for (const auto& g : grads) res.emplace_back(g.values().begin(), g.values().end());
  return res;
}

/// ||a - n|| / max(||a||, ||n||, floor) over all leaves together.
inline double relative_error(const std::vector<std::vector<double>>& a, const std::vector<std::vector<double>>& n,
                             double floor = 1e-8) {
  double diff = 0.0, na = 0.0, nn = 0.0;
  for (std::size_t l = 0; l < a.size(); ++l) {
    for (std::size_t i = 0; i < a[l].size(); ++i) {
      diff += (a[l][i] - n[l][i]) * (a[l][i] - n[l][i]);
      na += a[l][i] * a[l][i];
      nn += n[l][i] * n[l][i];
    }
  }
  return std::sqrt(diff) / std::max({std::sqrt(na), std::sqrt(nn), floor});
}

inline double gradient_error(const Builder& f, const std::vector<cdsl::Tensor>& leaves) {
  return relative_error(analytic_gradient(f, leaves), numeric_gradient(f, leaves));
}

/// A run small enough for unit tests: few samples, few steps, narrow model.
inline cdsl::protocol::RunConfig tiny_config(const std::string& sequence = "rot5") {
  cdsl::protocol::RunConfig cfg;
  cfg.sequence = sequence;
  cfg.samples_per_domain = 60;
  cfg.epochs = 2;
  cfg.steps_per_epoch = 3;
  cfg.batch_size = 16;
  cfg.replay_n = 4;
  cfg.memory_capacity = 40;
  cfg.extractor_widths = {16};
  cfg.bottleneck_widths = {8, 6};
  cfg.randmix.n_aug = 2;
  return cfg;
}

}  // namespace testing
