#pragma once

// Training losses, recorded on a diffcore::Tape so they can be differentiated.
//
// All per-sample terms are written as differences of log-sum-exps:
//   ce_i  = LSE_c(z_ic) - z_iy
//   pca_i = LSE(z_i., z'_i., {s_ij : j != i, y_j != y_i}) - LSE(z_iy, z'_iy)
// where z = f P^T (current prototypes), z' = f P'^T (previous-stage
// prototypes, constant) and s_ij = f_i . f_j. The source form drops z'.
// Each per-sample term is passed through relu(), which only removes
// round-off below zero; every term is nonnegative in exact arithmetic.

#include <optional>
#include <vector>

#include "cdsl/diffcore.hpp"
#include "cdsl/randmix.hpp"
#include "cdsl/tensor.hpp"

namespace cdsl::objective {

using randmix::StageKind;

struct LossBreakdown {
  double ce = 0.0;
  double pca = 0.0;
  double dis = 0.0;
  double total = 0.0;
};

struct BatchContext {
  diffcore::Tape* tape = nullptr;
  diffcore::Var features;    // [n x d]
  diffcore::Var logits;      // [n x K] = features * prototypes^T
  std::vector<int> labels;   // n entries in [0, K)
  /// Previous-stage prototypes [K x d]; required by pca_loss.
  std::optional<Tensor> previous_prototypes;
  /// Current outputs that distillation compares (logits, or features).
  diffcore::Var distill_input;
  /// Previous-stage softmax of the same quantity [n x m]; required by distill_loss.
  std::optional<Tensor> distill_target;
};

struct LossOptions {
  bool disable_pca = false;
  /// Use the source-form contrastive term on target stages (stationary mode).
  bool pca_source_form = false;
  bool disable_distill = false;
};

diffcore::Var ce_loss(const BatchContext& ctx);
diffcore::Var pca_loss(const BatchContext& ctx);
diffcore::Var source_pca_loss(const BatchContext& ctx);
diffcore::Var distill_loss(const BatchContext& ctx);

struct LossResult {
  LossBreakdown breakdown;
  diffcore::Var total;
};

/// Source: ce + source_pca, dis = 0. Target: ce + pca + dis.
LossResult total_loss(const BatchContext& ctx, StageKind stage, const LossOptions& opts = {});

}  // namespace cdsl::objective
