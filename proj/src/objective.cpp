#include "cdsl/objective.hpp"

#include <cstdint>

namespace cdsl::objective {

using diffcore::Tape;
using diffcore::Var;

namespace {

std::vector<std::size_t> label_columns(const BatchContext& ctx, std::size_t k) {
  std::vector<std::size_t> cols;
  cols.reserve(ctx.labels.size());
  for (int y : ctx.labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= k) throw Error("loss: label " + std::to_string(y) + " out of range");
    cols.push_back(static_cast<std::size_t>(y));
  }
  return cols;
}

void check(const BatchContext& ctx) {
  if (!ctx.tape) throw Error("loss: batch context has no tape");
  if (ctx.tape->value(ctx.logits).rows() != ctx.labels.size()) {
    throw Error("loss: " + std::to_string(ctx.labels.size()) + " labels for " +
                std::to_string(ctx.tape->value(ctx.logits).rows()) + " samples");
  }
}

/// mask over [prototype block | n x n similarity block]: prototype columns are
/// always on; s_ij is on for j != i with a different label.
std::vector<std::uint8_t> contrast_mask(const std::vector<int>& labels, std::size_t proto_cols) {
  const std::size_t n = labels.size();
  const std::size_t width = proto_cols + n;
  std::vector<std::uint8_t> mask(n * width, 0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < proto_cols; ++c) mask[i * width + c] = 1;
    for (std::size_t j = 0; j < n; ++j) {
      mask[i * width + proto_cols + j] = (j != i && labels[j] != labels[i]) ? 1 : 0;
    }
  }
  return mask;
}

Var contrastive(const BatchContext& ctx, bool with_previous) {
  check(ctx);
  Tape& t = *ctx.tape;
  const std::size_t k = t.value(ctx.logits).cols();
  const auto cols = label_columns(ctx, k);

  Var protos = ctx.logits;
  Var numerator = t.pick(ctx.logits, cols);
  if (with_previous) {
    if (!ctx.previous_prototypes) throw Error("pca_loss: previous prototypes are required");
    Var prev = t.matmul_nt(ctx.features, t.constant(*ctx.previous_prototypes));
    protos = t.concat_cols(ctx.logits, prev);
    numerator = t.logsumexp_rows(t.concat_cols(numerator, t.pick(prev, cols)));
  }
  const std::size_t proto_cols = t.value(protos).cols();
  Var sim = t.matmul_nt(ctx.features, ctx.features);
  Var denominator = t.logsumexp_rows(t.concat_cols(protos, sim), contrast_mask(ctx.labels, proto_cols));
  return t.mean(t.relu(t.sub(denominator, numerator)));
}

}  // namespace

Var ce_loss(const BatchContext& ctx) {
  check(ctx);
  Tape& t = *ctx.tape;
  const auto cols = label_columns(ctx, t.value(ctx.logits).cols());
  return t.mean(t.relu(t.sub(t.logsumexp_rows(ctx.logits), t.pick(ctx.logits, cols))));
}

Var pca_loss(const BatchContext& ctx) { return contrastive(ctx, true); }

Var source_pca_loss(const BatchContext& ctx) { return contrastive(ctx, false); }

Var distill_loss(const BatchContext& ctx) {
  check(ctx);
  if (!ctx.distill_target) throw Error("distill_loss: previous-model outputs are required");
  Tape& t = *ctx.tape;
  const Tensor& target = *ctx.distill_target;
  if (target.shape() != t.value(ctx.distill_input).shape()) {
    throw diffcore::ShapeError("distill_loss", {target.shape(), t.value(ctx.distill_input).shape()});
  }
  Var p = t.constant(target);
  Var log_p = t.log(p);
  Var log_q = t.log(t.softmax_rows(ctx.distill_input));
  Var per_sample = t.sum_rows(t.mul(p, t.sub(log_p, log_q)));
  return t.mean(t.relu(per_sample));
}

LossResult total_loss(const BatchContext& ctx, StageKind stage, const LossOptions& opts) {
  check(ctx);
  Tape& t = *ctx.tape;
  const bool source = stage == StageKind::source;

  Var ce = ce_loss(ctx);
  Var total = ce;
  LossResult out;
  out.breakdown.ce = t.value(ce).item();

  if (!opts.disable_pca) {
    Var pca = (source || opts.pca_source_form) ? source_pca_loss(ctx) : pca_loss(ctx);
    out.breakdown.pca = t.value(pca).item();
    total = t.add(total, pca);
  }
  if (!source && !opts.disable_distill) {
    Var dis = distill_loss(ctx);
    out.breakdown.dis = t.value(dis).item();
    total = t.add(total, dis);
  }
  out.total = total;
  out.breakdown.total = t.value(total).item();
  return out;
}

}  // namespace cdsl::objective
