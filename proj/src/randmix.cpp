#include "cdsl/randmix.hpp"

#include <algorithm>
#include <cmath>

namespace cdsl::randmix {

namespace {

void fill_normal(Tensor& t, double stddev, Rng& rng) {
  for (auto& v : t.values()) v = stddev * standard_normal(rng);
}

void standardize(std::span<double> v) {
  const double m = static_cast<double>(v.size());
  double mu = 0.0;
  for (double x : v) mu += x;
  mu /= m;
  double var = 0.0;
  for (double x : v) var += (x - mu) * (x - mu);
  var /= m;
  const double inv = 1.0 / std::sqrt(var + kInstanceNormEps);
  for (double& x : v) x = (x - mu) * inv;
}

// "Same" cross-correlation with zero padding.
std::vector<double> conv_same(std::span<const double> img, const Tensor& kernel, std::size_t h, std::size_t w) {
  const std::size_t k = kernel.rows();
  const long p = static_cast<long>(k - 1) / 2;
  std::vector<double> out(h * w, 0.0);
  for (long r = 0; r < static_cast<long>(h); ++r)
    for (long c = 0; c < static_cast<long>(w); ++c) {
      double s = 0.0;
      for (long u = 0; u < static_cast<long>(k); ++u) {
        const long rr = r + u - p;
        if (rr < 0 || rr >= static_cast<long>(h)) continue;
        for (long v = 0; v < static_cast<long>(k); ++v) {
          const long cc = c + v - p;
          if (cc < 0 || cc >= static_cast<long>(w)) continue;
          s += kernel(static_cast<std::size_t>(u), static_cast<std::size_t>(v)) *
               img[static_cast<std::size_t>(rr) * w + static_cast<std::size_t>(cc)];
        }
      }
      out[static_cast<std::size_t>(r) * w + static_cast<std::size_t>(c)] = s;
    }
  return out;
}

// Transposed convolution matching conv_same's geometry: each input pixel
// scatters the kernel around itself.
std::vector<double> conv_transpose_same(std::span<const double> img, const Tensor& kernel, std::size_t h,
                                        std::size_t w) {
  const std::size_t k = kernel.rows();
  const long p = static_cast<long>(k - 1) / 2;
  std::vector<double> out(h * w, 0.0);
  for (long a = 0; a < static_cast<long>(h); ++a)
    for (long b = 0; b < static_cast<long>(w); ++b) {
      const double z = img[static_cast<std::size_t>(a) * w + static_cast<std::size_t>(b)];
      if (z == 0.0) continue;
      for (long u = 0; u < static_cast<long>(k); ++u) {
        const long r = a + u - p;
        if (r < 0 || r >= static_cast<long>(h)) continue;
        for (long v = 0; v < static_cast<long>(k); ++v) {
          const long c = b + v - p;
          if (c < 0 || c >= static_cast<long>(w)) continue;
          out[static_cast<std::size_t>(r) * w + static_cast<std::size_t>(c)] +=
              kernel(static_cast<std::size_t>(u), static_cast<std::size_t>(v)) * z;
        }
      }
    }
  return out;
}

}  // namespace

void RandMixConfig::validate() const {
  if (n_aug < 1 || n_aug > 16) throw Error("randmix: n_aug must lie in [1, 16]");
  if (!(r_con >= 0.0 && r_con <= 1.0)) throw Error("randmix: r_con must lie in [0, 1]");
}

std::vector<double> RandAutoencoder::noise_scale() const {
  std::vector<double> out(phi1.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = 1.0 + phi1[i] * noise;
  return out;
}

std::vector<double> RandAutoencoder::noise_shift() const {
  std::vector<double> out(phi2.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = phi2[i] * noise;
  return out;
}

RandAutoencoder draw_dense(std::size_t input_dim, Rng& rng, std::size_t hidden) {
  RandAutoencoder ae;
  ae.kind = RandAutoencoder::Kind::dense;
  ae.encoder = Tensor::zeros(hidden, input_dim);
  ae.decoder = Tensor::zeros(input_dim, hidden);
  ae.phi1 = Tensor({hidden});
  ae.phi2 = Tensor({hidden});
  fill_normal(ae.encoder, 1.0 / std::sqrt(static_cast<double>(input_dim)), rng);
  fill_normal(ae.decoder, 1.0 / std::sqrt(static_cast<double>(hidden)), rng);
  fill_normal(ae.phi1, kAdaInWeightStd, rng);
  fill_normal(ae.phi2, kAdaInWeightStd, rng);
  ae.noise = standard_normal(rng);
  return ae;
}

RandAutoencoder draw_conv(synthdata::ImageGeometry geometry, std::size_t kernel, Rng& rng) {
  const std::size_t k = std::min(kernel, 2 * std::min(geometry.height, geometry.width) - 1);
  RandAutoencoder ae;
  ae.kind = RandAutoencoder::Kind::conv;
  ae.geometry = geometry;
  ae.encoder = Tensor::zeros(k, k);
  ae.decoder = Tensor::zeros(k, k);
  ae.phi1 = Tensor({1});
  ae.phi2 = Tensor({1});
  fill_normal(ae.encoder, 1.0 / static_cast<double>(k), rng);
  fill_normal(ae.decoder, 1.0 / static_cast<double>(k), rng);
  fill_normal(ae.phi1, kAdaInWeightStd, rng);
  fill_normal(ae.phi2, kAdaInWeightStd, rng);
  ae.noise = standard_normal(rng);
  return ae;
}

Tensor autoencode(const RandAutoencoder& ae, const Tensor& x) {
  if (!x.all_finite()) throw Error("autoencode: input contains non-finite values");
  const auto scale = ae.noise_scale();
  const auto shift = ae.noise_shift();
  Tensor out(x.shape());

  if (ae.kind == RandAutoencoder::Kind::dense) {
    const std::size_t h = ae.encoder.rows();
    const std::size_t d = ae.encoder.cols();
    if (x.cols() != d || ae.decoder.rows() != d || ae.decoder.cols() != h || scale.size() != h) {
      throw Error("autoencode: input width " + std::to_string(x.cols()) + " does not match autoencoder " +
                  shape_string(ae.encoder.shape()));
    }
    std::vector<double> hidden(h);
    for (std::size_t r = 0; r < x.rows(); ++r) {
      auto in = x.row(r);
      for (std::size_t j = 0; j < h; ++j) {
        double s = 0.0;
        for (std::size_t i = 0; i < d; ++i) s += ae.encoder(j, i) * in[i];
        hidden[j] = s;
      }
      standardize(hidden);
      for (std::size_t j = 0; j < h; ++j) hidden[j] = scale[j] * hidden[j] + shift[j];
      auto o = out.row(r);
      for (std::size_t i = 0; i < d; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < h; ++j) s += ae.decoder(i, j) * hidden[j];
        o[i] = s;
      }
    }
    return out;
  }

  const std::size_t hh = ae.geometry.height, ww = ae.geometry.width;
  if (x.cols() != hh * ww) {
    throw Error("autoencode: input width " + std::to_string(x.cols()) + " is not a " + std::to_string(hh) + "x" +
                std::to_string(ww) + " image");
  }
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto hidden = conv_same(x.row(r), ae.encoder, hh, ww);
    standardize(hidden);
    for (auto& v : hidden) v = scale[0] * v + shift[0];
    auto decoded = conv_transpose_same(hidden, ae.decoder, hh, ww);
    std::copy(decoded.begin(), decoded.end(), out.row(r).begin());
  }
  return out;
}

std::vector<double> draw_mix_weights(int n_aug, Rng& rng) {
  std::vector<double> w(static_cast<std::size_t>(n_aug) + 1);
  double total = 0.0;
  do {
    for (auto& v : w) v = standard_normal(rng);
    total = 0.0;
    for (double v : w) total += v;
  } while (std::abs(total) < kMinWeightSum);
  return w;
}

Tensor mix(const std::vector<RandAutoencoder>& aes, const std::vector<double>& weights, const Tensor& x) {
  if (weights.size() != aes.size() + 1) throw Error("mix: need one weight per autoencoder plus w_0");
  double total = 0.0;
  for (double v : weights) total += v;
  if (std::abs(total) < kMinWeightSum) throw Error("mix: degenerate mixing weights");

  Tensor acc(x.shape());
  {
    auto a = acc.values();
    auto xv = x.values();
    for (std::size_t i = 0; i < a.size(); ++i) a[i] = weights[0] * xv[i];
  }
  for (std::size_t k = 0; k < aes.size(); ++k) {
    if (weights[k + 1] == 0.0) continue;
    const Tensor r = autoencode(aes[k], x);
    auto a = acc.values();
    auto rv = r.values();
    for (std::size_t i = 0; i < a.size(); ++i) a[i] += weights[k + 1] * rv[i];
  }
  // |z| <= 30 keeps the sigmoid strictly inside (0, 1) in double precision.
  for (auto& v : acc.values()) {
    const double z = std::clamp(v / total, -30.0, 30.0);
    v = 1.0 / (1.0 + std::exp(-z));
  }
  return acc;
}

std::vector<bool> gate(const nets::Model& model, const Tensor& x, double r_con) {
  const Tensor p = nets::probabilities(model, x);
  std::vector<bool> mask(p.rows());
  for (std::size_t r = 0; r < p.rows(); ++r) {
    auto row = p.row(r);
    mask[r] = *std::max_element(row.begin(), row.end()) >= r_con;
  }
  return mask;
}

Augmented augment_batch(const nets::Model& model, const Tensor& inputs, const std::vector<int>& labels,
                        const RandMixConfig& cfg, StageKind stage,
                        const std::optional<synthdata::ImageGeometry>& geometry, Rng& rng) {
  cfg.validate();
  if (labels.size() != inputs.rows()) throw Error("augment_batch: label count does not match rows");

  std::vector<RandAutoencoder> aes;
  aes.reserve(static_cast<std::size_t>(cfg.n_aug));
  for (int i = 0; i < cfg.n_aug; ++i) {
    if (geometry) {
      aes.push_back(draw_conv(*geometry, kKernelSizes[static_cast<std::size_t>(i) % std::size(kKernelSizes)], rng));
    } else {
      aes.push_back(draw_dense(inputs.cols(), rng));
    }
  }
  const auto weights = draw_mix_weights(cfg.n_aug, rng);

  Augmented out;
  if (stage == StageKind::source) {
    out.origin.resize(inputs.rows());
    for (std::size_t i = 0; i < inputs.rows(); ++i) out.origin[i] = i;
  } else {
    const auto mask = gate(model, inputs, cfg.r_con);
    for (std::size_t i = 0; i < mask.size(); ++i)
      if (mask[i]) out.origin.push_back(i);
  }
  if (out.origin.empty()) return out;
  out.inputs = mix(aes, weights, inputs.gather_rows(out.origin));
  for (auto i : out.origin) out.labels.push_back(labels[i]);
  return out;
}

}  // namespace cdsl::randmix
