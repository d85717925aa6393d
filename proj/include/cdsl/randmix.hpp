#pragma once

// Random mixup augmentation with freshly drawn, untrained autoencoders.
//
//   R_i(x) = dec( phi1(n) * IN(enc(x)) + phi2(n) )
//   mix(x) = sigmoid( (w_0 x + sum_i w_i R_i(x)) / sum_i w_i )
//
// For flat vectors enc/dec are dense maps through a hidden layer; for
// single-channel images they are a "same" convolution and its transposed
// convolution. IN standardizes each sample across its hidden units (or
// pixels). phi1/phi2 are linear maps of a scalar N(0,1) noise draw with
// N(0, 0.1^2) weights, phi1 offset by +1.

#include <cstddef>
#include <optional>
#include <vector>

#include "cdsl/nets.hpp"
#include "cdsl/rng.hpp"
#include "cdsl/synthdata.hpp"
#include "cdsl/tensor.hpp"

namespace cdsl::randmix {

inline constexpr double kInstanceNormEps = 1e-5;
inline constexpr double kMinWeightSum = 0.1;
inline constexpr double kAdaInWeightStd = 0.1;
inline constexpr std::size_t kDenseHidden = 16;
/// Kernel sizes of the convolutional autoencoders, cycled by index.
inline constexpr std::size_t kKernelSizes[] = {5, 9, 13, 17};

struct RandMixConfig {
  int n_aug = 4;
  double r_con = 0.8;

  void validate() const;
  friend bool operator==(const RandMixConfig&, const RandMixConfig&) = default;
};

struct RandAutoencoder {
  enum class Kind { dense, conv };
  Kind kind = Kind::dense;
  Tensor encoder;  // dense: [h x d_in]; conv: [k x k]
  Tensor decoder;  // dense: [d_in x h]; conv: [k x k]
  Tensor phi1;     // [channels]: weights of the multiplicative noise map
  Tensor phi2;     // [channels]: weights of the additive noise map
  double noise = 0.0;
  synthdata::ImageGeometry geometry{};  // conv only

  /// phi1(n) = 1 + phi1 * n
  std::vector<double> noise_scale() const;
  /// phi2(n) = phi2 * n
  std::vector<double> noise_shift() const;
};

/// Fresh dense autoencoder for `input_dim`-wide vectors.
RandAutoencoder draw_dense(std::size_t input_dim, Rng& rng, std::size_t hidden = kDenseHidden);
/// Fresh convolutional autoencoder; the kernel is clipped to 2*side-1.
RandAutoencoder draw_conv(synthdata::ImageGeometry geometry, std::size_t kernel, Rng& rng);

/// R(x) for every row of x; output has x's shape.
Tensor autoencode(const RandAutoencoder& ae, const Tensor& x);

/// w_0 .. w_{n_aug}, redrawn until |sum| >= kMinWeightSum.
std::vector<double> draw_mix_weights(int n_aug, Rng& rng);

/// sigmoid((w_0 x + sum_i w_i R_i(x)) / sum w). Every output lies strictly in (0, 1).
Tensor mix(const std::vector<RandAutoencoder>& aes, const std::vector<double>& weights, const Tensor& x);

/// mask[i] = max softmax(logits(x_i)) >= r_con.
std::vector<bool> gate(const nets::Model& model, const Tensor& x, double r_con);

enum class StageKind { source, target };

struct Augmented {
  Tensor inputs;                    // [m x d_in]; empty when m == 0
  std::vector<int> labels;          // inherited from the originals
  std::vector<std::size_t> origin;  // row of the original in the batch
};

/// One batch of augmentation with autoencoders and weights drawn afresh from
/// `rng`. Source stages augment every row; target stages only rows passing
/// the confidence gate. The amount of randomness consumed does not depend on
/// how many rows pass the gate.
Augmented augment_batch(const nets::Model& model, const Tensor& inputs, const std::vector<int>& labels,
                        const RandMixConfig& cfg, StageKind stage,
                        const std::optional<synthdata::ImageGeometry>& geometry, Rng& rng);

}  // namespace cdsl::randmix
