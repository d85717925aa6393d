#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cdsl/tensor.hpp"

namespace cdsl::synthdata {

enum class GeneratorKind { gauss_mix, two_moons, bitmap8 };

std::string_view to_string(GeneratorKind kind);
GeneratorKind parse_generator_kind(std::string_view name);

/// c with sigmoid(c) = c. The vector presets are centred here so that
/// sigmoid(x) is a contraction about the data centre.
inline constexpr double kSigmoidFixedPoint = 0.65904606840740666;

/// One domain of a synthetic sequence. A shared class template gets isotropic
/// Gaussian noise, is rotated (degrees) about its centre, then translated.
struct DomainSpec {
  std::string name;
  GeneratorKind kind = GeneratorKind::gauss_mix;
  double rotation_deg = 0.0;
  std::array<double, 2> translation{0.0, 0.0};
  double noise_sigma = 0.0;
  std::size_t num_classes = 4;
  std::size_t num_samples = 400;

  void validate() const;
  std::size_t input_dim() const;
  friend bool operator==(const DomainSpec&, const DomainSpec&) = default;
};

struct Dataset {
  Tensor inputs;            // [N x input_dim]
  std::vector<int> labels;  // N entries in [0, K)

  std::size_t size() const { return labels.size(); }
  Dataset subset(std::span<const std::size_t> indices) const;
};

struct ImageGeometry {
  std::size_t height = 8;
  std::size_t width = 8;
};

struct DomainSequence {
  std::string name;
  std::vector<DomainSpec> domains;  // domains[0] is the labeled source

  std::size_t num_classes() const;
  std::size_t input_dim() const;
  /// Set when the inputs are flattened single-channel images.
  std::optional<ImageGeometry> geometry() const;
  void validate() const;
};

/// Deterministic in (spec, seed); labels are balanced to within one sample.
Dataset generate(const DomainSpec& spec, std::uint64_t seed);

/// Seed used for a named domain of a run with root seed `root_seed`. Keyed by
/// the domain name so a domain's data does not depend on its position.
std::uint64_t domain_seed(std::uint64_t root_seed, std::string_view domain_name);

std::vector<std::string> preset_names();
/// Presets: "rot5", "moons4", "bitmap5". Unknown names raise an error listing them.
DomainSequence standard_sequence(std::string_view name);
std::vector<DomainSequence> standard_sequences();

/// Sequence with domains visited in `order` (a permutation of 0..n-1).
DomainSequence reorder(const DomainSequence& seq, std::span<const std::size_t> order);
/// Every visiting order of n domains, lexicographic.
std::vector<std::vector<std::size_t>> domain_orders(std::size_t n);

struct Split {
  std::vector<std::size_t> train_indices;  // ascending
  std::vector<std::size_t> test_indices;   // ascending
  Dataset train;
  Dataset test;
};

/// Random split with round(fraction * N) training samples; fraction in (0, 1).
Split split_source(const Dataset& data, double fraction, std::uint64_t seed);

/// CSV rows "label,f0,f1,..." with 17 significant digits, preceded by a header.
void write_csv(const Dataset& data, std::ostream& out);
Dataset read_csv(std::istream& in);

std::uint64_t dataset_hash(const Dataset& data);

}  // namespace cdsl::synthdata
