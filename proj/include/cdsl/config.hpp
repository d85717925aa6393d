#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "cdsl/diffcore.hpp"
#include "cdsl/labeler.hpp"
#include "cdsl/randmix.hpp"
#include "cdsl/tensor.hpp"

namespace cdsl::protocol {

enum class DistillOn { logits, representation };

std::string_view to_string(DistillOn d);

/// Everything that determines one experiment. Two equal configs produce
/// bit-identical results.
struct RunConfig {
  std::string sequence = "rot5";
  std::vector<std::size_t> order;  // empty: preset order
  std::size_t samples_per_domain = 0;  // 0: preset value

  std::size_t epochs = 30;
  std::size_t steps_per_epoch = 25;
  std::size_t batch_size = 64;
  diffcore::SgdConfig sgd{};
  randmix::RandMixConfig randmix{};
  labeler::LabelerConfig labeler{};
  std::size_t memory_capacity = 200;
  std::size_t replay_n = 16;
  double source_fraction = 0.8;
  std::vector<std::size_t> extractor_widths{64, 64};
  std::vector<std::size_t> bottleneck_widths{32, 16};

  bool disable_randmix = false;
  bool disable_pca = false;
  DistillOn distill_on = DistillOn::logits;
  bool stationary = false;
  // The three removals that stationary mode implies, individually switchable.
  bool disable_memory = false;
  bool disable_distill = false;
  bool pca_source_form = false;

  bool record_initial_row = false;
  bool probe_labelers = false;

  std::uint64_t seed = 2022;

  void validate() const;
  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

/// Configuration error carrying the offending field and, for text files, the line.
class ConfigError : public Error {
 public:
  ConfigError(std::string field, std::size_t line, const std::string& message);
  const std::string& field() const { return field_; }
  std::size_t line() const { return line_; }

 private:
  std::string field_;
  std::size_t line_;
};

/// Every accepted key, in canonical order.
std::vector<std::string> config_keys();

/// Sets one field from its textual form. Unknown keys and malformed values raise ConfigError.
void apply_setting(RunConfig& cfg, std::string_view key, std::string_view value, std::size_t line = 0);

/// "key = value" lines with '#' comments, or a flat JSON object (detected by a leading '{').
/// Returns the config and the keys that were set explicitly.
RunConfig parse_config(std::string_view text, std::vector<std::string>* keys_set = nullptr);
RunConfig load_config(const std::string& path, std::vector<std::string>* keys_set = nullptr);

/// Flat JSON object with every key; parse_config(to_json(c)) == c.
std::string to_json(const RunConfig& cfg);
/// Same content as "key = value" text.
std::string to_text(const RunConfig& cfg);

}  // namespace cdsl::protocol
