#pragma once

// The continual domain shift learning runner.
//
// Stage 0 trains on the labeled source split. Each later stage sees one
// unlabeled target domain: pseudo labels are refreshed once per epoch,
// every batch mixes in replayed exemplars and gated RandMix copies, and the
// frozen previous-stage model supplies prototypes and distillation targets.
// After every stage the model is evaluated on all domains, giving one row of
// the accuracy matrix.

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cdsl/config.hpp"
#include "cdsl/labeler.hpp"
#include "cdsl/objective.hpp"
#include "cdsl/synthdata.hpp"

namespace cdsl::protocol {

/// rows = stages 0..T, columns = domains 0..T, entries in [0, 1].
using AccuracyMatrix = std::vector<std::vector<double>>;

struct MetricsReport {
  std::vector<std::string> domains;
  std::vector<std::optional<double>> tdg;  // mean of rows r < j; absent for j = 0
  std::vector<std::optional<double>> tda;  // matrix[j][j]
  std::vector<std::optional<double>> fa;   // mean of rows r > j; absent for j = T
  std::optional<double> avg_tdg;           // means over the defined entries
  std::optional<double> avg_tda;
  std::optional<double> avg_fa;

  friend bool operator==(const MetricsReport&, const MetricsReport&) = default;
};

MetricsReport compute_metrics(const AccuracyMatrix& matrix, std::vector<std::string> domains = {});

struct TrainLogRow {
  std::size_t stage = 0;
  std::size_t epoch = 0;
  std::size_t step = 0;
  objective::LossBreakdown loss;
};

struct StageTrace {
  std::size_t stage = 0;
  std::size_t memory_size = 0;
  std::vector<std::size_t> bucket_sizes;  // ascending domain id
  std::size_t previous_refreshes = 0;     // cumulative, after this stage
  /// Accuracy of the configured labeler at the stage's first labeling (targets only).
  std::optional<double> label_accuracy;
  /// Accuracy of t2pl, softmax and shot_style on that same model (probe_labelers).
  std::optional<std::array<double, 3>> probe;
};

struct RunResult {
  std::vector<std::string> domains;
  AccuracyMatrix matrix;
  MetricsReport metrics;
  std::vector<TrainLogRow> train_log;
  std::vector<StageTrace> stages;
  std::vector<labeler::PseudoLabelSet> pseudo_labels;  // end of each target stage
  std::optional<std::vector<double>> initial_row;       // record_initial_row
  std::uint64_t final_parameter_hash = 0;
};

/// Resolves cfg.sequence (preset name), cfg.order and cfg.samples_per_domain.
synthdata::DomainSequence resolve_sequence(const RunConfig& cfg);

/// Applies the stationary-mode removals (memory, distillation, previous prototypes).
RunConfig stationary_removals(RunConfig cfg);

RunResult run_cdsl(const RunConfig& cfg);
RunResult run_cdsl(const RunConfig& cfg, const synthdata::DomainSequence& sequence);

/// Source stage then one target stage with the stationary removals; returns the
/// target accuracy after adaptation.
double run_stationary(const RunConfig& cfg, const synthdata::DomainSpec& source, const synthdata::DomainSpec& target);

enum class Variant { no_randmix, labeler_softmax, labeler_shot_style, no_pca };

std::string_view to_string(Variant v);
Variant parse_variant(std::string_view name);
std::vector<std::string> variant_names();
RunConfig apply_variant(RunConfig cfg, Variant v);
MetricsReport ablate(const RunConfig& cfg, Variant v);

/// Results layout: matrix.csv, metrics.json, train_log.csv, config.resolved.json,
/// pseudo_labels.csv, stages.csv and run.meta (the only file with a timestamp).
void write_results(const std::filesystem::path& dir, const RunConfig& cfg, const RunResult& result);

void write_matrix_csv(const AccuracyMatrix& matrix, const std::vector<std::string>& domains, std::ostream& out);
std::string metrics_json(const MetricsReport& report);
MetricsReport metrics_from_json(const std::string& text);
MetricsReport load_metrics(const std::filesystem::path& results_dir);

/// "metric,<domains...>,average" rows with 17 significant digits; empty cells are absent values.
void write_metrics_csv(const MetricsReport& report, std::ostream& out);
MetricsReport read_metrics_csv(std::istream& in);

}  // namespace cdsl::protocol
