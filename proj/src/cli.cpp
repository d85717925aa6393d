#include "cdsl/cli.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <mutex>
#include <ostream>
#include <sstream>
#include <thread>

#include "CLI11.hpp"

namespace cdsl::cli {

using protocol::MetricsReport;
using protocol::RunConfig;

RunConfig resolve_config(const std::optional<std::string>& config_path, const std::vector<std::string>& overrides,
                         const std::optional<std::uint64_t>& seed) {
  RunConfig cfg;
  std::vector<std::string> keys;
  if (config_path) cfg = protocol::load_config(*config_path, &keys);
  if (std::find(keys.begin(), keys.end(), "seed") == keys.end()) {
    if (const char* env = std::getenv("CDSL_LAB_SEED"); env && *env) {
      protocol::apply_setting(cfg, "seed", env);
    }
  }
  for (const auto& kv : overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw protocol::ConfigError(kv, 0, "--set expects key=value");
    protocol::apply_setting(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (seed) cfg.seed = *seed;
  cfg.validate();
  return cfg;
}

void run_parallel(std::size_t count, std::size_t jobs, const std::function<void(std::size_t)>& task) {
  jobs = std::max<std::size_t>(1, std::min(jobs, count));
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&]() {
    for (std::size_t i = next++; i < count; i = next++) {
      try {
        task(i);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  std::vector<std::thread> threads;
  for (std::size_t j = 1; j < jobs; ++j) threads.emplace_back(worker);
  worker();
  for (auto& t : threads) t.join();
  if (failure) std::rethrow_exception(failure);
}

namespace {

std::string g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string cell(const std::optional<double>& v) { return v ? g17(*v) : ""; }

std::optional<double> mean(const std::vector<std::optional<double>>& xs) {
  double s = 0.0;
  std::size_t n = 0;
  for (const auto& x : xs) {
    if (x) {
      s += *x;
      ++n;
    }
  }
  if (n == 0) return std::nullopt;
  return s / static_cast<double>(n);
}

std::optional<double> diff(const std::optional<double>& a, const std::optional<double>& b) {
  if (!a || !b) return std::nullopt;
  return *a - *b;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
}

std::string dir_name(std::string s) {
  std::replace(s.begin(), s.end(), '=', '-');
  std::replace(s.begin(), s.end(), '/', '_');
  return s;
}

}  // namespace

int cmd_run(const RunConfig& cfg, const std::filesystem::path& out_dir, std::ostream& log) {
  auto result = cfg.stationary ? protocol::run_cdsl(protocol::stationary_removals(cfg), [&] {
    auto seq = protocol::resolve_sequence(cfg);
    if (seq.domains.size() < 2) throw protocol::ConfigError("stationary", 0, "needs a sequence with a target domain");
    seq.domains.resize(2);
    return seq;
  }())
                               : protocol::run_cdsl(cfg);
  protocol::write_results(out_dir, cfg, result);
  log << "wrote " << out_dir.string() << " (" << result.matrix.size() << " stages)\n";
  return kExitOk;
}

int cmd_sweep(const RunConfig& base, const std::string& param, const std::vector<std::string>& values,
              const std::filesystem::path& out_dir, std::size_t jobs, std::ostream& log) {
  if (param != "r_con" && param != "r_top" && param != "r_top_prime") {
    throw protocol::ConfigError(param, 0, "sweep parameter must be r_con, r_top or r_top_prime");
  }
  if (values.empty()) throw protocol::ConfigError(param, 0, "empty value list");

  struct SubRun {
    std::size_t value_index;
    RunConfig cfg;
    std::filesystem::path dir;
    MetricsReport metrics;
  };
  std::vector<SubRun> runs;
  for (std::size_t v = 0; v < values.size(); ++v) {
    for (auto seed : kSweepSeeds) {
      RunConfig cfg = base;
      protocol::apply_setting(cfg, param, values[v]);
      cfg.seed = seed;
      cfg.validate();
      runs.push_back({v, cfg, out_dir / (param + "=" + values[v]) / ("seed" + std::to_string(seed)), {}});
    }
  }

  run_parallel(runs.size(), jobs, [&](std::size_t i) {
    auto result = protocol::run_cdsl(runs[i].cfg);
    protocol::write_results(runs[i].dir, runs[i].cfg, result);
    runs[i].metrics = result.metrics;
  });

  std::ostringstream summary;
  summary << "param,value,runs,mean_tdg,mean_tda,mean_fa\n";
  for (std::size_t v = 0; v < values.size(); ++v) {
    std::vector<std::optional<double>> tdg, tda, fa;
    for (const auto& r : runs) {
      if (r.value_index != v) continue;
      tdg.push_back(r.metrics.avg_tdg);
      tda.push_back(r.metrics.avg_tda);
      fa.push_back(r.metrics.avg_fa);
    }
    summary << param << ',' << values[v] << ',' << tdg.size() << ',' << cell(mean(tdg)) << ',' << cell(mean(tda))
            << ',' << cell(mean(fa)) << '\n';
  }
  std::filesystem::create_directories(out_dir);
  write_text(out_dir / "summary.csv", summary.str());
  log << "wrote " << runs.size() << " sub-runs and " << (out_dir / "summary.csv").string() << '\n';
  return kExitOk;
}

int cmd_ablate(const RunConfig& base, protocol::Variant variant, const std::filesystem::path& out_dir,
               std::size_t jobs, std::ostream& log) {
  const std::string name(protocol::to_string(variant));
  struct Pair {
    std::uint64_t seed;
    RunConfig full, ablated;
    MetricsReport full_metrics, ablated_metrics;
  };
  std::vector<Pair> pairs;
  for (auto seed : kSweepSeeds) {
    RunConfig cfg = base;
    cfg.seed = seed;
    pairs.push_back({seed, cfg, protocol::apply_variant(cfg, variant), {}, {}});
  }

  run_parallel(pairs.size() * 2, jobs, [&](std::size_t i) {
    auto& p = pairs[i / 2];
    const bool ablated = i % 2 == 1;
    const auto& cfg = ablated ? p.ablated : p.full;
    auto result = protocol::run_cdsl(cfg);
    protocol::write_results(out_dir / ("seed" + std::to_string(p.seed)) / (ablated ? dir_name(name) : "full"), cfg,
                            result);
    (ablated ? p.ablated_metrics : p.full_metrics) = result.metrics;
  });

  std::ostringstream table;
  table << "seed,variant,full_tdg,ablated_tdg,delta_tdg,full_tda,ablated_tda,delta_tda,full_fa,ablated_fa,delta_fa\n";
  std::vector<std::optional<double>> cols[9];
  for (const auto& p : pairs) {
    const auto& f = p.full_metrics;
    const auto& a = p.ablated_metrics;
    const std::optional<double> row[9] = {f.avg_tdg, a.avg_tdg, diff(f.avg_tdg, a.avg_tdg),
                                          f.avg_tda, a.avg_tda, diff(f.avg_tda, a.avg_tda),
                                          f.avg_fa,  a.avg_fa,  diff(f.avg_fa, a.avg_fa)};
    table << p.seed << ',' << name;
    for (std::size_t c = 0; c < 9; ++c) {
      table << ',' << cell(row[c]);
      cols[c].push_back(row[c]);
    }
    table << '\n';
  }
  table << "mean," << name;
  for (auto& c : cols) table << ',' << cell(mean(c));
  table << '\n';

  std::filesystem::create_directories(out_dir);
  write_text(out_dir / "deltas.csv", table.str());
  log << table.str();
  return kExitOk;
}

std::string render_table(const MetricsReport& r) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> header{"metric"};
  header.insert(header.end(), r.domains.begin(), r.domains.end());
  rows.push_back(header);
  auto fmt = [](const std::optional<double>& v) {
    if (!v) return std::string("-");
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4f", *v);
    return std::string(buf);
  };
  auto add = [&](const char* name, const std::vector<std::optional<double>>& xs) {
    std::vector<std::string> row{name};
    for (const auto& x : xs) row.push_back(fmt(x));
    rows.push_back(row);
  };
  add("TDG", r.tdg);
  add("TDA", r.tda);
  add("FA", r.fa);

  std::vector<std::size_t> width(header.size(), 0);
  for (const auto& row : rows) {
    for (std::size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], row[c].size());
  }
  std::ostringstream out;
  for (const auto& row : rows) {
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (c) out << "  ";
      if (c == 0) {
        out << row[c] << std::string(width[c] - row[c].size(), ' ');
      } else {
        out << std::string(width[c] - row[c].size(), ' ') << row[c];
      }
    }
    out << '\n';
  }
  out << "\naverage  TDG " << fmt(r.avg_tdg) << "  TDA " << fmt(r.avg_tda) << "  FA " << fmt(r.avg_fa) << '\n';
  return out.str();
}

int cmd_report(const std::filesystem::path& results_dir, const std::string& format, std::ostream& out) {
  if (!std::filesystem::exists(results_dir / "metrics.json")) {
    throw protocol::ConfigError("--results", 0, "no metrics.json in " + results_dir.string());
  }
  const auto report = protocol::load_metrics(results_dir);
  if (format == "text") {
    out << render_table(report);
  } else if (format == "csv") {
    protocol::write_metrics_csv(report, out);
  } else if (format == "json") {
    out << protocol::metrics_json(report);
  } else {
    throw protocol::ConfigError("--format", 0, "expected text, csv or json");
  }
  return kExitOk;
}

namespace {

std::vector<std::string> split_values(const std::string& list) {
  std::vector<std::string> out;
  std::stringstream ss(list);
  std::string v;
  while (std::getline(ss, v, ',')) {
    const auto b = v.find_first_not_of(' ');
    const auto e = v.find_last_not_of(' ');
    if (b == std::string::npos) throw protocol::ConfigError("--values", 0, "empty entry in '" + list + "'");
    out.push_back(v.substr(b, e - b + 1));
  }
  if (out.empty()) throw protocol::ConfigError("--values", 0, "empty value list");
  return out;
}

}  // namespace

int main(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Continual domain shift learning experiments on synthetic domain sequences", "cdsl_lab"};
  app.require_subcommand(1);

  std::optional<std::string> config_path;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
  std::size_t jobs = 1;

  auto common = [&](CLI::App* sub, bool with_seed) {
    sub->add_option("--config", config_path, "Config file: 'key = value' lines or a JSON object")
        ->check(CLI::ExistingFile);
    sub->add_option("--set", overrides, "Override one config key, KEY=VALUE; repeatable, last wins");
    if (with_seed) sub->add_option("--seed", seed, "Root seed (overrides config and CDSL_LAB_SEED)");
    sub->add_option("--out", out_dir, "Output directory")->required();
  };

  auto* run = app.add_subcommand("run", "Run one experiment and write its results directory");
  common(run, true);

  std::string param, values;
  auto* sweep = app.add_subcommand("sweep", "Sweep one labeler/augmentation ratio over seeds 2022, 2023, 2024");
  common(sweep, false);
  sweep->add_option("--param", param, "r_con, r_top or r_top_prime")->required();
  sweep->add_option("--values", values, "Comma-separated values, e.g. 0.5,0.8,0.95")->required();
  sweep->add_option("--jobs", jobs, "Sub-runs executed in parallel")->check(CLI::PositiveNumber);

  std::string variant;
  auto* abl = app.add_subcommand("ablate", "Paired full vs ablated runs over seeds 2022, 2023, 2024");
  common(abl, false);
  abl->add_option("--variant", variant, "no_randmix, labeler=softmax, labeler=shot_style or no_pca")->required();
  abl->add_option("--jobs", jobs, "Sub-runs executed in parallel")->check(CLI::PositiveNumber);

  std::string results, format = "text";
  auto* report = app.add_subcommand("report", "Print the metrics of a results directory");
  report->add_option("--results", results, "Results directory written by run")->required();
  report->add_option("--format", format, "text, csv or json")->check(CLI::IsMember({"text", "csv", "json"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*report) return cmd_report(results, format, out);
    const auto cfg = resolve_config(config_path, overrides, seed);
    if (*run) return cmd_run(cfg, out_dir, err);
    if (*sweep) return cmd_sweep(cfg, param, split_values(values), out_dir, jobs, err);
    protocol::Variant v;
    try {
      v = protocol::parse_variant(variant);
    } catch (const Error& e) {
      throw protocol::ConfigError("--variant", 0, e.what());
    }
    return cmd_ablate(cfg, v, out_dir, jobs, err);
  } catch (const protocol::ConfigError& e) {
    err << "cdsl_lab: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "cdsl_lab: error: " << e.what() << '\n';
    return kExitRuntime;
  }
}

}  // namespace cdsl::cli
