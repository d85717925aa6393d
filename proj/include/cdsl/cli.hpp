#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "cdsl/config.hpp"
#include "cdsl/protocol.hpp"

namespace cdsl::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;

inline constexpr std::uint64_t kSweepSeeds[] = {2022, 2023, 2024};

/// Config resolution order, later wins: built-in defaults, CDSL_LAB_SEED (seed
/// only), the config file, each --set in order, --seed.
protocol::RunConfig resolve_config(const std::optional<std::string>& config_path,
                                   const std::vector<std::string>& overrides,
                                   const std::optional<std::uint64_t>& seed);

/// Runs `tasks` on up to `jobs` threads; rethrows the first failure.
void run_parallel(std::size_t count, std::size_t jobs, const std::function<void(std::size_t)>& task);

int cmd_run(const protocol::RunConfig& cfg, const std::filesystem::path& out_dir, std::ostream& log);
int cmd_sweep(const protocol::RunConfig& base, const std::string& param, const std::vector<std::string>& values,
              const std::filesystem::path& out_dir, std::size_t jobs, std::ostream& log);
int cmd_ablate(const protocol::RunConfig& base, protocol::Variant variant, const std::filesystem::path& out_dir,
               std::size_t jobs, std::ostream& log);
int cmd_report(const std::filesystem::path& results_dir, const std::string& format, std::ostream& out);

/// Text rendering used by `report --format text`: one column per domain plus the row label.
std::string render_table(const protocol::MetricsReport& report);

/// Full command line entry point. Returns the process exit code.
int main(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace cdsl::cli
