#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "cdsl/cli.hpp"
#include "doctest.h"
#include "json.hpp"
#include "support.hpp"

namespace fs = std::filesystem;
using namespace cdsl;

namespace {

struct Outcome {
  int code;
  std::string out, err;
};

Outcome invoke(std::vector<std::string> args) {
  args.insert(args.begin(), "cdsl_lab");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::main(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::vector<std::string>> csv(const fs::path& p) {
  std::vector<std::vector<std::string>> rows;
  std::stringstream ss(slurp(p));
  std::string line;
  while (std::getline(ss, line)) {
    std::vector<std::string> cells;
    std::stringstream ls(line);
    std::string c;
    while (std::getline(ls, c, ',')) cells.push_back(c);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    rows.push_back(cells);
  }
  return rows;
}

/// A scratch directory holding a tiny config file.
struct Workspace {
  fs::path root;
  fs::path config;

  explicit Workspace(const std::string& name) : root(fs::temp_directory_path() / ("cdsl_cli_" + name)) {
    fs::remove_all(root);
    fs::create_directories(root);
    config = root / "tiny.cfg";
    std::ofstream(config) << protocol::to_text(testing::tiny_config());
  }
  ~Workspace() { fs::remove_all(root); }
};

}  // namespace

TEST_CASE("help exits 0 for the app and every command") {
  for (std::vector<std::string> a : {std::vector<std::string>{"--help"}, {"run", "--help"}, {"sweep", "--help"},
                                     {"ablate", "--help"}, {"report", "--help"}}) {
    const auto r = invoke(a);
    CHECK(r.code == cli::kExitOk);
    CHECK(r.out.find("--") != std::string::npos);
  }
  CHECK(invoke({"run", "--help"}).out.find("--seed") != std::string::npos);
  CHECK(invoke({}).code == cli::kExitUsage);
  CHECK(invoke({"train"}).code == cli::kExitUsage);
}

TEST_CASE("run writes a complete results directory") {
  Workspace w("run");
  const auto r = invoke({"run", "--config", w.config.string(), "--seed", "2022", "--out", (w.root / "a").string()});
  REQUIRE(r.code == cli::kExitOk);
  for (auto f : {"matrix.csv", "metrics.json", "train_log.csv", "config.resolved.json", "pseudo_labels.csv",
                 "stages.csv", "run.meta"}) {
    CHECK(fs::exists(w.root / "a" / f));
  }
  const auto m = csv(w.root / "a" / "matrix.csv");
  CHECK(m.size() == 6);
  CHECK(m[0][0] == "stage");
  CHECK(m[0].size() == 6);

  const auto resolved = protocol::parse_config(slurp(w.root / "a" / "config.resolved.json"));
  CHECK(resolved == testing::tiny_config());

  // Reruns are byte-identical except for run.meta.
  REQUIRE(invoke({"run", "--config", w.config.string(), "--seed", "2022", "--out", (w.root / "b").string()}).code ==
          0);
  for (auto f : {"matrix.csv", "metrics.json", "train_log.csv", "config.resolved.json", "pseudo_labels.csv",
                 "stages.csv"}) {
    CHECK(slurp(w.root / "a" / f) == slurp(w.root / "b" / f));
  }

  SUBCASE("report formats") {
    const auto dir = (w.root / "a").string();
    const auto js = invoke({"report", "--results", dir, "--format", "json"});
    REQUIRE(js.code == 0);
    const auto parsed = nlohmann::json::parse(js.out);
    CHECK(protocol::metrics_from_json(js.out) == protocol::load_metrics(w.root / "a"));
    CHECK(parsed.contains("tdg"));

    const auto c = invoke({"report", "--results", dir, "--format", "csv"});
    std::stringstream cs(c.out);
    CHECK(protocol::read_metrics_csv(cs) == protocol::load_metrics(w.root / "a"));

    const auto t = invoke({"report", "--results", dir});
    REQUIRE(t.code == 0);
    std::stringstream ts(t.out);
    std::string header;
    std::getline(ts, header);
    std::stringstream hs(header);
    std::size_t columns = 0;
    for (std::string word; hs >> word;) ++columns;
    CHECK(columns == 5 + 1);

    CHECK(invoke({"report", "--results", (w.root / "missing").string()}).code == cli::kExitUsage);
    CHECK(invoke({"report", "--results", dir, "--format", "xml"}).code == cli::kExitUsage);
  }
}

TEST_CASE("epochs=0 rows all show the untrained model") {
  Workspace w("zero");
  REQUIRE(invoke({"run", "--config", w.config.string(), "--set", "epochs=0", "--out", (w.root / "z").string()})
              .code == 0);
  const auto m = csv(w.root / "z" / "matrix.csv");
  for (std::size_t i = 2; i < m.size(); ++i) {
    CHECK(std::vector<std::string>(m[i].begin() + 1, m[i].end()) ==
          std::vector<std::string>(m[1].begin() + 1, m[1].end()));
  }
}

TEST_CASE("configuration errors exit 2 and name the field and line") {
  Workspace w("bad");
  const auto bad = w.root / "bad.cfg";
  std::ofstream(bad) << "epochs = 2\nmomentm = 0.9\n";
  const auto r = invoke({"run", "--config", bad.string(), "--out", (w.root / "x").string()});
  CHECK(r.code == cli::kExitUsage);
  CHECK(r.err.find("line 2") != std::string::npos);
  CHECK(r.err.find("momentm") != std::string::npos);

  CHECK(invoke({"run", "--config", w.config.string(), "--set", "epochs", "--out", "x"}).code == cli::kExitUsage);
  CHECK(invoke({"run", "--config", (w.root / "none.cfg").string(), "--out", "x"}).code == cli::kExitUsage);
  CHECK(invoke({"ablate", "--config", w.config.string(), "--variant", "no_memory", "--out", "x"}).code ==
        cli::kExitUsage);
  CHECK(invoke({"sweep", "--config", w.config.string(), "--param", "epochs", "--values", "1", "--out", "x"}).code ==
        cli::kExitUsage);
}

TEST_CASE("seed precedence") {
  Workspace w("seed");
  const auto seeded = w.root / "seeded.cfg";
  std::ofstream(seeded) << "seed = 11\n";
  const auto plain = w.root / "plain.cfg";
  std::ofstream(plain) << "epochs = 1\n";

  ::setenv("CDSL_LAB_SEED", "77", 1);
  CHECK(cli::resolve_config(plain.string(), {}, std::nullopt).seed == 77);
  CHECK(cli::resolve_config(seeded.string(), {}, std::nullopt).seed == 11);
  CHECK(cli::resolve_config(seeded.string(), {"seed=12"}, std::nullopt).seed == 12);
  CHECK(cli::resolve_config(seeded.string(), {"seed=12"}, 13).seed == 13);
  ::unsetenv("CDSL_LAB_SEED");
  CHECK(cli::resolve_config(plain.string(), {}, std::nullopt).seed == 2022);
  CHECK(cli::resolve_config(std::nullopt, {"epochs=4", "epochs=5"}, std::nullopt).epochs == 5);
}

TEST_CASE("sweep writes one sub-run per value and seed, and a recomputable summary") {
  Workspace w("sweep");
  const auto r = invoke({"sweep", "--config", w.config.string(), "--param", "r_con", "--values", "0.5,0.95",
                         "--jobs", "4", "--out", (w.root / "s").string()});
  REQUIRE(r.code == 0);
  const auto summary = csv(w.root / "s" / "summary.csv");
  REQUIRE(summary.size() == 3);
  CHECK(summary[0] == std::vector<std::string>{"param", "value", "runs", "mean_tdg", "mean_tda", "mean_fa"});
  for (std::size_t v = 1; v <= 2; ++v) {
    CHECK(summary[v][2] == "3");
    double tdg = 0;
    for (auto seed : cli::kSweepSeeds) {
      const auto dir = w.root / "s" / ("r_con=" + summary[v][1]) / ("seed" + std::to_string(seed));
      const auto m = protocol::load_metrics(dir);
      tdg += *m.avg_tdg;
      CHECK(protocol::parse_config(slurp(dir / "config.resolved.json")).seed == seed);
    }
    CHECK(std::stod(summary[v][3]) == doctest::Approx(tdg / 3).epsilon(1e-15));
  }
}

TEST_CASE("ablate writes paired runs and recomputable deltas") {
  Workspace w("ablate");
  const auto r = invoke({"ablate", "--config", w.config.string(), "--variant", "labeler=softmax", "--jobs", "3",
                         "--out", (w.root / "a").string()});
  REQUIRE(r.code == 0);
  const auto rows = csv(w.root / "a" / "deltas.csv");
  REQUIRE(rows.size() == 5);
  double mean_delta = 0;
  for (std::size_t i = 1; i <= 3; ++i) {
    const auto seed = rows[i][0];
    const auto full = protocol::load_metrics(w.root / "a" / ("seed" + seed) / "full");
    const auto abl = protocol::load_metrics(w.root / "a" / ("seed" + seed) / "labeler-softmax");
    CHECK(std::stod(rows[i][4]) == doctest::Approx(*full.avg_tdg - *abl.avg_tdg).epsilon(1e-15));
    mean_delta += std::stod(rows[i][4]) / 3;
  }
  CHECK(rows[4][0] == "mean");
  CHECK(std::stod(rows[4][4]) == doctest::Approx(mean_delta).epsilon(1e-12));
}

TEST_CASE("run_parallel runs every task and rethrows failures") {
  std::vector<int> hits(20, 0);
  cli::run_parallel(20, 4, [&](std::size_t i) { hits[i] += 1; });
  CHECK(std::count(hits.begin(), hits.end(), 1) == 20);
  CHECK_THROWS_AS(cli::run_parallel(5, 2, [](std::size_t i) {
                    if (i == 3) throw cdsl::Error("boom");
                  }),
                  cdsl::Error);
}
