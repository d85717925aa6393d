// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <thread>

#include "cdsl/cli.hpp"
#include "cdsl/labeler.hpp"
#include "cdsl/memory.hpp"
#include "cdsl/objective.hpp"
#include "cdsl/protocol.hpp"
#include "cdsl/randmix.hpp"
#include "oracles.hpp"
#include "support.hpp"

namespace fs = std::filesystem;
using namespace cdsl;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

// 1 ---------------------------------------------------------------------------

using LossFn = diffcore::Var (*)(const objective::BatchContext&);

double loss_value(const nets::Model& m, const Tensor& x, const std::vector<int>& y, const Tensor& prev_protos,
                  const Tensor& target, LossFn loss, nets::Model* with_grads = nullptr) {
  diffcore::Tape t;
  auto vars = m.forward(t, t.constant(x), with_grads != nullptr);
  objective::BatchContext ctx;
  ctx.tape = &t;
  ctx.features = vars.features;
  ctx.logits = vars.logits;
  ctx.labels = y;
  ctx.previous_prototypes = prev_protos;
  ctx.distill_input = vars.logits;
  ctx.distill_target = target;
  auto out = loss(ctx);
  if (with_grads) {
    t.backward(out);
    with_grads->collect_gradients(t, vars);
  }
  return t.value(out).item();
}

Outcome gradient_correctness() {
  std::mt19937_64 g(2022);
  double worst = 0.0;
  int checks = 0;
  const LossFn losses[] = {objective::ce_loss, objective::pca_loss, objective::source_pca_loss,
                           objective::distill_loss};
  for (int trial = 0; trial < 6; ++trial) {
    nets::ModelSpec spec;
    spec.input_dim = 2 + trial % 3;
    spec.extractor_widths = {10};
    spec.bottleneck_widths = {12, 4 + 2 * static_cast<std::size_t>(trial)};  // feature dim up to 14
    spec.num_classes = 2 + trial % 3;
    Rng init = make_stream(100 + trial, "init");
    const nets::Model model = nets::Model::initialize(spec, init);
    const nets::Model prev = nets::Model::initialize(spec, init);
    const std::size_t n = 4 + trial % 5;
    const Tensor x = testing::random_matrix(n, spec.input_dim, g);
    std::vector<int> y(n);
    for (auto& v : y) v = static_cast<int>(g() % spec.num_classes);
    const Tensor target = nets::probabilities(prev, x);

    for (auto loss : losses) {
      nets::Model m = model;
      loss_value(model, x, y, prev.prototypes(), target, loss, &m);
      std::vector<std::vector<double>> analytic, numeric;
      auto params = m.parameters();
      for (std::size_t p = 0; p < params.size(); ++p) {
        analytic.emplace_back(params[p]->grad().begin(), params[p]->grad().end());
        std::vector<double> col;
        for (std::size_t i = 0; i < params[p]->size(); ++i) {
          nets::Model up = model, down = model;
          (*up.parameters()[p])[i] += 1e-6;
          (*down.parameters()[p])[i] -= 1e-6;
          col.push_back((loss_value(up, x, y, prev.prototypes(), target, loss) -
                         loss_value(down, x, y, prev.prototypes(), target, loss)) /
                        2e-6);
        }
        numeric.push_back(std::move(col));
      }
      worst = std::max(worst, testing::relative_error(analytic, numeric));
      ++checks;
    }
  }
  return {worst < 1e-4, std::to_string(checks) + " loss/model pairs, max relative error " + fmt("%.2e", worst)};
}

// 2 ---------------------------------------------------------------------------

Outcome t2pl_oracle() {
  std::mt19937_64 g(7);
  int agree = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t k = 2 + g() % 4;
    const std::size_t n = 4 * k + g() % (201 - 4 * k);
    const double r_top = std::uniform_real_distribution<double>(1.0, 4.0)(g);
    const double r_prime = std::uniform_real_distribution<double>(r_top, static_cast<double>(n) / k)(g);
    const auto view = testing::random_view(n, k, 1 + g() % 8, trial % 3 == 0, g);
    const labeler::LabelerConfig cfg{r_top, r_prime};
    const auto top = labeler::select_top_confident(view, cfg);
    const auto anchors = labeler::select_top_similar(view, labeler::build_centroids(view, top), cfg);
    const auto got = labeler::knn_assign(view, anchors, cfg);
    agree += got == testing::t2pl_oracle(testing::rows_of(view.features), testing::rows_of(view.probabilities),
                                         r_top, r_prime);
  }
  return {agree == 100, std::to_string(agree) + "/100 instances equal the brute-force labels"};
}

// 3 ---------------------------------------------------------------------------

Outcome metric_definition() {
  const auto r = protocol::compute_metrics({{.9, .5, .4}, {.8, .7, .5}, {.7, .6, .8}});
  const bool ok = r.tdg[2] && *r.tdg[2] == 0.45 && r.tda[1] && *r.tda[1] == 0.7 && r.fa[0] && *r.fa[0] == 0.75;
  return {ok, "TDG[2] = " + fmt("%.17g", r.tdg[2].value_or(NAN)) + ", TDA[1] = " + fmt("%.17g", r.tda[1].value_or(NAN)) +
                  ", FA[0] = " + fmt("%.17g", r.fa[0].value_or(NAN))};
}

// 4 ---------------------------------------------------------------------------

Outcome memory_invariants(const protocol::RunResult& run, std::size_t capacity) {
  bool ok = true;
  std::string sizes;
  for (std::size_t s = 0; s < run.stages.size(); ++s) {
    const auto& st = run.stages[s];
    const std::size_t quota = capacity / (s + 1);
    ok = ok && st.memory_size <= capacity && st.bucket_sizes.size() == s + 1;
    for (auto b : st.bucket_sizes) ok = ok && b <= quota;
    sizes += (s ? "," : "") + std::to_string(st.memory_size);
  }
  std::mt19937_64 g(3);
  int agree = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 20 + g() % 180;
    const Tensor f = testing::random_matrix(n, 1 + g() % 8, g);
    std::vector<int> y(n);
    for (auto& v : y) v = static_cast<int>(g() % 5);
    const std::size_t quota = 1 + g() % n;
    agree += memory::select_exemplars(f, y, quota) == testing::selection_oracle(f, y, quota);
  }
  ok = ok && agree == 50;
  return {ok, "memory sizes per stage " + sizes + " (cap " + std::to_string(capacity) + "), selection " +
                  std::to_string(agree) + "/50 equal the exhaustive sort"};
}

// 5 ---------------------------------------------------------------------------

Outcome randmix_structure() {
  using namespace randmix;
  nets::ModelSpec spec;
  spec.input_dim = 2;
  spec.extractor_widths = {16};
  spec.bottleneck_widths = {8, 6};
  spec.num_classes = 3;
  Rng init = make_stream(1, "init");
  const auto model = nets::Model::initialize(spec, init);
  std::mt19937_64 g(5);
  Rng rng = make_stream(2022, "randmix");

  bool strict = true;
  const Tensor extreme = Tensor::matrix(4, 2, {1e6, -1e6, 0.0, 0.0, -700.0, 700.0, 3.0, -2.0});
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<RandAutoencoder> aes;
    for (int i = 0; i < 4; ++i) aes.push_back(draw_dense(2, rng));
    const Tensor m = mix(aes, draw_mix_weights(4, rng), extreme);
    for (double v : m.values()) strict = strict && v > 0.0 && v < 1.0;
  }

  bool monotone = true;
  const Tensor x = testing::random_matrix(300, 2, g, 3.0);
  std::size_t last = x.rows() + 1;
  for (double r = 0.0; r <= 1.0 + 1e-9; r += 0.05) {
    const auto mask = gate(model, x, r);
    const auto count = static_cast<std::size_t>(std::count(mask.begin(), mask.end(), true));
    monotone = monotone && count <= last;
    last = count;
  }

  double collapse = 0.0;
  std::vector<RandAutoencoder> two{draw_dense(2, rng), draw_dense(2, rng)};
  const Tensor m0 = mix(two, {1.3, 0.0, 0.0}, x);
  for (std::size_t i = 0; i < x.size(); ++i) collapse = std::max(collapse, std::abs(m0[i] - testing::sigmoid(x[i])));

  const std::vector<int> y(300, 0);
  const auto a = augment_batch(model, x, y, RandMixConfig{}, StageKind::source, std::nullopt, rng);
  const auto b = augment_batch(model, x, y, RandMixConfig{}, StageKind::source, std::nullopt, rng);
  double differ = 0.0;
  for (std::size_t i = 0; i < a.inputs.size(); ++i) differ = std::max(differ, std::abs(a.inputs[i] - b.inputs[i]));

  const bool ok = strict && monotone && collapse <= 1e-12 && differ > 1e-6;
  return {ok, std::string("strictly inside (0,1): ") + (strict ? "yes" : "no") + ", gate monotone: " +
                  (monotone ? "yes" : "no") + ", w0-only deviation " + fmt("%.1e", collapse) +
                  ", consecutive batches differ by " + fmt("%.3f", differ)};
}

// 6-10 share the long runs ------------------------------------------------------

std::string matrix_file(const protocol::RunConfig& cfg, const protocol::RunResult& r, const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("cdsl_acceptance_" + name);
  fs::remove_all(dir);
  protocol::write_results(dir, cfg, r);
  std::ifstream in(dir / "matrix.csv", std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  fs::remove_all(dir);
  return ss.str();
}

Outcome loss_structure(const std::vector<const protocol::RunResult*>& runs) {
  std::size_t rows = 0, bad = 0, source_dis = 0;
  double worst = 0.0;
  for (const auto* r : runs) {
    for (const auto& row : r->train_log) {
      const auto& l = row.loss;
      ++rows;
      const double gap = std::abs(l.total - (l.ce + l.pca + l.dis));
      worst = std::max(worst, gap);
      if (l.ce < 0 || l.pca < 0 || l.dis < 0 || gap > 1e-12) ++bad;
      if (row.stage == 0 && l.dis != 0.0) ++source_dis;
    }
  }
  return {bad == 0 && source_dis == 0 && rows > 0,
          std::to_string(rows) + " logged steps, " + std::to_string(bad) + " violations, max |total - sum| " +
              fmt("%.1e", worst) + ", nonzero source dis " + std::to_string(source_dis)};
}

}  // namespace

int main() {
  struct Line {
    int id;
    const char* name;
    Outcome outcome;
    double secs;
  };
  std::vector<Line> lines;
  auto timed = [&](int id, const char* name, const std::function<Outcome()>& f) {
    const auto t0 = Clock::now();
    Outcome o;
    try {
      o = f();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    lines.push_back({id, name, o, seconds_since(t0)});
  };

  timed(1, "gradient correctness", gradient_correctness);
  timed(2, "T2PL oracle equivalence", t2pl_oracle);
  timed(3, "metric definition", metric_definition);
  timed(5, "RandMix structure", randmix_structure);

  // Long runs: full and no_randmix rot5 for each seed, a repeat of seed 2022,
  // and the stationary pair.
  protocol::RunConfig base;
  base.probe_labelers = true;
  const std::size_t seeds = std::size(cli::kSweepSeeds);
  std::vector<protocol::RunConfig> cfgs;
  for (auto s : cli::kSweepSeeds) {
    base.seed = s;
    cfgs.push_back(base);
  }
  for (auto s : cli::kSweepSeeds) {
    base.seed = s;
    cfgs.push_back(protocol::apply_variant(base, protocol::Variant::no_randmix));
  }
  base.seed = 2022;
  cfgs.push_back(base);  // repeat for determinism
  protocol::RunConfig removed = base;
  removed.probe_labelers = false;
  removed.disable_memory = removed.disable_distill = removed.pca_source_form = true;
  cfgs.push_back(removed);
  auto pair_seq = protocol::resolve_sequence(base);
  pair_seq.domains.resize(2);

  std::vector<protocol::RunResult> results(cfgs.size());
  std::vector<double> secs(cfgs.size() + 1, 0.0);
  double stationary = NAN;
  std::string run_error;
  try {
    const unsigned jobs = std::max(1u, std::thread::hardware_concurrency());
    cli::run_parallel(cfgs.size() + 1, jobs, [&](std::size_t i) {
      const auto t0 = Clock::now();
      if (i + 1 < cfgs.size()) {
        results[i] = protocol::run_cdsl(cfgs[i]);
      } else if (i + 1 == cfgs.size()) {
        results[i] = protocol::run_cdsl(cfgs[i], pair_seq);
      } else {
        protocol::RunConfig st = base;
        st.probe_labelers = false;
        stationary = protocol::run_stationary(st, pair_seq.domains[0], pair_seq.domains[1]);
      }
      secs[i] = seconds_since(t0);
    });
  } catch (const std::exception& e) {
    run_error = e.what();
  }
  const std::size_t repeat = 2 * seeds;
  const std::size_t pair_run = 2 * seeds + 1;

  auto guarded = [&](int id, const char* name, const std::function<Outcome()>& f) {
    if (!run_error.empty()) {
      lines.push_back({id, name, {false, "run failed: " + run_error}, 0.0});
      return;
    }
    timed(id, name, f);
  };

  guarded(4, "memory invariants", [&] { return memory_invariants(results[0], base.memory_capacity); });

  guarded(6, "determinism", [&] {
    const auto a = matrix_file(cfgs[0], results[0], "a");
    const auto b = matrix_file(cfgs[repeat], results[repeat], "b");
    const double slowest = std::max(secs[0], secs[repeat]);
    return Outcome{a == b && !a.empty() && slowest < 120.0,
                   std::string("matrix.csv ") + (a == b ? "byte-identical" : "differs") + ", slowest run " +
                       fmt("%.1f s", slowest)};
  });

  guarded(7, "RandMix ablation direction", [&] {
    double full = 0, ablated = 0;
    std::string per;
    for (std::size_t s = 0; s < seeds; ++s) {
      full += *results[s].metrics.avg_tdg / seeds;
      ablated += *results[seeds + s].metrics.avg_tdg / seeds;
      per += (s ? "; " : "") + std::to_string(cli::kSweepSeeds[s]) + ": " +
             fmt("%.4f", *results[s].metrics.avg_tdg) + " vs " + fmt("%.4f", *results[seeds + s].metrics.avg_tdg);
    }
    return Outcome{full > ablated, "mean TDG full " + fmt("%.4f", full) + " > no_randmix " + fmt("%.4f", ablated) +
                                       " (" + per + ")"};
  });

  guarded(8, "T2PL vs softmax labels", [&] {
    double t2pl = 0, soft = 0;
    for (std::size_t s = 0; s < seeds; ++s) {
      const auto& probe = results[s].stages.at(2).probe.value();
      t2pl += probe[0] / seeds;
      soft += probe[1] / seeds;
    }
    return Outcome{t2pl >= soft, "third-domain label accuracy T2PL " + fmt("%.5f", t2pl) + " >= softmax " +
                                     fmt("%.5f", soft)};
  });

  guarded(9, "stationary equivalence", [&] {
    const double direct = results[pair_run].matrix[1][1];
    const double gap = std::abs(stationary - direct);
    return Outcome{gap <= 1e-12, "run_stationary " + fmt("%.6f", stationary) + ", two-domain run " +
                                     fmt("%.6f", direct) + ", |diff| " + fmt("%.1e", gap)};
  });

  guarded(10, "loss structure", [&] {
    std::vector<const protocol::RunResult*> all;
    for (const auto& r : results) all.push_back(&r);
    return loss_structure(all);
  });

  std::sort(lines.begin(), lines.end(), [](const Line& a, const Line& b) { return a.id < b.id; });
  bool all_pass = true;
  for (const auto& l : lines) {
    all_pass = all_pass && l.outcome.pass;
    std::printf("%s [%d] %s: %s (%.1f s)\n", l.outcome.pass ? "PASS" : "FAIL", l.id, l.name, l.outcome.detail.c_str(),
                l.secs);
  }
  double total = 0;
  for (double s : secs) total += s;
  std::printf("long runs: %zu, %.1f s of run time\n", secs.size(), total);
  return all_pass ? 0 : 1;
}
