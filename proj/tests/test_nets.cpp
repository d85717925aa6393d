#include <cmath>
#include <filesystem>
#include <random>

#include "cdsl/nets.hpp"
#include "doctest.h"
#include "support.hpp"

using cdsl::Tensor;
using cdsl::nets::Model;
using cdsl::nets::ModelSpec;

namespace {

ModelSpec small_spec() {
  ModelSpec s;
  s.input_dim = 3;
  s.extractor_widths = {5, 4};
  s.bottleneck_widths = {6, 3};
  s.num_classes = 4;
  return s;
}

std::vector<double> dense(const cdsl::nets::Dense& l, const std::vector<double>& x) {
  std::vector<double> y(l.weight.rows());
  for (std::size_t o = 0; o < y.size(); ++o) {
    y[o] = l.bias[o];
    for (std::size_t i = 0; i < x.size(); ++i) y[o] += l.weight(o, i) * x[i];
  }
  return y;
}

/// Straight-line forward pass for one sample.
std::vector<double> reference_logits(const Model& m, const std::vector<double>& x0) {
  auto x = x0;
  for (const auto& l : m.extractor()) {
    x = dense(l, x);
    for (auto& v : x) v = std::max(0.0, v);
  }
  if (!m.bottleneck().empty()) {
    x = dense(m.bottleneck()[0], x);
    double mean = 0, var = 0;
    for (double v : x) mean += v / x.size();
    for (double v : x) var += (v - mean) * (v - mean) / x.size();
    for (auto& v : x) v = std::max(0.0, (v - mean) / std::sqrt(var + 1e-5));
    x = dense(m.bottleneck()[1], x);
  }
  std::vector<double> z(m.num_classes());
  for (std::size_t k = 0; k < z.size(); ++k) {
    for (std::size_t j = 0; j < x.size(); ++j) z[k] += m.prototypes()(k, j) * x[j];
  }
  return z;
}

Model randomized_model(std::uint64_t seed) {
  cdsl::Rng rng = cdsl::make_stream(seed, "init");
  Model m = Model::initialize(small_spec(), rng);
  // Non-zero biases so their gradients are exercised.
  std::mt19937_64 g(seed);
  std::normal_distribution<double> n(0.0, 0.3);
  for (auto& l : m.extractor()) {
    for (auto& v : l.bias.values()) v = n(g);
  }
  for (auto& l : m.bottleneck()) {
    for (auto& v : l.bias.values()) v = n(g);
  }
  return m;
}

}  // namespace

TEST_CASE("spec validation") {
  ModelSpec s = small_spec();
  CHECK_NOTHROW(s.validate());
  CHECK(s.feature_dim() == 3);
  s.bottleneck_widths = {4};
  CHECK_THROWS_AS(s.validate(), cdsl::Error);
  s.bottleneck_widths = {};
  CHECK(s.feature_dim() == 4);
  s.num_classes = 0;
  CHECK_THROWS_AS(s.validate(), cdsl::Error);
}

TEST_CASE("glorot initialization bounds and zero biases") {
  cdsl::Rng rng = cdsl::make_stream(1, "init");
  Model m = Model::initialize(small_spec(), rng);
  const double bound0 = std::sqrt(6.0 / (3 + 5));
  for (double v : m.extractor()[0].weight.values()) CHECK(std::abs(v) <= bound0);
  for (double v : m.extractor()[0].bias.values()) CHECK(v == 0.0);
  CHECK(m.prototypes().rows() == 4);
  CHECK(m.prototypes().cols() == 3);
  CHECK(m.parameters().size() == m.parameter_names().size());
  CHECK(m.parameter_names().back() == "classifier.weight");
}

TEST_CASE("forward pass matches a straight-line recomputation") {
  const Model m = randomized_model(5);
  std::mt19937_64 rng(9);
  Tensor x = testing::random_matrix(6, 3, rng);
  Tensor z = cdsl::nets::logits(m, x);
  for (std::size_t i = 0; i < 6; ++i) {
    auto row = x.row(i);
    auto ref = reference_logits(m, {row.begin(), row.end()});
    for (std::size_t k = 0; k < 4; ++k) CHECK(z(i, k) == doctest::Approx(ref[k]).epsilon(1e-12));
  }
  Tensor p = cdsl::nets::probabilities(m, x);
  for (std::size_t i = 0; i < 6; ++i) {
    double s = 0;
    for (double v : p.row(i)) s += v;
    CHECK(s == doctest::Approx(1.0).epsilon(1e-14));
  }
}

TEST_CASE("argmax ties go to the smaller class") {
  CHECK(cdsl::nets::argmax_rows(Tensor::matrix(2, 3, {1, 3, 3, 2, 2, 2})) == std::vector<int>{1, 0});
}

TEST_CASE("parameter gradients match central differences") {
  Model m = randomized_model(21);
  std::mt19937_64 rng(4);
  const Tensor x = testing::random_matrix(5, 3, rng);
  const Tensor w = testing::random_matrix(5, 4, rng);

  auto objective = [&](const Model& mm) {
    Tensor z = cdsl::nets::logits(mm, x);
    double s = 0;
    for (std::size_t i = 0; i < z.size(); ++i) s += z[i] * w[i];
    return s;
  };

  cdsl::diffcore::Tape tape;
  auto vars = m.forward(tape, tape.constant(x), true);
  auto out = tape.sum(tape.mul(vars.logits, tape.constant(w)));
  CHECK(tape.value(out).item() == doctest::Approx(objective(m)).epsilon(1e-12));
  tape.backward(out);
  m.collect_gradients(tape, vars);

  std::vector<std::vector<double>> analytic, numeric;
  auto params = m.parameters();
  for (std::size_t p = 0; p < params.size(); ++p) {
    analytic.emplace_back(params[p]->grad().begin(), params[p]->grad().end());
    std::vector<double> g;
    for (std::size_t i = 0; i < params[p]->size(); ++i) {
      Model up = m, down = m;
      (*up.parameters()[p])[i] += 1e-6;
      (*down.parameters()[p])[i] -= 1e-6;
      g.push_back((objective(up) - objective(down)) / 2e-6);
    }
    numeric.push_back(g);
  }
  CHECK(testing::relative_error(analytic, numeric) < 1e-6);
}

TEST_CASE("checkpoints round-trip bit for bit") {
  const Model m = randomized_model(8);
  const auto path = std::filesystem::temp_directory_path() / "cdsl_ckpt_test.json";
  cdsl::nets::save_checkpoint(m, path);
  const Model back = cdsl::nets::load_checkpoint(path);
  CHECK(back == m);
  CHECK(cdsl::nets::parameter_hash(back) == cdsl::nets::parameter_hash(m));
  std::filesystem::remove(path);
  CHECK_THROWS_AS(cdsl::nets::checkpoint_from_json("{\"format\":\"other\"}"), cdsl::Error);
}

TEST_CASE("model pair snapshot is independent of later updates") {
  cdsl::nets::ModelPair pair(randomized_model(2));
  CHECK_FALSE(pair.has_previous());
  CHECK_THROWS_AS(pair.previous(), cdsl::Error);
  pair.refresh_previous();
  const auto before = cdsl::nets::parameter_hash(pair.previous());
  pair.current().prototypes()[0] += 1.0;
  CHECK(cdsl::nets::parameter_hash(pair.previous()) == before);
  CHECK(cdsl::nets::parameter_hash(pair.current()) != before);
}

TEST_CASE("inference does not mutate parameters") {
  const Model m = randomized_model(3);
  const auto h = cdsl::nets::parameter_hash(m);
  std::mt19937_64 rng(1);
  const Tensor x = testing::random_matrix(10, 3, rng);
  (void)cdsl::nets::accuracy(m, x, std::vector<int>(10, 0));
  CHECK(cdsl::nets::parameter_hash(m) == h);
}
