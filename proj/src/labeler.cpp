#include "cdsl/labeler.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>

namespace cdsl::labeler {

std::string_view to_string(Method m) {
  switch (m) {
    case Method::t2pl: return "t2pl";
    case Method::softmax: return "softmax";
    case Method::shot_style: return "shot_style";
    case Method::ground_truth: return "ground_truth";
  }
  return "unknown";
}

Method parse_method(std::string_view name) {
  if (name == "t2pl") return Method::t2pl;
  if (name == "softmax") return Method::softmax;
  if (name == "shot_style") return Method::shot_style;
  throw Error("unknown labeler '" + std::string(name) + "' (t2pl, softmax, shot_style)");
}

void LabelerConfig::validate() const {
  if (!(r_top > 0.0)) throw Error("labeler: r_top must be positive");
  if (!(r_top_prime > 0.0)) throw Error("labeler: r_top_prime must be positive");
  if (r_top_prime < r_top) throw Error("labeler: r_top_prime must be >= r_top");
}

double PseudoLabelSet::accuracy(const std::vector<int>& truth) const {
  if (truth.size() != labels.size()) throw Error("pseudo-label accuracy: size mismatch");
  if (labels.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) hits += labels[i] == truth[i];
  return static_cast<double>(hits) / static_cast<double>(labels.size());
}

DomainView DomainView::of(const nets::Model& model, const Tensor& inputs) {
  DomainView v;
  v.features = nets::features(model, inputs);
  diffcore::Tape tape;
  auto z = tape.matmul_nt(tape.constant(v.features), tape.constant(model.prototypes()));
  v.probabilities = tape.value(tape.softmax_rows(z));
  return v;
}

std::size_t top_list_size(std::size_t n, std::size_t k, double ratio) {
  if (n < k) {
    throw Error("labeler: domain has " + std::to_string(n) + " samples, needs at least K = " + std::to_string(k));
  }
  const auto size = static_cast<std::size_t>(std::floor(static_cast<double>(n) / (ratio * static_cast<double>(k))));
  return std::max<std::size_t>(size, 1);
}

std::size_t neighbour_count(std::size_t n, std::size_t k, double r_top_prime) {
  const auto kappa =
      static_cast<std::size_t>(std::floor(static_cast<double>(n) / (r_top_prime * static_cast<double>(k))));
  if (kappa == 0) {
    throw Error("labeler: kNN neighbour count floor(N / (r_top_prime * K)) is 0 for N = " + std::to_string(n) +
                ", K = " + std::to_string(k) + "; lower r_top_prime to at most " +
                std::to_string(static_cast<double>(n) / static_cast<double>(k)));
  }
  return kappa;
}

std::vector<std::size_t> top_indices(std::span<const double> scores, std::size_t count) {
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  count = std::min(count, idx.size());
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(count), idx.end(),
                    [&](std::size_t a, std::size_t b) { return scores[a] > scores[b] || (scores[a] == scores[b] && a < b); });
  idx.resize(count);
  return idx;
}

double cosine(std::span<const double> a, std::span<const double> b) {
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

TopSet select_top_confident(const DomainView& view, const LabelerConfig& cfg) {
  cfg.validate();
  const std::size_t n = view.size();
  const std::size_t k = view.num_classes();
  const std::size_t m = top_list_size(n, k, cfg.r_top);
  TopSet top;
  std::vector<double> column(n);
  std::vector<bool> in_f(n, false);
  for (std::size_t c = 0; c < k; ++c) {
    for (std::size_t i = 0; i < n; ++i) column[i] = view.probabilities(i, c);
    top.per_class.push_back(top_indices(column, m));
    for (auto i : top.per_class.back()) in_f[i] = true;
  }
  for (std::size_t i = 0; i < n; ++i)
    if (in_f[i]) top.members.push_back(i);
  return top;
}

Tensor build_centroids(const DomainView& view, const TopSet& top) {
  const std::size_t k = view.num_classes();
  const std::size_t d = view.features.cols();
  if (top.members.empty()) throw Error("build_centroids: empty top set");
  Tensor centroids = Tensor::zeros(k, d);
  for (std::size_t c = 0; c < k; ++c) {
    double total = 0.0;
    auto p = centroids.row(c);
    for (auto i : top.members) {
      const double w = view.probabilities(i, c);
      total += w;
      auto f = view.features.row(i);
      for (std::size_t j = 0; j < d; ++j) p[j] += w * f[j];
    }
    if (!(total > 0.0)) throw Error("build_centroids: zero total weight for class " + std::to_string(c));
    for (auto& v : p) v /= total;
  }
  return centroids;
}

std::vector<LabeledPoint> select_top_similar(const DomainView& view, const Tensor& centroids,
                                             const LabelerConfig& cfg) {
  cfg.validate();
  const std::size_t n = view.size();
  const std::size_t k = centroids.rows();
  if (!centroids.all_finite()) throw Error("select_top_similar: non-finite centroid");
  const std::size_t m = top_list_size(n, k, cfg.r_top);
  std::vector<LabeledPoint> anchors;
  std::vector<double> sim(n);
  for (std::size_t c = 0; c < k; ++c) {
    for (std::size_t i = 0; i < n; ++i) sim[i] = cosine(view.features.row(i), centroids.row(c));
    for (auto i : top_indices(sim, m)) anchors.push_back({i, static_cast<int>(c)});
  }
  return anchors;
}

std::vector<int> knn_assign(const DomainView& view, const std::vector<LabeledPoint>& anchors,
                            const LabelerConfig& cfg) {
  cfg.validate();
  const std::size_t n = view.size();
  const std::size_t k = view.num_classes();
  if (anchors.empty()) throw Error("knn_assign: no labeled anchors");
  const std::size_t kappa = std::min(neighbour_count(n, k, cfg.r_top_prime), anchors.size());
  const std::size_t d = view.features.cols();

  std::vector<int> labels(n);
  std::vector<double> dist(anchors.size());
  std::vector<std::size_t> order(anchors.size());
  std::vector<std::size_t> votes(k);
  std::vector<double> cumulative(k);
  for (std::size_t q = 0; q < n; ++q) {
    auto fq = view.features.row(q);
    for (std::size_t a = 0; a < anchors.size(); ++a) {
      auto fa = view.features.row(anchors[a].index);
      double s = 0.0;
      for (std::size_t j = 0; j < d; ++j) s += (fq[j] - fa[j]) * (fq[j] - fa[j]);
      dist[a] = std::sqrt(s);
    }
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(kappa), order.end(),
                      [&](std::size_t x, std::size_t y) {
                        if (dist[x] != dist[y]) return dist[x] < dist[y];
                        if (anchors[x].index != anchors[y].index) return anchors[x].index < anchors[y].index;
                        return anchors[x].label < anchors[y].label;
                      });
    std::fill(votes.begin(), votes.end(), 0);
    std::fill(cumulative.begin(), cumulative.end(), 0.0);
    for (std::size_t t = 0; t < kappa; ++t) {
      const auto& a = anchors[order[t]];
      ++votes[static_cast<std::size_t>(a.label)];
      cumulative[static_cast<std::size_t>(a.label)] += dist[order[t]];
    }
    std::size_t best = 0;
    for (std::size_t c = 1; c < k; ++c) {
      if (votes[c] > votes[best] || (votes[c] == votes[best] && cumulative[c] < cumulative[best])) best = c;
    }
    labels[q] = static_cast<int>(best);
  }
  return labels;
}

PseudoLabelSet t2pl(const nets::Model& model, const Tensor& inputs, const LabelerConfig& cfg) {
  const auto view = DomainView::of(model, inputs);
  const auto top = select_top_confident(view, cfg);
  const auto centroids = build_centroids(view, top);
  const auto anchors = select_top_similar(view, centroids, cfg);
  return PseudoLabelSet{knn_assign(view, anchors, cfg), Method::t2pl, 0};
}

PseudoLabelSet softmax_labels(const nets::Model& model, const Tensor& inputs) {
  return PseudoLabelSet{nets::argmax_rows(nets::probabilities(model, inputs)), Method::softmax, 0};
}

namespace {

std::vector<int> nearest_by_cosine(const Tensor& features, const Tensor& centroids) {
  std::vector<int> out(features.rows());
  for (std::size_t i = 0; i < features.rows(); ++i) {
    std::size_t best = 0;
    double best_sim = cosine(features.row(i), centroids.row(0));
    for (std::size_t c = 1; c < centroids.rows(); ++c) {
      const double s = cosine(features.row(i), centroids.row(c));
      if (s > best_sim) {
        best_sim = s;
        best = c;
      }
    }
    out[i] = static_cast<int>(best);
  }
  return out;
}

}  // namespace

PseudoLabelSet shot_style_labels(const nets::Model& model, const Tensor& inputs) {
  const auto view = DomainView::of(model, inputs);
  const std::size_t n = view.size();
  const std::size_t k = view.num_classes();
  const std::size_t d = view.features.cols();

  TopSet all;
  all.members.resize(n);
  std::iota(all.members.begin(), all.members.end(), std::size_t{0});
  Tensor centroids = build_centroids(view, all);
  auto labels = nearest_by_cosine(view.features, centroids);

  // One refinement round with hard assignments; empty classes keep their centroid.
  Tensor refined = centroids;
  for (std::size_t c = 0; c < k; ++c) {
    std::vector<double> sum(d, 0.0);
    std::size_t count = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (labels[i] != static_cast<int>(c)) continue;
      auto f = view.features.row(i);
      for (std::size_t j = 0; j < d; ++j) sum[j] += f[j];
      ++count;
    }
    if (count == 0) continue;
    auto p = refined.row(c);
    for (std::size_t j = 0; j < d; ++j) p[j] = sum[j] / static_cast<double>(count);
  }
  return PseudoLabelSet{nearest_by_cosine(view.features, refined), Method::shot_style, 0};
}

PseudoLabelSet label(const nets::Model& model, const Tensor& inputs, const LabelerConfig& cfg, int stage) {
  PseudoLabelSet out;
  switch (cfg.method) {
    case Method::t2pl: out = t2pl(model, inputs, cfg); break;
    case Method::softmax: out = softmax_labels(model, inputs); break;
    case Method::shot_style: out = shot_style_labels(model, inputs); break;
    case Method::ground_truth: throw Error("ground_truth is not a pseudo labeler");
  }
  out.stage = stage;
  return out;
}

void write_csv(const PseudoLabelSet& set, std::ostream& out) {
  out << "sample_index,label,method,stage\n";
  for (std::size_t i = 0; i < set.labels.size(); ++i) {
    out << i << ',' << set.labels[i] << ',' << to_string(set.method) << ',' << set.stage << '\n';
  }
}

}  // namespace cdsl::labeler
