#include "cdsl/memory.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>
#include <string>

namespace cdsl::memory {

ExemplarMemory::ExemplarMemory(std::size_t capacity) : capacity_(capacity) {
  if (capacity_ == 0) throw Error("memory: capacity must be positive");
}

std::size_t ExemplarMemory::size() const {
  std::size_t n = 0;
  for (const auto& [id, bucket] : buckets_) n += bucket.size();
  return n;
}

std::vector<Exemplar> ExemplarMemory::all() const {
  std::vector<Exemplar> out;
  for (const auto& [id, bucket] : buckets_) out.insert(out.end(), bucket.begin(), bucket.end());
  return out;
}

void ExemplarMemory::rebalance(std::size_t t) {
  if (t == 0) throw Error("memory: rebalance needs t >= 1");
  const std::size_t quota = capacity_ / t;
  for (auto& [id, bucket] : buckets_) {
    std::stable_sort(bucket.begin(), bucket.end(),
                     [](const Exemplar& a, const Exemplar& b) { return a.distance < b.distance; });
    if (bucket.size() > quota) bucket.resize(quota);
  }
}

std::vector<std::size_t> select_exemplars(const Tensor& features, const std::vector<int>& labels,
                                          std::size_t quota, std::vector<double>* distances) {
  const std::size_t n = features.rows();
  const std::size_t d = features.cols();
  if (labels.size() != n) throw Error("memory: label count does not match samples");

  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < n; ++i) by_class[labels[i]].push_back(i);

  std::vector<double> dist(n, 0.0);
  std::vector<std::vector<std::size_t>> queues;
  for (auto& [label, members] : by_class) {
    std::vector<double> centroid(d, 0.0);
    for (auto i : members) {
      auto f = features.row(i);
      for (std::size_t j = 0; j < d; ++j) centroid[j] += f[j];
    }
    for (auto& v : centroid) v /= static_cast<double>(members.size());
    for (auto i : members) {
      auto f = features.row(i);
      double s = 0.0;
      for (std::size_t j = 0; j < d; ++j) s += (f[j] - centroid[j]) * (f[j] - centroid[j]);
      dist[i] = std::sqrt(s);
    }
    std::stable_sort(members.begin(), members.end(), [&](std::size_t a, std::size_t b) { return dist[a] < dist[b]; });
    queues.push_back(members);
  }

  std::vector<std::size_t> chosen;
  std::vector<std::size_t> cursor(queues.size(), 0);
  bool progressed = true;
  while (chosen.size() < quota && progressed) {
    progressed = false;
    for (std::size_t q = 0; q < queues.size() && chosen.size() < quota; ++q) {
      if (cursor[q] < queues[q].size()) {
        chosen.push_back(queues[q][cursor[q]++]);
        progressed = true;
      }
    }
  }
  if (distances) *distances = std::move(dist);
  return chosen;
}

void ExemplarMemory::admit_domain(const nets::Model& model, const Tensor& inputs, const std::vector<int>& labels,
                                  int domain_id) {
  const std::size_t t = buckets_.size() + (buckets_.count(domain_id) ? 0 : 1);
  const std::size_t quota = capacity_ / t;
  if (quota == 0) {
    throw Error("memory: capacity " + std::to_string(capacity_) + " cannot hold " + std::to_string(t) + " domains");
  }
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= model.num_classes()) throw Error("memory: label out of range");
  }
  const Tensor feats = nets::features(model, inputs);
  std::vector<double> dist;
  const auto chosen = select_exemplars(feats, labels, quota, &dist);
  auto& bucket = buckets_[domain_id];
  bucket.clear();
  for (auto i : chosen) {
    auto row = inputs.row(i);
    bucket.push_back(Exemplar{{row.begin(), row.end()}, labels[i], domain_id, dist[i]});
  }
  rebalance(t);
}

std::vector<Exemplar> ExemplarMemory::replay_batch(std::size_t n, Rng& rng) const {
  const auto pool = all();
  std::vector<Exemplar> out;
  if (pool.empty() || n == 0) return out;
  out.reserve(n);
  if (n <= pool.size()) {
    std::vector<std::size_t> idx(pool.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    // Partial Fisher-Yates.
    for (std::size_t i = 0; i < n; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, idx.size() - 1);
      std::swap(idx[i], idx[pick(rng)]);
      out.push_back(pool[idx[i]]);
    }
  } else {
    std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
    for (std::size_t i = 0; i < n; ++i) out.push_back(pool[pick(rng)]);
  }
  return out;
}

void ExemplarMemory::dump_csv(std::ostream& out) const {
  out << "domain_id,label,distance,input...\n";
  char buf[40];
  for (const auto& [id, bucket] : buckets_) {
    for (const auto& e : bucket) {
      std::snprintf(buf, sizeof buf, "%.17g", e.distance);
      out << e.domain_id << ',' << e.label << ',' << buf;
      for (double v : e.input) {
        std::snprintf(buf, sizeof buf, "%.17g", v);
        out << ',' << buf;
      }
      out << '\n';
    }
  }
}

ExemplarMemory ExemplarMemory::load_csv(std::istream& in, std::size_t capacity) {
  ExemplarMemory mem(capacity);
  std::string line;
  std::getline(in, line);  // header
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    Exemplar e;
    std::getline(ss, cell, ',');
    e.domain_id = std::stoi(cell);
    std::getline(ss, cell, ',');
    e.label = std::stoi(cell);
    std::getline(ss, cell, ',');
    e.distance = std::stod(cell);
    while (std::getline(ss, cell, ',')) e.input.push_back(std::stod(cell));
    mem.buckets_[e.domain_id].push_back(std::move(e));
  }
  if (mem.size() > capacity) throw Error("memory csv holds more exemplars than the capacity");
  return mem;
}

}  // namespace cdsl::memory
