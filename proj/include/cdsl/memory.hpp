#pragma once

#include <cstddef>
#include <iosfwd>
#include <map>
#include <vector>

#include "cdsl/nets.hpp"
#include "cdsl/rng.hpp"
#include "cdsl/tensor.hpp"

namespace cdsl::memory {

struct Exemplar {
  std::vector<double> input;
  int label = 0;
  int domain_id = 0;
  double distance = 0.0;  // to its class centroid in feature space, at admission

  friend bool operator==(const Exemplar&, const Exemplar&) = default;
};

/// Fixed-capacity exemplar store with one bucket per seen domain. After t
/// domains every bucket holds at most floor(capacity / t) exemplars.
class ExemplarMemory {
 public:
  explicit ExemplarMemory(std::size_t capacity = 200);

  std::size_t capacity() const { return capacity_; }
  std::size_t size() const;
  bool empty() const { return size() == 0; }
  std::size_t domain_count() const { return buckets_.size(); }
  const std::map<int, std::vector<Exemplar>>& buckets() const { return buckets_; }
  std::vector<Exemplar> all() const;

  /// Truncates every bucket to floor(capacity / t), keeping the smallest distances.
  void rebalance(std::size_t t);

  /// Stores the new domain's samples nearest their (unweighted) class centroid,
  /// taken round-robin over classes until the quota floor(capacity / t) is
  /// filled, then rebalances. `labels` are true labels or frozen pseudo labels.
  void admit_domain(const nets::Model& model, const Tensor& inputs, const std::vector<int>& labels, int domain_id);

  /// n exemplars uniformly without replacement, or with replacement when n > size().
  std::vector<Exemplar> replay_batch(std::size_t n, Rng& rng) const;

  /// "domain_id,label,distance,x0,x1,..." rows, 17 significant digits.
  void dump_csv(std::ostream& out) const;
  static ExemplarMemory load_csv(std::istream& in, std::size_t capacity);

  friend bool operator==(const ExemplarMemory&, const ExemplarMemory&) = default;

 private:
  std::size_t capacity_;
  std::map<int, std::vector<Exemplar>> buckets_;
};

/// Indices chosen by admit_domain for the given features and labels, in
/// selection order. Exposed for testing and diagnostics.
std::vector<std::size_t> select_exemplars(const Tensor& features, const std::vector<int>& labels,
                                          std::size_t quota, std::vector<double>* distances = nullptr);

}  // namespace cdsl::memory
