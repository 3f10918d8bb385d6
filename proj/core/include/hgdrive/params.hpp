#pragma once

#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "hgdrive/rng.hpp"
#include "hgdrive/tensor.hpp"

namespace hgd {

// Ordered registry of named trainable tensors. Registration order is the
// serialization order, so it must be deterministic across runs.
class ParameterSet {
 public:
  // Marks the tensor as a parameter leaf and registers it. Names are unique.
  Tensor add(const std::string& name, Tensor t);
  bool has(const std::string& name) const;
  const Tensor& get(const std::string& name) const;
  const std::vector<std::pair<std::string, Tensor>>& entries() const { return entries_; }
  std::vector<std::pair<std::string, Tensor>> entries_with_prefix(const std::string& prefix) const;
  std::int64_t total_size() const;
  void zero_grads() const;

 private:
  std::vector<std::pair<std::string, Tensor>> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

struct GradientReport {
  // One entry per parameter, in registry order.
  std::vector<std::pair<std::string, Tensor>> grads;
  // Parameters the loss graph never reached; their gradients above are zeros.
  std::vector<std::string> disconnected;
};

// Runs the reverse pass from a scalar loss and collects per-parameter
// gradients.
GradientReport grad(const Tensor& loss, const ParameterSet& params);

// Uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) weight initialization.
Tensor init_uniform(Rng& rng, const Shape& shape, int fan_in);
Tensor init_normal(Rng& rng, const Shape& shape, double stddev);

}  // namespace hgd
