#include "hgdrive/params.hpp"

#include <cmath>
#include <stdexcept>

namespace hgd {

Tensor ParameterSet::add(const std::string& name, Tensor t) {
  if (!t.defined()) throw ShapeError("ParameterSet::add: undefined tensor for '" + name + "'");
  if (index_.count(name)) throw std::runtime_error("ParameterSet::add: duplicate name '" + name + "'");
  t.mark_param();
  index_[name] = entries_.size();
  entries_.emplace_back(name, t);
  return t;
}

bool ParameterSet::has(const std::string& name) const { return index_.count(name) != 0; }

const Tensor& ParameterSet::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::runtime_error("ParameterSet::get: unknown name '" + name + "'");
  return entries_[it->second].second;
}

std::vector<std::pair<std::string, Tensor>> ParameterSet::entries_with_prefix(
    const std::string& prefix) const {
  std::vector<std::pair<std::string, Tensor>> out;
  for (const auto& [name, t] : entries_) {
    if (name.rfind(prefix, 0) == 0) out.emplace_back(name, t);
  }
  return out;
}

std::int64_t ParameterSet::total_size() const {
  std::int64_t n = 0;
  for (const auto& [name, t] : entries_) n += t.size();
  return n;
}

void ParameterSet::zero_grads() const {
  for (const auto& [name, t] : entries_) t.node->grad.clear();
}

GradientReport grad(const Tensor& loss, const ParameterSet& params) {
  params.zero_grads();
  backward(loss);
  GradientReport report;
  report.grads.reserve(params.entries().size());
  for (const auto& [name, t] : params.entries()) {
    if (t.node->grad.empty()) {
      report.disconnected.push_back(name);
      report.grads.emplace_back(name, Tensor::zeros(t.shape()));
    } else {
      report.grads.emplace_back(name, Tensor::from(t.shape(), t.node->grad));
    }
  }
  return report;
}

Tensor init_uniform(Rng& rng, const Shape& shape, int fan_in) {
  double a = 1.0 / std::sqrt(static_cast<double>(fan_in > 0 ? fan_in : 1));
  std::vector<double> v(static_cast<std::size_t>(numel(shape)));
  for (double& x : v) x = rng.uniform(-a, a);
  return Tensor::from(shape, std::move(v));
}

Tensor init_normal(Rng& rng, const Shape& shape, double stddev) {
  std::vector<double> v(static_cast<std::size_t>(numel(shape)));
  for (double& x : v) x = rng.normal(0.0, stddev);
  return Tensor::from(shape, std::move(v));
}

}  // namespace hgd
