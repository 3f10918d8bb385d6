#include "hgdrive/tensor.hpp"

#include <cmath>
#include <sstream>
#include <unordered_set>

namespace hgd {

std::int64_t numel(const Shape& s) {
  std::int64_t n = 1;
  for (int d : s) n *= d;
  return n;
}

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) os << ',';
    os << s[i];
  }
  os << ')';
  return os.str();
}

namespace {

thread_local bool g_grad_enabled = true;

void check_shape(const Shape& s, const char* who) {
  for (int d : s) {
    if (d <= 0) throw ShapeError(std::string(who) + ": non-positive extent in " + shape_str(s));
  }
}

void check_finite(const char* op, const std::vector<double>& v) {
  for (double x : v) {
    if (!std::isfinite(x)) {
      throw NonFiniteError(std::string(op) + ": non-finite value in output");
    }
  }
}

}  // namespace

namespace detail {
std::vector<double>& grad_buf(Node& n) {
  if (n.grad.empty()) n.grad.assign(static_cast<std::size_t>(numel(n.shape)), 0.0);
  return n.grad;
}
}  // namespace detail

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : prev_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev_; }

Tensor Tensor::from(Shape shape, std::vector<double> values) {
  check_shape(shape, "Tensor::from");
  if (numel(shape) != static_cast<std::int64_t>(values.size())) {
    throw ShapeError("Tensor::from: " + std::to_string(values.size()) +
                     " values for shape " + shape_str(shape));
  }
  check_finite("Tensor::from", values);
  auto n = std::make_shared<detail::Node>();
  n->shape = std::move(shape);
  n->values = std::move(values);
  return Tensor(std::move(n));
}

Tensor Tensor::zeros(const Shape& shape) {
  check_shape(shape, "Tensor::zeros");
  auto n = std::make_shared<detail::Node>();
  n->shape = shape;
  n->values.assign(static_cast<std::size_t>(numel(shape)), 0.0);
  return Tensor(std::move(n));
}

Tensor Tensor::full(const Shape& shape, double v) {
  check_shape(shape, "Tensor::full");
  if (!std::isfinite(v)) throw NonFiniteError("Tensor::full: non-finite fill value");
  auto n = std::make_shared<detail::Node>();
  n->shape = shape;
  n->values.assign(static_cast<std::size_t>(numel(shape)), v);
  return Tensor(std::move(n));
}

Tensor Tensor::scalar(double v) { return full({1}, v); }

const Shape& Tensor::shape() const {
  if (!node) throw ShapeError("Tensor: undefined");
  return node->shape;
}

int Tensor::dim(int i) const {
  const Shape& s = shape();
  if (i < 0 || i >= static_cast<int>(s.size())) {
    throw ShapeError("Tensor::dim: axis " + std::to_string(i) + " of " + shape_str(s));
  }
  return s[i];
}

std::int64_t Tensor::size() const { return numel(shape()); }

const std::vector<double>& Tensor::data() const {
  if (!node) throw ShapeError("Tensor: undefined");
  return node->values;
}

std::vector<double>& Tensor::mutable_data() {
  if (!node) throw ShapeError("Tensor: undefined");
  return node->values;
}

double Tensor::item() const {
  if (size() != 1) throw ShapeError("Tensor::item: shape " + shape_str(shape()));
  return data()[0];
}

double Tensor::at(int i) const {
  const Shape& s = shape();
  if (s.size() != 1 || i < 0 || i >= s[0]) {
    throw ShapeError("Tensor::at(i): shape " + shape_str(s));
  }
  return data()[static_cast<std::size_t>(i)];
}

double Tensor::at(int i, int j) const {
  const Shape& s = shape();
  if (s.size() != 2 || i < 0 || i >= s[0] || j < 0 || j >= s[1]) {
    throw ShapeError("Tensor::at(i,j): shape " + shape_str(s));
  }
  return data()[static_cast<std::size_t>(i) * s[1] + j];
}

double Tensor::at(int i, int j, int k) const {
  const Shape& s = shape();
  if (s.size() != 3 || i < 0 || i >= s[0] || j < 0 || j >= s[1] || k < 0 || k >= s[2]) {
    throw ShapeError("Tensor::at(i,j,k): shape " + shape_str(s));
  }
  return data()[(static_cast<std::size_t>(i) * s[1] + j) * s[2] + k];
}

Tensor& Tensor::mark_param() {
  if (!node) throw ShapeError("Tensor::mark_param: undefined");
  node->is_param = true;
  node->needs_grad = true;
  return *this;
}

Tensor Tensor::detach() const { return Tensor::from(shape(), data()); }

std::vector<double> Tensor::grad() const {
  if (!node) throw ShapeError("Tensor::grad: undefined");
  if (node->grad.empty()) return std::vector<double>(static_cast<std::size_t>(size()), 0.0);
  return node->grad;
}

Tensor make_op(const char* op, Shape shape, std::vector<double> values,
               const std::vector<Tensor>& inputs,
               std::function<void(detail::Node&)> backprop) {
  check_shape(shape, op);
  if (numel(shape) != static_cast<std::int64_t>(values.size())) {
    throw ShapeError(std::string(op) + ": internal size mismatch for " + shape_str(shape));
  }
  check_finite(op, values);
  auto n = std::make_shared<detail::Node>();
  n->shape = std::move(shape);
  n->values = std::move(values);
  n->op = op;
  if (g_grad_enabled) {
    bool needs = false;
    for (const Tensor& t : inputs) {
      if (t.needs_grad()) {
        needs = true;
        break;
      }
    }
    if (needs) {
      n->needs_grad = true;
      n->parents.reserve(inputs.size());
      for (const Tensor& t : inputs) n->parents.push_back(t.node);
      n->backprop = std::move(backprop);
    }
  }
  return Tensor(std::move(n));
}

void backward(const Tensor& loss) {
  if (!loss.defined()) throw ShapeError("backward: undefined loss");
  if (loss.size() != 1) throw ShapeError("backward: loss must be scalar, got " + shape_str(loss.shape()));
  if (!loss.node->needs_grad) return;  // nothing depends on parameters

  // Iterative DFS post-order over the needs_grad subgraph.
  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> seen;
  struct Item {
    detail::Node* n;
    std::size_t next;
  };
  std::vector<Item> stack;
  stack.push_back({loss.node.get(), 0});
  seen.insert(loss.node.get());
  while (!stack.empty()) {
    Item& it = stack.back();
    if (it.next < it.n->parents.size()) {
      detail::Node* p = it.n->parents[it.next++].get();
      if (p && p->needs_grad && !seen.count(p)) {
        seen.insert(p);
        stack.push_back({p, 0});
      }
    } else {
      order.push_back(it.n);
      stack.pop_back();
    }
  }

  for (detail::Node* n : order) n->grad.assign(static_cast<std::size_t>(numel(n->shape)), 0.0);
  loss.node->grad[0] = 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node* n = *it;
    if (n->backprop) n->backprop(*n);
  }
}

}  // namespace hgd
