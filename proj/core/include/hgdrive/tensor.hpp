#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace hgd {

using Shape = std::vector<int>;

std::int64_t numel(const Shape& s);
std::string shape_str(const Shape& s);

struct ShapeError : std::runtime_error {
  explicit ShapeError(const std::string& m) : std::runtime_error(m) {}
};

struct NonFiniteError : std::runtime_error {
  explicit NonFiniteError(const std::string& m) : std::runtime_error(m) {}
};

namespace detail {

// One vertex of the reverse-mode graph. Values are written once at
// construction; ops never mutate their inputs. The only sanctioned in-place
// writes are parameter updates between steps (optimizer, checkpoint load).
struct Node {
  Shape shape;
  std::vector<double> values;
  const char* op = "leaf";
  bool is_param = false;   // leaf whose gradient is wanted
  bool needs_grad = false; // param, or depends on one
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this->grad, accumulates into parents' grad buffers.
  std::function<void(Node&)> backprop;
  std::vector<double> grad;
};

std::vector<double>& grad_buf(Node& n);

}  // namespace detail

// Recording switch for the autodiff tape, per thread. Inference paths run
// under NoGradGuard and build no graph.
bool grad_enabled();

struct NoGradGuard {
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

// Dense float64 array plus an optional position in the autodiff graph.
// Cheap to copy: copies share the underlying node.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<detail::Node> n) : node(std::move(n)) {}

  static Tensor from(Shape shape, std::vector<double> values);
  static Tensor zeros(const Shape& shape);
  static Tensor full(const Shape& shape, double v);
  static Tensor scalar(double v);

  bool defined() const { return node != nullptr; }
  const Shape& shape() const;
  int dim(int i) const;
  std::int64_t size() const;

  const std::vector<double>& data() const;
  // For parameter updates and deserialization only; never call on a value
  // that is an input of a live graph you still intend to backprop through.
  std::vector<double>& mutable_data();

  double item() const;
  double at(int i) const;
  double at(int i, int j) const;
  double at(int i, int j, int k) const;

  bool is_param() const { return node && node->is_param; }
  bool needs_grad() const { return node && node->needs_grad; }
  Tensor& mark_param();

  // Same values, detached from the graph (fresh leaf, no gradient).
  Tensor detach() const;

  // Gradient buffer filled by backward(); zeros if never reached.
  std::vector<double> grad() const;

  std::shared_ptr<detail::Node> node;
};

// Builds an op result node; checks every output value is finite and wires the
// backward closure when recording is on and any input needs gradients.
Tensor make_op(const char* op, Shape shape, std::vector<double> values,
               const std::vector<Tensor>& inputs,
               std::function<void(detail::Node&)> backprop);

// Reverse pass from a scalar. Clears then fills .grad on every node that
// participates. Deterministic topological order.
void backward(const Tensor& loss);

}  // namespace hgd
