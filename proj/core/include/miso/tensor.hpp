#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "miso/errors.hpp"

namespace miso {

class Rng;
class Tape;

/// Row-major dense shape. Rank 0 ({}) is a scalar with one element.
using Shape = std::vector<std::size_t>;

std::size_t numel_of(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Trailing-aligned broadcast result shape; throws ShapeError if incompatible.
Shape broadcast_shape(const Shape& a, const Shape& b);

/// One vertex of the computation graph. Leaves hold parameters or constants;
/// interior nodes carry the closures that recompute their forward value and
/// scatter gradients back into their inputs.
struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // allocated on first accumulation
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> forward;   // recompute value from inputs
  std::function<void(Node&)> backward;  // push this->grad into inputs' grad
  const char* op = "leaf";
  Tape* owner = nullptr;  // null for leaves and after the tape is cleared
  std::size_t tape_index = 0;

  std::size_t numel() const { return value.size(); }
  bool is_leaf() const { return inputs.empty(); }
  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
  }
};

/// Handle to a graph node. Copies share the node (cheap to pass around);
/// fresh values are produced by ops, never by mutating an op result.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(const Shape& shape, bool requires_grad = false);
  static Tensor full(const Shape& shape, double v, bool requires_grad = false);
  static Tensor from(const Shape& shape, std::vector<double> data, bool requires_grad = false);
  static Tensor scalar(double v);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t numel() const { return node_->value.size(); }
  std::size_t rank() const { return node_->shape.size(); }
  bool requires_grad() const { return node_->requires_grad; }

  std::span<const double> values() const { return node_->value; }
  /// Writable view of a leaf's storage (optimizers, finite differences).
  std::span<double> mutable_values();

  /// The single element of a scalar (numel == 1).
  double item() const;
  double at(std::size_t row, std::size_t col) const;

  /// Copy of the gradient buffer; zeros if nothing has been accumulated.
  std::vector<double> grad() const;
  bool has_grad() const { return !node_->grad.empty(); }
  void zero_grad();

  /// Same values as a fresh leaf with no history and no gradient.
  Tensor detach() const;

  /// Reverse pass from this scalar through its recording tape.
  void backward() const;

  const std::shared_ptr<Node>& node() const { return node_; }
  static Tensor wrap(std::shared_ptr<Node> n) {
    Tensor t;
    t.node_ = std::move(n);
    return t;
  }

 private:
  std::shared_ptr<Node> node_;
};

/// Ordered record of the ops of one forward computation, in topological
/// order. One tape per training context; cleared between steps so no
/// gradient state leaks across steps.
class Tape {
 public:
  Tape() = default;
  ~Tape() { clear(); }
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// RAII activation. Ops record on the innermost active tape of the
  /// current thread; with no active tape they run as pure value code.
  class Scope {
   public:
    explicit Scope(Tape& t);
    ~Scope();
    Scope(const Scope&) = delete;
    Scope& operator=(const Scope&) = delete;

   private:
    Tape* prev_;
  };

  static Tape* active();

  void record(const std::shared_ptr<Node>& n);
  void clear();
  std::size_t size() const { return ops_.size(); }

  /// Re-run every recorded forward closure in recording order.
  /// With unchanged leaf inputs this reproduces values bit-identically.
  void replay();

  const std::vector<std::shared_ptr<Node>>& ops() const { return ops_; }

 private:
  std::vector<std::shared_ptr<Node>> ops_;
};

// ---------------------------------------------------------------------------
// ops
// ---------------------------------------------------------------------------

enum class EwKind { add, sub, mul, div, neg, exp, log, square, sqrt, tanh, sigmoid, leaky_relu, abs };

Tensor add(const Tensor& x, const Tensor& y);
Tensor sub(const Tensor& x, const Tensor& y);
Tensor mul(const Tensor& x, const Tensor& y);
Tensor div(const Tensor& x, const Tensor& y);
Tensor neg(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);
Tensor square(const Tensor& x);
Tensor sqrt(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor leaky_relu(const Tensor& x, double alpha = 0.2);
Tensor abs(const Tensor& x);

/// Clamp values into [lo, hi]; gradient passes where lo <= x <= hi.
Tensor clamp(const Tensor& x, double lo, double hi);

/// Uniform dispatcher over the elementwise kinds (used by the gradient
/// oracle harness). y is required for the binary kinds, ignored otherwise.
Tensor elementwise(EwKind kind, const Tensor& x, const Tensor* y = nullptr, double alpha = 0.2);

Tensor matmul(const Tensor& x, const Tensor& y);

/// Full reductions to a rank-0 scalar.
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

/// Axis reductions; an empty axis list is the identity (copy).
Tensor reduce_sum(const Tensor& x, const std::vector<std::size_t>& axes);
Tensor reduce_mean(const Tensor& x, const std::vector<std::size_t>& axes);

enum class ReduceKind { sum, mean };
Tensor reduce(ReduceKind kind, const Tensor& x, const std::vector<std::size_t>& axes);

/// Column-wise concatenation / slicing of rank-2 tensors.
Tensor concat_cols(const Tensor& a, const Tensor& b);
Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t end);

/// Reverse pass: populates grad on every requires_grad leaf reachable from
/// loss. Accumulation is additive, both across fan-out within one pass and
/// across separate backward calls (callers zero leaf grads between steps).
void backward(const Tensor& loss);

// operator sugar
Tensor operator+(const Tensor& x, const Tensor& y);
Tensor operator-(const Tensor& x, const Tensor& y);
Tensor operator*(const Tensor& x, const Tensor& y);
Tensor operator/(const Tensor& x, const Tensor& y);
Tensor operator-(const Tensor& x);
Tensor operator+(const Tensor& x, double c);
Tensor operator+(double c, const Tensor& x);
Tensor operator-(const Tensor& x, double c);
Tensor operator-(double c, const Tensor& x);
Tensor operator*(const Tensor& x, double c);
Tensor operator*(double c, const Tensor& x);
Tensor operator/(const Tensor& x, double c);
Tensor operator/(double c, const Tensor& x);

Tensor randn(const Shape& shape, Rng& rng, bool requires_grad = false);
Tensor rand_uniform(const Shape& shape, double lo, double hi, Rng& rng, bool requires_grad = false);

}  // namespace miso
