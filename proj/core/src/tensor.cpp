#include "miso/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "miso/rng.hpp"

namespace miso {

namespace {

thread_local Tape* g_active_tape = nullptr;

void check_finite(const Node& n, const char* op) {
  for (std::size_t i = 0; i < n.value.size(); ++i) {
    if (!std::isfinite(n.value[i])) {
      std::ostringstream os;
      os << "non-finite value in forward result of op '" << op << "' at flat index " << i;
      throw NonFiniteError(os.str());
    }
  }
}

void validate_shape(const Shape& shape) {
  for (const std::size_t d : shape) {
    if (d == 0) throw ShapeError("tensor dimensions must be positive, got " + shape_str(shape));
  }
}

// Broadcast plan: output dims plus per-dim element strides into each input
// (stride 0 where the input is broadcast along that dim).
struct Bcast {
  Shape out;
  std::size_t n = 0;
  bool trivial = false;  // identical shapes, flat loop
  std::vector<std::size_t> dims, sa, sb;
};

std::vector<std::size_t> row_major_strides(const Shape& s) {
  std::vector<std::size_t> st(s.size());
  std::size_t acc = 1;
  for (std::size_t d = s.size(); d-- > 0;) {
    st[d] = acc;
    acc *= s[d];
  }
  return st;
}

Bcast plan_bcast(const Shape& a, const Shape& b) {
  Bcast p;
  p.out = broadcast_shape(a, b);
  p.n = numel_of(p.out);
  if (a == b) {
    p.trivial = true;
    return p;
  }
  const std::size_t rank = p.out.size();
  p.dims = p.out;
  p.sa.assign(rank, 0);
  p.sb.assign(rank, 0);
  const auto astr = row_major_strides(a);
  const auto bstr = row_major_strides(b);
  for (std::size_t d = 0; d < rank; ++d) {
    const std::size_t off_a = rank - a.size();
    const std::size_t off_b = rank - b.size();
    if (d >= off_a && a[d - off_a] != 1) p.sa[d] = astr[d - off_a];
    if (d >= off_b && b[d - off_b] != 1) p.sb[d] = bstr[d - off_b];
  }
  return p;
}

// f(out_index, a_index, b_index) over the broadcast iteration space.
template <class F>
void bcast_for_each(const Bcast& p, F&& f) {
  if (p.trivial) {
    for (std::size_t i = 0; i < p.n; ++i) f(i, i, i);
    return;
  }
  const std::size_t rank = p.dims.size();
  std::vector<std::size_t> c(rank, 0);
  std::size_t ia = 0, ib = 0;
  for (std::size_t io = 0;;) {
    f(io, ia, ib);
    if (++io == p.n) break;
    for (std::size_t d = rank; d-- > 0;) {
      ++c[d];
      ia += p.sa[d];
      ib += p.sb[d];
      if (c[d] < p.dims[d]) break;
      c[d] = 0;
      ia -= p.sa[d] * p.dims[d];
      ib -= p.sb[d] * p.dims[d];
    }
  }
}

// f(in_index, out_index) where out strides are 0 on reduced dims.
template <class F>
void map_for_each(const Shape& dims, const std::vector<std::size_t>& ostrides, F&& f) {
  const std::size_t n = numel_of(dims);
  const std::size_t rank = dims.size();
  std::vector<std::size_t> c(rank, 0);
  std::size_t io = 0;
  for (std::size_t ii = 0;;) {
    f(ii, io);
    if (++ii == n) break;
    for (std::size_t d = rank; d-- > 0;) {
      ++c[d];
      io += ostrides[d];
      if (c[d] < dims[d]) break;
      c[d] = 0;
      io -= ostrides[d] * dims[d];
    }
  }
}

Tensor make_op(const char* name, Shape out_shape, std::vector<std::shared_ptr<Node>> inputs,
               std::function<void(Node&)> fwd, std::function<void(Node&)> bwd) {
  auto n = std::make_shared<Node>();
  n->op = name;
  n->shape = std::move(out_shape);
  n->value.resize(numel_of(n->shape));
  n->inputs = std::move(inputs);
  n->forward = [name, body = std::move(fwd)](Node& self) {
    body(self);
    check_finite(self, name);
  };
  n->forward(*n);
  if (Tape* t = Tape::active()) {
    for (const auto& in : n->inputs) n->requires_grad = n->requires_grad || in->requires_grad;
    n->backward = std::move(bwd);
    t->record(n);
  }
  return Tensor::wrap(std::move(n));
}

template <class FV, class DX, class DY>
Tensor binary_op(const char* name, const Tensor& x, const Tensor& y, FV fv, DX dx, DY dy) {
  if (!x.defined() || !y.defined()) throw GraphError("binary op on undefined tensor");
  Bcast p = plan_bcast(x.shape(), y.shape());
  auto fwd = [p, fv](Node& n) {
    const double* a = n.inputs[0]->value.data();
    const double* b = n.inputs[1]->value.data();
    double* out = n.value.data();
    bcast_for_each(p, [&](std::size_t io, std::size_t ia, std::size_t ib) { out[io] = fv(a[ia], b[ib]); });
  };
  auto bwd = [p, dx, dy](Node& n) {
    Node& A = *n.inputs[0];
    Node& B = *n.inputs[1];
    const double* g = n.grad.data();
    const bool ga = A.requires_grad;
    const bool gb = B.requires_grad;
    if (ga) A.ensure_grad();
    if (gb) B.ensure_grad();
    bcast_for_each(p, [&](std::size_t io, std::size_t ia, std::size_t ib) {
      const double gv = g[io];
      if (ga) A.grad[ia] += gv * dx(A.value[ia], B.value[ib]);
      if (gb) B.grad[ib] += gv * dy(A.value[ia], B.value[ib]);
    });
  };
  return make_op(name, p.out, {x.node(), y.node()}, std::move(fwd), std::move(bwd));
}

// df receives (input value, output value) so exp/tanh/sigmoid reuse the
// forward result.
template <class FV, class DF>
Tensor unary_op(const char* name, const Tensor& x, FV fv, DF df) {
  if (!x.defined()) throw GraphError("unary op on undefined tensor");
  auto fwd = [fv](Node& n) {
    const auto& a = n.inputs[0]->value;
    for (std::size_t i = 0; i < a.size(); ++i) n.value[i] = fv(a[i]);
  };
  auto bwd = [df](Node& n) {
    Node& A = *n.inputs[0];
    if (!A.requires_grad) return;
    A.ensure_grad();
    for (std::size_t i = 0; i < A.value.size(); ++i) {
      A.grad[i] += n.grad[i] * df(A.value[i], n.value[i]);
    }
  };
  return make_op(name, x.shape(), {x.node()}, std::move(fwd), std::move(bwd));
}

}  // namespace

// ---------------------------------------------------------------------------
// shape helpers
// ---------------------------------------------------------------------------

std::size_t numel_of(const Shape& shape) {
  std::size_t n = 1;
  for (const std::size_t d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ')';
  return os.str();
}

Shape broadcast_shape(const Shape& a, const Shape& b) {
  const std::size_t rank = std::max(a.size(), b.size());
  Shape out(rank);
  for (std::size_t d = 0; d < rank; ++d) {
    const std::size_t ad = d < rank - a.size() ? 1 : a[d - (rank - a.size())];
    const std::size_t bd = d < rank - b.size() ? 1 : b[d - (rank - b.size())];
    if (ad != bd && ad != 1 && bd != 1) {
      throw ShapeError("shapes " + shape_str(a) + " and " + shape_str(b) +
                       " are not broadcast-compatible");
    }
    out[d] = std::max(ad, bd);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Tensor
// ---------------------------------------------------------------------------

Tensor Tensor::zeros(const Shape& shape, bool requires_grad) {
  return from(shape, std::vector<double>(numel_of(shape), 0.0), requires_grad);
}

Tensor Tensor::full(const Shape& shape, double v, bool requires_grad) {
  return from(shape, std::vector<double>(numel_of(shape), v), requires_grad);
}

Tensor Tensor::from(const Shape& shape, std::vector<double> data, bool requires_grad) {
  validate_shape(shape);
  if (numel_of(shape) != data.size()) {
    throw ShapeError("data length " + std::to_string(data.size()) + " does not match shape " +
                     shape_str(shape));
  }
  auto n = std::make_shared<Node>();
  n->shape = shape;
  n->value = std::move(data);
  n->requires_grad = requires_grad;
  for (std::size_t i = 0; i < n->value.size(); ++i) {
    if (!std::isfinite(n->value[i])) throw NonFiniteError("non-finite value in tensor literal");
  }
  return wrap(std::move(n));
}

Tensor Tensor::scalar(double v) { return from({}, {v}, false); }

std::span<double> Tensor::mutable_values() {
  if (!node_->is_leaf()) throw GraphError("mutable_values: only leaf tensors are writable");
  return node_->value;
}

double Tensor::item() const {
  if (numel() != 1) throw GraphError("item: tensor has " + std::to_string(numel()) + " elements");
  return node_->value[0];
}

double Tensor::at(std::size_t row, std::size_t col) const {
  if (rank() != 2) throw ShapeError("at(row,col) requires a rank-2 tensor");
  return node_->value[row * node_->shape[1] + col];
}

std::vector<double> Tensor::grad() const {
  if (node_->grad.empty()) return std::vector<double>(numel(), 0.0);
  return node_->grad;
}

void Tensor::zero_grad() {
  if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

Tensor Tensor::detach() const {
  return from(node_->shape, node_->value, false);
}

void Tensor::backward() const { miso::backward(*this); }

// ---------------------------------------------------------------------------
// Tape
// ---------------------------------------------------------------------------

Tape::Scope::Scope(Tape& t) : prev_(g_active_tape) { g_active_tape = &t; }
Tape::Scope::~Scope() { g_active_tape = prev_; }

Tape* Tape::active() { return g_active_tape; }

void Tape::record(const std::shared_ptr<Node>& n) {
  n->owner = this;
  n->tape_index = ops_.size();
  ops_.push_back(n);
}

void Tape::clear() {
  for (const auto& n : ops_) n->owner = nullptr;
  ops_.clear();
}

void Tape::replay() {
  for (const auto& n : ops_) n->forward(*n);
}

// ---------------------------------------------------------------------------
// elementwise ops
// ---------------------------------------------------------------------------

Tensor add(const Tensor& x, const Tensor& y) {
  return binary_op(
      "add", x, y, [](double a, double b) { return a + b; },
      [](double, double) { return 1.0; }, [](double, double) { return 1.0; });
}

Tensor sub(const Tensor& x, const Tensor& y) {
  return binary_op(
      "sub", x, y, [](double a, double b) { return a - b; },
      [](double, double) { return 1.0; }, [](double, double) { return -1.0; });
}

Tensor mul(const Tensor& x, const Tensor& y) {
  return binary_op(
      "mul", x, y, [](double a, double b) { return a * b; },
      [](double, double b) { return b; }, [](double a, double) { return a; });
}

Tensor div(const Tensor& x, const Tensor& y) {
  return binary_op(
      "div", x, y,
      [](double a, double b) {
        if (b == 0.0) throw NonFiniteError("division by zero in op 'div'");
        return a / b;
      },
      [](double, double b) { return 1.0 / b; },
      [](double a, double b) { return -a / (b * b); });
}

Tensor neg(const Tensor& x) {
  return unary_op(
      "neg", x, [](double a) { return -a; }, [](double, double) { return -1.0; });
}

Tensor exp(const Tensor& x) {
  return unary_op(
      "exp", x, [](double a) { return std::exp(a); }, [](double, double fa) { return fa; });
}

Tensor log(const Tensor& x) {
  return unary_op(
      "log", x,
      [](double a) {
        if (a <= 0.0) throw NonFiniteError("log of non-positive input");
        return std::log(a);
      },
      [](double a, double) { return 1.0 / a; });
}

Tensor square(const Tensor& x) {
  return unary_op(
      "square", x, [](double a) { return a * a; }, [](double a, double) { return 2.0 * a; });
}

Tensor sqrt(const Tensor& x) {
  return unary_op(
      "sqrt", x,
      [](double a) {
        if (a <= 0.0) throw NonFiniteError("sqrt of non-positive input");
        return std::sqrt(a);
      },
      [](double, double fa) { return 0.5 / fa; });
}

Tensor tanh(const Tensor& x) {
  return unary_op(
      "tanh", x, [](double a) { return std::tanh(a); },
      [](double, double fa) { return 1.0 - fa * fa; });
}

Tensor sigmoid(const Tensor& x) {
  return unary_op(
      "sigmoid", x, [](double a) { return 1.0 / (1.0 + std::exp(-a)); },
      [](double, double fa) { return fa * (1.0 - fa); });
}

Tensor leaky_relu(const Tensor& x, double alpha) {
  return unary_op(
      "leaky_relu", x, [alpha](double a) { return a > 0.0 ? a : alpha * a; },
      [alpha](double a, double) { return a > 0.0 ? 1.0 : alpha; });
}

Tensor abs(const Tensor& x) {
  // subgradient 0 at exactly 0
  return unary_op(
      "abs", x, [](double a) { return std::fabs(a); },
      [](double a, double) { return a > 0.0 ? 1.0 : (a < 0.0 ? -1.0 : 0.0); });
}

Tensor clamp(const Tensor& x, double lo, double hi) {
  if (!(lo <= hi)) throw Error("clamp: lo must be <= hi");
  return unary_op(
      "clamp", x, [lo, hi](double a) { return std::min(std::max(a, lo), hi); },
      [lo, hi](double a, double) { return (a >= lo && a <= hi) ? 1.0 : 0.0; });
}

Tensor elementwise(EwKind kind, const Tensor& x, const Tensor* y, double alpha) {
  const bool binary = kind == EwKind::add || kind == EwKind::sub || kind == EwKind::mul || kind == EwKind::div;
  if (binary && y == nullptr) throw GraphError("elementwise: binary kind needs two operands");
  switch (kind) {
    case EwKind::add: return add(x, *y);
    case EwKind::sub: return sub(x, *y);
    case EwKind::mul: return mul(x, *y);
    case EwKind::div: return div(x, *y);
    case EwKind::neg: return neg(x);
    case EwKind::exp: return exp(x);
    case EwKind::log: return log(x);
    case EwKind::square: return square(x);
    case EwKind::sqrt: return sqrt(x);
    case EwKind::tanh: return tanh(x);
    case EwKind::sigmoid: return sigmoid(x);
    case EwKind::leaky_relu: return leaky_relu(x, alpha);
    case EwKind::abs: return abs(x);
  }
  throw Error("elementwise: unknown kind");
}

// ---------------------------------------------------------------------------
// matmul
// ---------------------------------------------------------------------------

Tensor matmul(const Tensor& x, const Tensor& y) {
  if (x.rank() != 2 || y.rank() != 2) {
    throw ShapeError("matmul requires rank-2 tensors, got " + shape_str(x.shape()) + " and " +
                     shape_str(y.shape()));
  }
  const std::size_t m = x.shape()[0], k = x.shape()[1];
  const std::size_t k2 = y.shape()[0], n = y.shape()[1];
  if (k != k2) {
    throw ShapeError("matmul inner dimensions disagree: " + shape_str(x.shape()) + " vs " +
                     shape_str(y.shape()));
  }
  auto fwd = [m, k, n](Node& nd) {
    const double* a = nd.inputs[0]->value.data();
    const double* b = nd.inputs[1]->value.data();
    double* out = nd.value.data();
    std::fill(out, out + m * n, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t l = 0; l < k; ++l) {
        const double av = a[i * k + l];
        const double* brow = b + l * n;
        double* orow = out + i * n;
        for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
      }
    }
  };
  auto bwd = [m, k, n](Node& nd) {
    Node& A = *nd.inputs[0];
    Node& B = *nd.inputs[1];
    const double* g = nd.grad.data();
    if (A.requires_grad) {
      A.ensure_grad();
      // dX = g . Y^T
      const double* b = B.value.data();
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t l = 0; l < k; ++l) {
          double acc = 0.0;
          const double* grow = g + i * n;
          const double* brow = b + l * n;
          for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
          A.grad[i * k + l] += acc;
        }
      }
    }
    if (B.requires_grad) {
      B.ensure_grad();
      // dY = X^T . g
      const double* a = A.value.data();
      for (std::size_t i = 0; i < m; ++i) {
        const double* grow = g + i * n;
        for (std::size_t l = 0; l < k; ++l) {
          const double av = a[i * k + l];
          if (av == 0.0) continue;
          double* brow = B.grad.data() + l * n;
          for (std::size_t j = 0; j < n; ++j) brow[j] += av * grow[j];
        }
      }
    }
  };
  return make_op("matmul", {m, n}, {x.node(), y.node()}, std::move(fwd), std::move(bwd));
}

// ---------------------------------------------------------------------------
// reductions
// ---------------------------------------------------------------------------

namespace {

Tensor reduce_all(ReduceKind kind, const Tensor& x) {
  const double inv = kind == ReduceKind::mean ? 1.0 / static_cast<double>(x.numel()) : 1.0;
  auto fwd = [inv](Node& n) {
    double acc = 0.0;
    for (const double v : n.inputs[0]->value) acc += v;
    n.value[0] = acc * inv;
  };
  auto bwd = [inv](Node& n) {
    Node& A = *n.inputs[0];
    if (!A.requires_grad) return;
    A.ensure_grad();
    const double gv = n.grad[0] * inv;
    for (double& g : A.grad) g += gv;
  };
  return make_op(kind == ReduceKind::mean ? "mean" : "sum", Shape{}, {x.node()}, std::move(fwd),
                 std::move(bwd));
}

Tensor reduce_axes(ReduceKind kind, const Tensor& x, std::vector<std::size_t> axes) {
  const Shape& in = x.shape();
  std::sort(axes.begin(), axes.end());
  for (std::size_t i = 0; i < axes.size(); ++i) {
    if (axes[i] >= in.size()) {
      throw ShapeError("reduce: axis " + std::to_string(axes[i]) + " out of range for shape " +
                       shape_str(in));
    }
    if (i > 0 && axes[i] == axes[i - 1]) throw ShapeError("reduce: duplicate axis");
  }
  std::vector<bool> reduced(in.size(), false);
  for (const std::size_t a : axes) reduced[a] = true;

  Shape out;
  std::size_t count = 1;
  for (std::size_t d = 0; d < in.size(); ++d) {
    if (reduced[d]) {
      count *= in[d];
    } else {
      out.push_back(in[d]);
    }
  }
  // out strides aligned to input dims, 0 on reduced dims
  std::vector<std::size_t> ostrides(in.size(), 0);
  {
    std::size_t acc = 1;
    for (std::size_t d = in.size(); d-- > 0;) {
      if (!reduced[d]) {
        ostrides[d] = acc;
        acc *= in[d];
      }
    }
  }
  const double inv = kind == ReduceKind::mean ? 1.0 / static_cast<double>(count) : 1.0;
  auto fwd = [in, ostrides, inv](Node& n) {
    std::fill(n.value.begin(), n.value.end(), 0.0);
    const double* a = n.inputs[0]->value.data();
    double* o = n.value.data();
    map_for_each(in, ostrides, [&](std::size_t ii, std::size_t io) { o[io] += a[ii]; });
    if (inv != 1.0) {
      for (double& v : n.value) v *= inv;
    }
  };
  auto bwd = [in, ostrides, inv](Node& n) {
    Node& A = *n.inputs[0];
    if (!A.requires_grad) return;
    A.ensure_grad();
    const double* g = n.grad.data();
    map_for_each(in, ostrides, [&](std::size_t ii, std::size_t io) { A.grad[ii] += g[io] * inv; });
  };
  return make_op(kind == ReduceKind::mean ? "reduce_mean" : "reduce_sum", out,
                 {x.node()}, std::move(fwd), std::move(bwd));
}

Tensor identity_copy(const Tensor& x) {
  auto fwd = [](Node& n) { n.value = n.inputs[0]->value; };
  auto bwd = [](Node& n) {
    Node& A = *n.inputs[0];
    if (!A.requires_grad) return;
    A.ensure_grad();
    for (std::size_t i = 0; i < A.grad.size(); ++i) A.grad[i] += n.grad[i];
  };
  return make_op("identity", x.shape(), {x.node()}, std::move(fwd), std::move(bwd));
}

}  // namespace

Tensor sum(const Tensor& x) { return reduce_all(ReduceKind::sum, x); }
Tensor mean(const Tensor& x) { return reduce_all(ReduceKind::mean, x); }

Tensor reduce_sum(const Tensor& x, const std::vector<std::size_t>& axes) {
  if (axes.empty()) return identity_copy(x);
  return reduce_axes(ReduceKind::sum, x, axes);
}

Tensor reduce_mean(const Tensor& x, const std::vector<std::size_t>& axes) {
  if (axes.empty()) return identity_copy(x);
  return reduce_axes(ReduceKind::mean, x, axes);
}

Tensor reduce(ReduceKind kind, const Tensor& x, const std::vector<std::size_t>& axes) {
  return kind == ReduceKind::sum ? reduce_sum(x, axes) : reduce_mean(x, axes);
}

// ---------------------------------------------------------------------------
// structural ops
// ---------------------------------------------------------------------------

Tensor concat_cols(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.shape()[0] != b.shape()[0]) {
    throw ShapeError("concat_cols requires rank-2 tensors with equal row counts, got " +
                     shape_str(a.shape()) + " and " + shape_str(b.shape()));
  }
  const std::size_t rows = a.shape()[0], ca = a.shape()[1], cb = b.shape()[1];
  auto fwd = [rows, ca, cb](Node& n) {
    const double* pa = n.inputs[0]->value.data();
    const double* pb = n.inputs[1]->value.data();
    double* o = n.value.data();
    for (std::size_t r = 0; r < rows; ++r) {
      std::copy(pa + r * ca, pa + (r + 1) * ca, o + r * (ca + cb));
      std::copy(pb + r * cb, pb + (r + 1) * cb, o + r * (ca + cb) + ca);
    }
  };
  auto bwd = [rows, ca, cb](Node& n) {
    Node& A = *n.inputs[0];
    Node& B = *n.inputs[1];
    const double* g = n.grad.data();
    if (A.requires_grad) {
      A.ensure_grad();
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < ca; ++j) A.grad[r * ca + j] += g[r * (ca + cb) + j];
    }
    if (B.requires_grad) {
      B.ensure_grad();
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < cb; ++j) B.grad[r * cb + j] += g[r * (ca + cb) + ca + j];
    }
  };
  return make_op("concat_cols", {rows, ca + cb}, {a.node(), b.node()}, std::move(fwd), std::move(bwd));
}

Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t end) {
  if (x.rank() != 2) throw ShapeError("slice_cols requires a rank-2 tensor");
  const std::size_t rows = x.shape()[0], cols = x.shape()[1];
  if (begin >= end || end > cols) {
    throw ShapeError("slice_cols: invalid column range [" + std::to_string(begin) + "," +
                     std::to_string(end) + ") for " + shape_str(x.shape()));
  }
  const std::size_t w = end - begin;
  auto fwd = [rows, cols, begin, w](Node& n) {
    const double* a = n.inputs[0]->value.data();
    double* o = n.value.data();
    for (std::size_t r = 0; r < rows; ++r)
      std::copy(a + r * cols + begin, a + r * cols + begin + w, o + r * w);
  };
  auto bwd = [rows, cols, begin, w](Node& n) {
    Node& A = *n.inputs[0];
    if (!A.requires_grad) return;
    A.ensure_grad();
    const double* g = n.grad.data();
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t j = 0; j < w; ++j) A.grad[r * cols + begin + j] += g[r * w + j];
  };
  return make_op("slice_cols", {rows, w}, {x.node()}, std::move(fwd), std::move(bwd));
}

// ---------------------------------------------------------------------------
// backward
// ---------------------------------------------------------------------------

void backward(const Tensor& loss) {
  if (!loss.defined()) throw GraphError("backward: undefined tensor");
  const auto& ln = loss.node();
  if (ln->numel() != 1) {
    throw GraphError("backward: loss must be a scalar, got shape " + shape_str(ln->shape));
  }
  if (ln->is_leaf() || ln->owner == nullptr) {
    throw GraphError("backward: loss is detached from any tape");
  }
  const auto& ops = ln->owner->ops();
  for (std::size_t i = 0; i <= ln->tape_index; ++i) {
    Node& n = *ops[i];
    if (n.requires_grad) n.grad.assign(n.value.size(), 0.0);
  }
  ln->ensure_grad();
  ln->grad[0] = 1.0;
  for (std::size_t i = ln->tape_index + 1; i-- > 0;) {
    Node& n = *ops[i];
    if (n.requires_grad && n.backward) n.backward(n);
  }
}

// ---------------------------------------------------------------------------
// operators & random constructors
// ---------------------------------------------------------------------------

Tensor operator+(const Tensor& x, const Tensor& y) { return add(x, y); }
Tensor operator-(const Tensor& x, const Tensor& y) { return sub(x, y); }
Tensor operator*(const Tensor& x, const Tensor& y) { return mul(x, y); }
Tensor operator/(const Tensor& x, const Tensor& y) { return div(x, y); }
Tensor operator-(const Tensor& x) { return neg(x); }
Tensor operator+(const Tensor& x, double c) { return add(x, Tensor::scalar(c)); }
Tensor operator+(double c, const Tensor& x) { return add(Tensor::scalar(c), x); }
Tensor operator-(const Tensor& x, double c) { return sub(x, Tensor::scalar(c)); }
Tensor operator-(double c, const Tensor& x) { return sub(Tensor::scalar(c), x); }
Tensor operator*(const Tensor& x, double c) { return mul(x, Tensor::scalar(c)); }
Tensor operator*(double c, const Tensor& x) { return mul(Tensor::scalar(c), x); }
Tensor operator/(const Tensor& x, double c) { return div(x, Tensor::scalar(c)); }
Tensor operator/(double c, const Tensor& x) { return div(Tensor::scalar(c), x); }

Tensor randn(const Shape& shape, Rng& rng, bool requires_grad) {
  return Tensor::from(shape, rng.normal_vec(numel_of(shape)), requires_grad);
}

Tensor rand_uniform(const Shape& shape, double lo, double hi, Rng& rng, bool requires_grad) {
  return Tensor::from(shape, rng.uniform_vec(numel_of(shape), lo, hi), requires_grad);
}

}  // namespace miso
