#include "caaed/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "caaed/error.hpp"

namespace caaed {

namespace {

std::atomic<Precision> g_precision{Precision::Float32};
thread_local Tape* t_active_tape = nullptr;

using detail::Node;
using NodePtr = std::shared_ptr<Node>;

std::size_t product(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1},
                         std::multiplies<>());
}

void round_to_precision(std::vector<double>& v) {
  if (g_precision.load(std::memory_order_relaxed) == Precision::Float32) {
    for (double& x : v) x = static_cast<double>(static_cast<float>(x));
  }
}

bool recording(std::initializer_list<const Tensor*> inputs) {
  if (t_active_tape == nullptr) return false;
  for (const Tensor* t : inputs) {
    if (t->requires_grad()) return true;
  }
  return false;
}

// Builds the output node of a primitive and, when recording, links it to its
// inputs and appends it to the active tape.
Tensor finish(Shape shape, std::vector<double> value,
              std::initializer_list<const Tensor*> inputs,
              std::function<void(Node&)> backward_rule) {
  round_to_precision(value);
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  if (recording(inputs)) {
    node->requires_grad = true;
    for (const Tensor* t : inputs) node->parents.push_back(t->node());
    node->backward = std::move(backward_rule);
    t_active_tape->record(node);
  }
  return make_tensor(std::move(node));
}

Tensor finish_many(Shape shape, std::vector<double> value,
                   std::span<const Tensor> inputs,
                   std::function<void(Node&)> backward_rule) {
  round_to_precision(value);
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  bool any = t_active_tape != nullptr &&
             std::any_of(inputs.begin(), inputs.end(),
                         [](const Tensor& t) { return t.requires_grad(); });
  if (any) {
    node->requires_grad = true;
    for (const Tensor& t : inputs) node->parents.push_back(t.node());
    node->backward = std::move(backward_rule);
    t_active_tape->record(node);
  }
  return make_tensor(std::move(node));
}

void require_defined(const Tensor& t, const char* op) {
  if (!t.defined()) {
    throw UsageError(std::string(op) + ": undefined tensor");
  }
}

[[noreturn]] void dimension_error(const char* op, const Shape& a,
                                  const Shape& b) {
  throw DimensionError(std::string(op) + ": incompatible shapes " +
                       shape_string(a) + " and " + shape_string(b));
}

// Exact-match or single-element broadcast.
enum class Broadcast { Same, LeftScalar, RightScalar };

Broadcast broadcast_kind(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() == b.shape()) return Broadcast::Same;
  if (a.size() == 1) return Broadcast::LeftScalar;
  if (b.size() == 1) return Broadcast::RightScalar;
  dimension_error(op, a.shape(), b.shape());
}

template <typename Fwd, typename DA, typename DB>
Tensor binary(const char* op, const Tensor& a, const Tensor& b, Fwd fwd,
              DA da, DB db) {
  require_defined(a, op);
  require_defined(b, op);
  const Broadcast kind = broadcast_kind(op, a, b);
  const Shape& out_shape = kind == Broadcast::LeftScalar ? b.shape() : a.shape();
  const std::size_t n = product(out_shape);
  auto av = a.data();
  auto bv = b.data();
  auto ia = [kind](std::size_t i) {
    return kind == Broadcast::LeftScalar ? std::size_t{0} : i;
  };
  auto ib = [kind](std::size_t i) {
    return kind == Broadcast::RightScalar ? std::size_t{0} : i;
  };
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = fwd(av[ia(i)], bv[ib(i)]);
  return finish(out_shape, std::move(out), {&a, &b},
                [kind, n, ia, ib, da, db](Node& self) {
                  Node& pa = *self.parents[0];
                  Node& pb = *self.parents[1];
                  for (std::size_t i = 0; i < n; ++i) {
                    const double x = pa.value[ia(i)];
                    const double y = pb.value[ib(i)];
                    const double g = self.grad[i];
                    if (pa.requires_grad) pa.accumulate_at(ia(i), da(x, y, g));
                    if (pb.requires_grad) pb.accumulate_at(ib(i), db(x, y, g));
                  }
                  (void)kind;
                });
}

template <typename Fwd, typename Deriv>
Tensor unary(const Tensor& x, Fwd fwd, Deriv deriv) {
  require_defined(x, "unary");
  auto xv = x.data();
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = fwd(xv[i]);
  return finish(x.shape(), std::move(out), {&x}, [deriv](Node& self) {
    Node& p = *self.parents[0];
    if (p.grad.empty()) p.grad.assign(p.value.size(), 0.0);
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      p.grad[i] += self.grad[i] * deriv(p.value[i], self.value[i]);
    }
  });
}

}  // namespace

// ---------------------------------------------------------------------------

void set_precision(Precision p) { g_precision.store(p); }
Precision precision() { return g_precision.load(); }

PrecisionGuard::PrecisionGuard(Precision p) : saved_(precision()) {
  set_precision(p);
}
PrecisionGuard::~PrecisionGuard() { set_precision(saved_); }

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

void detail::Node::accumulate(std::span<const double> g) {
  if (!requires_grad) return;
  if (grad.empty()) grad.assign(value.size(), 0.0);
  for (std::size_t i = 0; i < g.size(); ++i) grad[i] += g[i];
}

void detail::Node::accumulate_at(std::size_t i, double g) {
  if (!requires_grad) return;
  if (grad.empty()) grad.assign(value.size(), 0.0);
  grad[i] += g;
}

Tensor make_tensor(std::shared_ptr<detail::Node> node) {
  return Tensor(std::move(node));
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const std::size_t n = product(shape);
  return from(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::from(Shape shape, std::vector<double> values,
                    bool requires_grad) {
  if (shape.empty()) {
    throw DimensionError("tensor: shape must have at least one extent");
  }
  for (std::size_t e : shape) {
    if (e == 0) {
      throw DimensionError("tensor: zero extent in shape " +
                           shape_string(shape));
    }
  }
  if (product(shape) != values.size()) {
    throw DimensionError("tensor: shape " + shape_string(shape) + " needs " +
                         std::to_string(product(shape)) + " values, got " +
                         std::to_string(values.size()));
  }
  round_to_precision(values);
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from({1}, {value}, requires_grad);
}

Tensor Tensor::identity(std::size_t n) {
  std::vector<double> v(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) v[i * n + i] = 1.0;
  return from({n, n}, std::move(v));
}

const Shape& Tensor::shape() const { return node_->shape; }
std::size_t Tensor::size() const { return node_->value.size(); }
std::size_t Tensor::rows() const { return shape().front(); }
std::size_t Tensor::cols() const {
  return rank() >= 2 ? shape()[1] : std::size_t{1};
}
std::span<const double> Tensor::data() const { return node_->value; }
std::span<double> Tensor::mutable_data() { return node_->value; }

double Tensor::item() const {
  if (size() != 1) {
    throw DimensionError("item: tensor of shape " + shape_string(shape()) +
                         " is not a scalar");
  }
  return node_->value[0];
}

double Tensor::at(std::size_t r, std::size_t c) const {
  return node_->value[r * cols() + c];
}

std::vector<double> Tensor::to_vector() const { return node_->value; }

bool Tensor::requires_grad() const {
  return node_ != nullptr && node_->requires_grad;
}
void Tensor::set_requires_grad(bool on) {
  node_->requires_grad = on;
  if (!on) node_->grad.clear();
}
bool Tensor::has_grad() const { return node_ && !node_->grad.empty(); }
std::span<const double> Tensor::grad() const { return node_->grad; }
void Tensor::zero_grad() { node_->grad.clear(); }

Tensor Tensor::detach() const {
  auto node = std::make_shared<detail::Node>();
  node->shape = node_->shape;
  node->value = node_->value;
  return Tensor(std::move(node));
}

// ---------------------------------------------------------------------------

Tape::Tape() : previous_(t_active_tape) { t_active_tape = this; }
Tape::~Tape() { t_active_tape = previous_; }

Tape* Tape::active() { return t_active_tape; }

void Tape::record(std::shared_ptr<detail::Node> node) {
  nodes_.push_back(std::move(node));
}

bool Tape::contains(const detail::Node* node) const {
  return std::any_of(nodes_.rbegin(), nodes_.rend(),
                     [node](const NodePtr& n) { return n.get() == node; });
}

void Tape::backward(const Tensor& loss) {
  require_defined(loss, "backward");
  if (loss.size() != 1) {
    throw UsageError("backward: loss must be a scalar, got shape " +
                     shape_string(loss.shape()));
  }
  auto it = std::find_if(nodes_.rbegin(), nodes_.rend(), [&](const NodePtr& n) {
    return n.get() == loss.node().get();
  });
  if (it == nodes_.rend()) {
    throw UsageError("backward: loss is not on the active tape");
  }
  (*it)->accumulate_at(0, 1.0);
  for (; it != nodes_.rend(); ++it) {
    Node& n = **it;
    if (!n.grad.empty() && n.backward) n.backward(n);
  }
  nodes_.clear();
}

NoGradGuard::NoGradGuard() : saved_(t_active_tape) { t_active_tape = nullptr; }
NoGradGuard::~NoGradGuard() { t_active_tape = saved_; }

void backward(const Tensor& loss) {
  Tape* tape = Tape::active();
  if (tape == nullptr) throw UsageError("backward: no active tape");
  tape->backward(loss);
}

// ---------------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_defined(a, "matmul");
  require_defined(b, "matmul");
  if (a.rank() > 2 || b.rank() > 2 || (a.rank() == 1 && b.rank() == 1)) {
    dimension_error("matmul", a.shape(), b.shape());
  }
  // Treat a vector on the left as a row and on the right as a column.
  const std::size_t m = a.rank() == 2 ? a.shape()[0] : 1;
  const std::size_t k = a.rank() == 2 ? a.shape()[1] : a.shape()[0];
  const std::size_t kb = b.shape()[0];
  const std::size_t n = b.rank() == 2 ? b.shape()[1] : 1;
  if (k != kb) dimension_error("matmul", a.shape(), b.shape());

  Shape out_shape;
  if (a.rank() == 1) {
    out_shape = {n};
  } else if (b.rank() == 1) {
    out_shape = {m};
  } else {
    out_shape = {m, n};
  }

  const double* A = a.data().data();
  const double* B = b.data().data();
  std::vector<double> out(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    double* o = out.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = A[i * k + p];
      if (aip == 0.0) continue;
      const double* brow = B + p * n;
      for (std::size_t j = 0; j < n; ++j) o[j] += aip * brow[j];
    }
  }
  return finish(std::move(out_shape), std::move(out), {&a, &b},
                [m, k, n](Node& self) {
                  Node& pa = *self.parents[0];
                  Node& pb = *self.parents[1];
                  const double* G = self.grad.data();
                  if (pa.requires_grad) {
                    if (pa.grad.empty()) pa.grad.assign(m * k, 0.0);
                    // dA = G * B^T
                    for (std::size_t i = 0; i < m; ++i) {
                      for (std::size_t p = 0; p < k; ++p) {
                        const double* brow = pb.value.data() + p * n;
                        const double* grow = G + i * n;
                        double acc = 0.0;
                        for (std::size_t j = 0; j < n; ++j) {
                          acc += grow[j] * brow[j];
                        }
                        pa.grad[i * k + p] += acc;
                      }
                    }
                  }
                  if (pb.requires_grad) {
                    if (pb.grad.empty()) pb.grad.assign(k * n, 0.0);
                    // dB = A^T * G
                    for (std::size_t i = 0; i < m; ++i) {
                      const double* grow = G + i * n;
                      for (std::size_t p = 0; p < k; ++p) {
                        const double aip = pa.value[i * k + p];
                        if (aip == 0.0) continue;
                        double* drow = pb.grad.data() + p * n;
                        for (std::size_t j = 0; j < n; ++j) {
                          drow[j] += aip * grow[j];
                        }
                      }
                    }
                  }
                });
}

Tensor add(const Tensor& a, const Tensor& b) {
  return binary(
      "add", a, b, [](double x, double y) { return x + y; },
      [](double, double, double g) { return g; },
      [](double, double, double g) { return g; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary(
      "sub", a, b, [](double x, double y) { return x - y; },
      [](double, double, double g) { return g; },
      [](double, double, double g) { return -g; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary(
      "mul", a, b, [](double x, double y) { return x * y; },
      [](double, double y, double g) { return g * y; },
      [](double x, double, double g) { return g * x; });
}

Tensor relu(const Tensor& x) {
  return unary(
      x, [](double v) { return v > 0.0 ? v : 0.0; },
      [](double in, double) { return in > 0.0 ? 1.0 : 0.0; });
}

Tensor tanh(const Tensor& x) {
  return unary(
      x, [](double v) { return std::tanh(v); },
      [](double, double out) { return 1.0 - out * out; });
}

Tensor sigmoid(const Tensor& x) {
  return unary(
      x, [](double v) { return 1.0 / (1.0 + std::exp(-v)); },
      [](double, double out) { return out * (1.0 - out); });
}

Tensor elementwise(ElementwiseOp op, std::span<const Tensor> args) {
  const std::size_t arity =
      (op == ElementwiseOp::Add || op == ElementwiseOp::Mul) ? 2 : 1;
  if (args.size() != arity) {
    throw UsageError("elementwise: expected " + std::to_string(arity) +
                     " arguments, got " + std::to_string(args.size()));
  }
  switch (op) {
    case ElementwiseOp::Add: return add(args[0], args[1]);
    case ElementwiseOp::Mul: return mul(args[0], args[1]);
    case ElementwiseOp::Relu: return relu(args[0]);
    case ElementwiseOp::Tanh: return tanh(args[0]);
    case ElementwiseOp::Sigmoid: return sigmoid(args[0]);
  }
  throw UsageError("elementwise: unknown op");
}

Tensor scale(const Tensor& x, double factor) {
  return unary(
      x, [factor](double v) { return v * factor; },
      [factor](double, double) { return factor; });
}

Tensor add_scalar(const Tensor& x, double offset) {
  return unary(
      x, [offset](double v) { return v + offset; },
      [](double, double) { return 1.0; });
}

Tensor add_row(const Tensor& m, const Tensor& v) {
  require_defined(m, "add_row");
  require_defined(v, "add_row");
  if (m.rank() != 2 || v.rank() != 1 || m.shape()[1] != v.shape()[0]) {
    dimension_error("add_row", m.shape(), v.shape());
  }
  const std::size_t r = m.shape()[0];
  const std::size_t c = m.shape()[1];
  std::vector<double> out(m.data().begin(), m.data().end());
  auto vv = v.data();
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] += vv[j];
  }
  return finish(m.shape(), std::move(out), {&m, &v}, [r, c](Node& self) {
    Node& pm = *self.parents[0];
    Node& pv = *self.parents[1];
    pm.accumulate(self.grad);
    if (pv.requires_grad) {
      if (pv.grad.empty()) pv.grad.assign(c, 0.0);
      for (std::size_t i = 0; i < r; ++i) {
        for (std::size_t j = 0; j < c; ++j) pv.grad[j] += self.grad[i * c + j];
      }
    }
  });
}

Tensor sum(const Tensor& x) {
  require_defined(x, "sum");
  auto xv = x.data();
  double total = std::accumulate(xv.begin(), xv.end(), 0.0);
  return finish({1}, {total}, {&x}, [](Node& self) {
    Node& p = *self.parents[0];
    if (p.grad.empty()) p.grad.assign(p.value.size(), 0.0);
    for (double& g : p.grad) g += self.grad[0];
  });
}

Tensor dot(const Tensor& a, const Tensor& b) {
  if (a.size() != b.size()) dimension_error("dot", a.shape(), b.shape());
  return sum(mul(a, b));
}

Tensor softmax(const Tensor& x, std::size_t valid_length) {
  require_defined(x, "softmax");
  if (x.rank() != 1) {
    throw DimensionError("softmax: expected a vector, got " +
                         shape_string(x.shape()));
  }
  const std::size_t n = x.size();
  if (valid_length == 0) valid_length = n;
  if (valid_length > n) {
    throw DimensionError("softmax: valid length " +
                         std::to_string(valid_length) + " exceeds " +
                         std::to_string(n));
  }
  auto xv = x.data();
  for (std::size_t i = 0; i < valid_length; ++i) {
    if (!std::isfinite(xv[i])) throw NumericError("softmax: non-finite input");
  }
  const double mx = *std::max_element(xv.begin(), xv.begin() + valid_length);
  std::vector<double> out(n, 0.0);
  double z = 0.0;
  for (std::size_t i = 0; i < valid_length; ++i) {
    out[i] = std::exp(xv[i] - mx);
    z += out[i];
  }
  for (std::size_t i = 0; i < valid_length; ++i) out[i] /= z;
  return finish(x.shape(), std::move(out), {&x}, [valid_length](Node& self) {
    Node& p = *self.parents[0];
    if (p.grad.empty()) p.grad.assign(p.value.size(), 0.0);
    double gy = 0.0;
    for (std::size_t i = 0; i < valid_length; ++i) {
      gy += self.grad[i] * self.value[i];
    }
    for (std::size_t i = 0; i < valid_length; ++i) {
      p.grad[i] += self.value[i] * (self.grad[i] - gy);
    }
  });
}

Tensor log_softmax(const Tensor& x) {
  require_defined(x, "log_softmax");
  if (x.rank() > 2) {
    throw DimensionError("log_softmax: expected vector or matrix, got " +
                         shape_string(x.shape()));
  }
  const std::size_t r = x.rank() == 2 ? x.shape()[0] : 1;
  const std::size_t c = x.rank() == 2 ? x.shape()[1] : x.shape()[0];
  auto xv = x.data();
  std::vector<double> out(r * c);
  for (std::size_t i = 0; i < r; ++i) {
    const double* row = xv.data() + i * c;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < c; ++j) {
      if (!std::isfinite(row[j])) {
        throw NumericError("log_softmax: non-finite input");
      }
      mx = std::max(mx, row[j]);
    }
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) z += std::exp(row[j] - mx);
    const double lz = mx + std::log(z);
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] = row[j] - lz;
  }
  return finish(x.shape(), std::move(out), {&x}, [r, c](Node& self) {
    Node& p = *self.parents[0];
    if (p.grad.empty()) p.grad.assign(p.value.size(), 0.0);
    for (std::size_t i = 0; i < r; ++i) {
      double gsum = 0.0;
      for (std::size_t j = 0; j < c; ++j) gsum += self.grad[i * c + j];
      for (std::size_t j = 0; j < c; ++j) {
        const std::size_t k = i * c + j;
        p.grad[k] += self.grad[k] - std::exp(self.value[k]) * gsum;
      }
    }
  });
}

Tensor conv1d_same(const Tensor& signal, const Tensor& filter) {
  require_defined(signal, "conv1d_same");
  require_defined(filter, "conv1d_same");
  if (signal.rank() != 1 || filter.rank() != 2) {
    dimension_error("conv1d_same", signal.shape(), filter.shape());
  }
  const std::size_t len = signal.size();
  const std::size_t channels = filter.shape()[0];
  const std::size_t taps = filter.shape()[1];
  if (taps % 2 == 0) {
    throw ConfigError("conv1d_same: filter length must be odd, got " +
                      std::to_string(taps));
  }
  const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(taps / 2);
  auto sv = signal.data();
  auto fv = filter.data();
  auto at = [&](std::ptrdiff_t k) -> double {
    return (k < 0 || k >= static_cast<std::ptrdiff_t>(len)) ? 0.0 : sv[k];
  };
  std::vector<double> out(len * channels, 0.0);
  for (std::size_t i = 0; i < len; ++i) {
    for (std::size_t ch = 0; ch < channels; ++ch) {
      double acc = 0.0;
      for (std::size_t j = 0; j < taps; ++j) {
        acc += fv[ch * taps + j] *
               at(static_cast<std::ptrdiff_t>(i + j) - pad);
      }
      out[i * channels + ch] = acc;
    }
  }
  return finish({len, channels}, std::move(out), {&signal, &filter},
                [len, channels, taps, pad](Node& self) {
                  Node& ps = *self.parents[0];
                  Node& pf = *self.parents[1];
                  const bool gs = ps.requires_grad;
                  const bool gf = pf.requires_grad;
                  if (gs && ps.grad.empty()) ps.grad.assign(len, 0.0);
                  if (gf && pf.grad.empty()) pf.grad.assign(channels * taps, 0.0);
                  for (std::size_t i = 0; i < len; ++i) {
                    for (std::size_t j = 0; j < taps; ++j) {
                      const std::ptrdiff_t k =
                          static_cast<std::ptrdiff_t>(i + j) - pad;
                      if (k < 0 || k >= static_cast<std::ptrdiff_t>(len)) continue;
                      for (std::size_t ch = 0; ch < channels; ++ch) {
                        const double g = self.grad[i * channels + ch];
                        if (gs) ps.grad[k] += g * pf.value[ch * taps + j];
                        if (gf) pf.grad[ch * taps + j] += g * ps.value[k];
                      }
                    }
                  }
                });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps) {
  require_defined(x, "layer_norm");
  const std::size_t n = x.shape().back();
  if (x.rank() > 2 || gain.shape() != Shape{n} || bias.shape() != Shape{n}) {
    dimension_error("layer_norm", x.shape(), gain.shape());
  }
  if (n < 2) {
    throw DimensionError("layer_norm: need at least 2 features, got " +
                         std::to_string(n));
  }
  const std::size_t r = x.size() / n;
  auto xv = x.data();
  auto gv = gain.data();
  auto bv = bias.data();
  // Normalized inputs and inverse deviations are kept for the backward pass.
  auto xhat = std::make_shared<std::vector<double>>(x.size());
  auto inv_std = std::make_shared<std::vector<double>>(r);
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < r; ++i) {
    const double* row = xv.data() + i * n;
    double mean = 0.0;
    for (std::size_t j = 0; j < n; ++j) mean += row[j];
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) var += (row[j] - mean) * (row[j] - mean);
    var /= static_cast<double>(n);
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)[i] = is;
    for (std::size_t j = 0; j < n; ++j) {
      const double h = (row[j] - mean) * is;
      (*xhat)[i * n + j] = h;
      out[i * n + j] = gv[j] * h + bv[j];
    }
  }
  return finish(x.shape(), std::move(out), {&x, &gain, &bias},
                [r, n, xhat, inv_std](Node& self) {
                  Node& px = *self.parents[0];
                  Node& pg = *self.parents[1];
                  Node& pb = *self.parents[2];
                  if (pg.requires_grad && pg.grad.empty()) pg.grad.assign(n, 0.0);
                  if (pb.requires_grad && pb.grad.empty()) pb.grad.assign(n, 0.0);
                  if (px.requires_grad && px.grad.empty()) {
                    px.grad.assign(px.value.size(), 0.0);
                  }
                  std::vector<double> dh(n);
                  for (std::size_t i = 0; i < r; ++i) {
                    double mean_dh = 0.0;
                    double mean_dh_h = 0.0;
                    for (std::size_t j = 0; j < n; ++j) {
                      const std::size_t k = i * n + j;
                      const double g = self.grad[k];
                      if (pg.requires_grad) pg.grad[j] += g * (*xhat)[k];
                      if (pb.requires_grad) pb.grad[j] += g;
                      dh[j] = g * pg.value[j];
                      mean_dh += dh[j];
                      mean_dh_h += dh[j] * (*xhat)[k];
                    }
                    if (!px.requires_grad) continue;
                    mean_dh /= static_cast<double>(n);
                    mean_dh_h /= static_cast<double>(n);
                    for (std::size_t j = 0; j < n; ++j) {
                      const std::size_t k = i * n + j;
                      px.grad[k] += (*inv_std)[i] *
                                    (dh[j] - mean_dh - (*xhat)[k] * mean_dh_h);
                    }
                  }
                });
}

Tensor dropout(const Tensor& x, double p, Mode mode, std::mt19937_64& rng) {
  if (!(p >= 0.0 && p < 1.0)) {
    throw ConfigError("dropout: probability must be in [0, 1), got " +
                      std::to_string(p));
  }
  if (mode == Mode::Eval || p == 0.0) return x;
  std::bernoulli_distribution drop(p);
  const double keep_scale = 1.0 / (1.0 - p);
  auto mask = std::make_shared<std::vector<double>>(x.size());
  auto xv = x.data();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    (*mask)[i] = drop(rng) ? 0.0 : keep_scale;
    out[i] = xv[i] * (*mask)[i];
  }
  return finish(x.shape(), std::move(out), {&x}, [mask](Node& self) {
    Node& p = *self.parents[0];
    if (p.grad.empty()) p.grad.assign(p.value.size(), 0.0);
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      p.grad[i] += self.grad[i] * (*mask)[i];
    }
  });
}

Tensor row(const Tensor& m, std::size_t i) {
  require_defined(m, "row");
  if (m.rank() != 2 || i >= m.shape()[0]) {
    throw DimensionError("row: index " + std::to_string(i) +
                         " out of range for " + shape_string(m.shape()));
  }
  const std::size_t c = m.shape()[1];
  auto mv = m.data();
  std::vector<double> out(mv.begin() + i * c, mv.begin() + (i + 1) * c);
  return finish({c}, std::move(out), {&m}, [i, c](Node& self) {
    Node& p = *self.parents[0];
    if (p.grad.empty()) p.grad.assign(p.value.size(), 0.0);
    for (std::size_t j = 0; j < c; ++j) p.grad[i * c + j] += self.grad[j];
  });
}

Tensor slice(const Tensor& x, std::size_t offset, std::size_t length) {
  require_defined(x, "slice");
  if (x.rank() != 1 || length == 0 || offset + length > x.size()) {
    throw DimensionError("slice: [" + std::to_string(offset) + ", " +
                         std::to_string(offset + length) +
                         ") out of range for " + shape_string(x.shape()));
  }
  auto xv = x.data();
  std::vector<double> out(xv.begin() + offset, xv.begin() + offset + length);
  return finish({length}, std::move(out), {&x}, [offset, length](Node& self) {
    Node& p = *self.parents[0];
    if (p.grad.empty()) p.grad.assign(p.value.size(), 0.0);
    for (std::size_t j = 0; j < length; ++j) p.grad[offset + j] += self.grad[j];
  });
}

Tensor stack_rows(std::span<const Tensor> rows) {
  if (rows.empty()) throw DimensionError("stack_rows: no rows");
  const Shape& first = rows.front().shape();
  if (first.size() != 1) {
    throw DimensionError("stack_rows: rows must be vectors, got " +
                         shape_string(first));
  }
  const std::size_t c = first[0];
  std::vector<double> out;
  out.reserve(rows.size() * c);
  for (const Tensor& t : rows) {
    if (t.shape() != first) dimension_error("stack_rows", first, t.shape());
    out.insert(out.end(), t.data().begin(), t.data().end());
  }
  return finish_many({rows.size(), c}, std::move(out), rows, [c](Node& self) {
    for (std::size_t i = 0; i < self.parents.size(); ++i) {
      self.parents[i]->accumulate(
          std::span<const double>(self.grad).subspan(i * c, c));
    }
  });
}

// ---------------------------------------------------------------------------

GradCheckResult grad_check(const std::function<Tensor()>& f,
                           std::span<Tensor> inputs, double step) {
  if (precision() != Precision::Float64) {
    throw ConfigError("grad_check: requires 64-bit precision");
  }
  std::vector<bool> saved_flags;
  for (Tensor& t : inputs) {
    saved_flags.push_back(t.requires_grad());
    t.set_requires_grad(true);
    t.zero_grad();
  }
  {
    Tape tape;
    Tensor loss = f();
    if (!std::isfinite(loss.item())) {
      throw NumericError("grad_check: non-finite function value");
    }
    tape.backward(loss);
  }

  GradCheckResult result;
  NoGradGuard no_grad;
  for (Tensor& t : inputs) {
    std::vector<double> analytic =
        t.has_grad() ? std::vector<double>(t.grad().begin(), t.grad().end())
                     : std::vector<double>(t.size(), 0.0);
    auto values = t.mutable_data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + step;
      const double plus = f().item();
      values[i] = saved - step;
      const double minus = f().item();
      values[i] = saved;
      if (!std::isfinite(plus) || !std::isfinite(minus)) {
        throw NumericError("grad_check: non-finite function value");
      }
      const double numeric = (plus - minus) / (2.0 * step);
      const double denom =
          std::max({1.0, std::abs(analytic[i]), std::abs(numeric)});
      result.max_relative_error = std::max(
          result.max_relative_error, std::abs(analytic[i] - numeric) / denom);
      ++result.coordinates;
    }
  }
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    inputs[i].zero_grad();
    inputs[i].set_requires_grad(saved_flags[i]);
  }
  return result;
}

double grad_check(const std::function<Tensor(const Tensor&)>& f, Tensor x,
                  double step) {
  Tensor inputs[] = {x};
  return grad_check([&] { return f(inputs[0]); }, inputs, step)
      .max_relative_error;
}

}  // namespace caaed
