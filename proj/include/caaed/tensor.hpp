#pragma once

// Dense tensors with a recorded-operation tape for reverse-mode
// differentiation.
//
// Values are stored as double. Under Precision::Float32 every operation
// rounds its result to the nearest float, so arithmetic behaves like a
// 32-bit pipeline; Precision::Float64 keeps full doubles and is required by
// the finite-difference checker.
//
// Operations record themselves only while a Tape is active on the calling
// thread and at least one input requires a gradient. Without an active tape
// the same calls run as plain inference.

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace caaed {

enum class Precision { Float32, Float64 };

void set_precision(Precision p);
Precision precision();

// Restores the previous precision on scope exit.
class PrecisionGuard {
 public:
  explicit PrecisionGuard(Precision p);
  ~PrecisionGuard();
  PrecisionGuard(const PrecisionGuard&) = delete;
  PrecisionGuard& operator=(const PrecisionGuard&) = delete;

 private:
  Precision saved_;
};

using Shape = std::vector<std::size_t>;

std::string shape_string(const Shape& shape);

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // empty until the first accumulation
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  void accumulate(std::span<const double> g);
  void accumulate_at(std::size_t i, double g);
};

}  // namespace detail

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values,
                     bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor identity(std::size_t n);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t size() const;
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<const double> data() const;
  // Writable view for optimizers and finite differences. Writing through it
  // while a recorded graph depends on this tensor invalidates that graph.
  std::span<double> mutable_data();
  double item() const;
  double operator[](std::size_t i) const { return data()[i]; }
  double at(std::size_t r, std::size_t c) const;
  std::vector<double> to_vector() const;

  bool requires_grad() const;
  void set_requires_grad(bool on);
  bool has_grad() const;
  std::span<const double> grad() const;
  void zero_grad();

  // Deep copy without history.
  Tensor detach() const;

  const std::shared_ptr<detail::Node>& node() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<detail::Node> n) : node_(std::move(n)) {}
  std::shared_ptr<detail::Node> node_;

  friend Tensor make_tensor(std::shared_ptr<detail::Node>);
};

Tensor make_tensor(std::shared_ptr<detail::Node> node);

// Ordered record of primitive applications. A tape becomes the thread's
// active tape on construction and restores the previous one on destruction.
class Tape {
 public:
  Tape();
  ~Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  std::size_t size() const { return nodes_.size(); }
  void record(std::shared_ptr<detail::Node> node);
  // Propagates d(loss)/d(.) to every reachable tensor that requires a
  // gradient, then clears the recording.
  void backward(const Tensor& loss);
  void clear() { nodes_.clear(); }
  bool contains(const detail::Node* node) const;

  static Tape* active();

 private:
  std::vector<std::shared_ptr<detail::Node>> nodes_;
  Tape* previous_ = nullptr;
};

// Suspends recording for the current scope.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  Tape* saved_;
};

void backward(const Tensor& loss);

// ---------------------------------------------------------------------------
// Primitives

// [m x k] x [k x n] -> [m x n]; [k] x [k x n] -> [n]; [m x k] x [k] -> [m].
Tensor matmul(const Tensor& a, const Tensor& b);

// Exact-shape or scalar (single element) broadcast.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor relu(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor sigmoid(const Tensor& x);

enum class ElementwiseOp { Add, Mul, Relu, Tanh, Sigmoid };
Tensor elementwise(ElementwiseOp op, std::span<const Tensor> args);

Tensor scale(const Tensor& x, double factor);
Tensor add_scalar(const Tensor& x, double offset);

// Adds v [c] to every row of m [r x c].
Tensor add_row(const Tensor& m, const Tensor& v);

Tensor sum(const Tensor& x);
Tensor dot(const Tensor& a, const Tensor& b);

// Stable softmax over a vector. Entries at positions >= valid_length are
// masked to probability zero; valid_length 0 means "all valid".
Tensor softmax(const Tensor& x, std::size_t valid_length = 0);
// Row-wise log-softmax of a vector or matrix.
Tensor log_softmax(const Tensor& x);

// f[i, c] = sum_j filter[c, j] * padded[i + j] with (r - 1) / 2 zeros of
// padding on each side. signal [I], filter [C x r] -> [I x C].
Tensor conv1d_same(const Tensor& signal, const Tensor& filter);

inline constexpr double kLayerNormEps = 1e-5;
// Normalizes a vector, or each row of a matrix.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps = kLayerNormEps);

enum class Mode { Train, Eval };
// Inverted dropout: train mode zeroes with probability p and scales the
// survivors by 1 / (1 - p); eval mode is the identity.
Tensor dropout(const Tensor& x, double p, Mode mode, std::mt19937_64& rng);

Tensor row(const Tensor& m, std::size_t i);
Tensor slice(const Tensor& x, std::size_t offset, std::size_t length);
Tensor stack_rows(std::span<const Tensor> rows);

// ---------------------------------------------------------------------------
// Finite-difference gradient checking (requires Precision::Float64).

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t coordinates = 0;
};

// Compares the recorded gradient of f() w.r.t. each tensor in `inputs` with
// central differences. The error of one coordinate is
// |analytic - numeric| / max(1, |analytic|, |numeric|).
GradCheckResult grad_check(const std::function<Tensor()>& f,
                           std::span<Tensor> inputs, double step = 1e-5);

double grad_check(const std::function<Tensor(const Tensor&)>& f, Tensor x,
                  double step = 1e-5);

}  // namespace caaed
