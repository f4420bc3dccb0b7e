#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace tarnet {

class Tape;

/// Dense n-dimensional array of doubles in row-major order, with optional
/// participation in reverse-mode differentiation. A Tensor is a shared
/// handle to its storage: copies alias the same data, which is what lets a
/// tape entry keep its operands alive across the forward pass.
///
/// Ranks used in this project are 1 and 2; scalars are shape {1}.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(std::vector<int64_t> shape, bool requires_grad = false);
  static Tensor full(std::vector<int64_t> shape, double value,
                     bool requires_grad = false);
  static Tensor from(std::vector<int64_t> shape, std::vector<double> data,
                     bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return static_cast<bool>(n_); }
  const std::vector<int64_t>& shape() const;
  int64_t numel() const;
  int64_t rank() const;
  /// Extent along a dimension; rows()/cols() are the 2-D conveniences.
  int64_t dim(int i) const;
  int64_t rows() const { return dim(0); }
  int64_t cols() const { return dim(1); }

  // A Tensor is a shared handle: const applies to the handle, not the
  // storage, so accessors hand out mutable pointers (backward rules capture
  // operands by value and accumulate into their grads).
  double* data() const;
  double at(int64_t i) const;
  /// Value of a scalar tensor (numel must be 1).
  double item() const;

  bool requires_grad() const;
  /// Marks this tensor as a differentiable leaf (a parameter).
  Tensor& set_requires_grad(bool v);
  /// True when the tensor is a grad leaf or was produced by a recorded op.
  bool tracked() const;

  bool has_grad() const;
  /// Grad buffer, allocated to zeros on first access.
  double* grad() const;
  void zero_grad() const;

  /// Deep copy of data (grad state not copied, requires_grad preserved).
  Tensor clone() const;
  /// Copies values from another tensor of identical shape.
  void copy_data_from(const Tensor& other);

  bool same_storage(const Tensor& other) const { return n_ == other.n_; }

 private:
  friend class Tape;
  friend bool needs_grad(const Tensor&);
  friend void mark_tracked(Tensor&);

  struct Node {
    std::vector<int64_t> shape;
    std::vector<double> data;
    std::vector<double> grad;  // empty until touched by backward
    bool requires_grad = false;
    bool tracked = false;
  };
  std::shared_ptr<Node> n_;

  explicit Tensor(std::shared_ptr<Node> n) : n_(std::move(n)) {}
};

/// Record of one forward pass (define-by-run): an ordered list of operations,
/// each holding its operand handles and a backward rule. Rebuilt per step.
/// A tape and the tensors recorded on it belong to one worker at a time.
class Tape {
 public:
  enum class Mode { kRecord, kNoGrad };

  explicit Tape(Mode mode = Mode::kRecord) : mode_(mode) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const { return mode_ == Mode::kRecord; }
  size_t size() const { return entries_.size(); }

  void record(const char* op, std::vector<Tensor> inputs, Tensor output,
              std::function<void()> pull);

  /// Reverse sweep from a scalar. Seeds d(value)/d(value) = seed and visits
  /// entries in reverse recording order exactly once; leaf grads accumulate
  /// additively across fan-out. `seed` other than 1 is used for batch-mean
  /// weighting.
  void backward(const Tensor& value, double seed = 1.0);

  void clear() { entries_.clear(); }

 private:
  struct Entry {
    const char* op;
    std::vector<Tensor> inputs;
    Tensor output;
    std::function<void()> pull;
  };
  Mode mode_;
  std::vector<Entry> entries_;
};

bool needs_grad(const Tensor& t);

// ---------------------------------------------------------------------------
// Operation family. Every op allocates a fresh output (operands are never
// mutated) and records itself when the tape is recording and any input is
// tracked. Shape rules:
//   add/sub/mul        element-wise, identical shapes
//   sadd/smul          broadcast a {1} scalar tensor over any tensor
//   scalar_add/mul     broadcast a plain double constant (not differentiated)
//   row_add/row_mul    broadcast a {C} vector over the rows of a {C,T} matrix
//   tile_cols          repeat a {C} vector into {C,T}
//   matmul             {m,k}x{k,n} -> {m,n}; {m,k}x{k} -> {m}
//   concat/slice       along axis 0 or 1 of matrices, axis 0 of vectors
//   reshape            same numel; transpose: {m,n} -> {n,m}
//   reductions         sum_all/mean_all -> {1}; sum_cols/mean_cols/amax_cols
//                      reduce {C,T} over T -> {C}
//   softmax_cols       softmax over each row of {C,T} (the time axis)
// ---------------------------------------------------------------------------

namespace ops {

Tensor add(Tape& tape, const Tensor& a, const Tensor& b);
Tensor sub(Tape& tape, const Tensor& a, const Tensor& b);
Tensor mul(Tape& tape, const Tensor& a, const Tensor& b);
Tensor neg(Tape& tape, const Tensor& a);

Tensor sadd(Tape& tape, const Tensor& a, const Tensor& s);
Tensor smul(Tape& tape, const Tensor& a, const Tensor& s);
Tensor scalar_add(Tape& tape, const Tensor& a, double c);
Tensor scalar_mul(Tape& tape, const Tensor& a, double c);

Tensor row_add(Tape& tape, const Tensor& x, const Tensor& v);
Tensor row_mul(Tape& tape, const Tensor& x, const Tensor& v);
Tensor tile_cols(Tape& tape, const Tensor& v, int64_t cols);

Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b);
/// Pointwise convolution, one pass: out[o,t] = bias[o] + sum_i w[o,i]*x[i,t].
/// Same result as row_add(matmul(w, x), bias).
Tensor conv1x1(Tape& tape, const Tensor& w, const Tensor& x, const Tensor& bias);

Tensor concat(Tape& tape, const std::vector<Tensor>& parts, int axis);
Tensor slice(Tape& tape, const Tensor& x, int axis, int64_t start, int64_t stop);
Tensor reshape(Tape& tape, const Tensor& x, std::vector<int64_t> shape);
Tensor transpose(Tape& tape, const Tensor& x);

Tensor exp(Tape& tape, const Tensor& x);
Tensor log(Tape& tape, const Tensor& x);
Tensor sqrt(Tape& tape, const Tensor& x);
Tensor reciprocal(Tape& tape, const Tensor& x);
Tensor tanh(Tape& tape, const Tensor& x);
Tensor relu(Tape& tape, const Tensor& x);
/// y = max(x, floor) element-wise; gradient passes only where x > floor.
Tensor clamp_min(Tape& tape, const Tensor& x, double floor);

/// Per-channel parametric ReLU on {C,T}: slope has shape {C}.
Tensor prelu(Tape& tape, const Tensor& x, const Tensor& slope);

Tensor softmax_cols(Tape& tape, const Tensor& x);
/// Softmax over a {K} vector.
Tensor softmax(Tape& tape, const Tensor& x);

Tensor sum_all(Tape& tape, const Tensor& x);
Tensor mean_all(Tape& tape, const Tensor& x);
Tensor sum_cols(Tape& tape, const Tensor& x);
Tensor mean_cols(Tape& tape, const Tensor& x);
/// Per-row temporal max of {C,T} -> {C}; ties resolve to the earliest frame.
Tensor amax_cols(Tape& tape, const Tensor& x);
/// Biased (1/T) per-row variance of {C,T} -> {C}, built from primitives.
Tensor var_cols(Tape& tape, const Tensor& x);

/// Depthwise dilated 1-D convolution along time with symmetric zero padding:
/// y[c,t] = bias[c] + sum_k kernel[c,k] * x[c, t + (k - (K-1)/2) * dilation].
/// kernel is {C,K} with K odd; output shape equals input shape.
Tensor depthwise_conv(Tape& tape, const Tensor& x, const Tensor& kernel,
                      const Tensor& bias, int dilation);

/// Normalization core of global layer norm: (x - mean) / sqrt(var + eps)
/// with mean/var over all C*T entries jointly. The affine part is applied
/// by the caller with row_mul/row_add. When `frozen` stats are supplied
/// (receptive-field measurement), they are used instead of the input's own
/// and the op is treated as frame-local by backward.
struct FrozenStats {
  bool valid = false;
  double mean = 0.0;
  double var = 0.0;
};
Tensor gln_norm(Tape& tape, const Tensor& x, double eps,
                const FrozenStats* frozen = nullptr,
                FrozenStats* captured = nullptr,
                bool corrupt_backward = false);

/// Mean negative log softmax probability of the true class, via log-sum-exp.
/// logits is a {K} vector; label in [0, K).
Tensor cross_entropy(Tape& tape, const Tensor& logits, int label);

}  // namespace ops

namespace detail {
// GEMM micro-kernels with accumulate semantics (C += A * B and the two
// transposed variants). Shared between forward ops and backward rules.
void gemm_nn(const double* a, const double* b, double* c, int64_t m, int64_t k,
             int64_t n);
void gemm_nt(const double* a, const double* b, double* c, int64_t m, int64_t k,
             int64_t n);
void gemm_tn(const double* a, const double* b, double* c, int64_t m, int64_t k,
             int64_t n);
}  // namespace detail

}  // namespace tarnet
