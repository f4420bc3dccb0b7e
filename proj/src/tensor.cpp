#include "tarnet/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "tarnet/errors.hpp"

namespace tarnet {

namespace {

int64_t shape_numel(const std::vector<int64_t>& shape) {
  if (shape.empty()) throw UsageError("Tensor shape must have at least one extent");
  int64_t n = 1;
  for (int64_t d : shape) {
    if (d < 1) throw UsageError("Tensor shape extents must be >= 1");
    n *= d;
  }
  return n;
}

std::string shape_str(const std::vector<int64_t>& shape) {
  std::ostringstream os;
  os << "{";
  for (size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << "}";
  return os.str();
}

[[noreturn]] void shape_fail(const char* op, const Tensor& a, const Tensor& b) {
  throw ConfigError(std::string(op) + ": operand shapes do not conform: " +
                    shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

[[noreturn]] void shape_fail(const char* op, const Tensor& a, const std::string& what) {
  throw ConfigError(std::string(op) + ": " + what + " (got " + shape_str(a.shape()) + ")");
}

}  // namespace

// --------------------------------------------------------------------------
// Tensor

Tensor Tensor::zeros(std::vector<int64_t> shape, bool requires_grad) {
  auto n = std::make_shared<Node>();
  int64_t count = shape_numel(shape);
  n->shape = std::move(shape);
  n->data.assign(static_cast<size_t>(count), 0.0);
  n->requires_grad = requires_grad;
  return Tensor(std::move(n));
}

Tensor Tensor::full(std::vector<int64_t> shape, double value, bool requires_grad) {
  Tensor t = zeros(std::move(shape), requires_grad);
  std::fill(t.n_->data.begin(), t.n_->data.end(), value);
  return t;
}

Tensor Tensor::from(std::vector<int64_t> shape, std::vector<double> data,
                    bool requires_grad) {
  int64_t count = shape_numel(shape);
  if (count != static_cast<int64_t>(data.size()))
    throw UsageError("Tensor::from: shape " + shape_str(shape) + " wants " +
                     std::to_string(count) + " values, got " +
                     std::to_string(data.size()));
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->data = std::move(data);
  n->requires_grad = requires_grad;
  return Tensor(std::move(n));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return from({1}, {value}, requires_grad);
}

const std::vector<int64_t>& Tensor::shape() const { return n_->shape; }
int64_t Tensor::numel() const { return static_cast<int64_t>(n_->data.size()); }
int64_t Tensor::rank() const { return static_cast<int64_t>(n_->shape.size()); }

int64_t Tensor::dim(int i) const {
  if (i < 0 || i >= static_cast<int>(n_->shape.size()))
    throw UsageError("Tensor::dim: axis out of range");
  return n_->shape[static_cast<size_t>(i)];
}

double* Tensor::data() const { return n_->data.data(); }
double Tensor::at(int64_t i) const { return n_->data.at(static_cast<size_t>(i)); }

double Tensor::item() const {
  if (numel() != 1) throw UsageError("Tensor::item: tensor is not a scalar");
  return n_->data[0];
}

bool Tensor::requires_grad() const { return n_->requires_grad; }

Tensor& Tensor::set_requires_grad(bool v) {
  n_->requires_grad = v;
  return *this;
}

bool Tensor::tracked() const { return n_->tracked || n_->requires_grad; }
bool Tensor::has_grad() const { return !n_->grad.empty(); }

double* Tensor::grad() const {
  if (n_->grad.empty()) n_->grad.assign(n_->data.size(), 0.0);
  return n_->grad.data();
}

void Tensor::zero_grad() const { n_->grad.assign(n_->data.size(), 0.0); }

Tensor Tensor::clone() const {
  auto m = std::make_shared<Node>();
  m->shape = n_->shape;
  m->data = n_->data;
  m->requires_grad = n_->requires_grad;
  return Tensor(std::move(m));
}

void Tensor::copy_data_from(const Tensor& other) {
  if (n_->shape != other.n_->shape)
    throw UsageError("copy_data_from: shape mismatch " + shape_str(n_->shape) +
                     " vs " + shape_str(other.n_->shape));
  n_->data = other.n_->data;
}

bool needs_grad(const Tensor& t) {
  return t.n_->requires_grad || t.n_->tracked;
}

void mark_tracked(Tensor& t) { t.n_->tracked = true; }

// --------------------------------------------------------------------------
// Tape

void Tape::record(const char* op, std::vector<Tensor> inputs, Tensor output,
                  std::function<void()> pull) {
  mark_tracked(output);
  entries_.push_back(Entry{op, std::move(inputs), std::move(output), std::move(pull)});
}

void Tape::backward(const Tensor& value, double seed) {
  if (value.numel() != 1)
    throw UsageError("Tape::backward: value must be a scalar, got shape " +
                     shape_str(value.shape()));
  Tensor v = value;
  v.grad()[0] += seed;
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
    // An output whose grad was never touched has no path to the seed value;
    // its pull would only add zeros.
    if (!it->output.has_grad()) continue;
    it->pull();
  }
}

// --------------------------------------------------------------------------
// Kernels

namespace detail {

// __restrict__ lets the compiler vectorize: a vector result never aliases
// its operands (every op allocates a fresh output).

void gemm_nn(const double* a, const double* b, double* c, int64_t m, int64_t k,
             int64_t n) {
  for (int64_t i = 0; i < m; ++i) {
    double* __restrict__ crow = c + i * n;
    const double* arow = a + i * k;
    for (int64_t p = 0; p < k; ++p) {
      const double aip = arow[p];
      const double* __restrict__ brow = b + p * n;
      for (int64_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
    }
  }
}

void gemm_nt(const double* a, const double* b, double* c, int64_t m, int64_t k,
             int64_t n) {
  for (int64_t i = 0; i < m; ++i) {
    const double* __restrict__ arow = a + i * k;
    for (int64_t j = 0; j < n; ++j) {
      const double* __restrict__ brow = b + j * k;
      double acc = 0.0;
      for (int64_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
      c[i * n + j] += acc;
    }
  }
}

void gemm_tn(const double* a, const double* b, double* c, int64_t m, int64_t k,
             int64_t n) {
  for (int64_t p = 0; p < k; ++p) {
    const double* arow = a + p * m;
    const double* __restrict__ brow = b + p * n;
    for (int64_t i = 0; i < m; ++i) {
      const double api = arow[i];
      double* __restrict__ crow = c + i * n;
      for (int64_t j = 0; j < n; ++j) crow[j] += api * brow[j];
    }
  }
}

}  // namespace detail

// --------------------------------------------------------------------------
// Ops

namespace ops {

namespace {

bool want(Tape& tape, std::initializer_list<const Tensor*> ins) {
  if (!tape.recording()) return false;
  for (const Tensor* t : ins)
    if (needs_grad(*t)) return true;
  return false;
}

void check_matrix(const char* op, const Tensor& x) {
  if (x.rank() != 2) shape_fail(op, x, "expected a rank-2 tensor");
}

void check_row_vector(const char* op, const Tensor& x, const Tensor& v) {
  check_matrix(op, x);
  if (v.rank() != 1 || v.dim(0) != x.rows()) shape_fail(op, x, v);
}

}  // namespace

Tensor add(Tape& tape, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) shape_fail("add", a, b);
  Tensor out = Tensor::zeros(a.shape());
  const int64_t n = a.numel();
  for (int64_t i = 0; i < n; ++i) out.data()[i] = a.data()[i] + b.data()[i];
  if (want(tape, {&a, &b})) {
    tape.record("add", {a, b}, out, [a, b, out]() mutable {
      const double* g = out.grad();
      const int64_t n = out.numel();
      if (needs_grad(a)) {
        double* ga = a.grad();
        for (int64_t i = 0; i < n; ++i) ga[i] += g[i];
      }
      if (needs_grad(b)) {
        double* gb = b.grad();
        for (int64_t i = 0; i < n; ++i) gb[i] += g[i];
      }
    });
  }
  return out;
}

Tensor sub(Tape& tape, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) shape_fail("sub", a, b);
  Tensor out = Tensor::zeros(a.shape());
  const int64_t n = a.numel();
  for (int64_t i = 0; i < n; ++i) out.data()[i] = a.data()[i] - b.data()[i];
  if (want(tape, {&a, &b})) {
    tape.record("sub", {a, b}, out, [a, b, out]() mutable {
      const double* g = out.grad();
      const int64_t n = out.numel();
      if (needs_grad(a)) {
        double* ga = a.grad();
        for (int64_t i = 0; i < n; ++i) ga[i] += g[i];
      }
      if (needs_grad(b)) {
        double* gb = b.grad();
        for (int64_t i = 0; i < n; ++i) gb[i] -= g[i];
      }
    });
  }
  return out;
}

Tensor mul(Tape& tape, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) shape_fail("mul", a, b);
  Tensor out = Tensor::zeros(a.shape());
  const int64_t n = a.numel();
  for (int64_t i = 0; i < n; ++i) out.data()[i] = a.data()[i] * b.data()[i];
  if (want(tape, {&a, &b})) {
    tape.record("mul", {a, b}, out, [a, b, out]() mutable {
      const double* g = out.grad();
      const int64_t n = out.numel();
      if (needs_grad(a)) {
        double* ga = a.grad();
        for (int64_t i = 0; i < n; ++i) ga[i] += g[i] * b.data()[i];
      }
      if (needs_grad(b)) {
        double* gb = b.grad();
        for (int64_t i = 0; i < n; ++i) gb[i] += g[i] * a.data()[i];
      }
    });
  }
  return out;
}

Tensor neg(Tape& tape, const Tensor& a) {
  Tensor out = Tensor::zeros(a.shape());
  const int64_t n = a.numel();
  for (int64_t i = 0; i < n; ++i) out.data()[i] = -a.data()[i];
  if (want(tape, {&a})) {
    tape.record("neg", {a}, out, [a, out]() mutable {
      const double* g = out.grad();
      double* ga = a.grad();
      for (int64_t i = 0; i < out.numel(); ++i) ga[i] -= g[i];
    });
  }
  return out;
}

Tensor sadd(Tape& tape, const Tensor& a, const Tensor& s) {
  if (s.numel() != 1) shape_fail("sadd", a, s);
  const double sv = s.item();
  Tensor out = Tensor::zeros(a.shape());
  const int64_t n = a.numel();
  for (int64_t i = 0; i < n; ++i) out.data()[i] = a.data()[i] + sv;
  if (want(tape, {&a, &s})) {
    tape.record("sadd", {a, s}, out, [a, s, out]() mutable {
      const double* g = out.grad();
      const int64_t n = out.numel();
      if (needs_grad(a)) {
        double* ga = a.grad();
        for (int64_t i = 0; i < n; ++i) ga[i] += g[i];
      }
      if (needs_grad(s)) {
        double acc = 0.0;
        for (int64_t i = 0; i < n; ++i) acc += g[i];
        s.grad()[0] += acc;
      }
    });
  }
  return out;
}

Tensor smul(Tape& tape, const Tensor& a, const Tensor& s) {
  if (s.numel() != 1) shape_fail("smul", a, s);
  const double sv = s.item();
  Tensor out = Tensor::zeros(a.shape());
  const int64_t n = a.numel();
  for (int64_t i = 0; i < n; ++i) out.data()[i] = a.data()[i] * sv;
  if (want(tape, {&a, &s})) {
    tape.record("smul", {a, s}, out, [a, s, out, sv]() mutable {
      const double* g = out.grad();
      const int64_t n = out.numel();
      if (needs_grad(a)) {
        double* ga = a.grad();
        for (int64_t i = 0; i < n; ++i) ga[i] += g[i] * sv;
      }
      if (needs_grad(s)) {
        double acc = 0.0;
        for (int64_t i = 0; i < n; ++i) acc += g[i] * a.data()[i];
        s.grad()[0] += acc;
      }
    });
  }
  return out;
}

Tensor scalar_add(Tape& tape, const Tensor& a, double c) {
  Tensor out = Tensor::zeros(a.shape());
  for (int64_t i = 0; i < a.numel(); ++i) out.data()[i] = a.data()[i] + c;
  if (want(tape, {&a})) {
    tape.record("scalar_add", {a}, out, [a, out]() mutable {
      const double* g = out.grad();
      double* ga = a.grad();
      for (int64_t i = 0; i < out.numel(); ++i) ga[i] += g[i];
    });
  }
  return out;
}

Tensor scalar_mul(Tape& tape, const Tensor& a, double c) {
  Tensor out = Tensor::zeros(a.shape());
  for (int64_t i = 0; i < a.numel(); ++i) out.data()[i] = a.data()[i] * c;
  if (want(tape, {&a})) {
    tape.record("scalar_mul", {a}, out, [a, out, c]() mutable {
      const double* g = out.grad();
      double* ga = a.grad();
      for (int64_t i = 0; i < out.numel(); ++i) ga[i] += g[i] * c;
    });
  }
  return out;
}

Tensor row_add(Tape& tape, const Tensor& x, const Tensor& v) {
  check_row_vector("row_add", x, v);
  const int64_t rows = x.rows(), cols = x.cols();
  Tensor out = Tensor::zeros(x.shape());
  for (int64_t r = 0; r < rows; ++r) {
    const double vr = v.data()[r];
    const double* xr = x.data() + r * cols;
    double* or_ = out.data() + r * cols;
    for (int64_t t = 0; t < cols; ++t) or_[t] = xr[t] + vr;
  }
  if (want(tape, {&x, &v})) {
    tape.record("row_add", {x, v}, out, [x, v, out, rows, cols]() mutable {
      const double* g = out.grad();
      if (needs_grad(x)) {
        double* gx = x.grad();
        for (int64_t i = 0; i < rows * cols; ++i) gx[i] += g[i];
      }
      if (needs_grad(v)) {
        double* gv = v.grad();
        for (int64_t r = 0; r < rows; ++r) {
          const double* __restrict__ gr = g + r * cols;
          double acc = 0.0;
          for (int64_t t = 0; t < cols; ++t) acc += gr[t];
          gv[r] += acc;
        }
      }
    });
  }
  return out;
}

Tensor row_mul(Tape& tape, const Tensor& x, const Tensor& v) {
  check_row_vector("row_mul", x, v);
  const int64_t rows = x.rows(), cols = x.cols();
  Tensor out = Tensor::zeros(x.shape());
  for (int64_t r = 0; r < rows; ++r) {
    const double vr = v.data()[r];
    const double* xr = x.data() + r * cols;
    double* or_ = out.data() + r * cols;
    for (int64_t t = 0; t < cols; ++t) or_[t] = xr[t] * vr;
  }
  if (want(tape, {&x, &v})) {
    tape.record("row_mul", {x, v}, out, [x, v, out, rows, cols]() mutable {
      const double* g = out.grad();
      if (needs_grad(x)) {
        double* gx = x.grad();
        for (int64_t r = 0; r < rows; ++r) {
          const double vr = v.data()[r];
          const double* gr = g + r * cols;
          double* gxr = gx + r * cols;
          for (int64_t t = 0; t < cols; ++t) gxr[t] += gr[t] * vr;
        }
      }
      if (needs_grad(v)) {
        double* gv = v.grad();
        for (int64_t r = 0; r < rows; ++r) {
          const double* __restrict__ gr = g + r * cols;
          const double* __restrict__ xr = x.data() + r * cols;
          double acc = 0.0;
          for (int64_t t = 0; t < cols; ++t) acc += gr[t] * xr[t];
          gv[r] += acc;
        }
      }
    });
  }
  return out;
}

Tensor tile_cols(Tape& tape, const Tensor& v, int64_t cols) {
  if (v.rank() != 1) shape_fail("tile_cols", v, "expected a rank-1 tensor");
  if (cols < 1) throw UsageError("tile_cols: cols must be >= 1");
  const int64_t rows = v.dim(0);
  Tensor out = Tensor::zeros({rows, cols});
  for (int64_t r = 0; r < rows; ++r) {
    double* or_ = out.data() + r * cols;
    std::fill(or_, or_ + cols, v.data()[r]);
  }
  if (want(tape, {&v})) {
    tape.record("tile_cols", {v}, out, [v, out, rows, cols]() mutable {
      const double* g = out.grad();
      double* gv = v.grad();
      for (int64_t r = 0; r < rows; ++r) {
        const double* __restrict__ gr = g + r * cols;
        double acc = 0.0;
        for (int64_t t = 0; t < cols; ++t) acc += gr[t];
        gv[r] += acc;
      }
    });
  }
  return out;
}

Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b) {
  check_matrix("matmul", a);
  const int64_t m = a.rows(), k = a.cols();
  const bool vec = b.rank() == 1;
  if (vec ? b.dim(0) != k : (b.rank() != 2 || b.rows() != k))
    shape_fail("matmul", a, b);
  const int64_t n = vec ? 1 : b.cols();

  Tensor out = vec ? Tensor::zeros({m}) : Tensor::zeros({m, n});
  detail::gemm_nn(a.data(), b.data(), out.data(), m, k, n);

  if (want(tape, {&a, &b})) {
    tape.record("matmul", {a, b}, out, [a, b, out, m, k, n]() mutable {
      const double* g = out.grad();
      if (needs_grad(a)) detail::gemm_nt(g, b.data(), a.grad(), m, n, k);
      if (needs_grad(b)) detail::gemm_tn(a.data(), g, b.grad(), k, m, n);
    });
  }
  return out;
}

Tensor conv1x1(Tape& tape, const Tensor& w, const Tensor& x, const Tensor& bias) {
  check_matrix("conv1x1", w);
  check_matrix("conv1x1", x);
  const int64_t out_ch = w.rows(), in_ch = w.cols(), frames = x.cols();
  if (x.rows() != in_ch) shape_fail("conv1x1", w, x);
  if (bias.rank() != 1 || bias.dim(0) != out_ch) shape_fail("conv1x1", w, bias);

  Tensor out = Tensor::zeros({out_ch, frames});
  for (int64_t o = 0; o < out_ch; ++o) {
    double* row = out.data() + o * frames;
    std::fill(row, row + frames, bias.data()[o]);
  }
  detail::gemm_nn(w.data(), x.data(), out.data(), out_ch, in_ch, frames);

  if (want(tape, {&w, &x, &bias})) {
    tape.record("conv1x1", {w, x, bias}, out,
                [w, x, bias, out, out_ch, in_ch, frames]() mutable {
      const double* g = out.grad();
      if (needs_grad(w)) detail::gemm_nt(g, x.data(), w.grad(), out_ch, frames, in_ch);
      if (needs_grad(x)) detail::gemm_tn(w.data(), g, x.grad(), in_ch, out_ch, frames);
      if (needs_grad(bias)) {
        double* gb = bias.grad();
        for (int64_t o = 0; o < out_ch; ++o) {
          const double* grow = g + o * frames;
          double acc = 0.0;
          for (int64_t t = 0; t < frames; ++t) acc += grow[t];
          gb[o] += acc;
        }
      }
    });
  }
  return out;
}

Tensor concat(Tape& tape, const std::vector<Tensor>& parts, int axis) {
  if (parts.empty()) throw UsageError("concat: needs at least one tensor");
  const int64_t rank = parts[0].rank();
  if (rank == 1) {
    if (axis != 0) throw UsageError("concat: vectors concatenate along axis 0");
    int64_t total = 0;
    for (const auto& p : parts) {
      if (p.rank() != 1) shape_fail("concat", parts[0], p);
      total += p.dim(0);
    }
    Tensor out = Tensor::zeros({total});
    int64_t off = 0;
    for (const auto& p : parts) {
      std::copy(p.data(), p.data() + p.numel(), out.data() + off);
      off += p.numel();
    }
    bool rec = tape.recording();
    if (rec) {
      rec = false;
      for (const auto& p : parts) rec = rec || needs_grad(p);
    }
    if (rec) {
      tape.record("concat", parts, out, [parts, out]() mutable {
        const double* g = out.grad();
        int64_t off = 0;
        for (auto& p : parts) {
          if (needs_grad(p)) {
            double* gp = p.grad();
            for (int64_t i = 0; i < p.numel(); ++i) gp[i] += g[off + i];
          }
          off += p.numel();
        }
      });
    }
    return out;
  }

  if (rank != 2 || (axis != 0 && axis != 1))
    throw UsageError("concat: supports vectors and matrices along axis 0 or 1");
  const int64_t fixed = axis == 0 ? parts[0].cols() : parts[0].rows();
  int64_t total = 0;
  for (const auto& p : parts) {
    if (p.rank() != 2 || (axis == 0 ? p.cols() : p.rows()) != fixed)
      shape_fail("concat", parts[0], p);
    total += axis == 0 ? p.rows() : p.cols();
  }
  Tensor out = axis == 0 ? Tensor::zeros({total, fixed}) : Tensor::zeros({fixed, total});
  if (axis == 0) {
    int64_t row = 0;
    for (const auto& p : parts) {
      std::copy(p.data(), p.data() + p.numel(), out.data() + row * fixed);
      row += p.rows();
    }
  } else {
    int64_t col = 0;
    for (const auto& p : parts) {
      const int64_t pc = p.cols();
      for (int64_t r = 0; r < fixed; ++r)
        std::copy(p.data() + r * pc, p.data() + (r + 1) * pc,
                  out.data() + r * total + col);
      col += pc;
    }
  }
  bool rec = false;
  if (tape.recording())
    for (const auto& p : parts) rec = rec || needs_grad(p);
  if (rec) {
    tape.record("concat", parts, out, [parts, out, axis, fixed, total]() mutable {
      const double* g = out.grad();
      if (axis == 0) {
        int64_t row = 0;
        for (auto& p : parts) {
          if (needs_grad(p)) {
            double* gp = p.grad();
            const double* gs = g + row * fixed;
            for (int64_t i = 0; i < p.numel(); ++i) gp[i] += gs[i];
          }
          row += p.rows();
        }
      } else {
        int64_t col = 0;
        for (auto& p : parts) {
          const int64_t pc = p.cols();
          if (needs_grad(p)) {
            double* gp = p.grad();
            for (int64_t r = 0; r < fixed; ++r)
              for (int64_t t = 0; t < pc; ++t)
                gp[r * pc + t] += g[r * total + col + t];
          }
          col += pc;
        }
      }
    });
  }
  return out;
}

Tensor slice(Tape& tape, const Tensor& x, int axis, int64_t start, int64_t stop) {
  const int64_t extent = x.rank() == 1 ? x.dim(0) : x.dim(axis);
  if (x.rank() == 1 && axis != 0)
    throw UsageError("slice: vectors slice along axis 0");
  if (x.rank() == 2 && axis != 0 && axis != 1)
    throw UsageError("slice: axis must be 0 or 1");
  if (start < 0 || stop > extent || start >= stop)
    throw UsageError("slice: range [" + std::to_string(start) + "," +
                     std::to_string(stop) + ") invalid for extent " +
                     std::to_string(extent));
  Tensor out;
  if (x.rank() == 1) {
    out = Tensor::zeros({stop - start});
    std::copy(x.data() + start, x.data() + stop, out.data());
  } else if (axis == 0) {
    const int64_t cols = x.cols();
    out = Tensor::zeros({stop - start, cols});
    std::copy(x.data() + start * cols, x.data() + stop * cols, out.data());
  } else {
    const int64_t rows = x.rows(), cols = x.cols(), w = stop - start;
    out = Tensor::zeros({rows, w});
    for (int64_t r = 0; r < rows; ++r)
      std::copy(x.data() + r * cols + start, x.data() + r * cols + stop,
                out.data() + r * w);
  }
  if (want(tape, {&x})) {
    tape.record("slice", {x}, out, [x, out, axis, start]() mutable {
      const double* g = out.grad();
      double* gx = x.grad();
      if (x.rank() == 1 || axis == 0) {
        const int64_t off = x.rank() == 1 ? start : start * x.cols();
        for (int64_t i = 0; i < out.numel(); ++i) gx[off + i] += g[i];
      } else {
        const int64_t rows = x.rows(), cols = x.cols(), w = out.cols();
        for (int64_t r = 0; r < rows; ++r)
          for (int64_t t = 0; t < w; ++t) gx[r * cols + start + t] += g[r * w + t];
      }
    });
  }
  return out;
}

Tensor reshape(Tape& tape, const Tensor& x, std::vector<int64_t> shape) {
  Tensor out = Tensor::from(shape, std::vector<double>(x.data(), x.data() + x.numel()));
  if (out.numel() != x.numel())
    shape_fail("reshape", x, "new shape " + shape_str(shape) + " changes element count");
  if (want(tape, {&x})) {
    tape.record("reshape", {x}, out, [x, out]() mutable {
      const double* g = out.grad();
      double* gx = x.grad();
      for (int64_t i = 0; i < out.numel(); ++i) gx[i] += g[i];
    });
  }
  return out;
}

Tensor transpose(Tape& tape, const Tensor& x) {
  check_matrix("transpose", x);
  const int64_t m = x.rows(), n = x.cols();
  Tensor out = Tensor::zeros({n, m});
  for (int64_t i = 0; i < m; ++i)
    for (int64_t j = 0; j < n; ++j) out.data()[j * m + i] = x.data()[i * n + j];
  if (want(tape, {&x})) {
    tape.record("transpose", {x}, out, [x, out, m, n]() mutable {
      const double* g = out.grad();
      double* gx = x.grad();
      for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < n; ++j) gx[i * n + j] += g[j * m + i];
    });
  }
  return out;
}

namespace {

template <typename Fwd, typename Bwd>
Tensor unary_op(Tape& tape, const char* name, const Tensor& x, Fwd f, Bwd dfdx) {
  Tensor out = Tensor::zeros(x.shape());
  const int64_t n = x.numel();
  for (int64_t i = 0; i < n; ++i) out.data()[i] = f(x.data()[i]);
  if (want(tape, {&x})) {
    tape.record(name, {x}, out, [x, out, dfdx]() mutable {
      const double* g = out.grad();
      double* gx = x.grad();
      for (int64_t i = 0; i < out.numel(); ++i)
        gx[i] += g[i] * dfdx(x.data()[i], out.data()[i]);
    });
  }
  return out;
}

}  // namespace

Tensor exp(Tape& tape, const Tensor& x) {
  return unary_op(tape, "exp", x, [](double v) { return std::exp(v); },
                  [](double, double y) { return y; });
}

Tensor log(Tape& tape, const Tensor& x) {
  return unary_op(tape, "log", x, [](double v) { return std::log(v); },
                  [](double v, double) { return 1.0 / v; });
}

Tensor sqrt(Tape& tape, const Tensor& x) {
  return unary_op(tape, "sqrt", x, [](double v) { return std::sqrt(v); },
                  [](double, double y) { return 0.5 / y; });
}

Tensor reciprocal(Tape& tape, const Tensor& x) {
  return unary_op(tape, "reciprocal", x, [](double v) { return 1.0 / v; },
                  [](double, double y) { return -y * y; });
}

Tensor tanh(Tape& tape, const Tensor& x) {
  return unary_op(tape, "tanh", x, [](double v) { return std::tanh(v); },
                  [](double, double y) { return 1.0 - y * y; });
}

Tensor relu(Tape& tape, const Tensor& x) {
  return unary_op(tape, "relu", x, [](double v) { return v > 0.0 ? v : 0.0; },
                  [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor clamp_min(Tape& tape, const Tensor& x, double floor) {
  return unary_op(tape, "clamp_min", x,
                  [floor](double v) { return v > floor ? v : floor; },
                  [floor](double v, double) { return v > floor ? 1.0 : 0.0; });
}

Tensor prelu(Tape& tape, const Tensor& x, const Tensor& slope) {
  check_row_vector("prelu", x, slope);
  const int64_t rows = x.rows(), cols = x.cols();
  Tensor out = Tensor::zeros(x.shape());
  for (int64_t r = 0; r < rows; ++r) {
    const double a = slope.data()[r];
    const double* xr = x.data() + r * cols;
    double* or_ = out.data() + r * cols;
    for (int64_t t = 0; t < cols; ++t) or_[t] = xr[t] > 0.0 ? xr[t] : a * xr[t];
  }
  if (want(tape, {&x, &slope})) {
    tape.record("prelu", {x, slope}, out, [x, slope, out, rows, cols]() mutable {
      const double* g = out.grad();
      if (needs_grad(x)) {
        double* gx = x.grad();
        for (int64_t r = 0; r < rows; ++r) {
          const double a = slope.data()[r];
          const double* xr = x.data() + r * cols;
          const double* gr = g + r * cols;
          double* gxr = gx + r * cols;
          for (int64_t t = 0; t < cols; ++t)
            gxr[t] += gr[t] * (xr[t] > 0.0 ? 1.0 : a);
        }
      }
      if (needs_grad(slope)) {
        double* gs = slope.grad();
        for (int64_t r = 0; r < rows; ++r) {
          const double* __restrict__ xr = x.data() + r * cols;
          const double* __restrict__ gr = g + r * cols;
          double acc = 0.0;
          for (int64_t t = 0; t < cols; ++t)
            if (xr[t] <= 0.0) acc += gr[t] * xr[t];
          gs[r] += acc;
        }
      }
    });
  }
  return out;
}

Tensor softmax_cols(Tape& tape, const Tensor& x) {
  check_matrix("softmax_cols", x);
  const int64_t rows = x.rows(), cols = x.cols();
  Tensor out = Tensor::zeros(x.shape());
  for (int64_t r = 0; r < rows; ++r) {
    const double* xr = x.data() + r * cols;
    double* or_ = out.data() + r * cols;
    double m = xr[0];
    for (int64_t t = 1; t < cols; ++t) m = std::max(m, xr[t]);
    long double denom = 0.0;
    for (int64_t t = 0; t < cols; ++t) {
      or_[t] = std::exp(xr[t] - m);
      denom += or_[t];
    }
    const double inv = static_cast<double>(1.0L / denom);
    for (int64_t t = 0; t < cols; ++t) or_[t] *= inv;
  }
  if (want(tape, {&x})) {
    tape.record("softmax_cols", {x}, out, [x, out, rows, cols]() mutable {
      const double* g = out.grad();
      double* gx = x.grad();
      for (int64_t r = 0; r < rows; ++r) {
        const double* yr = out.data() + r * cols;
        const double* gr = g + r * cols;
        double dot = 0.0;
        for (int64_t t = 0; t < cols; ++t) dot += gr[t] * yr[t];
        const double d = dot;
        double* gxr = gx + r * cols;
        for (int64_t t = 0; t < cols; ++t) gxr[t] += yr[t] * (gr[t] - d);
      }
    });
  }
  return out;
}

Tensor softmax(Tape& tape, const Tensor& x) {
  if (x.rank() != 1) shape_fail("softmax", x, "expected a rank-1 tensor");
  Tensor m = reshape(tape, x, {1, x.dim(0)});
  Tensor s = softmax_cols(tape, m);
  return reshape(tape, s, {x.dim(0)});
}

Tensor sum_all(Tape& tape, const Tensor& x) {
  long double acc = 0.0;
  for (int64_t i = 0; i < x.numel(); ++i) acc += x.data()[i];
  Tensor out = Tensor::scalar(static_cast<double>(acc));
  if (want(tape, {&x})) {
    tape.record("sum_all", {x}, out, [x, out]() mutable {
      const double g = out.grad()[0];
      double* gx = x.grad();
      for (int64_t i = 0; i < x.numel(); ++i) gx[i] += g;
    });
  }
  return out;
}

Tensor mean_all(Tape& tape, const Tensor& x) {
  return scalar_mul(tape, sum_all(tape, x), 1.0 / static_cast<double>(x.numel()));
}

Tensor sum_cols(Tape& tape, const Tensor& x) {
  check_matrix("sum_cols", x);
  const int64_t rows = x.rows(), cols = x.cols();
  Tensor out = Tensor::zeros({rows});
  for (int64_t r = 0; r < rows; ++r) {
    long double acc = 0.0;
    const double* xr = x.data() + r * cols;
    for (int64_t t = 0; t < cols; ++t) acc += xr[t];
    out.data()[r] = static_cast<double>(acc);
  }
  if (want(tape, {&x})) {
    tape.record("sum_cols", {x}, out, [x, out, rows, cols]() mutable {
      const double* g = out.grad();
      double* gx = x.grad();
      for (int64_t r = 0; r < rows; ++r) {
        double* gxr = gx + r * cols;
        for (int64_t t = 0; t < cols; ++t) gxr[t] += g[r];
      }
    });
  }
  return out;
}

Tensor mean_cols(Tape& tape, const Tensor& x) {
  return scalar_mul(tape, sum_cols(tape, x), 1.0 / static_cast<double>(x.cols()));
}

Tensor amax_cols(Tape& tape, const Tensor& x) {
  check_matrix("amax_cols", x);
  const int64_t rows = x.rows(), cols = x.cols();
  Tensor out = Tensor::zeros({rows});
  auto argmax = std::make_shared<std::vector<int64_t>>(rows);
  for (int64_t r = 0; r < rows; ++r) {
    const double* xr = x.data() + r * cols;
    int64_t best = 0;
    for (int64_t t = 1; t < cols; ++t)
      if (xr[t] > xr[best]) best = t;
    (*argmax)[r] = best;
    out.data()[r] = xr[best];
  }
  if (want(tape, {&x})) {
    tape.record("amax_cols", {x}, out, [x, out, argmax, cols]() mutable {
      const double* g = out.grad();
      double* gx = x.grad();
      for (int64_t r = 0; r < out.numel(); ++r)
        gx[r * cols + (*argmax)[r]] += g[r];
    });
  }
  return out;
}

Tensor var_cols(Tape& tape, const Tensor& x) {
  Tensor m = mean_cols(tape, x);
  Tensor e2 = mean_cols(tape, mul(tape, x, x));
  return sub(tape, e2, mul(tape, m, m));
}

Tensor depthwise_conv(Tape& tape, const Tensor& x, const Tensor& kernel,
                      const Tensor& bias, int dilation) {
  check_matrix("depthwise_conv", x);
  check_matrix("depthwise_conv", kernel);
  const int64_t channels = x.rows(), frames = x.cols(), taps = kernel.cols();
  if (kernel.rows() != channels) shape_fail("depthwise_conv", x, kernel);
  if (bias.rank() != 1 || bias.dim(0) != channels)
    shape_fail("depthwise_conv", x, bias);
  if (taps % 2 == 0)
    throw ConfigError("depthwise_conv: kernel width must be odd, got " +
                      std::to_string(taps));
  if (dilation < 1) throw ConfigError("depthwise_conv: dilation must be >= 1");

  const int64_t half = taps / 2;
  Tensor out = Tensor::zeros(x.shape());
  for (int64_t c = 0; c < channels; ++c) {
    const double* xc = x.data() + c * frames;
    const double* kc = kernel.data() + c * taps;
    const double bc = bias.data()[c];
    double* oc = out.data() + c * frames;
    for (int64_t t = 0; t < frames; ++t) oc[t] = bc;
    for (int64_t k = 0; k < taps; ++k) {
      const int64_t shift = (k - half) * dilation;
      const double w = kc[k];
      const int64_t lo = std::max<int64_t>(0, -shift);
      const int64_t hi = std::min<int64_t>(frames, frames - shift);
      for (int64_t t = lo; t < hi; ++t) oc[t] += w * xc[t + shift];
    }
  }
  if (want(tape, {&x, &kernel, &bias})) {
    tape.record("depthwise_conv", {x, kernel, bias}, out,
                [x, kernel, bias, out, channels, frames, taps, half, dilation]() mutable {
      const double* g = out.grad();
      for (int64_t c = 0; c < channels; ++c) {
        const double* gc = g + c * frames;
        const double* xc = x.data() + c * frames;
        const double* kc = kernel.data() + c * taps;
        if (needs_grad(x)) {
          double* gx = x.grad() + c * frames;
          for (int64_t k = 0; k < taps; ++k) {
            const int64_t shift = (k - half) * dilation;
            const double w = kc[k];
            const int64_t lo = std::max<int64_t>(0, -shift);
            const int64_t hi = std::min<int64_t>(frames, frames - shift);
            for (int64_t t = lo; t < hi; ++t) gx[t + shift] += w * gc[t];
          }
        }
        if (needs_grad(kernel)) {
          double* gk = kernel.grad() + c * taps;
          for (int64_t k = 0; k < taps; ++k) {
            const int64_t shift = (k - half) * dilation;
            const int64_t lo = std::max<int64_t>(0, -shift);
            const int64_t hi = std::min<int64_t>(frames, frames - shift);
            double acc = 0.0;
            for (int64_t t = lo; t < hi; ++t) acc += gc[t] * xc[t + shift];
            gk[k] += acc;
          }
        }
        if (needs_grad(bias)) {
          double acc = 0.0;
          for (int64_t t = 0; t < frames; ++t) acc += gc[t];
          bias.grad()[c] += acc;
        }
      }
    });
  }
  return out;
}

Tensor gln_norm(Tape& tape, const Tensor& x, double eps,
                const FrozenStats* frozen, FrozenStats* captured,
                bool corrupt_backward) {
  check_matrix("gln_norm", x);
  const int64_t n = x.numel();
  double mean, var;
  if (frozen && frozen->valid) {
    mean = frozen->mean;
    var = frozen->var;
  } else {
    const double* __restrict__ xd = x.data();
    double acc = 0.0;
    for (int64_t i = 0; i < n; ++i) acc += xd[i];
    mean = acc / static_cast<double>(n);
    double vacc = 0.0;
    for (int64_t i = 0; i < n; ++i) {
      const double d = xd[i] - mean;
      vacc += d * d;
    }
    var = vacc / static_cast<double>(n);
  }
  if (captured) {
    captured->valid = true;
    captured->mean = mean;
    captured->var = var;
  }
  const double inv = 1.0 / std::sqrt(var + eps);
  Tensor out = Tensor::zeros(x.shape());
  for (int64_t i = 0; i < n; ++i) out.data()[i] = (x.data()[i] - mean) * inv;

  if (want(tape, {&x})) {
    const bool stats_live = !(frozen && frozen->valid);
    tape.record("gln_norm", {x}, out,
                [x, out, inv, n, stats_live, corrupt_backward]() mutable {
      const double* g = out.grad();
      double* gx = x.grad();
      if (!stats_live) {
        for (int64_t i = 0; i < n; ++i) gx[i] += g[i] * inv;
        return;
      }
      // d/dx of y = (x - mean) / sqrt(var + eps) with mean/var over all
      // entries: dx = inv * (g - mean(g) - y * mean(g .* y)).
      const double* __restrict__ y = out.data();
      double gsum = 0.0, gysum = 0.0;
      for (int64_t i = 0; i < n; ++i) {
        gsum += g[i];
        gysum += g[i] * y[i];
      }
      double gmean = gsum / static_cast<double>(n);
      const double gymean = gysum / static_cast<double>(n);
      if (corrupt_backward) gmean *= 1.01;  // CI negative control
      for (int64_t i = 0; i < n; ++i)
        gx[i] += inv * (g[i] - gmean - y[i] * gymean);
    });
  }
  return out;
}

Tensor cross_entropy(Tape& tape, const Tensor& logits, int label) {
  if (logits.rank() != 1)
    shape_fail("cross_entropy", logits, "expected a rank-1 logits vector");
  const int64_t k = logits.dim(0);
  if (label < 0 || label >= k)
    throw DataError("cross_entropy: label " + std::to_string(label) +
                    " out of range for " + std::to_string(k) + " classes");
  const double* z = logits.data();
  double m = z[0];
  for (int64_t i = 1; i < k; ++i) m = std::max(m, z[i]);
  long double denom = 0.0;
  for (int64_t i = 0; i < k; ++i) denom += std::exp(z[i] - m);
  const double lse = m + static_cast<double>(std::log(denom));
  Tensor out = Tensor::scalar(lse - z[label]);
  if (want(tape, {&logits})) {
    tape.record("cross_entropy", {logits}, out, [logits, out, label, lse, k]() mutable {
      const double g = out.grad()[0];
      double* gz = logits.grad();
      const double* z = logits.data();
      for (int64_t i = 0; i < k; ++i) {
        const double p = std::exp(z[i] - lse);
        gz[i] += g * (p - (i == label ? 1.0 : 0.0));
      }
    });
  }
  return out;
}

}  // namespace ops
}  // namespace tarnet
