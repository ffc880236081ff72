#pragma once

// Row-major 2-D tensors in 64-bit floats and a reverse-mode tape.
//
// Every op appends its output node to the tape and, when recording, a
// closure that accumulates input gradients from the output gradient.
// Parameters live outside the tape; their grad buffers accumulate across
// calls until zeroed.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <deque>
#include <functional>
#include <limits>
#include <memory>
#include <numbers>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "cseae/errors.hpp"

namespace cseae::nn {

struct Tensor {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;
  std::vector<double> grad;

  Tensor() = default;
  Tensor(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill), grad(r * c, 0.0) {}
  Tensor(std::size_t r, std::size_t c, std::vector<double> values) : rows(r), cols(c), data(std::move(values)) {
    if (data.size() != r * c) throw ShapeError("tensor data length does not match shape");
    grad.assign(data.size(), 0.0);
  }

  std::size_t size() const noexcept { return data.size(); }
  double& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  double& g(std::size_t r, std::size_t c) { return grad[r * cols + c]; }

  std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }

  void zero_grad() { grad.assign(data.size(), 0.0); }
};

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

/// Non-owning handle to a tensor held by a tape or a parameter store.
class Var {
 public:
  Var() = default;
  explicit Var(Tensor* t) : t_(t) {}

  Tensor& operator*() const { return *t_; }
  Tensor* operator->() const { return t_; }
  Tensor* get() const { return t_; }
  explicit operator bool() const { return t_ != nullptr; }

  std::size_t rows() const { return t_->rows; }
  std::size_t cols() const { return t_->cols; }

 private:
  Tensor* t_ = nullptr;
};

class Tape {
 public:
  explicit Tape(bool record = true) : record_(record) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const noexcept { return record_; }

  /// Wraps an externally owned tensor (parameter or input).
  Var watch(Tensor& t) {
    if (t.grad.size() != t.data.size()) t.grad.assign(t.data.size(), 0.0);
    return Var(&t);
  }

  Var constant(Tensor t) {
    t.grad.assign(record_ ? t.data.size() : 0, 0.0);
    nodes_.push_back(std::move(t));
    return Var(&nodes_.back());
  }

  Var make(std::size_t rows, std::size_t cols) {
    nodes_.emplace_back();
    Tensor& t = nodes_.back();
    t.rows = rows;
    t.cols = cols;
    t.data.assign(rows * cols, 0.0);
    if (record_) t.grad.assign(rows * cols, 0.0);
    return Var(&t);
  }

  void on_backward(std::function<void()> fn) {
    if (record_) backward_.push_back(std::move(fn));
  }

  /// Seeds d(root)/d(root) = 1 and runs the recorded closures in reverse.
  void backward(Var root) {
    if (!record_) throw ShapeError("backward on a tape that is not recording");
    if (root.rows() != 1 || root.cols() != 1) throw ShapeError("backward root must be a scalar");
    root->grad[0] += 1.0;
    for (auto it = backward_.rbegin(); it != backward_.rend(); ++it) (*it)();
  }

  std::size_t node_count() const noexcept { return nodes_.size(); }

 private:
  bool record_;
  std::deque<Tensor> nodes_;
  std::vector<std::function<void()>> backward_;
};

namespace detail {
inline void require(bool ok, const char* what) {
  if (!ok) throw ShapeError(what);
}
}  // namespace detail

// ---------------------------------------------------------------------------
// Linear algebra
// ---------------------------------------------------------------------------

/// C = A B.
inline Var matmul(Tape& tape, Var a, Var b) {
  detail::require(a.cols() == b.rows(), "matmul: inner dimensions differ");
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  Var c = tape.make(m, n);
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = c->data.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a->data[i * k + p];
      const double* brow = b->data.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
  tape.on_backward([a, b, c, m, k, n] {
    for (std::size_t i = 0; i < m; ++i) {
      const double* gc = c->grad.data() + i * n;
      for (std::size_t p = 0; p < k; ++p) {
        const double* brow = b->data.data() + p * n;
        double acc = 0.0;
        for (std::size_t j = 0; j < n; ++j) acc += gc[j] * brow[j];
        a->grad[i * k + p] += acc;
        const double av = a->data[i * k + p];
        double* gb = b->grad.data() + p * n;
        for (std::size_t j = 0; j < n; ++j) gb[j] += av * gc[j];
      }
    }
  });
  return c;
}

/// C = A Bᵀ.
inline Var matmul_nt(Tape& tape, Var a, Var b) {
  detail::require(a.cols() == b.cols(), "matmul_nt: inner dimensions differ");
  const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
  Var c = tape.make(m, n);
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a->data.data() + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const double* brow = b->data.data() + j * k;
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
      c->data[i * n + j] = acc;
    }
  }
  tape.on_backward([a, b, c, m, k, n] {
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        const double gc = c->grad[i * n + j];
        if (gc == 0.0) continue;
        double* ga = a->grad.data() + i * k;
        double* gb = b->grad.data() + j * k;
        const double* arow = a->data.data() + i * k;
        const double* brow = b->data.data() + j * k;
        for (std::size_t p = 0; p < k; ++p) {
          ga[p] += gc * brow[p];
          gb[p] += gc * arow[p];
        }
      }
    }
  });
  return c;
}

// ---------------------------------------------------------------------------
// Elementwise
// ---------------------------------------------------------------------------

inline Var add(Tape& tape, Var a, Var b) {
  detail::require(a.rows() == b.rows() && a.cols() == b.cols(), "add: shape mismatch");
  Var c = tape.make(a.rows(), a.cols());
  for (std::size_t i = 0; i < c->size(); ++i) c->data[i] = a->data[i] + b->data[i];
  tape.on_backward([a, b, c] {
    for (std::size_t i = 0; i < c->size(); ++i) {
      a->grad[i] += c->grad[i];
      b->grad[i] += c->grad[i];
    }
  });
  return c;
}

/// A + 1·bᵀ, b a row vector broadcast over rows.
inline Var add_row(Tape& tape, Var a, Var b) {
  detail::require(b.rows() == 1 && b.cols() == a.cols(), "add_row: bias shape mismatch");
  const std::size_t m = a.rows(), n = a.cols();
  Var c = tape.make(m, n);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) c->data[i * n + j] = a->data[i * n + j] + b->data[j];
  }
  tape.on_backward([a, b, c, m, n] {
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        a->grad[i * n + j] += c->grad[i * n + j];
        b->grad[j] += c->grad[i * n + j];
      }
    }
  });
  return c;
}

inline Var mul(Tape& tape, Var a, Var b) {
  detail::require(a.rows() == b.rows() && a.cols() == b.cols(), "mul: shape mismatch");
  Var c = tape.make(a.rows(), a.cols());
  for (std::size_t i = 0; i < c->size(); ++i) c->data[i] = a->data[i] * b->data[i];
  tape.on_backward([a, b, c] {
    for (std::size_t i = 0; i < c->size(); ++i) {
      a->grad[i] += c->grad[i] * b->data[i];
      b->grad[i] += c->grad[i] * a->data[i];
    }
  });
  return c;
}

inline Var scale(Tape& tape, Var a, double s) {
  Var c = tape.make(a.rows(), a.cols());
  for (std::size_t i = 0; i < c->size(); ++i) c->data[i] = a->data[i] * s;
  tape.on_backward([a, c, s] {
    for (std::size_t i = 0; i < c->size(); ++i) a->grad[i] += c->grad[i] * s;
  });
  return c;
}

/// Exact GELU, x·Φ(x).
inline Var gelu(Tape& tape, Var a) {
  Var c = tape.make(a.rows(), a.cols());
  for (std::size_t i = 0; i < c->size(); ++i) {
    const double x = a->data[i];
    c->data[i] = 0.5 * x * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0));
  }
  tape.on_backward([a, c] {
    const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
    for (std::size_t i = 0; i < c->size(); ++i) {
      const double x = a->data[i];
      const double cdf = 0.5 * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0));
      const double pdf = inv_sqrt_2pi * std::exp(-0.5 * x * x);
      a->grad[i] += c->grad[i] * (cdf + x * pdf);
    }
  });
  return c;
}

// ---------------------------------------------------------------------------
// Normalization and softmax
// ---------------------------------------------------------------------------

/// Per-row layer normalization with affine gain and bias (1 x cols each).
inline Var layer_norm(Tape& tape, Var a, Var gain, Var bias, double eps = 1e-5) {
  detail::require(gain.rows() == 1 && gain.cols() == a.cols() && bias.rows() == 1 && bias.cols() == a.cols(),
                  "layer_norm: parameter shape mismatch");
  const std::size_t m = a.rows(), n = a.cols();
  Var c = tape.make(m, n);
  auto xhat = std::make_shared<std::vector<double>>(m * n);
  auto inv_std = std::make_shared<std::vector<double>>(m);
  for (std::size_t i = 0; i < m; ++i) {
    const double* x = a->data.data() + i * n;
    double mean = 0.0;
    for (std::size_t j = 0; j < n; ++j) mean += x[j];
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) var += (x[j] - mean) * (x[j] - mean);
    var /= static_cast<double>(n);
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)[i] = is;
    for (std::size_t j = 0; j < n; ++j) {
      const double h = (x[j] - mean) * is;
      (*xhat)[i * n + j] = h;
      c->data[i * n + j] = h * gain->data[j] + bias->data[j];
    }
  }
  tape.on_backward([a, gain, bias, c, m, n, xhat, inv_std] {
    std::vector<double> dh(n);
    for (std::size_t i = 0; i < m; ++i) {
      double mean_dh = 0.0, mean_dh_h = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        const double gc = c->grad[i * n + j];
        const double h = (*xhat)[i * n + j];
        gain->grad[j] += gc * h;
        bias->grad[j] += gc;
        dh[j] = gc * gain->data[j];
        mean_dh += dh[j];
        mean_dh_h += dh[j] * h;
      }
      mean_dh /= static_cast<double>(n);
      mean_dh_h /= static_cast<double>(n);
      for (std::size_t j = 0; j < n; ++j) {
        a->grad[i * n + j] += (*inv_std)[i] * (dh[j] - mean_dh - (*xhat)[i * n + j] * mean_dh_h);
      }
    }
  });
  return c;
}

/// Row softmax of (scale·A + mask). `mask` is additive (0 or -inf) and may
/// be null. Every row needs at least one finite entry.
inline Var softmax_rows(Tape& tape, Var a, const Tensor* mask = nullptr, double scale_by = 1.0) {
  if (mask) detail::require(mask->rows == a.rows() && mask->cols == a.cols(), "softmax_rows: mask shape mismatch");
  const std::size_t m = a.rows(), n = a.cols();
  Var c = tape.make(m, n);
  std::vector<double> z(n);
  for (std::size_t i = 0; i < m; ++i) {
    double mx = kNegInf;
    for (std::size_t j = 0; j < n; ++j) {
      z[j] = scale_by * a->data[i * n + j] + (mask ? mask->data[i * n + j] : 0.0);
      if (z[j] > mx) mx = z[j];
    }
    if (!std::isfinite(mx)) throw NumericError("softmax row with no finite entry");
    double sum = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      z[j] = std::exp(z[j] - mx);
      sum += z[j];
    }
    for (std::size_t j = 0; j < n; ++j) c->data[i * n + j] = z[j] / sum;
  }
  tape.on_backward([a, c, m, n, scale_by] {
    for (std::size_t i = 0; i < m; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < n; ++j) dot += c->grad[i * n + j] * c->data[i * n + j];
      for (std::size_t j = 0; j < n; ++j) {
        a->grad[i * n + j] += scale_by * c->data[i * n + j] * (c->grad[i * n + j] - dot);
      }
    }
  });
  return c;
}

inline Var log_softmax_rows(Tape& tape, Var a) {
  const std::size_t m = a.rows(), n = a.cols();
  Var c = tape.make(m, n);
  for (std::size_t i = 0; i < m; ++i) {
    double mx = kNegInf;
    for (std::size_t j = 0; j < n; ++j) mx = std::max(mx, a->data[i * n + j]);
    double sum = 0.0;
    for (std::size_t j = 0; j < n; ++j) sum += std::exp(a->data[i * n + j] - mx);
    const double lse = mx + std::log(sum);
    for (std::size_t j = 0; j < n; ++j) c->data[i * n + j] = a->data[i * n + j] - lse;
  }
  tape.on_backward([a, c, m, n] {
    for (std::size_t i = 0; i < m; ++i) {
      double gsum = 0.0;
      for (std::size_t j = 0; j < n; ++j) gsum += c->grad[i * n + j];
      for (std::size_t j = 0; j < n; ++j) {
        a->grad[i * n + j] += c->grad[i * n + j] - std::exp(c->data[i * n + j]) * gsum;
      }
    }
  });
  return c;
}

// ---------------------------------------------------------------------------
// Indexing and reshaping
// ---------------------------------------------------------------------------

/// Gathers rows of `table` by id.
inline Var embedding(Tape& tape, Var table, std::span<const int> ids) {
  const std::size_t h = table.cols();
  Var c = tape.make(ids.size(), h);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const auto id = static_cast<std::size_t>(ids[i]);
    if (ids[i] < 0 || id >= table.rows()) throw ShapeError("embedding: id out of range");
    std::copy_n(table->data.data() + id * h, h, c->data.data() + i * h);
  }
  std::vector<int> keep(ids.begin(), ids.end());
  tape.on_backward([table, c, h, keep = std::move(keep)] {
    for (std::size_t i = 0; i < keep.size(); ++i) {
      const auto id = static_cast<std::size_t>(keep[i]);
      for (std::size_t j = 0; j < h; ++j) table->grad[id * h + j] += c->grad[i * h + j];
    }
  });
  return c;
}

inline Var slice_rows(Tape& tape, Var a, std::size_t begin, std::size_t end) {
  detail::require(begin <= end && end <= a.rows(), "slice_rows: range out of bounds");
  const std::size_t n = a.cols();
  Var c = tape.make(end - begin, n);
  std::copy(a->data.begin() + static_cast<std::ptrdiff_t>(begin * n),
            a->data.begin() + static_cast<std::ptrdiff_t>(end * n), c->data.begin());
  tape.on_backward([a, c, begin, n] {
    for (std::size_t i = 0; i < c->size(); ++i) a->grad[begin * n + i] += c->grad[i];
  });
  return c;
}

inline Var slice_cols(Tape& tape, Var a, std::size_t begin, std::size_t end) {
  detail::require(begin <= end && end <= a.cols(), "slice_cols: range out of bounds");
  const std::size_t m = a.rows(), n = a.cols(), w = end - begin;
  Var c = tape.make(m, w);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < w; ++j) c->data[i * w + j] = a->data[i * n + begin + j];
  }
  tape.on_backward([a, c, m, n, w, begin] {
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < w; ++j) a->grad[i * n + begin + j] += c->grad[i * w + j];
    }
  });
  return c;
}

inline Var concat_rows(Tape& tape, Var a, Var b) {
  detail::require(a.cols() == b.cols(), "concat_rows: column mismatch");
  Var c = tape.make(a.rows() + b.rows(), a.cols());
  std::copy(a->data.begin(), a->data.end(), c->data.begin());
  std::copy(b->data.begin(), b->data.end(), c->data.begin() + static_cast<std::ptrdiff_t>(a->size()));
  tape.on_backward([a, b, c] {
    const std::size_t na = a->size();
    for (std::size_t i = 0; i < na; ++i) a->grad[i] += c->grad[i];
    for (std::size_t i = 0; i < b->size(); ++i) b->grad[i] += c->grad[na + i];
  });
  return c;
}

inline Var concat_cols(Tape& tape, const std::vector<Var>& parts) {
  detail::require(!parts.empty(), "concat_cols: no inputs");
  const std::size_t m = parts.front().rows();
  std::size_t n = 0;
  for (const auto& p : parts) {
    detail::require(p.rows() == m, "concat_cols: row mismatch");
    n += p.cols();
  }
  Var c = tape.make(m, n);
  std::size_t off = 0;
  for (const auto& p : parts) {
    const std::size_t w = p.cols();
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < w; ++j) c->data[i * n + off + j] = p->data[i * w + j];
    }
    off += w;
  }
  tape.on_backward([parts, c, m, n] {
    std::size_t o = 0;
    for (const auto& p : parts) {
      const std::size_t w = p.cols();
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < w; ++j) p->grad[i * w + j] += c->grad[i * n + o + j];
      }
      o += w;
    }
  });
  return c;
}

/// 1x1 tensor holding a(r, c).
inline Var pick(Tape& tape, Var a, std::size_t r, std::size_t col) {
  detail::require(r < a.rows() && col < a.cols(), "pick: index out of range");
  Var c = tape.make(1, 1);
  c->data[0] = a->at(r, col);
  tape.on_backward([a, c, r, col] { a->grad[r * a->cols + col] += c->grad[0]; });
  return c;
}

inline Var sum(Tape& tape, Var a) {
  Var c = tape.make(1, 1);
  double s = 0.0;
  for (double v : a->data) s += v;
  c->data[0] = s;
  tape.on_backward([a, c] {
    for (double& g : a->grad) g += c->grad[0];
  });
  return c;
}

/// Sum of 1x1 tensors, accumulated left to right.
inline Var add_scalars(Tape& tape, const std::vector<Var>& parts) {
  Var c = tape.make(1, 1);
  double s = 0.0;
  for (const auto& p : parts) {
    detail::require(p.rows() == 1 && p.cols() == 1, "add_scalars: non-scalar input");
    s += p->data[0];
  }
  c->data[0] = s;
  tape.on_backward([parts, c] {
    for (const auto& p : parts) p->grad[0] += c->grad[0];
  });
  return c;
}

}  // namespace cseae::nn
