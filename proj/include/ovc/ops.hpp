#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include "ovc/autodiff.hpp"
#include "ovc/tensor.hpp"

// Differentiable primitives. Every op computes its forward value eagerly and
// records a closure that maps the output gradient onto its inputs.

namespace ovc::ad {

namespace detail {

inline void require_rank(const Var& v, std::size_t rank, const char* op) {
  if (v.value().rank() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                         shape_str(v.shape()));
  }
}

inline void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
}

// Splits a shape around `axis` into (outer, n, inner) extents.
struct AxisSplit {
  std::size_t outer = 1, n = 1, inner = 1;
};

inline AxisSplit split_axis(const Shape& s, std::size_t axis) {
  if (axis >= s.size()) throw DimensionError("axis " + std::to_string(axis) + " out of range for " + shape_str(s));
  AxisSplit r;
  for (std::size_t i = 0; i < axis; ++i) r.outer *= s[i];
  r.n = s[axis];
  for (std::size_t i = axis + 1; i < s.size(); ++i) r.inner *= s[i];
  return r;
}

inline double stable_sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise arithmetic and reductions

inline Var add(const Var& a, const Var& b) {
  detail::require_same_shape(a, b, "add");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.value()[i];
  const auto ia = a.id(), ib = b.id();
  return a.tape().record(std::move(out), {a, b}, [ia, ib](Tape& t, const Tensor& g) {
    for (auto id : {ia, ib}) {
      if (!t.requires_grad(id)) continue;
      Tensor& gi = t.grad(id);
      for (std::size_t i = 0; i < g.size(); ++i) gi[i] += g[i];
    }
  });
}

inline Var sub(const Var& a, const Var& b) {
  detail::require_same_shape(a, b, "sub");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
  const auto ia = a.id(), ib = b.id();
  return a.tape().record(std::move(out), {a, b}, [ia, ib](Tape& t, const Tensor& g) {
    if (t.requires_grad(ia)) {
      Tensor& ga = t.grad(ia);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (t.requires_grad(ib)) {
      Tensor& gb = t.grad(ib);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
    }
  });
}

inline Var mul(const Var& a, const Var& b) {
  detail::require_same_shape(a, b, "mul");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  const auto ia = a.id(), ib = b.id();
  return a.tape().record(std::move(out), {a, b}, [ia, ib](Tape& t, const Tensor& g) {
    const Tensor& va = t.value(ia);
    const Tensor& vb = t.value(ib);
    if (t.requires_grad(ia)) {
      Tensor& ga = t.grad(ia);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * vb[i];
    }
    if (t.requires_grad(ib)) {
      Tensor& gb = t.grad(ib);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * va[i];
    }
  });
}

inline Var sum(const Var& x) {
  double s = 0.0;
  for (double v : x.value().data()) s += v;
  const auto ix = x.id();
  return x.tape().record(Tensor::scalar(s), {x}, [ix](Tape& t, const Tensor& g) {
    Tensor& gx = t.grad(ix);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[0];
  });
}

inline Var mean(const Var& x) {
  const double n = static_cast<double>(x.value().size());
  double s = 0.0;
  for (double v : x.value().data()) s += v;
  const auto ix = x.id();
  return x.tape().record(Tensor::scalar(s / n), {x}, [ix, n](Tape& t, const Tensor& g) {
    Tensor& gx = t.grad(ix);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[0] / n;
  });
}

inline Var reshape(const Var& x, Shape shape) {
  Tensor out = x.value().reshaped(std::move(shape));
  const auto ix = x.id();
  return x.tape().record(std::move(out), {x}, [ix](Tape& t, const Tensor& g) {
    Tensor& gx = t.grad(ix);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
  });
}

// ---------------------------------------------------------------------------
// Dense layers

/// y = x W^T + b for x [batch x in], W [out x in], b [out].
inline Var linear(const Var& x, const Var& weights, const Var& bias) {
  detail::require_rank(x, 2, "linear");
  detail::require_rank(weights, 2, "linear");
  const Tensor& xv = x.value();
  const Tensor& wv = weights.value();
  const std::size_t batch = xv.dim(0), in = xv.dim(1), out = wv.dim(0);
  if (wv.dim(1) != in) {
    throw DimensionError("linear: input " + shape_str(xv.shape()) + " incompatible with weights " +
                         shape_str(wv.shape()));
  }
  const bool has_bias = bias.valid();
  if (has_bias && (bias.value().rank() != 1 || bias.value().dim(0) != out)) {
    throw DimensionError("linear: bias " + shape_str(bias.shape()) + " incompatible with weights " +
                         shape_str(wv.shape()));
  }
  Tensor y({batch, out});
  for (std::size_t n = 0; n < batch; ++n) {
    const double* xr = &xv.data()[n * in];
    for (std::size_t o = 0; o < out; ++o) {
      const double* wr = &wv.data()[o * in];
      double acc = has_bias ? bias.value()[o] : 0.0;
      for (std::size_t i = 0; i < in; ++i) acc += xr[i] * wr[i];
      y[n * out + o] = acc;
    }
  }
  const auto ix = x.id(), iw = weights.id();
  const std::size_t ib = has_bias ? bias.id() : 0;
  std::vector<Var> inputs{x, weights};
  if (has_bias) inputs.push_back(bias);
  return x.tape().record(std::move(y), inputs, [=](Tape& t, const Tensor& g) {
    const Tensor& xv = t.value(ix);
    const Tensor& wv = t.value(iw);
    if (t.requires_grad(ix)) {
      Tensor& gx = t.grad(ix);
      for (std::size_t n = 0; n < batch; ++n)
        for (std::size_t o = 0; o < out; ++o) {
          const double go = g[n * out + o];
          if (go == 0.0) continue;
          for (std::size_t i = 0; i < in; ++i) gx[n * in + i] += go * wv[o * in + i];
        }
    }
    if (t.requires_grad(iw)) {
      Tensor& gw = t.grad(iw);
      for (std::size_t n = 0; n < batch; ++n)
        for (std::size_t o = 0; o < out; ++o) {
          const double go = g[n * out + o];
          if (go == 0.0) continue;
          for (std::size_t i = 0; i < in; ++i) gw[o * in + i] += go * xv[n * in + i];
        }
    }
    if (has_bias && t.requires_grad(ib)) {
      Tensor& gb = t.grad(ib);
      for (std::size_t n = 0; n < batch; ++n)
        for (std::size_t o = 0; o < out; ++o) gb[o] += g[n * out + o];
    }
  });
}

/// Bias-free projection y = x W^T.
inline Var linear(const Var& x, const Var& weights) { return linear(x, weights, Var{}); }

// ---------------------------------------------------------------------------
// Activations

enum class Activation { relu, elu, tanh, sigmoid };

inline const char* to_string(Activation kind) {
  switch (kind) {
    case Activation::relu: return "relu";
    case Activation::elu: return "elu";
    case Activation::tanh: return "tanh";
    case Activation::sigmoid: return "sigmoid";
  }
  return "?";
}

/// eLU uses alpha = 1: x for x > 0, exp(x) - 1 otherwise.
inline Var activation(const Var& x, Activation kind) {
  Tensor y = x.value();
  for (double& v : y.data()) {
    switch (kind) {
      case Activation::relu: v = v > 0.0 ? v : 0.0; break;
      case Activation::elu: v = v > 0.0 ? v : std::expm1(v); break;
      case Activation::tanh: v = std::tanh(v); break;
      case Activation::sigmoid: v = detail::stable_sigmoid(v); break;
    }
  }
  const auto ix = x.id();
  const std::size_t iy = x.tape().size();
  return x.tape().record(std::move(y), {x}, [ix, iy, kind](Tape& t, const Tensor& g) {
    const Tensor& xv = t.value(ix);
    const Tensor& yv = t.value(iy);
    Tensor& gx = t.grad(ix);
    for (std::size_t i = 0; i < g.size(); ++i) {
      double d = 0.0;
      switch (kind) {
        case Activation::relu: d = xv[i] > 0.0 ? 1.0 : 0.0; break;
        case Activation::elu: d = xv[i] > 0.0 ? 1.0 : yv[i] + 1.0; break;
        case Activation::tanh: d = 1.0 - yv[i] * yv[i]; break;
        case Activation::sigmoid: d = yv[i] * (1.0 - yv[i]); break;
      }
      gx[i] += g[i] * d;
    }
  });
}

inline Var relu(const Var& x) { return activation(x, Activation::relu); }
inline Var elu(const Var& x) { return activation(x, Activation::elu); }
inline Var tanh(const Var& x) { return activation(x, Activation::tanh); }
inline Var sigmoid(const Var& x) { return activation(x, Activation::sigmoid); }

/// Softmax along `axis`, with max subtraction.
inline Var softmax(const Var& x, std::size_t axis) {
  const auto sp = detail::split_axis(x.shape(), axis);
  if (sp.n == 0) throw DimensionError("softmax over an empty axis");
  Tensor y = x.value();
  for (std::size_t o = 0; o < sp.outer; ++o)
    for (std::size_t in = 0; in < sp.inner; ++in) {
      const std::size_t base = o * sp.n * sp.inner + in;
      double m = -std::numeric_limits<double>::infinity();
      for (std::size_t k = 0; k < sp.n; ++k) m = std::max(m, y[base + k * sp.inner]);
      double z = 0.0;
      for (std::size_t k = 0; k < sp.n; ++k) {
        double& v = y[base + k * sp.inner];
        v = std::exp(v - m);
        z += v;
      }
      for (std::size_t k = 0; k < sp.n; ++k) y[base + k * sp.inner] /= z;
    }
  const auto ix = x.id();
  const std::size_t iy = x.tape().size();
  return x.tape().record(std::move(y), {x}, [ix, iy, sp](Tape& t, const Tensor& g) {
    const Tensor& yv = t.value(iy);
    Tensor& gx = t.grad(ix);
    for (std::size_t o = 0; o < sp.outer; ++o)
      for (std::size_t in = 0; in < sp.inner; ++in) {
        const std::size_t base = o * sp.n * sp.inner + in;
        double dot = 0.0;
        for (std::size_t k = 0; k < sp.n; ++k) dot += g[base + k * sp.inner] * yv[base + k * sp.inner];
        for (std::size_t k = 0; k < sp.n; ++k) {
          const std::size_t idx = base + k * sp.inner;
          gx[idx] += yv[idx] * (g[idx] - dot);
        }
      }
  });
}

// ---------------------------------------------------------------------------
// Batch normalization

enum class Mode { train, eval };

/// Running statistics and hyperparameters of one batch-norm layer. gamma and
/// beta live in the ParameterStore and are passed to batch_norm as Vars.
struct BatchNormState {
  Tensor running_mean;
  Tensor running_var;
  double momentum = 0.1;
  double epsilon = 1e-5;
  Mode mode = Mode::train;

  BatchNormState() : BatchNormState(0) {}
  explicit BatchNormState(std::size_t features)
      : running_mean({features}, 0.0), running_var({features}, 1.0) {}
};

/// Train mode normalizes by the biased batch variance and folds the batch
/// statistics into the running averages (running variance uses the unbiased
/// estimate). Eval mode reads only the running statistics.
inline Var batch_norm(const Var& x, const Var& gamma, const Var& beta, BatchNormState& state) {
  detail::require_rank(x, 2, "batch_norm");
  const std::size_t batch = x.value().dim(0), f = x.value().dim(1);
  if (gamma.value().size() != f || beta.value().size() != f || state.running_mean.size() != f ||
      state.running_var.size() != f) {
    throw DimensionError("batch_norm: " + std::to_string(f) + " features but gamma " + shape_str(gamma.shape()) +
                         ", running stats " + shape_str(state.running_mean.shape()));
  }
  const Tensor& xv = x.value();
  const Tensor& gv = gamma.value();
  const Tensor& bv = beta.value();
  Tensor y({batch, f});
  Tensor xhat({batch, f});
  Tensor inv_std({f});
  const bool training = state.mode == Mode::train;
  if (training) {
    if (batch < 2) throw std::invalid_argument("batch_norm: train mode needs a batch of at least 2 (got 1)");
    for (std::size_t j = 0; j < f; ++j) {
      double m = 0.0;
      for (std::size_t n = 0; n < batch; ++n) m += xv[n * f + j];
      m /= static_cast<double>(batch);
      double var = 0.0;
      for (std::size_t n = 0; n < batch; ++n) var += (xv[n * f + j] - m) * (xv[n * f + j] - m);
      var /= static_cast<double>(batch);
      inv_std[j] = 1.0 / std::sqrt(var + state.epsilon);
      for (std::size_t n = 0; n < batch; ++n) xhat[n * f + j] = (xv[n * f + j] - m) * inv_std[j];
      const double unbiased = var * static_cast<double>(batch) / static_cast<double>(batch - 1);
      state.running_mean[j] = (1.0 - state.momentum) * state.running_mean[j] + state.momentum * m;
      state.running_var[j] = (1.0 - state.momentum) * state.running_var[j] + state.momentum * unbiased;
    }
  } else {
    for (std::size_t j = 0; j < f; ++j) {
      inv_std[j] = 1.0 / std::sqrt(state.running_var[j] + state.epsilon);
      for (std::size_t n = 0; n < batch; ++n)
        xhat[n * f + j] = (xv[n * f + j] - state.running_mean[j]) * inv_std[j];
    }
  }
  for (std::size_t n = 0; n < batch; ++n)
    for (std::size_t j = 0; j < f; ++j) y[n * f + j] = gv[j] * xhat[n * f + j] + bv[j];

  const auto ix = x.id(), ig = gamma.id(), ib = beta.id();
  return x.tape().record(
      std::move(y), {x, gamma, beta},
      [=, xhat = std::move(xhat), inv_std = std::move(inv_std)](Tape& t, const Tensor& g) {
        const Tensor& gv = t.value(ig);
        if (t.requires_grad(ig)) {
          Tensor& gg = t.grad(ig);
          for (std::size_t n = 0; n < batch; ++n)
            for (std::size_t j = 0; j < f; ++j) gg[j] += g[n * f + j] * xhat[n * f + j];
        }
        if (t.requires_grad(ib)) {
          Tensor& gb = t.grad(ib);
          for (std::size_t n = 0; n < batch; ++n)
            for (std::size_t j = 0; j < f; ++j) gb[j] += g[n * f + j];
        }
        if (!t.requires_grad(ix)) return;
        Tensor& gx = t.grad(ix);
        const double bn = static_cast<double>(batch);
        for (std::size_t j = 0; j < f; ++j) {
          if (!training) {
            for (std::size_t n = 0; n < batch; ++n) gx[n * f + j] += g[n * f + j] * gv[j] * inv_std[j];
            continue;
          }
          double sum_g = 0.0, sum_gx = 0.0;
          for (std::size_t n = 0; n < batch; ++n) {
            const double gh = g[n * f + j] * gv[j];
            sum_g += gh;
            sum_gx += gh * xhat[n * f + j];
          }
          for (std::size_t n = 0; n < batch; ++n) {
            const double gh = g[n * f + j] * gv[j];
            gx[n * f + j] += inv_std[j] / bn * (bn * gh - sum_g - xhat[n * f + j] * sum_gx);
          }
        }
      });
}

// ---------------------------------------------------------------------------
// Structural ops

/// Concatenation along `axis`; all other extents must agree.
inline Var concat(const std::vector<Var>& parts, std::size_t axis) {
  if (parts.empty()) throw DimensionError("concat: empty list of parts");
  const Shape& first = parts.front().shape();
  if (axis >= first.size()) throw DimensionError("concat: axis out of range for " + shape_str(first));
  Shape out_shape = first;
  out_shape[axis] = 0;
  for (const Var& p : parts) {
    const Shape& s = p.shape();
    bool ok = s.size() == first.size();
    for (std::size_t d = 0; ok && d < s.size(); ++d) ok = d == axis || s[d] == first[d];
    if (!ok) throw DimensionError("concat: part " + shape_str(s) + " incompatible with " + shape_str(first));
    out_shape[axis] += s[axis];
  }
  const auto sp = detail::split_axis(out_shape, axis);
  Tensor out(out_shape);
  std::vector<std::size_t> ids, widths;
  std::size_t offset = 0;
  for (const Var& p : parts) {
    const std::size_t w = p.shape()[axis] * sp.inner;
    const Tensor& v = p.value();
    for (std::size_t o = 0; o < sp.outer; ++o)
      std::copy_n(&v.data()[o * w], w, &out.data()[o * sp.n * sp.inner + offset]);
    offset += w;
    ids.push_back(p.id());
    widths.push_back(w);
  }
  const std::size_t row = sp.n * sp.inner, outer = sp.outer;
  return parts.front().tape().record(std::move(out), parts, [=](Tape& t, const Tensor& g) {
    std::size_t off = 0;
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (t.requires_grad(ids[k])) {
        Tensor& gp = t.grad(ids[k]);
        for (std::size_t o = 0; o < outer; ++o)
          for (std::size_t i = 0; i < widths[k]; ++i) gp[o * widths[k] + i] += g[o * row + off + i];
      }
      off += widths[k];
    }
  });
}

/// Rows of a matrix picked by index (repeats allowed); backward scatter-adds.
inline Var gather_rows(const Var& x, std::vector<std::size_t> rows) {
  detail::require_rank(x, 2, "gather_rows");
  const std::size_t n = x.value().dim(0), c = x.value().dim(1);
  Tensor out({rows.size(), c});
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r] >= n) throw DimensionError("gather_rows: row " + std::to_string(rows[r]) + " of " + std::to_string(n));
    std::copy_n(&x.value().data()[rows[r] * c], c, &out.data()[r * c]);
  }
  const auto ix = x.id();
  return x.tape().record(std::move(out), {x}, [ix, c, rows = std::move(rows)](Tape& t, const Tensor& g) {
    Tensor& gx = t.grad(ix);
    for (std::size_t r = 0; r < rows.size(); ++r)
      for (std::size_t k = 0; k < c; ++k) gx[rows[r] * c + k] += g[r * c + k];
  });
}

/// Scales row r of x [n x m] by s[r], with s of shape [n x 1] or [n].
inline Var scale_rows(const Var& x, const Var& s) {
  detail::require_rank(x, 2, "scale_rows");
  const std::size_t n = x.value().dim(0), m = x.value().dim(1);
  if (s.value().size() != n) {
    throw DimensionError("scale_rows: " + shape_str(x.shape()) + " scaled by " + shape_str(s.shape()));
  }
  Tensor out = x.value();
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t k = 0; k < m; ++k) out[r * m + k] *= s.value()[r];
  const auto ix = x.id(), is = s.id();
  return x.tape().record(std::move(out), {x, s}, [=](Tape& t, const Tensor& g) {
    const Tensor& xv = t.value(ix);
    const Tensor& sv = t.value(is);
    if (t.requires_grad(ix)) {
      Tensor& gx = t.grad(ix);
      for (std::size_t r = 0; r < n; ++r)
        for (std::size_t k = 0; k < m; ++k) gx[r * m + k] += g[r * m + k] * sv[r];
    }
    if (t.requires_grad(is)) {
      Tensor& gs = t.grad(is);
      for (std::size_t r = 0; r < n; ++r) {
        double acc = 0.0;
        for (std::size_t k = 0; k < m; ++k) acc += g[r * m + k] * xv[r * m + k];
        gs[r] += acc;
      }
    }
  });
}

/// Mean over consecutive groups of `group` rows: [n*group x c] -> [n x c].
inline Var segment_mean(const Var& x, std::size_t group) {
  detail::require_rank(x, 2, "segment_mean");
  const std::size_t rows = x.value().dim(0), c = x.value().dim(1);
  if (group == 0 || rows % group != 0) {
    throw DimensionError("segment_mean: " + std::to_string(rows) + " rows not divisible by " + std::to_string(group));
  }
  const std::size_t n = rows / group;
  Tensor out({n, c});
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t r = 0; r < group; ++r)
      for (std::size_t k = 0; k < c; ++k) out[s * c + k] += x.value()[(s * group + r) * c + k];
  for (double& v : out.data()) v /= static_cast<double>(group);
  const auto ix = x.id();
  return x.tape().record(std::move(out), {x}, [=](Tape& t, const Tensor& g) {
    Tensor& gx = t.grad(ix);
    const double inv = 1.0 / static_cast<double>(group);
    for (std::size_t s = 0; s < n; ++s)
      for (std::size_t r = 0; r < group; ++r)
        for (std::size_t k = 0; k < c; ++k) gx[(s * group + r) * c + k] += g[s * c + k] * inv;
  });
}

/// Batched matrix product: [B x n x m] . [B x m x p] -> [B x n x p].
inline Var bmm(const Var& a, const Var& b) {
  detail::require_rank(a, 3, "bmm");
  detail::require_rank(b, 3, "bmm");
  const std::size_t B = a.value().dim(0), n = a.value().dim(1), m = a.value().dim(2), p = b.value().dim(2);
  if (b.value().dim(0) != B || b.value().dim(1) != m) {
    throw DimensionError("bmm: " + shape_str(a.shape()) + " times " + shape_str(b.shape()));
  }
  Tensor out({B, n, p});
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  for (std::size_t q = 0; q < B; ++q)
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t k = 0; k < m; ++k) {
        const double aik = av[(q * n + i) * m + k];
        for (std::size_t j = 0; j < p; ++j) out[(q * n + i) * p + j] += aik * bv[(q * m + k) * p + j];
      }
  const auto ia = a.id(), ib = b.id();
  return a.tape().record(std::move(out), {a, b}, [=](Tape& t, const Tensor& g) {
    const Tensor& av = t.value(ia);
    const Tensor& bv = t.value(ib);
    if (t.requires_grad(ia)) {
      Tensor& ga = t.grad(ia);
      for (std::size_t q = 0; q < B; ++q)
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t k = 0; k < m; ++k) {
            double acc = 0.0;
            for (std::size_t j = 0; j < p; ++j) acc += g[(q * n + i) * p + j] * bv[(q * m + k) * p + j];
            ga[(q * n + i) * m + k] += acc;
          }
    }
    if (t.requires_grad(ib)) {
      Tensor& gb = t.grad(ib);
      for (std::size_t q = 0; q < B; ++q)
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t k = 0; k < m; ++k) {
            const double aik = av[(q * n + i) * m + k];
            for (std::size_t j = 0; j < p; ++j) gb[(q * m + k) * p + j] += aik * g[(q * n + i) * p + j];
          }
    }
  });
}

/// L1 distance along the last axis. A vector pair yields shape {1}; matrices
/// [m x n] yield [m x 1]. The subgradient at a tie is 0.
inline Var l1_distance(const Var& a, const Var& b) {
  detail::require_same_shape(a, b, "l1_distance");
  const Shape& s = a.shape();
  if (s.empty() || s.size() > 2) throw DimensionError("l1_distance: expected rank 1 or 2, got " + shape_str(s));
  const std::size_t n = s.back();
  const std::size_t rows = a.value().size() / std::max<std::size_t>(n, 1);
  Tensor out(s.size() == 1 ? Shape{1} : Shape{rows, 1});
  for (std::size_t r = 0; r < rows; ++r) {
    double acc = 0.0;
    for (std::size_t k = 0; k < n; ++k) acc += std::abs(a.value()[r * n + k] - b.value()[r * n + k]);
    out[r] = acc;
  }
  const auto ia = a.id(), ib = b.id();
  return a.tape().record(std::move(out), {a, b}, [=](Tape& t, const Tensor& g) {
    const Tensor& av = t.value(ia);
    const Tensor& bv = t.value(ib);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t k = 0; k < n; ++k) {
        const double d = av[r * n + k] - bv[r * n + k];
        const double sgn = d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0);
        if (sgn == 0.0) continue;
        if (t.requires_grad(ia)) t.grad(ia)[r * n + k] += g[r] * sgn;
        if (t.requires_grad(ib)) t.grad(ib)[r * n + k] -= g[r] * sgn;
      }
  });
}

}  // namespace ovc::ad
