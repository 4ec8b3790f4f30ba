#pragma once

#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "mvr/core/kernels.hpp"
#include "mvr/core/tensor.hpp"

namespace mvr {

// Reverse-mode tape. Operations execute eagerly and record a backward rule;
// nodes are stored in creation order, which is a topological order by
// construction, so one reverse sweep visits each node exactly once.
//
// backward() accumulates: gradients of a sweep are added onto whatever is
// already stored, so two sweeps without zero_grad() yield exactly twice the
// gradient. A tape is single-threaded (one tape per training step); the
// kernels it calls may use OpenMP internally.
template <class T>
class Tape {
 public:
  // External tensor (parameter or input). Data is copied at registration
  // time; gradients are written back to p->grad when p->requires_grad.
  int leaf(Tensor<T>* p) {
    Node n;
    n.value = *p;
    n.value.grad.clear();
    n.external = p;
    n.needs = p->requires_grad;
    nodes_.push_back(std::move(n));
    return static_cast<int>(nodes_.size()) - 1;
  }

  // Owned constant; never receives gradients.
  int input(Tensor<T> v) {
    Node n;
    n.value = std::move(v);
    n.needs = false;
    nodes_.push_back(std::move(n));
    return static_cast<int>(nodes_.size()) - 1;
  }

  int scalar_input(T v) { return input(Tensor<T>({1}, {v})); }

  const Tensor<T>& val(int id) const { return nodes_.at(id).value; }
  const std::vector<T>& grad(int id) const { return nodes_.at(id).grad; }
  size_t size() const { return nodes_.size(); }

  void zero_grad() {
    for (auto& n : nodes_) n.grad.clear();
  }

  // ---- arithmetic ----

  int matmul(int a, int b) {
    const auto& ta = v(a);
    const auto& tb = v(b);
    require2(ta, "matmul lhs");
    require2(tb, "matmul rhs");
    if (ta.shape[1] != tb.shape[0])
      throw std::invalid_argument("matmul dimension mismatch: " + shape_str(ta.shape) + " * " +
                                  shape_str(tb.shape));
    const int m = ta.shape[0], k = ta.shape[1], n = tb.shape[1];
    Tensor<T> out = Tensor<T>::zeros({m, n});
    kern::matmul(ta.data.data(), tb.data.data(), out.data.data(), m, k, n);
    return record(std::move(out), {a, b}, [a, b, m, k, n](BackCtx& c) {
      if (auto* ga = c.buf(a))
        kern::matmul_abT_acc(c.gout.data(), c.t.v(b).data.data(), ga->data(), m, n, k);
      if (auto* gb = c.buf(b))
        kern::matmul_aTb_acc(c.t.v(a).data.data(), c.gout.data(), gb->data(), m, k, n);
    });
  }

  int add(int a, int b) { return ewise2(a, b, "add", [](T x, T y) { return x + y; }, T(1), T(1)); }
  int sub(int a, int b) { return ewise2(a, b, "sub", [](T x, T y) { return x - y; }, T(1), T(-1)); }

  int mul(int a, int b) {
    const auto& ta = v(a);
    const auto& tb = v(b);
    same_shape(ta, tb, "mul");
    Tensor<T> out = ta;
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] *= tb.data[i];
    return record(std::move(out), {a, b}, [a, b](BackCtx& c) {
      const auto& da = c.t.v(a).data;
      const auto& db = c.t.v(b).data;
      if (auto* ga = c.buf(a))
        for (size_t i = 0; i < da.size(); ++i) (*ga)[i] += c.gout[i] * db[i];
      if (auto* gb = c.buf(b))
        for (size_t i = 0; i < da.size(); ++i) (*gb)[i] += c.gout[i] * da[i];
    });
  }

  int scale(int a, T s) {
    Tensor<T> out = v(a);
    for (auto& x : out.data) x *= s;
    return record(std::move(out), {a}, [a, s](BackCtx& c) {
      if (auto* ga = c.buf(a))
        for (size_t i = 0; i < c.gout.size(); ++i) (*ga)[i] += s * c.gout[i];
    });
  }

  int add_scalar(int a, T s) {
    Tensor<T> out = v(a);
    for (auto& x : out.data) x += s;
    return record(std::move(out), {a}, [a](BackCtx& c) {
      if (auto* ga = c.buf(a))
        for (size_t i = 0; i < c.gout.size(); ++i) (*ga)[i] += c.gout[i];
    });
  }

  // out[r][c] = a[r][c] + vrow[c]
  int add_rowvec(int a, int vrow) {
    const auto& ta = v(a);
    const auto& tv = v(vrow);
    require2(ta, "add_rowvec lhs");
    if (static_cast<int>(tv.numel()) != ta.shape[1])
      throw std::invalid_argument("add_rowvec: vector " + shape_str(tv.shape) +
                                  " does not match columns of " + shape_str(ta.shape));
    Tensor<T> out = ta;
    const int R = ta.shape[0], C = ta.shape[1];
    for (int r = 0; r < R; ++r)
      for (int c = 0; c < C; ++c) out.data[static_cast<size_t>(r) * C + c] += tv.data[c];
    return record(std::move(out), {a, vrow}, [a, vrow, R, C](BackCtx& c) {
      if (auto* ga = c.buf(a))
        for (size_t i = 0; i < c.gout.size(); ++i) (*ga)[i] += c.gout[i];
      if (auto* gv = c.buf(vrow))
        for (int r = 0; r < R; ++r)
          for (int k = 0; k < C; ++k) (*gv)[k] += c.gout[static_cast<size_t>(r) * C + k];
    });
  }

  // out[r][c] = a[r][c] * vrow[c]
  int mul_rowvec(int a, int vrow) {
    const auto& ta = v(a);
    const auto& tv = v(vrow);
    require2(ta, "mul_rowvec lhs");
    if (static_cast<int>(tv.numel()) != ta.shape[1])
      throw std::invalid_argument("mul_rowvec: vector " + shape_str(tv.shape) +
                                  " does not match columns of " + shape_str(ta.shape));
    Tensor<T> out = ta;
    const int R = ta.shape[0], C = ta.shape[1];
    for (int r = 0; r < R; ++r)
      for (int c = 0; c < C; ++c) out.data[static_cast<size_t>(r) * C + c] *= tv.data[c];
    return record(std::move(out), {a, vrow}, [a, vrow, R, C](BackCtx& c) {
      const auto& da = c.t.v(a).data;
      const auto& dv = c.t.v(vrow).data;
      if (auto* ga = c.buf(a))
        for (int r = 0; r < R; ++r)
          for (int k = 0; k < C; ++k)
            (*ga)[static_cast<size_t>(r) * C + k] += c.gout[static_cast<size_t>(r) * C + k] * dv[k];
      if (auto* gv = c.buf(vrow))
        for (int r = 0; r < R; ++r)
          for (int k = 0; k < C; ++k)
            (*gv)[k] += c.gout[static_cast<size_t>(r) * C + k] * da[static_cast<size_t>(r) * C + k];
    });
  }

  // ---- nonlinearities ----

  int softmax_rows(int a) {
    const auto& ta = v(a);
    require2(ta, "softmax");
    const int R = ta.shape[0], C = ta.shape[1];
    Tensor<T> out = ta;
    for (int r = 0; r < R; ++r) {
      T* row = out.data.data() + static_cast<size_t>(r) * C;
      T mx = row[0];
      for (int c = 1; c < C; ++c) mx = std::max(mx, row[c]);
      T denom = T(0);
      for (int c = 0; c < C; ++c) {
        row[c] = std::exp(row[c] - mx);
        denom += row[c];
      }
      for (int c = 0; c < C; ++c) row[c] /= denom;
    }
    return record(std::move(out), {a}, [a, R, C](BackCtx& c) {
      auto* ga = c.buf(a);
      if (!ga) return;
      const auto& y = c.t.v(c.out_id).data;
      for (int r = 0; r < R; ++r) {
        const size_t off = static_cast<size_t>(r) * C;
        T dot = T(0);
        for (int k = 0; k < C; ++k) dot += c.gout[off + k] * y[off + k];
        for (int k = 0; k < C; ++k) (*ga)[off + k] += y[off + k] * (c.gout[off + k] - dot);
      }
    });
  }

  // Per-row standardization followed by affine; gain/bias have length C.
  int layernorm_rows(int x, int gain, int bias, T eps = T(1e-6)) {
    const auto& tx = v(x);
    require2(tx, "layernorm");
    const int R = tx.shape[0], C = tx.shape[1];
    const auto& tg = v(gain);
    const auto& tb = v(bias);
    if (static_cast<int>(tg.numel()) != C || static_cast<int>(tb.numel()) != C)
      throw std::invalid_argument("layernorm: gain/bias must have length " + std::to_string(C));
    Tensor<T> out = Tensor<T>::zeros({R, C});
    std::vector<T> xhat(static_cast<size_t>(R) * C), inv_sd(R);
    for (int r = 0; r < R; ++r) {
      const T* row = tx.data.data() + static_cast<size_t>(r) * C;
      T mu = T(0);
      for (int c = 0; c < C; ++c) mu += row[c];
      mu /= C;
      T var = T(0);
      for (int c = 0; c < C; ++c) var += (row[c] - mu) * (row[c] - mu);
      var /= C;
      const T isd = T(1) / std::sqrt(var + eps);
      inv_sd[r] = isd;
      for (int c = 0; c < C; ++c) {
        const T xh = (row[c] - mu) * isd;
        xhat[static_cast<size_t>(r) * C + c] = xh;
        out.data[static_cast<size_t>(r) * C + c] = xh * tg.data[c] + tb.data[c];
      }
    }
    return record(std::move(out), {x, gain, bias},
                  [x, gain, bias, R, C, xhat = std::move(xhat), inv_sd = std::move(inv_sd)](BackCtx& c) {
                    const auto& gv = c.t.v(gain).data;
                    auto* gx = c.buf(x);
                    auto* gg = c.buf(gain);
                    auto* gb = c.buf(bias);
                    for (int r = 0; r < R; ++r) {
                      const size_t off = static_cast<size_t>(r) * C;
                      T mean_u = T(0), mean_ux = T(0);
                      for (int k = 0; k < C; ++k) {
                        const T u = c.gout[off + k] * gv[k];
                        mean_u += u;
                        mean_ux += u * xhat[off + k];
                      }
                      mean_u /= C;
                      mean_ux /= C;
                      for (int k = 0; k < C; ++k) {
                        const T u = c.gout[off + k] * gv[k];
                        if (gx) (*gx)[off + k] += inv_sd[r] * (u - mean_u - xhat[off + k] * mean_ux);
                        if (gg) (*gg)[k] += c.gout[off + k] * xhat[off + k];
                        if (gb) (*gb)[k] += c.gout[off + k];
                      }
                    }
                  });
  }

  int gelu(int a) {
    const auto& ta = v(a);
    Tensor<T> out = ta;
    for (auto& x : out.data) x = T(0.5) * x * (T(1) + std::erf(x * T(0.7071067811865476)));
    return record(std::move(out), {a}, [a](BackCtx& c) {
      auto* ga = c.buf(a);
      if (!ga) return;
      const auto& da = c.t.v(a).data;
      for (size_t i = 0; i < da.size(); ++i) {
        const T x = da[i];
        const T cdf = T(0.5) * (T(1) + std::erf(x * T(0.7071067811865476)));
        const T pdf = T(0.3989422804014327) * std::exp(T(-0.5) * x * x);
        (*ga)[i] += c.gout[i] * (cdf + x * pdf);
      }
    });
  }

  int exp(int a) {
    Tensor<T> out = v(a);
    for (auto& x : out.data) x = std::exp(x);
    return record(std::move(out), {a}, [a](BackCtx& c) {
      auto* ga = c.buf(a);
      if (!ga) return;
      const auto& y = c.t.v(c.out_id).data;
      for (size_t i = 0; i < y.size(); ++i) (*ga)[i] += c.gout[i] * y[i];
    });
  }

  int log(int a) {
    const auto& ta = v(a);
    Tensor<T> out = ta;
    for (auto& x : out.data) {
      if (x <= T(0)) throw std::domain_error("log of non-positive value");
      x = std::log(x);
    }
    return record(std::move(out), {a}, [a](BackCtx& c) {
      auto* ga = c.buf(a);
      if (!ga) return;
      const auto& da = c.t.v(a).data;
      for (size_t i = 0; i < da.size(); ++i) (*ga)[i] += c.gout[i] / da[i];
    });
  }

  int sigmoid(int a) {
    Tensor<T> out = v(a);
    for (auto& x : out.data) x = T(1) / (T(1) + std::exp(-x));
    return record(std::move(out), {a}, [a](BackCtx& c) {
      auto* ga = c.buf(a);
      if (!ga) return;
      const auto& y = c.t.v(c.out_id).data;
      for (size_t i = 0; i < y.size(); ++i) (*ga)[i] += c.gout[i] * y[i] * (T(1) - y[i]);
    });
  }

  int abs(int a) {
    const auto& ta = v(a);
    Tensor<T> out = ta;
    for (auto& x : out.data) x = std::abs(x);
    return record(std::move(out), {a}, [a](BackCtx& c) {
      auto* ga = c.buf(a);
      if (!ga) return;
      const auto& da = c.t.v(a).data;
      for (size_t i = 0; i < da.size(); ++i)
        (*ga)[i] += c.gout[i] * (da[i] > T(0) ? T(1) : (da[i] < T(0) ? T(-1) : T(0)));
    });
  }

  // y = sqrt(x) with a zero-slope guard at the origin (keeps Euclidean norms
  // finite-gradient at a perfect fit).
  int sqrt_guard(int a, T tiny = T(1e-18)) {
    const auto& ta = v(a);
    Tensor<T> out = ta;
    for (auto& x : out.data) x = std::sqrt(std::max(x, T(0)));
    return record(std::move(out), {a}, [a, tiny](BackCtx& c) {
      auto* ga = c.buf(a);
      if (!ga) return;
      const auto& da = c.t.v(a).data;
      const auto& y = c.t.v(c.out_id).data;
      for (size_t i = 0; i < da.size(); ++i)
        if (da[i] > tiny) (*ga)[i] += c.gout[i] * T(0.5) / y[i];
    });
  }

  int sum(int a) {
    const auto& ta = v(a);
    T s = T(0);
    for (const auto& x : ta.data) s += x;
    return record(Tensor<T>({1}, {s}), {a}, [a](BackCtx& c) {
      if (auto* ga = c.buf(a))
        for (auto& g : *ga) g += c.gout[0];
    });
  }

  int mean(int a) { return scale(sum(a), T(1) / T(v(a).numel())); }

  // ---- shape plumbing ----

  int reshape(int a, std::vector<int> shape) {
    const auto& ta = v(a);
    if (shape_numel(shape) != ta.numel())
      throw std::invalid_argument("reshape " + shape_str(ta.shape) + " -> " + shape_str(shape) +
                                  " changes element count");
    Tensor<T> out(std::move(shape), ta.data);
    return record(std::move(out), {a}, [a](BackCtx& c) {
      if (auto* ga = c.buf(a))
        for (size_t i = 0; i < c.gout.size(); ++i) (*ga)[i] += c.gout[i];
    });
  }

  int transpose(int a) {
    const auto& ta = v(a);
    require2(ta, "transpose");
    const int R = ta.shape[0], C = ta.shape[1];
    Tensor<T> out = Tensor<T>::zeros({C, R});
    for (int r = 0; r < R; ++r)
      for (int c = 0; c < C; ++c)
        out.data[static_cast<size_t>(c) * R + r] = ta.data[static_cast<size_t>(r) * C + c];
    return record(std::move(out), {a}, [a, R, C](BackCtx& c) {
      auto* ga = c.buf(a);
      if (!ga) return;
      for (int r = 0; r < R; ++r)
        for (int k = 0; k < C; ++k)
          (*ga)[static_cast<size_t>(r) * C + k] += c.gout[static_cast<size_t>(k) * R + r];
    });
  }

  int slice_rows(int a, int r0, int n) {
    const auto& ta = v(a);
    require2(ta, "slice_rows");
    const int R = ta.shape[0], C = ta.shape[1];
    if (r0 < 0 || n < 0 || r0 + n > R)
      throw std::invalid_argument("slice_rows [" + std::to_string(r0) + "," + std::to_string(r0 + n) +
                                  ") out of range for " + shape_str(ta.shape));
    Tensor<T> out = Tensor<T>::zeros({n, C});
    std::copy(ta.data.begin() + static_cast<size_t>(r0) * C,
              ta.data.begin() + static_cast<size_t>(r0 + n) * C, out.data.begin());
    return record(std::move(out), {a}, [a, r0, n, C](BackCtx& c) {
      auto* ga = c.buf(a);
      if (!ga) return;
      for (size_t i = 0; i < static_cast<size_t>(n) * C; ++i)
        (*ga)[static_cast<size_t>(r0) * C + i] += c.gout[i];
    });
  }

  int slice_cols(int a, int c0, int n) {
    const auto& ta = v(a);
    require2(ta, "slice_cols");
    const int R = ta.shape[0], C = ta.shape[1];
    if (c0 < 0 || n < 0 || c0 + n > C)
      throw std::invalid_argument("slice_cols [" + std::to_string(c0) + "," + std::to_string(c0 + n) +
                                  ") out of range for " + shape_str(ta.shape));
    Tensor<T> out = Tensor<T>::zeros({R, n});
    for (int r = 0; r < R; ++r)
      for (int c = 0; c < n; ++c)
        out.data[static_cast<size_t>(r) * n + c] = ta.data[static_cast<size_t>(r) * C + c0 + c];
    return record(std::move(out), {a}, [a, c0, n, R, C](BackCtx& c) {
      auto* ga = c.buf(a);
      if (!ga) return;
      for (int r = 0; r < R; ++r)
        for (int k = 0; k < n; ++k)
          (*ga)[static_cast<size_t>(r) * C + c0 + k] += c.gout[static_cast<size_t>(r) * n + k];
    });
  }

  int concat_rows(const std::vector<int>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_rows: empty part list");
    const int C = v(parts[0]).shape[1];
    int R = 0;
    for (int p : parts) {
      require2(v(p), "concat_rows part");
      if (v(p).shape[1] != C)
        throw std::invalid_argument("concat_rows: column mismatch " + shape_str(v(p).shape));
      R += v(p).shape[0];
    }
    Tensor<T> out = Tensor<T>::zeros({R, C});
    size_t off = 0;
    for (int p : parts) {
      const auto& d = v(p).data;
      std::copy(d.begin(), d.end(), out.data.begin() + off);
      off += d.size();
    }
    return record(std::move(out), parts, [parts, this](BackCtx& c) {
      size_t off2 = 0;
      for (int p : parts) {
        const size_t n = this->v(p).numel();
        if (auto* gp = c.buf(p))
          for (size_t i = 0; i < n; ++i) (*gp)[i] += c.gout[off2 + i];
        off2 += n;
      }
    });
  }

  int concat_cols(const std::vector<int>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_cols: empty part list");
    const int R = v(parts[0]).shape[0];
    int C = 0;
    for (int p : parts) {
      require2(v(p), "concat_cols part");
      if (v(p).shape[0] != R)
        throw std::invalid_argument("concat_cols: row mismatch " + shape_str(v(p).shape));
      C += v(p).shape[1];
    }
    Tensor<T> out = Tensor<T>::zeros({R, C});
    int c0 = 0;
    for (int p : parts) {
      const auto& tp = v(p);
      for (int r = 0; r < R; ++r)
        for (int c = 0; c < tp.shape[1]; ++c)
          out.data[static_cast<size_t>(r) * C + c0 + c] = tp.data[static_cast<size_t>(r) * tp.shape[1] + c];
      c0 += tp.shape[1];
    }
    return record(std::move(out), parts, [parts, R, C, this](BackCtx& c) {
      int cc = 0;
      for (int p : parts) {
        const int pc = this->v(p).shape[1];
        if (auto* gp = c.buf(p))
          for (int r = 0; r < R; ++r)
            for (int k = 0; k < pc; ++k)
              (*gp)[static_cast<size_t>(r) * pc + k] += c.gout[static_cast<size_t>(r) * C + cc + k];
        cc += pc;
      }
    });
  }

  int select_rows(int a, std::vector<int> idx) {
    const auto& ta = v(a);
    require2(ta, "select_rows");
    const int R = ta.shape[0], C = ta.shape[1];
    for (int i : idx)
      if (i < 0 || i >= R)
        throw std::invalid_argument("select_rows: index " + std::to_string(i) + " out of range");
    Tensor<T> out = Tensor<T>::zeros({static_cast<int>(idx.size()), C});
    for (size_t r = 0; r < idx.size(); ++r)
      std::copy(ta.data.begin() + static_cast<size_t>(idx[r]) * C,
                ta.data.begin() + static_cast<size_t>(idx[r] + 1) * C, out.data.begin() + r * C);
    return record(std::move(out), {a}, [a, idx = std::move(idx), C](BackCtx& c) {
      auto* ga = c.buf(a);
      if (!ga) return;
      for (size_t r = 0; r < idx.size(); ++r)
        for (int k = 0; k < C; ++k)
          (*ga)[static_cast<size_t>(idx[r]) * C + k] += c.gout[r * C + k];
    });
  }

  int repeat_rows(int a, int R) {
    const auto& ta = v(a);
    require2(ta, "repeat_rows");
    if (ta.shape[0] != 1) throw std::invalid_argument("repeat_rows expects a single-row tensor");
    const int C = ta.shape[1];
    Tensor<T> out = Tensor<T>::zeros({R, C});
    for (int r = 0; r < R; ++r) std::copy(ta.data.begin(), ta.data.end(), out.data.begin() + static_cast<size_t>(r) * C);
    return record(std::move(out), {a}, [a, R, C](BackCtx& c) {
      auto* ga = c.buf(a);
      if (!ga) return;
      for (int r = 0; r < R; ++r)
        for (int k = 0; k < C; ++k) (*ga)[k] += c.gout[static_cast<size_t>(r) * C + k];
    });
  }

  // Rows scaled to unit Euclidean length (quaternion outputs).
  int normalize_rows(int a, T eps = T(1e-12)) {
    const auto& ta = v(a);
    require2(ta, "normalize_rows");
    const int R = ta.shape[0], C = ta.shape[1];
    Tensor<T> out = ta;
    std::vector<T> norms(R);
    for (int r = 0; r < R; ++r) {
      T ss = T(0);
      for (int c = 0; c < C; ++c) ss += ta.data[static_cast<size_t>(r) * C + c] * ta.data[static_cast<size_t>(r) * C + c];
      const T nrm = std::max(std::sqrt(ss), eps);
      norms[r] = nrm;
      for (int c = 0; c < C; ++c) out.data[static_cast<size_t>(r) * C + c] /= nrm;
    }
    return record(std::move(out), {a}, [a, R, C, norms = std::move(norms)](BackCtx& c) {
      auto* ga = c.buf(a);
      if (!ga) return;
      const auto& y = c.t.v(c.out_id).data;
      for (int r = 0; r < R; ++r) {
        const size_t off = static_cast<size_t>(r) * C;
        T dot = T(0);
        for (int k = 0; k < C; ++k) dot += c.gout[off + k] * y[off + k];
        for (int k = 0; k < C; ++k) (*ga)[off + k] += (c.gout[off + k] - dot * y[off + k]) / norms[r];
      }
    });
  }

  // ---- spatial ops (maps stored as [C x H*W]) ----

  int conv3x3(int x, int w, int b, int H, int W) {
    const auto& tx = v(x);
    const auto& tw = v(w);
    const auto& tb = v(b);
    require2(tx, "conv3x3 input");
    require2(tw, "conv3x3 weight");
    const int Cin = tx.shape[0];
    if (tx.shape[1] != H * W)
      throw std::invalid_argument("conv3x3: input " + shape_str(tx.shape) + " does not match " +
                                  std::to_string(H) + "x" + std::to_string(W));
    if (tw.shape[1] != Cin * 9)
      throw std::invalid_argument("conv3x3: weight " + shape_str(tw.shape) + " wants Cin*9=" +
                                  std::to_string(Cin * 9) + " columns");
    const int Cout = tw.shape[0];
    if (static_cast<int>(tb.numel()) != Cout)
      throw std::invalid_argument("conv3x3: bias length mismatch");
    const size_t hw = static_cast<size_t>(H) * W;
    std::vector<T> rbuf(static_cast<size_t>(Cin) * 9 * hw);
    kern::im2row3x3(tx.data.data(), rbuf.data(), Cin, H, W);
    Tensor<T> out = Tensor<T>::zeros({Cout, H * W});
    kern::matmul(tw.data.data(), rbuf.data(), out.data.data(), Cout, Cin * 9, static_cast<int>(hw));
    for (int o = 0; o < Cout; ++o)
      for (size_t p = 0; p < hw; ++p) out.data[o * hw + p] += tb.data[o];
    // im2row is recomputed in backward instead of stored: x is already on the
    // tape and the expansion is 9x its size.
    return record(std::move(out), {x, w, b}, [x, w, b, Cin, Cout, H, W](BackCtx& c) {
      const size_t hw2 = static_cast<size_t>(H) * W;
      const auto& txd = c.t.v(x).data;
      const auto& twd = c.t.v(w).data;
      auto* gx = c.buf(x);
      auto* gw = c.buf(w);
      auto* gb = c.buf(b);
      if (gb)
        for (int o = 0; o < Cout; ++o) {
          T acc = T(0);
          for (size_t p = 0; p < hw2; ++p) acc += c.gout[o * hw2 + p];
          (*gb)[o] += acc;
        }
      if (gw) {
        std::vector<T> rbuf2(static_cast<size_t>(Cin) * 9 * hw2);
        kern::im2row3x3(txd.data(), rbuf2.data(), Cin, H, W);
        kern::matmul_abT_acc(c.gout.data(), rbuf2.data(), gw->data(), Cout, static_cast<int>(hw2), Cin * 9);
      }
      if (gx) {
        std::vector<T> gr(static_cast<size_t>(Cin) * 9 * hw2, T(0));
        kern::matmul_aTb_acc(twd.data(), c.gout.data(), gr.data(), Cout, Cin * 9, static_cast<int>(hw2));
        kern::col2im3x3_acc(gr.data(), gx->data(), Cin, H, W);
      }
    });
  }

  int resize_bilinear(int x, int H1, int W1, int H2, int W2) {
    const auto& tx = v(x);
    require2(tx, "resize input");
    const int C = tx.shape[0];
    if (tx.shape[1] != H1 * W1)
      throw std::invalid_argument("resize: input " + shape_str(tx.shape) + " does not match " +
                                  std::to_string(H1) + "x" + std::to_string(W1));
    Tensor<T> out = Tensor<T>::zeros({C, H2 * W2});
    kern::resize_bilinear(tx.data.data(), out.data.data(), C, H1, W1, H2, W2);
    return record(std::move(out), {x}, [x, C, H1, W1, H2, W2](BackCtx& c) {
      if (auto* gx = c.buf(x)) kern::resize_bilinear_back(c.gout.data(), gx->data(), C, H1, W1, H2, W2);
    });
  }

  // map: [C x H*W]; pts: [R x 2] continuous (x, y) pixel coordinates with
  // pixel (i, j) at (x=j, y=i). Out-of-range coordinates clamp to the border
  // (zero positional gradient there). Returns [R x C].
  int bilinear_sample_rows(int map, int pts, int H, int W) {
    const auto& tm = v(map);
    const auto& tp = v(pts);
    require2(tm, "bilinear map");
    require2(tp, "bilinear points");
    const int C = tm.shape[0];
    if (tm.shape[1] != H * W)
      throw std::invalid_argument("bilinear: map " + shape_str(tm.shape) + " does not match " +
                                  std::to_string(H) + "x" + std::to_string(W));
    if (tp.shape[1] != 2) throw std::invalid_argument("bilinear: points must be [R x 2]");
    const int R = tp.shape[0];
    Tensor<T> out = Tensor<T>::zeros({R, C});
    struct Corner {
      int x0, y0;
      T wx, wy;
      bool clamped_x, clamped_y;
    };
    std::vector<Corner> cs(R);
    for (int r = 0; r < R; ++r) {
      T px = tp.data[static_cast<size_t>(r) * 2];
      T py = tp.data[static_cast<size_t>(r) * 2 + 1];
      Corner k;
      k.clamped_x = px < T(0) || px > T(W - 1);
      k.clamped_y = py < T(0) || py > T(H - 1);
      px = std::min(std::max(px, T(0)), T(W - 1));
      py = std::min(std::max(py, T(0)), T(H - 1));
      k.x0 = std::min(static_cast<int>(px), W >= 2 ? W - 2 : 0);
      k.y0 = std::min(static_cast<int>(py), H >= 2 ? H - 2 : 0);
      k.wx = W >= 2 ? px - k.x0 : T(0);
      k.wy = H >= 2 ? py - k.y0 : T(0);
      cs[r] = k;
      const int x1 = W >= 2 ? k.x0 + 1 : 0;
      const int y1 = H >= 2 ? k.y0 + 1 : 0;
      for (int ch = 0; ch < C; ++ch) {
        const T* m = tm.data.data() + static_cast<size_t>(ch) * H * W;
        const T v00 = m[static_cast<size_t>(k.y0) * W + k.x0];
        const T v01 = m[static_cast<size_t>(k.y0) * W + x1];
        const T v10 = m[static_cast<size_t>(y1) * W + k.x0];
        const T v11 = m[static_cast<size_t>(y1) * W + x1];
        out.data[static_cast<size_t>(r) * C + ch] =
            (T(1) - k.wy) * ((T(1) - k.wx) * v00 + k.wx * v01) + k.wy * ((T(1) - k.wx) * v10 + k.wx * v11);
      }
    }
    return record(std::move(out), {map, pts}, [map, pts, H, W, C, R, cs = std::move(cs)](BackCtx& c) {
      const auto& tm2 = c.t.v(map).data;
      auto* gm = c.buf(map);
      auto* gp = c.buf(pts);
      for (int r = 0; r < R; ++r) {
        const auto& k = cs[r];
        const int x1 = W >= 2 ? k.x0 + 1 : 0;
        const int y1 = H >= 2 ? k.y0 + 1 : 0;
        T gx = T(0), gy = T(0);
        for (int ch = 0; ch < C; ++ch) {
          const T g = c.gout[static_cast<size_t>(r) * C + ch];
          const size_t base = static_cast<size_t>(ch) * H * W;
          if (gm) {
            (*gm)[base + static_cast<size_t>(k.y0) * W + k.x0] += g * (T(1) - k.wy) * (T(1) - k.wx);
            (*gm)[base + static_cast<size_t>(k.y0) * W + x1] += g * (T(1) - k.wy) * k.wx;
            (*gm)[base + static_cast<size_t>(y1) * W + k.x0] += g * k.wy * (T(1) - k.wx);
            (*gm)[base + static_cast<size_t>(y1) * W + x1] += g * k.wy * k.wx;
          }
          if (gp) {
            const T v00 = tm2[base + static_cast<size_t>(k.y0) * W + k.x0];
            const T v01 = tm2[base + static_cast<size_t>(k.y0) * W + x1];
            const T v10 = tm2[base + static_cast<size_t>(y1) * W + k.x0];
            const T v11 = tm2[base + static_cast<size_t>(y1) * W + x1];
            gx += g * ((T(1) - k.wy) * (v01 - v00) + k.wy * (v11 - v10));
            gy += g * ((T(1) - k.wx) * (v10 - v00) + k.wx * (v11 - v01));
          }
        }
        if (gp) {
          if (!k.clamped_x) (*gp)[static_cast<size_t>(r) * 2] += gx;
          if (!k.clamped_y) (*gp)[static_cast<size_t>(r) * 2 + 1] += gy;
        }
      }
    });
  }

  // Forward differences; x is [C x H*W], result [2C x H*W]: first C channels
  // are d/dx (column direction), next C are d/dy. Last column/row are zero.
  int spatial_gradient(int x, int H, int W) {
    const auto& tx = v(x);
    require2(tx, "spatial_gradient");
    const int C = tx.shape[0];
    if (tx.shape[1] != H * W)
      throw std::invalid_argument("spatial_gradient: input " + shape_str(tx.shape) +
                                  " does not match " + std::to_string(H) + "x" + std::to_string(W));
    const size_t hw = static_cast<size_t>(H) * W;
    Tensor<T> out = Tensor<T>::zeros({2 * C, H * W});
    for (int ch = 0; ch < C; ++ch) {
      const T* m = tx.data.data() + ch * hw;
      T* dx = out.data.data() + ch * hw;
      T* dy = out.data.data() + (static_cast<size_t>(C) + ch) * hw;
      for (int i = 0; i < H; ++i)
        for (int j = 0; j < W; ++j) {
          const size_t p = static_cast<size_t>(i) * W + j;
          dx[p] = (j + 1 < W) ? m[p + 1] - m[p] : T(0);
          dy[p] = (i + 1 < H) ? m[p + W] - m[p] : T(0);
        }
    }
    return record(std::move(out), {x}, [x, C, H, W](BackCtx& c) {
      auto* gx = c.buf(x);
      if (!gx) return;
      const size_t hw2 = static_cast<size_t>(H) * W;
      for (int ch = 0; ch < C; ++ch) {
        const T* gdx = c.gout.data() + ch * hw2;
        const T* gdy = c.gout.data() + (static_cast<size_t>(C) + ch) * hw2;
        T* g = gx->data() + ch * hw2;
        for (int i = 0; i < H; ++i)
          for (int j = 0; j < W; ++j) {
            const size_t p = static_cast<size_t>(i) * W + j;
            T acc = T(0);
            if (j + 1 < W) acc -= gdx[p];
            if (j >= 1) acc += gdx[p - 1];
            if (i + 1 < H) acc -= gdy[p];
            if (i >= 1) acc += gdy[p - W];
            g[p] += acc;
          }
      }
    });
  }

  // ---- loss primitives ----

  // Elementwise Huber, summed: 0.5 r^2 for |r| <= delta, delta(|r| - delta/2) beyond.
  int huber_sum(int r, T delta) {
    if (delta <= T(0)) throw std::invalid_argument("huber: delta must be positive");
    const auto& tr = v(r);
    T s = T(0);
    for (const auto& x : tr.data) {
      const T a = std::abs(x);
      s += a <= delta ? T(0.5) * x * x : delta * (a - T(0.5) * delta);
    }
    return record(Tensor<T>({1}, {s}), {r}, [r, delta](BackCtx& c) {
      auto* gr = c.buf(r);
      if (!gr) return;
      const auto& d = c.t.v(r).data;
      for (size_t i = 0; i < d.size(); ++i)
        (*gr)[i] += c.gout[0] * std::min(std::max(d[i], -delta), delta);
    });
  }

  // Numerically stable binary cross-entropy on logits, averaged over all
  // entries. labels is a constant node of the same length with values in [0,1].
  int bce_logits_mean(int z, int labels) {
    const auto& tz = v(z);
    const auto& ty = v(labels);
    if (tz.numel() != ty.numel())
      throw std::invalid_argument("bce: logits " + shape_str(tz.shape) + " vs labels " +
                                  shape_str(ty.shape));
    const size_t n = tz.numel();
    if (n == 0) throw std::invalid_argument("bce: empty input");
    T s = T(0);
    for (size_t i = 0; i < n; ++i) {
      const T x = tz.data[i], y = ty.data[i];
      s += std::max(x, T(0)) - x * y + std::log1p(std::exp(-std::abs(x)));
    }
    s /= static_cast<T>(n);
    return record(Tensor<T>({1}, {s}), {z, labels}, [z, labels, n](BackCtx& c) {
      auto* gz = c.buf(z);
      if (!gz) return;
      const auto& dz = c.t.v(z).data;
      const auto& dy = c.t.v(labels).data;
      for (size_t i = 0; i < n; ++i) {
        const T sig = T(1) / (T(1) + std::exp(-dz[i]));
        (*gz)[i] += c.gout[0] * (sig - dy[i]) / static_cast<T>(n);
      }
    });
  }

  // ---- backward ----

  void backward(int out) {
    const auto& to = v(out);
    if (to.numel() != 1)
      throw std::invalid_argument("backward: output must be scalar, got " + shape_str(to.shape));
    std::vector<std::vector<T>> g(nodes_.size());
    g[out].assign(1, T(1));
    for (int id = out; id >= 0; --id) {
      Node& n = nodes_[id];
      if (g[id].empty() || !n.back) continue;
      BackCtx ctx{*this, g, g[id], id};
      n.back(ctx);
    }
    for (size_t id = 0; id < nodes_.size(); ++id) {
      if (g[id].empty()) continue;
      Node& n = nodes_[id];
      if (n.grad.size() != n.value.numel()) n.grad.assign(n.value.numel(), T(0));
      for (size_t i = 0; i < g[id].size(); ++i) n.grad[i] += g[id][i];
      if (n.external && n.external->requires_grad) {
        n.external->ensure_grad();
        for (size_t i = 0; i < g[id].size(); ++i) n.external->grad[i] += g[id][i];
      }
    }
  }

  struct BackCtx {
    Tape& t;
    std::vector<std::vector<T>>& g;
    const std::vector<T>& gout;
    int out_id;

    // Gradient buffer of node `id`, or nullptr when it does not require grad.
    std::vector<T>* buf(int id) {
      Node& n = t.nodes_[id];
      if (!n.needs) return nullptr;
      if (g[id].empty()) g[id].assign(n.value.numel(), T(0));
      return &g[id];
    }
  };

 private:
  struct Node {
    Tensor<T> value;
    Tensor<T>* external = nullptr;
    std::vector<T> grad;
    std::function<void(BackCtx&)> back;
    bool needs = false;
  };

  const Tensor<T>& v(int id) const { return nodes_.at(id).value; }

  static void require2(const Tensor<T>& t, const char* what) {
    if (t.shape.size() != 2)
      throw std::invalid_argument(std::string(what) + ": expected rank-2 tensor, got " +
                                  shape_str(t.shape));
  }

  static void same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* what) {
    if (a.shape != b.shape)
      throw std::invalid_argument(std::string(what) + ": shape mismatch " + shape_str(a.shape) +
                                  " vs " + shape_str(b.shape));
  }

  template <class F>
  int ewise2(int a, int b, const char* what, F&& f, T da, T db) {
    const auto& ta = v(a);
    const auto& tb = v(b);
    same_shape(ta, tb, what);
    Tensor<T> out = ta;
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] = f(ta.data[i], tb.data[i]);
    return record(std::move(out), {a, b}, [a, b, da, db](BackCtx& c) {
      if (auto* ga = c.buf(a))
        for (size_t i = 0; i < c.gout.size(); ++i) (*ga)[i] += da * c.gout[i];
      if (auto* gb = c.buf(b))
        for (size_t i = 0; i < c.gout.size(); ++i) (*gb)[i] += db * c.gout[i];
    });
  }

  int record(Tensor<T> value, const std::vector<int>& inputs, std::function<void(BackCtx&)> back) {
    bool needs = false;
    for (int i : inputs) needs = needs || nodes_.at(i).needs;
    Node n;
    n.value = std::move(value);
    n.needs = needs;
    if (needs) n.back = std::move(back);
    nodes_.push_back(std::move(n));
    return static_cast<int>(nodes_.size()) - 1;
  }

  std::vector<Node> nodes_;
};

}  // namespace mvr
