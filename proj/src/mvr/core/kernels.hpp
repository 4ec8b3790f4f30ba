#pragma once

#include <atomic>
#include <cstddef>

// Dense inner-loop kernels. Every kernel has a serial reference variant
// (suffix _ref) and an OpenMP variant with identical per-element arithmetic:
// each output element is produced by exactly one writer with a fixed
// accumulation order, so the parallel results are bit-identical to the
// serial ones for any thread count. tools/bench.cpp compares the two.

namespace mvr::kern {

// Global switch so benchmarks and tests can force the serial path.
inline std::atomic<bool>& parallel_flag() {
  static std::atomic<bool> on{true};
  return on;
}
inline bool parallel_enabled() { return parallel_flag().load(std::memory_order_relaxed); }

// ---- matmul: c = a[m x k] * b[k x n] (c overwritten) ----

template <class T>
void matmul_ref(const T* a, const T* b, T* c, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    T* ci = c + static_cast<size_t>(i) * n;
    for (int j = 0; j < n; ++j) ci[j] = T(0);
    const T* ai = a + static_cast<size_t>(i) * k;
    for (int t = 0; t < k; ++t) {
      const T av = ai[t];
      const T* bt = b + static_cast<size_t>(t) * n;
      for (int j = 0; j < n; ++j) ci[j] += av * bt[j];
    }
  }
}

template <class T>
void matmul(const T* a, const T* b, T* c, int m, int k, int n) {
  const bool par = parallel_enabled() && static_cast<size_t>(m) * k * n > (1u << 14) && m > 1;
#pragma omp parallel for schedule(static) if (par)
  for (int i = 0; i < m; ++i) {
    T* ci = c + static_cast<size_t>(i) * n;
    for (int j = 0; j < n; ++j) ci[j] = T(0);
    const T* ai = a + static_cast<size_t>(i) * k;
    for (int t = 0; t < k; ++t) {
      const T av = ai[t];
      const T* bt = b + static_cast<size_t>(t) * n;
      for (int j = 0; j < n; ++j) ci[j] += av * bt[j];
    }
  }
}

// ---- c[m x n] += a[m x k] * b[n x k]^T ----

template <class T>
void matmul_abT_acc_ref(const T* a, const T* b, T* c, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    const T* ai = a + static_cast<size_t>(i) * k;
    T* ci = c + static_cast<size_t>(i) * n;
    for (int j = 0; j < n; ++j) {
      const T* bj = b + static_cast<size_t>(j) * k;
      T acc = T(0);
      for (int t = 0; t < k; ++t) acc += ai[t] * bj[t];
      ci[j] += acc;
    }
  }
}

template <class T>
void matmul_abT_acc(const T* a, const T* b, T* c, int m, int k, int n) {
  const bool par = parallel_enabled() && static_cast<size_t>(m) * k * n > (1u << 14) && m > 1;
#pragma omp parallel for schedule(static) if (par)
  for (int i = 0; i < m; ++i) {
    const T* ai = a + static_cast<size_t>(i) * k;
    T* ci = c + static_cast<size_t>(i) * n;
    for (int j = 0; j < n; ++j) {
      const T* bj = b + static_cast<size_t>(j) * k;
      T acc = T(0);
      for (int t = 0; t < k; ++t) acc += ai[t] * bj[t];
      ci[j] += acc;
    }
  }
}

// ---- c[k x n] += a[m x k]^T * b[m x n] ----

template <class T>
void matmul_aTb_acc_ref(const T* a, const T* b, T* c, int m, int k, int n) {
  for (int i = 0; i < k; ++i) {
    T* ci = c + static_cast<size_t>(i) * n;
    for (int t = 0; t < m; ++t) {
      const T av = a[static_cast<size_t>(t) * k + i];
      const T* bt = b + static_cast<size_t>(t) * n;
      for (int j = 0; j < n; ++j) ci[j] += av * bt[j];
    }
  }
}

template <class T>
void matmul_aTb_acc(const T* a, const T* b, T* c, int m, int k, int n) {
  const bool par = parallel_enabled() && static_cast<size_t>(m) * k * n > (1u << 14) && k > 1;
#pragma omp parallel for schedule(static) if (par)
  for (int i = 0; i < k; ++i) {
    T* ci = c + static_cast<size_t>(i) * n;
    for (int t = 0; t < m; ++t) {
      const T av = a[static_cast<size_t>(t) * k + i];
      const T* bt = b + static_cast<size_t>(t) * n;
      for (int j = 0; j < n; ++j) ci[j] += av * bt[j];
    }
  }
}

// ---- 3x3 convolution support (zero padding, stride 1) ----
// im2row: x[C x H*W] -> r[(C*9) x H*W]; row ci*9 + (ky*3+kx) holds the
// shifted image so that conv = w[Cout x C*9] * r.

template <class T>
void im2row3x3_ref(const T* x, T* r, int C, int H, int W) {
  const size_t hw = static_cast<size_t>(H) * W;
  for (int row = 0; row < C * 9; ++row) {
    const int ci = row / 9;
    const int ky = (row % 9) / 3, kx = row % 3;
    const T* xc = x + ci * hw;
    T* rr = r + row * hw;
    for (int i = 0; i < H; ++i) {
      const int si = i + ky - 1;
      for (int j = 0; j < W; ++j) {
        const int sj = j + kx - 1;
        rr[static_cast<size_t>(i) * W + j] =
            (si >= 0 && si < H && sj >= 0 && sj < W) ? xc[static_cast<size_t>(si) * W + sj] : T(0);
      }
    }
  }
}

template <class T>
void im2row3x3(const T* x, T* r, int C, int H, int W) {
  const size_t hw = static_cast<size_t>(H) * W;
  const bool par = parallel_enabled() && hw * C > (1u << 12);
#pragma omp parallel for schedule(static) if (par)
  for (int row = 0; row < C * 9; ++row) {
    const int ci = row / 9;
    const int ky = (row % 9) / 3, kx = row % 3;
    const T* xc = x + ci * hw;
    T* rr = r + row * hw;
    for (int i = 0; i < H; ++i) {
      const int si = i + ky - 1;
      for (int j = 0; j < W; ++j) {
        const int sj = j + kx - 1;
        rr[static_cast<size_t>(i) * W + j] =
            (si >= 0 && si < H && sj >= 0 && sj < W) ? xc[static_cast<size_t>(si) * W + sj] : T(0);
      }
    }
  }
}

// col2im accumulate, gather form: gx[ci][i,j] += sum_k gr[ci*9+k][i-ky+1, j-kx+1].

template <class T>
void col2im3x3_acc_ref(const T* gr, T* gx, int C, int H, int W) {
  const size_t hw = static_cast<size_t>(H) * W;
  for (int ci = 0; ci < C; ++ci) {
    T* gxc = gx + ci * hw;
    for (int i = 0; i < H; ++i) {
      for (int j = 0; j < W; ++j) {
        T acc = T(0);
        for (int ky = 0; ky < 3; ++ky) {
          const int qi = i - ky + 1;
          if (qi < 0 || qi >= H) continue;
          for (int kx = 0; kx < 3; ++kx) {
            const int qj = j - kx + 1;
            if (qj < 0 || qj >= W) continue;
            acc += gr[(static_cast<size_t>(ci) * 9 + ky * 3 + kx) * hw + static_cast<size_t>(qi) * W + qj];
          }
        }
        gxc[static_cast<size_t>(i) * W + j] += acc;
      }
    }
  }
}

template <class T>
void col2im3x3_acc(const T* gr, T* gx, int C, int H, int W) {
  const size_t hw = static_cast<size_t>(H) * W;
  const bool par = parallel_enabled() && hw * C > (1u << 12) && C > 1;
#pragma omp parallel for schedule(static) if (par)
  for (int ci = 0; ci < C; ++ci) {
    T* gxc = gx + ci * hw;
    for (int i = 0; i < H; ++i) {
      for (int j = 0; j < W; ++j) {
        T acc = T(0);
        for (int ky = 0; ky < 3; ++ky) {
          const int qi = i - ky + 1;
          if (qi < 0 || qi >= H) continue;
          for (int kx = 0; kx < 3; ++kx) {
            const int qj = j - kx + 1;
            if (qj < 0 || qj >= W) continue;
            acc += gr[(static_cast<size_t>(ci) * 9 + ky * 3 + kx) * hw + static_cast<size_t>(qi) * W + qj];
          }
        }
        gxc[static_cast<size_t>(i) * W + j] += acc;
      }
    }
  }
}

// ---- bilinear resize, align-corners sampling; x[C x H1*W1] -> y[C x H2*W2] ----

template <class T>
inline void resize_coeff(int out, int in, int o, int* i0, int* i1, T* w1) {
  if (in == 1 || out == 1) {
    T s = (out == 1) ? T(0) : T(in - 1) / T(out - 1);
    T src = (out == 1) ? T(0) : s * o;
    int lo = static_cast<int>(src);
    if (lo > in - 2) lo = in - 2 < 0 ? 0 : in - 2;
    *i0 = lo;
    *i1 = (in == 1) ? lo : lo + 1;
    *w1 = (in == 1) ? T(0) : src - lo;
    return;
  }
  T s = T(in - 1) / T(out - 1);
  T src = s * o;
  int lo = static_cast<int>(src);
  if (lo > in - 2) lo = in - 2;
  *i0 = lo;
  *i1 = lo + 1;
  *w1 = src - lo;
}

template <class T>
void resize_bilinear_ref(const T* x, T* y, int C, int H1, int W1, int H2, int W2) {
  const size_t in_hw = static_cast<size_t>(H1) * W1;
  const size_t out_hw = static_cast<size_t>(H2) * W2;
  for (int c = 0; c < C; ++c) {
    const T* xc = x + c * in_hw;
    T* yc = y + c * out_hw;
    for (int i = 0; i < H2; ++i) {
      int r0, r1;
      T wr;
      resize_coeff<T>(H2, H1, i, &r0, &r1, &wr);
      for (int j = 0; j < W2; ++j) {
        int c0, c1;
        T wc;
        resize_coeff<T>(W2, W1, j, &c0, &c1, &wc);
        const T v00 = xc[static_cast<size_t>(r0) * W1 + c0];
        const T v01 = xc[static_cast<size_t>(r0) * W1 + c1];
        const T v10 = xc[static_cast<size_t>(r1) * W1 + c0];
        const T v11 = xc[static_cast<size_t>(r1) * W1 + c1];
        yc[static_cast<size_t>(i) * W2 + j] =
            (T(1) - wr) * ((T(1) - wc) * v00 + wc * v01) + wr * ((T(1) - wc) * v10 + wc * v11);
      }
    }
  }
}

template <class T>
void resize_bilinear(const T* x, T* y, int C, int H1, int W1, int H2, int W2) {
  const bool par = parallel_enabled() && static_cast<size_t>(C) * H2 * W2 > (1u << 12) && C > 1;
#pragma omp parallel for schedule(static) if (par)
  for (int c = 0; c < C; ++c) {
    resize_bilinear_ref(x + static_cast<size_t>(c) * H1 * W1, y + static_cast<size_t>(c) * H2 * W2, 1,
                        H1, W1, H2, W2);
  }
}

// Backward of the resize: scatter output grads back through the same weights.
// Parallel across channels only; within a channel the scatter is serial.

template <class T>
void resize_bilinear_back_ref(const T* gy, T* gx, int C, int H1, int W1, int H2, int W2) {
  const size_t in_hw = static_cast<size_t>(H1) * W1;
  const size_t out_hw = static_cast<size_t>(H2) * W2;
  for (int c = 0; c < C; ++c) {
    const T* gyc = gy + c * out_hw;
    T* gxc = gx + c * in_hw;
    for (int i = 0; i < H2; ++i) {
      int r0, r1;
      T wr;
      resize_coeff<T>(H2, H1, i, &r0, &r1, &wr);
      for (int j = 0; j < W2; ++j) {
        int c0, c1;
        T wc;
        resize_coeff<T>(W2, W1, j, &c0, &c1, &wc);
        const T g = gyc[static_cast<size_t>(i) * W2 + j];
        gxc[static_cast<size_t>(r0) * W1 + c0] += (T(1) - wr) * (T(1) - wc) * g;
        gxc[static_cast<size_t>(r0) * W1 + c1] += (T(1) - wr) * wc * g;
        gxc[static_cast<size_t>(r1) * W1 + c0] += wr * (T(1) - wc) * g;
        gxc[static_cast<size_t>(r1) * W1 + c1] += wr * wc * g;
      }
    }
  }
}

template <class T>
void resize_bilinear_back(const T* gy, T* gx, int C, int H1, int W1, int H2, int W2) {
  const bool par = parallel_enabled() && static_cast<size_t>(C) * H2 * W2 > (1u << 12) && C > 1;
#pragma omp parallel for schedule(static) if (par)
  for (int c = 0; c < C; ++c) {
    resize_bilinear_back_ref(gy + static_cast<size_t>(c) * H2 * W2, gx + static_cast<size_t>(c) * H1 * W1,
                             1, H1, W1, H2, W2);
  }
}

}  // namespace mvr::kern
