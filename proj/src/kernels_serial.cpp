#include "fedsis/kernels.hpp"

#include <cmath>

// Serial reference kernels. The OpenMP set in kernels_omp.cpp must stay
// bitwise identical to these; keep loop nests and accumulation order in sync
// when editing either file (test_kernels.cpp compares them element by element).

namespace fedsis::kern::serial {

template <class T>
void matmul_nn(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      T acc = T(0);
      for (std::size_t l = 0; l < k; ++l) acc += a[i * k + l] * b[l * n + j];
      c[i * n + j] = acc;
    }
  }
}

template <class T>
void matmul_nt_acc(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
  // c[m,n] += a[m,k] * b[n,k]^T
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      T acc = T(0);
      for (std::size_t l = 0; l < k; ++l) acc += a[i * k + l] * b[j * k + l];
      c[i * n + j] += acc;
    }
  }
}

template <class T>
void matmul_tn_acc(const T* a, const T* b, T* c, std::size_t k, std::size_t m, std::size_t n) {
  // c[m,n] += a[k,m]^T * b[k,n]
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      T acc = T(0);
      for (std::size_t l = 0; l < k; ++l) acc += a[l * m + i] * b[l * n + j];
      c[i * n + j] += acc;
    }
  }
}

template <class T>
void bmm_nn(const T* a, const T* b, T* c, std::size_t batch, std::size_t m, std::size_t k,
            std::size_t n) {
  for (std::size_t q = 0; q < batch; ++q) {
    matmul_nn(a + q * m * k, b + q * k * n, c + q * m * n, m, k, n);
  }
}

template <class T>
void bmm_nt_acc(const T* a, const T* b, T* c, std::size_t batch, std::size_t m, std::size_t k,
                std::size_t n) {
  for (std::size_t q = 0; q < batch; ++q) {
    matmul_nt_acc(a + q * m * k, b + q * n * k, c + q * m * n, m, k, n);
  }
}

template <class T>
void bmm_tn_acc(const T* a, const T* b, T* c, std::size_t batch, std::size_t k, std::size_t m,
                std::size_t n) {
  for (std::size_t q = 0; q < batch; ++q) {
    matmul_tn_acc(a + q * k * m, b + q * k * n, c + q * m * n, k, m, n);
  }
}

template <class T>
void add(const T* a, const T* b, T* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] + b[i];
}

template <class T>
void mul(const T* a, const T* b, T* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
}

template <class T>
void mul_acc(const T* a, const T* b, T* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] += a[i] * b[i];
}

template <class T>
void scale(const T* a, T s, T* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * s;
}

template <class T>
void axpy(T alpha, const T* x, T* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

template <class T>
void add_bcast(const T* x, const T* b, T* out, std::size_t rows, std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t j = 0; j < cols; ++j) out[r * cols + j] = x[r * cols + j] + b[j];
  }
}

template <class T>
void reduce_rows_acc(const T* g, T* out, std::size_t rows, std::size_t cols) {
  for (std::size_t j = 0; j < cols; ++j) {
    T acc = T(0);
    for (std::size_t r = 0; r < rows; ++r) acc += g[r * cols + j];
    out[j] += acc;
  }
}

template <class T>
void conv2d_fwd(const T* x, const T* w, const T* bias, T* y, std::size_t b, std::size_t h,
                std::size_t iw, std::size_t ci, std::size_t kh, std::size_t kw, std::size_t co,
                std::size_t oh, std::size_t ow, std::size_t sh, std::size_t sw, std::size_t ph,
                std::size_t pw) {
  // x: [b,h,iw,ci] NHWC, w: [kh,kw,ci,co], y: [b,oh,ow,co]; zero padding.
  for (std::size_t ib = 0; ib < b; ++ib) {
    for (std::size_t io = 0; io < oh; ++io) {
      for (std::size_t jo = 0; jo < ow; ++jo) {
        for (std::size_t oc = 0; oc < co; ++oc) {
          T acc = bias ? bias[oc] : T(0);
          for (std::size_t rk = 0; rk < kh; ++rk) {
            std::ptrdiff_t ii = static_cast<std::ptrdiff_t>(io * sh + rk) -
                                static_cast<std::ptrdiff_t>(ph);
            if (ii < 0 || ii >= static_cast<std::ptrdiff_t>(h)) continue;
            for (std::size_t ck = 0; ck < kw; ++ck) {
              std::ptrdiff_t jj = static_cast<std::ptrdiff_t>(jo * sw + ck) -
                                  static_cast<std::ptrdiff_t>(pw);
              if (jj < 0 || jj >= static_cast<std::ptrdiff_t>(iw)) continue;
              const T* xp = x + ((ib * h + ii) * iw + jj) * ci;
              const T* wp = w + ((rk * kw + ck) * ci) * co + oc;
              for (std::size_t ic = 0; ic < ci; ++ic) acc += xp[ic] * wp[ic * co];
            }
          }
          y[((ib * oh + io) * ow + jo) * co + oc] = acc;
        }
      }
    }
  }
}

template <class T>
void conv2d_dx_acc(const T* dy, const T* w, T* dx, std::size_t b, std::size_t h, std::size_t iw,
                   std::size_t ci, std::size_t kh, std::size_t kw, std::size_t co, std::size_t oh,
                   std::size_t ow, std::size_t sh, std::size_t sw, std::size_t ph,
                   std::size_t pw) {
  // Gather form: each input pixel sums the output positions it fed.
  for (std::size_t ib = 0; ib < b; ++ib) {
    for (std::size_t ii = 0; ii < h; ++ii) {
      for (std::size_t jj = 0; jj < iw; ++jj) {
        for (std::size_t ic = 0; ic < ci; ++ic) {
          T acc = T(0);
          for (std::size_t rk = 0; rk < kh; ++rk) {
            std::ptrdiff_t num = static_cast<std::ptrdiff_t>(ii + ph) -
                                 static_cast<std::ptrdiff_t>(rk);
            if (num < 0 || num % static_cast<std::ptrdiff_t>(sh) != 0) continue;
            std::size_t io = static_cast<std::size_t>(num) / sh;
            if (io >= oh) continue;
            for (std::size_t ck = 0; ck < kw; ++ck) {
              std::ptrdiff_t numw = static_cast<std::ptrdiff_t>(jj + pw) -
                                    static_cast<std::ptrdiff_t>(ck);
              if (numw < 0 || numw % static_cast<std::ptrdiff_t>(sw) != 0) continue;
              std::size_t jo = static_cast<std::size_t>(numw) / sw;
              if (jo >= ow) continue;
              const T* dyp = dy + ((ib * oh + io) * ow + jo) * co;
              const T* wp = w + ((rk * kw + ck) * ci + ic) * co;
              for (std::size_t oc = 0; oc < co; ++oc) acc += dyp[oc] * wp[oc];
            }
          }
          dx[((ib * h + ii) * iw + jj) * ci + ic] += acc;
        }
      }
    }
  }
}

template <class T>
void conv2d_dw_acc(const T* x, const T* dy, T* dw, std::size_t b, std::size_t h, std::size_t iw,
                   std::size_t ci, std::size_t kh, std::size_t kw, std::size_t co, std::size_t oh,
                   std::size_t ow, std::size_t sh, std::size_t sw, std::size_t ph,
                   std::size_t pw) {
  for (std::size_t rk = 0; rk < kh; ++rk) {
    for (std::size_t ck = 0; ck < kw; ++ck) {
      for (std::size_t ic = 0; ic < ci; ++ic) {
        for (std::size_t oc = 0; oc < co; ++oc) {
          T acc = T(0);
          for (std::size_t ib = 0; ib < b; ++ib) {
            for (std::size_t io = 0; io < oh; ++io) {
              std::ptrdiff_t ii = static_cast<std::ptrdiff_t>(io * sh + rk) -
                                  static_cast<std::ptrdiff_t>(ph);
              if (ii < 0 || ii >= static_cast<std::ptrdiff_t>(h)) continue;
              for (std::size_t jo = 0; jo < ow; ++jo) {
                std::ptrdiff_t jj = static_cast<std::ptrdiff_t>(jo * sw + ck) -
                                    static_cast<std::ptrdiff_t>(pw);
                if (jj < 0 || jj >= static_cast<std::ptrdiff_t>(iw)) continue;
                acc += x[((ib * h + ii) * iw + jj) * ci + ic] *
                       dy[((ib * oh + io) * ow + jo) * co + oc];
              }
            }
          }
          dw[((rk * kw + ck) * ci + ic) * co + oc] += acc;
        }
      }
    }
  }
}

template <class T>
void conv2d_db_acc(const T* dy, T* db, std::size_t b, std::size_t oh, std::size_t ow,
                   std::size_t co) {
  for (std::size_t oc = 0; oc < co; ++oc) {
    T acc = T(0);
    for (std::size_t r = 0; r < b * oh * ow; ++r) acc += dy[r * co + oc];
    db[oc] += acc;
  }
}

template <class T>
void bn_train_fwd(const T* x, const T* gamma, const T* beta, T* y, T* xhat, T* inv_std,
                  T* batch_mean, T* batch_var, std::size_t rows, std::size_t cols, T eps) {
  for (std::size_t j = 0; j < cols; ++j) {
    T mean = T(0);
    for (std::size_t r = 0; r < rows; ++r) mean += x[r * cols + j];
    mean /= static_cast<T>(rows);
    T var = T(0);
    for (std::size_t r = 0; r < rows; ++r) {
      T d = x[r * cols + j] - mean;
      var += d * d;
    }
    var /= static_cast<T>(rows);
    T istd = T(1) / std::sqrt(var + eps);
    batch_mean[j] = mean;
    batch_var[j] = var;
    inv_std[j] = istd;
    for (std::size_t r = 0; r < rows; ++r) {
      T xh = (x[r * cols + j] - mean) * istd;
      xhat[r * cols + j] = xh;
      y[r * cols + j] = gamma[j] * xh + beta[j];
    }
  }
}

template <class T>
void bn_eval_fwd(const T* x, const T* gamma, const T* beta, const T* run_mean, const T* run_var,
                 T* y, T* xhat, T* inv_std, std::size_t rows, std::size_t cols, T eps) {
  for (std::size_t j = 0; j < cols; ++j) {
    T istd = T(1) / std::sqrt(run_var[j] + eps);
    inv_std[j] = istd;
    for (std::size_t r = 0; r < rows; ++r) {
      T xh = (x[r * cols + j] - run_mean[j]) * istd;
      xhat[r * cols + j] = xh;
      y[r * cols + j] = gamma[j] * xh + beta[j];
    }
  }
}

template <class T>
void bn_train_bwd(const T* dy, const T* xhat, const T* inv_std, const T* gamma, T* dx, T* dgamma,
                  T* dbeta, std::size_t rows, std::size_t cols) {
  const T n = static_cast<T>(rows);
  for (std::size_t j = 0; j < cols; ++j) {
    T sdy = T(0), sdyx = T(0);
    for (std::size_t r = 0; r < rows; ++r) {
      sdy += dy[r * cols + j];
      sdyx += dy[r * cols + j] * xhat[r * cols + j];
    }
    dgamma[j] += sdyx;
    dbeta[j] += sdy;
    const T g = gamma[j] * inv_std[j] / n;
    for (std::size_t r = 0; r < rows; ++r) {
      dx[r * cols + j] += g * (n * dy[r * cols + j] - sdy - xhat[r * cols + j] * sdyx);
    }
  }
}

template <class T>
void bn_eval_bwd(const T* dy, const T* xhat, const T* inv_std, const T* gamma, T* dx, T* dgamma,
                 T* dbeta, std::size_t rows, std::size_t cols) {
  for (std::size_t j = 0; j < cols; ++j) {
    T sdy = T(0), sdyx = T(0);
    for (std::size_t r = 0; r < rows; ++r) {
      sdy += dy[r * cols + j];
      sdyx += dy[r * cols + j] * xhat[r * cols + j];
      dx[r * cols + j] += dy[r * cols + j] * gamma[j] * inv_std[j];
    }
    dgamma[j] += sdyx;
    dbeta[j] += sdy;
  }
}

template <class T>
void layernorm_fwd(const T* x, const T* gamma, const T* beta, T* y, T* xhat, T* inv_std,
                   std::size_t rows, std::size_t cols, T eps) {
  for (std::size_t r = 0; r < rows; ++r) {
    const T* xr = x + r * cols;
    T mean = T(0);
    for (std::size_t j = 0; j < cols; ++j) mean += xr[j];
    mean /= static_cast<T>(cols);
    T var = T(0);
    for (std::size_t j = 0; j < cols; ++j) {
      T d = xr[j] - mean;
      var += d * d;
    }
    var /= static_cast<T>(cols);
    T istd = T(1) / std::sqrt(var + eps);
    inv_std[r] = istd;
    for (std::size_t j = 0; j < cols; ++j) {
      T xh = (xr[j] - mean) * istd;
      xhat[r * cols + j] = xh;
      y[r * cols + j] = gamma[j] * xh + beta[j];
    }
  }
}

template <class T>
void layernorm_bwd(const T* dy, const T* xhat, const T* inv_std, const T* gamma, T* dx, T* dgamma,
                   T* dbeta, std::size_t rows, std::size_t cols) {
  const T n = static_cast<T>(cols);
  for (std::size_t r = 0; r < rows; ++r) {
    T s1 = T(0), s2 = T(0);
    for (std::size_t j = 0; j < cols; ++j) {
      const T dyg = dy[r * cols + j] * gamma[j];
      s1 += dyg;
      s2 += dyg * xhat[r * cols + j];
    }
    for (std::size_t j = 0; j < cols; ++j) {
      const T dyg = dy[r * cols + j] * gamma[j];
      dx[r * cols + j] += inv_std[r] * (dyg - s1 / n - xhat[r * cols + j] * s2 / n);
    }
  }
  for (std::size_t j = 0; j < cols; ++j) {
    T dg = T(0), db = T(0);
    for (std::size_t r = 0; r < rows; ++r) {
      dg += dy[r * cols + j] * xhat[r * cols + j];
      db += dy[r * cols + j];
    }
    dgamma[j] += dg;
    dbeta[j] += db;
  }
}

template <class T>
void softmax_fwd(const T* x, T* y, std::size_t rows, std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) {
    const T* xr = x + r * cols;
    T* yr = y + r * cols;
    T mx = xr[0];
    for (std::size_t j = 1; j < cols; ++j) mx = xr[j] > mx ? xr[j] : mx;
    T z = T(0);
    for (std::size_t j = 0; j < cols; ++j) {
      yr[j] = std::exp(xr[j] - mx);
      z += yr[j];
    }
    for (std::size_t j = 0; j < cols; ++j) yr[j] /= z;
  }
}

template <class T>
void softmax_bwd(const T* dy, const T* y, T* dx, std::size_t rows, std::size_t cols) {
  for (std::size_t r = 0; r < rows; ++r) {
    T dot = T(0);
    for (std::size_t j = 0; j < cols; ++j) dot += dy[r * cols + j] * y[r * cols + j];
    for (std::size_t j = 0; j < cols; ++j) {
      dx[r * cols + j] += y[r * cols + j] * (dy[r * cols + j] - dot);
    }
  }
}

template <class T>
void relu_fwd(const T* x, T* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = x[i] > T(0) ? x[i] : T(0);
}

template <class T>
void relu_bwd(const T* dy, const T* x, T* dx, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) dx[i] += x[i] > T(0) ? dy[i] : T(0);
}

template <class T>
void gelu_fwd(const T* x, T* y, std::size_t n) {
  // Exact erf form.
  const T inv_sqrt2 = T(0.70710678118654752440084436210485L);
  for (std::size_t i = 0; i < n; ++i) {
    y[i] = T(0.5) * x[i] * (T(1) + std::erf(x[i] * inv_sqrt2));
  }
}

template <class T>
void gelu_bwd(const T* dy, const T* x, T* dx, std::size_t n) {
  const T inv_sqrt2 = T(0.70710678118654752440084436210485L);
  const T inv_sqrt2pi = T(0.39894228040143267793994605993438L);
  for (std::size_t i = 0; i < n; ++i) {
    const T cdf = T(0.5) * (T(1) + std::erf(x[i] * inv_sqrt2));
    const T pdf = inv_sqrt2pi * std::exp(T(-0.5) * x[i] * x[i]);
    dx[i] += dy[i] * (cdf + x[i] * pdf);
  }
}

template <class T>
void gap_fwd(const T* x, T* y, std::size_t b, std::size_t p, std::size_t c) {
  for (std::size_t ib = 0; ib < b; ++ib) {
    for (std::size_t j = 0; j < c; ++j) {
      T acc = T(0);
      for (std::size_t ip = 0; ip < p; ++ip) acc += x[(ib * p + ip) * c + j];
      y[ib * c + j] = acc / static_cast<T>(p);
    }
  }
}

template <class T>
void gap_bwd(const T* dy, T* dx, std::size_t b, std::size_t p, std::size_t c) {
  for (std::size_t ib = 0; ib < b; ++ib) {
    for (std::size_t ip = 0; ip < p; ++ip) {
      for (std::size_t j = 0; j < c; ++j) {
        dx[(ib * p + ip) * c + j] += dy[ib * c + j] / static_cast<T>(p);
      }
    }
  }
}

template <class T>
void copy_axis1(const T* src, T* dst, std::size_t b, std::size_t s_src, std::size_t d,
                std::size_t s_dst, std::size_t offset) {
  for (std::size_t ib = 0; ib < b; ++ib) {
    for (std::size_t t = 0; t < s_src; ++t) {
      const T* sp = src + (ib * s_src + t) * d;
      T* dp = dst + (ib * s_dst + offset + t) * d;
      for (std::size_t j = 0; j < d; ++j) dp[j] = sp[j];
    }
  }
}

template <class T>
void copy_axis1_acc(const T* src, T* dst, std::size_t b, std::size_t s_src, std::size_t d,
                    std::size_t s_dst, std::size_t offset) {
  for (std::size_t ib = 0; ib < b; ++ib) {
    for (std::size_t t = 0; t < s_src; ++t) {
      const T* sp = src + (ib * s_src + t) * d;
      T* dp = dst + (ib * s_dst + offset + t) * d;
      for (std::size_t j = 0; j < d; ++j) dp[j] += sp[j];
    }
  }
}

template <class T>
void slice_axis1(const T* src, T* dst, std::size_t b, std::size_t s_src, std::size_t d,
                 std::size_t from, std::size_t len) {
  for (std::size_t ib = 0; ib < b; ++ib) {
    for (std::size_t t = 0; t < len; ++t) {
      const T* sp = src + (ib * s_src + from + t) * d;
      T* dp = dst + (ib * len + t) * d;
      for (std::size_t j = 0; j < d; ++j) dp[j] = sp[j];
    }
  }
}

template <class T>
void slice_axis1_acc(const T* src, T* dst, std::size_t b, std::size_t s_dst, std::size_t d,
                     std::size_t from, std::size_t len) {
  // dst[:, :, :] += src[:, from:from+len, :] read side: src has s_dst tokens.
  for (std::size_t ib = 0; ib < b; ++ib) {
    for (std::size_t t = 0; t < len; ++t) {
      const T* sp = src + (ib * s_dst + from + t) * d;
      T* dp = dst + (ib * len + t) * d;
      for (std::size_t j = 0; j < d; ++j) dp[j] += sp[j];
    }
  }
}

template <class T>
void permute4(const T* src, T* dst, const std::size_t* shape, const std::size_t* perm) {
  std::size_t sstr[4];
  sstr[3] = 1;
  for (int a = 2; a >= 0; --a) sstr[a] = sstr[a + 1] * shape[a + 1];
  const std::size_t d0 = shape[perm[0]], d1 = shape[perm[1]], d2 = shape[perm[2]],
                    d3 = shape[perm[3]];
  for (std::size_t i0 = 0; i0 < d0; ++i0) {
    for (std::size_t i1 = 0; i1 < d1; ++i1) {
      for (std::size_t i2 = 0; i2 < d2; ++i2) {
        const std::size_t base =
            i0 * sstr[perm[0]] + i1 * sstr[perm[1]] + i2 * sstr[perm[2]];
        T* dp = dst + ((i0 * d1 + i1) * d2 + i2) * d3;
        for (std::size_t i3 = 0; i3 < d3; ++i3) dp[i3] = src[base + i3 * sstr[perm[3]]];
      }
    }
  }
}

template <class T>
void permute4_acc(const T* src, T* dst, const std::size_t* shape, const std::size_t* perm) {
  std::size_t sstr[4];
  sstr[3] = 1;
  for (int a = 2; a >= 0; --a) sstr[a] = sstr[a + 1] * shape[a + 1];
  const std::size_t d0 = shape[perm[0]], d1 = shape[perm[1]], d2 = shape[perm[2]],
                    d3 = shape[perm[3]];
  for (std::size_t i0 = 0; i0 < d0; ++i0) {
    for (std::size_t i1 = 0; i1 < d1; ++i1) {
      for (std::size_t i2 = 0; i2 < d2; ++i2) {
        const std::size_t base =
            i0 * sstr[perm[0]] + i1 * sstr[perm[1]] + i2 * sstr[perm[2]];
        T* dp = dst + ((i0 * d1 + i1) * d2 + i2) * d3;
        for (std::size_t i3 = 0; i3 < d3; ++i3) dp[i3] += src[base + i3 * sstr[perm[3]]];
      }
    }
  }
}

template <class T>
void tile_rows(const T* src, T* dst, std::size_t reps, std::size_t n) {
  for (std::size_t r = 0; r < reps; ++r) {
    for (std::size_t i = 0; i < n; ++i) dst[r * n + i] = src[i];
  }
}

template <class T>
void tile_rows_bwd(const T* ddst, T* dsrc, std::size_t reps, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    T acc = T(0);
    for (std::size_t r = 0; r < reps; ++r) acc += ddst[r * n + i];
    dsrc[i] += acc;
  }
}

template <class T>
T sum_all(const T* x, std::size_t n) {
  T acc = T(0);
  for (std::size_t i = 0; i < n; ++i) acc += x[i];
  return acc;
}

template <class T>
void cross_entropy_fwd(const T* logits, const int32_t* labels, T* probs, T* loss, std::size_t b,
                       std::size_t c) {
  T total = T(0);
  for (std::size_t i = 0; i < b; ++i) {
    const T* lr = logits + i * c;
    T mx = lr[0];
    for (std::size_t j = 1; j < c; ++j) mx = lr[j] > mx ? lr[j] : mx;
    T z = T(0);
    for (std::size_t j = 0; j < c; ++j) {
      probs[i * c + j] = std::exp(lr[j] - mx);
      z += probs[i * c + j];
    }
    for (std::size_t j = 0; j < c; ++j) probs[i * c + j] /= z;
    total += (mx + std::log(z)) - lr[labels[i]];
  }
  *loss = total / static_cast<T>(b);
}

template <class T>
void cross_entropy_bwd(const T* probs, const int32_t* labels, T gout, T* dlogits, std::size_t b,
                       std::size_t c) {
  const T s = gout / static_cast<T>(b);
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t j = 0; j < c; ++j) {
      const T onehot = (static_cast<std::size_t>(labels[i]) == j) ? T(1) : T(0);
      dlogits[i * c + j] += (probs[i * c + j] - onehot) * s;
    }
  }
}

template <class T>
void adam_step(T* w, const T* g, T* m, T* v, std::size_t n, T lr, T beta1, T beta2, T eps, T wd,
               T bias1, T bias2) {
  for (std::size_t i = 0; i < n; ++i) {
    const T gi = g[i] + wd * w[i];
    m[i] = beta1 * m[i] + (T(1) - beta1) * gi;
    v[i] = beta2 * v[i] + (T(1) - beta2) * gi * gi;
    const T mhat = m[i] / bias1;
    const T vhat = v[i] / bias2;
    w[i] -= lr * mhat / (std::sqrt(vhat) + eps);
  }
}

#define FEDSIS_INSTANTIATE(T)                                                                     \
  template void matmul_nn<T>(const T*, const T*, T*, std::size_t, std::size_t, std::size_t);     \
  template void matmul_nt_acc<T>(const T*, const T*, T*, std::size_t, std::size_t, std::size_t); \
  template void matmul_tn_acc<T>(const T*, const T*, T*, std::size_t, std::size_t, std::size_t); \
  template void bmm_nn<T>(const T*, const T*, T*, std::size_t, std::size_t, std::size_t,         \
                          std::size_t);                                                          \
  template void bmm_nt_acc<T>(const T*, const T*, T*, std::size_t, std::size_t, std::size_t,     \
                              std::size_t);                                                      \
  template void bmm_tn_acc<T>(const T*, const T*, T*, std::size_t, std::size_t, std::size_t,     \
                              std::size_t);                                                      \
  template void add<T>(const T*, const T*, T*, std::size_t);                                     \
  template void mul<T>(const T*, const T*, T*, std::size_t);                                     \
  template void mul_acc<T>(const T*, const T*, T*, std::size_t);                                 \
  template void scale<T>(const T*, T, T*, std::size_t);                                          \
  template void axpy<T>(T, const T*, T*, std::size_t);                                           \
  template void add_bcast<T>(const T*, const T*, T*, std::size_t, std::size_t);                  \
  template void reduce_rows_acc<T>(const T*, T*, std::size_t, std::size_t);                      \
  template void conv2d_fwd<T>(const T*, const T*, const T*, T*, std::size_t, std::size_t,        \
                              std::size_t, std::size_t, std::size_t, std::size_t, std::size_t,   \
                              std::size_t, std::size_t, std::size_t, std::size_t, std::size_t,   \
                              std::size_t);                                                      \
  template void conv2d_dx_acc<T>(const T*, const T*, T*, std::size_t, std::size_t, std::size_t,  \
                                 std::size_t, std::size_t, std::size_t, std::size_t,             \
                                 std::size_t, std::size_t, std::size_t, std::size_t,             \
                                 std::size_t, std::size_t);                                      \
  template void conv2d_dw_acc<T>(const T*, const T*, T*, std::size_t, std::size_t, std::size_t,  \
                                 std::size_t, std::size_t, std::size_t, std::size_t,             \
                                 std::size_t, std::size_t, std::size_t, std::size_t,             \
                                 std::size_t, std::size_t);                                      \
  template void conv2d_db_acc<T>(const T*, T*, std::size_t, std::size_t, std::size_t,            \
                                 std::size_t);                                                   \
  template void bn_train_fwd<T>(const T*, const T*, const T*, T*, T*, T*, T*, T*, std::size_t,   \
                                std::size_t, T);                                                 \
  template void bn_eval_fwd<T>(const T*, const T*, const T*, const T*, const T*, T*, T*, T*,     \
                               std::size_t, std::size_t, T);                                     \
  template void bn_train_bwd<T>(const T*, const T*, const T*, const T*, T*, T*, T*,              \
                                std::size_t, std::size_t);                                       \
  template void bn_eval_bwd<T>(const T*, const T*, const T*, const T*, T*, T*, T*, std::size_t,  \
                               std::size_t);                                                     \
  template void layernorm_fwd<T>(const T*, const T*, const T*, T*, T*, T*, std::size_t,          \
                                 std::size_t, T);                                                \
  template void layernorm_bwd<T>(const T*, const T*, const T*, const T*, T*, T*, T*,             \
                                 std::size_t, std::size_t);                                      \
  template void softmax_fwd<T>(const T*, T*, std::size_t, std::size_t);                          \
  template void softmax_bwd<T>(const T*, const T*, T*, std::size_t, std::size_t);                \
  template void relu_fwd<T>(const T*, T*, std::size_t);                                          \
  template void relu_bwd<T>(const T*, const T*, T*, std::size_t);                                \
  template void gelu_fwd<T>(const T*, T*, std::size_t);                                          \
  template void gelu_bwd<T>(const T*, const T*, T*, std::size_t);                                \
  template void gap_fwd<T>(const T*, T*, std::size_t, std::size_t, std::size_t);                 \
  template void gap_bwd<T>(const T*, T*, std::size_t, std::size_t, std::size_t);                 \
  template void copy_axis1<T>(const T*, T*, std::size_t, std::size_t, std::size_t, std::size_t,  \
                              std::size_t);                                                      \
  template void copy_axis1_acc<T>(const T*, T*, std::size_t, std::size_t, std::size_t,           \
                                  std::size_t, std::size_t);                                     \
  template void slice_axis1<T>(const T*, T*, std::size_t, std::size_t, std::size_t, std::size_t, \
                               std::size_t);                                                     \
  template void slice_axis1_acc<T>(const T*, T*, std::size_t, std::size_t, std::size_t,          \
                                   std::size_t, std::size_t);                                    \
  template void permute4<T>(const T*, T*, const std::size_t*, const std::size_t*);               \
  template void permute4_acc<T>(const T*, T*, const std::size_t*, const std::size_t*);           \
  template void tile_rows<T>(const T*, T*, std::size_t, std::size_t);                            \
  template void tile_rows_bwd<T>(const T*, T*, std::size_t, std::size_t);                        \
  template T sum_all<T>(const T*, std::size_t);                                                  \
  template void cross_entropy_fwd<T>(const T*, const int32_t*, T*, T*, std::size_t,              \
                                     std::size_t);                                               \
  template void cross_entropy_bwd<T>(const T*, const int32_t*, T, T*, std::size_t,               \
                                     std::size_t);                                               \
  template void adam_step<T>(T*, const T*, T*, T*, std::size_t, T, T, T, T, T, T, T);

FEDSIS_INSTANTIATE(double)
FEDSIS_INSTANTIATE(float)
#undef FEDSIS_INSTANTIATE

}  // namespace fedsis::kern::serial
