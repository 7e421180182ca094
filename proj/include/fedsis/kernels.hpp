#pragma once

#include <cstddef>
#include <cstdint>
#include <utility>

namespace fedsis::kern {

// Two interchangeable kernel sets. `serial` is the semantic reference;
// `omp` parallelizes only over independent output elements and keeps every
// per-output accumulation in the serial order, so results are bitwise
// identical to the reference for any thread count. The equivalence tests
// and the determinism contract of the training protocol rely on this.
enum class Backend : uint8_t { Serial, Omp };

Backend backend();
void set_backend(Backend b);
bool omp_available();
void set_threads(int n);  // 0 = runtime default
int max_threads();

// Layouts are row-major. Conventions:
//   matmul_nn: c[m,n] = a[m,k] * b[k,n]
//   matmul_nt: c[m,n] = a[m,k] * b[n,k]^T   (contracts the last axis of both)
//   matmul_tn: c[m,n] = a[k,m]^T * b[k,n]   (contracts the first axis of both)
// bmm_* are the batched forms with identical leading batch extents.
// Kernels ending in _acc accumulate (+=) into their destination; the graph
// uses them for gradients. `rows` always means the product of leading axes.
#define FEDSIS_KERNEL_DECLS(NS)                                                        \
  namespace NS {                                                                       \
  template <class T>                                                                   \
  void matmul_nn(const T* a, const T* b, T* c, std::size_t m, std::size_t k,           \
                 std::size_t n);                                                       \
  template <class T>                                                                   \
  void matmul_nt_acc(const T* a, const T* b, T* c, std::size_t m, std::size_t k,       \
                     std::size_t n);                                                   \
  template <class T>                                                                   \
  void matmul_tn_acc(const T* a, const T* b, T* c, std::size_t k, std::size_t m,       \
                     std::size_t n);                                                   \
  template <class T>                                                                   \
  void bmm_nn(const T* a, const T* b, T* c, std::size_t batch, std::size_t m,          \
              std::size_t k, std::size_t n);                                           \
  template <class T>                                                                   \
  void bmm_nt_acc(const T* a, const T* b, T* c, std::size_t batch, std::size_t m,      \
                  std::size_t k, std::size_t n);                                       \
  template <class T>                                                                   \
  void bmm_tn_acc(const T* a, const T* b, T* c, std::size_t batch, std::size_t k,      \
                  std::size_t m, std::size_t n);                                       \
  template <class T>                                                                   \
  void add(const T* a, const T* b, T* out, std::size_t n);                             \
  template <class T>                                                                   \
  void mul(const T* a, const T* b, T* out, std::size_t n);                             \
  template <class T>                                                                   \
  void mul_acc(const T* a, const T* b, T* out, std::size_t n);                         \
  template <class T>                                                                   \
  void scale(const T* a, T s, T* out, std::size_t n);                                  \
  template <class T>                                                                   \
  void axpy(T alpha, const T* x, T* y, std::size_t n);                                 \
  template <class T>                                                                   \
  void add_bcast(const T* x, const T* b, T* out, std::size_t rows, std::size_t cols);  \
  template <class T>                                                                   \
  void reduce_rows_acc(const T* g, T* out, std::size_t rows, std::size_t cols);        \
  template <class T>                                                                   \
  void conv2d_fwd(const T* x, const T* w, const T* bias, T* y, std::size_t b,          \
                  std::size_t h, std::size_t iw, std::size_t ci, std::size_t kh,       \
                  std::size_t kw, std::size_t co, std::size_t oh, std::size_t ow,      \
                  std::size_t sh, std::size_t sw, std::size_t ph, std::size_t pw);     \
  template <class T>                                                                   \
  void conv2d_dx_acc(const T* dy, const T* w, T* dx, std::size_t b, std::size_t h,     \
                     std::size_t iw, std::size_t ci, std::size_t kh, std::size_t kw,   \
                     std::size_t co, std::size_t oh, std::size_t ow, std::size_t sh,   \
                     std::size_t sw, std::size_t ph, std::size_t pw);                  \
  template <class T>                                                                   \
  void conv2d_dw_acc(const T* x, const T* dy, T* dw, std::size_t b, std::size_t h,     \
                     std::size_t iw, std::size_t ci, std::size_t kh, std::size_t kw,   \
                     std::size_t co, std::size_t oh, std::size_t ow, std::size_t sh,   \
                     std::size_t sw, std::size_t ph, std::size_t pw);                  \
  template <class T>                                                                   \
  void conv2d_db_acc(const T* dy, T* db, std::size_t b, std::size_t oh,                \
                     std::size_t ow, std::size_t co);                                  \
  template <class T>                                                                   \
  void bn_train_fwd(const T* x, const T* gamma, const T* beta, T* y, T* xhat,          \
                    T* inv_std, T* batch_mean, T* batch_var, std::size_t rows,         \
                    std::size_t cols, T eps);                                          \
  template <class T>                                                                   \
  void bn_eval_fwd(const T* x, const T* gamma, const T* beta, const T* run_mean,       \
                   const T* run_var, T* y, T* xhat, T* inv_std, std::size_t rows,      \
                   std::size_t cols, T eps);                                           \
  template <class T>                                                                   \
  void bn_train_bwd(const T* dy, const T* xhat, const T* inv_std, const T* gamma,      \
                    T* dx, T* dgamma, T* dbeta, std::size_t rows, std::size_t cols);   \
  template <class T>                                                                   \
  void bn_eval_bwd(const T* dy, const T* xhat, const T* inv_std, const T* gamma,       \
                   T* dx, T* dgamma, T* dbeta, std::size_t rows, std::size_t cols);    \
  template <class T>                                                                   \
  void layernorm_fwd(const T* x, const T* gamma, const T* beta, T* y, T* xhat,         \
                     T* inv_std, std::size_t rows, std::size_t cols, T eps);           \
  template <class T>                                                                   \
  void layernorm_bwd(const T* dy, const T* xhat, const T* inv_std, const T* gamma,     \
                     T* dx, T* dgamma, T* dbeta, std::size_t rows, std::size_t cols);  \
  template <class T>                                                                   \
  void softmax_fwd(const T* x, T* y, std::size_t rows, std::size_t cols);              \
  template <class T>                                                                   \
  void softmax_bwd(const T* dy, const T* y, T* dx, std::size_t rows,                   \
                   std::size_t cols);                                                  \
  template <class T>                                                                   \
  void relu_fwd(const T* x, T* y, std::size_t n);                                      \
  template <class T>                                                                   \
  void relu_bwd(const T* dy, const T* x, T* dx, std::size_t n);                        \
  template <class T>                                                                   \
  void gelu_fwd(const T* x, T* y, std::size_t n);                                      \
  template <class T>                                                                   \
  void gelu_bwd(const T* dy, const T* x, T* dx, std::size_t n);                        \
  template <class T>                                                                   \
  void gap_fwd(const T* x, T* y, std::size_t b, std::size_t p, std::size_t c);         \
  template <class T>                                                                   \
  void gap_bwd(const T* dy, T* dx, std::size_t b, std::size_t p, std::size_t c);       \
  template <class T>                                                                   \
  void copy_axis1(const T* src, T* dst, std::size_t b, std::size_t s_src,              \
                  std::size_t d, std::size_t s_dst, std::size_t offset);               \
  template <class T>                                                                   \
  void copy_axis1_acc(const T* src, T* dst, std::size_t b, std::size_t s_src,          \
                      std::size_t d, std::size_t s_dst, std::size_t offset);           \
  template <class T>                                                                   \
  void slice_axis1(const T* src, T* dst, std::size_t b, std::size_t s_src,             \
                   std::size_t d, std::size_t from, std::size_t len);                  \
  template <class T>                                                                   \
  void slice_axis1_acc(const T* src, T* dst, std::size_t b, std::size_t s_dst,         \
                       std::size_t d, std::size_t from, std::size_t len);              \
  template <class T>                                                                   \
  void permute4(const T* src, T* dst, const std::size_t* shape,                        \
                const std::size_t* perm);                                              \
  template <class T>                                                                   \
  void permute4_acc(const T* src, T* dst, const std::size_t* shape,                    \
                    const std::size_t* perm);                                          \
  template <class T>                                                                   \
  void tile_rows(const T* src, T* dst, std::size_t reps, std::size_t n);               \
  template <class T>                                                                   \
  void tile_rows_bwd(const T* ddst, T* dsrc, std::size_t reps, std::size_t n);         \
  template <class T>                                                                   \
  T sum_all(const T* x, std::size_t n);                                                \
  template <class T>                                                                   \
  void cross_entropy_fwd(const T* logits, const int32_t* labels, T* probs, T* loss,    \
                         std::size_t b, std::size_t c);                                \
  template <class T>                                                                   \
  void cross_entropy_bwd(const T* probs, const int32_t* labels, T gout, T* dlogits,    \
                         std::size_t b, std::size_t c);                                \
  template <class T>                                                                   \
  void adam_step(T* w, const T* g, T* m, T* v, std::size_t n, T lr, T beta1, T beta2,  \
                 T eps, T wd, T bias1, T bias2);                                       \
  }

FEDSIS_KERNEL_DECLS(serial)
FEDSIS_KERNEL_DECLS(omp)

#undef FEDSIS_KERNEL_DECLS

// Trampolines through the active backend.
#define FEDSIS_KERNEL_TRAMPOLINE(NAME)                            \
  template <class... Args>                                        \
  inline auto NAME(Args&&... args) {                              \
    return backend() == Backend::Omp                              \
               ? omp::NAME(std::forward<Args>(args)...)           \
               : serial::NAME(std::forward<Args>(args)...);       \
  }

FEDSIS_KERNEL_TRAMPOLINE(matmul_nn)
FEDSIS_KERNEL_TRAMPOLINE(matmul_nt_acc)
FEDSIS_KERNEL_TRAMPOLINE(matmul_tn_acc)
FEDSIS_KERNEL_TRAMPOLINE(bmm_nn)
FEDSIS_KERNEL_TRAMPOLINE(bmm_nt_acc)
FEDSIS_KERNEL_TRAMPOLINE(bmm_tn_acc)
FEDSIS_KERNEL_TRAMPOLINE(add)
FEDSIS_KERNEL_TRAMPOLINE(mul)
FEDSIS_KERNEL_TRAMPOLINE(mul_acc)
FEDSIS_KERNEL_TRAMPOLINE(scale)
FEDSIS_KERNEL_TRAMPOLINE(axpy)
FEDSIS_KERNEL_TRAMPOLINE(add_bcast)
FEDSIS_KERNEL_TRAMPOLINE(reduce_rows_acc)
FEDSIS_KERNEL_TRAMPOLINE(conv2d_fwd)
FEDSIS_KERNEL_TRAMPOLINE(conv2d_dx_acc)
FEDSIS_KERNEL_TRAMPOLINE(conv2d_dw_acc)
FEDSIS_KERNEL_TRAMPOLINE(conv2d_db_acc)
FEDSIS_KERNEL_TRAMPOLINE(bn_train_fwd)
FEDSIS_KERNEL_TRAMPOLINE(bn_eval_fwd)
FEDSIS_KERNEL_TRAMPOLINE(bn_train_bwd)
FEDSIS_KERNEL_TRAMPOLINE(bn_eval_bwd)
FEDSIS_KERNEL_TRAMPOLINE(layernorm_fwd)
FEDSIS_KERNEL_TRAMPOLINE(layernorm_bwd)
FEDSIS_KERNEL_TRAMPOLINE(softmax_fwd)
FEDSIS_KERNEL_TRAMPOLINE(softmax_bwd)
FEDSIS_KERNEL_TRAMPOLINE(relu_fwd)
FEDSIS_KERNEL_TRAMPOLINE(relu_bwd)
FEDSIS_KERNEL_TRAMPOLINE(gelu_fwd)
FEDSIS_KERNEL_TRAMPOLINE(gelu_bwd)
FEDSIS_KERNEL_TRAMPOLINE(gap_fwd)
FEDSIS_KERNEL_TRAMPOLINE(gap_bwd)
FEDSIS_KERNEL_TRAMPOLINE(copy_axis1)
FEDSIS_KERNEL_TRAMPOLINE(copy_axis1_acc)
FEDSIS_KERNEL_TRAMPOLINE(slice_axis1)
FEDSIS_KERNEL_TRAMPOLINE(slice_axis1_acc)
FEDSIS_KERNEL_TRAMPOLINE(permute4)
FEDSIS_KERNEL_TRAMPOLINE(permute4_acc)
FEDSIS_KERNEL_TRAMPOLINE(tile_rows)
FEDSIS_KERNEL_TRAMPOLINE(tile_rows_bwd)
FEDSIS_KERNEL_TRAMPOLINE(sum_all)
FEDSIS_KERNEL_TRAMPOLINE(cross_entropy_fwd)
FEDSIS_KERNEL_TRAMPOLINE(cross_entropy_bwd)
FEDSIS_KERNEL_TRAMPOLINE(adam_step)

#undef FEDSIS_KERNEL_TRAMPOLINE

}  // namespace fedsis::kern
