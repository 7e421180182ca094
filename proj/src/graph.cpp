#include "fedsis/graph.hpp"

#include <cmath>
#include <type_traits>

#include "fedsis/kernels.hpp"

namespace fedsis {

const char* op_name(Op op) {
  switch (op) {
    case Op::Leaf: return "leaf";
    case Op::Matmul: return "matmul";
    case Op::Bmm: return "bmm";
    case Op::Add: return "add";
    case Op::AddBias: return "add_bias";
    case Op::Mul: return "mul";
    case Op::Scale: return "scale";
    case Op::Conv2d: return "conv2d";
    case Op::BatchNorm: return "batch_norm";
    case Op::LayerNorm: return "layer_norm";
    case Op::Softmax: return "softmax";
    case Op::Gelu: return "gelu";
    case Op::Relu: return "relu";
    case Op::Gap: return "global_avg_pool";
    case Op::Concat: return "concat_tokens";
    case Op::Slice: return "slice_tokens";
    case Op::Reshape: return "reshape";
    case Op::Transpose: return "transpose";
    case Op::TileBatch: return "tile_batch";
    case Op::SumAll: return "sum_all";
    case Op::CrossEntropy: return "cross_entropy";
  }
  return "?";
}

namespace {

// Staging views that realize the precision contract: in F64 mode they alias
// the double storage, in F32 mode they round through float buffers so every
// kernel computes exactly what a native single-precision engine would.
template <class T>
struct In {
  explicit In(const std::vector<double>& v) {
    if constexpr (std::is_same_v<T, double>) {
      p = v.data();
    } else {
      buf.assign(v.begin(), v.end());
      p = buf.data();
    }
  }
  const T* get() const { return p; }
  const T* p = nullptr;
  std::vector<T> buf;
};

// Overwrite destination: the kernel writes every element.
template <class T>
struct Out {
  explicit Out(std::vector<double>& v) : dst(&v) {
    if constexpr (!std::is_same_v<T, double>) buf.resize(v.size());
  }
  ~Out() {
    if constexpr (!std::is_same_v<T, double>) {
      for (std::size_t i = 0; i < buf.size(); ++i) (*dst)[i] = buf[i];
    }
  }
  T* get() {
    if constexpr (std::is_same_v<T, double>) return dst->data();
    return buf.data();
  }
  std::vector<double>* dst;
  std::vector<T> buf;
};

// Read-modify-write destination for the accumulate kernels.
template <class T>
struct Acc {
  explicit Acc(std::vector<double>& v) : dst(&v) {
    if constexpr (!std::is_same_v<T, double>) buf.assign(v.begin(), v.end());
  }
  ~Acc() {
    if constexpr (!std::is_same_v<T, double>) {
      for (std::size_t i = 0; i < buf.size(); ++i) (*dst)[i] = buf[i];
    }
  }
  T* get() {
    if constexpr (std::is_same_v<T, double>) return dst->data();
    return buf.data();
  }
  std::vector<double>* dst;
  std::vector<T> buf;
};

#define FEDSIS_PREC(FN, ...) \
  (precision_ == Precision::F64 ? FN<double>(__VA_ARGS__) : FN<float>(__VA_ARGS__))

#define FEDSIS_PREC_P(PREC, FN, ...) \
  ((PREC) == Precision::F64 ? FN<double>(__VA_ARGS__) : FN<float>(__VA_ARGS__))

template <class T>
void matmul_fwd(const std::vector<double>& a, const std::vector<double>& b,
                std::vector<double>& out, std::size_t m, std::size_t k, std::size_t n) {
  In<T> ta(a);
  In<T> tb(b);
  Out<T> to(out);
  kern::matmul_nn(ta.get(), tb.get(), to.get(), m, k, n);
}

template <class T>
void bmm_fwd(const std::vector<double>& a, const std::vector<double>& b,
             std::vector<double>& out, std::size_t batch, std::size_t m, std::size_t k,
             std::size_t n) {
  In<T> ta(a);
  In<T> tb(b);
  Out<T> to(out);
  kern::bmm_nn(ta.get(), tb.get(), to.get(), batch, m, k, n);
}

template <class T>
void ew_add_fwd(const std::vector<double>& a, const std::vector<double>& b,
                std::vector<double>& out) {
  In<T> ta(a);
  In<T> tb(b);
  Out<T> to(out);
  kern::add(ta.get(), tb.get(), to.get(), out.size());
}

template <class T>
void ew_mul_fwd(const std::vector<double>& a, const std::vector<double>& b,
                std::vector<double>& out) {
  In<T> ta(a);
  In<T> tb(b);
  Out<T> to(out);
  kern::mul(ta.get(), tb.get(), to.get(), out.size());
}

template <class T>
void scale_fwd(const std::vector<double>& a, double s, std::vector<double>& out) {
  In<T> ta(a);
  Out<T> to(out);
  kern::scale(ta.get(), static_cast<T>(s), to.get(), out.size());
}

template <class T>
void axpy_bwd(double alpha, const std::vector<double>& g, std::vector<double>& dst) {
  In<T> tg(g);
  Acc<T> td(dst);
  kern::axpy(static_cast<T>(alpha), tg.get(), td.get(), g.size());
}

template <class T>
void mul_bwd(const std::vector<double>& g, const std::vector<double>& other,
             std::vector<double>& dst) {
  In<T> tg(g);
  In<T> to(other);
  Acc<T> td(dst);
  kern::mul_acc(tg.get(), to.get(), td.get(), g.size());
}

template <class T>
void add_bcast_fwd(const std::vector<double>& x, const std::vector<double>& b,
                   std::vector<double>& out, std::size_t rows, std::size_t cols) {
  In<T> tx(x);
  In<T> tb(b);
  Out<T> to(out);
  kern::add_bcast(tx.get(), tb.get(), to.get(), rows, cols);
}

template <class T>
void reduce_rows_bwd(const std::vector<double>& g, std::vector<double>& db, std::size_t rows,
                     std::size_t cols) {
  In<T> tg(g);
  Acc<T> td(db);
  kern::reduce_rows_acc(tg.get(), td.get(), rows, cols);
}

template <class T>
void matmul_bwd_a(const std::vector<double>& g, const std::vector<double>& b,
                  std::vector<double>& da, std::size_t m, std::size_t k, std::size_t n) {
  In<T> tg(g);
  In<T> tb(b);
  Acc<T> td(da);
  kern::matmul_nt_acc(tg.get(), tb.get(), td.get(), m, n, k);
}

template <class T>
void matmul_bwd_b(const std::vector<double>& a, const std::vector<double>& g,
                  std::vector<double>& db, std::size_t m, std::size_t k, std::size_t n) {
  In<T> ta(a);
  In<T> tg(g);
  Acc<T> td(db);
  kern::matmul_tn_acc(ta.get(), tg.get(), td.get(), m, k, n);
}

template <class T>
void bmm_bwd_a(const std::vector<double>& g, const std::vector<double>& b,
               std::vector<double>& da, std::size_t batch, std::size_t m, std::size_t k,
               std::size_t n) {
  In<T> tg(g);
  In<T> tb(b);
  Acc<T> td(da);
  kern::bmm_nt_acc(tg.get(), tb.get(), td.get(), batch, m, n, k);
}

template <class T>
void bmm_bwd_b(const std::vector<double>& a, const std::vector<double>& g,
               std::vector<double>& db, std::size_t batch, std::size_t m, std::size_t k,
               std::size_t n) {
  In<T> ta(a);
  In<T> tg(g);
  Acc<T> td(db);
  kern::bmm_tn_acc(ta.get(), tg.get(), td.get(), batch, m, k, n);
}

template <class T>
void conv2d_fwd_t(const std::vector<double>& x, const std::vector<double>& w,
                  const std::vector<double>* bias, std::vector<double>& y,
                  const std::size_t* dims) {
  In<T> tx(x);
  In<T> tw(w);
  Out<T> ty(y);
  if (bias) {
    In<T> tb(*bias);
    kern::conv2d_fwd(tx.get(), tw.get(), tb.get(), ty.get(), dims[0], dims[1], dims[2], dims[3],
                     dims[4], dims[5], dims[6], dims[7], dims[8], dims[9], dims[10], dims[11],
                     dims[12]);
  } else {
    kern::conv2d_fwd(tx.get(), tw.get(), static_cast<const T*>(nullptr), ty.get(), dims[0],
                     dims[1], dims[2], dims[3], dims[4], dims[5], dims[6], dims[7], dims[8],
                     dims[9], dims[10], dims[11], dims[12]);
  }
}

template <class T>
void conv2d_bwd_x(const std::vector<double>& g, const std::vector<double>& w,
                  std::vector<double>& dx, const std::size_t* dims) {
  In<T> tg(g);
  In<T> tw(w);
  Acc<T> td(dx);
  kern::conv2d_dx_acc(tg.get(), tw.get(), td.get(), dims[0], dims[1], dims[2], dims[3],
                         dims[4], dims[5], dims[6], dims[7], dims[8], dims[9], dims[10],
                         dims[11], dims[12]);
}

template <class T>
void conv2d_bwd_w(const std::vector<double>& x, const std::vector<double>& g,
                  std::vector<double>& dw, const std::size_t* dims) {
  In<T> tx(x);
  In<T> tg(g);
  Acc<T> td(dw);
  kern::conv2d_dw_acc(tx.get(), tg.get(), td.get(), dims[0], dims[1], dims[2], dims[3],
                         dims[4], dims[5], dims[6], dims[7], dims[8], dims[9], dims[10],
                         dims[11], dims[12]);
}

template <class T>
void conv2d_bwd_b(const std::vector<double>& g, std::vector<double>& db, std::size_t b,
                  std::size_t oh, std::size_t ow, std::size_t co) {
  In<T> tg(g);
  Acc<T> td(db);
  kern::conv2d_db_acc(tg.get(), td.get(), b, oh, ow, co);
}

template <class T>
void bn_fwd_t(const std::vector<double>& x, const std::vector<double>& gamma,
              const std::vector<double>& beta, BatchNormState& state, bool train,
              std::vector<double>& y, std::vector<double>& xhat, std::vector<double>& istd,
              std::size_t rows, std::size_t cols) {
  In<T> tx(x);
  In<T> tg(gamma);
  In<T> tb(beta);
  Out<T> ty(y);
  Out<T> txh(xhat);
  Out<T> ti(istd);
  if (train) {
    std::vector<T> mean(cols), var(cols);
    kern::bn_train_fwd(tx.get(), tg.get(), tb.get(), ty.get(), txh.get(), ti.get(),
                          mean.data(), var.data(), rows, cols, static_cast<T>(state.eps));
    // Running stats: biased batch var is used for normalization, the
    // unbiased estimate goes into the running buffer (rows >= 2 checked
    // at op construction).
    Acc<T> trm(state.running_mean.values());
    Acc<T> trv(state.running_var.values());
    const T mom = static_cast<T>(state.momentum);
    const T unbias = static_cast<T>(rows) / static_cast<T>(rows - 1);
    for (std::size_t j = 0; j < cols; ++j) {
      trm.get()[j] = (T(1) - mom) * trm.get()[j] + mom * mean[j];
      trv.get()[j] = (T(1) - mom) * trv.get()[j] + mom * var[j] * unbias;
    }
  } else {
    In<T> trm(state.running_mean.values());
    In<T> trv(state.running_var.values());
    kern::bn_eval_fwd(tx.get(), tg.get(), tb.get(), trm.get(), trv.get(), ty.get(), txh.get(),
                         ti.get(), rows, cols, static_cast<T>(state.eps));
  }
}

template <class T>
void bn_bwd_t(const std::vector<double>& g, const std::vector<double>& xhat,
              const std::vector<double>& istd, const std::vector<double>& gamma, bool train,
              std::vector<double>& dx, std::vector<double>& dgamma, std::vector<double>& dbeta,
              std::size_t rows, std::size_t cols) {
  In<T> tg(g);
  In<T> txh(xhat);
  In<T> ti(istd);
  In<T> tga(gamma);
  Acc<T> tdx(dx);
  Acc<T> tdg(dgamma);
  Acc<T> tdb(dbeta);
  if (train) {
    kern::bn_train_bwd(tg.get(), txh.get(), ti.get(), tga.get(), tdx.get(), tdg.get(),
                          tdb.get(), rows, cols);
  } else {
    kern::bn_eval_bwd(tg.get(), txh.get(), ti.get(), tga.get(), tdx.get(), tdg.get(),
                         tdb.get(), rows, cols);
  }
}

template <class T>
void ln_fwd_t(const std::vector<double>& x, const std::vector<double>& gamma,
              const std::vector<double>& beta, std::vector<double>& y,
              std::vector<double>& xhat, std::vector<double>& istd, std::size_t rows,
              std::size_t cols, double eps) {
  In<T> tx(x);
  In<T> tg(gamma);
  In<T> tb(beta);
  Out<T> ty(y);
  Out<T> txh(xhat);
  Out<T> ti(istd);
  kern::layernorm_fwd(tx.get(), tg.get(), tb.get(), ty.get(), txh.get(), ti.get(), rows, cols,
                         static_cast<T>(eps));
}

template <class T>
void ln_bwd_t(const std::vector<double>& g, const std::vector<double>& xhat,
              const std::vector<double>& istd, const std::vector<double>& gamma,
              std::vector<double>& dx, std::vector<double>& dgamma, std::vector<double>& dbeta,
              std::size_t rows, std::size_t cols) {
  In<T> tg(g);
  In<T> txh(xhat);
  In<T> ti(istd);
  In<T> tga(gamma);
  Acc<T> tdx(dx);
  Acc<T> tdg(dgamma);
  Acc<T> tdb(dbeta);
  kern::layernorm_bwd(tg.get(), txh.get(), ti.get(), tga.get(), tdx.get(), tdg.get(),
                         tdb.get(), rows, cols);
}

template <class T>
void softmax_fwd_t(const std::vector<double>& x, std::vector<double>& y, std::size_t rows,
                   std::size_t cols) {
  In<T> tx(x);
  Out<T> ty(y);
  kern::softmax_fwd(tx.get(), ty.get(), rows, cols);
}

template <class T>
void softmax_bwd_t(const std::vector<double>& g, const std::vector<double>& y,
                   std::vector<double>& dx, std::size_t rows, std::size_t cols) {
  In<T> tg(g);
  In<T> ty(y);
  Acc<T> td(dx);
  kern::softmax_bwd(tg.get(), ty.get(), td.get(), rows, cols);
}

template <class T>
void unary_fwd_t(Op op, const std::vector<double>& x, std::vector<double>& y) {
  In<T> tx(x);
  Out<T> ty(y);
  if (op == Op::Relu) {
    kern::relu_fwd(tx.get(), ty.get(), y.size());
  } else {
    kern::gelu_fwd(tx.get(), ty.get(), y.size());
  }
}

template <class T>
void unary_bwd_t(Op op, const std::vector<double>& g, const std::vector<double>& x,
                 std::vector<double>& dx) {
  In<T> tg(g);
  In<T> tx(x);
  Acc<T> td(dx);
  if (op == Op::Relu) {
    kern::relu_bwd(tg.get(), tx.get(), td.get(), g.size());
  } else {
    kern::gelu_bwd(tg.get(), tx.get(), td.get(), g.size());
  }
}

template <class T>
void gap_fwd_t(const std::vector<double>& x, std::vector<double>& y, std::size_t b,
               std::size_t p, std::size_t c) {
  In<T> tx(x);
  Out<T> ty(y);
  kern::gap_fwd(tx.get(), ty.get(), b, p, c);
}

template <class T>
void gap_bwd_t(const std::vector<double>& g, std::vector<double>& dx, std::size_t b,
               std::size_t p, std::size_t c) {
  In<T> tg(g);
  Acc<T> td(dx);
  kern::gap_bwd(tg.get(), td.get(), b, p, c);
}

template <class T>
void copy_axis1_t(const std::vector<double>& src, std::vector<double>& dst, std::size_t b,
                  std::size_t s_src, std::size_t d, std::size_t s_dst, std::size_t offset) {
  In<T> ts(src);
  Acc<T> td(dst);  // partial write: preserve the other region
  kern::copy_axis1(ts.get(), td.get(), b, s_src, d, s_dst, offset);
}

template <class T>
void copy_axis1_acc_t(const std::vector<double>& src, std::vector<double>& dst, std::size_t b,
                      std::size_t s_src, std::size_t d, std::size_t s_dst, std::size_t offset) {
  In<T> ts(src);
  Acc<T> td(dst);
  kern::copy_axis1_acc(ts.get(), td.get(), b, s_src, d, s_dst, offset);
}

template <class T>
void slice_axis1_t(const std::vector<double>& src, std::vector<double>& dst, std::size_t b,
                   std::size_t s_src, std::size_t d, std::size_t from, std::size_t len) {
  In<T> ts(src);
  Out<T> td(dst);
  kern::slice_axis1(ts.get(), td.get(), b, s_src, d, from, len);
}

template <class T>
void slice_axis1_acc_t(const std::vector<double>& src, std::vector<double>& dst, std::size_t b,
                       std::size_t s_src, std::size_t d, std::size_t from, std::size_t len) {
  In<T> ts(src);
  Acc<T> td(dst);
  kern::slice_axis1_acc(ts.get(), td.get(), b, s_src, d, from, len);
}

template <class T>
void permute4_t(const std::vector<double>& src, std::vector<double>& dst,
                const std::size_t* shape, const std::size_t* perm) {
  In<T> ts(src);
  Out<T> td(dst);
  kern::permute4(ts.get(), td.get(), shape, perm);
}

template <class T>
void permute4_acc_t(const std::vector<double>& src, std::vector<double>& dst,
                    const std::size_t* shape, const std::size_t* perm) {
  In<T> ts(src);
  Acc<T> td(dst);
  kern::permute4_acc(ts.get(), td.get(), shape, perm);
}

template <class T>
void tile_fwd_t(const std::vector<double>& src, std::vector<double>& dst, std::size_t reps,
                std::size_t n) {
  In<T> ts(src);
  Out<T> td(dst);
  kern::tile_rows(ts.get(), td.get(), reps, n);
}

template <class T>
void tile_bwd_t(const std::vector<double>& g, std::vector<double>& dsrc, std::size_t reps,
                std::size_t n) {
  In<T> tg(g);
  Acc<T> td(dsrc);
  kern::tile_rows_bwd(tg.get(), td.get(), reps, n);
}

template <class T>
void sum_all_fwd_t(const std::vector<double>& x, std::vector<double>& out) {
  In<T> tx(x);
  Out<T> to(out);
  to.get()[0] = kern::sum_all(tx.get(), x.size());
}

template <class T>
void sum_all_bwd_t(const std::vector<double>& g, std::vector<double>& dx) {
  Acc<T> td(dx);
  const T g0 = static_cast<T>(g[0]);
  T* p = td.get();
  for (std::size_t i = 0; i < dx.size(); ++i) p[i] += g0;
}

template <class T>
void ce_fwd_t(const std::vector<double>& logits, const std::vector<int32_t>& labels,
              std::vector<double>& probs, std::vector<double>& loss, std::size_t b,
              std::size_t c) {
  In<T> tl(logits);
  Out<T> tp(probs);
  Out<T> to(loss);
  kern::cross_entropy_fwd(tl.get(), labels.data(), tp.get(), to.get(), b, c);
}

template <class T>
void ce_bwd_t(const std::vector<double>& probs, const std::vector<int32_t>& labels, double gout,
              std::vector<double>& dlogits, std::size_t b, std::size_t c) {
  In<T> tp(probs);
  Acc<T> td(dlogits);
  kern::cross_entropy_bwd(tp.get(), labels.data(), static_cast<T>(gout), td.get(), b, c);
}

[[noreturn]] void shape_error(const char* op, const std::string& detail) {
  fail(op, detail);
}

}  // namespace

NodeId Graph::push(Node n) {
  nodes_.push_back(std::move(n));
  return nodes_.size() - 1;
}

Graph::Node& Graph::at(NodeId id) {
  if (id >= nodes_.size()) fail("graph", "node id " + std::to_string(id) + " out of range");
  return nodes_[id];
}

const Graph::Node& Graph::at(NodeId id) const {
  if (id >= nodes_.size()) fail("graph", "node id " + std::to_string(id) + " out of range");
  return nodes_[id];
}

std::vector<double>& Graph::grad_buf(NodeId id) {
  Node& n = nodes_[id];
  if (n.grad.empty()) n.grad.assign(n.value.size(), 0.0);
  return n.grad;
}

NodeId Graph::input(Tensor t) {
  Node n;
  n.op = Op::Leaf;
  n.value = std::move(t);
  n.needs_grad = false;
  return push(std::move(n));
}

NodeId Graph::input_with_grad(Tensor t) {
  Node n;
  n.op = Op::Leaf;
  n.value = std::move(t);
  n.needs_grad = true;
  n.grad_retrievable = true;
  return push(std::move(n));
}

NodeId Graph::param(Tensor& t) {
  Node n;
  n.op = Op::Leaf;
  n.value = t;  // copy; the binding applies gradients back
  n.needs_grad = t.requires_grad();
  n.bound = &t;
  return push(std::move(n));
}

const Tensor& Graph::value(NodeId id) const { return at(id).value; }

const std::vector<double>& Graph::grad(NodeId id) const {
  const Node& n = at(id);
  if (n.grad.empty()) {
    fail("graph", std::string("no gradient on ") + op_name(n.op) +
                      " node; run backward first");
  }
  return n.grad;
}

NodeId Graph::matmul(NodeId a, NodeId b) {
  const Tensor& ta = at(a).value;
  const Tensor& tb = at(b).value;
  if (ta.rank() < 2 || tb.rank() != 2) {
    shape_error("matmul", "lhs rank >= 2 and rhs rank 2 required, got " +
                              shape_str(ta.shape()) + " x " + shape_str(tb.shape()));
  }
  const std::size_t k = ta.shape().back();
  if (k != tb.shape()[0]) {
    shape_error("matmul", "inner extents differ: " + shape_str(ta.shape()) + " x " +
                              shape_str(tb.shape()));
  }
  const std::size_t n = tb.shape()[1];
  const std::size_t m = ta.size() / k;
  Shape out_shape(ta.shape().begin(), ta.shape().end() - 1);
  out_shape.push_back(n);

  Node nd;
  nd.op = Op::Matmul;
  nd.in = {a, b, kNoNode};
  nd.needs_grad = wants_grad(a) || wants_grad(b);
  nd.value = Tensor(out_shape);
  FEDSIS_PREC(matmul_fwd, ta.values(), tb.values(), nd.value.values(), m, k, n);
  return push(std::move(nd));
}

NodeId Graph::bmm(NodeId a, NodeId b) {
  const Tensor& ta = at(a).value;
  const Tensor& tb = at(b).value;
  if (ta.rank() < 3 || tb.rank() != ta.rank()) {
    shape_error("bmm", "equal ranks >= 3 required, got " + shape_str(ta.shape()) + " x " +
                           shape_str(tb.shape()));
  }
  std::size_t batch = 1;
  for (std::size_t i = 0; i + 2 < ta.rank(); ++i) {
    if (ta.shape()[i] != tb.shape()[i]) {
      shape_error("bmm", "leading extents differ: " + shape_str(ta.shape()) + " x " +
                             shape_str(tb.shape()));
    }
    batch *= ta.shape()[i];
  }
  const std::size_t m = ta.shape()[ta.rank() - 2];
  const std::size_t k = ta.shape()[ta.rank() - 1];
  if (k != tb.shape()[tb.rank() - 2]) {
    shape_error("bmm", "inner extents differ: " + shape_str(ta.shape()) + " x " +
                           shape_str(tb.shape()));
  }
  const std::size_t n = tb.shape()[tb.rank() - 1];
  Shape out_shape(ta.shape().begin(), ta.shape().end() - 1);
  out_shape.back() = m;
  out_shape.push_back(n);

  Node nd;
  nd.op = Op::Bmm;
  nd.in = {a, b, kNoNode};
  nd.needs_grad = wants_grad(a) || wants_grad(b);
  nd.value = Tensor(out_shape);
  FEDSIS_PREC(bmm_fwd, ta.values(), tb.values(), nd.value.values(), batch, m, k, n);
  return push(std::move(nd));
}

NodeId Graph::add(NodeId a, NodeId b) {
  const Tensor& ta = at(a).value;
  const Tensor& tb = at(b).value;
  if (ta.shape() != tb.shape()) {
    shape_error("add", "shapes differ: " + shape_str(ta.shape()) + " vs " +
                           shape_str(tb.shape()));
  }
  Node nd;
  nd.op = Op::Add;
  nd.in = {a, b, kNoNode};
  nd.needs_grad = wants_grad(a) || wants_grad(b);
  nd.value = Tensor(ta.shape());
  FEDSIS_PREC(ew_add_fwd, ta.values(), tb.values(), nd.value.values());
  return push(std::move(nd));
}

NodeId Graph::add_bias(NodeId x, NodeId b) {
  const Tensor& tx = at(x).value;
  const Tensor& tb = at(b).value;
  if (tb.rank() >= tx.rank()) {
    shape_error("add_bias", "bias rank must be below input rank: " + shape_str(tx.shape()) +
                                " vs " + shape_str(tb.shape()));
  }
  for (std::size_t i = 0; i < tb.rank(); ++i) {
    if (tb.shape()[tb.rank() - 1 - i] != tx.shape()[tx.rank() - 1 - i]) {
      shape_error("add_bias", "bias shape " + shape_str(tb.shape()) +
                                  " is not a suffix of input shape " + shape_str(tx.shape()));
    }
  }
  const std::size_t cols = tb.size();
  const std::size_t rows = tx.size() / cols;
  Node nd;
  nd.op = Op::AddBias;
  nd.in = {x, b, kNoNode};
  nd.needs_grad = wants_grad(x) || wants_grad(b);
  nd.value = Tensor(tx.shape());
  FEDSIS_PREC(add_bcast_fwd, tx.values(), tb.values(), nd.value.values(), rows, cols);
  return push(std::move(nd));
}

NodeId Graph::mul(NodeId a, NodeId b) {
  const Tensor& ta = at(a).value;
  const Tensor& tb = at(b).value;
  if (ta.shape() != tb.shape()) {
    shape_error("mul", "shapes differ: " + shape_str(ta.shape()) + " vs " +
                           shape_str(tb.shape()));
  }
  Node nd;
  nd.op = Op::Mul;
  nd.in = {a, b, kNoNode};
  nd.needs_grad = wants_grad(a) || wants_grad(b);
  nd.value = Tensor(ta.shape());
  FEDSIS_PREC(ew_mul_fwd, ta.values(), tb.values(), nd.value.values());
  return push(std::move(nd));
}

NodeId Graph::scale(NodeId x, double s) {
  const Tensor& tx = at(x).value;
  Node nd;
  nd.op = Op::Scale;
  nd.in = {x, kNoNode, kNoNode};
  nd.scalar = s;
  nd.needs_grad = wants_grad(x);
  nd.value = Tensor(tx.shape());
  FEDSIS_PREC(scale_fwd, tx.values(), s, nd.value.values());
  return push(std::move(nd));
}

NodeId Graph::conv2d(NodeId x, NodeId w, NodeId bias, const Conv2dSpec& spec) {
  const Tensor& tx = at(x).value;
  const Tensor& tw = at(w).value;
  if (tx.rank() != 4 || tw.rank() != 4) {
    shape_error("conv2d", "input NHWC and kernel [kh,kw,ci,co] required, got " +
                              shape_str(tx.shape()) + " and " + shape_str(tw.shape()));
  }
  const std::size_t b = tx.shape()[0], h = tx.shape()[1], iw = tx.shape()[2],
                    ci = tx.shape()[3];
  const std::size_t kh = tw.shape()[0], kw = tw.shape()[1], co = tw.shape()[3];
  if (tw.shape()[2] != ci) {
    shape_error("conv2d", "kernel input channels " + shape_str(tw.shape()) +
                              " vs input " + shape_str(tx.shape()));
  }
  if (h + 2 * spec.pad_h < kh || iw + 2 * spec.pad_w < kw) {
    shape_error("conv2d", "kernel larger than padded input");
  }
  const std::size_t oh = (h + 2 * spec.pad_h - kh) / spec.stride_h + 1;
  const std::size_t ow = (iw + 2 * spec.pad_w - kw) / spec.stride_w + 1;
  const std::vector<double>* bias_vals = nullptr;
  if (bias != kNoNode) {
    const Tensor& tb = at(bias).value;
    if (tb.shape() != Shape{co}) {
      shape_error("conv2d", "bias shape " + shape_str(tb.shape()) + " vs out channels " +
                                std::to_string(co));
    }
    bias_vals = &tb.values();
  }

  Node nd;
  nd.op = Op::Conv2d;
  nd.in = {x, w, bias};
  nd.conv = spec;
  nd.needs_grad = wants_grad(x) || wants_grad(w) || (bias != kNoNode && wants_grad(bias));
  nd.value = Tensor(Shape{b, oh, ow, co});
  const std::size_t dims[13] = {b,  h,  iw, ci,           kh,           kw,          co,
                                oh, ow, spec.stride_h, spec.stride_w, spec.pad_h, spec.pad_w};
  FEDSIS_PREC(conv2d_fwd_t, tx.values(), tw.values(), bias_vals, nd.value.values(), dims);
  return push(std::move(nd));
}

NodeId Graph::batch_norm(NodeId x, NodeId gamma, NodeId beta, BatchNormState& state,
                         bool train) {
  const Tensor& tx = at(x).value;
  if (tx.rank() < 2) shape_error("batch_norm", "rank >= 2 required, got " + shape_str(tx.shape()));
  const std::size_t cols = tx.shape().back();
  const std::size_t rows = tx.size() / cols;
  const Tensor& tg = at(gamma).value;
  const Tensor& tb = at(beta).value;
  if (tg.size() != cols || tb.size() != cols || state.running_mean.size() != cols) {
    shape_error("batch_norm", "channel mismatch: input " + shape_str(tx.shape()) + ", gamma " +
                                  shape_str(tg.shape()) + ", state " +
                                  std::to_string(state.running_mean.size()));
  }
  if (train && rows < 2) {
    shape_error("batch_norm", "train mode needs at least 2 rows, got " +
                                  std::to_string(rows));
  }

  Node nd;
  nd.op = Op::BatchNorm;
  nd.in = {x, gamma, beta};
  nd.train_mode = train;
  nd.needs_grad = wants_grad(x) || wants_grad(gamma) || wants_grad(beta);
  nd.value = Tensor(tx.shape());
  nd.saved.resize(tx.size());        // xhat
  nd.saved2.resize(cols);            // inv_std
  FEDSIS_PREC(bn_fwd_t, tx.values(), tg.values(), tb.values(), state, train, nd.value.values(),
              nd.saved, nd.saved2, rows, cols);
  return push(std::move(nd));
}

NodeId Graph::layer_norm(NodeId x, NodeId gamma, NodeId beta, double eps) {
  const Tensor& tx = at(x).value;
  if (tx.rank() < 2) shape_error("layer_norm", "rank >= 2 required, got " + shape_str(tx.shape()));
  const std::size_t cols = tx.shape().back();
  const std::size_t rows = tx.size() / cols;
  const Tensor& tg = at(gamma).value;
  const Tensor& tb = at(beta).value;
  if (tg.size() != cols || tb.size() != cols) {
    shape_error("layer_norm", "scale/shift size vs last axis: " + shape_str(tg.shape()) +
                                  " for input " + shape_str(tx.shape()));
  }

  Node nd;
  nd.op = Op::LayerNorm;
  nd.in = {x, gamma, beta};
  nd.eps = eps;
  nd.needs_grad = wants_grad(x) || wants_grad(gamma) || wants_grad(beta);
  nd.value = Tensor(tx.shape());
  nd.saved.resize(tx.size());  // xhat
  nd.saved2.resize(rows);      // inv_std per row
  FEDSIS_PREC(ln_fwd_t, tx.values(), tg.values(), tb.values(), nd.value.values(), nd.saved,
              nd.saved2, rows, cols, eps);
  return push(std::move(nd));
}

NodeId Graph::softmax(NodeId x) {
  const Tensor& tx = at(x).value;
  if (tx.rank() < 1) shape_error("softmax", "rank >= 1 required");
  const std::size_t cols = tx.shape().back();
  const std::size_t rows = tx.size() / cols;
  Node nd;
  nd.op = Op::Softmax;
  nd.in = {x, kNoNode, kNoNode};
  nd.needs_grad = wants_grad(x);
  nd.value = Tensor(tx.shape());
  FEDSIS_PREC(softmax_fwd_t, tx.values(), nd.value.values(), rows, cols);
  return push(std::move(nd));
}

NodeId Graph::gelu(NodeId x) {
  const Tensor& tx = at(x).value;
  Node nd;
  nd.op = Op::Gelu;
  nd.in = {x, kNoNode, kNoNode};
  nd.needs_grad = wants_grad(x);
  nd.value = Tensor(tx.shape());
  FEDSIS_PREC(unary_fwd_t, Op::Gelu, tx.values(), nd.value.values());
  return push(std::move(nd));
}

NodeId Graph::relu(NodeId x) {
  const Tensor& tx = at(x).value;
  Node nd;
  nd.op = Op::Relu;
  nd.in = {x, kNoNode, kNoNode};
  nd.needs_grad = wants_grad(x);
  nd.value = Tensor(tx.shape());
  FEDSIS_PREC(unary_fwd_t, Op::Relu, tx.values(), nd.value.values());
  return push(std::move(nd));
}

NodeId Graph::global_avg_pool(NodeId x) {
  const Tensor& tx = at(x).value;
  if (tx.rank() != 3 && tx.rank() != 4) {
    shape_error("global_avg_pool", "(B,P,C) or (B,H,W,C) required, got " +
                                       shape_str(tx.shape()));
  }
  const std::size_t b = tx.shape()[0];
  const std::size_t c = tx.shape().back();
  const std::size_t p = tx.size() / (b * c);
  Node nd;
  nd.op = Op::Gap;
  nd.in = {x, kNoNode, kNoNode};
  nd.needs_grad = wants_grad(x);
  nd.value = Tensor(Shape{b, c});
  FEDSIS_PREC(gap_fwd_t, tx.values(), nd.value.values(), b, p, c);
  return push(std::move(nd));
}

NodeId Graph::concat_tokens(NodeId a, NodeId b) {
  const Tensor& ta = at(a).value;
  const Tensor& tb = at(b).value;
  if (ta.rank() != 3 || tb.rank() != 3 || ta.shape()[0] != tb.shape()[0] ||
      ta.shape()[2] != tb.shape()[2]) {
    shape_error("concat_tokens", "need (B,S1,d) and (B,S2,d), got " + shape_str(ta.shape()) +
                                     " and " + shape_str(tb.shape()));
  }
  const std::size_t batch = ta.shape()[0], s1 = ta.shape()[1], s2 = tb.shape()[1],
                    d = ta.shape()[2];
  Node nd;
  nd.op = Op::Concat;
  nd.in = {a, b, kNoNode};
  nd.needs_grad = wants_grad(a) || wants_grad(b);
  nd.value = Tensor(Shape{batch, s1 + s2, d});
  FEDSIS_PREC(copy_axis1_t, ta.values(), nd.value.values(), batch, s1, d, s1 + s2, 0);
  FEDSIS_PREC(copy_axis1_t, tb.values(), nd.value.values(), batch, s2, d, s1 + s2, s1);
  return push(std::move(nd));
}

NodeId Graph::slice_tokens(NodeId x, std::size_t from, std::size_t len) {
  const Tensor& tx = at(x).value;
  if (tx.rank() != 3) {
    shape_error("slice_tokens", "(B,S,d) required, got " + shape_str(tx.shape()));
  }
  const std::size_t batch = tx.shape()[0], s = tx.shape()[1], d = tx.shape()[2];
  if (len == 0 || from + len > s) {
    shape_error("slice_tokens", "range [" + std::to_string(from) + "," +
                                    std::to_string(from + len) + ") out of " +
                                    std::to_string(s) + " tokens");
  }
  Node nd;
  nd.op = Op::Slice;
  nd.in = {x, kNoNode, kNoNode};
  nd.from = from;
  nd.len = len;
  nd.needs_grad = wants_grad(x);
  nd.value = Tensor(Shape{batch, len, d});
  FEDSIS_PREC(slice_axis1_t, tx.values(), nd.value.values(), batch, s, d, from, len);
  return push(std::move(nd));
}

NodeId Graph::reshape(NodeId x, Shape shape) {
  const Tensor& tx = at(x).value;
  if (shape_numel(shape) != tx.size()) {
    shape_error("reshape", shape_str(tx.shape()) + " -> " + shape_str(shape) +
                               " changes element count");
  }
  Node nd;
  nd.op = Op::Reshape;
  nd.in = {x, kNoNode, kNoNode};
  nd.in_shape = tx.shape();
  nd.needs_grad = wants_grad(x);
  nd.value = Tensor(std::move(shape), tx.values());
  return push(std::move(nd));
}

NodeId Graph::transpose(NodeId x, std::array<std::size_t, 4> perm) {
  const Tensor& tx = at(x).value;
  if (tx.rank() != 4) {
    shape_error("transpose", "rank 4 required, got " + shape_str(tx.shape()));
  }
  bool seen[4] = {false, false, false, false};
  for (std::size_t a : perm) {
    if (a >= 4 || seen[a]) shape_error("transpose", "invalid permutation");
    seen[a] = true;
  }
  Shape out_shape{tx.shape()[perm[0]], tx.shape()[perm[1]], tx.shape()[perm[2]],
                  tx.shape()[perm[3]]};
  Node nd;
  nd.op = Op::Transpose;
  nd.in = {x, kNoNode, kNoNode};
  nd.perm = perm;
  nd.in_shape = tx.shape();
  nd.needs_grad = wants_grad(x);
  nd.value = Tensor(out_shape);
  FEDSIS_PREC(permute4_t, tx.values(), nd.value.values(), tx.shape().data(), perm.data());
  return push(std::move(nd));
}

NodeId Graph::tile_batch(NodeId x, std::size_t reps) {
  const Tensor& tx = at(x).value;
  if (reps == 0) shape_error("tile_batch", "zero repetitions");
  Shape out_shape{reps};
  out_shape.insert(out_shape.end(), tx.shape().begin(), tx.shape().end());
  Node nd;
  nd.op = Op::TileBatch;
  nd.in = {x, kNoNode, kNoNode};
  nd.needs_grad = wants_grad(x);
  nd.value = Tensor(out_shape);
  FEDSIS_PREC(tile_fwd_t, tx.values(), nd.value.values(), reps, tx.size());
  return push(std::move(nd));
}

NodeId Graph::sum_all(NodeId x) {
  const Tensor& tx = at(x).value;
  Node nd;
  nd.op = Op::SumAll;
  nd.in = {x, kNoNode, kNoNode};
  nd.needs_grad = wants_grad(x);
  nd.value = Tensor(Shape{1});
  FEDSIS_PREC(sum_all_fwd_t, tx.values(), nd.value.values());
  return push(std::move(nd));
}

NodeId Graph::cross_entropy(NodeId logits, std::vector<int32_t> labels) {
  const Tensor& tl = at(logits).value;
  if (tl.rank() != 2) {
    shape_error("cross_entropy", "logits (B,C) required, got " + shape_str(tl.shape()));
  }
  const std::size_t b = tl.shape()[0], c = tl.shape()[1];
  if (labels.size() != b) {
    shape_error("cross_entropy", std::to_string(labels.size()) + " labels for batch " +
                                     std::to_string(b));
  }
  for (int32_t y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= c) {
      shape_error("cross_entropy", "label " + std::to_string(y) + " out of " +
                                       std::to_string(c) + " classes");
    }
  }
  Node nd;
  nd.op = Op::CrossEntropy;
  nd.in = {logits, kNoNode, kNoNode};
  nd.labels = std::move(labels);
  nd.needs_grad = wants_grad(logits);
  nd.value = Tensor(Shape{1});
  nd.saved.resize(tl.size());  // softmax probabilities
  FEDSIS_PREC(ce_fwd_t, tl.values(), nd.labels, nd.saved, nd.value.values(), b, c);
  return push(std::move(nd));
}

NodeId Graph::multi_head_attention(NodeId x, NodeId wq, NodeId bq, NodeId wk, NodeId bk,
                                   NodeId wv, NodeId bv, NodeId wo, NodeId bo,
                                   std::size_t heads) {
  const Tensor& tx = at(x).value;
  if (tx.rank() != 3) {
    shape_error("attention", "(B,T,d) required, got " + shape_str(tx.shape()));
  }
  const std::size_t b = tx.shape()[0], t = tx.shape()[1], d = tx.shape()[2];
  if (heads == 0 || d % heads != 0) {
    shape_error("attention", "dim " + std::to_string(d) + " not divisible by " +
                                 std::to_string(heads) + " heads");
  }
  const std::size_t dh = d / heads;

  auto proj_heads = [&](NodeId w, NodeId bias) {
    NodeId p = add_bias(matmul(x, w), bias);
    p = reshape(p, Shape{b, t, heads, dh});
    return transpose(p, {0, 2, 1, 3});  // (B,h,T,dh)
  };
  NodeId q = proj_heads(wq, bq);
  NodeId k = proj_heads(wk, bk);
  NodeId v = proj_heads(wv, bv);

  NodeId kt = transpose(k, {0, 1, 3, 2});              // (B,h,dh,T)
  NodeId scores = scale(bmm(q, kt), 1.0 / std::sqrt(static_cast<double>(dh)));
  NodeId attn = softmax(scores);                       // (B,h,T,T)
  NodeId ctx = bmm(attn, v);                           // (B,h,T,dh)
  ctx = reshape(transpose(ctx, {0, 2, 1, 3}), Shape{b, t, d});
  return add_bias(matmul(ctx, wo), bo);
}

void Graph::backward(NodeId loss) {
  const Node& n = at(loss);
  if (n.value.size() != 1) {
    fail("backward", std::string("loss node is ") + shape_str(n.value.shape()) +
                         " but must be scalar");
  }
  nodes_[loss].grad.assign(1, 1.0);
  run_backward(loss);
}

void Graph::backward_seeded(NodeId node, const std::vector<double>& seed) {
  Node& n = at(node);
  if (seed.size() != n.value.size()) {
    fail("backward_seeded", "seed size " + std::to_string(seed.size()) + " vs node size " +
                                std::to_string(n.value.size()));
  }
  n.grad = seed;
  run_backward(node);
}

void Graph::run_backward(NodeId root) {
  for (NodeId id = root + 1; id-- > 0;) {
    Node& nd = nodes_[id];
    if (nd.grad.empty()) continue;
    backward_node(id);
  }
}

void Graph::backward_node(NodeId id) {
  Node& nd = nodes_[id];
  const std::vector<double>& g = nd.grad;

  auto in_val = [&](int slot) -> const std::vector<double>& {
    return nodes_[nd.in[slot]].value.values();
  };
  auto in_wants = [&](int slot) {
    return nd.in[slot] != kNoNode && nodes_[nd.in[slot]].needs_grad;
  };

  switch (nd.op) {
    case Op::Leaf:
      if (nd.bound != nullptr && nd.bound->requires_grad()) nd.bound->accumulate_grad(g);
      break;

    case Op::Matmul: {
      const Tensor& ta = nodes_[nd.in[0]].value;
      const Tensor& tb = nodes_[nd.in[1]].value;
      const std::size_t k = ta.shape().back();
      const std::size_t n = tb.shape()[1];
      const std::size_t m = ta.size() / k;
      if (in_wants(0)) FEDSIS_PREC(matmul_bwd_a, g, tb.values(), grad_buf(nd.in[0]), m, k, n);
      if (in_wants(1)) FEDSIS_PREC(matmul_bwd_b, ta.values(), g, grad_buf(nd.in[1]), m, k, n);
      break;
    }

    case Op::Bmm: {
      const Tensor& ta = nodes_[nd.in[0]].value;
      const Tensor& tb = nodes_[nd.in[1]].value;
      const std::size_t m = ta.shape()[ta.rank() - 2];
      const std::size_t k = ta.shape()[ta.rank() - 1];
      const std::size_t n = tb.shape()[tb.rank() - 1];
      const std::size_t batch = ta.size() / (m * k);
      if (in_wants(0)) FEDSIS_PREC(bmm_bwd_a, g, tb.values(), grad_buf(nd.in[0]), batch, m, k, n);
      if (in_wants(1)) FEDSIS_PREC(bmm_bwd_b, ta.values(), g, grad_buf(nd.in[1]), batch, m, k, n);
      break;
    }

    case Op::Add:
      if (in_wants(0)) FEDSIS_PREC(axpy_bwd, 1.0, g, grad_buf(nd.in[0]));
      if (in_wants(1)) FEDSIS_PREC(axpy_bwd, 1.0, g, grad_buf(nd.in[1]));
      break;

    case Op::AddBias: {
      const std::size_t cols = nodes_[nd.in[1]].value.size();
      const std::size_t rows = nd.value.size() / cols;
      if (in_wants(0)) FEDSIS_PREC(axpy_bwd, 1.0, g, grad_buf(nd.in[0]));
      if (in_wants(1)) FEDSIS_PREC(reduce_rows_bwd, g, grad_buf(nd.in[1]), rows, cols);
      break;
    }

    case Op::Mul:
      if (in_wants(0)) FEDSIS_PREC(mul_bwd, g, in_val(1), grad_buf(nd.in[0]));
      if (in_wants(1)) FEDSIS_PREC(mul_bwd, g, in_val(0), grad_buf(nd.in[1]));
      break;

    case Op::Scale:
      if (in_wants(0)) FEDSIS_PREC(axpy_bwd, nd.scalar, g, grad_buf(nd.in[0]));
      break;

    case Op::Conv2d: {
      const Tensor& tx = nodes_[nd.in[0]].value;
      const Tensor& tw = nodes_[nd.in[1]].value;
      const std::size_t dims[13] = {tx.shape()[0],   tx.shape()[1],   tx.shape()[2],
                                    tx.shape()[3],   tw.shape()[0],   tw.shape()[1],
                                    tw.shape()[3],   nd.value.shape()[1], nd.value.shape()[2],
                                    nd.conv.stride_h, nd.conv.stride_w, nd.conv.pad_h,
                                    nd.conv.pad_w};
      if (in_wants(0)) FEDSIS_PREC(conv2d_bwd_x, g, tw.values(), grad_buf(nd.in[0]), dims);
      if (in_wants(1)) FEDSIS_PREC(conv2d_bwd_w, tx.values(), g, grad_buf(nd.in[1]), dims);
      if (in_wants(2)) {
        FEDSIS_PREC(conv2d_bwd_b, g, grad_buf(nd.in[2]), dims[0], dims[7], dims[8], dims[6]);
      }
      break;
    }

    case Op::BatchNorm:
    case Op::LayerNorm: {
      const std::size_t cols = (nd.op == Op::BatchNorm) ? nd.saved2.size()
                                                        : nodes_[nd.in[1]].value.size();
      const std::size_t rows = nd.value.size() / cols;
      std::vector<double> scratch_x, scratch_g, scratch_b;
      auto& dx = in_wants(0) ? grad_buf(nd.in[0])
                             : (scratch_x.assign(nd.value.size(), 0.0), scratch_x);
      auto& dg = in_wants(1) ? grad_buf(nd.in[1]) : (scratch_g.assign(cols, 0.0), scratch_g);
      auto& db = in_wants(2) ? grad_buf(nd.in[2]) : (scratch_b.assign(cols, 0.0), scratch_b);
      if (nd.op == Op::BatchNorm) {
        FEDSIS_PREC(bn_bwd_t, g, nd.saved, nd.saved2, in_val(1), nd.train_mode, dx, dg, db,
                    rows, cols);
      } else {
        FEDSIS_PREC(ln_bwd_t, g, nd.saved, nd.saved2, in_val(1), dx, dg, db, rows, cols);
      }
      break;
    }

    case Op::Softmax: {
      const std::size_t cols = nd.value.shape().back();
      const std::size_t rows = nd.value.size() / cols;
      if (in_wants(0)) FEDSIS_PREC(softmax_bwd_t, g, nd.value.values(), grad_buf(nd.in[0]), rows, cols);
      break;
    }

    case Op::Gelu:
    case Op::Relu:
      if (in_wants(0)) FEDSIS_PREC(unary_bwd_t, nd.op, g, in_val(0), grad_buf(nd.in[0]));
      break;

    case Op::Gap: {
      const Tensor& tx = nodes_[nd.in[0]].value;
      const std::size_t b = tx.shape()[0];
      const std::size_t c = tx.shape().back();
      const std::size_t p = tx.size() / (b * c);
      if (in_wants(0)) FEDSIS_PREC(gap_bwd_t, g, grad_buf(nd.in[0]), b, p, c);
      break;
    }

    case Op::Concat: {
      const Tensor& ta = nodes_[nd.in[0]].value;
      const Tensor& tb = nodes_[nd.in[1]].value;
      const std::size_t batch = ta.shape()[0], s1 = ta.shape()[1], s2 = tb.shape()[1],
                        d = ta.shape()[2];
      if (in_wants(0)) {
        FEDSIS_PREC(slice_axis1_acc_t, g, grad_buf(nd.in[0]), batch, s1 + s2, d, 0, s1);
      }
      if (in_wants(1)) {
        FEDSIS_PREC(slice_axis1_acc_t, g, grad_buf(nd.in[1]), batch, s1 + s2, d, s1, s2);
      }
      break;
    }

    case Op::Slice: {
      const Tensor& tx = nodes_[nd.in[0]].value;
      const std::size_t batch = tx.shape()[0], s = tx.shape()[1], d = tx.shape()[2];
      if (in_wants(0)) {
        FEDSIS_PREC(copy_axis1_acc_t, g, grad_buf(nd.in[0]), batch, nd.len, d, s, nd.from);
      }
      break;
    }

    case Op::Reshape:
      if (in_wants(0)) FEDSIS_PREC(axpy_bwd, 1.0, g, grad_buf(nd.in[0]));
      break;

    case Op::Transpose: {
      std::array<std::size_t, 4> inv{};
      for (std::size_t i = 0; i < 4; ++i) inv[nd.perm[i]] = i;
      if (in_wants(0)) {
        FEDSIS_PREC(permute4_acc_t, g, grad_buf(nd.in[0]), nd.value.shape().data(), inv.data());
      }
      break;
    }

    case Op::TileBatch: {
      const std::size_t reps = nd.value.shape()[0];
      const std::size_t n = nd.value.size() / reps;
      if (in_wants(0)) FEDSIS_PREC(tile_bwd_t, g, grad_buf(nd.in[0]), reps, n);
      break;
    }

    case Op::SumAll:
      if (in_wants(0)) FEDSIS_PREC(sum_all_bwd_t, g, grad_buf(nd.in[0]));
      break;

    case Op::CrossEntropy: {
      const Tensor& tl = nodes_[nd.in[0]].value;
      const std::size_t b = tl.shape()[0], c = tl.shape()[1];
      if (in_wants(0)) FEDSIS_PREC(ce_bwd_t, nd.saved, nd.labels, g[0], grad_buf(nd.in[0]), b, c);
      break;
    }
  }
}

}  // namespace fedsis
