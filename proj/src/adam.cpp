#include "fedsis/adam.hpp"

#include <cmath>

#include "fedsis/kernels.hpp"

namespace fedsis {

namespace {

template <class T>
void step_param(std::vector<double>& w, const std::vector<double>& g, std::vector<double>& m,
                std::vector<double>& v, const AdamConfig& cfg, bool decay, std::size_t t) {
  std::vector<T> tw(w.begin(), w.end());
  std::vector<T> tg(g.begin(), g.end());
  std::vector<T> tm(m.begin(), m.end());
  std::vector<T> tv(v.begin(), v.end());
  const T bias1 = T(1) - static_cast<T>(std::pow(cfg.beta1, static_cast<double>(t)));
  const T bias2 = T(1) - static_cast<T>(std::pow(cfg.beta2, static_cast<double>(t)));
  kern::adam_step(tw.data(), tg.data(), tm.data(), tv.data(), w.size(),
                     static_cast<T>(cfg.lr), static_cast<T>(cfg.beta1),
                     static_cast<T>(cfg.beta2), static_cast<T>(cfg.eps),
                     decay ? static_cast<T>(cfg.weight_decay) : T(0), bias1, bias2);
  for (std::size_t i = 0; i < w.size(); ++i) {
    w[i] = tw[i];
    m[i] = tm[i];
    v[i] = tv[i];
  }
}

template <>
void step_param<double>(std::vector<double>& w, const std::vector<double>& g,
                        std::vector<double>& m, std::vector<double>& v, const AdamConfig& cfg,
                        bool decay, std::size_t t) {
  const double bias1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
  const double bias2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
  kern::adam_step(w.data(), g.data(), m.data(), v.data(), w.size(), cfg.lr, cfg.beta1,
                          cfg.beta2, cfg.eps, decay ? cfg.weight_decay : 0.0, bias1, bias2);
}

}  // namespace

Adam::Adam(AdamConfig cfg, std::vector<Param*> params, Precision precision)
    : cfg_(cfg), params_(std::move(params)), precision_(precision) {
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (const Param* p : params_) {
    m_.emplace_back(p->value.shape(), 0.0);
    v_.emplace_back(p->value.shape(), 0.0);
  }
}

void Adam::step() {
  for (Param* p : params_) {
    if (!p->value.has_grad()) {
      fail("adam", "missing gradient for parameter '" + p->name + "'");
    }
    for (double gv : p->value.grad()) {
      if (!std::isfinite(gv)) {
        fail("adam", "non-finite gradient in parameter '" + p->name + "'");
      }
    }
  }
  ++t_;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Param* p = params_[i];
    if (precision_ == Precision::F64) {
      step_param<double>(p->value.values(), p->value.grad(), m_[i].values(), v_[i].values(),
                         cfg_, p->decay, t_);
    } else {
      step_param<float>(p->value.values(), p->value.grad(), m_[i].values(), v_[i].values(),
                        cfg_, p->decay, t_);
    }
    p->value.zero_grad();
  }
}

void Adam::reset_moments() {
  t_ = 0;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    m_[i] = Tensor(params_[i]->value.shape(), 0.0);
    v_[i] = Tensor(params_[i]->value.shape(), 0.0);
  }
}

}  // namespace fedsis
