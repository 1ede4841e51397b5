#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "kgx/common.hpp"

namespace kgx {

/// Adam over registered parameter/gradient pairs. Matrices must not be
/// reallocated after registration.
class Adam {
 public:
  explicit Adam(double lr = 1e-3, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void add(Eigen::MatrixXd& param, Eigen::MatrixXd& grad) {
    add_raw(param.data(), grad.data(), param.size());
  }
  void add(Eigen::VectorXd& param, Eigen::VectorXd& grad) {
    add_raw(param.data(), grad.data(), param.size());
  }
  void add_scalar(double& param, double& grad) { add_raw(&param, &grad, 1); }

  void set_lr(double lr) { lr_ = lr; }
  double lr() const { return lr_; }

  void step() {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, t_);
    const double bc2 = 1.0 - std::pow(beta2_, t_);
    for (auto& s : slots_) {
      for (Eigen::Index i = 0; i < s.n; ++i) {
        const double g = s.g[i];
        s.m[i] = beta1_ * s.m[i] + (1.0 - beta1_) * g;
        s.v[i] = beta2_ * s.v[i] + (1.0 - beta2_) * g * g;
        s.p[i] -= lr_ * (s.m[i] / bc1) / (std::sqrt(s.v[i] / bc2) + eps_);
      }
    }
  }

  void zero_grads() {
    for (auto& s : slots_) {
      for (Eigen::Index i = 0; i < s.n; ++i) s.g[i] = 0.0;
    }
  }

 private:
  struct Slot {
    double* p;
    double* g;
    Eigen::Index n;
    Eigen::ArrayXd m, v;
  };

  void add_raw(double* p, double* g, Eigen::Index n) {
    Slot s;
    s.p = p;
    s.g = g;
    s.n = n;
    s.m = Eigen::ArrayXd::Zero(n);
    s.v = Eigen::ArrayXd::Zero(n);
    slots_.push_back(std::move(s));
  }

  double lr_, beta1_, beta2_, eps_;
  long t_ = 0;
  std::vector<Slot> slots_;
};

inline double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * M_SQRT1_2)); }

inline double gelu_grad(double x) {
  const double phi = std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI);
  const double cdf = 0.5 * (1.0 + std::erf(x * M_SQRT1_2));
  return cdf + x * phi;
}

inline void init_normal(Eigen::MatrixXd& m, Rng& rng, double stddev) {
  for (Eigen::Index c = 0; c < m.cols(); ++c) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) m(r, c) = stddev * rng.next_normal();
  }
}

inline void init_normal(Eigen::VectorXd& v, Rng& rng, double stddev) {
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = stddev * rng.next_normal();
}

}  // namespace kgx
