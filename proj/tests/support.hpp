#pragma once

#include <Eigen/Dense>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <string>

#include "kgx/common.hpp"

namespace testsup {

// Scratch directory removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static int counter = 0;
    path_ = std::filesystem::temp_directory_path() /
            ("kgx_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  std::string file(const std::string& name) const { return (path_ / name).string(); }
  std::string dir() const { return path_.string(); }

 private:
  std::filesystem::path path_;
};

inline void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path);
  out << content;
}

// Central finite differences of a scalar loss with respect to each entry of
// `param`, compared against `analytic` by relative error.
inline double max_grad_rel_error(Eigen::Map<Eigen::VectorXd> param,
                                 const Eigen::VectorXd& analytic,
                                 const std::function<double()>& loss, double h = 1e-6) {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < param.size(); ++i) {
    const double orig = param[i];
    param[i] = orig + h;
    const double up = loss();
    param[i] = orig - h;
    const double down = loss();
    param[i] = orig;
    const double fd = (up - down) / (2.0 * h);
    const double denom = std::max({std::fabs(fd), std::fabs(analytic[i]), 1e-8});
    worst = std::max(worst, std::fabs(fd - analytic[i]) / denom);
  }
  return worst;
}

inline double max_grad_rel_error(Eigen::MatrixXd& param, const Eigen::MatrixXd& analytic,
                                 const std::function<double()>& loss, double h = 1e-6) {
  Eigen::Map<Eigen::VectorXd> p(param.data(), param.size());
  Eigen::VectorXd a = Eigen::Map<const Eigen::VectorXd>(analytic.data(), analytic.size());
  return max_grad_rel_error(p, a, loss, h);
}

inline double max_grad_rel_error(Eigen::VectorXd& param, const Eigen::VectorXd& analytic,
                                 const std::function<double()>& loss, double h = 1e-6) {
  Eigen::Map<Eigen::VectorXd> p(param.data(), param.size());
  return max_grad_rel_error(p, analytic, loss, h);
}

}  // namespace testsup
