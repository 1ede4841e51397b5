#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <fstream>
#include <map>
#include <string>

#include "json.hpp"
#include "kgx/common.hpp"

namespace kgx {

// Self-describing binary container: magic, a JSON header, then named f64
// tensors. Used for model checkpoints and the vector index.

class BinaryWriter {
 public:
  BinaryWriter(const std::string& path, const std::string& magic, const nlohmann::json& header);
  void tensor(const std::string& name, const Eigen::MatrixXd& m);
  void tensor(const std::string& name, const Eigen::VectorXd& v);
  void close();

 private:
  std::ofstream out_;
  std::string path_;
};

class BinaryReader {
 public:
  BinaryReader(const std::string& path, const std::string& magic);
  const nlohmann::json& header() const { return header_; }
  Eigen::MatrixXd tensor(const std::string& name);  // throws if absent
  Eigen::VectorXd vector_tensor(const std::string& name);

 private:
  std::map<std::string, Eigen::MatrixXd> tensors_;
  nlohmann::json header_;
};

}  // namespace kgx
