#include "kgx/serialize.hpp"

namespace kgx {

namespace {

void write_u64(std::ofstream& out, uint64_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

uint64_t read_u64(std::ifstream& in) {
  uint64_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  if (!in) throw ValidationError("truncated binary file");
  return v;
}

void write_str(std::ofstream& out, const std::string& s) {
  write_u64(out, s.size());
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_str(std::ifstream& in) {
  uint64_t n = read_u64(in);
  std::string s(n, '\0');
  in.read(s.data(), static_cast<std::streamsize>(n));
  if (!in) throw ValidationError("truncated binary file");
  return s;
}

}  // namespace

BinaryWriter::BinaryWriter(const std::string& path, const std::string& magic,
                           const nlohmann::json& header)
    : out_(path, std::ios::binary), path_(path) {
  if (!out_) throw ValidationError("cannot write file: " + path);
  out_.write(magic.data(), static_cast<std::streamsize>(magic.size()));
  write_str(out_, header.dump());
}

void BinaryWriter::tensor(const std::string& name, const Eigen::MatrixXd& m) {
  write_str(out_, name);
  write_u64(out_, static_cast<uint64_t>(m.rows()));
  write_u64(out_, static_cast<uint64_t>(m.cols()));
  // row-major on disk
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      double v = m(r, c);
      out_.write(reinterpret_cast<const char*>(&v), sizeof(v));
    }
  }
}

void BinaryWriter::tensor(const std::string& name, const Eigen::VectorXd& v) {
  Eigen::MatrixXd m = v;
  tensor(name, m);
}

void BinaryWriter::close() {
  out_.close();
  if (!out_) throw ValidationError("failed writing file: " + path_);
}

BinaryReader::BinaryReader(const std::string& path, const std::string& magic) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open file: " + path);
  std::string got(magic.size(), '\0');
  in.read(got.data(), static_cast<std::streamsize>(magic.size()));
  if (!in || got != magic) throw ValidationError("bad file magic in " + path);
  header_ = nlohmann::json::parse(read_str(in), nullptr, false);
  if (header_.is_discarded()) throw ValidationError("bad header JSON in " + path);
  while (in.peek() != EOF) {
    std::string name = read_str(in);
    uint64_t rows = read_u64(in);
    uint64_t cols = read_u64(in);
    Eigen::MatrixXd m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) {
        double v;
        in.read(reinterpret_cast<char*>(&v), sizeof(v));
        if (!in) throw ValidationError("truncated tensor in " + path);
        m(r, c) = v;
      }
    }
    tensors_[name] = std::move(m);
  }
}

Eigen::MatrixXd BinaryReader::tensor(const std::string& name) {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) throw ValidationError("missing tensor: " + name);
  return it->second;
}

Eigen::VectorXd BinaryReader::vector_tensor(const std::string& name) {
  Eigen::MatrixXd m = tensor(name);
  if (m.cols() != 1) throw ValidationError("tensor is not a vector: " + name);
  return m.col(0);
}

}  // namespace kgx
