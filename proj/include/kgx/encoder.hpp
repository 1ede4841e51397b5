#pragma once

#include <Eigen/Dense>
#include <vector>

#include "kgx/nn.hpp"
#include "kgx/serialize.hpp"
#include "kgx/text.hpp"

namespace kgx {

struct EncoderConfig {
  int vocab_size = 0;
  int dim = 64;
  int ffn_dim = 128;
  int layers = 2;
  int max_len = 256;
  uint64_t seed = 1;
};

/// Per-sequence forward cache kept for backprop.
struct EncoderActivations {
  std::vector<int> ids;
  Eigen::MatrixXd h0;
  struct LayerCache {
    Eigen::MatrixXd h_in;    // n × d, pre-norm input
    Eigen::MatrixXd x;       // n × d, normed + gained
    Eigen::VectorXd inv_r;   // n, 1/rms per row
    Eigen::RowVectorXd g;    // 1 × d, column mean of x
    Eigen::MatrixXd z;       // n × 5d, mixer input
    Eigen::MatrixXd a;       // n × ffn, pre-activation
    Eigen::MatrixXd u;       // n × ffn, gelu(a)
  };
  std::vector<LayerCache> layers;
  Eigen::MatrixXd h_out;  // n × d
};

/// Small trainable sequence encoder. Tokens are embedded (token + position),
/// then each of `layers` blocks mixes every position with its neighbours and
/// with the sequence mean:
///   x   = rmsnorm(h) * gain
///   g   = mean_i(x_i)
///   z_i = [x_i, x_{i-1}, x_{i+1}, g, x_i * g]
///   h_i = h_i + W2 gelu(W1 z_i + b1) + b2
/// Row 0 (the CLS position) is the pooled representation.
class Encoder {
 public:
  explicit Encoder(const EncoderConfig& cfg);

  const EncoderConfig& config() const { return cfg_; }

  /// n × d token embeddings. Errors on empty input or length > max_len.
  Eigen::MatrixXd encode(const std::vector<int>& ids) const;
  Eigen::VectorXd encode_pooled(const std::vector<int>& ids) const;

  void forward(const std::vector<int>& ids, EncoderActivations& acts) const;
  /// Accumulates parameter gradients and returns nothing; call zero_grads()
  /// between optimizer steps.
  void backward(const EncoderActivations& acts, const Eigen::MatrixXd& d_out);

  void register_params(Adam& opt);
  void zero_grads();

  void save(BinaryWriter& w, const std::string& prefix) const;
  void load(BinaryReader& r, const std::string& prefix);
  static nlohmann::json config_json(const EncoderConfig& cfg);
  static EncoderConfig config_from_json(const nlohmann::json& j);

  struct Layer {
    Eigen::VectorXd gain;
    Eigen::MatrixXd w1;  // 5d × ffn
    Eigen::VectorXd b1;  // ffn
    Eigen::MatrixXd w2;  // ffn × d
    Eigen::VectorXd b2;  // d
  };

  // direct parameter access (gradient checks, weight surgery in tests)
  Eigen::MatrixXd& tok_emb() { return tok_emb_; }
  Eigen::MatrixXd& pos_emb() { return pos_emb_; }
  Layer& layer(int l) { return layers_.at(static_cast<size_t>(l)); }
  const Eigen::MatrixXd& tok_emb_grad() const { return d_tok_emb_; }
  const Eigen::MatrixXd& pos_emb_grad() const { return d_pos_emb_; }
  const Layer& layer_grad(int l) const { return d_layers_.at(static_cast<size_t>(l)); }

 private:
  EncoderConfig cfg_;
  Eigen::MatrixXd tok_emb_;  // vocab × d
  Eigen::MatrixXd pos_emb_;  // max_len × d
  std::vector<Layer> layers_;

  // gradient mirrors
  Eigen::MatrixXd d_tok_emb_, d_pos_emb_;
  std::vector<Layer> d_layers_;
};

/// Truncate to the encoder's max length (context/description first), then
/// encode. These are the entry points the pipeline stages use.
Eigen::MatrixXd encode_tokens(const Encoder& enc, const TokenizedText& text);
Eigen::VectorXd encode_pooled(const Encoder& enc, const TokenizedText& text);

}  // namespace kgx
