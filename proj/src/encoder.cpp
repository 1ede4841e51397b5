#include "kgx/encoder.hpp"

namespace kgx {

namespace {
constexpr double kNormEps = 1e-6;
}

Encoder::Encoder(const EncoderConfig& cfg) : cfg_(cfg) {
  if (cfg.vocab_size < 6) throw ValidationError("vocab_size must cover the special tokens");
  if (cfg.dim < 1 || cfg.ffn_dim < 1 || cfg.layers < 0 || cfg.max_len < 2) {
    throw ValidationError("invalid encoder config");
  }
  Rng rng(cfg.seed);
  tok_emb_.resize(cfg.vocab_size, cfg.dim);
  init_normal(tok_emb_, rng, 0.5);
  pos_emb_.resize(cfg.max_len, cfg.dim);
  init_normal(pos_emb_, rng, 0.1);
  const int d = cfg.dim;
  for (int l = 0; l < cfg.layers; ++l) {
    Layer layer;
    layer.gain = Eigen::VectorXd::Ones(d);
    layer.w1.resize(5 * d, cfg.ffn_dim);
    init_normal(layer.w1, rng, 1.0 / std::sqrt(5.0 * d));
    layer.b1 = Eigen::VectorXd::Zero(cfg.ffn_dim);
    layer.w2.resize(cfg.ffn_dim, d);
    init_normal(layer.w2, rng, 0.5 / std::sqrt(static_cast<double>(cfg.ffn_dim)));
    layer.b2 = Eigen::VectorXd::Zero(d);
    layers_.push_back(std::move(layer));
  }

  d_tok_emb_ = Eigen::MatrixXd::Zero(cfg.vocab_size, d);
  d_pos_emb_ = Eigen::MatrixXd::Zero(cfg.max_len, d);
  for (int l = 0; l < cfg.layers; ++l) {
    Layer g;
    g.gain = Eigen::VectorXd::Zero(d);
    g.w1 = Eigen::MatrixXd::Zero(5 * d, cfg.ffn_dim);
    g.b1 = Eigen::VectorXd::Zero(cfg.ffn_dim);
    g.w2 = Eigen::MatrixXd::Zero(cfg.ffn_dim, d);
    g.b2 = Eigen::VectorXd::Zero(d);
    d_layers_.push_back(std::move(g));
  }
}

void Encoder::forward(const std::vector<int>& ids, EncoderActivations& acts) const {
  const int n = static_cast<int>(ids.size());
  if (n == 0) throw ValidationError("cannot encode an empty token sequence");
  if (n > cfg_.max_len) {
    throw ValidationError("sequence length " + std::to_string(n) + " exceeds max length " +
                          std::to_string(cfg_.max_len));
  }
  const int d = cfg_.dim;
  acts.ids = ids;
  acts.h0.resize(n, d);
  for (int i = 0; i < n; ++i) {
    const int id = ids[static_cast<size_t>(i)];
    if (id < 0 || id >= cfg_.vocab_size) {
      throw ValidationError("token id out of range: " + std::to_string(id));
    }
    acts.h0.row(i) = tok_emb_.row(id) + pos_emb_.row(i);
  }

  acts.layers.clear();
  acts.layers.resize(layers_.size());
  Eigen::MatrixXd h = acts.h0;
  for (size_t l = 0; l < layers_.size(); ++l) {
    const Layer& L = layers_[l];
    auto& cache = acts.layers[l];
    cache.h_in = h;
    cache.inv_r.resize(n);
    cache.x.resize(n, d);
    for (int i = 0; i < n; ++i) {
      const double ms = h.row(i).squaredNorm() / d;
      const double inv_r = 1.0 / std::sqrt(ms + kNormEps);
      cache.inv_r[i] = inv_r;
      cache.x.row(i) = (h.row(i) * inv_r).cwiseProduct(L.gain.transpose());
    }
    cache.g = cache.x.colwise().mean();

    cache.z.resize(n, 5 * d);
    for (int i = 0; i < n; ++i) {
      cache.z.block(i, 0, 1, d) = cache.x.row(i);
      if (i > 0) {
        cache.z.block(i, d, 1, d) = cache.x.row(i - 1);
      } else {
        cache.z.block(i, d, 1, d).setZero();
      }
      if (i + 1 < n) {
        cache.z.block(i, 2 * d, 1, d) = cache.x.row(i + 1);
      } else {
        cache.z.block(i, 2 * d, 1, d).setZero();
      }
      cache.z.block(i, 3 * d, 1, d) = cache.g;
      cache.z.block(i, 4 * d, 1, d) = cache.x.row(i).cwiseProduct(cache.g);
    }

    cache.a = (cache.z * L.w1).rowwise() + L.b1.transpose();
    cache.u = cache.a.unaryExpr([](double v) { return gelu(v); });
    h += cache.u * L.w2;
    h.rowwise() += L.b2.transpose();
  }
  acts.h_out = h;
}

void Encoder::backward(const EncoderActivations& acts, const Eigen::MatrixXd& d_out) {
  const int n = static_cast<int>(acts.ids.size());
  const int d = cfg_.dim;
  Eigen::MatrixXd dh = d_out;

  for (int l = static_cast<int>(layers_.size()) - 1; l >= 0; --l) {
    const Layer& L = layers_[static_cast<size_t>(l)];
    Layer& G = d_layers_[static_cast<size_t>(l)];
    const auto& cache = acts.layers[static_cast<size_t>(l)];

    // h_out = h_in + u * w2 + b2
    G.b2 += dh.colwise().sum().transpose();
    G.w2 += cache.u.transpose() * dh;
    Eigen::MatrixXd du = dh * L.w2.transpose();
    Eigen::MatrixXd da =
        du.cwiseProduct(cache.a.unaryExpr([](double v) { return gelu_grad(v); }));
    G.b1 += da.colwise().sum().transpose();
    G.w1 += cache.z.transpose() * da;
    Eigen::MatrixXd dz = da * L.w1.transpose();

    Eigen::MatrixXd dx = Eigen::MatrixXd::Zero(n, d);
    Eigen::RowVectorXd dg = Eigen::RowVectorXd::Zero(d);
    for (int i = 0; i < n; ++i) {
      dx.row(i) += dz.block(i, 0, 1, d);
      if (i > 0) dx.row(i - 1) += dz.block(i, d, 1, d);
      if (i + 1 < n) dx.row(i + 1) += dz.block(i, 2 * d, 1, d);
      dg += dz.block(i, 3 * d, 1, d);
      dg += dz.block(i, 4 * d, 1, d).cwiseProduct(cache.x.row(i));
      dx.row(i) += dz.block(i, 4 * d, 1, d).cwiseProduct(cache.g);
    }
    dx.rowwise() += dg / n;  // g = colwise mean of x

    // x_i = gain ⊙ h_i / r_i
    for (int i = 0; i < n; ++i) {
      const double inv_r = cache.inv_r[i];
      const Eigen::RowVectorXd h_row = cache.h_in.row(i);
      const Eigen::RowVectorXd normed = h_row * inv_r;
      G.gain += dx.row(i).cwiseProduct(normed).transpose();
      const Eigen::RowVectorXd t = dx.row(i).cwiseProduct(L.gain.transpose());
      const double proj = t.dot(h_row) / d * (inv_r * inv_r * inv_r);
      dh.row(i) += t * inv_r - h_row * proj;
    }
  }

  for (int i = 0; i < n; ++i) {
    d_tok_emb_.row(acts.ids[static_cast<size_t>(i)]) += dh.row(i);
    d_pos_emb_.row(i) += dh.row(i);
  }
}

Eigen::MatrixXd Encoder::encode(const std::vector<int>& ids) const {
  EncoderActivations acts;
  forward(ids, acts);
  return acts.h_out;
}

Eigen::VectorXd Encoder::encode_pooled(const std::vector<int>& ids) const {
  return encode(ids).row(0).transpose();
}

void Encoder::register_params(Adam& opt) {
  opt.add(tok_emb_, d_tok_emb_);
  opt.add(pos_emb_, d_pos_emb_);
  for (size_t l = 0; l < layers_.size(); ++l) {
    opt.add(layers_[l].gain, d_layers_[l].gain);
    opt.add(layers_[l].w1, d_layers_[l].w1);
    opt.add(layers_[l].b1, d_layers_[l].b1);
    opt.add(layers_[l].w2, d_layers_[l].w2);
    opt.add(layers_[l].b2, d_layers_[l].b2);
  }
}

void Encoder::zero_grads() {
  d_tok_emb_.setZero();
  d_pos_emb_.setZero();
  for (auto& g : d_layers_) {
    g.gain.setZero();
    g.w1.setZero();
    g.b1.setZero();
    g.w2.setZero();
    g.b2.setZero();
  }
}

nlohmann::json Encoder::config_json(const EncoderConfig& cfg) {
  return {{"vocab_size", cfg.vocab_size}, {"dim", cfg.dim},         {"ffn_dim", cfg.ffn_dim},
          {"layers", cfg.layers},         {"max_len", cfg.max_len}, {"seed", cfg.seed}};
}

EncoderConfig Encoder::config_from_json(const nlohmann::json& j) {
  EncoderConfig cfg;
  cfg.vocab_size = j.at("vocab_size").get<int>();
  cfg.dim = j.at("dim").get<int>();
  cfg.ffn_dim = j.at("ffn_dim").get<int>();
  cfg.layers = j.at("layers").get<int>();
  cfg.max_len = j.at("max_len").get<int>();
  cfg.seed = j.at("seed").get<uint64_t>();
  return cfg;
}

void Encoder::save(BinaryWriter& w, const std::string& prefix) const {
  w.tensor(prefix + "tok_emb", tok_emb_);
  w.tensor(prefix + "pos_emb", pos_emb_);
  for (size_t l = 0; l < layers_.size(); ++l) {
    const std::string p = prefix + "layer" + std::to_string(l) + ".";
    w.tensor(p + "gain", layers_[l].gain);
    w.tensor(p + "w1", layers_[l].w1);
    w.tensor(p + "b1", layers_[l].b1);
    w.tensor(p + "w2", layers_[l].w2);
    w.tensor(p + "b2", layers_[l].b2);
  }
}

void Encoder::load(BinaryReader& r, const std::string& prefix) {
  tok_emb_ = r.tensor(prefix + "tok_emb");
  pos_emb_ = r.tensor(prefix + "pos_emb");
  for (size_t l = 0; l < layers_.size(); ++l) {
    const std::string p = prefix + "layer" + std::to_string(l) + ".";
    layers_[l].gain = r.vector_tensor(p + "gain");
    layers_[l].w1 = r.tensor(p + "w1");
    layers_[l].b1 = r.vector_tensor(p + "b1");
    layers_[l].w2 = r.tensor(p + "w2");
    layers_[l].b2 = r.vector_tensor(p + "b2");
  }
}

Eigen::MatrixXd encode_tokens(const Encoder& enc, const TokenizedText& text) {
  if (text.length() <= enc.config().max_len) return enc.encode(text.tokens);
  return enc.encode(truncate_to(text, enc.config().max_len).tokens);
}

Eigen::VectorXd encode_pooled(const Encoder& enc, const TokenizedText& text) {
  return encode_tokens(enc, text).row(0).transpose();
}

}  // namespace kgx
