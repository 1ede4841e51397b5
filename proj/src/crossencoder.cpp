#include "kgx/crossencoder.hpp"

#include <algorithm>
#include <iostream>

#include "kgx/nn.hpp"

namespace kgx {

CrossEncoderModel::CrossEncoderModel(Tokenizer tokenizer, const EncoderConfig& encoder_cfg,
                                     int window, uint64_t head_seed)
    : tokenizer_(std::move(tokenizer)), encoder_(encoder_cfg), window_(window) {
  Rng rng(head_seed);
  head_w_ = Eigen::VectorXd::Zero(encoder_cfg.dim);
  init_normal(head_w_, rng, 1.0 / std::sqrt(static_cast<double>(encoder_cfg.dim)));
  d_head_w_ = Eigen::VectorXd::Zero(encoder_cfg.dim);
}

RankedCandidate CrossEncoderModel::score_pair(const std::vector<std::string>& tokens, Span span,
                                              const EntityRecord& entity,
                                              bool include_description) const {
  auto rep = build_joint_rep(tokenizer_, entity, tokens, span, window_, include_description);
  Eigen::VectorXd b = encode_pooled(encoder_, rep);
  RankedCandidate out;
  out.entity_id = entity.id;
  out.cross_logit = head_w_.dot(b) + head_b_;
  out.cross_prob = sigmoid(out.cross_logit);
  out.joint_embedding = std::move(b);
  return out;
}

std::vector<RankedCandidate> CrossEncoderModel::rank_candidates(
    const std::vector<std::string>& tokens, Span span, const CandidateSet& candidates,
    const EntityCatalog& catalog, bool include_description) const {
  std::vector<RankedCandidate> out;
  out.reserve(candidates.candidates.size());
  for (const auto& c : candidates.candidates) {
    out.push_back(score_pair(tokens, span, catalog.get(c.id), include_description));
  }
  std::sort(out.begin(), out.end(), [](const RankedCandidate& a, const RankedCandidate& b) {
    if (a.cross_prob != b.cross_prob) return a.cross_prob > b.cross_prob;
    return a.entity_id < b.entity_id;
  });
  return out;
}

std::vector<double> CrossEncoderModel::train(const std::vector<AnnotatedDocument>& docs,
                                             const EntityCatalog& catalog,
                                             const BiEncoderModel& biencoder,
                                             const VectorIndex& index,
                                             const CrossEncoderTrainConfig& cfg) {
  std::vector<MentionExample> mentions;
  for (const auto& m : collect_mention_examples(docs)) {
    if (!catalog.contains(m.entity_id)) {
      std::cerr << "warning: skipping mention with unknown entity " << m.entity_id << "\n";
      continue;
    }
    mentions.push_back(m);
  }
  if (mentions.empty()) throw ValidationError("no training mentions");

  // Negatives come from the frozen bi-encoder, mined once up front: the
  // gamma nearest entities minus the gold one, truncated to the configured
  // count.
  std::vector<std::vector<std::string>> negatives = biencoder.mine_hard_negatives(
      index, docs, mentions, cfg.negatives_per_mention + 1);
  for (auto& negs : negatives) {
    if (static_cast<int>(negs.size()) > cfg.negatives_per_mention) {
      negs.resize(static_cast<size_t>(cfg.negatives_per_mention));
    }
  }

  Adam opt(cfg.lr);
  encoder_.register_params(opt);
  opt.add(head_w_, d_head_w_);
  opt.add_scalar(head_b_, d_head_b_);

  std::vector<int> order(mentions.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);

  const int d = encoder_.config().dim;
  std::vector<double> trace;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng rng = Rng(cfg.seed).fork(static_cast<uint64_t>(epoch) + 211);
    rng.shuffle(order);
    double epoch_loss = 0.0;
    long epoch_pairs = 0;

    for (size_t at = 0; at < order.size(); at += static_cast<size_t>(cfg.batch_mentions)) {
      const size_t end = std::min(order.size(), at + static_cast<size_t>(cfg.batch_mentions));

      struct PairWork {
        const AnnotatedDocument* doc;
        Span span;
        std::string entity_id;
        double label;
      };
      std::vector<PairWork> pairs;
      for (size_t b = at; b < end; ++b) {
        const auto& m = mentions[static_cast<size_t>(order[b])];
        const auto& doc = docs[static_cast<size_t>(m.doc)];
        pairs.push_back({&doc, m.span, m.entity_id, 1.0});
        for (const auto& neg : negatives[static_cast<size_t>(order[b])]) {
          pairs.push_back({&doc, m.span, neg, 0.0});
        }
      }
      if (pairs.empty()) continue;

      encoder_.zero_grads();
      d_head_w_.setZero();
      d_head_b_ = 0.0;
      double batch_loss = 0.0;
      const double scale = 1.0 / static_cast<double>(pairs.size());

      EncoderActivations acts;
      for (const auto& p : pairs) {
        auto rep = build_joint_rep(tokenizer_, catalog.get(p.entity_id), p.doc->tokens, p.span,
                                   window_, true);
        if (rep.length() > encoder_.config().max_len) {
          rep = truncate_to(rep, encoder_.config().max_len);
        }
        encoder_.forward(rep.tokens, acts);
        const Eigen::VectorXd b = acts.h_out.row(0).transpose();
        const double logit = head_w_.dot(b) + head_b_;
        batch_loss += bce_with_logit(logit, p.label);
        const double dlogit = (sigmoid(logit) - p.label) * scale;
        d_head_w_ += dlogit * b;
        d_head_b_ += dlogit;
        Eigen::MatrixXd d_out = Eigen::MatrixXd::Zero(acts.h_out.rows(), d);
        d_out.row(0) = (dlogit * head_w_).transpose();
        encoder_.backward(acts, d_out);
      }
      opt.step();
      epoch_loss += batch_loss;
      epoch_pairs += static_cast<long>(pairs.size());
    }
    trace.push_back(epoch_pairs > 0 ? epoch_loss / static_cast<double>(epoch_pairs) : 0.0);
  }
  return trace;
}

void CrossEncoderModel::save(const std::string& path) const {
  nlohmann::json header = {{"kind", "crossencoder"},
                           {"encoder", Encoder::config_json(encoder_.config())},
                           {"vocab", tokenizer_.words()},
                           {"window", window_}};
  BinaryWriter w(path, "KGXCKPT1", header);
  encoder_.save(w, "enc.");
  w.tensor("head.w", head_w_);
  Eigen::VectorXd b(1);
  b[0] = head_b_;
  w.tensor("head.b", b);
  w.close();
}

CrossEncoderModel CrossEncoderModel::load_file(const std::string& path) {
  BinaryReader r(path, "KGXCKPT1");
  if (r.header().value("kind", "") != std::string("crossencoder")) {
    throw ValidationError("checkpoint is not a crossencoder model: " + path);
  }
  std::vector<std::string> words;
  for (const auto& w : r.header().at("vocab")) words.push_back(w.get<std::string>());
  Tokenizer tok;
  for (size_t i = 6; i < words.size(); ++i) tok.add_word(words[i]);
  EncoderConfig cfg = Encoder::config_from_json(r.header().at("encoder"));
  CrossEncoderModel model(std::move(tok), cfg, r.header().at("window").get<int>());
  model.encoder_.load(r, "enc.");
  model.head_w_ = r.vector_tensor("head.w");
  model.d_head_w_ = Eigen::VectorXd::Zero(model.head_w_.size());
  model.head_b_ = r.vector_tensor("head.b")[0];
  return model;
}

}  // namespace kgx
