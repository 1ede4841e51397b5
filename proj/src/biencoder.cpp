#include "kgx/biencoder.hpp"

#include <algorithm>
#include <iostream>

#include "kgx/nn.hpp"

namespace kgx {

double cosine_similarity(const Eigen::VectorXd& u, const Eigen::VectorXd& v) {
  if (u.size() != v.size()) throw ValidationError("cosine: dimension mismatch");
  const double nu = u.norm();
  const double nv = v.norm();
  if (nu == 0.0 || nv == 0.0) throw ValidationError("cosine undefined for zero vector");
  return u.dot(v) / (nu * nv);
}

VectorIndex::VectorIndex(std::vector<std::string> ids, Eigen::MatrixXd rows)
    : ids_(std::move(ids)), matrix_(std::move(rows)) {
  if (static_cast<Eigen::Index>(ids_.size()) != matrix_.rows()) {
    throw ValidationError("index ids and matrix row count differ");
  }
  for (Eigen::Index r = 0; r < matrix_.rows(); ++r) {
    const double n = matrix_.row(r).norm();
    if (n < 1e-12) throw ValidationError("zero embedding for entity " + ids_[static_cast<size_t>(r)]);
    // already-unit rows stay untouched so save/load round-trips bit-exactly
    if (std::fabs(n - 1.0) > 1e-12) matrix_.row(r) /= n;
  }
  for (size_t i = 0; i < ids_.size(); ++i) {
    if (!lookup_.emplace(ids_[i], static_cast<int>(i)).second) {
      throw ValidationError("duplicate entity id in index: " + ids_[i]);
    }
  }
}

int VectorIndex::row_of(const std::string& id) const {
  auto it = lookup_.find(id);
  if (it == lookup_.end()) throw ValidationError("entity not in index: " + id);
  return it->second;
}

Eigen::VectorXd VectorIndex::embedding_of(const std::string& id) const {
  return matrix_.row(row_of(id)).transpose();
}

CandidateSet VectorIndex::retrieve(const Eigen::VectorXd& query, int k) const {
  if (size() == 0) throw ValidationError("cannot retrieve from an empty index");
  if (k < 1) throw ValidationError("k must be >= 1");
  const double qn = query.norm();
  if (qn == 0.0) throw ValidationError("cosine undefined for zero vector");
  Eigen::VectorXd sims = matrix_ * (query / qn);

  std::vector<int> rows(static_cast<size_t>(size()));
  for (int i = 0; i < size(); ++i) rows[static_cast<size_t>(i)] = i;
  const auto better = [&](int a, int b) {
    if (sims[a] != sims[b]) return sims[a] > sims[b];
    return ids_[static_cast<size_t>(a)] < ids_[static_cast<size_t>(b)];
  };
  const size_t take = std::min<size_t>(static_cast<size_t>(k), rows.size());
  std::partial_sort(rows.begin(), rows.begin() + static_cast<long>(take), rows.end(), better);

  CandidateSet out;
  for (size_t i = 0; i < take; ++i) {
    out.candidates.push_back({ids_[static_cast<size_t>(rows[i])], sims[rows[i]]});
  }
  return out;
}

void VectorIndex::save(const std::string& path) const {
  nlohmann::json header = {{"num_entities", size()}, {"dim", dim()}, {"ids", ids_}};
  BinaryWriter w(path, "KGXINDX1", header);
  w.tensor("matrix", matrix_);
  w.close();
}

VectorIndex VectorIndex::load_file(const std::string& path) {
  BinaryReader r(path, "KGXINDX1");
  std::vector<std::string> ids;
  for (const auto& id : r.header().at("ids")) ids.push_back(id.get<std::string>());
  return VectorIndex(std::move(ids), r.tensor("matrix"));
}

std::vector<MentionExample> collect_mention_examples(
    const std::vector<AnnotatedDocument>& docs) {
  std::vector<MentionExample> out;
  for (size_t i = 0; i < docs.size(); ++i) {
    for (const auto& m : docs[i].gold_mentions) {
      out.push_back({static_cast<int>(i), {m.start, m.end}, m.entity_id});
    }
  }
  return out;
}

BiEncoderModel::BiEncoderModel(Tokenizer tokenizer, const EncoderConfig& encoder_cfg,
                               int window, double temperature_init)
    : tokenizer_(std::move(tokenizer)),
      encoder_(encoder_cfg),
      window_(window),
      temperature_(temperature_init) {}

Eigen::VectorXd BiEncoderModel::embed_mention(const std::vector<std::string>& tokens,
                                              Span span) const {
  return encode_pooled(encoder_, build_mention_rep(tokenizer_, tokens, span, window_));
}

Eigen::VectorXd BiEncoderModel::embed_entity(const EntityRecord& entity) const {
  return encode_pooled(encoder_, build_entity_rep(tokenizer_, entity));
}

VectorIndex BiEncoderModel::embed_all_entities(const EntityCatalog& catalog) const {
  if (catalog.size() == 0) throw ValidationError("cannot embed an empty catalog");
  Eigen::MatrixXd rows(static_cast<Eigen::Index>(catalog.size()), encoder_.config().dim);
  std::vector<std::string> ids;
  ids.reserve(catalog.size());
  for (size_t i = 0; i < catalog.size(); ++i) {
    rows.row(static_cast<Eigen::Index>(i)) = embed_entity(catalog.at(i)).transpose();
    ids.push_back(catalog.at(i).id);
  }
  return VectorIndex(std::move(ids), std::move(rows));
}

std::vector<std::vector<std::string>> BiEncoderModel::mine_hard_negatives(
    const VectorIndex& index, const std::vector<AnnotatedDocument>& docs,
    const std::vector<MentionExample>& mentions, int gamma) const {
  if (gamma < 1) throw ValidationError("gamma must be >= 1");
  std::vector<std::vector<std::string>> out;
  out.reserve(mentions.size());
  for (const auto& m : mentions) {
    const auto& doc = docs[static_cast<size_t>(m.doc)];
    CandidateSet got = index.retrieve(embed_mention(doc.tokens, m.span), gamma);
    std::vector<std::string> negs;
    for (const auto& c : got.candidates) {
      if (c.id != m.entity_id) negs.push_back(c.id);
    }
    out.push_back(std::move(negs));
  }
  return out;
}

std::vector<double> BiEncoderModel::train(const std::vector<AnnotatedDocument>& docs,
                                          const EntityCatalog& catalog,
                                          const BiEncoderTrainConfig& cfg) {
  if (cfg.batch_size < 2) {
    throw ValidationError("batch_size must be >= 2 for in-batch negatives");
  }
  std::vector<MentionExample> mentions;
  for (const auto& m : collect_mention_examples(docs)) {
    if (!catalog.contains(m.entity_id)) {
      std::cerr << "warning: skipping mention with unknown entity " << m.entity_id << "\n";
      continue;
    }
    mentions.push_back(m);
  }
  if (mentions.empty()) throw ValidationError("no training mentions");

  Adam opt(cfg.lr);
  encoder_.register_params(opt);
  opt.add_scalar(temperature_, d_temperature_);

  std::vector<std::vector<std::string>> negatives(mentions.size());
  std::vector<int> order(mentions.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);

  std::vector<double> trace;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng rng = Rng(cfg.seed).fork(static_cast<uint64_t>(epoch) + 101);
    rng.shuffle(order);
    double epoch_loss = 0.0;
    long epoch_pairs = 0;

    for (size_t at = 0; at < order.size(); at += static_cast<size_t>(cfg.batch_size)) {
      const size_t end = std::min(order.size(), at + static_cast<size_t>(cfg.batch_size));
      const int B = static_cast<int>(end - at);
      if (B < 2) continue;

      // entity pool: batch golds first, then mined negatives, deduped
      std::vector<std::string> pool;
      std::unordered_map<std::string, int> pool_of;
      auto add_to_pool = [&](const std::string& id) {
        if (pool_of.emplace(id, static_cast<int>(pool.size())).second) pool.push_back(id);
      };
      for (size_t b = at; b < end; ++b) add_to_pool(mentions[static_cast<size_t>(order[b])].entity_id);
      for (size_t b = at; b < end; ++b) {
        for (const auto& id : negatives[static_cast<size_t>(order[b])]) add_to_pool(id);
      }
      const int P = static_cast<int>(pool.size());

      encoder_.zero_grads();
      d_temperature_ = 0.0;

      std::vector<EncoderActivations> m_acts(static_cast<size_t>(B));
      std::vector<EncoderActivations> e_acts(static_cast<size_t>(P));
      Eigen::MatrixXd mention_vecs(B, encoder_.config().dim);
      Eigen::MatrixXd entity_vecs(P, encoder_.config().dim);
      for (int b = 0; b < B; ++b) {
        const auto& m = mentions[static_cast<size_t>(order[at + static_cast<size_t>(b)])];
        auto rep = build_mention_rep(tokenizer_, docs[static_cast<size_t>(m.doc)].tokens,
                                     m.span, window_);
        if (rep.length() > encoder_.config().max_len) {
          rep = truncate_to(rep, encoder_.config().max_len);
        }
        encoder_.forward(rep.tokens, m_acts[static_cast<size_t>(b)]);
        mention_vecs.row(b) = m_acts[static_cast<size_t>(b)].h_out.row(0);
      }
      for (int p = 0; p < P; ++p) {
        auto rep = build_entity_rep(tokenizer_, catalog.get(pool[static_cast<size_t>(p)]));
        if (rep.length() > encoder_.config().max_len) {
          rep = truncate_to(rep, encoder_.config().max_len);
        }
        encoder_.forward(rep.tokens, e_acts[static_cast<size_t>(p)]);
        entity_vecs.row(p) = e_acts[static_cast<size_t>(p)].h_out.row(0);
      }

      const long count = static_cast<long>(B) * P;
      Eigen::MatrixXd d_mention = Eigen::MatrixXd::Zero(B, encoder_.config().dim);
      Eigen::MatrixXd d_entity = Eigen::MatrixXd::Zero(P, encoder_.config().dim);
      double batch_loss = 0.0;
      for (int b = 0; b < B; ++b) {
        const auto& m = mentions[static_cast<size_t>(order[at + static_cast<size_t>(b)])];
        const Eigen::VectorXd u = mention_vecs.row(b).transpose();
        const double nu = u.norm();
        for (int p = 0; p < P; ++p) {
          const Eigen::VectorXd v = entity_vecs.row(p).transpose();
          const double nv = v.norm();
          const double c = u.dot(v) / (nu * nv);
          const double logit = temperature_ * c;
          const double y = pool[static_cast<size_t>(p)] == m.entity_id ? 1.0 : 0.0;
          batch_loss += bce_with_logit(logit, y);
          const double dlogit = (sigmoid(logit) - y) / static_cast<double>(count);
          d_temperature_ += dlogit * c;
          const double dc = dlogit * temperature_;
          d_mention.row(b) += (dc * (v / (nu * nv) - (c / (nu * nu)) * u)).transpose();
          d_entity.row(p) += (dc * (u / (nu * nv) - (c / (nv * nv)) * v)).transpose();
        }
      }

      Eigen::MatrixXd d_out;
      for (int b = 0; b < B; ++b) {
        d_out = Eigen::MatrixXd::Zero(m_acts[static_cast<size_t>(b)].h_out.rows(),
                                      encoder_.config().dim);
        d_out.row(0) = d_mention.row(b);
        encoder_.backward(m_acts[static_cast<size_t>(b)], d_out);
      }
      for (int p = 0; p < P; ++p) {
        d_out = Eigen::MatrixXd::Zero(e_acts[static_cast<size_t>(p)].h_out.rows(),
                                      encoder_.config().dim);
        d_out.row(0) = d_entity.row(p);
        encoder_.backward(e_acts[static_cast<size_t>(p)], d_out);
      }
      opt.step();
      epoch_loss += batch_loss;
      epoch_pairs += count;
    }
    trace.push_back(epoch_pairs > 0 ? epoch_loss / static_cast<double>(epoch_pairs) : 0.0);

    // hard-negative mining schedule; nothing to mine after the last epoch
    const bool mining_due = (epoch + 1) >= cfg.mine_after && epoch + 1 < cfg.epochs;
    const bool first_time = (epoch + 1) == cfg.mine_after;
    if (mining_due && (cfg.remine_every_epoch || first_time)) {
      VectorIndex index = embed_all_entities(catalog);
      negatives = mine_hard_negatives(index, docs, mentions, cfg.gamma);
    }
  }
  return trace;
}

void BiEncoderModel::save(const std::string& path) const {
  nlohmann::json header = {{"kind", "biencoder"},
                           {"encoder", Encoder::config_json(encoder_.config())},
                           {"vocab", tokenizer_.words()},
                           {"window", window_},
                           {"temperature", temperature_}};
  BinaryWriter w(path, "KGXCKPT1", header);
  encoder_.save(w, "enc.");
  w.close();
}

BiEncoderModel BiEncoderModel::load_file(const std::string& path) {
  BinaryReader r(path, "KGXCKPT1");
  if (r.header().value("kind", "") != std::string("biencoder")) {
    throw ValidationError("checkpoint is not a biencoder model: " + path);
  }
  std::vector<std::string> words;
  for (const auto& w : r.header().at("vocab")) words.push_back(w.get<std::string>());
  Tokenizer tok;
  for (size_t i = 6; i < words.size(); ++i) tok.add_word(words[i]);
  EncoderConfig cfg = Encoder::config_from_json(r.header().at("encoder"));
  BiEncoderModel model(std::move(tok), cfg, r.header().at("window").get<int>(),
                       r.header().at("temperature").get<double>());
  model.encoder_.load(r, "enc.");
  return model;
}

}  // namespace kgx
