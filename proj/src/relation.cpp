#include "kgx/relation.hpp"

#include <algorithm>
#include <iostream>

#include "kgx/nn.hpp"

namespace kgx {

std::string relation_mode_name(RelationMode mode) {
  switch (mode) {
    case RelationMode::FULL: return "full";
    case RelationMode::NO_TYPES: return "no_types";
    case RelationMode::TYPES_ONLY: return "types_only";
    case RelationMode::COARSE: return "coarse";
    case RelationMode::NO_DESC: return "no_desc";
  }
  return "full";
}

RelationMode relation_mode_from_name(const std::string& name) {
  if (name == "full") return RelationMode::FULL;
  if (name == "no_types") return RelationMode::NO_TYPES;
  if (name == "types_only") return RelationMode::TYPES_ONLY;
  if (name == "coarse") return RelationMode::COARSE;
  if (name == "no_desc") return RelationMode::NO_DESC;
  throw ValidationError("unknown relation mode: " + name);
}

TypeEmbeddingTable::TypeEmbeddingTable(int rows, int d_t, uint64_t seed) {
  Rng rng(seed);
  table.resize(rows, d_t);
  init_normal(table, rng, 0.5);
  grad = Eigen::MatrixXd::Zero(rows, d_t);
}

RelationWeights::RelationWeights(int num_relations, int dim, int type_dim, uint64_t seed) {
  Rng rng(seed ^ 0x5bd1e995u);
  w_r.resize(num_relations, dim);
  init_normal(w_r, rng, 0.05 / std::sqrt(static_cast<double>(dim)));
  l_s.resize(dim, dim);
  init_normal(l_s, rng, 1.0 / std::sqrt(static_cast<double>(dim)));
  l_o.resize(dim, dim);
  init_normal(l_o, rng, 1.0 / std::sqrt(static_cast<double>(dim)));
  type_head.resize(num_relations, 2 * type_dim);
  init_normal(type_head, rng, 0.05 / std::sqrt(2.0 * type_dim));
  d_w_r = Eigen::MatrixXd::Zero(num_relations, dim);
  d_l_s = Eigen::MatrixXd::Zero(dim, dim);
  d_l_o = Eigen::MatrixXd::Zero(dim, dim);
  d_type_head = Eigen::MatrixXd::Zero(num_relations, 2 * type_dim);
}

void RelationWeights::zero_grads() {
  d_w_r.setZero();
  d_l_s.setZero();
  d_l_o.setZero();
  d_type_head.setZero();
}

namespace {

std::vector<int> fine_type_rows(const std::set<std::string>& types,
                                const TypeVocabulary& vocab) {
  std::vector<int> rows;
  rows.reserve(types.size());
  for (const auto& t : types) rows.push_back(vocab.index_of(t));
  return rows;
}

std::vector<int> coarse_type_rows(const std::set<std::string>& types,
                                  const TypeVocabulary& vocab) {
  std::vector<int> rows;
  for (CoarseType c : vocab.coarse_classes(types)) rows.push_back(static_cast<int>(c));
  return rows;
}

Eigen::VectorXd mean_of_rows(const std::vector<int>& rows, const Eigen::MatrixXd& table) {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(table.cols());
  if (rows.empty()) return out;
  for (int r : rows) out += table.row(r).transpose();
  return out / static_cast<double>(rows.size());
}

}  // namespace

Eigen::VectorXd type_representation(const std::set<std::string>& types,
                                    const TypeEmbeddingTable& table,
                                    const TypeVocabulary& vocab) {
  return mean_of_rows(fine_type_rows(types, vocab), table.table);
}

Eigen::VectorXd type_representation_coarse(const std::set<std::string>& types,
                                           const TypeEmbeddingTable& table,
                                           const TypeVocabulary& vocab) {
  return mean_of_rows(coarse_type_rows(types, vocab), table.table);
}

Eigen::VectorXd type_logits(const Eigen::VectorXd& t_subj, const Eigen::VectorXd& t_obj,
                            const Eigen::MatrixXd& type_head) {
  if (type_head.cols() != t_subj.size() + t_obj.size()) {
    throw ValidationError("type head dimensions do not match type representations");
  }
  Eigen::VectorXd cat(t_subj.size() + t_obj.size());
  cat << t_subj, t_obj;
  return type_head * cat;
}

Eigen::VectorXd contextual_logits(const Eigen::VectorXd& b_subj, const Eigen::VectorXd& b_obj,
                                  const Eigen::MatrixXd& w_r, const Eigen::MatrixXd& l_s,
                                  const Eigen::MatrixXd& l_o) {
  const double pair_score = (l_s * b_subj).dot(l_o * b_obj);
  Eigen::VectorXd out = w_r * (b_subj + b_obj);
  out.array() += pair_score;
  return out;
}

RelationModel::RelationModel(RelationIndex relations, TypeVocabulary vocab, RelationMode mode,
                             int dim, int type_dim, uint64_t seed)
    : relations_(std::move(relations)),
      vocab_(std::move(vocab)),
      mode_(mode),
      dim_(dim),
      type_dim_(type_dim),
      weights_(relations_.size(), dim, type_dim, seed),
      type_table_(mode == RelationMode::COARSE ? 4 : vocab_.size(), type_dim, seed ^ 0x77u) {}

Eigen::VectorXd RelationModel::type_rep(const std::set<std::string>& types) const {
  if (mode_ == RelationMode::COARSE) {
    return type_representation_coarse(types, type_table_, vocab_);
  }
  return type_representation(types, type_table_, vocab_);
}

RelationLogits RelationModel::combined_logits(const PairInput& subj, const PairInput& obj,
                                              int subject_index, int object_index) const {
  if (subject_index == object_index) {
    throw ValidationError("a mention cannot be paired with itself");
  }
  RelationLogits out;
  out.subject = subject_index;
  out.object = object_index;
  Eigen::VectorXd logits = Eigen::VectorXd::Zero(relations_.size());
  if (mode_ != RelationMode::NO_TYPES) {
    logits += type_logits(type_rep(subj.types), type_rep(obj.types), weights_.type_head);
  }
  if (mode_ != RelationMode::TYPES_ONLY) {
    logits += contextual_logits(subj.joint_embedding, obj.joint_embedding, weights_.w_r,
                                weights_.l_s, weights_.l_o);
  }
  out.logits = std::move(logits);
  out.probabilities = out.logits.unaryExpr([](double v) { return sigmoid(v); });
  return out;
}

std::vector<RelationLogits> RelationModel::score_all_pairs(
    const std::vector<PairInput>& inputs) const {
  std::vector<RelationLogits> out;
  const int m = static_cast<int>(inputs.size());
  for (int s = 0; s < m; ++s) {
    for (int o = 0; o < m; ++o) {
      if (s == o) continue;
      out.push_back(combined_logits(inputs[static_cast<size_t>(s)],
                                    inputs[static_cast<size_t>(o)], s, o));
    }
  }
  return out;
}

namespace {

struct DocPairs {
  std::vector<PairInput> inputs;          // per gold mention
  std::vector<std::string> entity_ids;    // per gold mention
  // ordered mention index pairs with their |R| target vectors
  std::vector<std::tuple<int, int, Eigen::VectorXd>> targets;
};

}  // namespace

std::vector<double> RelationModel::train(const std::vector<AnnotatedDocument>& docs,
                                         const EntityCatalog& catalog,
                                         const CrossEncoderModel& cross,
                                         const RelationTrainConfig& cfg) {
  const int R = relations_.size();

  // Joint embeddings come from the frozen cross-encoder, so they are
  // computed once. NO_DESC rebuilds them without description segments.
  const bool with_desc = mode_ != RelationMode::NO_DESC;
  std::vector<DocPairs> prepared;
  Rng sample_rng = Rng(cfg.seed).fork(401);
  for (size_t di = 0; di < docs.size(); ++di) {
    const auto& doc = docs[di];
    DocPairs dp;
    for (const auto& m : doc.gold_mentions) {
      if (!catalog.contains(m.entity_id)) {
        std::cerr << "warning: skipping mention with unknown entity " << m.entity_id << "\n";
        continue;
      }
      const EntityRecord& e = catalog.get(m.entity_id);
      PairInput in;
      in.joint_embedding =
          cross.score_pair(doc.tokens, {m.start, m.end}, e, with_desc).joint_embedding;
      in.types = e.types;
      dp.inputs.push_back(std::move(in));
      dp.entity_ids.push_back(m.entity_id);
    }
    const int M = static_cast<int>(dp.inputs.size());
    for (const auto& t : doc.gold_triples) {
      bool subj_seen = false, obj_seen = false;
      for (const auto& id : dp.entity_ids) {
        subj_seen |= id == t.subject;
        obj_seen |= id == t.object;
      }
      if (!subj_seen || !obj_seen) {
        std::cerr << "warning: document " << di << ": triple " << t.subject << "/" << t.relation
                  << "/" << t.object << " has no gold mention for both entities; skipped\n";
      }
    }
    std::vector<std::tuple<int, int, Eigen::VectorXd>> positives, zeros;
    for (int s = 0; s < M; ++s) {
      for (int o = 0; o < M; ++o) {
        if (s == o) continue;
        Eigen::VectorXd y = Eigen::VectorXd::Zero(R);
        for (const auto& t : doc.gold_triples) {
          if (t.subject == dp.entity_ids[static_cast<size_t>(s)] &&
              t.object == dp.entity_ids[static_cast<size_t>(o)] &&
              relations_.contains(t.relation)) {
            y[relations_.index_of(t.relation)] = 1.0;
          }
        }
        if (y.sum() > 0.0) {
          positives.emplace_back(s, o, std::move(y));
        } else {
          zeros.emplace_back(s, o, std::move(y));
        }
      }
    }
    if (cfg.negative_pair_ratio > 0.0) {
      const size_t cap = static_cast<size_t>(
          cfg.negative_pair_ratio * std::max<size_t>(1, positives.size()));
      if (zeros.size() > cap) {
        sample_rng.shuffle(zeros);
        zeros.resize(cap);
      }
    }
    dp.targets = std::move(positives);
    for (auto& z : zeros) dp.targets.push_back(std::move(z));
    if (!dp.targets.empty()) prepared.push_back(std::move(dp));
  }
  if (prepared.empty()) throw ValidationError("no trainable mention pairs");

  Adam opt(cfg.lr);
  opt.add(weights_.w_r, weights_.d_w_r);
  opt.add(weights_.l_s, weights_.d_l_s);
  opt.add(weights_.l_o, weights_.d_l_o);
  opt.add(weights_.type_head, weights_.d_type_head);
  opt.add(type_table_.table, type_table_.grad);

  const bool use_types = mode_ != RelationMode::NO_TYPES;
  const bool use_text = mode_ != RelationMode::TYPES_ONLY;
  const int d_t = type_dim_;

  std::vector<int> order(prepared.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);

  std::vector<double> trace;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng rng = Rng(cfg.seed).fork(static_cast<uint64_t>(epoch) + 307);
    rng.shuffle(order);
    double epoch_loss = 0.0;
    long epoch_terms = 0;

    for (size_t at = 0; at < order.size(); at += static_cast<size_t>(cfg.batch_docs)) {
      const size_t end = std::min(order.size(), at + static_cast<size_t>(cfg.batch_docs));
      long batch_pairs = 0;
      for (size_t b = at; b < end; ++b) {
        batch_pairs += static_cast<long>(prepared[static_cast<size_t>(order[b])].targets.size());
      }
      if (batch_pairs == 0) continue;
      const double scale = 1.0 / (static_cast<double>(batch_pairs) * R);

      weights_.zero_grads();
      type_table_.grad.setZero();
      double batch_loss = 0.0;

      for (size_t b = at; b < end; ++b) {
        const auto& dp = prepared[static_cast<size_t>(order[b])];
        for (const auto& [s, o, y] : dp.targets) {
          const PairInput& subj = dp.inputs[static_cast<size_t>(s)];
          const PairInput& obj = dp.inputs[static_cast<size_t>(o)];
          RelationLogits lg = combined_logits(subj, obj, s, o);
          Eigen::VectorXd dk(R);
          for (int r = 0; r < R; ++r) {
            batch_loss += bce_with_logit(lg.logits[r], y[r]);
            dk[r] = (lg.probabilities[r] - y[r]) * scale;
          }
          if (use_text) {
            const Eigen::VectorXd& bs = subj.joint_embedding;
            const Eigen::VectorXd& bo = obj.joint_embedding;
            weights_.d_w_r += dk * (bs + bo).transpose();
            const double sdot = dk.sum();
            weights_.d_l_s += sdot * (weights_.l_o * bo) * bs.transpose();
            weights_.d_l_o += sdot * (weights_.l_s * bs) * bo.transpose();
          }
          if (use_types) {
            const auto rows_s = mode_ == RelationMode::COARSE
                                    ? coarse_type_rows(subj.types, vocab_)
                                    : fine_type_rows(subj.types, vocab_);
            const auto rows_o = mode_ == RelationMode::COARSE
                                    ? coarse_type_rows(obj.types, vocab_)
                                    : fine_type_rows(obj.types, vocab_);
            const Eigen::VectorXd ts = mean_of_rows(rows_s, type_table_.table);
            const Eigen::VectorXd to = mean_of_rows(rows_o, type_table_.table);
            Eigen::VectorXd cat(2 * d_t);
            cat << ts, to;
            weights_.d_type_head += dk * cat.transpose();
            const Eigen::VectorXd dts = weights_.type_head.leftCols(d_t).transpose() * dk;
            const Eigen::VectorXd dto = weights_.type_head.rightCols(d_t).transpose() * dk;
            if (!rows_s.empty()) {
              const Eigen::RowVectorXd share = dts.transpose() / static_cast<double>(rows_s.size());
              for (int r : rows_s) type_table_.grad.row(r) += share;
            }
            if (!rows_o.empty()) {
              const Eigen::RowVectorXd share = dto.transpose() / static_cast<double>(rows_o.size());
              for (int r : rows_o) type_table_.grad.row(r) += share;
            }
          }
        }
      }
      opt.step();
      epoch_loss += batch_loss;
      epoch_terms += batch_pairs * R;
    }
    trace.push_back(epoch_terms > 0 ? epoch_loss / static_cast<double>(epoch_terms) : 0.0);
  }
  return trace;
}

void RelationModel::save(const std::string& path) const {
  nlohmann::json rels = nlohmann::json::array();
  for (const auto& id : relations_.ids()) {
    rels.push_back({id, relations_.label_of(id)});
  }
  nlohmann::json edges = nlohmann::json::object();
  for (const auto& [child, supers] : vocab_.supertype_edges()) {
    edges[child] = supers;
  }
  nlohmann::json coarse = nlohmann::json::object();
  for (const auto& t : vocab_.types()) coarse[t] = coarse_name(vocab_.coarse_type_of(t));
  nlohmann::json header = {{"kind", "relation"},
                           {"mode", relation_mode_name(mode_)},
                           {"dim", dim_},
                           {"type_dim", type_dim_},
                           {"relations", rels},
                           {"types", vocab_.types()},
                           {"supertype_edges", edges},
                           {"coarse_map", coarse}};
  BinaryWriter w(path, "KGXCKPT1", header);
  w.tensor("w_r", weights_.w_r);
  w.tensor("l_s", weights_.l_s);
  w.tensor("l_o", weights_.l_o);
  w.tensor("type_head", weights_.type_head);
  w.tensor("type_table", type_table_.table);
  w.close();
}

RelationModel RelationModel::load_file(const std::string& path) {
  BinaryReader r(path, "KGXCKPT1");
  if (r.header().value("kind", "") != std::string("relation")) {
    throw ValidationError("checkpoint is not a relation model: " + path);
  }
  RelationIndex rels;
  for (const auto& pair : r.header().at("relations")) {
    rels.add(pair.at(0).get<std::string>(), pair.at(1).get<std::string>());
  }
  std::vector<std::string> types;
  for (const auto& t : r.header().at("types")) types.push_back(t.get<std::string>());
  std::map<std::string, std::set<std::string>> edges;
  for (auto it = r.header().at("supertype_edges").begin();
       it != r.header().at("supertype_edges").end(); ++it) {
    for (const auto& s : it.value()) edges[it.key()].insert(s.get<std::string>());
  }
  std::map<std::string, CoarseType> coarse;
  for (auto it = r.header().at("coarse_map").begin(); it != r.header().at("coarse_map").end();
       ++it) {
    coarse[it.key()] = coarse_from_name(it.value().get<std::string>());
  }
  RelationModel model(std::move(rels), TypeVocabulary(types, std::move(edges), std::move(coarse)),
                      relation_mode_from_name(r.header().at("mode").get<std::string>()),
                      r.header().at("dim").get<int>(), r.header().at("type_dim").get<int>(), 1);
  model.weights_.w_r = r.tensor("w_r");
  model.weights_.l_s = r.tensor("l_s");
  model.weights_.l_o = r.tensor("l_o");
  model.weights_.type_head = r.tensor("type_head");
  model.type_table_.table = r.tensor("type_table");
  model.weights_.zero_grads();
  model.type_table_.grad.setZero();
  return model;
}

}  // namespace kgx
