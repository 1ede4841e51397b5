#pragma once

#include <set>
#include <string>
#include <vector>

#include "kgx/crossencoder.hpp"
#include "kgx/encoder.hpp"
#include "kgx/kg.hpp"

namespace kgx {

/// Relation extractor variants. NO_TYPES drops the type term, TYPES_ONLY the
/// contextual term, COARSE replaces fine types with their coarse classes
/// before lookup, NO_DESC builds joint embeddings without descriptions.
enum class RelationMode { FULL, NO_TYPES, TYPES_ONLY, COARSE, NO_DESC };

std::string relation_mode_name(RelationMode mode);
RelationMode relation_mode_from_name(const std::string& name);

/// Learnable per-type vectors; rows follow the vocabulary order (or the four
/// coarse classes in COARSE mode).
struct TypeEmbeddingTable {
  Eigen::MatrixXd table;  // |T| × d_T
  Eigen::MatrixXd grad;

  TypeEmbeddingTable() = default;
  TypeEmbeddingTable(int rows, int d_t, uint64_t seed);
};

/// All trainable weights of the relation scorer. Every map is bias-free:
///   contextual: g(b, b') = W_r (b + b') + <l_s b, l_o b'> 1
///   types:      h(t ⊕ t')
struct RelationWeights {
  Eigen::MatrixXd w_r;        // |R| × d
  Eigen::MatrixXd l_s, l_o;   // d × d
  Eigen::MatrixXd type_head;  // |R| × 2 d_T

  Eigen::MatrixXd d_w_r, d_l_s, d_l_o, d_type_head;

  RelationWeights() = default;
  RelationWeights(int num_relations, int dim, int type_dim, uint64_t seed);
  void zero_grads();
};

/// Mean of the type vectors of T_c; empty set gives the zero vector.
Eigen::VectorXd type_representation(const std::set<std::string>& types,
                                    const TypeEmbeddingTable& table,
                                    const TypeVocabulary& vocab);
/// COARSE variant: distinct coarse classes of the set index a 4-row table.
Eigen::VectorXd type_representation_coarse(const std::set<std::string>& types,
                                           const TypeEmbeddingTable& table,
                                           const TypeVocabulary& vocab);

Eigen::VectorXd type_logits(const Eigen::VectorXd& t_subj, const Eigen::VectorXd& t_obj,
                            const Eigen::MatrixXd& type_head);

Eigen::VectorXd contextual_logits(const Eigen::VectorXd& b_subj, const Eigen::VectorXd& b_obj,
                                  const Eigen::MatrixXd& w_r, const Eigen::MatrixXd& l_s,
                                  const Eigen::MatrixXd& l_o);

/// Scores for one ordered (subject, object) pair over all relations.
struct RelationLogits {
  int subject = 0;  // indices into the scored mention list
  int object = 0;
  Eigen::VectorXd logits;
  Eigen::VectorXd probabilities;
};

/// One (mention, candidate) combination ready for relation scoring.
struct PairInput {
  Eigen::VectorXd joint_embedding;
  std::set<std::string> types;
};

struct RelationTrainConfig {
  int epochs = 10;
  double lr = 2e-5;
  int batch_docs = 32;
  // 0 keeps every unrelated ordered pair as an all-zero target; a positive
  // value caps negatives at ratio * positives per document.
  double negative_pair_ratio = 0.0;
  bool use_gold_candidates = true;
  uint64_t seed = 1;
};

class RelationModel {
 public:
  RelationModel() = default;
  RelationModel(RelationIndex relations, TypeVocabulary vocab, RelationMode mode, int dim,
                int type_dim, uint64_t seed);

  RelationMode mode() const { return mode_; }
  const RelationIndex& relations() const { return relations_; }
  const TypeVocabulary& vocab() const { return vocab_; }

  Eigen::VectorXd type_rep(const std::set<std::string>& types) const;

  /// k(m,c,m',c') for one ordered pair; throws if subject and object alias
  /// the same mention slot.
  RelationLogits combined_logits(const PairInput& subj, const PairInput& obj,
                                 int subject_index = 0, int object_index = 1) const;

  /// All M(M-1) ordered pairs; empty for fewer than two inputs.
  std::vector<RelationLogits> score_all_pairs(const std::vector<PairInput>& inputs) const;

  /// Trains W_r, l_s, l_o, the type head and the type table on gold mention
  /// pairs; the cross-encoder supplying joint embeddings stays frozen.
  std::vector<double> train(const std::vector<AnnotatedDocument>& docs,
                            const EntityCatalog& catalog, const CrossEncoderModel& cross,
                            const RelationTrainConfig& cfg);

  RelationWeights& weights() { return weights_; }
  const RelationWeights& weights() const { return weights_; }
  TypeEmbeddingTable& type_table() { return type_table_; }
  const TypeEmbeddingTable& type_table() const { return type_table_; }

  void save(const std::string& path) const;
  static RelationModel load_file(const std::string& path);

 private:
  RelationIndex relations_;
  TypeVocabulary vocab_;
  RelationMode mode_ = RelationMode::FULL;
  int dim_ = 0;
  int type_dim_ = 0;
  RelationWeights weights_;
  TypeEmbeddingTable type_table_;
};

}  // namespace kgx
