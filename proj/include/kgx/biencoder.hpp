#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "kgx/encoder.hpp"
#include "kgx/kg.hpp"
#include "kgx/text.hpp"

namespace kgx {

/// Cosine of two non-zero vectors, in [-1, 1].
double cosine_similarity(const Eigen::VectorXd& u, const Eigen::VectorXd& v);

struct ScoredEntity {
  std::string id;
  double score = 0.0;  // cosine similarity
};

/// Ranked entity candidates for one mention, bi-encoder scores
/// non-increasing down the list.
struct CandidateSet {
  Span mention{};
  std::vector<ScoredEntity> candidates;
};

/// Exact-search vector index over unit-normalized entity embeddings.
class VectorIndex {
 public:
  VectorIndex() = default;
  VectorIndex(std::vector<std::string> ids, Eigen::MatrixXd rows);  // normalizes rows

  int size() const { return static_cast<int>(ids_.size()); }
  int dim() const { return static_cast<int>(matrix_.cols()); }
  const std::vector<std::string>& ids() const { return ids_; }
  const Eigen::MatrixXd& matrix() const { return matrix_; }
  int row_of(const std::string& id) const;  // throws on unknown id
  Eigen::VectorXd embedding_of(const std::string& id) const;

  /// Top-k entities by cosine similarity to `query`, exact exhaustive scan.
  /// Ties broken by ascending entity id. k >= |V| returns the full ordering.
  CandidateSet retrieve(const Eigen::VectorXd& query, int k) const;

  void save(const std::string& path) const;
  static VectorIndex load_file(const std::string& path);

 private:
  std::vector<std::string> ids_;
  Eigen::MatrixXd matrix_;  // |V| × d, unit rows
  std::unordered_map<std::string, int> lookup_;
};

/// One training mention: where it is, and which entity it refers to.
struct MentionExample {
  int doc = 0;
  Span span{};
  std::string entity_id;
};

std::vector<MentionExample> collect_mention_examples(
    const std::vector<AnnotatedDocument>& docs);

struct BiEncoderTrainConfig {
  int epochs = 10;
  double lr = 2e-5;
  int batch_size = 32;   // >= 2, in-batch negatives
  int mine_after = 1;    // epochs before hard negatives kick in (paper beta)
  int gamma = 10;        // nearest entities mined per mention
  bool remine_every_epoch = true;
  uint64_t seed = 1;
};

/// Siamese bi-encoder: one encoder embeds both mention and entity
/// representations; similarity is cosine mapped through sigmoid(tau * cos)
/// for the BCE loss.
class BiEncoderModel {
 public:
  BiEncoderModel(Tokenizer tokenizer, const EncoderConfig& encoder_cfg, int window = 64,
                 double temperature_init = 10.0);

  Eigen::VectorXd embed_mention(const std::vector<std::string>& tokens, Span span) const;
  Eigen::VectorXd embed_entity(const EntityRecord& entity) const;

  /// Embed the full catalog into a fresh index. Errors on an empty catalog.
  VectorIndex embed_all_entities(const EntityCatalog& catalog) const;

  /// For each mention, the gamma nearest entities minus the gold entity.
  std::vector<std::vector<std::string>> mine_hard_negatives(
      const VectorIndex& index, const std::vector<AnnotatedDocument>& docs,
      const std::vector<MentionExample>& mentions, int gamma) const;

  std::vector<double> train(const std::vector<AnnotatedDocument>& docs,
                            const EntityCatalog& catalog, const BiEncoderTrainConfig& cfg);

  const Tokenizer& tokenizer() const { return tokenizer_; }
  Encoder& encoder() { return encoder_; }
  const Encoder& encoder() const { return encoder_; }
  double temperature() const { return temperature_; }
  double& temperature_ref() { return temperature_; }
  double& temperature_grad_ref() { return d_temperature_; }
  int window() const { return window_; }

  void save(const std::string& path) const;
  static BiEncoderModel load_file(const std::string& path);

 private:
  Tokenizer tokenizer_;
  Encoder encoder_;
  int window_;
  double temperature_;
  double d_temperature_ = 0.0;
};

}  // namespace kgx
