#pragma once

#include <string>
#include <vector>

#include "kgx/biencoder.hpp"
#include "kgx/encoder.hpp"
#include "kgx/kg.hpp"
#include "kgx/text.hpp"

namespace kgx {

/// A re-ranked candidate. joint_embedding is the pooled CLS of the joint
/// mention/entity representation; the top-1's embedding feeds the relation
/// extractor. cross_prob = sigmoid(cross_logit).
struct RankedCandidate {
  std::string entity_id;
  double cross_logit = 0.0;
  double cross_prob = 0.0;
  Eigen::VectorXd joint_embedding;
};

struct CrossEncoderTrainConfig {
  int epochs = 10;
  double lr = 2e-5;
  int batch_mentions = 8;
  int negatives_per_mention = 9;  // candidates per mention = this + 1
  uint64_t seed = 1;
};

/// Cross-encoder over the joint representation with a scalar scoring head.
class CrossEncoderModel {
 public:
  CrossEncoderModel(Tokenizer tokenizer, const EncoderConfig& encoder_cfg, int window = 64,
                    uint64_t head_seed = 2);

  /// Score one (mention, entity) pair; exposes the joint embedding too.
  RankedCandidate score_pair(const std::vector<std::string>& tokens, Span span,
                             const EntityRecord& entity, bool include_description = true) const;

  /// Re-rank a candidate set. Returns one RankedCandidate per input
  /// candidate, sorted by cross_prob descending (ties by entity id); an
  /// empty candidate set yields an empty list.
  std::vector<RankedCandidate> rank_candidates(const std::vector<std::string>& tokens,
                                               Span span, const CandidateSet& candidates,
                                               const EntityCatalog& catalog,
                                               bool include_description = true) const;

  /// BCE over {gold} ∪ {hard negatives mined from the bi-encoder index}.
  std::vector<double> train(const std::vector<AnnotatedDocument>& docs,
                            const EntityCatalog& catalog, const BiEncoderModel& biencoder,
                            const VectorIndex& index, const CrossEncoderTrainConfig& cfg);

  const Tokenizer& tokenizer() const { return tokenizer_; }
  Encoder& encoder() { return encoder_; }
  const Encoder& encoder() const { return encoder_; }
  Eigen::VectorXd& head_w() { return head_w_; }
  double& head_b() { return head_b_; }
  const Eigen::VectorXd& head_w_grad() const { return d_head_w_; }
  double head_b_grad() const { return d_head_b_; }
  int window() const { return window_; }

  void save(const std::string& path) const;
  static CrossEncoderModel load_file(const std::string& path);

 private:
  Tokenizer tokenizer_;
  Encoder encoder_;
  int window_;
  Eigen::VectorXd head_w_;  // d
  double head_b_ = 0.0;
  Eigen::VectorXd d_head_w_;
  double d_head_b_ = 0.0;
};

}  // namespace kgx
