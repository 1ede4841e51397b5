#pragma once

#include <string>
#include <vector>

#include "kgx/encoder.hpp"
#include "kgx/kg.hpp"
#include "kgx/text.hpp"

namespace kgx {

/// One scored token span. probability = sigmoid(logit), start <= end.
struct SpanScore {
  Span span;
  double logit = 0.0;
  double probability = 0.0;
};

struct MentionCandidate {
  Span span;
  double probability = 0.0;
};

/// Linear layer over the concatenated boundary-token embeddings.
struct PairHead {
  Eigen::VectorXd w;  // 2d
  double bias = 0.0;

  Eigen::VectorXd d_w;
  double d_bias = 0.0;

  explicit PairHead(int dim = 0, uint64_t seed = 1);
  void zero_grads();
};

/// Scores every span (i, j), i <= j, of the embedded tokens. `k` has one row
/// per token. With max_span_len = 0 all n(n+1)/2 spans are scored; otherwise
/// only spans of length <= max_span_len.
std::vector<SpanScore> score_spans_from_embeddings(const Eigen::MatrixXd& k,
                                                   const PairHead& head, int max_span_len = 0);

/// Spans with probability strictly above epsilon_m, in descending
/// probability order (ties by span position).
std::vector<MentionCandidate> select_mentions(const std::vector<SpanScore>& scores,
                                              double epsilon_m);

struct MentionTrainConfig {
  int epochs = 10;
  double lr = 2e-5;
  int batch_docs = 8;
  // Documents longer than subsample_above tokens train on all positive spans
  // plus neg_ratio negatives per positive; shorter ones use every span.
  int subsample_above = 64;
  double neg_ratio = 10.0;
  int max_span_len = 0;
  uint64_t seed = 1;
};

/// Token-pair mention recognizer: encoder plus pair head. Documents are
/// wrapped as [CLS] tokens [SEP] before encoding; span indices refer to the
/// unwrapped tokens.
class MentionModel {
 public:
  MentionModel(Tokenizer tokenizer, const EncoderConfig& encoder_cfg, uint64_t head_seed = 1);

  std::vector<SpanScore> score_spans(const std::vector<std::string>& tokens,
                                     int max_span_len = 0) const;

  /// BCE training on gold mention spans; returns the per-epoch mean loss.
  std::vector<double> train(const std::vector<AnnotatedDocument>& docs,
                            const MentionTrainConfig& cfg);

  const Tokenizer& tokenizer() const { return tokenizer_; }
  Encoder& encoder() { return encoder_; }
  const Encoder& encoder() const { return encoder_; }
  PairHead& head() { return head_; }
  const PairHead& head() const { return head_; }

  void save(const std::string& path) const;
  static MentionModel load_file(const std::string& path);

 private:
  Tokenizer tokenizer_;
  Encoder encoder_;
  PairHead head_;
};

}  // namespace kgx
