#include "kgx/mention.hpp"

#include <algorithm>
#include <iostream>

namespace kgx {

PairHead::PairHead(int dim, uint64_t seed) {
  w = Eigen::VectorXd::Zero(2 * dim);
  d_w = Eigen::VectorXd::Zero(2 * dim);
  if (dim > 0) {
    Rng rng(seed);
    init_normal(w, rng, 1.0 / std::sqrt(2.0 * dim));
  }
}

void PairHead::zero_grads() {
  d_w.setZero();
  d_bias = 0.0;
}

std::vector<SpanScore> score_spans_from_embeddings(const Eigen::MatrixXd& k,
                                                   const PairHead& head, int max_span_len) {
  const int n = static_cast<int>(k.rows());
  if (n == 0) throw ValidationError("cannot score spans of an empty token list");
  const int d = static_cast<int>(k.cols());
  if (head.w.size() != 2 * d) throw ValidationError("pair head size mismatch");

  std::vector<SpanScore> out;
  for (int i = 0; i < n; ++i) {
    const int j_max = max_span_len > 0 ? std::min(n - 1, i + max_span_len - 1) : n - 1;
    for (int j = i; j <= j_max; ++j) {
      const double logit =
          head.w.head(d).dot(k.row(i)) + head.w.tail(d).dot(k.row(j)) + head.bias;
      out.push_back({{i, j}, logit, sigmoid(logit)});
    }
  }
  return out;
}

std::vector<MentionCandidate> select_mentions(const std::vector<SpanScore>& scores,
                                              double epsilon_m) {
  if (epsilon_m < 0.0 || epsilon_m > 1.0) throw ValidationError("epsilon_m must be in [0,1]");
  std::vector<MentionCandidate> out;
  for (const auto& s : scores) {
    if (s.probability > epsilon_m) out.push_back({s.span, s.probability});
  }
  std::sort(out.begin(), out.end(), [](const MentionCandidate& a, const MentionCandidate& b) {
    if (a.probability != b.probability) return a.probability > b.probability;
    return a.span < b.span;
  });
  return out;
}

MentionModel::MentionModel(Tokenizer tokenizer, const EncoderConfig& encoder_cfg,
                           uint64_t head_seed)
    : tokenizer_(std::move(tokenizer)), encoder_(encoder_cfg), head_(encoder_cfg.dim, head_seed) {}

namespace {

// [CLS] tokens [SEP]; row i+1 of the output embeds token i.
std::vector<int> wrap_document(const Tokenizer& tok, const std::vector<std::string>& tokens) {
  std::vector<int> ids;
  ids.reserve(tokens.size() + 2);
  ids.push_back(Tokenizer::kCls);
  for (const auto& t : tokens) ids.push_back(tok.id_of(t));
  ids.push_back(Tokenizer::kSep);
  return ids;
}

}  // namespace

std::vector<SpanScore> MentionModel::score_spans(const std::vector<std::string>& tokens,
                                                 int max_span_len) const {
  if (tokens.empty()) throw ValidationError("cannot score spans of an empty token list");
  const int usable = encoder_.config().max_len - 2;
  std::vector<std::string> view = tokens;
  if (static_cast<int>(view.size()) > usable) view.resize(static_cast<size_t>(usable));
  Eigen::MatrixXd h = encoder_.encode(wrap_document(tokenizer_, view));
  Eigen::MatrixXd k = h.middleRows(1, static_cast<Eigen::Index>(view.size()));
  return score_spans_from_embeddings(k, head_, max_span_len);
}

std::vector<double> MentionModel::train(const std::vector<AnnotatedDocument>& docs,
                                        const MentionTrainConfig& cfg) {
  Adam opt(cfg.lr);
  encoder_.register_params(opt);
  opt.add(head_.w, head_.d_w);
  opt.add_scalar(head_.bias, head_.d_bias);

  std::vector<int> order;
  for (size_t i = 0; i < docs.size(); ++i) {
    if (docs[i].tokens.empty()) {
      std::cerr << "warning: skipping document " << i << " with zero tokens\n";
      continue;
    }
    order.push_back(static_cast<int>(i));
  }
  if (order.empty()) throw ValidationError("no trainable documents");

  const int d = encoder_.config().dim;
  const int usable = encoder_.config().max_len - 2;
  std::vector<double> trace;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng rng = Rng(cfg.seed).fork(static_cast<uint64_t>(epoch));
    rng.shuffle(order);
    double epoch_loss = 0.0;
    long epoch_spans = 0;

    for (size_t at = 0; at < order.size(); at += static_cast<size_t>(cfg.batch_docs)) {
      const size_t end = std::min(order.size(), at + static_cast<size_t>(cfg.batch_docs));
      encoder_.zero_grads();
      head_.zero_grads();
      double batch_loss = 0.0;
      long batch_spans = 0;

      // first pass to know the batch span count for mean scaling
      struct DocWork {
        int doc;
        std::vector<int> ids;
        std::vector<std::pair<Span, double>> spans;  // span, label
      };
      std::vector<DocWork> work;
      for (size_t b = at; b < end; ++b) {
        const auto& doc = docs[static_cast<size_t>(order[b])];
        DocWork w;
        w.doc = order[b];
        std::vector<std::string> view = doc.tokens;
        if (static_cast<int>(view.size()) > usable) view.resize(static_cast<size_t>(usable));
        w.ids = wrap_document(tokenizer_, view);
        const int n = static_cast<int>(view.size());

        std::set<Span> gold;
        for (const auto& m : doc.gold_mentions) {
          if (m.end < n) gold.insert({m.start, m.end});
        }
        std::vector<Span> negatives;
        std::vector<Span> positives(gold.begin(), gold.end());
        for (int i = 0; i < n; ++i) {
          const int j_max =
              cfg.max_span_len > 0 ? std::min(n - 1, i + cfg.max_span_len - 1) : n - 1;
          for (int j = i; j <= j_max; ++j) {
            if (!gold.count({i, j})) negatives.push_back({i, j});
          }
        }
        if (n > cfg.subsample_above) {
          const size_t keep = static_cast<size_t>(
              cfg.neg_ratio * std::max<size_t>(1, positives.size()));
          if (negatives.size() > keep) {
            rng.shuffle(negatives);
            negatives.resize(keep);
            std::sort(negatives.begin(), negatives.end());
          }
        }
        for (const auto& s : positives) w.spans.push_back({s, 1.0});
        for (const auto& s : negatives) w.spans.push_back({s, 0.0});
        batch_spans += static_cast<long>(w.spans.size());
        work.push_back(std::move(w));
      }
      if (batch_spans == 0) continue;

      for (auto& w : work) {
        EncoderActivations acts;
        encoder_.forward(w.ids, acts);
        const int n = static_cast<int>(w.ids.size()) - 2;
        Eigen::MatrixXd dk = Eigen::MatrixXd::Zero(n + 2, d);
        for (const auto& [span, label] : w.spans) {
          const Eigen::Index ri = span.start + 1;  // +1 for CLS offset
          const Eigen::Index rj = span.end + 1;
          const double logit = head_.w.head(d).dot(acts.h_out.row(ri)) +
                               head_.w.tail(d).dot(acts.h_out.row(rj)) + head_.bias;
          batch_loss += bce_with_logit(logit, label);
          const double dlogit = (sigmoid(logit) - label) / static_cast<double>(batch_spans);
          head_.d_w.head(d) += dlogit * acts.h_out.row(ri).transpose();
          head_.d_w.tail(d) += dlogit * acts.h_out.row(rj).transpose();
          head_.d_bias += dlogit;
          dk.row(ri) += dlogit * head_.w.head(d).transpose();
          dk.row(rj) += dlogit * head_.w.tail(d).transpose();
        }
        encoder_.backward(acts, dk);
      }
      opt.step();
      epoch_loss += batch_loss;
      epoch_spans += batch_spans;
    }
    trace.push_back(epoch_spans > 0 ? epoch_loss / static_cast<double>(epoch_spans) : 0.0);
  }
  return trace;
}

void MentionModel::save(const std::string& path) const {
  nlohmann::json header = {{"kind", "mention"},
                           {"encoder", Encoder::config_json(encoder_.config())},
                           {"vocab", tokenizer_.words()}};
  BinaryWriter w(path, "KGXCKPT1", header);
  encoder_.save(w, "enc.");
  w.tensor("head.w", head_.w);
  Eigen::VectorXd b(1);
  b[0] = head_.bias;
  w.tensor("head.b", b);
  w.close();
}

MentionModel MentionModel::load_file(const std::string& path) {
  BinaryReader r(path, "KGXCKPT1");
  if (r.header().value("kind", "") != std::string("mention")) {
    throw ValidationError("checkpoint is not a mention model: " + path);
  }
  std::vector<std::string> words;
  for (const auto& w : r.header().at("vocab")) words.push_back(w.get<std::string>());
  // the stored vocabulary already includes the special tokens
  Tokenizer tok;
  for (size_t i = 6; i < words.size(); ++i) tok.add_word(words[i]);
  EncoderConfig cfg = Encoder::config_from_json(r.header().at("encoder"));
  MentionModel model(std::move(tok), cfg);
  model.encoder_.load(r, "enc.");
  model.head_.w = r.vector_tensor("head.w");
  model.head_.d_w = Eigen::VectorXd::Zero(model.head_.w.size());
  model.head_.bias = r.vector_tensor("head.b")[0];
  return model;
}

}  // namespace kgx
