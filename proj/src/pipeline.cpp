#include "kgx/pipeline.hpp"

#include <algorithm>
#include <array>
#include <fstream>

#include "json.hpp"

namespace kgx {

void Thresholds::save(const std::string& path) const {
  nlohmann::json j = {{"epsilon_m", epsilon_m},
                      {"epsilon_c", epsilon_c},
                      {"epsilon_r", epsilon_r},
                      {"beta", beta}};
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write file: " + path);
  out << j.dump(2) << "\n";
}

Thresholds Thresholds::load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open file: " + path);
  nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
  if (j.is_discarded()) throw ValidationError("malformed thresholds file: " + path);
  Thresholds t;
  t.epsilon_m = j.at("epsilon_m").get<double>();
  t.epsilon_c = j.at("epsilon_c").get<double>();
  t.epsilon_r = j.at("epsilon_r").get<double>();
  t.beta = j.value("beta", 1.0);
  return t;
}

double combined_candidate_score(double s_m, double s_c) { return 0.5 * (s_m + s_c); }

UpstreamStagedDoc stage_upstream(const UpstreamModels& models,
                                 const std::vector<std::string>& tokens, double min_epsilon_m,
                                 bool with_nodesc_embedding) {
  UpstreamStagedDoc out;
  if (tokens.empty()) return out;
  const auto scores = models.mention->score_spans(tokens, models.max_span_len);
  const auto selected = select_mentions(scores, min_epsilon_m);

  for (const auto& cand : selected) {
    StagedSpan staged;
    staged.span = cand.span;
    staged.mention_prob = cand.probability;

    const Eigen::VectorXd query = models.biencoder->embed_mention(tokens, cand.span);
    CandidateSet candidates = models.index->retrieve(query, models.top_k);
    if (candidates.candidates.empty()) continue;  // dropped silently
    for (const auto& c : candidates.candidates) staged.candidate_ids.push_back(c.id);

    staged.ranked = models.cross->rank_candidates(tokens, cand.span, candidates,
                                                  *models.catalog, true);
    if (staged.ranked.empty()) continue;
    const RankedCandidate& top = staged.ranked.front();
    staged.top1_id = top.entity_id;
    staged.top_cross_prob = top.cross_prob;
    staged.top1.joint_embedding = top.joint_embedding;
    staged.top1.types = models.catalog->get(top.entity_id).types;
    if (with_nodesc_embedding) {
      staged.top1_nodesc.joint_embedding =
          models.cross->score_pair(tokens, cand.span, models.catalog->get(top.entity_id), false)
              .joint_embedding;
      staged.top1_nodesc.types = staged.top1.types;
    }
    out.spans.push_back(std::move(staged));
  }
  return out;
}

StagedDocument score_relations(const RelationModel& relation, const UpstreamStagedDoc& upstream,
                               const std::set<std::string>& restriction) {
  StagedDocument out;
  out.spans = upstream.spans;
  const int m = static_cast<int>(out.spans.size());
  const bool nodesc = relation.mode() == RelationMode::NO_DESC;
  for (int s = 0; s < m; ++s) {
    for (int o = 0; o < m; ++o) {
      if (s == o) continue;
      const StagedSpan& ss = out.spans[static_cast<size_t>(s)];
      const StagedSpan& so = out.spans[static_cast<size_t>(o)];
      const PairInput& ps = nodesc && ss.top1_nodesc.joint_embedding.size() > 0
                                ? ss.top1_nodesc
                                : ss.top1;
      const PairInput& po = nodesc && so.top1_nodesc.joint_embedding.size() > 0
                                ? so.top1_nodesc
                                : so.top1;
      RelationLogits lg = relation.combined_logits(ps, po, s, o);
      StagedPair pair;
      pair.subj = s;
      pair.obj = o;
      pair.probs = std::move(lg.probabilities);
      if (!restriction.empty()) {
        for (int r = 0; r < relation.relations().size(); ++r) {
          if (!restriction.count(relation.relations().id_of(r))) pair.probs[r] = 0.0;
        }
      }
      out.pairs.push_back(std::move(pair));
    }
  }
  out.relation_ids = relation.relations().ids();
  return out;
}

namespace {

std::vector<char> accepted_mask(const StagedDocument& staged, const Thresholds& t) {
  std::vector<char> mask(staged.spans.size(), 0);
  for (size_t i = 0; i < staged.spans.size(); ++i) {
    const auto& s = staged.spans[i];
    if (s.ranked.empty()) continue;
    if (s.mention_prob <= t.epsilon_m) continue;
    const double combined = combined_candidate_score(s.mention_prob, s.top_cross_prob);
    if (combined > t.epsilon_c) mask[i] = 1;
  }
  return mask;
}

}  // namespace

ExtractionResult assemble_extraction(const StagedDocument& staged, const Thresholds& t) {
  ExtractionResult out;
  const auto mask = accepted_mask(staged, t);
  for (size_t i = 0; i < staged.spans.size(); ++i) {
    if (!mask[i]) continue;
    const auto& s = staged.spans[i];
    out.accepted.push_back(
        {s.span, s.top1_id, combined_candidate_score(s.mention_prob, s.top_cross_prob)});
  }
  std::map<Triple, double> best;
  for (const auto& pair : staged.pairs) {
    if (!mask[static_cast<size_t>(pair.subj)] || !mask[static_cast<size_t>(pair.obj)]) continue;
    const auto& subj = staged.spans[static_cast<size_t>(pair.subj)];
    const auto& obj = staged.spans[static_cast<size_t>(pair.obj)];
    for (Eigen::Index r = 0; r < pair.probs.size(); ++r) {
      if (pair.probs[r] > t.epsilon_r) {
        Triple triple{subj.top1_id, staged.relation_ids[static_cast<size_t>(r)], obj.top1_id};
        auto [it, inserted] = best.emplace(triple, pair.probs[r]);
        if (!inserted && pair.probs[r] > it->second) it->second = pair.probs[r];
      }
    }
  }
  for (const auto& [triple, prob] : best) out.triples.push_back({triple, prob});
  return out;
}

ExtractionResult extract_triples(const PipelineModels& models,
                                 const std::vector<std::string>& tokens,
                                 const Thresholds& thresholds) {
  const bool nodesc = models.relation->mode() == RelationMode::NO_DESC;
  UpstreamStagedDoc upstream =
      stage_upstream(models.upstream, tokens, thresholds.epsilon_m, nodesc);
  StagedDocument staged = score_relations(*models.relation, upstream, models.relation_restriction);
  return assemble_extraction(staged, thresholds);
}

DocumentTrace trace_from_staged(const StagedDocument& staged, const Thresholds& t) {
  DocumentTrace trace;
  const auto mask = accepted_mask(staged, t);
  for (size_t i = 0; i < staged.spans.size(); ++i) {
    const auto& s = staged.spans[i];
    StageTrace st;
    st.span = s.span;
    st.mention_prob = s.mention_prob;
    st.candidate_ids = s.candidate_ids;
    st.top1_id = s.top1_id;
    st.accepted = mask[i] != 0;
    trace.spans.push_back(std::move(st));
  }
  for (const auto& st : assemble_extraction(staged, t).triples) {
    trace.predicted.push_back(st.triple);
  }
  return trace;
}

// ---- calibration ----------------------------------------------------------

namespace {

// Integer-interned view of one staged document for fast grid evaluation.
struct CalibDoc {
  std::vector<double> s_m;     // per span
  std::vector<double> s_comb;  // per span; -1 when no candidates
  std::vector<int> top1;       // interned entity per span
  std::vector<std::array<int, 2>> pair_spans;
  std::vector<Eigen::VectorXd> pair_probs;
  std::vector<std::array<int, 3>> gold;  // sorted interned triples
};

struct CalibCounts {
  std::vector<long> tp, fp, fn;  // per relation index (R + 1 slot for unknown)

  explicit CalibCounts(int r) : tp(static_cast<size_t>(r), 0), fp(static_cast<size_t>(r), 0),
                                fn(static_cast<size_t>(r), 0) {}
};

double score_counts(const CalibCounts& counts, double beta, bool macro) {
  if (!macro) {
    long tp = 0, fp = 0, fn = 0;
    for (size_t r = 0; r < counts.tp.size(); ++r) {
      tp += counts.tp[r];
      fp += counts.fp[r];
      fn += counts.fn[r];
    }
    const double p = (tp + fp) == 0 ? 0.0 : static_cast<double>(tp) / (tp + fp);
    const double rec = (tp + fn) == 0 ? 0.0 : static_cast<double>(tp) / (tp + fn);
    return f_beta(p, rec, beta);
  }
  double sum = 0.0;
  long n = 0;
  for (size_t r = 0; r < counts.tp.size(); ++r) {
    const long support = counts.tp[r] + counts.fn[r];
    if (support == 0) continue;
    const double p = (counts.tp[r] + counts.fp[r]) == 0
                         ? 0.0
                         : static_cast<double>(counts.tp[r]) / (counts.tp[r] + counts.fp[r]);
    const double rec = static_cast<double>(counts.tp[r]) / support;
    sum += f_beta(p, rec, beta);
    ++n;
  }
  return n == 0 ? 0.0 : sum / static_cast<double>(n);
}

double evaluate_grid_point(const std::vector<CalibDoc>& docs, int num_relations,
                           const Thresholds& t, double beta, bool macro,
                           std::vector<std::array<int, 3>>& scratch) {
  CalibCounts counts(num_relations + 1);
  for (const auto& doc : docs) {
    scratch.clear();
    std::vector<char> ok(doc.s_m.size(), 0);
    for (size_t i = 0; i < doc.s_m.size(); ++i) {
      ok[i] = doc.s_comb[i] >= 0.0 && doc.s_m[i] > t.epsilon_m && doc.s_comb[i] > t.epsilon_c;
    }
    for (size_t p = 0; p < doc.pair_spans.size(); ++p) {
      const auto [si, oi] = doc.pair_spans[p];
      if (!ok[static_cast<size_t>(si)] || !ok[static_cast<size_t>(oi)]) continue;
      const auto& probs = doc.pair_probs[p];
      for (Eigen::Index r = 0; r < probs.size(); ++r) {
        if (probs[r] > t.epsilon_r) {
          scratch.push_back({doc.top1[static_cast<size_t>(si)], static_cast<int>(r),
                             doc.top1[static_cast<size_t>(oi)]});
        }
      }
    }
    std::sort(scratch.begin(), scratch.end());
    scratch.erase(std::unique(scratch.begin(), scratch.end()), scratch.end());
    // merge predicted (scratch) against sorted gold
    size_t a = 0, b = 0;
    while (a < scratch.size() || b < doc.gold.size()) {
      if (b == doc.gold.size() || (a < scratch.size() && scratch[a] < doc.gold[b])) {
        ++counts.fp[static_cast<size_t>(scratch[a][1])];
        ++a;
      } else if (a == scratch.size() || doc.gold[b] < scratch[a]) {
        ++counts.fn[static_cast<size_t>(doc.gold[b][1])];
        ++b;
      } else {
        ++counts.tp[static_cast<size_t>(scratch[a][1])];
        ++a;
        ++b;
      }
    }
  }
  return score_counts(counts, beta, macro);
}

}  // namespace

Thresholds calibrate_thresholds(const std::vector<StagedDocument>& staged,
                                const std::vector<TripleList>& gold,
                                const RelationIndex& relations, double beta,
                                const GridSpec& grid, bool macro) {
  if (staged.size() != gold.size()) {
    throw ValidationError("staged documents and gold have different counts");
  }
  if (staged.empty()) throw ValidationError("calibration needs a non-empty validation set");
  std::vector<double> values;
  for (double v = grid.start; v <= grid.stop + 1e-12; v += grid.step) values.push_back(v);
  if (values.empty()) throw ValidationError("empty threshold grid");

  // intern entities per document; relations globally via the index
  const int R = relations.size();
  std::vector<CalibDoc> docs;
  docs.reserve(staged.size());
  for (size_t i = 0; i < staged.size(); ++i) {
    CalibDoc doc;
    std::map<std::string, int> entity_of;
    auto intern = [&](const std::string& id) {
      return entity_of.emplace(id, static_cast<int>(entity_of.size())).first->second;
    };
    for (const auto& s : staged[i].spans) {
      doc.s_m.push_back(s.mention_prob);
      if (s.ranked.empty()) {
        doc.s_comb.push_back(-1.0);
        doc.top1.push_back(-1);
      } else {
        doc.s_comb.push_back(combined_candidate_score(s.mention_prob, s.top_cross_prob));
        doc.top1.push_back(intern(s.top1_id));
      }
    }
    for (const auto& p : staged[i].pairs) {
      doc.pair_spans.push_back({p.subj, p.obj});
      doc.pair_probs.push_back(p.probs);
    }
    std::set<Triple> unique_gold(gold[i].begin(), gold[i].end());
    for (const auto& t : unique_gold) {
      const int r = relations.contains(t.relation) ? relations.index_of(t.relation) : R;
      doc.gold.push_back({intern(t.subject), r, intern(t.object)});
    }
    std::sort(doc.gold.begin(), doc.gold.end());
    docs.push_back(std::move(doc));
  }

  std::vector<std::array<int, 3>> scratch;
  Thresholds best;
  double best_score = -1.0;
  auto consider = [&](double em, double ec, double er) {
    Thresholds t{em, ec, er, beta};
    const double score = evaluate_grid_point(docs, R, t, beta, macro, scratch);
    const auto as_tuple = [](const Thresholds& x) {
      return std::array<double, 3>{x.epsilon_m, x.epsilon_c, x.epsilon_r};
    };
    if (score > best_score || (score == best_score && as_tuple(t) > as_tuple(best))) {
      best_score = score;
      best = t;
    }
  };

  for (double em : values) {
    for (double ec : values) {
      for (double er : values) consider(em, ec, er);
    }
  }

  if (grid.refine) {
    for (int sweep = 0; sweep < 2; ++sweep) {
      for (int coord = 0; coord < 3; ++coord) {
        const Thresholds pivot = best;
        for (int k = -4; k <= 4; ++k) {
          double v = (coord == 0 ? pivot.epsilon_m
                                 : coord == 1 ? pivot.epsilon_c : pivot.epsilon_r) +
                     0.01 * k;
          v = std::clamp(v, 0.0, 1.0);
          consider(coord == 0 ? v : pivot.epsilon_m, coord == 1 ? v : pivot.epsilon_c,
                   coord == 2 ? v : pivot.epsilon_r);
        }
      }
    }
  }
  best.beta = beta;
  return best;
}

std::map<RelationMode, MetricReport> run_ablation(
    const UpstreamModels& upstream, const std::map<RelationMode, const RelationModel*>& models,
    const std::vector<AnnotatedDocument>& test_docs, const Thresholds& thresholds,
    const std::set<std::string>& restriction) {
  for (const auto& [mode, model] : models) {
    if (model == nullptr) {
      throw ValidationError("missing relation model for mode " + relation_mode_name(mode));
    }
  }
  bool any_nodesc = models.count(RelationMode::NO_DESC) > 0;

  std::vector<UpstreamStagedDoc> staged;
  staged.reserve(test_docs.size());
  for (const auto& doc : test_docs) {
    staged.push_back(stage_upstream(upstream, doc.tokens, thresholds.epsilon_m, any_nodesc));
  }

  std::map<RelationMode, MetricReport> out;
  for (const auto& [mode, model] : models) {
    std::vector<TripleList> predictions, gold;
    for (size_t i = 0; i < test_docs.size(); ++i) {
      StagedDocument sd = score_relations(*model, staged[i], restriction);
      TripleList triples;
      for (const auto& st : assemble_extraction(sd, thresholds).triples) {
        triples.push_back(st.triple);
      }
      predictions.push_back(std::move(triples));
      gold.push_back(test_docs[i].gold_triples);
    }
    out[mode] = micro_metrics(predictions, gold);
  }
  return out;
}

}  // namespace kgx
