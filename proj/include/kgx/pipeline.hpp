#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "kgx/biencoder.hpp"
#include "kgx/crossencoder.hpp"
#include "kgx/mention.hpp"
#include "kgx/metrics.hpp"
#include "kgx/relation.hpp"

namespace kgx {

/// Calibrated acceptance thresholds plus the F-beta objective they were
/// tuned for.
struct Thresholds {
  double epsilon_m = 0.5;
  double epsilon_c = 0.5;
  double epsilon_r = 0.5;
  double beta = 1.0;

  void save(const std::string& path) const;
  static Thresholds load_file(const std::string& path);
};

/// Mean of the mention span score and the cross-encoder candidate score.
double combined_candidate_score(double s_m, double s_c);

struct UpstreamModels {
  const MentionModel* mention = nullptr;
  const BiEncoderModel* biencoder = nullptr;
  const VectorIndex* index = nullptr;
  const CrossEncoderModel* cross = nullptr;
  const EntityCatalog* catalog = nullptr;
  int top_k = 10;
  int max_span_len = 0;
};

/// Everything the thresholds do NOT influence for one span: its score, its
/// generated candidates, the cross-encoder ranking and the top-1 inputs for
/// relation scoring.
struct StagedSpan {
  Span span{};
  double mention_prob = 0.0;
  std::vector<std::string> candidate_ids;  // generator order
  std::vector<RankedCandidate> ranked;     // cross-encoder order
  std::string top1_id;
  double top_cross_prob = 0.0;
  PairInput top1;          // joint embedding (per relation mode) + types
  PairInput top1_nodesc;   // only filled when requested
};

struct UpstreamStagedDoc {
  std::vector<StagedSpan> spans;
};

struct StagedPair {
  int subj = 0;
  int obj = 0;
  Eigen::VectorXd probs;  // |R|
};

struct StagedDocument {
  std::vector<StagedSpan> spans;
  std::vector<StagedPair> pairs;
  std::vector<std::string> relation_ids;  // column order of pair probs
};

/// Run mention scoring, retrieval and ranking for every span above
/// min_epsilon_m. Spans with empty candidate sets are dropped.
UpstreamStagedDoc stage_upstream(const UpstreamModels& models,
                                 const std::vector<std::string>& tokens, double min_epsilon_m,
                                 bool with_nodesc_embedding = false);

/// Score all ordered span pairs with the relation model. Scores of relations
/// outside `restriction` are forced to 0.0 (empty set = no restriction).
StagedDocument score_relations(const RelationModel& relation, const UpstreamStagedDoc& upstream,
                               const std::set<std::string>& restriction = {});

struct AcceptedMention {
  Span span{};
  std::string entity_id;
  double score = 0.0;  // combined candidate score
};

struct ScoredTriple {
  Triple triple;
  double probability = 0.0;
};

struct ExtractionResult {
  std::vector<AcceptedMention> accepted;
  std::vector<ScoredTriple> triples;  // deduplicated, sorted
};

/// Pure threshold application over a staged document; shared by extraction
/// and calibration so both see identical behaviour.
ExtractionResult assemble_extraction(const StagedDocument& staged, const Thresholds& thresholds);

struct PipelineModels {
  UpstreamModels upstream;
  const RelationModel* relation = nullptr;
  std::set<std::string> relation_restriction;
};

ExtractionResult extract_triples(const PipelineModels& models,
                                 const std::vector<std::string>& tokens,
                                 const Thresholds& thresholds);

/// Stage trace for error attribution, from the same assembly rules.
DocumentTrace trace_from_staged(const StagedDocument& staged, const Thresholds& thresholds);

struct GridSpec {
  double start = 0.05;
  double stop = 0.95;
  double step = 0.05;
  bool refine = true;  // coordinate-descent pass at 0.01 granularity
};

/// Joint grid search over (epsilon_m, epsilon_c, epsilon_r) maximizing the
/// micro (or macro) F-beta of the assembled extractions against gold. Ties
/// break toward higher thresholds.
Thresholds calibrate_thresholds(const std::vector<StagedDocument>& staged,
                                const std::vector<TripleList>& gold,
                                const RelationIndex& relations, double beta,
                                const GridSpec& grid, bool macro = false);

/// Evaluate one relation-extractor variant per mode over a shared upstream.
/// Returns a micro MetricReport per mode.
std::map<RelationMode, MetricReport> run_ablation(
    const UpstreamModels& upstream, const std::map<RelationMode, const RelationModel*>& models,
    const std::vector<AnnotatedDocument>& test_docs, const Thresholds& thresholds,
    const std::set<std::string>& restriction = {});

}  // namespace kgx
