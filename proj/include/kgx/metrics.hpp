#pragma once

#include <functional>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "kgx/kg.hpp"
#include "kgx/text.hpp"

namespace kgx {

/// (1+β²)PR / (β²P + R); 0 when both P and R are 0.
double f_beta(double p, double r, double beta);

struct PerRelationMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  long support = 0;  // gold triples of this relation
};

struct MetricReport {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double f2 = 0.0;
  std::string level;  // "micro" or "macro"
  std::map<std::string, PerRelationMetrics> per_relation;
};

using TripleList = std::vector<Triple>;

/// Exact-match triple metrics pooled over all documents. Duplicate triples
/// within a document count once (set semantics). 0/0 ratios are 0.
MetricReport micro_metrics(const std::vector<TripleList>& predictions,
                           const std::vector<TripleList>& gold);

/// Per-relation metrics averaged over relations. By default only relations
/// with gold support > 0 enter the mean; relations that were only predicted
/// are still reported in per_relation. With include_all_relations, the mean
/// runs over `universe` (every known relation), zero-support ones counting
/// as all-zero.
MetricReport macro_metrics(const std::vector<TripleList>& predictions,
                           const std::vector<TripleList>& gold,
                           bool include_all_relations = false,
                           const std::vector<std::string>& universe = {});

struct BootstrapCI {
  double mean = 0.0;
  double std = 0.0;
  int samples = 0;
};

using MetricFn =
    std::function<double(const std::vector<TripleList>&, const std::vector<TripleList>&)>;

/// Resample documents with replacement n_samples times and report the mean
/// and standard deviation of the metric. With resample = false every sample
/// is the full set, reducing to the point metric with zero std.
BootstrapCI bootstrap_ci(const std::vector<TripleList>& predictions,
                         const std::vector<TripleList>& gold, const MetricFn& metric,
                         int n_samples = 50, uint64_t seed = 0, bool resample = true);

std::string format_mean_std(const BootstrapCI& ci);

/// Power-of-two training-frequency bucket: relations with count in
/// [lower, upper) plus the bucket's micro F1 over the evaluated split.
struct RelationBucket {
  long lower = 0;
  long upper = 1;
  std::set<std::string> relations;
  double f1 = 0.0;
  long gold_triples = 0;
};

/// Buckets partition all relations seen in the frequency map or the gold
/// data; relations missing from the map land in [0, 1) with a warning.
std::vector<RelationBucket> bucket_f1(const std::vector<TripleList>& predictions,
                                      const std::vector<TripleList>& gold,
                                      const std::map<std::string, long>& training_frequency);

std::string bucket_csv(const std::vector<RelationBucket>& buckets);

// ---- per-component error attribution -------------------------------------

/// What the pipeline saw for one above-threshold span.
struct StageTrace {
  Span span{};
  double mention_prob = 0.0;
  std::vector<std::string> candidate_ids;  // generator top-k
  std::string top1_id;                     // after cross-encoder ranking
  bool accepted = false;                   // combined score above epsilon_c
};

struct DocumentTrace {
  std::vector<StageTrace> spans;
  TripleList predicted;
};

struct ErrorAttribution {
  long mention_recognition = 0;
  long candidate_generation = 0;
  long candidate_ranking = 0;
  long relation_extraction = 0;

  long total() const {
    return mention_recognition + candidate_generation + candidate_ranking + relation_extraction;
  }
  double fraction(long count) const {
    return total() == 0 ? 0.0 : static_cast<double>(count) / static_cast<double>(total());
  }
};

/// Attribute every false-negative gold triple to the earliest pipeline stage
/// that failed for it.
ErrorAttribution attribute_errors(const std::vector<DocumentTrace>& traces,
                                  const std::vector<AnnotatedDocument>& gold_docs);

}  // namespace kgx
