#include "kgx/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <sstream>

namespace kgx {

double f_beta(double p, double r, double beta) {
  const double b2 = beta * beta;
  const double denom = b2 * p + r;
  if (denom == 0.0) return 0.0;
  return (1.0 + b2) * p * r / denom;
}

namespace {

std::set<Triple> to_set(const TripleList& list) { return {list.begin(), list.end()}; }

struct Counts {
  long tp = 0, fp = 0, fn = 0;
};

double safe_div(long num, long den) { return den == 0 ? 0.0 : static_cast<double>(num) / den; }

// Pooled per-relation counts over all documents.
std::map<std::string, Counts> relation_counts(const std::vector<TripleList>& predictions,
                                              const std::vector<TripleList>& gold) {
  if (predictions.size() != gold.size()) {
    throw ValidationError("predictions and gold have different document counts");
  }
  std::map<std::string, Counts> by_rel;
  for (size_t i = 0; i < gold.size(); ++i) {
    const auto p = to_set(predictions[i]);
    const auto g = to_set(gold[i]);
    for (const auto& t : p) {
      if (g.count(t)) {
        ++by_rel[t.relation].tp;
      } else {
        ++by_rel[t.relation].fp;
      }
    }
    for (const auto& t : g) {
      if (!p.count(t)) ++by_rel[t.relation].fn;
    }
  }
  return by_rel;
}

}  // namespace

MetricReport micro_metrics(const std::vector<TripleList>& predictions,
                           const std::vector<TripleList>& gold) {
  MetricReport report;
  report.level = "micro";
  Counts total;
  for (const auto& [rel, c] : relation_counts(predictions, gold)) {
    total.tp += c.tp;
    total.fp += c.fp;
    total.fn += c.fn;
    PerRelationMetrics pr;
    pr.precision = safe_div(c.tp, c.tp + c.fp);
    pr.recall = safe_div(c.tp, c.tp + c.fn);
    pr.f1 = f_beta(pr.precision, pr.recall, 1.0);
    pr.support = c.tp + c.fn;
    report.per_relation[rel] = pr;
  }
  report.precision = safe_div(total.tp, total.tp + total.fp);
  report.recall = safe_div(total.tp, total.tp + total.fn);
  report.f1 = f_beta(report.precision, report.recall, 1.0);
  report.f2 = f_beta(report.precision, report.recall, 2.0);
  return report;
}

MetricReport macro_metrics(const std::vector<TripleList>& predictions,
                           const std::vector<TripleList>& gold, bool include_all_relations,
                           const std::vector<std::string>& universe) {
  MetricReport report;
  report.level = "macro";
  auto by_rel = relation_counts(predictions, gold);
  if (include_all_relations) {
    for (const auto& rel : universe) by_rel.emplace(rel, Counts{});
  }
  double sum_p = 0.0, sum_r = 0.0, sum_f1 = 0.0, sum_f2 = 0.0;
  long averaged = 0;
  for (const auto& [rel, c] : by_rel) {
    PerRelationMetrics pr;
    pr.precision = safe_div(c.tp, c.tp + c.fp);
    pr.recall = safe_div(c.tp, c.tp + c.fn);
    pr.f1 = f_beta(pr.precision, pr.recall, 1.0);
    pr.support = c.tp + c.fn;
    report.per_relation[rel] = pr;
    // only-predicted relations (support 0) stay out of the mean unless the
    // caller asked for the full universe
    if (pr.support > 0 || include_all_relations) {
      sum_p += pr.precision;
      sum_r += pr.recall;
      sum_f1 += pr.f1;
      sum_f2 += f_beta(pr.precision, pr.recall, 2.0);
      ++averaged;
    }
  }
  if (averaged > 0) {
    report.precision = sum_p / averaged;
    report.recall = sum_r / averaged;
    report.f1 = sum_f1 / averaged;
    report.f2 = sum_f2 / averaged;
  }
  return report;
}

BootstrapCI bootstrap_ci(const std::vector<TripleList>& predictions,
                         const std::vector<TripleList>& gold, const MetricFn& metric,
                         int n_samples, uint64_t seed, bool resample) {
  if (gold.empty()) throw ValidationError("bootstrap needs at least one document");
  if (n_samples < 1) throw ValidationError("n_samples must be >= 1");
  const size_t n = gold.size();
  Rng rng(seed);
  std::vector<double> values;
  values.reserve(static_cast<size_t>(n_samples));
  std::vector<TripleList> sample_pred(n), sample_gold(n);
  for (int s = 0; s < n_samples; ++s) {
    if (resample) {
      for (size_t i = 0; i < n; ++i) {
        const size_t pick = static_cast<size_t>(rng.next_below(n));
        sample_pred[i] = predictions[pick];
        sample_gold[i] = gold[pick];
      }
      values.push_back(metric(sample_pred, sample_gold));
    } else {
      values.push_back(metric(predictions, gold));
    }
  }
  BootstrapCI ci;
  ci.samples = n_samples;
  double sum = 0.0;
  for (double v : values) sum += v;
  ci.mean = sum / values.size();
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - ci.mean) * (v - ci.mean);
    ci.std = std::sqrt(ss / static_cast<double>(values.size() - 1));
  }
  return ci;
}

std::string format_mean_std(const BootstrapCI& ci) {
  std::ostringstream out;
  out.setf(std::ios::fixed);
  out.precision(4);
  out << ci.mean << " ± " << ci.std;
  return out.str();
}

std::vector<RelationBucket> bucket_f1(const std::vector<TripleList>& predictions,
                                      const std::vector<TripleList>& gold,
                                      const std::map<std::string, long>& training_frequency) {
  // relation -> bucket lower bound
  std::set<std::string> all_relations;
  for (const auto& [rel, freq] : training_frequency) {
    (void)freq;
    all_relations.insert(rel);
  }
  for (const auto& doc : gold) {
    for (const auto& t : doc) all_relations.insert(t.relation);
  }

  std::map<long, RelationBucket> by_lower;
  for (const auto& rel : all_relations) {
    long freq = 0;
    auto it = training_frequency.find(rel);
    if (it == training_frequency.end()) {
      std::cerr << "warning: relation " << rel
                << " missing from frequency map; assigned to bucket [0,1)\n";
    } else {
      freq = it->second;
    }
    long lower = 0, upper = 1;
    if (freq >= 1) {
      lower = 1;
      while (lower * 2 <= freq) lower *= 2;
      upper = lower * 2;
    }
    auto& bucket = by_lower[lower];
    bucket.lower = lower;
    bucket.upper = upper;
    bucket.relations.insert(rel);
  }

  std::vector<RelationBucket> out;
  for (auto& [lower, bucket] : by_lower) {
    std::vector<TripleList> p(predictions.size()), g(gold.size());
    for (size_t i = 0; i < gold.size(); ++i) {
      for (const auto& t : predictions[i]) {
        if (bucket.relations.count(t.relation)) p[i].push_back(t);
      }
      long gold_here = 0;
      for (const auto& t : gold[i]) {
        if (bucket.relations.count(t.relation)) {
          g[i].push_back(t);
          ++gold_here;
        }
      }
      bucket.gold_triples += gold_here;
    }
    bucket.f1 = micro_metrics(p, g).f1;
    out.push_back(bucket);
  }
  return out;
}

std::string bucket_csv(const std::vector<RelationBucket>& buckets) {
  std::ostringstream out;
  out << "bucket_lower,relation_count,f1\n";
  for (const auto& b : buckets) {
    out << b.lower << "," << b.relations.size() << "," << b.f1 << "\n";
  }
  return out.str();
}

ErrorAttribution attribute_errors(const std::vector<DocumentTrace>& traces,
                                  const std::vector<AnnotatedDocument>& gold_docs) {
  if (traces.size() != gold_docs.size()) {
    throw ValidationError("traces and gold have different document counts");
  }
  ErrorAttribution out;
  for (size_t i = 0; i < gold_docs.size(); ++i) {
    const auto& doc = gold_docs[i];
    const auto& trace = traces[i];
    const auto predicted = to_set(trace.predicted);

    // entity -> gold spans in this document
    std::map<std::string, std::vector<Span>> gold_spans;
    for (const auto& m : doc.gold_mentions) {
      gold_spans[m.entity_id].push_back({m.start, m.end});
    }
    // span survival per entity and stage
    auto stage_of_entity = [&](const std::string& entity) {
      // 0 = recognized, 1 = generated, 2 = ranked+accepted, -1 = lost at recognition
      int best = -1;
      for (const Span& s : gold_spans[entity]) {
        for (const auto& st : trace.spans) {
          if (!(st.span == s)) continue;
          best = std::max(best, 0);
          if (std::find(st.candidate_ids.begin(), st.candidate_ids.end(), entity) !=
              st.candidate_ids.end()) {
            best = std::max(best, 1);
            if (st.top1_id == entity && st.accepted) best = std::max(best, 2);
          }
        }
      }
      return best;
    };

    for (const auto& t : to_set(doc.gold_triples)) {
      if (predicted.count(t)) continue;  // not an error
      const int s_stage = stage_of_entity(t.subject);
      const int o_stage = stage_of_entity(t.object);
      const int weakest = std::min(s_stage, o_stage);
      if (weakest < 0) {
        ++out.mention_recognition;
      } else if (weakest < 1) {
        ++out.candidate_generation;
      } else if (weakest < 2) {
        ++out.candidate_ranking;
      } else {
        ++out.relation_extraction;
      }
    }
  }
  return out;
}

}  // namespace kgx
