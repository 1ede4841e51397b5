#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "kgx/kg.hpp"

namespace kgx {

/// Knobs for the synthetic KG + corpus generator. The corpus is exhaustively
/// annotated: every expressed triple is labeled, and every labeled entity
/// has a gold mention.
struct SynthSpec {
  int n_entities = 500;
  int n_relations = 12;
  int n_types = 30;
  /// Fraction of relations whose (subject type, object type) signature fully
  /// determines them. Determined relations are grouped to share surface
  /// templates, so text alone cannot separate group members.
  double type_determinism = 0.5;
  int templates_per_relation = 4;
  uint64_t seed = 7;

  int n_train_docs = 5000;
  int n_dev_docs = 500;
  int n_test_docs = 500;
  /// Relation frequency weights follow rank^(-power_exponent).
  double power_exponent = 1.5;
  int max_triples_per_doc = 3;
  /// Entities never mentioned in training documents; dev/test triples draw
  /// their endpoints from this pool with eval_unseen_prob.
  double heldout_entity_fraction = 0.25;
  double eval_unseen_prob = 0.5;
  /// Chance of an extra mention-only sentence per document.
  double distractor_prob = 0.25;
};

struct SynthOutput {
  EntityCatalog catalog;  // types already closed + restricted
  RelationIndex relations;
  TypeVocabulary vocab;
  std::vector<AnnotatedDocument> train, dev, test;
  std::map<std::string, long> train_frequency;

  // raw pieces, as written to disk
  std::vector<std::string> type_list;
  std::map<std::string, std::set<std::string>> supertype_edges;
  std::map<std::string, std::string> coarse_map;              // partial; MISC by default
  std::map<std::string, std::set<std::string>> base_types;    // entity -> pre-closure types
};

/// Deterministic under spec.seed; throws on infeasible specs.
SynthOutput generate(const SynthSpec& spec);

/// Write catalog.jsonl, relations.jsonl, types.txt, hierarchy.tsv,
/// coarse_map.json, train/dev/test.jsonl and freq_map.json into `dir`.
void write_synth_files(const SynthOutput& output, const std::string& dir);

}  // namespace kgx
