#pragma once

#include <map>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "kgx/common.hpp"

namespace kgx {

enum class CoarseType { PER, ORG, LOC, MISC };

std::string coarse_name(CoarseType c);
CoarseType coarse_from_name(const std::string& name);

/// A knowledge-graph entity. `types` holds the closed, vocabulary-restricted
/// type set once the catalog has been attached to a TypeVocabulary.
struct EntityRecord {
  std::string id;
  std::string label;
  std::string description;  // may be empty
  std::set<std::string> types;
};

struct Triple {
  std::string subject;
  std::string relation;
  std::string object;

  bool operator==(const Triple& o) const {
    return subject == o.subject && relation == o.relation && object == o.object;
  }
  bool operator<(const Triple& o) const {
    if (subject != o.subject) return subject < o.subject;
    if (relation != o.relation) return relation < o.relation;
    return object < o.object;
  }
};

/// Gold mention: token span (end inclusive) plus the entity it refers to.
struct GoldMention {
  int start = 0;
  int end = 0;
  std::string entity_id;
};

struct AnnotatedDocument {
  std::vector<std::string> tokens;
  std::vector<GoldMention> gold_mentions;
  std::vector<Triple> gold_triples;
};

/// Dense relation id <-> index bijection. Index order is the load order.
class RelationIndex {
 public:
  void add(const std::string& id, const std::string& label);
  int index_of(const std::string& id) const;           // throws on unknown id
  const std::string& id_of(int index) const;           // throws on bad index
  const std::string& label_of(const std::string& id) const;
  bool contains(const std::string& id) const { return by_id_.count(id) > 0; }
  int size() const { return static_cast<int>(ids_.size()); }
  const std::vector<std::string>& ids() const { return ids_; }

 private:
  std::vector<std::string> ids_;
  std::vector<std::string> labels_;
  std::unordered_map<std::string, int> by_id_;
};

/// Restricted fine-grained type system: vocabulary, supertype edges and the
/// coarse class mapping. Types outside the vocabulary are ignored everywhere.
class TypeVocabulary {
 public:
  TypeVocabulary() = default;
  TypeVocabulary(std::vector<std::string> types,
                 std::map<std::string, std::set<std::string>> supertype_edges,
                 std::map<std::string, CoarseType> coarse_map);

  bool contains(const std::string& type_id) const { return index_.count(type_id) > 0; }
  int index_of(const std::string& type_id) const;  // throws on unknown
  int size() const { return static_cast<int>(types_.size()); }
  const std::vector<std::string>& types() const { return types_; }
  const std::map<std::string, std::set<std::string>>& supertype_edges() const {
    return supertype_edges_;
  }

  /// Smallest superset of `types` closed under supertype edges, intersected
  /// with the vocabulary. Fixed-point computation, so supertype cycles
  /// terminate instead of erroring.
  std::set<std::string> closure(const std::set<std::string>& types) const;

  /// Coarse class of a vocabulary type; unmapped types default to MISC.
  CoarseType coarse_type_of(const std::string& type_id) const;

  /// Distinct coarse classes of a (closed) type set.
  std::set<CoarseType> coarse_classes(const std::set<std::string>& types) const;

 private:
  std::vector<std::string> types_;
  std::unordered_map<std::string, int> index_;
  std::map<std::string, std::set<std::string>> supertype_edges_;
  std::map<std::string, CoarseType> coarse_map_;
};

class EntityCatalog {
 public:
  void add(EntityRecord record);  // rejects duplicate ids
  bool contains(const std::string& id) const { return by_id_.count(id) > 0; }
  const EntityRecord& get(const std::string& id) const;
  const EntityRecord& at(size_t i) const { return records_[i]; }
  size_t size() const { return records_.size(); }
  const std::vector<EntityRecord>& records() const { return records_; }

  /// Replace every record's type set with its supertype closure intersected
  /// with the vocabulary. Closure first, then restriction.
  void restrict_types(const TypeVocabulary& vocab);

 private:
  std::vector<EntityRecord> records_;
  std::unordered_map<std::string, size_t> by_id_;
};

// ---- file loaders -------------------------------------------------------
// Formats are documented in the README. All loaders raise ValidationError
// with the offending line number.

/// JSON-lines with keys id, label, description, types.
EntityCatalog load_entity_catalog(const std::string& path);

/// JSON-lines with keys id, label. Index order = line order.
RelationIndex load_relation_catalog(const std::string& path);

/// vocab: plain list of type ids, one per line.
/// hierarchy: tab-separated child<TAB>supertype edges.
/// coarse map: JSON object type id -> "PER"|"ORG"|"LOC"|"MISC".
TypeVocabulary load_type_vocabulary(const std::string& vocab_path,
                                    const std::string& hierarchy_path,
                                    const std::string& coarse_map_path);

/// JSON-lines with keys tokens, mentions ([start, end, entity_id], end
/// inclusive) and triples ([subject, relation, object]). Spans are validated
/// against the token count and entity ids against the catalog.
std::vector<AnnotatedDocument> load_dataset(const std::string& path,
                                            const EntityCatalog& catalog);

/// JSON object relation id -> training occurrence count.
std::map<std::string, long> load_frequency_map(const std::string& path);

}  // namespace kgx
