#include "kgx/kg.hpp"

#include <fstream>

#include "json.hpp"

using nlohmann::json;

namespace kgx {

std::string coarse_name(CoarseType c) {
  switch (c) {
    case CoarseType::PER: return "PER";
    case CoarseType::ORG: return "ORG";
    case CoarseType::LOC: return "LOC";
    case CoarseType::MISC: return "MISC";
  }
  return "MISC";
}

CoarseType coarse_from_name(const std::string& name) {
  if (name == "PER") return CoarseType::PER;
  if (name == "ORG") return CoarseType::ORG;
  if (name == "LOC") return CoarseType::LOC;
  if (name == "MISC") return CoarseType::MISC;
  throw ValidationError("unknown coarse class: " + name);
}

void RelationIndex::add(const std::string& id, const std::string& label) {
  if (by_id_.count(id)) throw ValidationError("duplicate relation id: " + id);
  by_id_[id] = static_cast<int>(ids_.size());
  ids_.push_back(id);
  labels_.push_back(label);
}

int RelationIndex::index_of(const std::string& id) const {
  auto it = by_id_.find(id);
  if (it == by_id_.end()) throw ValidationError("unknown relation id: " + id);
  return it->second;
}

const std::string& RelationIndex::id_of(int index) const {
  if (index < 0 || index >= size()) {
    throw ValidationError("relation index out of range: " + std::to_string(index));
  }
  return ids_[static_cast<size_t>(index)];
}

const std::string& RelationIndex::label_of(const std::string& id) const {
  return labels_[static_cast<size_t>(index_of(id))];
}

TypeVocabulary::TypeVocabulary(std::vector<std::string> types,
                               std::map<std::string, std::set<std::string>> supertype_edges,
                               std::map<std::string, CoarseType> coarse_map)
    : types_(std::move(types)),
      supertype_edges_(std::move(supertype_edges)),
      coarse_map_(std::move(coarse_map)) {
  for (size_t i = 0; i < types_.size(); ++i) {
    if (index_.count(types_[i])) throw ValidationError("duplicate type id: " + types_[i]);
    index_[types_[i]] = static_cast<int>(i);
  }
}

int TypeVocabulary::index_of(const std::string& type_id) const {
  auto it = index_.find(type_id);
  if (it == index_.end()) throw ValidationError("unknown type id: " + type_id);
  return it->second;
}

std::set<std::string> TypeVocabulary::closure(const std::set<std::string>& types) const {
  for (const auto& t : types) {
    if (!contains(t)) throw ValidationError("unknown type id: " + t);
  }
  // Fixed point over the edge relation; cycles just stop adding members.
  std::set<std::string> closed = types;
  std::vector<std::string> frontier(types.begin(), types.end());
  while (!frontier.empty()) {
    std::string t = frontier.back();
    frontier.pop_back();
    auto it = supertype_edges_.find(t);
    if (it == supertype_edges_.end()) continue;
    for (const auto& super : it->second) {
      if (!contains(super)) continue;  // restriction: closure stays inside the vocabulary
      if (closed.insert(super).second) frontier.push_back(super);
    }
  }
  return closed;
}

CoarseType TypeVocabulary::coarse_type_of(const std::string& type_id) const {
  if (!contains(type_id)) throw ValidationError("unknown type id: " + type_id);
  auto it = coarse_map_.find(type_id);
  return it == coarse_map_.end() ? CoarseType::MISC : it->second;
}

std::set<CoarseType> TypeVocabulary::coarse_classes(const std::set<std::string>& types) const {
  std::set<CoarseType> out;
  for (const auto& t : types) out.insert(coarse_type_of(t));
  return out;
}

void EntityCatalog::add(EntityRecord record) {
  if (by_id_.count(record.id)) throw ValidationError("duplicate entity id: " + record.id);
  by_id_[record.id] = records_.size();
  records_.push_back(std::move(record));
}

const EntityRecord& EntityCatalog::get(const std::string& id) const {
  auto it = by_id_.find(id);
  if (it == by_id_.end()) throw ValidationError("unknown entity id: " + id);
  return records_[it->second];
}

void EntityCatalog::restrict_types(const TypeVocabulary& vocab) {
  for (auto& rec : records_) {
    std::set<std::string> in_vocab;
    for (const auto& t : rec.types) {
      if (vocab.contains(t)) in_vocab.insert(t);
    }
    rec.types = vocab.closure(in_vocab);
  }
}

namespace {

json parse_line(const std::string& line, const std::string& path, size_t line_no) {
  json j = json::parse(line, nullptr, false);
  if (j.is_discarded()) {
    throw ValidationError(path + ":" + std::to_string(line_no) + ": malformed JSON line");
  }
  return j;
}

std::ifstream open_or_throw(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open file: " + path);
  return in;
}

}  // namespace

EntityCatalog load_entity_catalog(const std::string& path) {
  std::ifstream in = open_or_throw(path);
  EntityCatalog catalog;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j = parse_line(line, path, line_no);
    EntityRecord rec;
    try {
      rec.id = j.at("id").get<std::string>();
      rec.label = j.at("label").get<std::string>();
      rec.description = j.value("description", std::string());
      for (const auto& t : j.value("types", json::array())) {
        rec.types.insert(t.get<std::string>());
      }
    } catch (const json::exception& e) {
      throw ValidationError(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
    try {
      catalog.add(std::move(rec));
    } catch (const ValidationError& e) {
      throw ValidationError(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return catalog;
}

RelationIndex load_relation_catalog(const std::string& path) {
  std::ifstream in = open_or_throw(path);
  RelationIndex index;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j = parse_line(line, path, line_no);
    try {
      index.add(j.at("id").get<std::string>(), j.value("label", std::string()));
    } catch (const json::exception& e) {
      throw ValidationError(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return index;
}

TypeVocabulary load_type_vocabulary(const std::string& vocab_path,
                                    const std::string& hierarchy_path,
                                    const std::string& coarse_map_path) {
  std::ifstream vin = open_or_throw(vocab_path);
  std::vector<std::string> types;
  std::string line;
  while (std::getline(vin, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
    if (!line.empty()) types.push_back(line);
  }

  std::map<std::string, std::set<std::string>> edges;
  std::ifstream hin = open_or_throw(hierarchy_path);
  size_t line_no = 0;
  while (std::getline(hin, line)) {
    ++line_no;
    while (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto tab = line.find('\t');
    if (tab == std::string::npos) {
      throw ValidationError(hierarchy_path + ":" + std::to_string(line_no) +
                            ": expected child<TAB>supertype");
    }
    edges[line.substr(0, tab)].insert(line.substr(tab + 1));
  }

  std::map<std::string, CoarseType> coarse;
  std::ifstream cin_ = open_or_throw(coarse_map_path);
  json cj = json::parse(cin_, nullptr, false);
  if (cj.is_discarded() || !cj.is_object()) {
    throw ValidationError(coarse_map_path + ": expected a JSON object");
  }
  for (auto it = cj.begin(); it != cj.end(); ++it) {
    coarse[it.key()] = coarse_from_name(it.value().get<std::string>());
  }

  return TypeVocabulary(std::move(types), std::move(edges), std::move(coarse));
}

std::vector<AnnotatedDocument> load_dataset(const std::string& path,
                                            const EntityCatalog& catalog) {
  std::ifstream in = open_or_throw(path);
  std::vector<AnnotatedDocument> docs;
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j = parse_line(line, path, line_no);
    AnnotatedDocument doc;
    const std::string where = path + ":" + std::to_string(line_no);
    try {
      for (const auto& t : j.at("tokens")) doc.tokens.push_back(t.get<std::string>());
      for (const auto& m : j.value("mentions", json::array())) {
        GoldMention gm;
        gm.start = m.at(0).get<int>();
        gm.end = m.at(1).get<int>();
        gm.entity_id = m.at(2).get<std::string>();
        doc.gold_mentions.push_back(std::move(gm));
      }
      for (const auto& t : j.value("triples", json::array())) {
        doc.gold_triples.push_back(
            Triple{t.at(0).get<std::string>(), t.at(1).get<std::string>(),
                   t.at(2).get<std::string>()});
      }
    } catch (const json::exception& e) {
      throw ValidationError(where + ": " + e.what());
    }
    const int n = static_cast<int>(doc.tokens.size());
    for (const auto& m : doc.gold_mentions) {
      if (m.start > m.end) {
        throw ValidationError(where + ": mention span (" + std::to_string(m.start) + "," +
                              std::to_string(m.end) + ") has start > end");
      }
      if (m.start < 0 || m.end >= n) {
        throw ValidationError(where + ": mention span (" + std::to_string(m.start) + "," +
                              std::to_string(m.end) + ") out of range for " +
                              std::to_string(n) + " tokens");
      }
      if (!catalog.contains(m.entity_id)) {
        throw ValidationError(where + ": mention entity not in catalog: " + m.entity_id);
      }
    }
    for (const auto& t : doc.gold_triples) {
      if (!catalog.contains(t.subject) || !catalog.contains(t.object)) {
        throw ValidationError(where + ": triple references entity absent from catalog: " +
                              t.subject + " / " + t.object);
      }
    }
    docs.push_back(std::move(doc));
  }
  return docs;
}

std::map<std::string, long> load_frequency_map(const std::string& path) {
  std::ifstream in = open_or_throw(path);
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded() || !j.is_object()) {
    throw ValidationError(path + ": expected a JSON object");
  }
  std::map<std::string, long> freq;
  for (auto it = j.begin(); it != j.end(); ++it) freq[it.key()] = it.value().get<long>();
  return freq;
}

}  // namespace kgx
