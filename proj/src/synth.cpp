#include "kgx/synth.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "json.hpp"

namespace kgx {

namespace {

const char* kSyllables[] = {"ka", "vel", "dor", "mi",  "ran", "zo",  "ta", "lin",
                            "bur", "sel", "na",  "gos", "pre", "ul",  "tas", "ver",
                            "ol",  "min", "qua", "fen", "ri",  "mak", "su", "tor",
                            "eb",  "yal", "cho", "wis", "pol", "dra"};

std::string make_word(Rng& rng, std::set<std::string>& used) {
  for (int attempt = 0; attempt < 1000; ++attempt) {
    const int syllables = 2 + static_cast<int>(rng.next_below(2));
    std::string w;
    for (int s = 0; s < syllables; ++s) {
      w += kSyllables[rng.next_below(std::size(kSyllables))];
    }
    if (used.insert(w).second) return w;
  }
  throw ValidationError("word pool exhausted");
}

std::vector<std::string> make_words(Rng& rng, std::set<std::string>& used, int count) {
  std::vector<std::string> out;
  out.reserve(static_cast<size_t>(count));
  for (int i = 0; i < count; ++i) out.push_back(make_word(rng, used));
  return out;
}

struct RelationPlan {
  bool determined = false;
  int group = -1;              // shared-template group for determined relations
  std::string subj_type, obj_type;  // signature when determined
};

struct TemplatePlan {
  // tokens with "X"/"Y" placeholders
  std::vector<std::string> tokens;
};

struct EntityPlan {
  std::string id;
  std::vector<std::string> label;  // two name words
  std::string primary_type;
  bool heldout = false;
};

}  // namespace

SynthOutput generate(const SynthSpec& spec) {
  if (spec.n_types < 8) throw ValidationError("infeasible spec: need at least 8 types");
  if (spec.n_relations < 1 || spec.n_entities < 1 || spec.templates_per_relation < 1) {
    throw ValidationError("infeasible spec: counts must be >= 1");
  }
  if (spec.n_entities < 3 * (spec.n_types - 4)) {
    throw ValidationError("infeasible spec: more types than entities can carry");
  }
  if (spec.type_determinism < 0.0 || spec.type_determinism > 1.0) {
    throw ValidationError("type_determinism must be in [0,1]");
  }

  Rng root(spec.seed);
  std::set<std::string> used_words;

  SynthOutput out;

  // ---- type system: four coarse families, chains inside each family ----
  const CoarseType kFamilies[4] = {CoarseType::PER, CoarseType::ORG, CoarseType::LOC,
                                   CoarseType::MISC};
  Rng type_rng = root.fork(1);
  std::vector<std::string> type_words = make_words(type_rng, used_words, spec.n_types);
  std::vector<std::string> family_root(4);
  std::vector<std::vector<std::string>> family_members(4);  // excluding roots
  for (int f = 0; f < 4; ++f) {
    family_root[static_cast<size_t>(f)] = "T_" + type_words[static_cast<size_t>(f)];
    out.type_list.push_back(family_root[static_cast<size_t>(f)]);
  }
  for (int i = 4; i < spec.n_types; ++i) {
    const int f = (i - 4) % 4;
    const std::string id = "T_" + type_words[static_cast<size_t>(i)];
    auto& members = family_members[static_cast<size_t>(f)];
    // chain to the previous member half of the time for depth > 2
    std::string parent = family_root[static_cast<size_t>(f)];
    if (!members.empty() && type_rng.next_double() < 0.5) parent = members.back();
    out.supertype_edges[id].insert(parent);
    members.push_back(id);
    out.type_list.push_back(id);
  }
  // coarse map: family class for everything except two MISC members, which
  // exercise the MISC default
  int unmapped_left = 2;
  for (int f = 0; f < 4; ++f) {
    out.coarse_map[family_root[static_cast<size_t>(f)]] = coarse_name(kFamilies[f]);
    for (const auto& t : family_members[static_cast<size_t>(f)]) {
      if (kFamilies[f] == CoarseType::MISC && unmapped_left > 0) {
        --unmapped_left;
        continue;
      }
      out.coarse_map[t] = coarse_name(kFamilies[f]);
    }
  }

  std::map<std::string, CoarseType> coarse_typed;
  for (const auto& [t, name] : out.coarse_map) coarse_typed[t] = coarse_from_name(name);
  out.vocab = TypeVocabulary(out.type_list, out.supertype_edges, coarse_typed);

  // ---- relations: power-law weights, determined ones grouped ----
  Rng rel_rng = root.fork(2);
  const int R = spec.n_relations;
  const int determined_count =
      static_cast<int>(std::lround(spec.type_determinism * R));
  std::vector<RelationPlan> plans(static_cast<size_t>(R));
  std::vector<int> determined_ranks;
  for (int i = 0; i < R && static_cast<int>(determined_ranks.size()) < determined_count; i += 2) {
    determined_ranks.push_back(i);
  }
  for (int i = 1; i < R && static_cast<int>(determined_ranks.size()) < determined_count; i += 2) {
    determined_ranks.push_back(i);
  }

  // Types that carry the distinguishing half of a signature stay unique
  // across all groups; the shared half may repeat.
  std::set<std::string> used_diff;
  auto available_in = [&](int family) {
    std::vector<std::string> out;
    for (const auto& t : family_members[static_cast<size_t>(family)]) {
      if (!used_diff.count(t)) out.push_back(t);
    }
    return out;
  };
  auto pick_shared = [&]() -> std::string {
    std::vector<std::string> fresh, any;
    for (int f = 0; f < 4; ++f) {
      for (const auto& t : family_members[static_cast<size_t>(f)]) {
        any.push_back(t);
        if (!used_diff.count(t)) fresh.push_back(t);
      }
    }
    if (!fresh.empty()) return fresh[rel_rng.next_below(fresh.size())];
    if (!any.empty()) return any[rel_rng.next_below(any.size())];
    throw ValidationError("infeasible spec: no non-root types");
  };

  const int group_count = (static_cast<int>(determined_ranks.size()) + 1) / 2;
  for (int g = 0; g < group_count; ++g) {
    const int a = determined_ranks[static_cast<size_t>(2 * g)];
    const int b = 2 * g + 1 < static_cast<int>(determined_ranks.size())
                      ? determined_ranks[static_cast<size_t>(2 * g + 1)]
                      : -1;
    plans[static_cast<size_t>(a)].determined = true;
    plans[static_cast<size_t>(a)].group = g;
    if (b >= 0) {
      plans[static_cast<size_t>(b)].determined = true;
      plans[static_cast<size_t>(b)].group = g;
    }

    // group 0 differs within one coarse family (fine types required); later
    // groups differ across families (coarse types suffice); they alternate
    // which slot carries the difference
    const bool fine_only = g == 0;
    const bool differ_subject = g % 2 == 0;

    std::string t1, t2;
    std::vector<int> two_member_families, nonempty_families;
    for (int f = 0; f < 4; ++f) {
      const size_t n = available_in(f).size();
      if (n >= 2) two_member_families.push_back(f);
      if (n >= 1) nonempty_families.push_back(f);
    }
    if (fine_only && !two_member_families.empty()) {
      const int f = two_member_families[rel_rng.next_below(two_member_families.size())];
      auto avail = available_in(f);
      const size_t i1 = rel_rng.next_below(avail.size());
      t1 = avail[i1];
      avail.erase(avail.begin() + static_cast<long>(i1));
      t2 = avail[rel_rng.next_below(avail.size())];
    } else if (nonempty_families.size() >= 2) {
      const size_t i1 = rel_rng.next_below(nonempty_families.size());
      const int f1 = nonempty_families[i1];
      nonempty_families.erase(nonempty_families.begin() + static_cast<long>(i1));
      const int f2 = nonempty_families[rel_rng.next_below(nonempty_families.size())];
      auto a1 = available_in(f1);
      auto a2 = available_in(f2);
      t1 = a1[rel_rng.next_below(a1.size())];
      t2 = a2[rel_rng.next_below(a2.size())];
      if (fine_only) {
        std::cerr << "warning: not enough types in one family; group " << g
                  << " is coarse-separable\n";
      }
    } else if (!two_member_families.empty()) {
      const int f = two_member_families[rel_rng.next_below(two_member_families.size())];
      auto avail = available_in(f);
      const size_t i1 = rel_rng.next_below(avail.size());
      t1 = avail[i1];
      avail.erase(avail.begin() + static_cast<long>(i1));
      t2 = avail[rel_rng.next_below(avail.size())];
    } else {
      throw ValidationError("infeasible spec: not enough distinct types for signatures");
    }
    used_diff.insert(t1);
    used_diff.insert(t2);
    const std::string shared = pick_shared();

    if (differ_subject) {
      plans[static_cast<size_t>(a)].subj_type = t1;
      plans[static_cast<size_t>(a)].obj_type = shared;
      if (b >= 0) {
        plans[static_cast<size_t>(b)].subj_type = t2;
        plans[static_cast<size_t>(b)].obj_type = shared;
      }
    } else {
      plans[static_cast<size_t>(a)].subj_type = shared;
      plans[static_cast<size_t>(a)].obj_type = t1;
      if (b >= 0) {
        plans[static_cast<size_t>(b)].subj_type = shared;
        plans[static_cast<size_t>(b)].obj_type = t2;
      }
    }
  }

  std::vector<std::string> relation_words = make_words(rel_rng, used_words, R);
  for (int i = 0; i < R; ++i) {
    out.relations.add("P" + std::to_string(100 + i), relation_words[static_cast<size_t>(i)]);
  }

  // ---- templates: one pool per template group ----
  // groups: one per determined group, one per undetermined relation
  Rng tmpl_rng = root.fork(3);
  std::vector<std::string> fillers = make_words(tmpl_rng, used_words, 6);
  std::map<int, std::vector<TemplatePlan>> group_templates;   // determined groups
  std::map<int, std::vector<TemplatePlan>> solo_templates;    // undetermined relations
  auto build_templates = [&](std::vector<TemplatePlan>& dst) {
    std::vector<std::string> pool =
        make_words(tmpl_rng, used_words, spec.templates_per_relation + 2);
    for (int t = 0; t < spec.templates_per_relation; ++t) {
      TemplatePlan plan;
      if (tmpl_rng.next_double() < 0.3) {
        plan.tokens.push_back(fillers[tmpl_rng.next_below(fillers.size())]);
      }
      plan.tokens.push_back("X");
      plan.tokens.push_back(pool[tmpl_rng.next_below(pool.size())]);
      if (tmpl_rng.next_double() < 0.5) {
        plan.tokens.push_back(pool[tmpl_rng.next_below(pool.size())]);
      }
      plan.tokens.push_back("Y");
      if (tmpl_rng.next_double() < 0.4) {
        plan.tokens.push_back(pool[tmpl_rng.next_below(pool.size())]);
      }
      plan.tokens.push_back(".");
      dst.push_back(std::move(plan));
    }
  };
  for (int g = 0; g < group_count; ++g) build_templates(group_templates[g]);
  for (int i = 0; i < R; ++i) {
    if (!plans[static_cast<size_t>(i)].determined) build_templates(solo_templates[i]);
  }
  std::vector<std::string> distractor_pool = make_words(tmpl_rng, used_words, 4);

  // ---- entities ----
  Rng ent_rng = root.fork(4);
  std::vector<std::string> name_words =
      make_words(ent_rng, used_words, std::max(40, spec.n_entities / 6));
  std::vector<std::string> desc_words = make_words(ent_rng, used_words, 60);

  std::vector<std::string> nonroot_types;
  for (int f = 0; f < 4; ++f) {
    for (const auto& t : family_members[static_cast<size_t>(f)]) nonroot_types.push_back(t);
  }

  std::vector<EntityPlan> entities;
  std::set<std::pair<std::string, std::string>> used_labels;
  for (int i = 0; i < spec.n_entities; ++i) {
    EntityPlan e;
    e.id = "Q" + std::to_string(1000 + i);
    for (int attempt = 0;; ++attempt) {
      if (attempt > 2000) throw ValidationError("cannot build unique entity labels");
      const auto& w1 = name_words[ent_rng.next_below(name_words.size())];
      const auto& w2 = name_words[ent_rng.next_below(name_words.size())];
      if (w1 == w2) continue;
      if (used_labels.insert({w1, w2}).second) {
        e.label = {w1, w2};
        break;
      }
    }
    e.primary_type = nonroot_types[static_cast<size_t>(i) % nonroot_types.size()];
    entities.push_back(std::move(e));
  }
  // hold out a fraction of each type's entities from training docs
  std::map<std::string, std::vector<int>> by_type;
  for (size_t i = 0; i < entities.size(); ++i) {
    by_type[entities[i].primary_type].push_back(static_cast<int>(i));
  }
  for (auto& [type, members] : by_type) {
    const int hold = static_cast<int>(
        std::lround(spec.heldout_entity_fraction * static_cast<double>(members.size())));
    for (int h = 0; h < hold; ++h) {
      entities[static_cast<size_t>(members[members.size() - 1 - static_cast<size_t>(h)])]
          .heldout = true;
    }
  }

  for (const auto& e : entities) {
    EntityRecord rec;
    rec.id = e.id;
    rec.label = e.label[0] + " " + e.label[1];
    const int n_desc = 3 + static_cast<int>(ent_rng.next_below(3));
    for (int d = 0; d < n_desc; ++d) {
      if (d > 0) rec.description += " ";
      rec.description += desc_words[ent_rng.next_below(desc_words.size())];
    }
    rec.types = {e.primary_type};
    out.base_types[e.id] = rec.types;
    out.catalog.add(std::move(rec));
  }
  out.catalog.restrict_types(out.vocab);

  // ---- document sampling ----
  std::vector<double> weights(static_cast<size_t>(R));
  for (int i = 0; i < R; ++i) {
    weights[static_cast<size_t>(i)] = std::pow(static_cast<double>(i + 1), -spec.power_exponent);
  }

  // per relation: visible / held-out entity pools per slot
  auto slot_pool = [&](const std::string& sig_type, bool heldout) {
    std::vector<int> pool;
    for (size_t i = 0; i < entities.size(); ++i) {
      if (entities[i].heldout != heldout) continue;
      if (!sig_type.empty() && entities[i].primary_type != sig_type) continue;
      pool.push_back(static_cast<int>(i));
    }
    return pool;
  };
  struct Pools {
    std::vector<int> subj_vis, subj_held, obj_vis, obj_held;
  };
  std::vector<Pools> pools(static_cast<size_t>(R));
  for (int r = 0; r < R; ++r) {
    const auto& plan = plans[static_cast<size_t>(r)];
    pools[static_cast<size_t>(r)].subj_vis = slot_pool(plan.subj_type, false);
    pools[static_cast<size_t>(r)].subj_held = slot_pool(plan.subj_type, true);
    pools[static_cast<size_t>(r)].obj_vis = slot_pool(plan.obj_type, false);
    pools[static_cast<size_t>(r)].obj_held = slot_pool(plan.obj_type, true);
    if (pools[static_cast<size_t>(r)].subj_vis.empty() ||
        pools[static_cast<size_t>(r)].obj_vis.empty()) {
      throw ValidationError("infeasible spec: relation " + out.relations.id_of(r) +
                            " has an empty entity pool");
    }
  }

  auto render_split = [&](int n_docs, bool eval_split, uint64_t salt) {
    Rng rng = root.fork(salt);
    std::vector<AnnotatedDocument> docs;
    docs.reserve(static_cast<size_t>(n_docs));
    for (int d = 0; d < n_docs; ++d) {
      AnnotatedDocument doc;
      const double roll = rng.next_double();
      int n_triples = roll < 0.45 ? 1 : roll < 0.80 ? 2 : 3;
      n_triples = std::min(n_triples, spec.max_triples_per_doc);

      std::set<Triple> seen;
      struct Planned {
        int rel;
        int subj, obj;
      };
      std::vector<Planned> planned;
      for (int t = 0; t < n_triples; ++t) {
        for (int attempt = 0; attempt < 60; ++attempt) {
          const int r = static_cast<int>(rng.next_weighted(weights));
          const auto& pl = pools[static_cast<size_t>(r)];
          const bool subj_held = eval_split && !pl.subj_held.empty() &&
                                 rng.next_double() < spec.eval_unseen_prob;
          const bool obj_held = eval_split && !pl.obj_held.empty() &&
                                rng.next_double() < spec.eval_unseen_prob;
          const auto& subj_pool = subj_held ? pl.subj_held : pl.subj_vis;
          const auto& obj_pool = obj_held ? pl.obj_held : pl.obj_vis;
          const int subj = subj_pool[rng.next_below(subj_pool.size())];
          const int obj = obj_pool[rng.next_below(obj_pool.size())];
          if (subj == obj) continue;
          Triple triple{entities[static_cast<size_t>(subj)].id, out.relations.id_of(r),
                        entities[static_cast<size_t>(obj)].id};
          if (!seen.insert(triple).second) continue;
          planned.push_back({r, subj, obj});
          doc.gold_triples.push_back(std::move(triple));
          break;
        }
      }

      for (const auto& p : planned) {
        const auto& plan = plans[static_cast<size_t>(p.rel)];
        const auto& templates =
            plan.determined ? group_templates[plan.group] : solo_templates[p.rel];
        const TemplatePlan& tmpl = templates[rng.next_below(templates.size())];
        for (const auto& tok : tmpl.tokens) {
          if (tok == "X" || tok == "Y") {
            const auto& e = entities[static_cast<size_t>(tok == "X" ? p.subj : p.obj)];
            const int start = static_cast<int>(doc.tokens.size());
            doc.tokens.push_back(e.label[0]);
            doc.tokens.push_back(e.label[1]);
            doc.gold_mentions.push_back({start, start + 1, e.id});
          } else {
            doc.tokens.push_back(tok);
          }
        }
      }

      // optional mention-only sentence: an entity with no relation
      if (rng.next_double() < spec.distractor_prob) {
        // visible entities only in train, anything at eval time
        for (int attempt = 0; attempt < 20; ++attempt) {
          const auto& e = entities[rng.next_below(entities.size())];
          if (!eval_split && e.heldout) continue;
          doc.tokens.push_back(distractor_pool[rng.next_below(distractor_pool.size())]);
          const int start = static_cast<int>(doc.tokens.size());
          doc.tokens.push_back(e.label[0]);
          doc.tokens.push_back(e.label[1]);
          doc.gold_mentions.push_back({start, start + 1, e.id});
          doc.tokens.push_back(distractor_pool[rng.next_below(distractor_pool.size())]);
          doc.tokens.push_back(".");
          break;
        }
      }
      if (!doc.tokens.empty()) docs.push_back(std::move(doc));
    }
    return docs;
  };

  out.train = render_split(spec.n_train_docs, false, 10);
  out.dev = render_split(spec.n_dev_docs, true, 11);
  out.test = render_split(spec.n_test_docs, true, 12);

  for (const auto& id : out.relations.ids()) out.train_frequency[id] = 0;
  for (const auto& doc : out.train) {
    for (const auto& t : doc.gold_triples) ++out.train_frequency[t.relation];
  }
  return out;
}

void write_synth_files(const SynthOutput& output, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  auto open = [&](const std::string& name) {
    std::ofstream f(fs::path(dir) / name);
    if (!f) throw ValidationError("cannot write file: " + (fs::path(dir) / name).string());
    return f;
  };

  {
    auto f = open("catalog.jsonl");
    for (const auto& rec : output.catalog.records()) {
      nlohmann::json j = {{"id", rec.id},
                          {"label", rec.label},
                          {"description", rec.description},
                          {"types", output.base_types.at(rec.id)}};
      f << j.dump() << "\n";
    }
  }
  {
    auto f = open("relations.jsonl");
    for (const auto& id : output.relations.ids()) {
      nlohmann::json j = {{"id", id}, {"label", output.relations.label_of(id)}};
      f << j.dump() << "\n";
    }
  }
  {
    auto f = open("types.txt");
    for (const auto& t : output.type_list) f << t << "\n";
  }
  {
    auto f = open("hierarchy.tsv");
    for (const auto& [child, supers] : output.supertype_edges) {
      for (const auto& s : supers) f << child << "\t" << s << "\n";
    }
  }
  {
    auto f = open("coarse_map.json");
    f << nlohmann::json(output.coarse_map).dump(2) << "\n";
  }
  auto write_docs = [&](const std::string& name, const std::vector<AnnotatedDocument>& docs) {
    auto f = open(name);
    for (const auto& doc : docs) {
      nlohmann::json mentions = nlohmann::json::array();
      for (const auto& m : doc.gold_mentions) {
        mentions.push_back({m.start, m.end, m.entity_id});
      }
      nlohmann::json triples = nlohmann::json::array();
      for (const auto& t : doc.gold_triples) {
        triples.push_back({t.subject, t.relation, t.object});
      }
      nlohmann::json j = {{"tokens", doc.tokens}, {"mentions", mentions}, {"triples", triples}};
      f << j.dump() << "\n";
    }
  };
  write_docs("train.jsonl", output.train);
  write_docs("dev.jsonl", output.dev);
  write_docs("test.jsonl", output.test);
  {
    auto f = open("freq_map.json");
    f << nlohmann::json(output.train_frequency).dump(2) << "\n";
  }
}

}  // namespace kgx
