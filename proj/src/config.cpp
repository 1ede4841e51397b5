#include "kgx/config.hpp"

#include <fstream>

#include "kgx/common.hpp"

namespace kgx {

using nlohmann::json;

json RunConfig::to_json() const {
  return {
      {"seed", seed},
      {"paths",
       {{"catalog", paths.catalog},
        {"relations", paths.relations},
        {"hierarchy", paths.hierarchy},
        {"coarse_map", paths.coarse_map},
        {"types", paths.types},
        {"train", paths.train},
        {"dev", paths.dev},
        {"test", paths.test},
        {"freq_map", paths.freq_map},
        {"model_dir", paths.model_dir},
        {"thresholds", paths.thresholds},
        {"relation_restriction", paths.relation_restriction}}},
      {"encoder",
       {{"dim", encoder.dim},
        {"ffn_dim", encoder.ffn_dim},
        {"layers", encoder.layers},
        {"max_len", encoder.max_len},
        {"window", encoder.window}}},
      {"mention",
       {{"epochs", mention.epochs},
        {"lr", mention.lr},
        {"batch_docs", mention.batch_docs},
        {"max_span_len", mention.max_span_len},
        {"neg_ratio", mention.neg_ratio},
        {"subsample_above", mention.subsample_above}}},
      {"biencoder",
       {{"epochs", biencoder.epochs},
        {"lr", biencoder.lr},
        {"batch_size", biencoder.batch_size},
        {"beta", biencoder.beta},
        {"gamma", biencoder.gamma},
        {"top_k", biencoder.top_k},
        {"temperature_init", biencoder.temperature_init},
        {"remine_every_epoch", biencoder.remine_every_epoch}}},
      {"crossencoder",
       {{"epochs", crossencoder.epochs},
        {"lr", crossencoder.lr},
        {"batch_mentions", crossencoder.batch_mentions},
        {"rank_negatives", crossencoder.rank_negatives}}},
      {"relation",
       {{"epochs", relation.epochs},
        {"lr", relation.lr},
        {"batch_docs", relation.batch_docs},
        {"type_dim", relation.type_dim},
        {"mode", relation.mode},
        {"negative_pair_ratio", relation.negative_pair_ratio}}},
      {"calibrate",
       {{"beta", calibrate.beta},
        {"grid_start", calibrate.grid_start},
        {"grid_stop", calibrate.grid_stop},
        {"grid_step", calibrate.grid_step},
        {"refine", calibrate.refine},
        {"macro", calibrate.macro}}},
      {"evaluate",
       {{"bootstrap_samples", evaluate.bootstrap_samples},
        {"bootstrap_seed", evaluate.bootstrap_seed},
        {"macro_all_relations", evaluate.macro_all_relations}}},
  };
}

namespace {

// Missing keys keep their defaults; unknown keys are rejected so typos in a
// config file fail loudly.
void check_known(const json& j, std::initializer_list<const char*> known,
                 const std::string& where) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* k : known) ok |= it.key() == k;
    if (!ok) throw ValidationError("unknown config key: " + where + "." + it.key());
  }
}

template <typename T>
void get_to(const json& j, const char* key, T& out) {
  if (j.contains(key)) j.at(key).get_to(out);
}

}  // namespace

RunConfig RunConfig::from_json(const json& j) {
  RunConfig c;
  check_known(j, {"seed", "paths", "encoder", "mention", "biencoder", "crossencoder",
                  "relation", "calibrate", "evaluate"},
              "config");
  get_to(j, "seed", c.seed);
  if (j.contains("paths")) {
    const auto& p = j.at("paths");
    check_known(p,
                {"catalog", "relations", "hierarchy", "coarse_map", "types", "train", "dev",
                 "test", "freq_map", "model_dir", "thresholds", "relation_restriction"},
                "paths");
    get_to(p, "catalog", c.paths.catalog);
    get_to(p, "relations", c.paths.relations);
    get_to(p, "hierarchy", c.paths.hierarchy);
    get_to(p, "coarse_map", c.paths.coarse_map);
    get_to(p, "types", c.paths.types);
    get_to(p, "train", c.paths.train);
    get_to(p, "dev", c.paths.dev);
    get_to(p, "test", c.paths.test);
    get_to(p, "freq_map", c.paths.freq_map);
    get_to(p, "model_dir", c.paths.model_dir);
    get_to(p, "thresholds", c.paths.thresholds);
    get_to(p, "relation_restriction", c.paths.relation_restriction);
  }
  if (j.contains("encoder")) {
    const auto& e = j.at("encoder");
    check_known(e, {"dim", "ffn_dim", "layers", "max_len", "window"}, "encoder");
    get_to(e, "dim", c.encoder.dim);
    get_to(e, "ffn_dim", c.encoder.ffn_dim);
    get_to(e, "layers", c.encoder.layers);
    get_to(e, "max_len", c.encoder.max_len);
    get_to(e, "window", c.encoder.window);
  }
  if (j.contains("mention")) {
    const auto& m = j.at("mention");
    check_known(m, {"epochs", "lr", "batch_docs", "max_span_len", "neg_ratio", "subsample_above"},
                "mention");
    get_to(m, "epochs", c.mention.epochs);
    get_to(m, "lr", c.mention.lr);
    get_to(m, "batch_docs", c.mention.batch_docs);
    get_to(m, "max_span_len", c.mention.max_span_len);
    get_to(m, "neg_ratio", c.mention.neg_ratio);
    get_to(m, "subsample_above", c.mention.subsample_above);
  }
  if (j.contains("biencoder")) {
    const auto& b = j.at("biencoder");
    check_known(b,
                {"epochs", "lr", "batch_size", "beta", "gamma", "top_k", "temperature_init",
                 "remine_every_epoch"},
                "biencoder");
    get_to(b, "epochs", c.biencoder.epochs);
    get_to(b, "lr", c.biencoder.lr);
    get_to(b, "batch_size", c.biencoder.batch_size);
    get_to(b, "beta", c.biencoder.beta);
    get_to(b, "gamma", c.biencoder.gamma);
    get_to(b, "top_k", c.biencoder.top_k);
    get_to(b, "temperature_init", c.biencoder.temperature_init);
    get_to(b, "remine_every_epoch", c.biencoder.remine_every_epoch);
  }
  if (j.contains("crossencoder")) {
    const auto& x = j.at("crossencoder");
    check_known(x, {"epochs", "lr", "batch_mentions", "rank_negatives"}, "crossencoder");
    get_to(x, "epochs", c.crossencoder.epochs);
    get_to(x, "lr", c.crossencoder.lr);
    get_to(x, "batch_mentions", c.crossencoder.batch_mentions);
    get_to(x, "rank_negatives", c.crossencoder.rank_negatives);
  }
  if (j.contains("relation")) {
    const auto& r = j.at("relation");
    check_known(r, {"epochs", "lr", "batch_docs", "type_dim", "mode", "negative_pair_ratio"},
                "relation");
    get_to(r, "epochs", c.relation.epochs);
    get_to(r, "lr", c.relation.lr);
    get_to(r, "batch_docs", c.relation.batch_docs);
    get_to(r, "type_dim", c.relation.type_dim);
    get_to(r, "mode", c.relation.mode);
    get_to(r, "negative_pair_ratio", c.relation.negative_pair_ratio);
  }
  if (j.contains("calibrate")) {
    const auto& g = j.at("calibrate");
    check_known(g, {"beta", "grid_start", "grid_stop", "grid_step", "refine", "macro"},
                "calibrate");
    get_to(g, "beta", c.calibrate.beta);
    get_to(g, "grid_start", c.calibrate.grid_start);
    get_to(g, "grid_stop", c.calibrate.grid_stop);
    get_to(g, "grid_step", c.calibrate.grid_step);
    get_to(g, "refine", c.calibrate.refine);
    get_to(g, "macro", c.calibrate.macro);
  }
  if (j.contains("evaluate")) {
    const auto& e = j.at("evaluate");
    check_known(e, {"bootstrap_samples", "bootstrap_seed", "macro_all_relations"}, "evaluate");
    get_to(e, "bootstrap_samples", c.evaluate.bootstrap_samples);
    get_to(e, "bootstrap_seed", c.evaluate.bootstrap_seed);
    get_to(e, "macro_all_relations", c.evaluate.macro_all_relations);
  }
  return c;
}

void RunConfig::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write file: " + path);
  out << to_json().dump(2) << "\n";
}

RunConfig RunConfig::load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open config file: " + path);
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded()) throw ValidationError("malformed config JSON: " + path);
  return from_json(j);
}

}  // namespace kgx
