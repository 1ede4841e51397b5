#include "kgx/cli.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "json.hpp"
#include "kgx/config.hpp"
#include "kgx/pipeline.hpp"
#include "kgx/synth.hpp"

namespace kgx::cli {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct World {
  EntityCatalog catalog;
  RelationIndex relations;
  TypeVocabulary vocab;
};

World load_world(const RunConfig& cfg) {
  World w;
  w.catalog = load_entity_catalog(cfg.paths.catalog);
  w.relations = load_relation_catalog(cfg.paths.relations);
  w.vocab = load_type_vocabulary(cfg.paths.types, cfg.paths.hierarchy, cfg.paths.coarse_map);
  w.catalog.restrict_types(w.vocab);
  return w;
}

Tokenizer build_tokenizer(const EntityCatalog& catalog,
                          const std::vector<AnnotatedDocument>& train_docs) {
  Tokenizer tok;
  std::istringstream words;
  for (const auto& rec : catalog.records()) {
    std::istringstream ls(rec.label + " " + rec.description);
    std::string w;
    while (ls >> w) tok.add_word(w);
  }
  for (const auto& doc : train_docs) {
    for (const auto& t : doc.tokens) tok.add_word(t);
  }
  return tok;
}

EncoderConfig encoder_config(const RunConfig& cfg, int vocab_size, uint64_t stage_salt) {
  EncoderConfig e;
  e.vocab_size = vocab_size;
  e.dim = cfg.encoder.dim;
  e.ffn_dim = cfg.encoder.ffn_dim;
  e.layers = cfg.encoder.layers;
  e.max_len = cfg.encoder.max_len;
  e.seed = cfg.seed * 10 + stage_salt;
  return e;
}

std::string model_path(const RunConfig& cfg, const std::string& name) {
  return (fs::path(cfg.paths.model_dir) / name).string();
}

void require_file(const std::string& path, const std::string& what) {
  if (path.empty()) throw ValidationError("missing config key: " + what);
  if (!fs::exists(path)) throw ValidationError("missing file for " + what + ": " + path);
}

void write_loss_trace(const RunConfig& cfg, const std::string& stage,
                      const std::vector<double>& trace) {
  std::ofstream out(model_path(cfg, stage + "_loss.json"));
  out << json(trace).dump() << "\n";
}

std::set<std::string> load_restriction(const RunConfig& cfg) {
  std::set<std::string> out;
  if (cfg.paths.relation_restriction.empty()) return out;
  std::ifstream in(cfg.paths.relation_restriction);
  if (!in) throw ValidationError("cannot open file: " + cfg.paths.relation_restriction);
  std::string line;
  while (std::getline(in, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
    if (!line.empty()) out.insert(line);
  }
  return out;
}

// ---- training ------------------------------------------------------------

void train_mention(const RunConfig& cfg, const World& world,
                   const std::vector<AnnotatedDocument>& train_docs) {
  Tokenizer tok = build_tokenizer(world.catalog, train_docs);
  MentionModel model(tok, encoder_config(cfg, tok.vocab_size(), 1), cfg.seed + 11);
  MentionTrainConfig tc;
  tc.epochs = cfg.mention.epochs;
  tc.lr = cfg.mention.lr;
  tc.batch_docs = cfg.mention.batch_docs;
  tc.max_span_len = cfg.mention.max_span_len;
  tc.neg_ratio = cfg.mention.neg_ratio;
  tc.subsample_above = cfg.mention.subsample_above;
  tc.seed = cfg.seed;
  auto trace = model.train(train_docs, tc);
  model.save(model_path(cfg, "mention.ckpt"));
  write_loss_trace(cfg, "mention", trace);
  std::cout << "mention: " << trace.size() << " epochs, final loss " << trace.back() << "\n";
}

void train_biencoder(const RunConfig& cfg, const World& world,
                     const std::vector<AnnotatedDocument>& train_docs) {
  Tokenizer tok = build_tokenizer(world.catalog, train_docs);
  BiEncoderModel model(tok, encoder_config(cfg, tok.vocab_size(), 2), cfg.encoder.window,
                       cfg.biencoder.temperature_init);
  BiEncoderTrainConfig tc;
  tc.epochs = cfg.biencoder.epochs;
  tc.lr = cfg.biencoder.lr;
  tc.batch_size = cfg.biencoder.batch_size;
  tc.mine_after = cfg.biencoder.beta;
  tc.gamma = cfg.biencoder.gamma;
  tc.remine_every_epoch = cfg.biencoder.remine_every_epoch;
  tc.seed = cfg.seed;
  auto trace = model.train(train_docs, world.catalog, tc);
  model.save(model_path(cfg, "biencoder.ckpt"));
  write_loss_trace(cfg, "biencoder", trace);
  VectorIndex index = model.embed_all_entities(world.catalog);
  index.save(model_path(cfg, "index.bin"));
  std::cout << "biencoder: " << trace.size() << " epochs, final loss " << trace.back()
            << "; index of " << index.size() << " entities\n";
}

void train_crossencoder(const RunConfig& cfg, const World& world,
                        const std::vector<AnnotatedDocument>& train_docs) {
  require_file(model_path(cfg, "biencoder.ckpt"), "biencoder checkpoint");
  require_file(model_path(cfg, "index.bin"), "vector index");
  BiEncoderModel bi = BiEncoderModel::load_file(model_path(cfg, "biencoder.ckpt"));
  VectorIndex index = VectorIndex::load_file(model_path(cfg, "index.bin"));
  Tokenizer tok = build_tokenizer(world.catalog, train_docs);
  CrossEncoderModel model(tok, encoder_config(cfg, tok.vocab_size(), 3), cfg.encoder.window,
                          cfg.seed + 13);
  CrossEncoderTrainConfig tc;
  tc.epochs = cfg.crossencoder.epochs;
  tc.lr = cfg.crossencoder.lr;
  tc.batch_mentions = cfg.crossencoder.batch_mentions;
  tc.negatives_per_mention = cfg.crossencoder.rank_negatives;
  tc.seed = cfg.seed;
  auto trace = model.train(train_docs, world.catalog, bi, index, tc);
  model.save(model_path(cfg, "crossencoder.ckpt"));
  write_loss_trace(cfg, "crossencoder", trace);
  std::cout << "crossencoder: " << trace.size() << " epochs, final loss " << trace.back() << "\n";
}

void train_relation(const RunConfig& cfg, const World& world,
                    const std::vector<AnnotatedDocument>& train_docs,
                    const std::string& mode_name) {
  require_file(model_path(cfg, "crossencoder.ckpt"), "crossencoder checkpoint");
  CrossEncoderModel cross = CrossEncoderModel::load_file(model_path(cfg, "crossencoder.ckpt"));
  const RelationMode mode = relation_mode_from_name(mode_name);
  RelationModel model(world.relations, world.vocab, mode, cfg.encoder.dim, cfg.relation.type_dim,
                      cfg.seed + 17);
  RelationTrainConfig tc;
  tc.epochs = cfg.relation.epochs;
  tc.lr = cfg.relation.lr;
  tc.batch_docs = cfg.relation.batch_docs;
  tc.negative_pair_ratio = cfg.relation.negative_pair_ratio;
  tc.seed = cfg.seed;
  auto trace = model.train(train_docs, world.catalog, cross, tc);
  model.save(model_path(cfg, "relation_" + mode_name + ".ckpt"));
  write_loss_trace(cfg, "relation_" + mode_name, trace);
  std::cout << "relation[" << mode_name << "]: " << trace.size() << " epochs, final loss "
            << trace.back() << "\n";
}

// ---- inference plumbing ----------------------------------------------------

struct LoadedPipeline {
  MentionModel mention;
  BiEncoderModel biencoder;
  VectorIndex index;
  CrossEncoderModel cross;
  RelationModel relation;
  std::set<std::string> restriction;

  LoadedPipeline(const RunConfig& cfg, const std::string& mode_name)
      : mention(MentionModel::load_file(model_path(cfg, "mention.ckpt"))),
        biencoder(BiEncoderModel::load_file(model_path(cfg, "biencoder.ckpt"))),
        index(VectorIndex::load_file(model_path(cfg, "index.bin"))),
        cross(CrossEncoderModel::load_file(model_path(cfg, "crossencoder.ckpt"))),
        relation(RelationModel::load_file(model_path(cfg, "relation_" + mode_name + ".ckpt"))),
        restriction(load_restriction(cfg)) {}

  PipelineModels models(const RunConfig& cfg, const EntityCatalog& catalog) const {
    PipelineModels m;
    m.upstream.mention = &mention;
    m.upstream.biencoder = &biencoder;
    m.upstream.index = &index;
    m.upstream.cross = &cross;
    m.upstream.catalog = &catalog;
    m.upstream.top_k = cfg.biencoder.top_k;
    m.upstream.max_span_len = cfg.mention.max_span_len;
    m.relation = &relation;
    m.relation_restriction = restriction;
    return m;
  }
};

void check_pipeline_files(const RunConfig& cfg, const std::string& mode_name) {
  require_file(model_path(cfg, "mention.ckpt"), "mention checkpoint");
  require_file(model_path(cfg, "biencoder.ckpt"), "biencoder checkpoint");
  require_file(model_path(cfg, "index.bin"), "vector index");
  require_file(model_path(cfg, "crossencoder.ckpt"), "crossencoder checkpoint");
  require_file(model_path(cfg, "relation_" + mode_name + ".ckpt"),
               "relation checkpoint (mode " + mode_name + ")");
}

std::vector<StagedDocument> stage_docs(const PipelineModels& models,
                                       const std::vector<AnnotatedDocument>& docs,
                                       double min_epsilon_m) {
  const bool nodesc = models.relation->mode() == RelationMode::NO_DESC;
  std::vector<StagedDocument> out;
  out.reserve(docs.size());
  for (const auto& doc : docs) {
    UpstreamStagedDoc up = stage_upstream(models.upstream, doc.tokens, min_epsilon_m, nodesc);
    out.push_back(score_relations(*models.relation, up, models.relation_restriction));
  }
  return out;
}

Thresholds calibrate_for(const RunConfig& cfg, const PipelineModels& models,
                         const std::vector<AnnotatedDocument>& dev_docs, double beta) {
  GridSpec grid;
  grid.start = cfg.calibrate.grid_start;
  grid.stop = cfg.calibrate.grid_stop;
  grid.step = cfg.calibrate.grid_step;
  grid.refine = cfg.calibrate.refine;
  // staging keeps every span reachable by the searched grid
  auto staged = stage_docs(models, dev_docs, grid.start);
  std::vector<TripleList> gold;
  gold.reserve(dev_docs.size());
  for (const auto& d : dev_docs) gold.push_back(d.gold_triples);
  return calibrate_thresholds(staged, gold, models.relation->relations(), beta, grid,
                              cfg.calibrate.macro);
}

json report_json(const MetricReport& r) {
  json per = json::object();
  for (const auto& [rel, pr] : r.per_relation) {
    per[rel] = {{"precision", pr.precision},
                {"recall", pr.recall},
                {"f1", pr.f1},
                {"support", pr.support}};
  }
  return {{"level", r.level},      {"precision", r.precision}, {"recall", r.recall},
          {"f1", r.f1},            {"f2", r.f2},               {"per_relation", per}};
}

// ---- subcommand bodies -----------------------------------------------------

int cmd_synth(const SynthSpec& spec, const std::string& out_dir) {
  SynthOutput out = generate(spec);
  write_synth_files(out, out_dir);

  // a ready-to-edit config pointing at the generated files
  RunConfig cfg;
  cfg.seed = spec.seed;
  cfg.paths.catalog = (fs::path(out_dir) / "catalog.jsonl").string();
  cfg.paths.relations = (fs::path(out_dir) / "relations.jsonl").string();
  cfg.paths.hierarchy = (fs::path(out_dir) / "hierarchy.tsv").string();
  cfg.paths.coarse_map = (fs::path(out_dir) / "coarse_map.json").string();
  cfg.paths.types = (fs::path(out_dir) / "types.txt").string();
  cfg.paths.train = (fs::path(out_dir) / "train.jsonl").string();
  cfg.paths.dev = (fs::path(out_dir) / "dev.jsonl").string();
  cfg.paths.test = (fs::path(out_dir) / "test.jsonl").string();
  cfg.paths.freq_map = (fs::path(out_dir) / "freq_map.json").string();
  cfg.paths.model_dir = (fs::path(out_dir) / "models").string();
  cfg.paths.thresholds = (fs::path(out_dir) / "thresholds.json").string();
  cfg.save((fs::path(out_dir) / "config.json").string());
  fs::create_directories(cfg.paths.model_dir);

  std::cout << "synth: " << out.catalog.size() << " entities, " << out.relations.size()
            << " relations, " << out.train.size() << "/" << out.dev.size() << "/"
            << out.test.size() << " train/dev/test docs -> " << out_dir << "\n";
  return 0;
}

int cmd_train(const RunConfig& cfg, const std::string& stage) {
  require_file(cfg.paths.catalog, "paths.catalog");
  require_file(cfg.paths.relations, "paths.relations");
  require_file(cfg.paths.types, "paths.types");
  require_file(cfg.paths.train, "paths.train");
  fs::create_directories(cfg.paths.model_dir);
  World world = load_world(cfg);
  auto train_docs = load_dataset(cfg.paths.train, world.catalog);

  if (stage == "mention") {
    train_mention(cfg, world, train_docs);
  } else if (stage == "biencoder") {
    train_biencoder(cfg, world, train_docs);
  } else if (stage == "crossencoder") {
    train_crossencoder(cfg, world, train_docs);
  } else if (stage == "relation") {
    train_relation(cfg, world, train_docs, cfg.relation.mode);
  } else {
    throw ValidationError("unknown training stage: " + stage);
  }
  return 0;
}

int cmd_calibrate(const RunConfig& cfg, const std::string& out_path) {
  check_pipeline_files(cfg, cfg.relation.mode);
  require_file(cfg.paths.dev, "paths.dev");
  World world = load_world(cfg);
  auto dev_docs = load_dataset(cfg.paths.dev, world.catalog);
  LoadedPipeline pipeline(cfg, cfg.relation.mode);
  PipelineModels models = pipeline.models(cfg, world.catalog);
  Thresholds t = calibrate_for(cfg, models, dev_docs, cfg.calibrate.beta);
  const std::string path = out_path.empty() ? cfg.paths.thresholds : out_path;
  if (path.empty()) throw ValidationError("missing config key: paths.thresholds");
  t.save(path);
  std::cout << "calibrated (beta=" << t.beta << "): epsilon_m=" << t.epsilon_m
            << " epsilon_c=" << t.epsilon_c << " epsilon_r=" << t.epsilon_r << " -> " << path
            << "\n";
  return 0;
}

int cmd_extract(const RunConfig& cfg, const std::string& thresholds_path,
                const std::string& input, const std::string& output,
                const std::string& trace_path, double em_override, double ec_override,
                double er_override) {
  check_pipeline_files(cfg, cfg.relation.mode);
  require_file(thresholds_path, "thresholds");
  require_file(input, "input");
  World world = load_world(cfg);
  auto docs = load_dataset(input, world.catalog);
  Thresholds t = Thresholds::load_file(thresholds_path);
  if (em_override >= 0.0) t.epsilon_m = em_override;
  if (ec_override >= 0.0) t.epsilon_c = ec_override;
  if (er_override >= 0.0) t.epsilon_r = er_override;
  LoadedPipeline pipeline(cfg, cfg.relation.mode);
  PipelineModels models = pipeline.models(cfg, world.catalog);

  std::ofstream out(output);
  if (!out) throw ValidationError("cannot write file: " + output);
  std::ofstream trace_out;
  if (!trace_path.empty()) {
    trace_out.open(trace_path);
    if (!trace_out) throw ValidationError("cannot write file: " + trace_path);
  }

  const bool nodesc = models.relation->mode() == RelationMode::NO_DESC;
  for (size_t i = 0; i < docs.size(); ++i) {
    UpstreamStagedDoc up = stage_upstream(models.upstream, docs[i].tokens, t.epsilon_m, nodesc);
    StagedDocument staged = score_relations(*models.relation, up, models.relation_restriction);
    ExtractionResult result = assemble_extraction(staged, t);
    json triples = json::array();
    for (const auto& st : result.triples) {
      triples.push_back({st.triple.subject, st.triple.relation, st.triple.object,
                         st.probability});
    }
    out << json{{"doc_id", i}, {"triples", triples}}.dump() << "\n";
    if (trace_out.is_open()) {
      DocumentTrace tr = trace_from_staged(staged, t);
      json spans = json::array();
      for (const auto& s : tr.spans) {
        spans.push_back({{"start", s.span.start},
                         {"end", s.span.end},
                         {"prob", s.mention_prob},
                         {"candidates", s.candidate_ids},
                         {"top1", s.top1_id},
                         {"accepted", s.accepted}});
      }
      json predicted = json::array();
      for (const auto& p : tr.predicted) predicted.push_back({p.subject, p.relation, p.object});
      trace_out << json{{"doc_id", i}, {"spans", spans}, {"predicted", predicted}}.dump()
                << "\n";
    }
  }
  std::cout << "extracted " << docs.size() << " documents -> " << output << "\n";
  return 0;
}

std::vector<TripleList> read_predictions(const std::string& path, size_t n_docs) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open file: " + path);
  std::vector<TripleList> out(n_docs);
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded()) {
      throw ValidationError(path + ":" + std::to_string(line_no) + ": malformed JSON line");
    }
    const size_t doc_id = j.at("doc_id").get<size_t>();
    if (doc_id >= n_docs) {
      throw ValidationError(path + ": doc_id " + std::to_string(doc_id) +
                            " outside the gold dataset");
    }
    for (const auto& t : j.at("triples")) {
      out[doc_id].push_back(
          {t.at(0).get<std::string>(), t.at(1).get<std::string>(), t.at(2).get<std::string>()});
    }
  }
  return out;
}

int cmd_evaluate(const RunConfig& cfg, const std::string& predictions_path,
                 const std::string& gold_path, const std::string& out_dir,
                 const std::string& trace_path) {
  require_file(predictions_path, "predictions");
  require_file(gold_path, "gold");
  World world = load_world(cfg);
  auto gold_docs = load_dataset(gold_path, world.catalog);
  std::vector<TripleList> gold;
  gold.reserve(gold_docs.size());
  for (const auto& d : gold_docs) gold.push_back(d.gold_triples);
  auto predictions = read_predictions(predictions_path, gold_docs.size());

  fs::create_directories(out_dir);
  json report;
  report["micro"] = report_json(micro_metrics(predictions, gold));
  report["macro"] = report_json(macro_metrics(predictions, gold));
  if (cfg.evaluate.macro_all_relations) {
    report["macro_all_relations"] =
        report_json(macro_metrics(predictions, gold, true, world.relations.ids()));
  }

  const int samples = cfg.evaluate.bootstrap_samples;
  const uint64_t bseed = cfg.evaluate.bootstrap_seed;
  auto ci_of = [&](const char* which) {
    MetricFn fn;
    const std::string w = which;
    fn = [w](const std::vector<TripleList>& p, const std::vector<TripleList>& g) {
      MetricReport r = micro_metrics(p, g);
      if (w == "precision") return r.precision;
      if (w == "recall") return r.recall;
      if (w == "f2") return r.f2;
      return r.f1;
    };
    BootstrapCI ci = bootstrap_ci(predictions, gold, fn, samples, bseed);
    return json{{"mean", ci.mean}, {"std", ci.std}, {"samples", ci.samples},
                {"pretty", format_mean_std(ci)}};
  };
  report["bootstrap"] = {{"precision", ci_of("precision")},
                         {"recall", ci_of("recall")},
                         {"f1", ci_of("f1")},
                         {"f2", ci_of("f2")}};

  if (!cfg.paths.freq_map.empty()) {
    require_file(cfg.paths.freq_map, "paths.freq_map");
    auto buckets = bucket_f1(predictions, gold, load_frequency_map(cfg.paths.freq_map));
    json blist = json::array();
    for (const auto& b : buckets) {
      blist.push_back({{"lower", b.lower},
                       {"upper", b.upper},
                       {"relation_count", b.relations.size()},
                       {"gold_triples", b.gold_triples},
                       {"f1", b.f1}});
    }
    report["buckets"] = blist;
    std::ofstream csv((fs::path(out_dir) / "buckets.csv").string());
    csv << bucket_csv(buckets);
  }

  if (!trace_path.empty()) {
    require_file(trace_path, "trace");
    std::ifstream in(trace_path);
    std::vector<DocumentTrace> traces(gold_docs.size());
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      json j = json::parse(line);
      DocumentTrace tr;
      for (const auto& s : j.at("spans")) {
        StageTrace st;
        st.span = {s.at("start").get<int>(), s.at("end").get<int>()};
        st.mention_prob = s.at("prob").get<double>();
        for (const auto& c : s.at("candidates")) st.candidate_ids.push_back(c.get<std::string>());
        st.top1_id = s.at("top1").get<std::string>();
        st.accepted = s.at("accepted").get<bool>();
        tr.spans.push_back(std::move(st));
      }
      for (const auto& p : j.at("predicted")) {
        tr.predicted.push_back(
            {p.at(0).get<std::string>(), p.at(1).get<std::string>(), p.at(2).get<std::string>()});
      }
      traces[j.at("doc_id").get<size_t>()] = std::move(tr);
    }
    ErrorAttribution attr = attribute_errors(traces, gold_docs);
    report["error_attribution"] = {
        {"mention_recognition", attr.fraction(attr.mention_recognition)},
        {"candidate_generation", attr.fraction(attr.candidate_generation)},
        {"candidate_ranking", attr.fraction(attr.candidate_ranking)},
        {"relation_extraction", attr.fraction(attr.relation_extraction)},
        {"missed_triples", attr.total()}};
  }

  std::ofstream out((fs::path(out_dir) / "report.json").string());
  out << report.dump(2) << "\n";
  std::cout << "micro P=" << report["micro"]["precision"].get<double>()
            << " R=" << report["micro"]["recall"].get<double>()
            << " F1=" << report["micro"]["f1"].get<double>()
            << " (bootstrap F1 " << report["bootstrap"]["f1"]["pretty"].get<std::string>()
            << ") -> " << out_dir << "\n";
  return 0;
}

int cmd_ablate(const RunConfig& cfg, const std::string& out_dir) {
  require_file(cfg.paths.dev, "paths.dev");
  require_file(cfg.paths.test, "paths.test");
  World world = load_world(cfg);
  auto train_docs = load_dataset(cfg.paths.train, world.catalog);
  auto dev_docs = load_dataset(cfg.paths.dev, world.catalog);
  auto test_docs = load_dataset(cfg.paths.test, world.catalog);

  const std::vector<std::string> modes = {"full", "no_types", "no_desc", "types_only", "coarse"};
  for (const auto& mode : modes) {
    if (!fs::exists(model_path(cfg, "relation_" + mode + ".ckpt"))) {
      train_relation(cfg, world, train_docs, mode);
    }
  }

  fs::create_directories(out_dir);
  json table = json::array();
  std::ostringstream csv;
  csv << "mode,precision,recall,f1,epsilon_m,epsilon_c,epsilon_r\n";
  for (const auto& mode : modes) {
    LoadedPipeline pipeline(cfg, mode);
    PipelineModels models = pipeline.models(cfg, world.catalog);
    Thresholds t = calibrate_for(cfg, models, dev_docs, cfg.calibrate.beta);

    std::vector<TripleList> predictions, gold;
    const bool nodesc = models.relation->mode() == RelationMode::NO_DESC;
    for (const auto& doc : test_docs) {
      UpstreamStagedDoc up = stage_upstream(models.upstream, doc.tokens, t.epsilon_m, nodesc);
      StagedDocument staged = score_relations(*models.relation, up, models.relation_restriction);
      TripleList triples;
      for (const auto& st : assemble_extraction(staged, t).triples) triples.push_back(st.triple);
      predictions.push_back(std::move(triples));
      gold.push_back(doc.gold_triples);
    }
    MetricReport r = micro_metrics(predictions, gold);
    json row = report_json(r);
    row["mode"] = mode;
    row["thresholds"] = {{"epsilon_m", t.epsilon_m},
                         {"epsilon_c", t.epsilon_c},
                         {"epsilon_r", t.epsilon_r}};
    table.push_back(row);
    csv << mode << "," << r.precision << "," << r.recall << "," << r.f1 << "," << t.epsilon_m
        << "," << t.epsilon_c << "," << t.epsilon_r << "\n";
    std::cout << "ablation " << mode << ": P=" << r.precision << " R=" << r.recall
              << " F1=" << r.f1 << "\n";
  }
  std::ofstream jf((fs::path(out_dir) / "ablation.json").string());
  jf << table.dump(2) << "\n";
  std::ofstream cf((fs::path(out_dir) / "ablation.csv").string());
  cf << csv.str();
  return 0;
}

int cmd_bench(const RunConfig& cfg, const std::string& thresholds_path, const std::string& input,
              int runs) {
  check_pipeline_files(cfg, cfg.relation.mode);
  require_file(thresholds_path, "thresholds");
  require_file(input, "input");
  World world = load_world(cfg);
  auto docs = load_dataset(input, world.catalog);
  if (docs.empty()) throw ValidationError("bench input has no documents");
  Thresholds t = Thresholds::load_file(thresholds_path);
  LoadedPipeline pipeline(cfg, cfg.relation.mode);
  PipelineModels models = pipeline.models(cfg, world.catalog);

  std::vector<double> per_1000;
  for (int run = 0; run < runs; ++run) {
    const auto start = std::chrono::steady_clock::now();
    size_t total_triples = 0;
    for (const auto& doc : docs) {
      total_triples += extract_triples(models, doc.tokens, t).triples.size();
    }
    const std::chrono::duration<double> elapsed = std::chrono::steady_clock::now() - start;
    per_1000.push_back(elapsed.count() / static_cast<double>(docs.size()) * 1000.0);
    (void)total_triples;
  }
  double mean = 0.0;
  for (double v : per_1000) mean += v;
  mean /= static_cast<double>(per_1000.size());
  double std_dev = 0.0;
  if (per_1000.size() > 1) {
    for (double v : per_1000) std_dev += (v - mean) * (v - mean);
    std_dev = std::sqrt(std_dev / static_cast<double>(per_1000.size() - 1));
  }
  std::cout.setf(std::ios::fixed);
  std::cout.precision(2);
  std::cout << "seconds/1000 examples: " << mean << " ± " << std_dev << " over " << runs
            << " runs\n";
  return 0;
}

}  // namespace

int run(const std::vector<std::string>& args) {
  CLI::App app{"Closed information extraction over a knowledge graph"};
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "Generate a synthetic KG and annotated corpus");
  SynthSpec spec;
  std::string synth_out = "synth_data";
  synth->add_option("--out", synth_out, "Output directory");
  synth->add_option("--seed", spec.seed);
  synth->add_option("--entities", spec.n_entities);
  synth->add_option("--relations", spec.n_relations);
  synth->add_option("--types", spec.n_types);
  synth->add_option("--determinism", spec.type_determinism);
  synth->add_option("--templates", spec.templates_per_relation);
  synth->add_option("--train-docs", spec.n_train_docs);
  synth->add_option("--dev-docs", spec.n_dev_docs);
  synth->add_option("--test-docs", spec.n_test_docs);

  // shared flags for model subcommands
  std::string config_path;
  std::string stage;
  uint64_t seed_override = 0;
  bool seed_set = false;

  auto* train = app.add_subcommand("train", "Train one pipeline stage");
  train->add_option("stage", stage, "mention|biencoder|crossencoder|relation")->required();
  train->add_option("--config", config_path)->required();
  int epochs_override = -1;
  double lr_override = -1.0;
  std::string mode_override;
  int gamma_override = -1, beta_override = -1, batch_override = -1, span_len_override = -1;
  int rank_negatives_override = -1, topk_override = -1;
  train->add_option("--epochs", epochs_override);
  train->add_option("--lr", lr_override);
  train->add_option("--seed", seed_override)->each([&](const std::string&) { seed_set = true; });
  train->add_option("--mode", mode_override, "relation mode: full|no_types|types_only|coarse|no_desc");
  train->add_option("--gamma", gamma_override, "mined hard negatives per mention");
  train->add_option("--beta", beta_override, "epochs before hard-negative mining");
  train->add_option("--batch-size", batch_override);
  train->add_option("--max-span-len", span_len_override);
  train->add_option("--rank-negatives", rank_negatives_override);
  train->add_option("--top-k", topk_override);

  auto* calibrate = app.add_subcommand("calibrate", "Tune thresholds on the validation set");
  calibrate->add_option("--config", config_path)->required();
  double fbeta_override = -1.0;
  std::string calibrate_out;
  calibrate->add_option("--beta", fbeta_override, "F-beta objective (1 or 2)");
  calibrate->add_option("--out", calibrate_out, "Thresholds output path");

  auto* extract = app.add_subcommand("extract", "Extract triples from documents");
  extract->add_option("--config", config_path)->required();
  std::string thresholds_path, input_path, output_path, trace_path;
  double em_override = -1.0, ec_override = -1.0, er_override = -1.0;
  extract->add_option("--thresholds", thresholds_path)->required();
  extract->add_option("--input", input_path)->required();
  extract->add_option("--output", output_path)->required();
  extract->add_option("--trace", trace_path, "Also write per-stage traces");
  extract->add_option("--epsilon-m", em_override, "Override the mention threshold");
  extract->add_option("--epsilon-c", ec_override, "Override the candidate threshold");
  extract->add_option("--epsilon-r", er_override, "Override the relation threshold");

  auto* evaluate = app.add_subcommand("evaluate", "Score predictions against gold triples");
  evaluate->add_option("--config", config_path)->required();
  std::string predictions_path, gold_path, out_dir = "reports";
  evaluate->add_option("--predictions", predictions_path)->required();
  evaluate->add_option("--gold", gold_path)->required();
  evaluate->add_option("--out-dir", out_dir);
  evaluate->add_option("--trace", trace_path, "Trace file for error attribution");

  auto* ablate = app.add_subcommand("ablate", "Relation-extractor ablation table");
  ablate->add_option("--config", config_path)->required();
  std::string ablate_out = "reports";
  ablate->add_option("--out-dir", ablate_out);

  auto* bench = app.add_subcommand("bench", "Measure seconds per 1000 examples");
  bench->add_option("--config", config_path)->required();
  bench->add_option("--thresholds", thresholds_path)->required();
  bench->add_option("--input", input_path)->required();
  int runs = 3;
  bench->add_option("--runs", runs);

  std::vector<const char*> argv;
  argv.push_back("kgx");
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (synth->parsed()) return cmd_synth(spec, synth_out);

    RunConfig cfg = RunConfig::load_file(config_path);
    if (seed_set) cfg.seed = seed_override;

    if (train->parsed()) {
      if (epochs_override >= 0) {
        cfg.mention.epochs = cfg.biencoder.epochs = cfg.crossencoder.epochs =
            cfg.relation.epochs = epochs_override;
      }
      if (lr_override > 0.0) {
        cfg.mention.lr = cfg.biencoder.lr = cfg.crossencoder.lr = cfg.relation.lr = lr_override;
      }
      if (!mode_override.empty()) cfg.relation.mode = mode_override;
      if (gamma_override > 0) cfg.biencoder.gamma = gamma_override;
      if (beta_override >= 0) cfg.biencoder.beta = beta_override;
      if (batch_override > 0) {
        cfg.mention.batch_docs = cfg.biencoder.batch_size = cfg.crossencoder.batch_mentions =
            cfg.relation.batch_docs = batch_override;
      }
      if (span_len_override >= 0) cfg.mention.max_span_len = span_len_override;
      if (rank_negatives_override >= 0) cfg.crossencoder.rank_negatives = rank_negatives_override;
      if (topk_override > 0) cfg.biencoder.top_k = topk_override;
      return cmd_train(cfg, stage);
    }
    if (calibrate->parsed()) {
      if (fbeta_override > 0.0) cfg.calibrate.beta = fbeta_override;
      return cmd_calibrate(cfg, calibrate_out);
    }
    if (extract->parsed()) {
      return cmd_extract(cfg, thresholds_path, input_path, output_path, trace_path, em_override,
                         ec_override, er_override);
    }
    if (evaluate->parsed()) {
      return cmd_evaluate(cfg, predictions_path, gold_path, out_dir, trace_path);
    }
    if (ablate->parsed()) return cmd_ablate(cfg, ablate_out);
    if (bench->parsed()) return cmd_bench(cfg, thresholds_path, input_path, runs);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace kgx::cli
