#include "kgx/pipeline.hpp"

#include "doctest.h"
#include "support.hpp"

using namespace kgx;

namespace {

StagedSpan stub_span(Span span, double mention_prob, const std::string& top1,
                     double cross_prob) {
  StagedSpan s;
  s.span = span;
  s.mention_prob = mention_prob;
  s.candidate_ids = {top1};
  RankedCandidate rc;
  rc.entity_id = top1;
  rc.cross_prob = cross_prob;
  rc.cross_logit = 0.0;
  s.ranked = {rc};
  s.top1_id = top1;
  s.top_cross_prob = cross_prob;
  return s;
}

// staged doc over stub scores with explicit relation probabilities
StagedDocument stub_doc(std::vector<StagedSpan> spans,
                        std::vector<std::tuple<int, int, std::vector<double>>> pairs,
                        std::vector<std::string> relation_ids) {
  StagedDocument doc;
  doc.spans = std::move(spans);
  for (auto& [s, o, probs] : pairs) {
    StagedPair p;
    p.subj = s;
    p.obj = o;
    p.probs = Eigen::Map<Eigen::VectorXd>(probs.data(), static_cast<Eigen::Index>(probs.size()));
    doc.pairs.push_back(std::move(p));
  }
  doc.relation_ids = std::move(relation_ids);
  return doc;
}

std::set<Triple> triples_of(const ExtractionResult& r) {
  std::set<Triple> out;
  for (const auto& st : r.triples) out.insert(st.triple);
  return out;
}

StagedDocument random_stub_doc(Rng& rng) {
  const int n_spans = 2 + static_cast<int>(rng.next_below(4));
  std::vector<StagedSpan> spans;
  for (int i = 0; i < n_spans; ++i) {
    spans.push_back(stub_span({i, i}, rng.next_double(),
                              "Q" + std::to_string(rng.next_below(4)), rng.next_double()));
  }
  std::vector<std::tuple<int, int, std::vector<double>>> pairs;
  for (int s = 0; s < n_spans; ++s) {
    for (int o = 0; o < n_spans; ++o) {
      if (s == o) continue;
      pairs.push_back({s, o, {rng.next_double(), rng.next_double()}});
    }
  }
  return stub_doc(std::move(spans), std::move(pairs), {"P1", "P2"});
}

}  // namespace

TEST_SUITE("pipeline") {
  TEST_CASE("combined candidate score is the arithmetic mean") {
    CHECK(combined_candidate_score(1.0, 1.0) == 1.0);
    CHECK(combined_candidate_score(0.4, 0.8) == doctest::Approx(0.6).epsilon(1e-12));
    Rng rng(3);
    for (int i = 0; i < 20; ++i) {
      const double a = rng.next_double(), b = rng.next_double();
      const double s = combined_candidate_score(a, b);
      CHECK(s >= 0.0);
      CHECK(s <= 1.0);
    }
  }

  TEST_CASE("epsilon_r = 1 suppresses all triples") {
    auto doc = stub_doc({stub_span({0, 0}, 0.99, "Q1", 0.99), stub_span({1, 1}, 0.99, "Q2", 0.99)},
                        {{0, 1, {0.999, 0.999}}, {1, 0, {0.999, 0.999}}}, {"P1", "P2"});
    CHECK(assemble_extraction(doc, {0.1, 0.1, 1.0, 1.0}).triples.empty());
  }

  TEST_CASE("hand-traced acceptance: s = 0.8 against epsilon_c") {
    auto doc = stub_doc({stub_span({0, 0}, 0.9, "Q1", 0.7)}, {}, {"P1"});
    // s = (0.9 + 0.7)/2 = 0.8
    CHECK(assemble_extraction(doc, {0.5, 0.75, 0.5, 1.0}).accepted.size() == 1);
    CHECK(assemble_extraction(doc, {0.5, 0.85, 0.5, 1.0}).accepted.empty());
    CHECK(assemble_extraction(doc, {0.5, 0.8, 0.5, 1.0}).accepted.empty());  // strict
  }

  TEST_CASE("a single accepted mention yields no triples") {
    auto doc = stub_doc({stub_span({0, 0}, 0.9, "Q1", 0.9)}, {}, {"P1"});
    auto result = assemble_extraction(doc, {0.1, 0.1, 0.1, 1.0});
    CHECK(result.accepted.size() == 1);
    CHECK(result.triples.empty());
  }

  TEST_CASE("emitted triples connect accepted mentions and dedupe by max prob") {
    auto doc = stub_doc({stub_span({0, 0}, 0.9, "Q1", 0.9), stub_span({1, 1}, 0.9, "Q2", 0.9),
                         stub_span({2, 2}, 0.9, "Q1", 0.8)},  // second mention of Q1
                        {{0, 1, {0.7, 0.1}}, {1, 0, {0.1, 0.1}}, {2, 1, {0.9, 0.1}},
                         {1, 2, {0.1, 0.1}}, {0, 2, {0.1, 0.1}}, {2, 0, {0.1, 0.1}}},
                        {"P1", "P2"});
    auto result = assemble_extraction(doc, {0.5, 0.5, 0.5, 1.0});
    REQUIRE(result.triples.size() == 1);  // (Q1, P1, Q2) from two span pairs, deduped
    CHECK(result.triples[0].triple == Triple{"Q1", "P1", "Q2"});
    CHECK(result.triples[0].probability == 0.9);  // max of 0.7 and 0.9

    std::set<std::string> accepted_entities;
    for (const auto& m : result.accepted) accepted_entities.insert(m.entity_id);
    for (const auto& st : result.triples) {
      CHECK(accepted_entities.count(st.triple.subject) == 1);
      CHECK(accepted_entities.count(st.triple.object) == 1);
    }
  }

  TEST_CASE("mentions with empty candidate sets are never accepted") {
    StagedSpan empty;
    empty.span = {0, 0};
    empty.mention_prob = 0.99;
    auto doc = stub_doc({empty}, {}, {"P1"});
    CHECK(assemble_extraction(doc, {0.1, 0.1, 0.1, 1.0}).accepted.empty());
  }

  TEST_CASE("raising any single threshold never adds a triple (property)") {
    Rng rng(91);
    for (int trial = 0; trial < 120; ++trial) {
      StagedDocument doc = random_stub_doc(rng);
      Thresholds base{rng.next_double(), rng.next_double(), rng.next_double(), 1.0};
      auto before = triples_of(assemble_extraction(doc, base));
      for (int coord = 0; coord < 3; ++coord) {
        Thresholds raised = base;
        double& v = coord == 0 ? raised.epsilon_m : coord == 1 ? raised.epsilon_c
                                                               : raised.epsilon_r;
        v = v + (1.0 - v) * rng.next_double();
        auto after = triples_of(assemble_extraction(doc, raised));
        for (const auto& t : after) CHECK(before.count(t) == 1);
      }
    }
  }

  TEST_CASE("determinism: identical staged input gives identical output") {
    Rng rng(7);
    StagedDocument doc = random_stub_doc(rng);
    Thresholds t{0.3, 0.4, 0.5, 1.0};
    auto a = assemble_extraction(doc, t);
    auto b = assemble_extraction(doc, t);
    REQUIRE(a.triples.size() == b.triples.size());
    for (size_t i = 0; i < a.triples.size(); ++i) {
      CHECK(a.triples[i].triple == b.triples[i].triple);
      CHECK(a.triples[i].probability == b.triples[i].probability);
    }
  }

  TEST_CASE("thresholds file round-trip") {
    testsup::TempDir tmp("thr");
    Thresholds t{0.35, 0.4, 0.65, 2.0};
    t.save(tmp.file("t.json"));
    Thresholds loaded = Thresholds::load_file(tmp.file("t.json"));
    CHECK(loaded.epsilon_m == t.epsilon_m);
    CHECK(loaded.epsilon_c == t.epsilon_c);
    CHECK(loaded.epsilon_r == t.epsilon_r);
    CHECK(loaded.beta == t.beta);
  }

  TEST_CASE("calibration: single grid point is returned") {
    Rng rng(11);
    std::vector<StagedDocument> staged{random_stub_doc(rng)};
    std::vector<TripleList> gold{{}};
    RelationIndex rels;
    rels.add("P1", "");
    rels.add("P2", "");
    GridSpec grid{0.4, 0.4, 0.1, false};
    Thresholds t = calibrate_thresholds(staged, gold, rels, 1.0, grid);
    CHECK(t.epsilon_m == 0.4);
    CHECK(t.epsilon_c == 0.4);
    CHECK(t.epsilon_r == 0.4);
  }

  TEST_CASE("calibration: degenerate scores tie-break toward high thresholds") {
    // no pair ever crosses any threshold -> every grid point scores 0
    auto doc = stub_doc({stub_span({0, 0}, 0.01, "Q1", 0.01)}, {}, {"P1"});
    std::vector<StagedDocument> staged{doc};
    std::vector<TripleList> gold{{Triple{"Q1", "P1", "Q2"}}};
    RelationIndex rels;
    rels.add("P1", "");
    GridSpec grid{0.1, 0.9, 0.2, false};
    Thresholds t = calibrate_thresholds(staged, gold, rels, 1.0, grid);
    CHECK(t.epsilon_m == doctest::Approx(0.9));
    CHECK(t.epsilon_c == doctest::Approx(0.9));
    CHECK(t.epsilon_r == doctest::Approx(0.9));
  }

  TEST_CASE("calibration finds thresholds separating good from spurious triples") {
    // true triple scored 0.8; spurious one 0.3: best epsilon_r in (0.3, 0.8)
    std::vector<StagedDocument> staged;
    std::vector<TripleList> gold;
    for (int d = 0; d < 4; ++d) {
      auto doc = stub_doc(
          {stub_span({0, 0}, 0.9, "Q1", 0.9), stub_span({1, 1}, 0.9, "Q2", 0.9)},
          {{0, 1, {0.8, 0.3}}, {1, 0, {0.05, 0.05}}}, {"P1", "P2"});
      staged.push_back(doc);
      gold.push_back({Triple{"Q1", "P1", "Q2"}});
    }
    RelationIndex rels;
    rels.add("P1", "");
    rels.add("P2", "");
    GridSpec grid{0.05, 0.95, 0.05, true};
    Thresholds t = calibrate_thresholds(staged, gold, rels, 1.0, grid);
    CHECK(t.epsilon_r > 0.3);
    CHECK(t.epsilon_r < 0.8);

    CHECK_THROWS_AS(calibrate_thresholds(staged, gold, rels, 1.0, GridSpec{0.9, 0.1, 0.1, false}),
                    ValidationError);
    CHECK_THROWS_AS(calibrate_thresholds({}, {}, rels, 1.0, grid), ValidationError);
  }

  TEST_CASE("relation restriction forces out-of-scope scores to zero") {
    TypeVocabulary vocab({"TA"}, {}, {});
    RelationIndex rels;
    rels.add("P1", "");
    rels.add("P2", "");
    RelationModel model(rels, vocab, RelationMode::FULL, 4, 2, 3);

    UpstreamStagedDoc upstream;
    Rng rng(5);
    for (int i = 0; i < 2; ++i) {
      StagedSpan s = stub_span({i, i}, 0.9, i == 0 ? "Q1" : "Q2", 0.9);
      Eigen::VectorXd b(4);
      init_normal(b, rng, 1.0);
      s.top1.joint_embedding = b;
      s.top1.types = {"TA"};
      upstream.spans.push_back(std::move(s));
    }
    StagedDocument unrestricted = score_relations(model, upstream, {});
    StagedDocument restricted = score_relations(model, upstream, {"P2"});
    REQUIRE(restricted.pairs.size() == 2);
    for (size_t p = 0; p < restricted.pairs.size(); ++p) {
      CHECK(restricted.pairs[p].probs[0] == 0.0);  // P1 out of scope
      CHECK(restricted.pairs[p].probs[1] == unrestricted.pairs[p].probs[1]);
    }
    // emitted triples never contain out-of-scope relations
    auto result = assemble_extraction(restricted, {0.1, 0.1, 0.0, 1.0});
    for (const auto& st : result.triples) CHECK(st.triple.relation == "P2");
  }

  TEST_CASE("trace reflects assembly decisions") {
    auto doc = stub_doc({stub_span({0, 0}, 0.9, "Q1", 0.9), stub_span({1, 1}, 0.2, "Q2", 0.9)},
                        {{0, 1, {0.9}}, {1, 0, {0.1}}}, {"P1"});
    DocumentTrace trace = trace_from_staged(doc, {0.5, 0.5, 0.5, 1.0});
    REQUIRE(trace.spans.size() == 2);
    CHECK(trace.spans[0].accepted);
    CHECK_FALSE(trace.spans[1].accepted);  // mention prob 0.2 below 0.5
    CHECK(trace.predicted.empty());        // object not accepted
  }
}
