#include "kgx/crossencoder.hpp"

#include <algorithm>

#include "doctest.h"
#include "support.hpp"

using namespace kgx;

namespace {

EncoderConfig small_encoder(int vocab) {
  EncoderConfig cfg;
  cfg.vocab_size = vocab;
  cfg.dim = 8;
  cfg.ffn_dim = 12;
  cfg.layers = 1;
  cfg.max_len = 48;
  cfg.seed = 31;
  return cfg;
}

Tokenizer small_tokenizer() {
  return Tokenizer({"aa", "bb", "cc", "dd", "ee", "ff", "xx", "yy", "zz"});
}

EntityCatalog small_catalog() {
  EntityCatalog cat;
  cat.add({"Q1", "aa bb", "xx", {}});
  cat.add({"Q2", "cc dd", "yy", {}});
  cat.add({"Q3", "ee ff", "zz", {}});
  cat.add({"Q4", "aa dd", "xx yy", {}});
  return cat;
}

CandidateSet candidates_of(std::vector<std::string> ids) {
  CandidateSet out;
  double score = 0.9;
  for (auto& id : ids) {
    out.candidates.push_back({std::move(id), score});
    score -= 0.1;
  }
  return out;
}

}  // namespace

TEST_SUITE("candidate_ranker") {
  TEST_CASE("single candidate gives a single ranked entry") {
    CrossEncoderModel model(small_tokenizer(), small_encoder(15), 2);
    auto catalog = small_catalog();
    std::vector<std::string> tokens{"aa", "bb", "cc"};
    auto ranked = model.rank_candidates(tokens, {0, 1}, candidates_of({"Q1"}), catalog);
    REQUIRE(ranked.size() == 1);
    CHECK(ranked[0].entity_id == "Q1");
    CHECK(ranked[0].cross_prob == sigmoid(ranked[0].cross_logit));
  }

  TEST_CASE("output is the input permuted, sorted by cross_prob") {
    CrossEncoderModel model(small_tokenizer(), small_encoder(15), 2);
    auto catalog = small_catalog();
    std::vector<std::string> tokens{"cc", "dd", "ee"};
    auto ranked = model.rank_candidates(tokens, {0, 1}, candidates_of({"Q1", "Q2", "Q3", "Q4"}),
                                        catalog);
    REQUIRE(ranked.size() == 4);
    std::set<std::string> ids;
    for (const auto& r : ranked) ids.insert(r.entity_id);
    CHECK(ids == std::set<std::string>{"Q1", "Q2", "Q3", "Q4"});
    for (size_t i = 1; i < ranked.size(); ++i) {
      CHECK(ranked[i - 1].cross_prob >= ranked[i].cross_prob);
    }
  }

  TEST_CASE("permuting the candidate order does not change the ranking") {
    CrossEncoderModel model(small_tokenizer(), small_encoder(15), 2);
    auto catalog = small_catalog();
    std::vector<std::string> tokens{"aa", "dd", "zz"};
    auto a = model.rank_candidates(tokens, {0, 1}, candidates_of({"Q1", "Q2", "Q3"}), catalog);
    auto b = model.rank_candidates(tokens, {0, 1}, candidates_of({"Q3", "Q1", "Q2"}), catalog);
    REQUIRE(a.size() == b.size());
    for (size_t i = 0; i < a.size(); ++i) {
      CHECK(a[i].entity_id == b[i].entity_id);
      CHECK(a[i].cross_logit == b[i].cross_logit);
    }
  }

  TEST_CASE("empty candidate set yields an empty list") {
    CrossEncoderModel model(small_tokenizer(), small_encoder(15), 2);
    auto catalog = small_catalog();
    CHECK(model.rank_candidates({"aa"}, {0, 0}, CandidateSet{}, catalog).empty());
  }

  TEST_CASE("joint embedding equals the pooled joint representation exactly") {
    CrossEncoderModel model(small_tokenizer(), small_encoder(15), 2);
    auto catalog = small_catalog();
    std::vector<std::string> tokens{"aa", "bb", "cc"};
    auto ranked = model.rank_candidates(tokens, {1, 1}, candidates_of({"Q2"}), catalog);
    auto rep = build_joint_rep(small_tokenizer(), catalog.get("Q2"), tokens, {1, 1}, 2, true);
    Eigen::VectorXd direct = encode_pooled(model.encoder(), rep);
    CHECK((ranked[0].joint_embedding - direct).norm() == 0.0);
  }

  TEST_CASE("description toggle changes the joint representation") {
    CrossEncoderModel model(small_tokenizer(), small_encoder(15), 2);
    auto catalog = small_catalog();
    std::vector<std::string> tokens{"aa", "bb"};
    auto with_desc = model.score_pair(tokens, {0, 1}, catalog.get("Q1"), true);
    auto without = model.score_pair(tokens, {0, 1}, catalog.get("Q1"), false);
    CHECK(with_desc.joint_embedding != without.joint_embedding);
  }

  TEST_CASE("training reduces loss; head gradient matches finite differences") {
    auto catalog = small_catalog();
    std::vector<AnnotatedDocument> docs;
    AnnotatedDocument d1;
    d1.tokens = {"aa", "bb", "zz"};
    d1.gold_mentions = {{0, 1, "Q1"}};
    AnnotatedDocument d2;
    d2.tokens = {"cc", "dd", "xx"};
    d2.gold_mentions = {{0, 1, "Q2"}};
    docs = {d1, d2};

    BiEncoderModel bi(small_tokenizer(), small_encoder(15), 2);
    VectorIndex index = bi.embed_all_entities(catalog);

    CrossEncoderModel model(small_tokenizer(), small_encoder(15), 2);
    CrossEncoderTrainConfig cfg;
    cfg.epochs = 2;
    cfg.lr = 3e-2;
    cfg.batch_mentions = 4;
    cfg.negatives_per_mention = 2;
    cfg.seed = 5;
    auto trace = model.train(docs, catalog, bi, index, cfg);
    REQUIRE(trace.size() == 2);
    CHECK(trace[1] < trace[0]);

    // gradient check with frozen weights (lr = 0, single batch)
    CrossEncoderModel probe(small_tokenizer(), small_encoder(15), 2);
    cfg.epochs = 1;
    cfg.lr = 0.0;
    auto probe_trace = probe.train(docs, catalog, bi, index, cfg);

    auto mentions = collect_mention_examples(docs);
    auto negatives = bi.mine_hard_negatives(index, docs, mentions, cfg.negatives_per_mention + 1);
    for (auto& n : negatives) {
      if (static_cast<int>(n.size()) > cfg.negatives_per_mention) {
        n.resize(static_cast<size_t>(cfg.negatives_per_mention));
      }
    }
    auto loss = [&]() {
      double total = 0.0;
      long count = 0;
      for (size_t m = 0; m < mentions.size(); ++m) {
        const auto& doc = docs[static_cast<size_t>(mentions[m].doc)];
        auto score = [&](const std::string& id, double label) {
          auto rc = probe.score_pair(doc.tokens, mentions[m].span, catalog.get(id), true);
          total += bce_with_logit(rc.cross_logit, label);
          ++count;
        };
        score(mentions[m].entity_id, 1.0);
        for (const auto& neg : negatives[m]) score(neg, 0.0);
      }
      return total / static_cast<double>(count);
    };
    CHECK(loss() == doctest::Approx(probe_trace[0]).epsilon(1e-12));

    Eigen::VectorXd analytic = probe.head_w_grad();
    CHECK(testsup::max_grad_rel_error(probe.head_w(), analytic, loss) < 1e-4);

    const double analytic_b = probe.head_b_grad();
    double& bias = probe.head_b();
    const double h = 1e-6;
    bias += h;
    const double up = loss();
    bias -= 2 * h;
    const double down = loss();
    bias += h;
    const double fd = (up - down) / (2 * h);
    CHECK(std::fabs(fd - analytic_b) / std::max(std::fabs(fd), 1e-8) < 1e-4);
  }

  TEST_CASE("mentions with unknown gold entities are skipped with a warning") {
    auto catalog = small_catalog();
    std::vector<AnnotatedDocument> docs(1);
    docs[0].tokens = {"aa", "bb"};
    docs[0].gold_mentions = {{0, 1, "Q1"}};
    docs[0].gold_mentions.push_back({0, 0, "Q999"});  // not in catalog

    BiEncoderModel bi(small_tokenizer(), small_encoder(15), 2);
    VectorIndex index = bi.embed_all_entities(catalog);
    CrossEncoderModel model(small_tokenizer(), small_encoder(15), 2);
    CrossEncoderTrainConfig cfg;
    cfg.epochs = 1;
    cfg.lr = 1e-2;
    cfg.negatives_per_mention = 1;
    CHECK(model.train(docs, catalog, bi, index, cfg).size() == 1);
  }

  TEST_CASE("checkpoint round-trip") {
    testsup::TempDir tmp("cross");
    CrossEncoderModel model(small_tokenizer(), small_encoder(15), 2);
    auto catalog = small_catalog();
    auto before = model.score_pair({"aa", "bb"}, {0, 1}, catalog.get("Q1"));
    model.save(tmp.file("x.ckpt"));
    auto loaded = CrossEncoderModel::load_file(tmp.file("x.ckpt"));
    auto after = loaded.score_pair({"aa", "bb"}, {0, 1}, catalog.get("Q1"));
    CHECK(after.cross_logit == before.cross_logit);
    CHECK((after.joint_embedding - before.joint_embedding).norm() == 0.0);
  }
}
