#include "kgx/biencoder.hpp"

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
  cfg.seed = 21;
  return cfg;
}

EntityCatalog small_catalog() {
  EntityCatalog cat;
  cat.add({"Q1", "aa bb", "xx", {}});
  cat.add({"Q2", "cc dd", "yy", {}});
  cat.add({"Q3", "ee ff", "zz", {}});
  cat.add({"Q4", "aa dd", "xx yy", {}});
  cat.add({"Q5", "ee bb", "", {}});
  return cat;
}

Tokenizer small_tokenizer() {
  return Tokenizer({"aa", "bb", "cc", "dd", "ee", "ff", "xx", "yy", "zz"});
}

// Exhaustive-scan oracle with the same tie rule (descending score, ascending id).
std::vector<std::string> brute_force_topk(const VectorIndex& index, const Eigen::VectorXd& q,
                                          int k) {
  Eigen::VectorXd qn = q / q.norm();
  std::vector<std::pair<double, std::string>> scored;
  for (int i = 0; i < index.size(); ++i) {
    scored.push_back({index.matrix().row(i).dot(qn), index.ids()[static_cast<size_t>(i)]});
  }
  std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  std::vector<std::string> out;
  for (int i = 0; i < std::min<int>(k, static_cast<int>(scored.size())); ++i) {
    out.push_back(scored[static_cast<size_t>(i)].second);
  }
  return out;
}

}  // namespace

TEST_SUITE("candidate_generator") {
  TEST_CASE("cosine identities") {
    Eigen::VectorXd v(2);
    v << 3.0, 4.0;
    CHECK(cosine_similarity(v, v) == doctest::Approx(1.0).epsilon(1e-9));
    Eigen::VectorXd x(2), y(2);
    x << 1.0, 0.0;
    y << 0.0, 1.0;
    CHECK(cosine_similarity(x, y) == doctest::Approx(0.0).epsilon(1e-9));
    Eigen::VectorXd nv = -v;
    CHECK(cosine_similarity(v, nv) == doctest::Approx(-1.0).epsilon(1e-9));
    Eigen::VectorXd zero = Eigen::VectorXd::Zero(2);
    CHECK_THROWS_AS(cosine_similarity(v, zero), ValidationError);
  }

  TEST_CASE("index rows are unit-normalized and deterministic") {
    BiEncoderModel model(small_tokenizer(), small_encoder(15), 4);
    auto catalog = small_catalog();
    VectorIndex index = model.embed_all_entities(catalog);
    REQUIRE(index.size() == 5);
    for (int i = 0; i < index.size(); ++i) {
      CHECK(std::fabs(index.matrix().row(i).norm() - 1.0) < 1e-6);
    }
    VectorIndex again = model.embed_all_entities(catalog);
    CHECK(index.matrix() == again.matrix());

    // row equals the per-entity pooled embedding, normalized (recomputed
    // outside the batch path)
    for (size_t i = 0; i < catalog.size(); ++i) {
      Eigen::VectorXd e = model.embed_entity(catalog.at(i));
      e /= e.norm();
      CHECK((index.matrix().row(static_cast<int>(i)).transpose() - e).norm() < 1e-12);
    }
    EntityCatalog empty;
    CHECK_THROWS_AS(model.embed_all_entities(empty), ValidationError);
  }

  TEST_CASE("retrieval on orthogonal rows matches the oracle") {
    std::vector<std::string> ids{"Q1", "Q2", "Q3"};
    VectorIndex index(ids, Eigen::MatrixXd::Identity(3, 3));
    Eigen::VectorXd q = index.matrix().row(1).transpose();
    auto got = index.retrieve(q, 2);
    REQUIRE(got.candidates.size() == 2);
    CHECK(got.candidates[0].id == "Q2");
    CHECK(got.candidates[0].score == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(brute_force_topk(index, q, 2)[0] == "Q2");
  }

  TEST_CASE("k >= |V| returns the full ordering; ties break by ascending id") {
    Eigen::MatrixXd rows(3, 2);
    rows << 1, 0, 1, 0, 0, 1;  // Q1 and Q2 identical
    VectorIndex index({"Q2", "Q1", "Q3"}, rows);
    Eigen::VectorXd q(2);
    q << 1, 0;
    auto got = index.retrieve(q, 10);
    REQUIRE(got.candidates.size() == 3);
    CHECK(got.candidates[0].id == "Q1");  // tie with Q2, id ascending
    CHECK(got.candidates[1].id == "Q2");
    CHECK(got.candidates[2].id == "Q3");
    CHECK_THROWS_AS(index.retrieve(q, 0), ValidationError);
    CHECK_THROWS_AS(index.retrieve(Eigen::VectorXd::Zero(2), 1), ValidationError);
    VectorIndex empty;
    CHECK_THROWS_AS(empty.retrieve(q, 1), ValidationError);
  }

  TEST_CASE("exact retrieval equivalence on random data") {
    Rng rng(77);
    Eigen::MatrixXd rows(40, 6);
    init_normal(rows, rng, 1.0);
    std::vector<std::string> ids;
    for (int i = 0; i < 40; ++i) ids.push_back("Q" + std::to_string(100 + i));
    VectorIndex index(ids, rows);
    for (int trial = 0; trial < 50; ++trial) {
      Eigen::VectorXd q(6);
      init_normal(q, rng, 1.0);
      const int k = 1 + static_cast<int>(rng.next_below(40));
      auto got = index.retrieve(q, k);
      auto oracle = brute_force_topk(index, q, k);
      REQUIRE(got.candidates.size() == oracle.size());
      for (size_t i = 0; i < oracle.size(); ++i) CHECK(got.candidates[i].id == oracle[i]);
      for (const auto& c : got.candidates) {
        CHECK(c.score >= -1.0 - 1e-6);
        CHECK(c.score <= 1.0 + 1e-6);
      }
      // scores non-increasing
      for (size_t i = 1; i < got.candidates.size(); ++i) {
        CHECK(got.candidates[i - 1].score >= got.candidates[i].score);
      }
    }
  }

  TEST_CASE("index file round-trip") {
    testsup::TempDir tmp("index");
    Rng rng(5);
    Eigen::MatrixXd rows(7, 4);
    init_normal(rows, rng, 1.0);
    std::vector<std::string> ids;
    for (int i = 0; i < 7; ++i) ids.push_back("Q" + std::to_string(i));
    VectorIndex index(ids, rows);
    index.save(tmp.file("index.bin"));
    VectorIndex loaded = VectorIndex::load_file(tmp.file("index.bin"));
    CHECK(loaded.ids() == index.ids());
    CHECK(loaded.matrix() == index.matrix());
  }

  TEST_CASE("mining excludes the gold entity") {
    BiEncoderModel model(small_tokenizer(), small_encoder(15), 4);
    auto catalog = small_catalog();
    VectorIndex index = model.embed_all_entities(catalog);
    std::vector<AnnotatedDocument> docs(1);
    docs[0].tokens = {"aa", "bb", "cc"};
    std::vector<MentionExample> mentions{{0, {0, 1}, "Q1"}};

    // gamma of 4: gold inside the top-4 leaves 3 negatives, outside leaves 4
    auto negs = model.mine_hard_negatives(index, docs, mentions, 4);
    REQUIRE(negs.size() == 1);
    CHECK((negs[0].size() == 3 || negs[0].size() == 4));
    for (const auto& id : negs[0]) CHECK(id != "Q1");

    auto all = model.mine_hard_negatives(index, docs, mentions, 5);
    CHECK(all[0].size() == 4);  // gold is somewhere in the full top-5
    CHECK_THROWS_AS(model.mine_hard_negatives(index, docs, mentions, 0), ValidationError);
  }

  TEST_CASE("training: in-batch negatives, loss decreases, batch size checked") {
    auto catalog = small_catalog();
    std::vector<AnnotatedDocument> docs;
    AnnotatedDocument d1;
    d1.tokens = {"aa", "bb", "zz"};
    d1.gold_mentions = {{0, 1, "Q1"}};
    AnnotatedDocument d2;
    d2.tokens = {"cc", "dd", "xx"};
    d2.gold_mentions = {{0, 1, "Q2"}};
    AnnotatedDocument d3;
    d3.tokens = {"ee", "ff", "yy"};
    d3.gold_mentions = {{0, 1, "Q3"}};
    AnnotatedDocument d4;
    d4.tokens = {"aa", "dd", "zz"};
    d4.gold_mentions = {{0, 1, "Q4"}};
    docs = {d1, d2, d3, d4};

    BiEncoderModel model(small_tokenizer(), small_encoder(15), 2);
    BiEncoderTrainConfig cfg;
    cfg.epochs = 3;
    cfg.lr = 3e-2;
    cfg.batch_size = 4;
    cfg.mine_after = 1;
    cfg.gamma = 2;
    cfg.seed = 9;
    auto trace = model.train(docs, catalog, cfg);
    REQUIRE(trace.size() == 3);
    CHECK(trace.back() < trace.front());

    BiEncoderTrainConfig bad = cfg;
    bad.batch_size = 1;
    BiEncoderModel fresh(small_tokenizer(), small_encoder(15), 2);
    CHECK_THROWS_AS(fresh.train(docs, catalog, bad), ValidationError);
  }

  TEST_CASE("temperature gradient matches finite differences") {
    auto catalog = small_catalog();
    std::vector<AnnotatedDocument> docs;
    AnnotatedDocument d1;
    d1.tokens = {"aa", "bb", "zz"};
    d1.gold_mentions = {{0, 1, "Q1"}};
    AnnotatedDocument d2;
    d2.tokens = {"cc", "dd", "xx"};
    d2.gold_mentions = {{0, 1, "Q2"}};
    docs = {d1, d2};

    BiEncoderModel model(small_tokenizer(), small_encoder(15), 2);
    BiEncoderTrainConfig cfg;
    cfg.epochs = 1;
    cfg.lr = 0.0;  // keep weights, accumulate gradients
    cfg.batch_size = 2;
    cfg.mine_after = 5;  // no mining in this single epoch
    auto trace = model.train(docs, catalog, cfg);

    // oracle: mean BCE over the 2x2 in-batch grid
    auto loss = [&]() {
      std::vector<std::string> pool{"Q1", "Q2"};
      double total = 0.0;
      for (int m = 0; m < 2; ++m) {
        Eigen::VectorXd u = model.embed_mention(docs[static_cast<size_t>(m)].tokens, {0, 1});
        for (int p = 0; p < 2; ++p) {
          Eigen::VectorXd v = model.embed_entity(catalog.get(pool[static_cast<size_t>(p)]));
          const double c = cosine_similarity(u, v);
          total += bce_with_logit(model.temperature() * c, m == p ? 1.0 : 0.0);
        }
      }
      return total / 4.0;
    };
    CHECK(loss() == doctest::Approx(trace[0]).epsilon(1e-12));

    const double analytic = model.temperature_grad_ref();
    double& tau = model.temperature_ref();
    const double h = 1e-6;
    tau += h;
    const double up = loss();
    tau -= 2 * h;
    const double down = loss();
    tau += h;
    const double fd = (up - down) / (2 * h);
    CHECK(std::fabs(fd - analytic) / std::max(std::fabs(fd), 1e-8) < 1e-4);
  }

  TEST_CASE("checkpoint round-trip") {
    testsup::TempDir tmp("bi");
    BiEncoderModel model(small_tokenizer(), small_encoder(15), 3, 7.5);
    auto catalog = small_catalog();
    Eigen::VectorXd before = model.embed_entity(catalog.at(0));
    model.save(tmp.file("bi.ckpt"));
    BiEncoderModel loaded = BiEncoderModel::load_file(tmp.file("bi.ckpt"));
    CHECK(loaded.temperature() == 7.5);
    CHECK(loaded.window() == 3);
    CHECK((loaded.embed_entity(catalog.at(0)) - before).norm() == 0.0);
  }
}
