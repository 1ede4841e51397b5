#include "kgx/relation.hpp"

#include "doctest.h"
#include "support.hpp"

using namespace kgx;

namespace {

TypeVocabulary small_vocab() {
  return TypeVocabulary({"TA", "TB", "TC"}, {{"TB", {"TC"}}},
                        {{"TA", CoarseType::PER}, {"TB", CoarseType::LOC}});
}

RelationIndex small_relations() {
  RelationIndex idx;
  idx.add("P1", "one");
  idx.add("P2", "two");
  idx.add("P3", "three");
  return idx;
}

EncoderConfig small_encoder(int vocab) {
  EncoderConfig cfg;
  cfg.vocab_size = vocab;
  cfg.dim = 6;
  cfg.ffn_dim = 10;
  cfg.layers = 1;
  cfg.max_len = 48;
  cfg.seed = 41;
  return cfg;
}

PairInput input_of(Eigen::VectorXd b, std::set<std::string> types) {
  PairInput in;
  in.joint_embedding = std::move(b);
  in.types = std::move(types);
  return in;
}

}  // namespace

TEST_SUITE("relation_extractor") {
  TEST_CASE("type representation is the mean of the type vectors") {
    TypeEmbeddingTable table(3, 2, 1);
    table.table << 1, 0, 0, 1, 5, 5;
    auto vocab = small_vocab();

    Eigen::VectorXd single = type_representation({"TA"}, table, vocab);
    CHECK((single - table.table.row(0).transpose()).norm() == 0.0);

    Eigen::VectorXd mean = type_representation({"TA", "TB"}, table, vocab);
    CHECK(mean[0] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(mean[1] == doctest::Approx(0.5).epsilon(1e-12));

    CHECK(type_representation({}, table, vocab).norm() == 0.0);
    CHECK_THROWS_AS(type_representation({"T_missing"}, table, vocab), ValidationError);

    // identical type sets give identical representations
    CHECK((type_representation({"TA", "TB"}, table, vocab) - mean).norm() == 0.0);
  }

  TEST_CASE("coarse representation uses distinct coarse classes") {
    TypeEmbeddingTable coarse(4, 2, 2);
    auto vocab = small_vocab();
    // TA -> PER (row 0), TB -> LOC (row 2), TC unmapped -> MISC (row 3)
    Eigen::VectorXd rep = type_representation_coarse({"TA"}, coarse, vocab);
    CHECK((rep - coarse.table.row(static_cast<int>(CoarseType::PER)).transpose()).norm() == 0.0);
    Eigen::VectorXd two = type_representation_coarse({"TB", "TC"}, coarse, vocab);
    Eigen::VectorXd expect = 0.5 * (coarse.table.row(static_cast<int>(CoarseType::LOC)) +
                                    coarse.table.row(static_cast<int>(CoarseType::MISC)))
                                       .transpose();
    CHECK((two - expect).norm() < 1e-12);
  }

  TEST_CASE("type logits: zero head gives zero, order matters, shape is |R|") {
    Eigen::VectorXd t1(2), t2(2);
    t1 << 1, 2;
    t2 << 3, 4;
    Eigen::MatrixXd zero = Eigen::MatrixXd::Zero(3, 4);
    CHECK(type_logits(t1, t2, zero).norm() == 0.0);
    CHECK(type_logits(t1, t2, zero).size() == 3);

    Rng rng(3);
    Eigen::MatrixXd head(3, 4);
    init_normal(head, rng, 1.0);
    Eigen::VectorXd forward = type_logits(t1, t2, head);
    Eigen::VectorXd reversed = type_logits(t2, t1, head);
    CHECK((forward - reversed).norm() > 1e-6);
    CHECK_THROWS_AS(type_logits(t1, t2, Eigen::MatrixXd::Zero(3, 5)), ValidationError);
  }

  TEST_CASE("contextual logits: broadcast and matrix terms") {
    Eigen::VectorXd b1(2), b2(2);
    b1 << 1, 0;
    b2 << 0, 1;
    Eigen::MatrixXd id2 = Eigen::MatrixXd::Identity(2, 2);

    // W_r = 0: every component equals <l_s b, l_o b'>
    Eigen::VectorXd broadcast = contextual_logits(b1, b2, Eigen::MatrixXd::Zero(2, 2), id2, id2);
    CHECK(broadcast[0] == broadcast[1]);
    CHECK(broadcast[0] == doctest::Approx(b1.dot(b2)).epsilon(1e-12));

    // l_s = l_o = 0: pure matrix term
    Eigen::VectorXd pure = contextual_logits(b1, b2, id2, Eigen::MatrixXd::Zero(2, 2),
                                             Eigen::MatrixXd::Zero(2, 2));
    CHECK((pure - (b1 + b2)).norm() == 0.0);

    // hand-computed: W_r = I, l_s = l_o = I, b=[1,0], b'=[0,1] -> [1,1]
    Eigen::VectorXd hand = contextual_logits(b1, b2, id2, id2, id2);
    CHECK(hand[0] == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(hand[1] == doctest::Approx(1.0).epsilon(1e-9));
  }

  TEST_CASE("combined logits: additivity and mode semantics") {
    auto vocab = small_vocab();
    RelationModel model(small_relations(), vocab, RelationMode::FULL, 4, 3, 7);
    Rng rng(5);
    Eigen::VectorXd b1(4), b2(4);
    init_normal(b1, rng, 1.0);
    init_normal(b2, rng, 1.0);
    PairInput subj = input_of(b1, {"TA"});
    PairInput obj = input_of(b2, {"TB", "TC"});

    RelationLogits full = model.combined_logits(subj, obj, 0, 1);
    Eigen::VectorXd type_term = type_logits(model.type_rep(subj.types), model.type_rep(obj.types),
                                            model.weights().type_head);
    Eigen::VectorXd ctx_term = contextual_logits(b1, b2, model.weights().w_r, model.weights().l_s,
                                                 model.weights().l_o);
    CHECK((full.logits - (type_term + ctx_term)).norm() == 0.0);
    for (int r = 0; r < 3; ++r) {
      CHECK(full.probabilities[r] == sigmoid(full.logits[r]));
    }

    RelationModel no_types(small_relations(), vocab, RelationMode::NO_TYPES, 4, 3, 7);
    no_types.weights() = model.weights();
    CHECK((no_types.combined_logits(subj, obj, 0, 1).logits - ctx_term).norm() == 0.0);

    RelationModel types_only(small_relations(), vocab, RelationMode::TYPES_ONLY, 4, 3, 7);
    types_only.weights() = model.weights();
    types_only.type_table() = model.type_table();
    CHECK((types_only.combined_logits(subj, obj, 0, 1).logits - type_term).norm() == 0.0);

    // FULL with a zero type head reduces to the contextual term
    RelationModel zero_h(small_relations(), vocab, RelationMode::FULL, 4, 3, 7);
    zero_h.weights() = model.weights();
    zero_h.type_table() = model.type_table();
    zero_h.weights().type_head.setZero();
    CHECK((zero_h.combined_logits(subj, obj, 0, 1).logits - ctx_term).norm() == 0.0);

    CHECK_THROWS_AS(model.combined_logits(subj, obj, 2, 2), ValidationError);
  }

  TEST_CASE("NO_TYPES output ignores the type table (fuzzed)") {
    auto vocab = small_vocab();
    RelationModel model(small_relations(), vocab, RelationMode::NO_TYPES, 4, 3, 11);
    Rng rng(9);
    Eigen::VectorXd b1(4), b2(4);
    init_normal(b1, rng, 1.0);
    init_normal(b2, rng, 1.0);
    PairInput subj = input_of(b1, {"TA"});
    PairInput obj = input_of(b2, {"TB"});
    Eigen::VectorXd before = model.combined_logits(subj, obj, 0, 1).logits;
    for (int trial = 0; trial < 5; ++trial) {
      init_normal(model.type_table().table, rng, 3.0);
      CHECK((model.combined_logits(subj, obj, 0, 1).logits - before).norm() == 0.0);
    }
  }

  TEST_CASE("score_all_pairs yields M(M-1) ordered pairs") {
    auto vocab = small_vocab();
    RelationModel model(small_relations(), vocab, RelationMode::FULL, 4, 3, 13);
    Rng rng(2);
    auto make_input = [&]() {
      Eigen::VectorXd b(4);
      init_normal(b, rng, 1.0);
      return input_of(b, {"TA"});
    };
    std::vector<PairInput> two{make_input(), make_input()};
    CHECK(model.score_all_pairs(two).size() == 2);
    std::vector<PairInput> one{make_input()};
    CHECK(model.score_all_pairs(one).empty());
    std::vector<PairInput> four{make_input(), make_input(), make_input(), make_input()};
    auto pairs = model.score_all_pairs(four);
    CHECK(pairs.size() == 12);
    for (const auto& p : pairs) CHECK(p.subject != p.object);
  }

  TEST_CASE("training decreases loss and gradients match finite differences") {
    auto vocab = small_vocab();
    auto relations = small_relations();
    EntityCatalog catalog;
    catalog.add({"Q1", "aa bb", "xx", {"TA"}});
    catalog.add({"Q2", "cc dd", "yy", {"TB"}});
    catalog.add({"Q3", "ee ff", "zz", {"TB", "TC"}});
    Tokenizer tok({"aa", "bb", "cc", "dd", "ee", "ff", "xx", "yy", "zz", "ww"});
    CrossEncoderModel cross(tok, small_encoder(tok.vocab_size()), 2);

    std::vector<AnnotatedDocument> docs(1);
    docs[0].tokens = {"aa", "bb", "ww", "cc", "dd", "ww", "ee", "ff"};
    docs[0].gold_mentions = {{0, 1, "Q1"}, {3, 4, "Q2"}, {6, 7, "Q3"}};
    docs[0].gold_triples = {{"Q1", "P1", "Q2"}, {"Q2", "P3", "Q3"}};

    RelationModel model(relations, vocab, RelationMode::FULL, 6, 3, 17);
    RelationTrainConfig cfg;
    cfg.epochs = 2;
    cfg.lr = 5e-2;
    cfg.batch_docs = 4;
    auto trace = model.train(docs, catalog, cross, cfg);
    REQUIRE(trace.size() == 2);
    CHECK(trace[1] < trace[0]);

    // frozen-weight gradient check against an independently recomputed loss
    RelationModel probe(relations, vocab, RelationMode::FULL, 6, 3, 17);
    cfg.epochs = 1;
    cfg.lr = 0.0;
    auto probe_trace = probe.train(docs, catalog, cross, cfg);

    auto loss = [&]() {
      std::vector<PairInput> inputs;
      std::vector<std::string> ids;
      for (const auto& m : docs[0].gold_mentions) {
        PairInput in;
        in.joint_embedding =
            cross.score_pair(docs[0].tokens, {m.start, m.end}, catalog.get(m.entity_id), true)
                .joint_embedding;
        in.types = catalog.get(m.entity_id).types;
        inputs.push_back(std::move(in));
        ids.push_back(m.entity_id);
      }
      double total = 0.0;
      long terms = 0;
      for (int s = 0; s < 3; ++s) {
        for (int o = 0; o < 3; ++o) {
          if (s == o) continue;
          auto lg = probe.combined_logits(inputs[static_cast<size_t>(s)],
                                          inputs[static_cast<size_t>(o)], s, o);
          for (int r = 0; r < relations.size(); ++r) {
            double y = 0.0;
            for (const auto& t : docs[0].gold_triples) {
              if (t.subject == ids[static_cast<size_t>(s)] &&
                  t.object == ids[static_cast<size_t>(o)] &&
                  relations.index_of(t.relation) == r) {
                y = 1.0;
              }
            }
            total += bce_with_logit(lg.logits[r], y);
            ++terms;
          }
        }
      }
      return total / static_cast<double>(terms);
    };
    CHECK(loss() == doctest::Approx(probe_trace[0]).epsilon(1e-12));

    CHECK(testsup::max_grad_rel_error(probe.weights().w_r, probe.weights().d_w_r, loss) < 1e-4);
    CHECK(testsup::max_grad_rel_error(probe.weights().l_s, probe.weights().d_l_s, loss) < 1e-4);
    CHECK(testsup::max_grad_rel_error(probe.weights().l_o, probe.weights().d_l_o, loss) < 1e-4);
    CHECK(testsup::max_grad_rel_error(probe.weights().type_head, probe.weights().d_type_head,
                                      loss) < 1e-4);
    CHECK(testsup::max_grad_rel_error(probe.type_table().table, probe.type_table().grad, loss) <
          1e-4);
  }

  TEST_CASE("COARSE mode trains a four-row table") {
    auto vocab = small_vocab();
    RelationModel model(small_relations(), vocab, RelationMode::COARSE, 4, 3, 19);
    CHECK(model.type_table().table.rows() == 4);
    RelationModel fine(small_relations(), vocab, RelationMode::FULL, 4, 3, 19);
    CHECK(fine.type_table().table.rows() == 3);
  }

  TEST_CASE("checkpoint round-trip preserves scores and mode") {
    testsup::TempDir tmp("rel");
    auto vocab = small_vocab();
    RelationModel model(small_relations(), vocab, RelationMode::COARSE, 4, 3, 23);
    Rng rng(1);
    Eigen::VectorXd b1(4), b2(4);
    init_normal(b1, rng, 1.0);
    init_normal(b2, rng, 1.0);
    PairInput subj = input_of(b1, {"TA"});
    PairInput obj = input_of(b2, {"TB"});
    Eigen::VectorXd before = model.combined_logits(subj, obj, 0, 1).logits;
    model.save(tmp.file("r.ckpt"));
    RelationModel loaded = RelationModel::load_file(tmp.file("r.ckpt"));
    CHECK(loaded.mode() == RelationMode::COARSE);
    CHECK((loaded.combined_logits(subj, obj, 0, 1).logits - before).norm() == 0.0);
    CHECK(loaded.relations().index_of("P2") == 1);
  }
}
