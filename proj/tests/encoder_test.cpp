#include "kgx/encoder.hpp"

#include "doctest.h"
#include "support.hpp"

using namespace kgx;

namespace {

EncoderConfig tiny_config() {
  EncoderConfig cfg;
  cfg.vocab_size = 20;
  cfg.dim = 6;
  cfg.ffn_dim = 8;
  cfg.layers = 2;
  cfg.max_len = 16;
  cfg.seed = 11;
  return cfg;
}

// Scalar probe loss: weighted sum of all output entries, so d_out is fixed.
double probe_loss(const Encoder& enc, const std::vector<int>& ids,
                  const Eigen::MatrixXd& probe) {
  return (enc.encode(ids).cwiseProduct(probe)).sum();
}

}  // namespace

TEST_SUITE("encoder") {
  TEST_CASE("shapes and pooling") {
    Encoder enc(tiny_config());
    std::vector<int> ids{1, 7, 8, 9, 2};
    auto h = enc.encode(ids);
    CHECK(h.rows() == 5);
    CHECK(h.cols() == 6);
    CHECK(h.allFinite());
    auto pooled = enc.encode_pooled(ids);
    CHECK((pooled.transpose() - h.row(0)).norm() == 0.0);
  }

  TEST_CASE("deterministic in inference mode") {
    Encoder a(tiny_config());
    Encoder b(tiny_config());
    std::vector<int> ids{1, 7, 8, 2};
    CHECK(a.encode(ids) == b.encode(ids));
    CHECK(a.encode(ids) == a.encode(ids));
  }

  TEST_CASE("rejects empty, over-long and out-of-range input") {
    Encoder enc(tiny_config());
    CHECK_THROWS_AS(enc.encode({}), ValidationError);
    CHECK_THROWS_AS(enc.encode(std::vector<int>(17, 1)), ValidationError);
    CHECK_THROWS_AS(enc.encode({1, 25, 2}), ValidationError);
  }

  TEST_CASE("backward matches finite differences") {
    Encoder enc(tiny_config());
    std::vector<int> ids{1, 7, 8, 9, 7, 2};  // token 7 repeated: accumulation path
    Rng rng(3);
    Eigen::MatrixXd probe(6, 6);
    init_normal(probe, rng, 1.0);

    EncoderActivations acts;
    enc.forward(ids, acts);
    enc.zero_grads();
    enc.backward(acts, probe);

    auto loss = [&]() { return probe_loss(enc, ids, probe); };

    CHECK(testsup::max_grad_rel_error(enc.tok_emb(), enc.tok_emb_grad(), loss) < 1e-5);
    CHECK(testsup::max_grad_rel_error(enc.pos_emb(), enc.pos_emb_grad(), loss) < 1e-5);
    for (int l = 0; l < 2; ++l) {
      CHECK(testsup::max_grad_rel_error(enc.layer(l).w1, enc.layer_grad(l).w1, loss) < 1e-5);
      CHECK(testsup::max_grad_rel_error(enc.layer(l).w2, enc.layer_grad(l).w2, loss) < 1e-5);
      CHECK(testsup::max_grad_rel_error(enc.layer(l).b1, enc.layer_grad(l).b1, loss) < 1e-5);
      CHECK(testsup::max_grad_rel_error(enc.layer(l).b2, enc.layer_grad(l).b2, loss) < 1e-5);
      CHECK(testsup::max_grad_rel_error(enc.layer(l).gain, enc.layer_grad(l).gain, loss) < 1e-5);
    }
  }

  TEST_CASE("checkpoint round-trip preserves outputs") {
    testsup::TempDir tmp("enc");
    Encoder enc(tiny_config());
    std::vector<int> ids{1, 12, 13, 2};
    auto before = enc.encode(ids);
    {
      BinaryWriter w(tmp.file("enc.bin"), "KGXTEST1", Encoder::config_json(tiny_config()));
      enc.save(w, "enc.");
      w.close();
    }
    BinaryReader r(tmp.file("enc.bin"), "KGXTEST1");
    EncoderConfig cfg = Encoder::config_from_json(r.header());
    Encoder loaded(cfg);
    loaded.load(r, "enc.");
    CHECK(loaded.encode(ids) == before);
  }

  TEST_CASE("encode_tokens truncates over-length input") {
    EncoderConfig cfg = tiny_config();
    cfg.max_len = 10;
    Encoder enc(cfg);
    Tokenizer tok({"a", "b", "c", "d", "e", "f", "g", "h"});
    std::vector<std::string> doc(8, "a");
    auto rep = build_mention_rep(tok, doc, {4, 4}, 4);
    REQUIRE(rep.length() > 10);
    auto h = encode_tokens(enc, rep);
    CHECK(h.rows() <= 10);
    auto pooled = encode_pooled(enc, rep);
    CHECK((pooled.transpose() - h.row(0)).norm() == 0.0);
  }
}
