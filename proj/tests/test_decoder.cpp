#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "pds/decoder.hpp"
#include "pds/gradcheck.hpp"
#include "pds/ops.hpp"

using namespace pds;

namespace {

DecoderConfig micro_cfg(int64_t vocab = 7) {
  DecoderConfig cfg;
  cfg.num_layers = 2;
  cfg.hidden_dim = 8;
  cfg.heads = 2;
  cfg.ffn_dim = 12;
  cfg.vocab_size = vocab;
  cfg.dropout = 0.0;
  return cfg;
}

}  // namespace

TEST_CASE("cross-attention rows sum to one over valid encoder positions") {
  Rng rng(1);
  Decoder dec(micro_cfg(), 2);
  dec.set_training(false);
  Tensor enc = Tensor::randn({2, 6, 8}, rng);
  ValidMask enc_mask({6, 4}, 6);
  zero_padded(enc, enc_mask);
  Decoder::ForwardResult r = dec.forward(enc, enc_mask, {{0, 2, 3}, {0, 4}}, true);
  REQUIRE(r.cross_attention.size() == 2);
  const std::vector<int64_t> enc_valid = {6, 4};
  const std::vector<int64_t> tgt_valid = {3, 2};
  for (const Tensor& w : r.cross_attention) {
    for (int64_t b = 0; b < 2; ++b)
      for (int64_t h = 0; h < 2; ++h)
        for (int64_t q = 0; q < tgt_valid[static_cast<size_t>(b)]; ++q) {
          double sum = 0.0;
          for (int64_t e = 0; e < 6; ++e) {
            sum += w(b, h, q, e);
            if (e >= enc_valid[static_cast<size_t>(b)]) CHECK(w(b, h, q, e) == 0.0);
          }
          CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
        }
  }
}

TEST_CASE("cross-attention mass equals the target length") {
  Rng rng(3);
  Decoder dec(micro_cfg(), 4);
  dec.set_training(false);
  Tensor enc = Tensor::randn({1, 9, 8}, rng);
  ValidMask enc_mask({7}, 9);
  zero_padded(enc, enc_mask);
  const std::vector<std::vector<int64_t>> targets = {{0, 1, 2, 3, 4}};
  Decoder::ForwardResult r = dec.forward(enc, enc_mask, targets, true);
  for (const Tensor& w : r.cross_attention) {
    // head-averaged, summed over every (target, encoder) pair
    double total = 0.0;
    for (int64_t h = 0; h < 2; ++h)
      for (int64_t q = 0; q < 5; ++q)
        for (int64_t e = 0; e < 9; ++e) total += w(int64_t{0}, h, q, e);
    CHECK(total / 2.0 == doctest::Approx(5.0).epsilon(1e-9));
  }
}

TEST_CASE("future target tokens cannot change earlier logits") {
  Rng rng(5);
  Decoder dec(micro_cfg(), 6);
  dec.set_training(false);
  Tensor enc = Tensor::randn({1, 5, 8}, rng);
  ValidMask enc_mask = ValidMask::full(1, 5);

  Decoder::ForwardResult a = dec.forward(enc, enc_mask, {{0, 2, 3, 4, 5}});
  Decoder::ForwardResult b = dec.forward(enc, enc_mask, {{0, 2, 3, 5, 4}});  // swap the future
  for (int64_t t = 0; t < 3; ++t)
    for (int64_t v = 0; v < 7; ++v)
      CHECK(a.logits(int64_t{0}, t, v) == b.logits(int64_t{0}, t, v));
  double diff = 0.0;
  for (int64_t v = 0; v < 7; ++v)
    diff = std::max(diff, std::abs(a.logits(int64_t{0}, int64_t{3}, v) -
                                   b.logits(int64_t{0}, int64_t{3}, v)));
  CHECK(diff > 1e-9);
}

TEST_CASE("empty targets are rejected") {
  Rng rng(7);
  Decoder dec(micro_cfg(), 8);
  Tensor enc = Tensor::randn({1, 4, 8}, rng);
  ValidMask mask = ValidMask::full(1, 4);
  CHECK_THROWS_AS(dec.forward(enc, mask, {}), ConfigError);
  CHECK_THROWS_AS(dec.forward(enc, mask, {{}}), ConfigError);
}

TEST_CASE("decoder rejects mismatched encoder width") {
  Rng rng(9);
  Decoder dec(micro_cfg(), 10);
  Tensor enc = Tensor::randn({1, 4, 6}, rng);
  CHECK_THROWS_AS(dec.forward(enc, ValidMask::full(1, 4), {{0, 1}}), ConfigError);
}

TEST_CASE("greedy decoding terminates and is deterministic") {
  Rng rng(11);
  Decoder dec(micro_cfg(), 12);
  dec.set_training(false);
  Tensor enc = Tensor::randn({1, 6, 8}, rng);
  ValidMask mask = ValidMask::full(1, 6);
  std::vector<int64_t> out1 = dec.greedy_decode(enc, mask, 0, 1, 9);
  std::vector<int64_t> out2 = dec.greedy_decode(enc, mask, 0, 1, 9);
  CHECK(out1.size() <= 9);
  CHECK(out1 == out2);
  CHECK_THROWS_AS(dec.greedy_decode(enc, mask, 0, 1, 0), ConfigError);
}

TEST_CASE("decoder gradients match central differences") {
  Rng rng(13);
  Decoder dec(micro_cfg(6), 14);
  dec.set_training(true);
  Tensor enc = Tensor::randn({2, 5, 8}, rng);
  ValidMask enc_mask({5, 3}, 5);
  zero_padded(enc, enc_mask);
  enc.set_requires_grad(true);
  const std::vector<std::vector<int64_t>> targets = {{0, 2, 3, 4}, {0, 3, 5}};
  const std::vector<int64_t> labels = {2, 3, 4, 1, 3, 5, 1, -1};

  dec.zero_grads();
  Decoder::ForwardResult r = dec.forward(enc, enc_mask, targets);
  Tensor glogits;
  ops::cross_entropy(r.logits, labels, &glogits);
  Tensor genc = dec.backward(glogits);
  std::copy(genc.data(), genc.data() + genc.numel(), enc.grad().begin());

  auto loss = [&] {
    Decoder::ForwardResult rr = dec.forward(enc, enc_mask, targets);
    return ops::cross_entropy(rr.logits, labels);
  };
  std::vector<GradTarget> targets_gc;
  for (Parameter* p : dec.parameters()) targets_gc.push_back(GradTarget::of(*p));
  targets_gc.push_back(GradTarget::of_input("encoder.out", enc));
  GradCheckReport report = grad_check(loss, targets_gc);
  CHECK(report.pass);
  CHECK(report.max_rel_err < 1e-4);
}

TEST_CASE("padded target positions do not disturb valid logits") {
  Rng rng(15);
  Decoder dec(micro_cfg(), 16);
  dec.set_training(false);
  Tensor enc = Tensor::randn({1, 5, 8}, rng);
  ValidMask mask = ValidMask::full(1, 5);
  // the same sequence alone and padded within a ragged batch
  Decoder::ForwardResult alone = dec.forward(enc, mask, {{0, 2, 3}});
  Tensor enc2({2, 5, 8});
  for (int64_t i = 0; i < enc.numel(); ++i) {
    enc2[i] = enc[i];
    enc2[enc.numel() + i] = enc[i];
  }
  Decoder::ForwardResult padded =
      dec.forward(enc2, ValidMask::full(2, 5), {{0, 2, 3}, {0, 2, 3, 4, 5, 6}});
  for (int64_t t = 0; t < 3; ++t)
    for (int64_t v = 0; v < 7; ++v)
      CHECK(alone.logits(int64_t{0}, t, v) ==
            doctest::Approx(padded.logits(int64_t{0}, t, v)).epsilon(1e-12));
}
