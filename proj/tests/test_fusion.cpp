#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "pds/fusion.hpp"
#include "pds/gradcheck.hpp"
#include "pds/model.hpp"
#include "pds/ops.hpp"

using namespace pds;

namespace {

EncoderConfig micro(const std::string& preset, int64_t dim = 8) {
  EncoderConfig cfg = preset_config(preset, dim, 2, 8);
  cfg.dropout = 0.0;
  for (StageSpec& s : cfg.stages) s.num_layers = 0;
  return cfg;
}

FeatureBatch random_batch(const std::vector<int64_t>& lengths, uint64_t seed) {
  Rng rng(seed);
  std::vector<Tensor> items;
  for (int64_t len : lengths) items.push_back(Tensor::randn({len, 80}, rng));
  return make_feature_batch(items);
}

}  // namespace

TEST_CASE("pipeline ratios are suffix stride products") {
  FusionModule fusion(micro("pds-base-32"), 1);
  REQUIRE(fusion.num_stages() == 5);
  CHECK(fusion.length_ratio(0) == 16);
  CHECK(fusion.length_ratio(1) == 8);
  CHECK(fusion.length_ratio(2) == 4);
  CHECK(fusion.length_ratio(3) == 2);
  CHECK(fusion.length_ratio(4) == 1);

  FusionModule f8(micro("pds-base-8"), 1);  // strides 2-2-1-2
  CHECK(f8.length_ratio(0) == 4);
  CHECK(f8.length_ratio(1) == 2);
  CHECK(f8.length_ratio(2) == 2);
  CHECK(f8.length_ratio(3) == 1);
}

TEST_CASE("alignment lands every stage on the final length") {
  Rng rng(2);
  std::uniform_int_distribution<int64_t> ld(5, 3000);
  for (const std::string& name : preset_names()) {
    EncoderConfig cfg = micro(name);
    PdsEncoder enc(cfg, 3);
    enc.set_training(false);
    FusionModule fusion(cfg, 4);
    fusion.set_training(false);
    for (int it = 0; it < 6; ++it) {
      FeatureBatch batch = random_batch({ld(rng), ld(rng)}, 5 + static_cast<uint64_t>(it));
      std::vector<LevelOutput> levels = enc.encode(batch);
      Tensor out = fusion.forward(levels);
      CHECK(out.dim(1) == levels.back().rep.dim(1));
      CHECK(out.dim(2) == cfg.output_dim());
    }
  }
}

TEST_CASE("ceil-chain drift pads to the nominal product length") {
  // 3000 frames under pds-base-32: stage 2 holds 750 valid frames but
  // nominally 2 * 8 * 94 > 750, so the tail is zero-padded before the conv
  EncoderConfig cfg = micro("pds-base-32");
  PdsEncoder enc(cfg, 6);
  enc.set_training(false);
  FusionModule fusion(cfg, 7);
  fusion.set_training(false);
  FeatureBatch batch = random_batch({3000}, 8);
  std::vector<LevelOutput> levels = enc.encode(batch);
  CHECK(levels[1].mask.lengths[0] == 750);
  CHECK(fusion.length_ratio(1) * levels.back().rep.dim(1) == 752);
  Tensor out = fusion.forward(levels);
  CHECK(out.dim(1) == 94);
}

TEST_CASE("fresh weights start at one over the stage count") {
  FusionModule fusion(micro("pds-base-16"), 9);
  std::vector<std::pair<int64_t, double>> report = fusion.weights_report();
  REQUIRE(report.size() == 4);
  for (size_t m = 0; m < 4; ++m) {
    CHECK(report[m].first == static_cast<int64_t>(m + 1));
    CHECK(report[m].second == doctest::Approx(0.25).epsilon(1e-15));
  }
}

TEST_CASE("identical aligned levels with init weights reproduce the common level") {
  // four stride-1 stages: all ratios are 1, so feeding the same tensor to
  // pipelines with identical parameters gives Sum(1/M * Z) = Z
  EncoderConfig cfg;
  cfg.stages = {{1, 0, 8, 5}, {1, 0, 8, 5}, {1, 0, 8, 5}, {1, 0, 8, 5}};
  cfg.heads = 2;
  cfg.ffn_dim = 8;
  cfg.dropout = 0.0;
  FusionModule fusion(cfg, 10);
  fusion.set_training(false);

  std::vector<Parameter*> params;
  fusion.collect_params(params);
  auto get = [&](const std::string& name) -> Parameter* {
    for (Parameter* p : params)
      if (p->name == name) return p;
    REQUIRE(false);
    return nullptr;
  };
  // copy stage-1 pipeline parameters into the other stages
  for (int m = 2; m <= 4; ++m) {
    const std::string s = "fusion.stage" + std::to_string(m);
    get(s + ".pre.gain")->value = get("fusion.stage1.pre.gain")->value;
    get(s + ".pre.bias")->value = get("fusion.stage1.pre.bias")->value;
    get(s + ".conv.kernel")->value = get("fusion.stage1.conv.kernel")->value;
    get(s + ".conv.bias")->value = get("fusion.stage1.conv.bias")->value;
    get(s + ".bn.gain")->value = get("fusion.stage1.bn.gain")->value;
    get(s + ".bn.bias")->value = get("fusion.stage1.bn.bias")->value;
  }

  Rng rng(11);
  LevelOutput level;
  level.rep = Tensor::randn({2, 12, 8}, rng);
  level.mask = ValidMask({12, 7}, 12);
  level.nominal_ratio = 1;
  zero_padded(level.rep, level.mask);
  std::vector<LevelOutput> levels(4, level);
  Tensor out = fusion.forward(levels);

  // the common aligned + normalized level, recomputed once by hand
  Tensor a = ops::layer_norm(level.rep, get("fusion.stage1.pre.gain")->value,
                             get("fusion.stage1.pre.bias")->value, 1e-5);
  zero_padded(a, level.mask);
  Tensor conv = ops::conv1d(a, get("fusion.stage1.conv.kernel")->value,
                            get("fusion.stage1.conv.bias")->value, 1, 0);
  Tensor rm({8}), rv = Tensor::full({8}, 1.0);
  Tensor bn = ops::batch_norm(conv, level.mask, ops::StatsMode::kEval, rm, rv,
                              get("fusion.stage1.bn.gain")->value,
                              get("fusion.stage1.bn.bias")->value, 1e-5, 0.1);
  Tensor expect = ops::layer_norm(ops::relu(bn), get("fusion.post.gain")->value,
                                  get("fusion.post.bias")->value, 1e-5);
  zero_padded(expect, level.mask);
  REQUIRE(out.numel() == expect.numel());
  for (int64_t i = 0; i < out.numel(); ++i)
    CHECK(out[i] == doctest::Approx(expect[i]).epsilon(1e-12));
}

TEST_CASE("only the top level flows when lower weights are zeroed") {
  EncoderConfig cfg = micro("pds-base-16", 8);
  PdsEncoder enc(cfg, 14);
  enc.set_training(false);
  FusionModule fusion(cfg, 15);
  fusion.set_training(false);
  std::vector<Parameter*> params;
  fusion.collect_params(params);
  for (Parameter* p : params) {
    if (p->name == "fusion.w1" || p->name == "fusion.w2" || p->name == "fusion.w3")
      p->value[0] = 0.0;
    if (p->name == "fusion.w4") p->value[0] = 1.0;
  }
  FeatureBatch batch = random_batch({64, 33}, 16);
  std::vector<LevelOutput> levels = enc.encode(batch);
  Tensor out = fusion.forward(levels);

  // recompute stage 4's pipeline alone
  auto get = [&](const std::string& name) -> Parameter* {
    for (Parameter* p : params)
      if (p->name == name) return p;
    REQUIRE(false);
    return nullptr;
  };
  Tensor a = ops::layer_norm(levels[3].rep, get("fusion.stage4.pre.gain")->value,
                             get("fusion.stage4.pre.bias")->value, 1e-5);
  zero_padded(a, levels[3].mask);
  Tensor conv = ops::conv1d(a, get("fusion.stage4.conv.kernel")->value,
                            get("fusion.stage4.conv.bias")->value, 1, 0);
  Tensor rm({8}), rv = Tensor::full({8}, 1.0);
  Tensor bn = ops::batch_norm(conv, levels[3].mask, ops::StatsMode::kEval, rm, rv,
                              get("fusion.stage4.bn.gain")->value,
                              get("fusion.stage4.bn.bias")->value, 1e-5, 0.1);
  Tensor expect = ops::layer_norm(ops::relu(bn), get("fusion.post.gain")->value,
                                  get("fusion.post.bias")->value, 1e-5);
  zero_padded(expect, levels[3].mask);
  for (int64_t i = 0; i < out.numel(); ++i)
    CHECK(out[i] == doctest::Approx(expect[i]).epsilon(1e-12));
}

TEST_CASE("disabling fusion leaves encoder outputs untouched") {
  EncoderConfig cfg = micro("pds-base-16", 8);
  FeatureBatch batch = random_batch({64, 40}, 17);

  SpeechEncoderModel with(cfg, true, 18);
  with.set_training(false);
  SpeechEncoderModel without(cfg, false, 18);
  without.set_training(false);

  SpeechEncoderModel::Encoded a = with.forward(batch);
  SpeechEncoderModel::Encoded b = without.forward(batch);
  REQUIRE(a.levels.size() == b.levels.size());
  for (size_t m = 0; m < a.levels.size(); ++m)
    CHECK(a.levels[m].rep.values() == b.levels[m].rep.values());
  CHECK(b.out.values() == b.levels.back().rep.values());
  CHECK(a.out.values() != a.levels.back().rep.values());
}

TEST_CASE("every stage and every weight receives gradient") {
  EncoderConfig cfg = micro("pds-base-16", 8);
  PdsEncoder enc(cfg, 19);
  enc.set_training(true);
  FusionModule fusion(cfg, 20);
  fusion.set_training(true);

  FeatureBatch batch = random_batch({48, 31}, 21);
  std::vector<LevelOutput> levels = enc.encode(batch);
  Tensor out = fusion.forward(levels);
  Rng rng(22);
  Tensor gy = Tensor::randn(out.shape(), rng);
  std::vector<Tensor> level_grads = fusion.backward(gy);
  REQUIRE(level_grads.size() == 4);
  for (size_t m = 0; m < 4; ++m) {
    double norm = 0.0;
    for (int64_t i = 0; i < level_grads[m].numel(); ++i)
      norm += level_grads[m][i] * level_grads[m][i];
    CHECK(norm > 1e-12);
  }
  std::vector<Parameter*> params;
  fusion.collect_params(params);
  for (Parameter* p : params) {
    if (p->name.rfind("fusion.w", 0) != 0) continue;
    CHECK(std::abs(p->value.grad()[0]) > 1e-12);
  }
}

TEST_CASE("fusion gradients match central differences") {
  EncoderConfig cfg = micro("pds-base-8", 8);
  PdsEncoder enc(cfg, 23);
  enc.set_training(false);
  FusionModule fusion(cfg, 24);
  fusion.set_training(true);

  FeatureBatch batch = random_batch({32, 17}, 25);
  std::vector<LevelOutput> levels = enc.encode(batch);
  Rng rng(26);
  fusion.zero_grads();
  Tensor out = fusion.forward(levels);
  const Tensor gy = Tensor::randn(out.shape(), rng);
  fusion.backward(gy);

  auto loss = [&] {
    Tensor o = fusion.forward(levels);
    double s = 0.0;
    for (int64_t i = 0; i < o.numel(); ++i) s += o[i] * gy[i];
    return s;
  };
  std::vector<GradTarget> targets;
  for (Parameter* p : fusion.parameters()) targets.push_back(GradTarget::of(*p));
  GradCheckReport report = grad_check(loss, targets);
  CHECK(report.pass);
  CHECK(report.max_rel_err < 1e-4);
}

TEST_CASE("fusion rejects malformed level lists") {
  EncoderConfig cfg = micro("pds-base-16", 8);
  FusionModule fusion(cfg, 27);
  CHECK_THROWS_AS(fusion.forward({}), ConfigError);

  PdsEncoder enc(cfg, 28);
  enc.set_training(false);
  FeatureBatch batch = random_batch({40}, 29);
  std::vector<LevelOutput> levels = enc.encode(batch);
  levels.pop_back();
  CHECK_THROWS_AS(fusion.forward(levels), ConfigError);
}

TEST_CASE("fused output is zero beyond each item's final length") {
  EncoderConfig cfg = micro("pds-base-16", 8);
  PdsEncoder enc(cfg, 30);
  enc.set_training(false);
  FusionModule fusion(cfg, 31);
  fusion.set_training(false);
  FeatureBatch batch = random_batch({64, 20}, 32);
  std::vector<LevelOutput> levels = enc.encode(batch);
  Tensor out = fusion.forward(levels);
  const ValidMask& mask = levels.back().mask;
  for (int64_t b = 0; b < out.dim(0); ++b)
    for (int64_t t = mask.lengths[static_cast<size_t>(b)]; t < out.dim(1); ++t)
      for (int64_t d = 0; d < out.dim(2); ++d) CHECK(out(b, t, d) == 0.0);
}
