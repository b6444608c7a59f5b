// Acceptance suite: one test case per criterion, each printing a single
// PASS/FAIL line. Run via ctest or directly; the benchmark criterion is the
// long pole and uses every hardware thread it is given.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <omp.h>

#include <cmath>
#include <cstdio>

#include "pds/analysis.hpp"
#include "pds/bench.hpp"
#include "pds/gradcheck.hpp"
#include "pds/model.hpp"
#include "pds/ops.hpp"
#include "pds/synthetic.hpp"
#include "pds/trainer.hpp"

using namespace pds;

namespace {

struct Criterion {
  std::string name;
  bool ok = true;
  explicit Criterion(std::string n) : name(std::move(n)) {}
  ~Criterion() {
    std::printf("%-28s %s\n", name.c_str(), ok ? "PASS" : "FAIL");
    std::fflush(stdout);
  }
};

#define CRIT_CHECK(crit, expr)      \
  do {                              \
    const bool ok_ = (expr);        \
    (crit).ok = (crit).ok && ok_;   \
    CHECK(ok_);                     \
  } while (0)

double dot(const Tensor& a, const Tensor& b) {
  double s = 0.0;
  for (int64_t i = 0; i < a.numel(); ++i) s += a[i] * b[i];
  return s;
}

FeatureBatch random_batch(const std::vector<int64_t>& lengths, uint64_t seed) {
  Rng rng(seed);
  std::vector<Tensor> items;
  for (int64_t len : lengths) items.push_back(Tensor::randn({len, 80}, rng));
  return make_feature_batch(items);
}

EncoderConfig micro(const std::string& preset, BlockType bt = BlockType::kTransformer,
                    int64_t dim = 16, int64_t heads = 2, int64_t ffn = 24) {
  EncoderConfig cfg = preset_config(preset, dim, heads, ffn);
  cfg.block_type = bt;
  cfg.dropout = 0.0;
  return cfg;
}

double brute_force_similarity(const Tensor& rep, int64_t window) {
  const int64_t time = rep.dim(0), dim = rep.dim(1);
  double total = 0.0;
  for (int64_t i = 0; i < time; ++i) {
    double acc = 0.0;
    int64_t n = 0;
    for (int64_t j = i - window; j <= i + window; ++j) {
      if (j == i || j < 0 || j >= time) continue;
      double d = 0.0, ni = 0.0, nj = 0.0;
      for (int64_t c = 0; c < dim; ++c) {
        d += rep(i, c) * rep(j, c);
        ni += rep(i, c) * rep(i, c);
        nj += rep(j, c) * rep(j, c);
      }
      acc += (ni == 0.0 || nj == 0.0) ? 0.0 : d / (std::sqrt(ni) * std::sqrt(nj));
      ++n;
    }
    total += n > 0 ? acc / static_cast<double>(n) : 0.0;
  }
  return total / static_cast<double>(time);
}

}  // namespace

TEST_CASE("criterion 1: preset table fidelity") {
  Criterion crit("1 preset-table-fidelity");
  const struct {
    const char* name;
    std::vector<int64_t> strides, layers;
  } rows[] = {
      {"stack-4", {2, 2}, {0, 12}},
      {"pds-base-8", {2, 2, 1, 2}, {3, 3, 3, 3}},
      {"pds-base-16", {2, 2, 2, 2}, {2, 2, 6, 2}},
      {"pds-base-32", {2, 2, 2, 2, 2}, {2, 2, 3, 3, 2}},
      {"pds-deep-8", {2, 2, 1, 2}, {7, 7, 7, 9}},
      {"pds-deep-16", {2, 2, 2, 2}, {5, 5, 12, 8}},
      {"pds-deep-32", {2, 2, 2, 2, 2}, {5, 5, 7, 7, 6}},
  };
  CRIT_CHECK(crit, preset_names().size() == 7);
  for (const auto& row : rows) {
    EncoderConfig cfg = preset_config(row.name);
    CRIT_CHECK(crit, cfg.stages.size() == row.strides.size());
    for (size_t i = 0; i < cfg.stages.size(); ++i) {
      CRIT_CHECK(crit, cfg.stages[i].stride == row.strides[i]);
      CRIT_CHECK(crit, cfg.stages[i].num_layers == row.layers[i]);
    }
  }
}

TEST_CASE("criterion 2: compression law") {
  Criterion crit("2 compression-law");
  Rng rng(2);
  std::uniform_int_distribution<int64_t> ld(5, 3000);
  for (const std::string& name : preset_names()) {
    EncoderConfig cfg = preset_config(name);
    const std::vector<int64_t> strides = config_strides(cfg);
    const int64_t ratio = cfg.ratio();
    for (int it = 0; it < 1000; ++it) {
      const int64_t len = ld(rng);
      int64_t expect = len;
      for (int64_t s : strides) expect = (expect + s - 1) / s;
      CRIT_CHECK(crit, downsampled_length(len, strides) == expect);
      if (len % ratio == 0) CRIT_CHECK(crit, downsampled_length(len, strides) == len / ratio);
    }
  }
  const std::vector<int64_t> s32 = {2, 2, 2, 2, 2};
  CRIT_CHECK(crit, downsampled_length(3200, s32) == 100);  // divisible: exactly 1/32
  CRIT_CHECK(crit, downsampled_length(3000, s32) == 94);
}

TEST_CASE("criterion 3: gradient verification") {
  Criterion crit("3 gradient-verification");

  // per-op checks
  {
    Rng rng(31);
    Tensor x = Tensor::randn({2, 7, 3}, rng);
    x.set_requires_grad(true);
    Parameter w("w", Tensor::randn({5, 3, 4}, rng, 0.5));
    Parameter b("b", Tensor::randn({4}, rng, 0.5));
    const Tensor gy = Tensor::randn({2, 4, 4}, rng);
    Tensor gx;
    ops::conv1d_backward(gy, x, w.value, 2, 2, &gx, &w.grad(), &b.grad());
    std::copy(gx.data(), gx.data() + gx.numel(), x.grad().begin());
    auto loss = [&] { return dot(ops::conv1d(x, w.value, b.value, 2, 2), gy); };
    CRIT_CHECK(crit, grad_check(loss, {GradTarget::of(w), GradTarget::of(b),
                                       GradTarget::of_input("x", x)})
                         .pass);
  }
  {
    Rng rng(32);
    Tensor x = Tensor::randn({4, 8}, rng);
    x.set_requires_grad(true);
    Parameter gain("gain", Tensor::full({8}, 1.0)), bias("bias", Tensor({8}));
    const Tensor gy = Tensor::randn({4, 8}, rng);
    ops::LayerNormCache cache;
    ops::layer_norm(x, gain.value, bias.value, 1e-5, &cache);
    Tensor gx = ops::layer_norm_backward(gy, cache, gain.value, &gain.grad(), &bias.grad());
    std::copy(gx.data(), gx.data() + gx.numel(), x.grad().begin());
    auto loss = [&] { return dot(ops::layer_norm(x, gain.value, bias.value, 1e-5), gy); };
    CRIT_CHECK(crit, grad_check(loss, {GradTarget::of(gain), GradTarget::of(bias),
                                       GradTarget::of_input("x", x)})
                         .pass);
  }
  {
    Rng rng(33);
    Tensor x = Tensor::randn({2, 5, 3}, rng);
    x.set_requires_grad(true);
    Parameter gain("gain", Tensor::full({3}, 1.0)), bias("bias", Tensor({3}));
    ValidMask mask({5, 4}, 5);
    const Tensor gy = Tensor::randn({2, 5, 3}, rng);
    Tensor rm({3}), rv = Tensor::full({3}, 1.0);
    ops::BatchNormCache cache;
    ops::batch_norm(x, mask, ops::StatsMode::kTrain, rm, rv, gain.value, bias.value, 1e-5, 0.1,
                    &cache);
    Tensor gx = ops::batch_norm_backward(gy, cache, gain.value, &gain.grad(), &bias.grad());
    std::copy(gx.data(), gx.data() + gx.numel(), x.grad().begin());
    auto loss = [&] {
      Tensor m({3}), v = Tensor::full({3}, 1.0);
      return dot(ops::batch_norm(x, mask, ops::StatsMode::kTrain, m, v, gain.value, bias.value,
                                 1e-5, 0.1),
                 gy);
    };
    CRIT_CHECK(crit, grad_check(loss, {GradTarget::of(gain), GradTarget::of(bias),
                                       GradTarget::of_input("x", x)})
                         .pass);
  }
  {
    Rng rng(34);
    for (int which = 0; which < 3; ++which) {
      Tensor x = Tensor::randn({3, 8}, rng);
      x.set_requires_grad(true);
      auto fwd = [&](const Tensor& v) {
        return which == 0 ? ops::relu(v) : which == 1 ? ops::swish(v) : ops::glu(v);
      };
      auto bwd = [&](const Tensor& g, const Tensor& v) {
        return which == 0   ? ops::relu_backward(g, v)
               : which == 1 ? ops::swish_backward(g, v)
                            : ops::glu_backward(g, v);
      };
      const Tensor gy = Tensor::randn(fwd(x).shape(), rng);
      Tensor gx = bwd(gy, x);
      std::copy(gx.data(), gx.data() + gx.numel(), x.grad().begin());
      auto loss = [&] { return dot(fwd(x), gy); };
      CRIT_CHECK(crit, grad_check(loss, {GradTarget::of_input("x", x)}).pass);
    }
  }
  {
    Rng rng(35);
    MultiHeadAttention attn("attn", 8, 2, rng);
    attn.set_training(true);
    Tensor q = Tensor::randn({2, 4, 8}, rng), k = Tensor::randn({2, 5, 8}, rng),
           v = Tensor::randn({2, 5, 8}, rng);
    q.set_requires_grad(true);
    k.set_requires_grad(true);
    v.set_requires_grad(true);
    ValidMask mask({5, 3}, 5);
    const Tensor gy = Tensor::randn({2, 4, 8}, rng);
    attn.zero_grads();
    attn.forward(q, k, v, mask);
    AttentionGrads ag = attn.backward(gy);
    std::copy(ag.query.data(), ag.query.data() + ag.query.numel(), q.grad().begin());
    std::copy(ag.key.data(), ag.key.data() + ag.key.numel(), k.grad().begin());
    std::copy(ag.value.data(), ag.value.data() + ag.value.numel(), v.grad().begin());
    auto loss = [&] { return dot(attn.forward(q, k, v, mask), gy); };
    std::vector<GradTarget> targets;
    for (Parameter* p : attn.parameters()) targets.push_back(GradTarget::of(*p));
    targets.push_back(GradTarget::of_input("q", q));
    targets.push_back(GradTarget::of_input("k", k));
    targets.push_back(GradTarget::of_input("v", v));
    CRIT_CHECK(crit, grad_check(loss, targets).pass);
  }

  // one micro end-to-end model per block type, fusion on, decoder attached
  for (BlockType bt : {BlockType::kTransformer, BlockType::kConformer}) {
    EncoderConfig cfg = micro("pds-base-8", bt, 8, 2, 8);
    for (StageSpec& s : cfg.stages) s.num_layers = 1;
    DecoderConfig dc;
    dc.num_layers = 1;
    dc.hidden_dim = 8;
    dc.heads = 2;
    dc.ffn_dim = 8;
    dc.vocab_size = 6;
    dc.dropout = 0.0;
    EncDecModel model(cfg, true, dc, 36);
    model.set_training(true);

    FeatureBatch batch = random_batch({64, 49}, 37);
    batch.features.set_requires_grad(true);
    const std::vector<std::vector<int64_t>> targets = {{0, 2, 3, 4}, {0, 3, 2}};
    const std::vector<int64_t> labels = {2, 3, 4, 1, 3, 2, 1, -1};

    model.zero_grads();
    EncDecModel::Output out = model.forward(batch, targets);
    Tensor glogits;
    ops::cross_entropy(out.dec.logits, labels, &glogits);
    Tensor gin = model.backward(glogits);
    std::copy(gin.data(), gin.data() + gin.numel(), batch.features.grad().begin());

    auto loss = [&] {
      EncDecModel::Output o = model.forward(batch, targets);
      return ops::cross_entropy(o.dec.logits, labels);
    };
    std::vector<GradTarget> gc;
    for (Parameter* p : model.parameters()) gc.push_back(GradTarget::of(*p));
    gc.push_back(GradTarget::of_input("input.features", batch.features));
    GradCheckReport report = grad_check(loss, gc);
    CRIT_CHECK(crit, report.pass);
    CRIT_CHECK(crit, report.max_rel_err <= 1e-4);
  }
}

TEST_CASE("criterion 4: similarity oracle equivalence") {
  Criterion crit("4 similarity-oracle");
  Rng rng(4);
  std::uniform_int_distribution<int64_t> td(2, 14), dd(1, 8);
  for (int it = 0; it < 100; ++it) {
    Tensor rep = Tensor::randn({td(rng), dd(rng)}, rng);
    for (int64_t w : {1, 2, 3}) {
      const double got = analysis::representation_similarity(rep, w);
      const double want = brute_force_similarity(rep, w);
      CRIT_CHECK(crit, std::abs(got - want) <= 1e-12);
    }
  }
}

TEST_CASE("criterion 5: attention mass conservation and ratio shift") {
  Criterion crit("5 attention-mass");
  const std::vector<std::string> presets = {"stack-4", "pds-base-8", "pds-base-16",
                                            "pds-base-32"};
  FeatureBatch batch = random_batch({960, 730}, 51);
  const std::vector<std::vector<int64_t>> targets = {{0, 2, 3, 4, 2, 3, 4, 2, 3, 4, 2, 3},
                                                     {0, 4, 3, 2, 4, 3, 2, 4, 3}};
  double prev_mean = -1.0;
  for (const std::string& name : presets) {
    EncoderConfig cfg = micro(name);
    SpeechEncoderModel model(cfg, true, 52);
    model.set_training(false);
    SpeechEncoderModel::Encoded enc = model.forward(batch);

    DecoderConfig dc;
    dc.num_layers = 2;
    dc.hidden_dim = cfg.output_dim();
    dc.heads = 2;
    dc.ffn_dim = 24;
    dc.vocab_size = 6;
    dc.dropout = 0.0;
    Decoder dec(dc, 53);
    dec.set_training(false);
    Decoder::ForwardResult r = dec.forward(enc.out, enc.out_mask, targets, true);
    analysis::AttentionStats stats = analysis::attention_weight_distribution(
        r.cross_attention.back(), enc.out_mask, r.tgt_mask);

    const double expected_mass = 12.0 + 9.0;  // total target tokens
    CRIT_CHECK(crit, std::abs(stats.total_mass - expected_mass) <= 1e-9);
    CRIT_CHECK(crit, stats.mean_sum > prev_mean);
    prev_mean = stats.mean_sum;
  }
}

TEST_CASE("criterion 6: directional inference speedup") {
  Criterion crit("6 speedup-directional");
  BenchConfig bc;
  bc.configs = {"stack-4", "pds-base-8", "pds-base-16", "pds-base-32"};
  bc.baseline = "stack-4";
  bc.runs = 10;
  bc.warmup = 3;
  bc.hidden_dim = 256;
  bc.heads = 4;
  bc.ffn_dim = 2048;
  bc.threads = omp_get_num_procs();  // opt-in parallel evaluation
  FeatureBatch batch = synthetic_batch(8, 3000, 80, 6);
  BenchReport report = run_benchmark(bc, batch);

  double speedups[4] = {0, 0, 0, 0};
  for (const BenchEntry& e : report.entries) {
    CRIT_CHECK(crit, e.error.empty());
    std::printf("  %-12s median %9.1f ms  speedup %.3fx  final_len %lld\n", e.config.c_str(),
                e.median_ms, e.speedup, static_cast<long long>(e.final_len));
    if (e.config == "stack-4") speedups[0] = e.speedup;
    if (e.config == "pds-base-8") speedups[1] = e.speedup;
    if (e.config == "pds-base-16") speedups[2] = e.speedup;
    if (e.config == "pds-base-32") speedups[3] = e.speedup;
  }
  CRIT_CHECK(crit, speedups[3] >= 1.1);               // time(32) <= time(stack-4)/1.1
  CRIT_CHECK(crit, speedups[2] >= speedups[1]);       // nondecreasing 8 -> 16
  CRIT_CHECK(crit, speedups[3] >= speedups[2]);       // nondecreasing 16 -> 32
}

TEST_CASE("criterion 7: fusion alignment exactness") {
  Criterion crit("7 fusion-exactness");
  Rng rng(7);
  std::uniform_int_distribution<int64_t> ld(5, 3000);
  // alignment arithmetic for every preset and stage over random lengths
  for (const std::string& name : preset_names()) {
    EncoderConfig cfg = preset_config(name);
    const std::vector<int64_t> strides = config_strides(cfg);
    const size_t stages = strides.size();
    for (int it = 0; it < 1000; ++it) {
      const int64_t len = ld(rng);
      std::vector<int64_t> stage_len(stages);
      int64_t cur = len;
      for (size_t m = 0; m < stages; ++m) {
        cur = (cur + strides[m] - 1) / strides[m];
        stage_len[m] = cur;
      }
      const int64_t final_len = stage_len.back();
      for (size_t m = 0; m < stages; ++m) {
        int64_t ratio = 1;
        for (size_t j = m + 1; j < stages; ++j) ratio *= strides[j];
        const int64_t padded = ratio * final_len;
        CRIT_CHECK(crit, padded >= stage_len[m]);
        CRIT_CHECK(crit, (padded - ratio) / ratio + 1 == final_len);
      }
    }
  }
  // spot check with real modules
  for (const char* name : {"pds-base-8", "pds-base-32"}) {
    EncoderConfig cfg = micro(name, BlockType::kTransformer, 8, 2, 8);
    for (StageSpec& s : cfg.stages) s.num_layers = 0;
    PdsEncoder enc(cfg, 71);
    enc.set_training(false);
    FusionModule fusion(cfg, 72);
    fusion.set_training(false);
    for (uint64_t seed = 0; seed < 4; ++seed) {
      FeatureBatch batch = random_batch({ld(rng), ld(rng)}, 73 + seed);
      std::vector<LevelOutput> levels = enc.encode(batch);
      Tensor out = fusion.forward(levels);
      CRIT_CHECK(crit, out.dim(1) == levels.back().rep.dim(1));
    }
  }

  // identical aligned levels with init weights collapse to the common level
  EncoderConfig flat;
  flat.stages = {{1, 0, 8, 5}, {1, 0, 8, 5}, {1, 0, 8, 5}, {1, 0, 8, 5}};
  flat.heads = 2;
  flat.ffn_dim = 8;
  flat.dropout = 0.0;
  FusionModule fusion(flat, 74);
  fusion.set_training(false);
  std::vector<Parameter*> params;
  fusion.collect_params(params);
  auto get = [&](const std::string& n) -> Parameter* {
    for (Parameter* p : params)
      if (p->name == n) return p;
    return nullptr;
  };
  for (int m = 2; m <= 4; ++m) {
    const std::string s = "fusion.stage" + std::to_string(m);
    get(s + ".pre.gain")->value = get("fusion.stage1.pre.gain")->value;
    get(s + ".pre.bias")->value = get("fusion.stage1.pre.bias")->value;
    get(s + ".conv.kernel")->value = get("fusion.stage1.conv.kernel")->value;
    get(s + ".conv.bias")->value = get("fusion.stage1.conv.bias")->value;
    get(s + ".bn.gain")->value = get("fusion.stage1.bn.gain")->value;
    get(s + ".bn.bias")->value = get("fusion.stage1.bn.bias")->value;
  }
  Rng lrng(75);
  LevelOutput level;
  level.rep = Tensor::randn({2, 10, 8}, lrng);
  level.mask = ValidMask({10, 6}, 10);
  level.nominal_ratio = 1;
  zero_padded(level.rep, level.mask);
  Tensor out = fusion.forward(std::vector<LevelOutput>(4, level));

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
  for (int64_t i = 0; i < out.numel(); ++i)
    CRIT_CHECK(crit, std::abs(out[i] - expect[i]) <= 1e-12 * std::max(1.0, std::abs(expect[i])));
}

TEST_CASE("criterion 8: ctc length validity") {
  Criterion crit("8 ctc-validity");
  const std::vector<int64_t> s32 = {2, 2, 2, 2, 2};
  analysis::CtcVerdict v = analysis::ctc_validity_check(3000, s32, 100);
  CRIT_CHECK(crit, !v.valid);
  CRIT_CHECK(crit, v.final_length == 94);
  v = analysis::ctc_validity_check(3000, s32, 90);
  CRIT_CHECK(crit, v.valid);

  SynthConfig sc;
  sc.n_items = 300;
  sc.min_len = 100;
  sc.max_len = 3000;
  sc.seed = 8;
  FeatureFile corpus = generate_synthetic_features(sc);
  const std::vector<std::vector<int64_t>> stride_sets = {
      {2, 2}, {2, 2, 2}, {2, 2, 2, 2}, {2, 2, 2, 2, 2}};
  int64_t prev_invalid = -1;
  for (const auto& strides : stride_sets) {
    int64_t invalid = 0;
    for (size_t i = 0; i < corpus.items.size(); ++i)
      invalid += analysis::ctc_validity_check(corpus.items[i].dim(0), strides,
                                              corpus.transcript_lengths[i])
                         .valid
                     ? 0
                     : 1;
    CRIT_CHECK(crit, invalid >= prev_invalid);
    prev_invalid = invalid;
  }
}

TEST_CASE("criterion 9: batch independence") {
  Criterion crit("9 batch-independence");
  const std::vector<int64_t> lengths = {96, 57, 33};
  for (const std::string& name : preset_names()) {
    EncoderConfig cfg = micro(name);
    PdsEncoder enc(cfg, 91);
    enc.set_training(false);
    FeatureBatch batch = random_batch(lengths, 92);
    std::vector<LevelOutput> batched = enc.encode(batch);
    for (size_t item = 0; item < lengths.size(); ++item) {
      Tensor single({lengths[item], 80});
      for (int64_t t = 0; t < lengths[item]; ++t)
        for (int64_t c = 0; c < 80; ++c)
          single(t, c) = batch.features(static_cast<int64_t>(item), t, c);
      std::vector<LevelOutput> alone = enc.encode(make_feature_batch({single}));
      for (size_t m = 0; m < alone.size(); ++m) {
        const int64_t len = alone[m].mask.lengths[0];
        const int64_t dim = alone[m].rep.dim(2);
        double worst = 0.0;
        for (int64_t t = 0; t < len; ++t)
          for (int64_t d = 0; d < dim; ++d)
            worst = std::max(worst, std::abs(alone[m].rep(int64_t{0}, t, d) -
                                             batched[m].rep(static_cast<int64_t>(item), t, d)));
        CRIT_CHECK(crit, worst < 1e-9);
      }
    }
  }
}

TEST_CASE("criterion 10: toy trainability") {
  Criterion crit("10 toy-trainability");
  ToyTrainConfig tc;
  tc.preset = "pds-base-8";
  tc.task = ToyTask::kCopy;
  tc.steps = 2000;
  tc.seed = 10;
  ToyTrainResult r = train_toy(tc);
  std::printf("  baseline CE %.4f final CE %.4f exact-match %.2f\n", r.baseline_loss,
              r.final_loss, r.exact_match.value_or(-1.0));
  CRIT_CHECK(crit, r.final_loss <= 0.5 * r.baseline_loss);
  CRIT_CHECK(crit, r.fusion_weights.size() == 4);
  bool moved = false;
  for (const auto& [stage, w] : r.fusion_weights) moved |= std::abs(w - 0.25) > 1e-6;
  CRIT_CHECK(crit, moved);
  CRIT_CHECK(crit, r.exact_match.has_value());
  if (r.exact_match) CRIT_CHECK(crit, *r.exact_match >= 0.95);
}
