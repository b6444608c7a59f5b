#include "pds/blocks.hpp"

#include <cmath>

#include "pds/kernels.hpp"

namespace pds {

BlockType block_type_from_string(const std::string& s) {
  if (s == "transformer") return BlockType::kTransformer;
  if (s == "conformer") return BlockType::kConformer;
  throw ConfigError("unknown block type '" + s + "' (transformer|conformer)");
}

std::string to_string(BlockType t) {
  return t == BlockType::kTransformer ? "transformer" : "conformer";
}

FeedForward::FeedForward(const std::string& name, int64_t dim, int64_t hidden, Rng& rng)
    : inner(name + ".inner", dim, hidden, rng), outer(name + ".outer", hidden, dim, rng) {}

Tensor FeedForward::forward(const Tensor& x) {
  Tensor h = inner.forward(x);
  if (training_) {
    Tensor a = ops::relu(h);
    cached_pre_act_ = std::move(h);
    return outer.forward(a);
  }
  kernels::relu(h.numel(), h.data(), h.data());
  return outer.forward(h);
}

Tensor FeedForward::backward(const Tensor& gy) {
  Tensor ga = outer.backward(gy);
  Tensor gh = ops::relu_backward(ga, cached_pre_act_);
  return inner.backward(gh);
}

void FeedForward::collect_params(std::vector<Parameter*>& out) {
  inner.collect_params(out);
  outer.collect_params(out);
}

void FeedForward::set_training(bool on) {
  training_ = on;
  inner.set_training(on);
  outer.set_training(on);
}

TransformerBlock::TransformerBlock(const std::string& name, int64_t dim, int64_t heads,
                                   int64_t ffn_dim, double dropout, Rng& rng)
    : ln_attn(name + ".ln_attn", dim),
      ln_ffn(name + ".ln_ffn", dim),
      attn(name + ".attn", dim, heads, rng),
      ffn(name + ".ffn", dim, ffn_dim, rng),
      drop_attn_(dropout, &rng),
      drop_ffn_(dropout, &rng) {}

Tensor TransformerBlock::forward(const Tensor& x, const ValidMask& mask) {
  mask_ = mask;
  Tensor a = ln_attn.forward(x);
  Tensor m = drop_attn_.forward(attn.forward(a, a, a, mask));
  Tensor h = x;
  kernels::add_inplace(h.numel(), h.data(), m.data());
  Tensor f = drop_ffn_.forward(ffn.forward(ln_ffn.forward(h)));
  kernels::add_inplace(f.numel(), f.data(), h.data());
  zero_padded(f, mask);
  return f;
}

Tensor TransformerBlock::backward(const Tensor& gy) {
  Tensor g = gy;
  zero_padded(g, mask_);
  Tensor gf = ln_ffn.backward(ffn.backward(drop_ffn_.backward(g)));
  Tensor gh = g;
  kernels::add_inplace(gh.numel(), gh.data(), gf.data());
  AttentionGrads ag = attn.backward(drop_attn_.backward(gh));
  kernels::add_inplace(ag.query.numel(), ag.query.data(), ag.key.data());
  kernels::add_inplace(ag.query.numel(), ag.query.data(), ag.value.data());
  Tensor ga = ln_attn.backward(ag.query);
  kernels::add_inplace(ga.numel(), ga.data(), gh.data());
  return ga;
}

void TransformerBlock::collect_params(std::vector<Parameter*>& out) {
  ln_attn.collect_params(out);
  attn.collect_params(out);
  ln_ffn.collect_params(out);
  ffn.collect_params(out);
}

void TransformerBlock::set_training(bool on) {
  training_ = on;
  ln_attn.set_training(on);
  attn.set_training(on);
  ln_ffn.set_training(on);
  ffn.set_training(on);
  drop_attn_.set_training(on);
  drop_ffn_.set_training(on);
}

ConformerConvModule::ConformerConvModule(const std::string& name, int64_t dim,
                                         int64_t depthwise_kernel, Rng& rng)
    : pw_in(name + ".pw_in", dim, 2 * dim, rng),
      norm(name + ".norm", dim),
      pw_out(name + ".pw_out", dim, dim, rng),
      pad_((depthwise_kernel - 1) / 2) {
  const double bound = std::sqrt(6.0 / static_cast<double>(depthwise_kernel + 1));
  depthwise =
      Parameter(name + ".depthwise", Tensor::uniform({depthwise_kernel, dim}, rng, -bound, bound));
}

Tensor ConformerConvModule::forward(const Tensor& x, const ValidMask& mask) {
  mask_ = mask;
  Tensor g = pw_in.forward(x);
  if (training_) cached_glu_in_ = g;
  Tensor h = ops::glu(g);
  // the depthwise window crosses item boundaries, so padded frames must be
  // exact zeros before it runs
  zero_padded(h, mask);
  if (training_) cached_dw_in_ = h;
  Tensor d = ops::depthwise_conv1d(h, depthwise.value, pad_);
  Tensor n = norm.forward(d, mask);
  if (training_) cached_bn_out_ = n;
  return pw_out.forward(ops::swish(n));
}

Tensor ConformerConvModule::backward(const Tensor& gy) {
  Tensor gs = pw_out.backward(gy);
  Tensor gn = ops::swish_backward(gs, cached_bn_out_);
  Tensor gd = norm.backward(gn);
  Tensor gh;
  ops::depthwise_conv1d_backward(gd, cached_dw_in_, depthwise.value, pad_, &gh,
                                 &depthwise.grad());
  zero_padded(gh, mask_);
  Tensor gg = ops::glu_backward(gh, cached_glu_in_);
  return pw_in.backward(gg);
}

void ConformerConvModule::collect_params(std::vector<Parameter*>& out) {
  pw_in.collect_params(out);
  out.push_back(&depthwise);
  norm.collect_params(out);
  pw_out.collect_params(out);
}

void ConformerConvModule::set_training(bool on) {
  training_ = on;
  pw_in.set_training(on);
  norm.set_training(on);
  pw_out.set_training(on);
}

ConformerBlock::ConformerBlock(const std::string& name, int64_t dim, int64_t heads,
                               int64_t ffn_dim, double dropout, Rng& rng)
    : ln_ffn1(name + ".ln_ffn1", dim),
      ln_attn(name + ".ln_attn", dim),
      ln_conv(name + ".ln_conv", dim),
      ln_ffn2(name + ".ln_ffn2", dim),
      ln_final(name + ".ln_final", dim),
      ffn1(name + ".ffn1", dim, ffn_dim, rng),
      ffn2(name + ".ffn2", dim, ffn_dim, rng),
      attn(name + ".attn", dim, heads, rng),
      conv(name + ".conv", dim, kDepthwiseKernel, rng),
      drop_ffn1_(dropout, &rng),
      drop_attn_(dropout, &rng),
      drop_conv_(dropout, &rng),
      drop_ffn2_(dropout, &rng) {}

Tensor ConformerBlock::forward(const Tensor& x, const ValidMask& mask) {
  mask_ = mask;
  Tensor h = x;
  Tensor f1 = drop_ffn1_.forward(ffn1.forward(ln_ffn1.forward(h)));
  kernels::axpy(h.numel(), 0.5, f1.data(), h.data());
  Tensor a = ln_attn.forward(h);
  Tensor m = drop_attn_.forward(attn.forward(a, a, a, mask));
  kernels::add_inplace(h.numel(), h.data(), m.data());
  Tensor c = drop_conv_.forward(conv.forward(ln_conv.forward(h), mask));
  kernels::add_inplace(h.numel(), h.data(), c.data());
  Tensor f2 = drop_ffn2_.forward(ffn2.forward(ln_ffn2.forward(h)));
  kernels::axpy(h.numel(), 0.5, f2.data(), h.data());
  Tensor y = ln_final.forward(h);
  zero_padded(y, mask);
  return y;
}

Tensor ConformerBlock::backward(const Tensor& gy) {
  Tensor g = gy;
  zero_padded(g, mask_);
  Tensor gh = ln_final.backward(g);

  Tensor gf2 = drop_ffn2_.backward(gh);
  for (int64_t i = 0; i < gf2.numel(); ++i) gf2[i] *= 0.5;
  Tensor g2 = ln_ffn2.backward(ffn2.backward(gf2));
  kernels::add_inplace(gh.numel(), gh.data(), g2.data());

  Tensor gc = conv.backward(drop_conv_.backward(gh));
  Tensor g3 = ln_conv.backward(gc);
  kernels::add_inplace(gh.numel(), gh.data(), g3.data());

  AttentionGrads ag = attn.backward(drop_attn_.backward(gh));
  kernels::add_inplace(ag.query.numel(), ag.query.data(), ag.key.data());
  kernels::add_inplace(ag.query.numel(), ag.query.data(), ag.value.data());
  Tensor g4 = ln_attn.backward(ag.query);
  kernels::add_inplace(gh.numel(), gh.data(), g4.data());

  Tensor gf1 = drop_ffn1_.backward(gh);
  for (int64_t i = 0; i < gf1.numel(); ++i) gf1[i] *= 0.5;
  Tensor g5 = ln_ffn1.backward(ffn1.backward(gf1));
  kernels::add_inplace(gh.numel(), gh.data(), g5.data());
  return gh;
}

void ConformerBlock::collect_params(std::vector<Parameter*>& out) {
  ln_ffn1.collect_params(out);
  ffn1.collect_params(out);
  ln_attn.collect_params(out);
  attn.collect_params(out);
  ln_conv.collect_params(out);
  conv.collect_params(out);
  ln_ffn2.collect_params(out);
  ffn2.collect_params(out);
  ln_final.collect_params(out);
}

void ConformerBlock::set_training(bool on) {
  training_ = on;
  ln_ffn1.set_training(on);
  ffn1.set_training(on);
  ln_attn.set_training(on);
  attn.set_training(on);
  ln_conv.set_training(on);
  conv.set_training(on);
  ln_ffn2.set_training(on);
  ffn2.set_training(on);
  ln_final.set_training(on);
  drop_ffn1_.set_training(on);
  drop_attn_.set_training(on);
  drop_conv_.set_training(on);
  drop_ffn2_.set_training(on);
}

std::unique_ptr<ContextBlock> make_context_block(BlockType type, const std::string& name,
                                                 int64_t dim, int64_t heads, int64_t ffn_dim,
                                                 double dropout, Rng& rng) {
  if (type == BlockType::kTransformer)
    return std::make_unique<TransformerBlock>(name, dim, heads, ffn_dim, dropout, rng);
  return std::make_unique<ConformerBlock>(name, dim, heads, ffn_dim, dropout, rng);
}

}  // namespace pds
