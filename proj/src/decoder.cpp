#include "pds/decoder.hpp"

#include <algorithm>
#include <cmath>

#include "pds/kernels.hpp"
#include "pds/ops.hpp"

namespace pds {

void DecoderConfig::validate() const {
  if (num_layers < 1) throw ConfigError("decoder: num_layers must be positive");
  if (hidden_dim < 1 || hidden_dim % 2 != 0)
    throw ConfigError("decoder: hidden_dim must be positive and even");
  if (heads < 1 || hidden_dim % heads != 0)
    throw ConfigError("decoder: hidden_dim not divisible by heads");
  if (vocab_size < 2) throw ConfigError("decoder: vocab_size must be at least 2");
  if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("decoder: dropout must be in [0,1)");
}

DecoderLayer::DecoderLayer(const std::string& name, const DecoderConfig& cfg, Rng& rng,
                           Rng* dropout_rng)
    : ln_self(name + ".ln_self", cfg.hidden_dim),
      ln_cross(name + ".ln_cross", cfg.hidden_dim),
      ln_ffn(name + ".ln_ffn", cfg.hidden_dim),
      self_attn(name + ".self_attn", cfg.hidden_dim, cfg.heads, rng),
      cross_attn(name + ".cross_attn", cfg.hidden_dim, cfg.heads, rng),
      ffn(name + ".ffn", cfg.hidden_dim, cfg.ffn_dim, rng),
      drop_self_(cfg.dropout, dropout_rng),
      drop_cross_(cfg.dropout, dropout_rng),
      drop_ffn_(cfg.dropout, dropout_rng) {}

Tensor DecoderLayer::forward(const Tensor& x, const ValidMask& tgt_mask, const Tensor& enc_out,
                             const ValidMask& enc_mask, Tensor* cross_weights) {
  tgt_mask_ = tgt_mask;
  Tensor a = ln_self.forward(x);
  Tensor s = drop_self_.forward(self_attn.forward(a, a, a, tgt_mask, /*causal=*/true));
  Tensor h = x;
  kernels::add_inplace(h.numel(), h.data(), s.data());

  Tensor c = ln_cross.forward(h);
  Tensor cr = drop_cross_.forward(
      cross_attn.forward(c, enc_out, enc_out, enc_mask, /*causal=*/false, cross_weights));
  kernels::add_inplace(h.numel(), h.data(), cr.data());

  Tensor f = drop_ffn_.forward(ffn.forward(ln_ffn.forward(h)));
  kernels::add_inplace(h.numel(), h.data(), f.data());
  zero_padded(h, tgt_mask);
  return h;
}

Tensor DecoderLayer::backward(const Tensor& gy, Tensor* g_enc) {
  Tensor g = gy;
  zero_padded(g, tgt_mask_);
  Tensor gf = ln_ffn.backward(ffn.backward(drop_ffn_.backward(g)));
  Tensor gh = g;
  kernels::add_inplace(gh.numel(), gh.data(), gf.data());

  AttentionGrads cg = cross_attn.backward(drop_cross_.backward(gh));
  kernels::add_inplace(g_enc->numel(), g_enc->data(), cg.key.data());
  kernels::add_inplace(g_enc->numel(), g_enc->data(), cg.value.data());
  Tensor gc = ln_cross.backward(cg.query);
  kernels::add_inplace(gh.numel(), gh.data(), gc.data());

  AttentionGrads sg = self_attn.backward(drop_self_.backward(gh));
  kernels::add_inplace(sg.query.numel(), sg.query.data(), sg.key.data());
  kernels::add_inplace(sg.query.numel(), sg.query.data(), sg.value.data());
  Tensor gs = ln_self.backward(sg.query);
  kernels::add_inplace(gh.numel(), gh.data(), gs.data());
  return gh;
}

void DecoderLayer::collect_params(std::vector<Parameter*>& out) {
  ln_self.collect_params(out);
  self_attn.collect_params(out);
  ln_cross.collect_params(out);
  cross_attn.collect_params(out);
  ln_ffn.collect_params(out);
  ffn.collect_params(out);
}

void DecoderLayer::set_training(bool on) {
  training_ = on;
  ln_self.set_training(on);
  self_attn.set_training(on);
  ln_cross.set_training(on);
  cross_attn.set_training(on);
  ln_ffn.set_training(on);
  ffn.set_training(on);
  drop_self_.set_training(on);
  drop_cross_.set_training(on);
  drop_ffn_.set_training(on);
}

Decoder::Decoder(DecoderConfig cfg, uint64_t seed)
    : cfg_(cfg),
      rng_(seed),
      embedding_("decoder.embedding", (cfg.validate(), cfg.vocab_size), cfg.hidden_dim, rng_),
      drop_in_(cfg.dropout, &rng_),
      ln_final_("decoder.ln_final", cfg.hidden_dim),
      out_proj_("decoder.out_proj", cfg.hidden_dim, cfg.vocab_size, rng_) {
  for (int64_t l = 0; l < cfg_.num_layers; ++l)
    layers_.push_back(std::make_unique<DecoderLayer>("decoder.layer" + std::to_string(l + 1),
                                                     cfg_, rng_, &rng_));
}

Decoder::ForwardResult Decoder::forward(const Tensor& enc_out, const ValidMask& enc_mask,
                                        const std::vector<std::vector<int64_t>>& targets,
                                        bool want_weights) {
  if (targets.empty()) throw ConfigError("decoder: empty target batch");
  int64_t max_len = 0;
  std::vector<int64_t> lengths;
  for (const auto& seq : targets) {
    if (seq.empty()) throw ConfigError("decoder: empty target sequence");
    lengths.push_back(static_cast<int64_t>(seq.size()));
    max_len = std::max(max_len, lengths.back());
  }
  if (enc_out.dim(2) != cfg_.hidden_dim)
    throw ConfigError("decoder: encoder output dim " + std::to_string(enc_out.dim(2)) +
                      " != decoder hidden dim " + std::to_string(cfg_.hidden_dim));
  tgt_mask_ = ValidMask(std::move(lengths), max_len);
  enc_shape_ = enc_out.shape();

  Tensor x = embedding_.forward(targets, max_len);
  const Tensor pe = ops::sinusoidal_pe(max_len, cfg_.hidden_dim);
  const int64_t batch = x.dim(0);
  for (int64_t b = 0; b < batch; ++b)
    for (int64_t t = 0; t < max_len; ++t) {
      double* xr = x.data() + (b * max_len + t) * cfg_.hidden_dim;
      const double* pr = pe.data() + t * cfg_.hidden_dim;
      for (int64_t d = 0; d < cfg_.hidden_dim; ++d) xr[d] += pr[d];
    }
  zero_padded(x, tgt_mask_);
  x = drop_in_.forward(x);

  ForwardResult result;
  result.tgt_mask = tgt_mask_;
  for (auto& layer : layers_) {
    Tensor* weights = nullptr;
    if (want_weights) {
      result.cross_attention.emplace_back();
      weights = &result.cross_attention.back();
    }
    x = layer->forward(x, tgt_mask_, enc_out, enc_mask, weights);
  }
  result.logits = out_proj_.forward(ln_final_.forward(x));
  return result;
}

Tensor Decoder::backward(const Tensor& glogits) {
  Tensor g = ln_final_.backward(out_proj_.backward(glogits));
  Tensor g_enc(enc_shape_);
  for (int64_t l = static_cast<int64_t>(layers_.size()) - 1; l >= 0; --l)
    g = layers_[static_cast<size_t>(l)]->backward(g, &g_enc);
  g = drop_in_.backward(g);
  zero_padded(g, tgt_mask_);
  embedding_.backward(g);
  return g_enc;
}

std::vector<int64_t> Decoder::greedy_decode(const Tensor& enc_out_item,
                                            const ValidMask& enc_mask, int64_t bos, int64_t eos,
                                            int64_t max_len) {
  if (max_len < 1) throw ConfigError("greedy_decode: max_len must be >= 1");
  std::vector<int64_t> seq = {bos};
  std::vector<int64_t> out;
  for (int64_t step = 0; step < max_len; ++step) {
    ForwardResult r = forward(enc_out_item, enc_mask, {seq});
    const int64_t pos = static_cast<int64_t>(seq.size()) - 1;
    const double* row = r.logits.data() + pos * cfg_.vocab_size;
    int64_t best = 0;
    for (int64_t v = 1; v < cfg_.vocab_size; ++v)
      if (row[v] > row[best]) best = v;
    if (best == eos) break;
    out.push_back(best);
    seq.push_back(best);
  }
  return out;
}

void Decoder::collect_params(std::vector<Parameter*>& out) {
  embedding_.collect_params(out);
  for (auto& l : layers_) l->collect_params(out);
  ln_final_.collect_params(out);
  out_proj_.collect_params(out);
}

void Decoder::set_training(bool on) {
  training_ = on;
  embedding_.set_training(on);
  drop_in_.set_training(on);
  for (auto& l : layers_) l->set_training(on);
  ln_final_.set_training(on);
  out_proj_.set_training(on);
}

}  // namespace pds
