#include "pds/model.hpp"

namespace pds {

namespace {

Rng head_rng(uint64_t seed) { return Rng(seed ^ 0x9e3779b97f4a7c15ull); }

}  // namespace

SpeechEncoderModel::SpeechEncoderModel(EncoderConfig cfg, bool fusion_on, uint64_t seed)
    : encoder(cfg, seed) {
  if (fusion_on) fusion.emplace(encoder.config(), seed + 1);
}

SpeechEncoderModel::Encoded SpeechEncoderModel::forward(const FeatureBatch& batch,
                                                        const EncodeObserver* observer) {
  Encoded enc;
  enc.levels = encoder.encode(batch, observer);
  enc.out_mask = enc.levels.back().mask;
  enc.out = fusion ? fusion->forward(enc.levels) : enc.levels.back().rep;
  return enc;
}

Tensor SpeechEncoderModel::backward(const Tensor& g_out) {
  std::vector<Tensor> level_grads;
  if (fusion) {
    level_grads = fusion->backward(g_out);
  } else {
    level_grads.resize(static_cast<size_t>(encoder.num_stages()));
    level_grads.back() = g_out;
  }
  return encoder.backward(std::move(level_grads));
}

void SpeechEncoderModel::collect_params(std::vector<Parameter*>& out) {
  encoder.collect_params(out);
  if (fusion) fusion->collect_params(out);
}

void SpeechEncoderModel::set_training(bool on) {
  training_ = on;
  encoder.set_training(on);
  if (fusion) fusion->set_training(on);
}

EncDecModel::EncDecModel(EncoderConfig enc_cfg, bool fusion_on, DecoderConfig dec_cfg,
                         uint64_t seed)
    : encoder_model(enc_cfg, fusion_on, seed), decoder(dec_cfg, seed + 7919) {
  if (dec_cfg.hidden_dim != enc_cfg.output_dim())
    throw ConfigError("model: decoder hidden dim must match encoder output dim");
}

EncDecModel::Output EncDecModel::forward(const FeatureBatch& batch,
                                         const std::vector<std::vector<int64_t>>& targets,
                                         bool want_weights) {
  Output out;
  out.enc = encoder_model.forward(batch);
  out.dec = decoder.forward(out.enc.out, out.enc.out_mask, targets, want_weights);
  return out;
}

Tensor EncDecModel::backward(const Tensor& glogits) {
  Tensor g_enc = decoder.backward(glogits);
  return encoder_model.backward(g_enc);
}

void EncDecModel::collect_params(std::vector<Parameter*>& out) {
  encoder_model.collect_params(out);
  decoder.collect_params(out);
}

void EncDecModel::set_training(bool on) {
  training_ = on;
  encoder_model.set_training(on);
  decoder.set_training(on);
}

ClassifierModel::ClassifierModel(EncoderConfig enc_cfg, bool fusion_on, int64_t num_classes,
                                 uint64_t seed)
    : encoder_model(enc_cfg, fusion_on, seed),
      head([&] {
        Rng rng = head_rng(seed);
        return Linear("head", enc_cfg.output_dim(), num_classes, rng);
      }()) {}

ClassifierModel::Output ClassifierModel::forward(const FeatureBatch& batch) {
  SpeechEncoderModel::Encoded enc = encoder_model.forward(batch);
  Output out;
  out.logits = head.forward(enc.out);
  out.mask = enc.out_mask;
  return out;
}

Tensor ClassifierModel::backward(const Tensor& glogits) {
  Tensor g = head.backward(glogits);
  return encoder_model.backward(g);
}

void ClassifierModel::collect_params(std::vector<Parameter*>& out) {
  encoder_model.collect_params(out);
  head.collect_params(out);
}

void ClassifierModel::set_training(bool on) {
  training_ = on;
  encoder_model.set_training(on);
  head.set_training(on);
}

}  // namespace pds
