#pragma once

#include <optional>

#include "pds/decoder.hpp"
#include "pds/fusion.hpp"

namespace pds {

// Encoder paired with optional representation fusion. With fusion off the
// model output is the top-stage representation unchanged.
class SpeechEncoderModel : public Module {
 public:
  SpeechEncoderModel(EncoderConfig cfg, bool fusion_on, uint64_t seed);

  struct Encoded {
    std::vector<LevelOutput> levels;
    Tensor out;  // fused representation (or the top level)
    ValidMask out_mask;
  };

  Encoded forward(const FeatureBatch& batch, const EncodeObserver* observer = nullptr);
  // Gradient wrt input features given dLoss/d(out).
  Tensor backward(const Tensor& g_out);

  void collect_params(std::vector<Parameter*>& out) override;
  void set_training(bool on) override;

  bool fusion_on() const { return fusion.has_value(); }

  PdsEncoder encoder;
  std::optional<FusionModule> fusion;
};

// Encoder(+fusion) + transformer decoder; the toy sequence-to-sequence path.
class EncDecModel : public Module {
 public:
  EncDecModel(EncoderConfig enc_cfg, bool fusion_on, DecoderConfig dec_cfg, uint64_t seed);

  struct Output {
    Decoder::ForwardResult dec;
    SpeechEncoderModel::Encoded enc;
  };

  Output forward(const FeatureBatch& batch, const std::vector<std::vector<int64_t>>& targets,
                 bool want_weights = false);
  Tensor backward(const Tensor& glogits);  // grad wrt input features

  void collect_params(std::vector<Parameter*>& out) override;
  void set_training(bool on) override;

  SpeechEncoderModel encoder_model;
  Decoder decoder;
};

// Encoder(+fusion) + per-position linear classifier head.
class ClassifierModel : public Module {
 public:
  ClassifierModel(EncoderConfig enc_cfg, bool fusion_on, int64_t num_classes, uint64_t seed);

  struct Output {
    Tensor logits;  // [B, T_M, num_classes]
    ValidMask mask;
  };

  Output forward(const FeatureBatch& batch);
  Tensor backward(const Tensor& glogits);

  void collect_params(std::vector<Parameter*>& out) override;
  void set_training(bool on) override;

  SpeechEncoderModel encoder_model;
  Linear head;
};

}  // namespace pds
