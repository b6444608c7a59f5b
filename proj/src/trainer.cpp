#include "pds/trainer.hpp"

#include <cmath>

#include "pds/ops.hpp"

namespace pds {

Adam::Adam(std::vector<Parameter*> params, AdamConfig cfg)
    : params_(std::move(params)), cfg_(cfg) {
  for (Parameter* p : params_) {
    m_.emplace_back(static_cast<size_t>(p->numel()), 0.0);
    v_.emplace_back(static_cast<size_t>(p->numel()), 0.0);
  }
}

void Adam::zero_grad() {
  for (Parameter* p : params_) p->value.zero_grad();
}

void Adam::step() {
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (size_t i = 0; i < params_.size(); ++i) {
    Parameter* p = params_[i];
    const std::vector<double>& g = p->value.grad();
    std::vector<double>& m = m_[i];
    std::vector<double>& v = v_[i];
    for (size_t j = 0; j < g.size(); ++j) {
      m[j] = cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * g[j];
      v[j] = cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * g[j] * g[j];
      const double mhat = m[j] / bc1;
      const double vhat = v[j] / bc2;
      p->value[static_cast<int64_t>(j)] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
  }
}

ToyTask toy_task_from_string(const std::string& s) {
  if (s == "copy") return ToyTask::kCopy;
  if (s == "classify") return ToyTask::kPerUnitClassification;
  throw ConfigError("unknown toy task '" + s + "' (copy|classify)");
}

namespace {

constexpr int64_t kBos = 0;
constexpr int64_t kEos = 1;
constexpr int64_t kFirstContent = 2;

struct ToyBatch {
  FeatureBatch features;
  std::vector<std::vector<int64_t>> token_seqs;  // content tokens only
};

// Every content token owns a fixed random 80-channel signature; an item is
// its token sequence with each signature repeated `ratio` times.
struct ToyDataGen {
  Tensor signatures;  // [vocab, input_dim]
  int64_t ratio;
  int64_t input_dim;
  const ToyTrainConfig* cfg;

  ToyDataGen(const ToyTrainConfig& c, int64_t r, int64_t in_dim, uint64_t seed)
      : ratio(r), input_dim(in_dim), cfg(&c) {
    Rng rng(seed);
    signatures = Tensor::randn({c.vocab, in_dim}, rng, 1.0);
  }

  ToyBatch sample(Rng& rng, int64_t batch_size) const {
    std::uniform_int_distribution<int64_t> len_dist(cfg->min_tokens, cfg->max_tokens);
    std::uniform_int_distribution<int64_t> tok_dist(kFirstContent, cfg->vocab - 1);
    ToyBatch out;
    std::vector<Tensor> items;
    for (int64_t b = 0; b < batch_size; ++b) {
      const int64_t n = len_dist(rng);
      std::vector<int64_t> seq;
      for (int64_t i = 0; i < n; ++i) seq.push_back(tok_dist(rng));
      Tensor item({n * ratio, input_dim});
      for (int64_t i = 0; i < n; ++i) {
        const double* sig = signatures.data() + seq[static_cast<size_t>(i)] * input_dim;
        for (int64_t r = 0; r < ratio; ++r)
          std::copy(sig, sig + input_dim, item.data() + (i * ratio + r) * input_dim);
      }
      items.push_back(std::move(item));
      out.token_seqs.push_back(std::move(seq));
    }
    out.features = make_feature_batch(items);
    return out;
  }
};

std::vector<std::vector<int64_t>> decoder_inputs(const ToyBatch& batch) {
  std::vector<std::vector<int64_t>> out;
  for (const auto& seq : batch.token_seqs) {
    std::vector<int64_t> in = {kBos};
    in.insert(in.end(), seq.begin(), seq.end());
    out.push_back(std::move(in));
  }
  return out;
}

std::vector<int64_t> flat_labels_copy(const ToyBatch& batch, int64_t max_len) {
  // labels per decoder position: the sequence shifted left, closed by EOS;
  // padded positions carry -1 and are ignored by the loss
  std::vector<int64_t> labels;
  for (const auto& seq : batch.token_seqs) {
    for (size_t i = 0; i < seq.size(); ++i) labels.push_back(seq[i]);
    labels.push_back(kEos);
    for (int64_t i = static_cast<int64_t>(seq.size()) + 1; i < max_len; ++i) labels.push_back(-1);
  }
  return labels;
}

std::vector<int64_t> flat_labels_classify(const ToyBatch& batch, int64_t max_len) {
  std::vector<int64_t> labels;
  for (const auto& seq : batch.token_seqs) {
    for (size_t i = 0; i < seq.size(); ++i) labels.push_back(seq[i] - kFirstContent);
    for (int64_t i = static_cast<int64_t>(seq.size()); i < max_len; ++i) labels.push_back(-1);
  }
  return labels;
}

}  // namespace

ToyTrainResult train_toy(const ToyTrainConfig& cfg) {
  EncoderConfig enc_cfg = preset_config(cfg.preset, cfg.hidden_dim, cfg.heads, cfg.ffn_dim);
  enc_cfg.block_type = cfg.block_type;
  enc_cfg.dropout = cfg.dropout;
  const int64_t ratio = enc_cfg.ratio();

  ToyDataGen gen(cfg, ratio, enc_cfg.input_dim, cfg.seed * 31 + 17);
  Rng data_rng(cfg.seed);
  Rng eval_rng(cfg.seed + 1000003);

  ToyTrainResult result;
  const int64_t classes = cfg.vocab - kFirstContent;

  if (cfg.task == ToyTask::kCopy) {
    DecoderConfig dec_cfg;
    dec_cfg.num_layers = cfg.decoder_layers;
    dec_cfg.hidden_dim = cfg.hidden_dim;
    dec_cfg.heads = cfg.heads;
    dec_cfg.ffn_dim = cfg.ffn_dim;
    dec_cfg.vocab_size = cfg.vocab;
    dec_cfg.dropout = cfg.dropout;
    EncDecModel model(enc_cfg, cfg.fusion, dec_cfg, cfg.seed);
    model.set_training(true);
    Adam opt(model.parameters(), {cfg.lr, 0.9, 0.98, 1e-9});

    ToyBatch fixed = gen.sample(data_rng, cfg.batch);
    for (int64_t step = 0; step < cfg.steps; ++step) {
      ToyBatch batch = cfg.fixed_batch ? fixed : gen.sample(data_rng, cfg.batch);
      opt.zero_grad();
      EncDecModel::Output out = model.forward(batch.features, decoder_inputs(batch));
      Tensor glogits;
      const double loss =
          ops::cross_entropy(out.dec.logits, flat_labels_copy(batch, out.dec.logits.dim(1)),
                             &glogits);
      if (!std::isfinite(loss))
        throw NumericError("toy training diverged at step " + std::to_string(step));
      model.backward(glogits);
      opt.step();
      result.losses.push_back(loss);
    }

    // held-out greedy decoding
    model.set_training(false);
    ToyBatch eval = gen.sample(eval_rng, cfg.eval_items);
    int64_t hits = 0;
    for (int64_t b = 0; b < cfg.eval_items; ++b) {
      const auto& seq = eval.token_seqs[static_cast<size_t>(b)];
      Tensor item({static_cast<int64_t>(seq.size()) * ratio, enc_cfg.input_dim});
      std::copy(eval.features.features.data() +
                    b * eval.features.mask.max_time * enc_cfg.input_dim,
                eval.features.features.data() +
                    (b * eval.features.mask.max_time + item.dim(0)) * enc_cfg.input_dim,
                item.data());
      FeatureBatch single = make_feature_batch({item});
      SpeechEncoderModel::Encoded enc = model.encoder_model.forward(single);
      std::vector<int64_t> decoded = model.decoder.greedy_decode(
          enc.out, enc.out_mask, kBos, kEos, static_cast<int64_t>(seq.size()) + 4);
      if (decoded == seq) ++hits;
    }
    result.exact_match = static_cast<double>(hits) / static_cast<double>(cfg.eval_items);
    if (model.encoder_model.fusion)
      result.fusion_weights = model.encoder_model.fusion->weights_report();
  } else {
    ClassifierModel model(enc_cfg, cfg.fusion, classes, cfg.seed);
    model.set_training(true);
    Adam opt(model.parameters(), {cfg.lr, 0.9, 0.98, 1e-9});

    ToyBatch fixed = gen.sample(data_rng, cfg.batch);
    for (int64_t step = 0; step < cfg.steps; ++step) {
      ToyBatch batch = cfg.fixed_batch ? fixed : gen.sample(data_rng, cfg.batch);
      opt.zero_grad();
      ClassifierModel::Output out = model.forward(batch.features);
      Tensor glogits;
      const double loss =
          ops::cross_entropy(out.logits, flat_labels_classify(batch, out.logits.dim(1)), &glogits);
      if (!std::isfinite(loss))
        throw NumericError("toy training diverged at step " + std::to_string(step));
      model.backward(glogits);
      opt.step();
      result.losses.push_back(loss);
    }

    model.set_training(false);
    ToyBatch eval = gen.sample(eval_rng, cfg.eval_items);
    ClassifierModel::Output out = model.forward(eval.features);
    const std::vector<int64_t> labels = flat_labels_classify(eval, out.logits.dim(1));
    int64_t hits = 0,
            total = 0;
    for (int64_t r = 0; r < static_cast<int64_t>(labels.size()); ++r) {
      if (labels[static_cast<size_t>(r)] < 0) continue;
      const double* row = out.logits.data() + r * classes;
      int64_t best = 0;
      for (int64_t c = 1; c < classes; ++c)
        if (row[c] > row[best]) best = c;
      ++total;
      if (best == labels[static_cast<size_t>(r)]) ++hits;
    }
    result.accuracy = total > 0 ? static_cast<double>(hits) / static_cast<double>(total) : 0.0;
    if (model.encoder_model.fusion)
      result.fusion_weights = model.encoder_model.fusion->weights_report();
  }

  const int64_t n = static_cast<int64_t>(result.losses.size());
  const int64_t head = std::min<int64_t>(10, n);
  for (int64_t i = 0; i < head; ++i) result.baseline_loss += result.losses[static_cast<size_t>(i)];
  result.baseline_loss /= static_cast<double>(head);
  for (int64_t i = n - head; i < n; ++i) result.final_loss += result.losses[static_cast<size_t>(i)];
  result.final_loss /= static_cast<double>(head);
  return result;
}

}  // namespace pds
