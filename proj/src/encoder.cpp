#include "pds/encoder.hpp"

#include <cmath>

#include "pds/kernels.hpp"

namespace pds {

int64_t EncoderConfig::ratio() const {
  int64_t r = 1;
  for (const StageSpec& s : stages) r *= s.stride;
  return r;
}

int64_t EncoderConfig::output_dim() const {
  if (stages.empty()) throw ConfigError("encoder: no stages");
  return stages.back().hidden_dim;
}

int64_t EncoderConfig::total_layers() const {
  int64_t n = 0;
  for (const StageSpec& s : stages) n += s.num_layers;
  return n;
}

void EncoderConfig::validate() const {
  if (stages.empty()) throw ConfigError("encoder: stage list is empty");
  if (input_dim < 1) throw ConfigError("encoder: input_dim must be positive");
  if (heads < 1) throw ConfigError("encoder: heads must be positive");
  if (ffn_dim < 1) throw ConfigError("encoder: ffn_dim must be positive");
  if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("encoder: dropout must be in [0,1)");
  for (size_t i = 0; i < stages.size(); ++i) {
    const StageSpec& s = stages[i];
    const std::string where = "stage " + std::to_string(i + 1);
    if (s.stride < 1) throw ConfigError(where + ": stride must be positive");
    if (s.num_layers < 0) throw ConfigError(where + ": negative layer count");
    if (s.hidden_dim < 1) throw ConfigError(where + ": hidden_dim must be positive");
    if (s.hidden_dim % 2 != 0)
      throw ConfigError(where + ": hidden_dim must be even for the position encoding");
    if (s.hidden_dim % heads != 0)
      throw ConfigError(where + ": hidden_dim not divisible by heads");
    if (s.ds_kernel < 1 || s.ds_kernel % 2 == 0)
      throw ConfigError(where + ": ds_kernel must be odd and positive");
  }
}

namespace {

struct PresetRow {
  const char* name;
  std::vector<int64_t> strides;
  std::vector<int64_t> layers;
};

const std::vector<PresetRow>& preset_table() {
  static const std::vector<PresetRow> rows = {
      {"stack-4", {2, 2}, {0, 12}},
      {"pds-base-8", {2, 2, 1, 2}, {3, 3, 3, 3}},
      {"pds-base-16", {2, 2, 2, 2}, {2, 2, 6, 2}},
      {"pds-base-32", {2, 2, 2, 2, 2}, {2, 2, 3, 3, 2}},
      {"pds-deep-8", {2, 2, 1, 2}, {7, 7, 7, 9}},
      {"pds-deep-16", {2, 2, 2, 2}, {5, 5, 12, 8}},
      {"pds-deep-32", {2, 2, 2, 2, 2}, {5, 5, 7, 7, 6}},
  };
  return rows;
}

}  // namespace

const std::vector<std::string>& preset_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> out;
    for (const PresetRow& r : preset_table()) out.push_back(r.name);
    return out;
  }();
  return names;
}

bool is_preset(const std::string& name) {
  for (const PresetRow& r : preset_table())
    if (name == r.name) return true;
  return false;
}

EncoderConfig preset_config(const std::string& name, int64_t hidden_dim, int64_t heads,
                            int64_t ffn_dim) {
  for (const PresetRow& row : preset_table()) {
    if (name != row.name) continue;
    EncoderConfig cfg;
    cfg.heads = heads;
    cfg.ffn_dim = ffn_dim;
    for (size_t i = 0; i < row.strides.size(); ++i)
      cfg.stages.push_back({row.strides[i], row.layers[i], hidden_dim, 5});
    cfg.validate();
    return cfg;
  }
  std::string known;
  for (const std::string& n : preset_names()) known += (known.empty() ? "" : ", ") + n;
  throw ConfigError("unknown preset '" + name + "'; valid presets: " + known);
}

int64_t downsampled_length(int64_t length, std::span<const int64_t> strides) {
  if (strides.empty()) throw ConfigError("downsampled_length: empty stride list");
  for (int64_t s : strides) length = (length + s - 1) / s;
  return length;
}

std::vector<int64_t> downsampled_lengths(const std::vector<int64_t>& lengths,
                                         std::span<const int64_t> strides) {
  std::vector<int64_t> out;
  out.reserve(lengths.size());
  for (int64_t l : lengths) out.push_back(downsampled_length(l, strides));
  return out;
}

std::vector<int64_t> config_strides(const EncoderConfig& cfg) {
  std::vector<int64_t> out;
  for (const StageSpec& s : cfg.stages) out.push_back(s.stride);
  return out;
}

FeatureBatch make_feature_batch(const std::vector<Tensor>& items) {
  if (items.empty()) throw ConfigError("feature batch: no items");
  const int64_t dim = items[0].dim(1);
  int64_t max_time = 0;
  std::vector<int64_t> lengths;
  for (const Tensor& t : items) {
    if (t.rank() != 2 || t.dim(1) != dim)
      throw ConfigError("feature batch: inconsistent item shape");
    lengths.push_back(t.dim(0));
    max_time = std::max(max_time, t.dim(0));
  }
  FeatureBatch batch;
  batch.features = Tensor({static_cast<int64_t>(items.size()), max_time, dim});
  for (size_t i = 0; i < items.size(); ++i) {
    const Tensor& t = items[i];
    std::copy(t.data(), t.data() + t.numel(),
              batch.features.data() + static_cast<int64_t>(i) * max_time * dim);
  }
  batch.mask = ValidMask(std::move(lengths), max_time);
  return batch;
}

DownsampleModule::DownsampleModule(const std::string& name, const StageSpec& spec,
                                   int64_t in_dim, Rng& rng)
    : norm(name + ".norm", spec.hidden_dim),
      stride_(spec.stride),
      ksize_(spec.ds_kernel),
      pad_((spec.ds_kernel - 1) / 2) {
  const double bound =
      std::sqrt(6.0 / static_cast<double>(spec.ds_kernel * (in_dim + spec.hidden_dim)));
  kernel = Parameter(name + ".kernel",
                     Tensor::uniform({spec.ds_kernel, in_dim, spec.hidden_dim}, rng, -bound, bound));
  bias = Parameter(name + ".bias", Tensor({spec.hidden_dim}));
}

LevelOutput DownsampleModule::forward(const LevelOutput& in) {
  for (size_t i = 0; i < in.mask.lengths.size(); ++i)
    if (in.mask.lengths[i] < 1)
      throw InputError("downsample: item " + std::to_string(i) + " has length 0");
  std::vector<int64_t> out_lengths(in.mask.lengths.size());
  for (size_t i = 0; i < in.mask.lengths.size(); ++i) {
    out_lengths[i] = (in.mask.lengths[i] + stride_ - 1) / stride_;
    if (out_lengths[i] < 1)
      throw InputError("downsample: item " + std::to_string(i) + " would compress to length 0");
  }

  Tensor y = ops::conv1d(in.rep, kernel.value, bias.value, stride_, pad_);
  if (training_) cached_input_ = in.rep;
  y = norm.forward(y);

  const int64_t out_time = y.dim(1), dim = y.dim(2), batch = y.dim(0);
  const Tensor pe = ops::sinusoidal_pe(out_time, dim);
#pragma omp parallel for collapse(2) schedule(static)
  for (int64_t b = 0; b < batch; ++b)
    for (int64_t t = 0; t < out_time; ++t) {
      double* yr = y.data() + (b * out_time + t) * dim;
      const double* pr = pe.data() + t * dim;
      for (int64_t d = 0; d < dim; ++d) yr[d] += pr[d];
    }

  LevelOutput out;
  out.mask = ValidMask(std::move(out_lengths), out_time);
  zero_padded(y, out.mask);
  out.rep = std::move(y);
  out.nominal_ratio = in.nominal_ratio * stride_;
  out_mask_ = out.mask;
  return out;
}

Tensor DownsampleModule::backward(const Tensor& gy) {
  Tensor g = gy;
  zero_padded(g, out_mask_);
  // position encoding is additive: gradient passes through
  Tensor gconv = norm.backward(g);
  Tensor gx;
  ops::conv1d_backward(gconv, cached_input_, kernel.value, stride_, pad_, &gx, &kernel.grad(),
                       &bias.grad());
  return gx;
}

void DownsampleModule::collect_params(std::vector<Parameter*>& out) {
  out.push_back(&kernel);
  out.push_back(&bias);
  norm.collect_params(out);
}

void DownsampleModule::set_training(bool on) {
  training_ = on;
  norm.set_training(on);
}

PdsEncoder::PdsEncoder(EncoderConfig cfg, uint64_t seed) : cfg_(std::move(cfg)), rng_(seed) {
  build(rng_);
}

void PdsEncoder::build(Rng& rng) {
  cfg_.validate();
  int64_t in_dim = cfg_.input_dim;
  int64_t layer_index = 0;
  for (size_t m = 0; m < cfg_.stages.size(); ++m) {
    const StageSpec& spec = cfg_.stages[m];
    const std::string prefix = "stage" + std::to_string(m + 1);
    Stage stage;
    stage.ds = std::make_unique<DownsampleModule>(prefix + ".ds", spec, in_dim, rng);
    for (int64_t l = 0; l < spec.num_layers; ++l) {
      stage.layers.push_back(make_context_block(
          cfg_.block_type, prefix + ".layer" + std::to_string(++layer_index), spec.hidden_dim,
          cfg_.heads, cfg_.ffn_dim, cfg_.dropout, rng));
    }
    stages_.push_back(std::move(stage));
    in_dim = spec.hidden_dim;
  }
}

std::vector<LevelOutput> PdsEncoder::encode(const FeatureBatch& batch,
                                            const EncodeObserver* observer) {
  if (batch.features.rank() != 3 || batch.features.dim(2) != cfg_.input_dim)
    throw ConfigError("encode: expected features [B,T," + std::to_string(cfg_.input_dim) + "]");
  LevelOutput current{batch.features, batch.mask, 1};
  if (observer) (*observer)(EncodePoint{"input", 0}, current);

  std::vector<LevelOutput> levels;
  int64_t layer_index = 0;
  for (size_t m = 0; m < stages_.size(); ++m) {
    current = stages_[m].ds->forward(current);
    if (observer) (*observer)(EncodePoint{"ds", static_cast<int64_t>(m + 1)}, current);
    for (auto& layer : stages_[m].layers) {
      current.rep = layer->forward(current.rep, current.mask);
      if (observer) (*observer)(EncodePoint{"layer", ++layer_index}, current);
    }
    levels.push_back(current);
  }
  return levels;
}

Tensor PdsEncoder::backward(std::vector<Tensor> level_grads) {
  if (level_grads.size() != stages_.size())
    throw ConfigError("encoder backward: expected one gradient slot per stage");
  Tensor g = std::move(level_grads.back());
  for (int64_t m = static_cast<int64_t>(stages_.size()) - 1; m >= 0; --m) {
    Stage& stage = stages_[static_cast<size_t>(m)];
    for (int64_t l = static_cast<int64_t>(stage.layers.size()) - 1; l >= 0; --l)
      g = stage.layers[static_cast<size_t>(l)]->backward(g);
    g = stage.ds->backward(g);
    if (m > 0 && level_grads[static_cast<size_t>(m - 1)].numel() > 0)
      kernels::add_inplace(g.numel(), g.data(), level_grads[static_cast<size_t>(m - 1)].data());
  }
  return g;
}

void PdsEncoder::collect_params(std::vector<Parameter*>& out) {
  for (Stage& s : stages_) {
    s.ds->collect_params(out);
    for (auto& layer : s.layers) layer->collect_params(out);
  }
}

void PdsEncoder::set_training(bool on) {
  training_ = on;
  for (Stage& s : stages_) {
    s.ds->set_training(on);
    for (auto& layer : s.layers) layer->set_training(on);
  }
}

int64_t PdsEncoder::parameter_count() {
  int64_t n = 0;
  for (Parameter* p : parameters()) n += p->numel();
  return n;
}

}  // namespace pds
