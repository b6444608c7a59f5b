#include "pds/fusion.hpp"

#include <cmath>
#include <cstring>

#include "pds/kernels.hpp"

namespace pds {

FusionModule::FusionModule(const EncoderConfig& cfg, uint64_t seed) {
  cfg.validate();
  Rng rng(seed);
  const int64_t m_count = static_cast<int64_t>(cfg.stages.size());
  out_dim_ = cfg.output_dim();
  for (int64_t m = 0; m < m_count; ++m) {
    Pipeline p;
    p.in_dim = cfg.stages[static_cast<size_t>(m)].hidden_dim;
    p.ratio = 1;
    for (int64_t j = m + 1; j < m_count; ++j) p.ratio *= cfg.stages[static_cast<size_t>(j)].stride;
    if (p.ratio < 1) throw ConfigError("fusion: non-positive length ratio");
    const std::string prefix = "fusion.stage" + std::to_string(m + 1);
    p.pre = std::make_unique<LayerNorm>(prefix + ".pre", p.in_dim);
    const double bound = std::sqrt(6.0 / static_cast<double>(p.ratio * (p.in_dim + out_dim_)));
    p.conv_kernel = Parameter(prefix + ".conv.kernel",
                              Tensor::uniform({p.ratio, p.in_dim, out_dim_}, rng, -bound, bound));
    p.conv_bias = Parameter(prefix + ".conv.bias", Tensor({out_dim_}));
    p.bn = std::make_unique<BatchNorm1d>(prefix + ".bn", out_dim_);
    p.weight = Parameter("fusion.w" + std::to_string(m + 1),
                         Tensor::full({1}, 1.0 / static_cast<double>(m_count)));
    pipes_.push_back(std::move(p));
  }
  post_gain = Parameter("fusion.post.gain", Tensor::full({out_dim_}, 1.0));
  post_bias = Parameter("fusion.post.bias", Tensor({out_dim_}));
}

Tensor FusionModule::forward(const std::vector<LevelOutput>& levels) {
  if (levels.empty()) throw ConfigError("fusion: empty level list");
  if (static_cast<int64_t>(levels.size()) != num_stages())
    throw ConfigError("fusion: expected " + std::to_string(num_stages()) + " levels, got " +
                      std::to_string(levels.size()));
  const LevelOutput& top = levels.back();
  const int64_t batch = top.rep.dim(0), final_time = top.rep.dim(1);
  final_mask_ = top.mask;

  Tensor out({batch, final_time, out_dim_});
  for (size_t m = 0; m < pipes_.size(); ++m) {
    Pipeline& p = pipes_[m];
    const LevelOutput& level = levels[m];
    if (level.rep.dim(2) != p.in_dim)
      throw ConfigError("fusion: level " + std::to_string(m + 1) + " dim mismatch");
    for (int64_t len : level.mask.lengths)
      if (len < 1) throw InputError("fusion: level with empty item");

    Tensor a = p.pre->forward(level.rep);
    zero_padded(a, level.mask);
    p.in_mask = level.mask;

    // right-pad with zeros to exactly ratio * final_time so the
    // non-overlapping conv lands on the coarsest length
    const int64_t padded_time = p.ratio * final_time;
    const int64_t in_time = a.dim(1);
    if (in_time > padded_time)
      throw ConfigError("fusion: level longer than ratio * final length");
    Tensor padded({batch, padded_time, p.in_dim});
    for (int64_t b = 0; b < batch; ++b)
      std::memcpy(padded.data() + b * padded_time * p.in_dim, a.data() + b * in_time * p.in_dim,
                  static_cast<size_t>(in_time * p.in_dim) * sizeof(double));
    if (training_) p.padded_in = padded;

    Tensor conv = ops::conv1d(padded, p.conv_kernel.value, p.conv_bias.value, p.ratio, 0);
    Tensor bn = p.bn->forward(conv, final_mask_);
    if (training_) p.bn_out = bn;
    Tensor r = ops::relu(bn);
    if (training_) p.post_in = r;
    Tensor z = ops::layer_norm(r, post_gain.value, post_bias.value, eps_,
                               training_ ? &p.post_cache : nullptr);
    if (training_) p.post_out = z;

    const double w = p.weight.value[0];
    kernels::axpy(out.numel(), w, z.data(), out.data());
  }
  zero_padded(out, final_mask_);
  return out;
}

std::vector<Tensor> FusionModule::backward(const Tensor& gy) {
  Tensor g = gy;
  zero_padded(g, final_mask_);
  std::vector<Tensor> level_grads;
  level_grads.reserve(pipes_.size());
  for (size_t m = 0; m < pipes_.size(); ++m) {
    Pipeline& p = pipes_[m];
    double wg = 0.0;
    for (int64_t i = 0; i < g.numel(); ++i) wg += g[i] * p.post_out[i];
    p.weight.grad()[0] += wg;

    Tensor gz(g.shape());
    const double w = p.weight.value[0];
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < g.numel(); ++i) gz[i] = g[i] * w;

    Tensor gr = ops::layer_norm_backward(gz, p.post_cache, post_gain.value, &post_gain.grad(),
                                         &post_bias.grad());
    Tensor gbn = ops::relu_backward(gr, p.post_in);
    Tensor gconv = p.bn->backward(gbn);
    Tensor gpadded;
    ops::conv1d_backward(gconv, p.padded_in, p.conv_kernel.value, p.ratio, 0, &gpadded,
                         &p.conv_kernel.grad(), &p.conv_bias.grad());

    // strip the right padding back to the level's own time axis
    const int64_t batch = gpadded.dim(0), padded_time = gpadded.dim(1);
    const int64_t in_time = p.in_mask.max_time;
    Tensor ga({batch, in_time, p.in_dim});
    for (int64_t b = 0; b < batch; ++b)
      std::memcpy(ga.data() + b * in_time * p.in_dim, gpadded.data() + b * padded_time * p.in_dim,
                  static_cast<size_t>(in_time * p.in_dim) * sizeof(double));
    zero_padded(ga, p.in_mask);
    level_grads.push_back(p.pre->backward(ga));
  }
  return level_grads;
}

std::vector<std::pair<int64_t, double>> FusionModule::weights_report() const {
  std::vector<std::pair<int64_t, double>> out;
  for (size_t m = 0; m < pipes_.size(); ++m)
    out.emplace_back(static_cast<int64_t>(m + 1), pipes_[m].weight.value[0]);
  return out;
}

void FusionModule::collect_params(std::vector<Parameter*>& out) {
  for (Pipeline& p : pipes_) {
    p.pre->collect_params(out);
    out.push_back(&p.conv_kernel);
    out.push_back(&p.conv_bias);
    p.bn->collect_params(out);
    out.push_back(&p.weight);
  }
  out.push_back(&post_gain);
  out.push_back(&post_bias);
}

void FusionModule::set_training(bool on) {
  training_ = on;
  for (Pipeline& p : pipes_) {
    p.pre->set_training(on);
    p.bn->set_training(on);
  }
}

}  // namespace pds
