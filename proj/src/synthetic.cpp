#include "pds/synthetic.hpp"

#include <cmath>

namespace pds {

namespace {

// 25ms window / 10ms shift at 4 sub-steps per shift: window 10 sub-steps,
// shift 4, so consecutive frames share 60-75% of their support.
constexpr int64_t kShiftSteps = 4;
constexpr int64_t kWindowSteps = 16;
constexpr double kSmoothing = 0.97;

Tensor make_item(int64_t frames, int64_t dim, Rng& rng) {
  const int64_t sub_steps = (frames - 1) * kShiftSteps + kWindowSteps;
  std::normal_distribution<double> noise(0.0, 1.0);
  // per-channel AR(1) latent on the sub-step grid
  std::vector<double> latent(static_cast<size_t>(sub_steps * dim));
  const double drive = std::sqrt(1.0 - kSmoothing * kSmoothing);
  for (int64_t c = 0; c < dim; ++c) {
    double z = noise(rng);
    latent[static_cast<size_t>(c)] = z;
    for (int64_t s = 1; s < sub_steps; ++s) {
      z = kSmoothing * z + drive * noise(rng);
      latent[static_cast<size_t>(s * dim + c)] = z;
    }
  }
  Tensor item({frames, dim});
  for (int64_t t = 0; t < frames; ++t) {
    const int64_t start = t * kShiftSteps;
    for (int64_t c = 0; c < dim; ++c) {
      double acc = 0.0;
      for (int64_t s = 0; s < kWindowSteps; ++s) acc += latent[static_cast<size_t>((start + s) * dim + c)];
      item(t, c) = acc / static_cast<double>(kWindowSteps);
    }
  }
  return item;
}

}  // namespace

FeatureFile generate_synthetic_features(const SynthConfig& cfg) {
  if (cfg.min_len < 5 || cfg.max_len > 3000 || cfg.min_len > cfg.max_len)
    throw ConfigError("synthetic: length bounds must stay within [5,3000]");
  if (cfg.n_items < 1) throw ConfigError("synthetic: need at least one item");
  if (cfg.dim < 1) throw ConfigError("synthetic: dim must be positive");

  Rng rng(cfg.seed);
  std::uniform_int_distribution<int64_t> length_dist(cfg.min_len, cfg.max_len);
  std::normal_distribution<double> ratio_dist(cfg.ratio_mean, cfg.ratio_stddev);

  FeatureFile file;
  for (int64_t i = 0; i < cfg.n_items; ++i) {
    const int64_t frames = length_dist(rng);
    file.items.push_back(make_item(frames, cfg.dim, rng));
    double ratio = ratio_dist(rng);
    while (ratio < cfg.ratio_min || ratio > cfg.ratio_max) ratio = ratio_dist(rng);
    const int64_t tokens =
        std::max<int64_t>(1, static_cast<int64_t>(std::llround(static_cast<double>(frames) / ratio)));
    file.transcript_lengths.push_back(tokens);
  }
  return file;
}

FeatureBatch synthetic_batch(int64_t n_items, int64_t frames, int64_t dim, uint64_t seed) {
  Rng rng(seed);
  std::vector<Tensor> items;
  items.reserve(static_cast<size_t>(n_items));
  for (int64_t i = 0; i < n_items; ++i) items.push_back(make_item(frames, dim, rng));
  return make_feature_batch(items);
}

FeatureBatch batch_from_file(const FeatureFile& file) {
  return make_feature_batch(file.items);
}

}  // namespace pds
