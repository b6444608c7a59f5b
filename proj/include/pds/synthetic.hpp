#pragma once

#include "pds/encoder.hpp"
#include "pds/feature_file.hpp"

namespace pds {

// Stand-in for real Mel filter-bank input: smooth band-limited signals
// sampled with 25ms-window / 10ms-shift framing semantics so consecutive
// frames share most of their support. Transcript lengths are drawn so the
// frame/token ratio follows a truncated normal around 35.
struct SynthConfig {
  int64_t n_items = 16;
  int64_t min_len = 5;
  int64_t max_len = 3000;
  int64_t dim = 80;
  uint64_t seed = 1;
  double ratio_mean = 35.0;
  double ratio_stddev = 8.0;
  double ratio_min = 10.0;
  double ratio_max = 60.0;
};

FeatureFile generate_synthetic_features(const SynthConfig& cfg);

// Fixed-length batch helper used by the benchmark: n_items items of exactly
// `frames` frames each.
FeatureBatch synthetic_batch(int64_t n_items, int64_t frames, int64_t dim, uint64_t seed);

FeatureBatch batch_from_file(const FeatureFile& file);

}  // namespace pds
