#pragma once

#include <string>
#include <vector>

#include "pds/encoder.hpp"

namespace pds {

struct BenchConfig {
  std::vector<std::string> configs = {"stack-4", "pds-base-8", "pds-base-16", "pds-base-32"};
  std::string baseline = "stack-4";
  int64_t runs = 10;    // timed runs per config (median reported)
  int64_t warmup = 3;   // untimed runs per config
  int64_t hidden_dim = 256;
  int64_t heads = 4;
  int64_t ffn_dim = 2048;
  BlockType block_type = BlockType::kTransformer;
  bool fusion = true;
  uint64_t seed = 1;
  int threads = 1;  // timing is single-threaded unless opted in
};

struct BenchEntry {
  std::string config;
  double median_ms = 0.0;
  double speedup = 0.0;
  int64_t final_len = 0;
  int64_t params = 0;
  double peak_rss_mb = 0.0;
  std::string error;  // non-empty when the config rejected the batch
};

struct BenchReport {
  std::vector<BenchEntry> entries;
  uint64_t input_hash = 0;
  int64_t runs = 0, warmup = 0;
  int threads = 1;
};

// Runs every config on the identical batch in eval mode and reports median
// wall-clock per forward with speedup relative to the baseline config.
BenchReport run_benchmark(const BenchConfig& cfg, const FeatureBatch& batch);

// High-water resident set size of this process, in MiB.
double peak_rss_mb();

}  // namespace pds
