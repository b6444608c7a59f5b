#pragma once

#include <optional>

#include "pds/model.hpp"

namespace pds {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.98;
  double eps = 1e-9;
};

class Adam {
 public:
  Adam(std::vector<Parameter*> params, AdamConfig cfg);

  void step();
  void zero_grad();

 private:
  std::vector<Parameter*> params_;
  AdamConfig cfg_;
  std::vector<std::vector<double>> m_, v_;
  int64_t t_ = 0;
};

enum class ToyTask { kCopy, kPerUnitClassification };

ToyTask toy_task_from_string(const std::string& s);

// End-to-end trainability proof at micro scale. The copy task upsamples a
// token sequence into ratio-many frames per token and trains the decoder to
// reproduce it; the classification task labels every fused output unit with
// the token that produced it.
struct ToyTrainConfig {
  std::string preset = "pds-base-8";
  BlockType block_type = BlockType::kTransformer;
  bool fusion = true;
  ToyTask task = ToyTask::kCopy;
  int64_t steps = 2000;
  double lr = 2e-3;
  uint64_t seed = 1;
  int64_t hidden_dim = 32;
  int64_t heads = 4;
  int64_t ffn_dim = 64;
  int64_t decoder_layers = 2;
  int64_t vocab = 12;  // BOS, EOS and 10 content tokens
  int64_t batch = 8;
  int64_t min_tokens = 4;
  int64_t max_tokens = 8;
  double dropout = 0.0;
  bool fixed_batch = false;  // reuse one batch every step (negative controls)
  int64_t eval_items = 32;
};

struct ToyTrainResult {
  std::vector<double> losses;  // one per step
  double baseline_loss = 0.0;  // mean of the first 10 steps
  double final_loss = 0.0;     // mean of the last 10 steps
  std::vector<std::pair<int64_t, double>> fusion_weights;  // after training
  std::optional<double> exact_match;  // copy task: held-out greedy decode
  std::optional<double> accuracy;     // classification task: held-out
};

ToyTrainResult train_toy(const ToyTrainConfig& cfg);

}  // namespace pds
