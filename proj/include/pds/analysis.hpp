#pragma once

#include <optional>
#include <string>
#include <vector>

#include "pds/model.hpp"

namespace pds::analysis {

// --- windowed cosine similarity --------------------------------------------

// Mean cosine similarity of each position to its neighbours within +-window,
// truncated at the sequence ends; zero-norm rows contribute 0. rep is [T,D].
double representation_similarity(const Tensor& rep, int64_t window);

enum class ProfilePoints { kAfterEachDownsample, kAfterEachLayer };

struct SimilarityProfile {
  struct Row {
    std::string point;  // "input", "ds1", ..., or "layer1", ...
    int64_t window;
    double similarity;
  };
  std::vector<Row> rows;
  int64_t skipped_items = 0;  // items with < 2 valid positions at some point
};

// Captures representations at the requested points during an eval-mode
// encode and reports per-point mean similarity for windows {1,2,3},
// averaged per item first, then over the batch.
SimilarityProfile similarity_profile(SpeechEncoderModel& model, const FeatureBatch& batch,
                                     ProfilePoints points,
                                     const std::vector<int64_t>& windows = {1, 2, 3});

// --- cross-attention weight distribution -----------------------------------

struct AttentionStats {
  double bin_width = 0.025;
  double range_max = 2.0;
  std::vector<double> percentages;  // one per bin, plus a final overflow bin
  double total_mass = 0.0;          // sum of all per-position sums
  double mean_sum = 0.0;            // mean per-position summed weight
  int64_t positions = 0;

  int64_t num_bins() const { return static_cast<int64_t>(percentages.size()); }
};

// cross_attn is [B,h,T_tgt,T_enc] from one decoder layer. Head-averages,
// sums over target positions per valid encoder position, and histograms
// the sums as percentages.
AttentionStats attention_weight_distribution(const Tensor& cross_attn, const ValidMask& enc_mask,
                                             const ValidMask& tgt_mask, double bin_width = 0.025,
                                             double range_max = 2.0);

// --- length-ratio statistics ------------------------------------------------

struct LengthRatioStats {
  double bin_width = 1.0;
  double range_max = 100.0;
  std::vector<double> percentages;  // plus overflow bin
  int64_t excluded = 0;             // zero-length transcripts
  double mode_bin_low = 0.0;        // left edge of the highest bin
};

LengthRatioStats length_ratio_stats(const std::vector<int64_t>& feature_lengths,
                                    const std::vector<int64_t>& transcript_lengths,
                                    double bin_width = 1.0, double range_max = 100.0);

// --- CTC length validity -----------------------------------------------------

struct CtcVerdict {
  bool valid = false;
  int64_t final_length = 0;
};

// Valid iff the down-sampled input length is at least the label length.
CtcVerdict ctc_validity_check(int64_t input_len, std::span<const int64_t> strides,
                              int64_t label_len);

}  // namespace pds::analysis
