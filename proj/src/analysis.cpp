#include "pds/analysis.hpp"

#include <cmath>
#include <map>

namespace pds::analysis {

double representation_similarity(const Tensor& rep, int64_t window) {
  if (rep.rank() != 2) throw ConfigError("similarity: expected [T,D]");
  const int64_t time = rep.dim(0), dim = rep.dim(1);
  if (time < 2) throw InputError("similarity: need at least 2 positions");
  if (window < 1) throw ConfigError("similarity: window must be >= 1");

  std::vector<double> norms(static_cast<size_t>(time));
  for (int64_t t = 0; t < time; ++t) {
    double s = 0.0;
    const double* r = rep.data() + t * dim;
    for (int64_t d = 0; d < dim; ++d) s += r[d] * r[d];
    norms[static_cast<size_t>(t)] = std::sqrt(s);
  }

  double total = 0.0;
  for (int64_t t = 0; t < time; ++t) {
    double acc = 0.0;
    int64_t count = 0;
    for (int64_t j = -window; j <= window; ++j) {
      if (j == 0) continue;
      const int64_t u = t + j;
      if (u < 0 || u >= time) continue;
      ++count;
      const double denom = norms[static_cast<size_t>(t)] * norms[static_cast<size_t>(u)];
      if (denom == 0.0) continue;  // zero-norm rows count as similarity 0
      const double* a = rep.data() + t * dim;
      const double* b = rep.data() + u * dim;
      double dot = 0.0;
      for (int64_t d = 0; d < dim; ++d) dot += a[d] * b[d];
      acc += dot / denom;
    }
    total += count > 0 ? acc / static_cast<double>(count) : 0.0;
  }
  return total / static_cast<double>(time);
}

SimilarityProfile similarity_profile(SpeechEncoderModel& model, const FeatureBatch& batch,
                                     ProfilePoints points, const std::vector<int64_t>& windows) {
  model.set_training(false);
  const bool want_ds = points == ProfilePoints::kAfterEachDownsample;

  struct Acc {
    std::string point;
    std::map<int64_t, double> sums;  // window -> accumulated per-item similarity
    int64_t items = 0;
  };
  std::vector<Acc> accs;
  int64_t skipped = 0;

  EncodeObserver observer = [&](const EncodePoint& pt, const LevelOutput& level) {
    const bool take = want_ds ? (pt.kind == "input" || pt.kind == "ds")
                              : (pt.kind == "input" || pt.kind == "layer");
    if (!take) return;
    Acc acc;
    acc.point = pt.kind == "input" ? "input" : pt.kind + std::to_string(pt.index);
    const int64_t batch_n = level.rep.dim(0), time = level.rep.dim(1), dim = level.rep.dim(2);
    for (int64_t b = 0; b < batch_n; ++b) {
      const int64_t len = level.mask.lengths[static_cast<size_t>(b)];
      if (len < 2) {
        ++skipped;
        continue;
      }
      Tensor item({len, dim});
      std::copy(level.rep.data() + b * time * dim, level.rep.data() + (b * time + len) * dim,
                item.data());
      for (int64_t w : windows) acc.sums[w] += representation_similarity(item, w);
      ++acc.items;
    }
    accs.push_back(std::move(acc));
  };
  model.encoder.encode(batch, &observer);

  SimilarityProfile profile;
  profile.skipped_items = skipped;
  for (const Acc& acc : accs)
    for (int64_t w : windows)
      profile.rows.push_back({acc.point, w,
                              acc.items > 0 ? acc.sums.at(w) / static_cast<double>(acc.items)
                                            : 0.0});
  return profile;
}

AttentionStats attention_weight_distribution(const Tensor& cross_attn, const ValidMask& enc_mask,
                                             const ValidMask& tgt_mask, double bin_width,
                                             double range_max) {
  if (cross_attn.rank() != 4) throw ConfigError("attention stats: expected [B,h,Tq,Tk]");
  if (bin_width <= 0.0) throw ConfigError("attention stats: bin width must be positive");
  const int64_t batch = cross_attn.dim(0), heads = cross_attn.dim(1);
  const int64_t t_tgt = cross_attn.dim(2), t_enc = cross_attn.dim(3);

  const int64_t bins = static_cast<int64_t>(std::ceil(range_max / bin_width));
  AttentionStats stats;
  stats.bin_width = bin_width;
  stats.range_max = range_max;
  stats.percentages.assign(static_cast<size_t>(bins + 1), 0.0);  // last bin = overflow

  for (int64_t b = 0; b < batch; ++b) {
    const int64_t n_enc = enc_mask.lengths[static_cast<size_t>(b)];
    const int64_t n_tgt = tgt_mask.lengths[static_cast<size_t>(b)];
    for (int64_t e = 0; e < n_enc; ++e) {
      double sum = 0.0;
      for (int64_t q = 0; q < n_tgt; ++q) {
        double head_avg = 0.0;
        for (int64_t h = 0; h < heads; ++h)
          head_avg += cross_attn[((b * heads + h) * t_tgt + q) * t_enc + e];
        sum += head_avg / static_cast<double>(heads);
      }
      stats.total_mass += sum;
      ++stats.positions;
      int64_t bin = sum >= range_max ? bins : static_cast<int64_t>(sum / bin_width);
      stats.percentages[static_cast<size_t>(bin)] += 1.0;
    }
  }
  if (stats.positions > 0) {
    for (double& p : stats.percentages) p = p * 100.0 / static_cast<double>(stats.positions);
    stats.mean_sum = stats.total_mass / static_cast<double>(stats.positions);
  }
  return stats;
}

LengthRatioStats length_ratio_stats(const std::vector<int64_t>& feature_lengths,
                                    const std::vector<int64_t>& transcript_lengths,
                                    double bin_width, double range_max) {
  if (feature_lengths.size() != transcript_lengths.size())
    throw ConfigError("length ratio: unpaired inputs");
  if (bin_width <= 0.0) throw ConfigError("length ratio: bin width must be positive");
  const int64_t bins = static_cast<int64_t>(std::ceil(range_max / bin_width));
  LengthRatioStats stats;
  stats.bin_width = bin_width;
  stats.range_max = range_max;
  stats.percentages.assign(static_cast<size_t>(bins + 1), 0.0);

  int64_t counted = 0;
  for (size_t i = 0; i < feature_lengths.size(); ++i) {
    if (transcript_lengths[i] < 1) {
      ++stats.excluded;
      continue;
    }
    const double ratio =
        static_cast<double>(feature_lengths[i]) / static_cast<double>(transcript_lengths[i]);
    int64_t bin = ratio >= range_max ? bins : static_cast<int64_t>(ratio / bin_width);
    stats.percentages[static_cast<size_t>(bin)] += 1.0;
    ++counted;
  }
  if (counted > 0) {
    size_t best = 0;
    for (size_t i = 0; i < stats.percentages.size(); ++i) {
      stats.percentages[i] = stats.percentages[i] * 100.0 / static_cast<double>(counted);
      if (stats.percentages[i] > stats.percentages[best]) best = i;
    }
    stats.mode_bin_low = static_cast<double>(best) * bin_width;
  }
  return stats;
}

CtcVerdict ctc_validity_check(int64_t input_len, std::span<const int64_t> strides,
                              int64_t label_len) {
  CtcVerdict verdict;
  verdict.final_length = downsampled_length(input_len, strides);
  verdict.valid = verdict.final_length >= label_len;
  return verdict;
}

}  // namespace pds::analysis
