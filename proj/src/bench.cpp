#include "pds/bench.hpp"

#include <omp.h>

#include <algorithm>
#include <chrono>
#include <fstream>
#include <sstream>

#include "pds/feature_file.hpp"
#include "pds/model.hpp"

namespace pds {

double peak_rss_mb() {
  std::ifstream status("/proc/self/status");
  std::string line;
  while (std::getline(status, line)) {
    if (line.rfind("VmHWM:", 0) == 0) {
      std::istringstream ss(line.substr(6));
      double kb = 0.0;
      ss >> kb;
      return kb / 1024.0;
    }
  }
  return 0.0;
}

BenchReport run_benchmark(const BenchConfig& cfg, const FeatureBatch& batch) {
  if (cfg.runs < 10) throw ConfigError("bench: need at least 10 timed runs");
  if (cfg.warmup < 3) throw ConfigError("bench: need at least 3 warmup runs");
  bool has_baseline = false;
  for (const std::string& name : cfg.configs) has_baseline |= name == cfg.baseline;
  if (!has_baseline)
    throw ConfigError("bench: baseline '" + cfg.baseline + "' not among the configs");

  omp_set_num_threads(cfg.threads);

  BenchReport report;
  report.input_hash = feature_hash(batch.features, batch.mask);
  report.runs = cfg.runs;
  report.warmup = cfg.warmup;
  report.threads = cfg.threads;

  for (const std::string& name : cfg.configs) {
    BenchEntry entry;
    entry.config = name;
    try {
      EncoderConfig enc_cfg = preset_config(name, cfg.hidden_dim, cfg.heads, cfg.ffn_dim);
      enc_cfg.block_type = cfg.block_type;
      enc_cfg.dropout = 0.0;
      // stack presets are the plain baseline; fusion belongs to the pds rows
      const bool fusion_on = cfg.fusion && name.rfind("stack", 0) != 0;
      SpeechEncoderModel model(enc_cfg, fusion_on, cfg.seed);
      model.set_training(false);
      {
        std::vector<Parameter*> params = model.parameters();
        for (Parameter* p : params) entry.params += p->numel();
      }
      const std::vector<int64_t> strides = config_strides(enc_cfg);
      int64_t min_final = batch.mask.max_time;
      for (size_t i = 0; i < batch.mask.lengths.size(); ++i) {
        const int64_t len = batch.mask.lengths[i];
        const int64_t final_len = downsampled_length(len, strides);
        if (final_len < 1)
          throw InputError("item " + std::to_string(i) + " compresses to length 0");
        min_final = std::min(min_final, final_len);
      }
      entry.final_len = downsampled_length(batch.mask.max_time, strides);

      for (int64_t i = 0; i < cfg.warmup; ++i) model.forward(batch);
      std::vector<double> times;
      times.reserve(static_cast<size_t>(cfg.runs));
      for (int64_t i = 0; i < cfg.runs; ++i) {
        const auto t0 = std::chrono::steady_clock::now();
        model.forward(batch);
        const auto t1 = std::chrono::steady_clock::now();
        times.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
      }
      std::sort(times.begin(), times.end());
      const size_t n = times.size();
      entry.median_ms =
          n % 2 == 1 ? times[n / 2] : 0.5 * (times[n / 2 - 1] + times[n / 2]);
      entry.peak_rss_mb = peak_rss_mb();
    } catch (const InputError& e) {
      entry.error = e.what();
    }
    report.entries.push_back(std::move(entry));
  }

  double baseline_ms = 0.0;
  for (const BenchEntry& e : report.entries)
    if (e.config == cfg.baseline && e.error.empty()) baseline_ms = e.median_ms;
  for (BenchEntry& e : report.entries)
    if (e.error.empty() && e.median_ms > 0.0) e.speedup = baseline_ms / e.median_ms;
  return report;
}

}  // namespace pds
