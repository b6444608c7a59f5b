#include "pds/cli.hpp"

#include <CLI11.hpp>

#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "pds/analysis.hpp"
#include "pds/bench.hpp"
#include "pds/gradcheck.hpp"
#include "pds/model.hpp"
#include "pds/ops.hpp"
#include "pds/runconfig.hpp"
#include "pds/synthetic.hpp"
#include "pds/trainer.hpp"

namespace pds::cli {

namespace {

namespace fs = std::filesystem;

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

std::ofstream open_csv(const std::string& out_dir, const std::string& name,
                       const std::string& header) {
  fs::create_directories(out_dir);
  const std::string path = out_dir + "/" + name;
  std::ofstream os(path);
  if (!os) throw ConfigError("cannot write '" + path + "'");
  os << header << "\n";
  return os;
}

struct GlobalOpts {
  std::string config_path;
  std::string preset;
  uint64_t seed = 1;
  std::string out_dir = "out";

  // Resolves the effective run configuration: file config when given, else
  // preset (default pds-base-16), with the CLI seed applied on top.
  RunConfig resolve(bool seed_given) const {
    RunConfig rc;
    if (!config_path.empty()) {
      rc = load_run_config(config_path);
      if (!preset.empty()) throw ConfigError("--preset and --config are mutually exclusive");
      if (seed_given) rc.seed = seed;
      return rc;
    }
    rc.preset = preset.empty() ? "pds-base-16" : preset;
    rc.seed = seed;
    rc.validate();
    return rc;
  }
};

int cmd_gen(const GlobalOpts& g, int64_t n, int64_t min_len, int64_t max_len, int64_t dim,
            std::ostream& out) {
  SynthConfig cfg;
  cfg.n_items = n;
  cfg.min_len = min_len;
  cfg.max_len = max_len;
  cfg.dim = dim;
  cfg.seed = g.seed;
  FeatureFile file = generate_synthetic_features(cfg);
  fs::create_directories(g.out_dir);
  const std::string path = g.out_dir + "/features.pdsf";
  write_feature_file(path, file);
  out << "wrote " << file.items.size() << " items to " << path << "\n";
  return 0;
}

int cmd_encode(const GlobalOpts& g, const RunConfig& rc, int64_t input_len,
               const std::string& features_path, std::ostream& out) {
  EncoderConfig cfg = rc.encoder_config();
  const std::vector<int64_t> strides = config_strides(cfg);
  if (features_path.empty()) {
    // pure length arithmetic for a single hypothetical item
    std::string lens;
    int64_t len = input_len;
    for (size_t m = 0; m < strides.size(); ++m) {
      len = downsampled_length(len, std::span<const int64_t>(&strides[m], 1));
      lens += (m ? "," : "") + std::to_string(len);
    }
    out << "stage lengths: " << lens << "\n";
    return 0;
  }

  int64_t dropped = 0;
  FeatureFile file = filter_feature_file(read_feature_file(features_path), 5, 3000, &dropped);
  if (file.items.empty()) throw InputError("no items within [5,3000] frames");
  if (dropped > 0) out << "filtered out " << dropped << " items\n";
  cfg.dropout = 0.0;
  FeatureBatch batch = batch_from_file(file);
  SpeechEncoderModel model(cfg, rc.fusion, rc.seed);
  model.set_training(false);
  SpeechEncoderModel::Encoded enc = model.forward(batch);

  std::ofstream csv = open_csv(g.out_dir, "encode.csv", "stage,item,length,dim");
  for (size_t m = 0; m < enc.levels.size(); ++m) {
    const LevelOutput& level = enc.levels[m];
    out << "stage " << (m + 1) << ": shape [" << level.rep.dim(0) << "," << level.rep.dim(1)
        << "," << level.rep.dim(2) << "] ratio " << level.nominal_ratio << " lengths";
    for (size_t i = 0; i < level.mask.lengths.size(); ++i) {
      out << (i ? "," : " ") << level.mask.lengths[i];
      csv << (m + 1) << "," << i << "," << level.mask.lengths[i] << "," << level.rep.dim(2)
          << "\n";
    }
    out << "\n";
  }
  out << "output shape [" << enc.out.dim(0) << "," << enc.out.dim(1) << "," << enc.out.dim(2)
      << "] fusion " << (model.fusion_on() ? "on" : "off") << "\n";
  return 0;
}

int cmd_bench(const GlobalOpts& g, const RunConfig& rc, const std::string& features_path,
              const std::vector<std::string>& configs, int64_t runs, int64_t warmup,
              int64_t items, int64_t frames, int64_t hidden_dim, int threads,
              std::ostream& out) {
  BenchConfig bc;
  if (!configs.empty()) bc.configs = configs;
  bc.runs = runs;
  bc.warmup = warmup;
  bc.hidden_dim = hidden_dim;
  bc.heads = rc.heads;
  bc.ffn_dim = rc.ffn_dim;
  bc.block_type = block_type_from_string(rc.block_type);
  bc.fusion = rc.fusion;
  bc.seed = rc.seed;
  bc.threads = threads;

  FeatureBatch batch = features_path.empty()
                           ? synthetic_batch(items, frames, 80, rc.seed)
                           : batch_from_file(filter_feature_file(read_feature_file(features_path)));
  BenchReport report = run_benchmark(bc, batch);

  std::ofstream csv = open_csv(g.out_dir, "bench.csv", "config,median_ms,speedup,final_len");
  char line[256];
  std::snprintf(line, sizeof(line), "input hash %016" PRIx64 ", runs %" PRId64 ", warmup %" PRId64
                ", threads %d\n",
                report.input_hash, report.runs, report.warmup, report.threads);
  out << line;
  for (const BenchEntry& e : report.entries) {
    if (!e.error.empty()) {
      out << e.config << ": aborted: " << e.error << "\n";
      continue;
    }
    csv << e.config << "," << fmt(e.median_ms) << "," << fmt(e.speedup) << "," << e.final_len
        << "\n";
    std::snprintf(line, sizeof(line),
                  "%-12s median %10.2f ms  speedup %5.2fx  final_len %5" PRId64
                  "  params %" PRId64 "  peak_rss %.0f MiB\n",
                  e.config.c_str(), e.median_ms, e.speedup, e.final_len, e.params, e.peak_rss_mb);
    out << line;
  }
  return 0;
}

int cmd_similarity(const GlobalOpts& g, const RunConfig& rc, const std::string& features_path,
                   const std::string& points, std::ostream& out) {
  analysis::ProfilePoints pp;
  if (points == "ds")
    pp = analysis::ProfilePoints::kAfterEachDownsample;
  else if (points == "layer")
    pp = analysis::ProfilePoints::kAfterEachLayer;
  else
    throw ConfigError("--points must be ds|layer");

  FeatureBatch batch = [&] {
    if (!features_path.empty())
      return batch_from_file(filter_feature_file(read_feature_file(features_path)));
    SynthConfig sc;
    sc.n_items = 4;
    sc.min_len = 256;
    sc.max_len = 512;
    sc.seed = rc.seed;
    return batch_from_file(generate_synthetic_features(sc));
  }();

  EncoderConfig cfg = rc.encoder_config();
  cfg.dropout = 0.0;
  SpeechEncoderModel model(cfg, rc.fusion, rc.seed);
  analysis::SimilarityProfile profile = analysis::similarity_profile(model, batch, pp);

  std::ofstream csv = open_csv(g.out_dir, "similarity.csv", "point,window,value");
  for (const auto& row : profile.rows) {
    csv << row.point << "," << row.window << "," << fmt(row.similarity) << "\n";
    out << row.point << " win-" << row.window << " " << fmt(row.similarity) << "\n";
  }
  if (profile.skipped_items > 0)
    out << "skipped " << profile.skipped_items << " items with <2 valid positions\n";
  return 0;
}

int cmd_attn_dist(const GlobalOpts& g, const RunConfig& rc, const std::string& features_path,
                  double bin_width, std::ostream& out) {
  FeatureBatch batch = [&] {
    if (!features_path.empty())
      return batch_from_file(filter_feature_file(read_feature_file(features_path)));
    SynthConfig sc;
    sc.n_items = 4;
    sc.min_len = 400;
    sc.max_len = 800;
    sc.seed = rc.seed;
    return batch_from_file(generate_synthetic_features(sc));
  }();

  EncoderConfig cfg = rc.encoder_config();
  cfg.dropout = 0.0;
  SpeechEncoderModel model(cfg, rc.fusion, rc.seed);
  model.set_training(false);
  SpeechEncoderModel::Encoded enc = model.forward(batch);

  DecoderConfig dc;
  dc.num_layers = 6;
  dc.hidden_dim = cfg.output_dim();
  dc.heads = rc.heads;
  dc.ffn_dim = rc.ffn_dim;
  dc.vocab_size = 100;
  dc.dropout = 0.0;
  Decoder decoder(dc, rc.seed + 7919);
  decoder.set_training(false);

  // synthetic targets: one token per ~35 input frames, the paper-style ratio
  Rng rng(rc.seed + 13);
  std::uniform_int_distribution<int64_t> tok(2, dc.vocab_size - 1);
  std::vector<std::vector<int64_t>> targets;
  for (int64_t len : batch.mask.lengths) {
    const int64_t n = std::max<int64_t>(1, len / 35);
    std::vector<int64_t> seq = {0};
    for (int64_t i = 0; i < n; ++i) seq.push_back(tok(rng));
    targets.push_back(std::move(seq));
  }

  Decoder::ForwardResult dec = decoder.forward(enc.out, enc.out_mask, targets, true);
  analysis::AttentionStats stats = analysis::attention_weight_distribution(
      dec.cross_attention.back(), enc.out_mask, dec.tgt_mask, bin_width);

  std::ofstream csv = open_csv(g.out_dir, "attention.csv", "bin_low,bin_high,pct");
  for (int64_t i = 0; i < stats.num_bins(); ++i) {
    const double lo = static_cast<double>(i) * stats.bin_width;
    const bool overflow = i == stats.num_bins() - 1;
    csv << fmt(overflow ? stats.range_max : lo) << ","
        << (overflow ? "inf" : fmt(lo + stats.bin_width)) << ","
        << fmt(stats.percentages[static_cast<size_t>(i)]) << "\n";
  }
  out << "positions " << stats.positions << " total_mass " << fmt(stats.total_mass)
      << " mean_sum " << fmt(stats.mean_sum) << "\n";
  return 0;
}

int cmd_ctc_check(const RunConfig& rc, int64_t input_len, int64_t label_len, std::ostream& out) {
  EncoderConfig cfg = rc.encoder_config();
  const std::vector<int64_t> strides = config_strides(cfg);
  analysis::CtcVerdict v = analysis::ctc_validity_check(input_len, strides, label_len);
  out << (v.valid ? "valid" : "invalid") << " (final length " << v.final_length
      << (v.valid ? " >= " : " < ") << "label length " << label_len << ")\n";
  return 0;
}

int cmd_train_toy(const GlobalOpts& g, const RunConfig& rc, const std::string& task,
                  int64_t steps, double lr, std::ostream& out) {
  ToyTrainConfig tc;
  tc.preset = rc.preset.empty() ? "pds-base-8" : rc.preset;
  tc.block_type = block_type_from_string(rc.block_type);
  tc.fusion = rc.fusion;
  tc.task = toy_task_from_string(task);
  tc.steps = steps;
  tc.lr = lr;
  tc.seed = rc.seed;
  ToyTrainResult result = train_toy(tc);

  std::ofstream loss_csv = open_csv(g.out_dir, "loss.csv", "step,loss");
  for (size_t i = 0; i < result.losses.size(); ++i)
    loss_csv << (i + 1) << "," << fmt(result.losses[i]) << "\n";
  std::ofstream w_csv = open_csv(g.out_dir, "weights.csv", "stage,weight");
  for (const auto& [stage, w] : result.fusion_weights) w_csv << stage << "," << fmt(w) << "\n";

  out << "baseline loss " << fmt(result.baseline_loss) << " final loss "
      << fmt(result.final_loss) << "\n";
  if (result.exact_match) out << "held-out exact match " << fmt(*result.exact_match) << "\n";
  if (result.accuracy) out << "held-out accuracy " << fmt(*result.accuracy) << "\n";
  return 0;
}

int cmd_gradcheck(const RunConfig& rc, std::ostream& out) {
  // micro dims keep the finite-difference sweep fast
  EncoderConfig cfg = preset_config(rc.preset.empty() ? "pds-base-8" : rc.preset, 8, 2, 16);
  cfg.block_type = block_type_from_string(rc.block_type);
  cfg.dropout = 0.0;
  for (StageSpec& s : cfg.stages) s.num_layers = std::min<int64_t>(s.num_layers, 1);

  DecoderConfig dc;
  dc.num_layers = 1;
  dc.hidden_dim = cfg.output_dim();
  dc.heads = 2;
  dc.ffn_dim = 16;
  dc.vocab_size = 6;
  dc.dropout = 0.0;

  EncDecModel model(cfg, rc.fusion, dc, rc.seed);
  model.set_training(true);

  Rng rng(rc.seed + 5);
  const int64_t ratio = cfg.ratio();
  const int64_t frames = 8 * ratio;
  std::vector<Tensor> items = {Tensor::randn({frames, cfg.input_dim}, rng),
                               Tensor::randn({frames - ratio - 1, cfg.input_dim}, rng)};
  FeatureBatch batch = make_feature_batch(items);
  const std::vector<std::vector<int64_t>> targets = {{0, 2, 3, 4}, {0, 3, 2}};
  const std::vector<int64_t> labels = {2, 3, 4, 1, 3, 2, 1, -1};

  auto loss_fn = [&]() {
    EncDecModel::Output o = model.forward(batch, targets);
    return ops::cross_entropy(o.dec.logits, labels);
  };
  model.zero_grads();
  batch.features.set_requires_grad(true);
  EncDecModel::Output o = model.forward(batch, targets);
  Tensor glogits;
  ops::cross_entropy(o.dec.logits, labels, &glogits);
  Tensor ginput = model.backward(glogits);
  std::copy(ginput.data(), ginput.data() + ginput.numel(), batch.features.grad().begin());

  std::vector<GradTarget> targets_gc;
  for (Parameter* p : model.parameters()) targets_gc.push_back(GradTarget::of(*p));
  targets_gc.push_back(GradTarget::of_input("input.features", batch.features));

  GradCheckReport report = grad_check(loss_fn, targets_gc);
  out << (report.pass ? "PASS" : "FAIL") << " max_rel_err " << fmt(report.max_rel_err)
      << " checked " << report.checked << " values";
  if (!report.pass) out << " worst " << report.worst_name << "[" << report.worst_index << "]";
  out << "\n";
  if (report.numeric_failure) throw NumericError(report.message);
  if (!report.pass) throw NumericError("gradient check failed");
  return 0;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Progressive down-sampling speech encoder toolkit"};
  app.require_subcommand(1);

  GlobalOpts g;
  app.add_option("--config", g.config_path, "run configuration file");
  app.add_option("--preset", g.preset, "encoder preset name");
  CLI::Option* seed_opt = app.add_option("--seed", g.seed, "random seed");
  app.add_option("--out", g.out_dir, "output directory");

  // gen
  auto* gen = app.add_subcommand("gen", "generate synthetic features");
  int64_t gen_n = 16, gen_min = 200, gen_max = 3000, gen_dim = 80;
  gen->add_option("--n", gen_n, "number of items");
  gen->add_option("--min-len", gen_min, "minimum frame count");
  gen->add_option("--max-len", gen_max, "maximum frame count");
  gen->add_option("--dim", gen_dim, "feature channels");

  // encode
  auto* encode = app.add_subcommand("encode", "forward pass, dump level shapes and lengths");
  int64_t enc_input_len = 1000;
  std::string enc_features;
  encode->add_option("--input-len", enc_input_len, "hypothetical item length (no forward)");
  encode->add_option("--features", enc_features, "feature file to encode");

  // bench
  auto* bench = app.add_subcommand("bench", "forward-pass wall-clock comparison");
  std::string bench_features;
  std::vector<std::string> bench_configs;
  int64_t bench_runs = 10, bench_warmup = 3, bench_items = 8, bench_frames = 3000,
          bench_dim = 256;
  int bench_threads = 1;
  bench->add_option("--features", bench_features, "feature file (default: synthetic batch)");
  bench->add_option("--configs", bench_configs, "presets to compare")->delimiter(',');
  bench->add_option("--runs", bench_runs, "timed runs per config (>=10)");
  bench->add_option("--warmup", bench_warmup, "warmup runs per config (>=3)");
  bench->add_option("--items", bench_items, "synthetic batch items");
  bench->add_option("--frames", bench_frames, "synthetic item frames");
  bench->add_option("--hidden-dim", bench_dim, "model hidden dim");
  bench->add_option("--threads", bench_threads, "worker threads (timing default 1)");

  // similarity
  auto* sim = app.add_subcommand("similarity", "windowed cosine similarity profile");
  std::string sim_features, sim_points = "ds";
  sim->add_option("--features", sim_features, "feature file (default: synthetic)");
  sim->add_option("--points", sim_points, "measurement points: ds|layer");

  // attn-dist
  auto* attn = app.add_subcommand("attn-dist", "summed cross-attention weight distribution");
  std::string attn_features;
  double attn_bin = 0.025;
  attn->add_option("--features", attn_features, "feature file (default: synthetic)");
  attn->add_option("--bin-width", attn_bin, "histogram bin width");

  // ctc-check
  auto* ctc = app.add_subcommand("ctc-check", "CTC length-validity verdict");
  int64_t ctc_input = 3000, ctc_label = 100;
  ctc->add_option("--input-len", ctc_input, "input frame count")->required();
  ctc->add_option("--label-len", ctc_label, "label token count")->required();

  // train-toy
  auto* toy = app.add_subcommand("train-toy", "toy end-to-end training run");
  std::string toy_task = "copy";
  int64_t toy_steps = 2000;
  double toy_lr = 2e-3;
  toy->add_option("--task", toy_task, "copy|classify");
  toy->add_option("--steps", toy_steps, "training steps");
  toy->add_option("--lr", toy_lr, "learning rate");

  // gradcheck
  auto* gc = app.add_subcommand("gradcheck", "finite-difference gradient verification");
  bool gc_micro = true;
  std::string gc_block = "";
  gc->add_flag("--micro", gc_micro, "micro dims (always on)");
  gc->add_option("--block-type", gc_block, "transformer|conformer");

  std::vector<const char*> argv;
  argv.push_back("pds");
  for (const std::string& a : args) argv.push_back(a.c_str());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      out << app.help();
      return 0;
    }
    err << e.what() << "\n";
    return 1;
  }

  try {
    RunConfig rc = g.resolve(seed_opt->count() > 0);
    if (gen->parsed()) return cmd_gen(g, gen_n, gen_min, gen_max, gen_dim, out);
    if (encode->parsed()) return cmd_encode(g, rc, enc_input_len, enc_features, out);
    if (bench->parsed())
      return cmd_bench(g, rc, bench_features, bench_configs, bench_runs, bench_warmup,
                       bench_items, bench_frames, bench_dim, bench_threads, out);
    if (sim->parsed()) return cmd_similarity(g, rc, sim_features, sim_points, out);
    if (attn->parsed()) return cmd_attn_dist(g, rc, attn_features, attn_bin, out);
    if (ctc->parsed()) return cmd_ctc_check(rc, ctc_input, ctc_label, out);
    if (toy->parsed()) return cmd_train_toy(g, rc, toy_task, toy_steps, toy_lr, out);
    if (gc->parsed()) {
      if (!gc_block.empty()) {
        RunConfig rc2 = rc;
        rc2.block_type = gc_block;
        return cmd_gradcheck(rc2, out);
      }
      return cmd_gradcheck(rc, out);
    }
    err << "no subcommand\n";
    return 1;
  } catch (const NumericError& e) {
    err << "numerical failure: " << e.what() << "\n";
    return 2;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const InputError& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace pds::cli
