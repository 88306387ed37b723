#include "harmoniad/cli.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

namespace harmoniad::cli {

namespace fs = std::filesystem;
using evalio::TensorRecord;

namespace {

std::string sample_name(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "sample_%05zu", i);
  return buf;
}

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create output directory: " + dir.string());
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << text;
  if (!out) throw IoError("write failed: " + path.string());
}

std::vector<std::uint32_t> dims(const std::vector<int>& shape) {
  std::vector<std::uint32_t> d;
  for (int s : shape) d.push_back(static_cast<std::uint32_t>(s));
  return d;
}

// Column-major group storage is written row-major with the group's shape.
TensorRecord group_record(const std::string& name, const ParamGroup& g, std::span<const double> flat) {
  std::vector<double> row(g.size);
  if (g.shape.size() == 2) {
    const int rows = g.shape[0];
    const int cols = g.shape[1];
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < cols; ++c)
        row[static_cast<std::size_t>(r) * cols + c] = flat[g.offset + static_cast<std::size_t>(c) * rows + r];
  } else {
    std::copy(flat.begin() + static_cast<std::ptrdiff_t>(g.offset),
              flat.begin() + static_cast<std::ptrdiff_t>(g.offset + g.size), row.begin());
  }
  return TensorRecord::from_f64(name, dims(g.shape), row);
}

void load_group(const TensorRecord& r, const ParamGroup& g, std::span<double> flat) {
  if (r.shape != dims(g.shape)) throw ConfigError("checkpoint record " + r.name + " has an unexpected shape");
  const std::vector<double> row = r.to_f64();
  if (g.shape.size() == 2) {
    const int rows = g.shape[0];
    const int cols = g.shape[1];
    for (int rr = 0; rr < rows; ++rr)
      for (int c = 0; c < cols; ++c)
        flat[g.offset + static_cast<std::size_t>(c) * rows + rr] = row[static_cast<std::size_t>(rr) * cols + c];
  } else {
    std::copy(row.begin(), row.end(), flat.begin() + static_cast<std::ptrdiff_t>(g.offset));
  }
}

// Everything a command needs to score one input.
struct Input {
  std::string name;
  FeatureMap<double> features;
  int pixel_h = 0;
  int pixel_w = 0;
  std::optional<training::SynthSample> sample;
};

std::vector<Input> load_inputs(const fs::path& path, const RunConfig& cfg) {
  const std::vector<TensorRecord> records = evalio::read_container(path);
  std::vector<Input> inputs;
  for (const TensorRecord& r : records) {
    if (ends_with(r.name, ".image")) {
      if (r.shape.size() != 3 || r.shape[0] != 1) throw ConfigError(r.name + ": images must be 1 x H x W");
      const std::string base = r.name.substr(0, r.name.size() - 6);
      const std::vector<double> v = r.to_f64();
      using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
      Mat<double> image = Eigen::Map<const RowMat>(v.data(), r.shape[1], r.shape[2]);
      Input in{base, training::stub_encoder(image, cfg.channels, cfg.patch), static_cast<int>(r.shape[1]),
               static_cast<int>(r.shape[2]), std::nullopt};
      inputs.push_back(std::move(in));
    } else if (r.shape.size() == 3 && !ends_with(r.name, ".label")) {
      FeatureMap<double> f = evalio::record_feature(r);
      const int ph = f.height * cfg.patch;
      const int pw = f.width * cfg.patch;
      inputs.push_back({r.name, std::move(f), ph, pw, std::nullopt});
    }
  }
  if (inputs.empty()) throw ConfigError("no images or feature maps found in " + path.string());
  return inputs;
}

ModelParams load_or_init(const std::string& checkpoint, const RunConfig& cfg, const FeatureMap<double>* probe) {
  if (!checkpoint.empty()) return params_from_checkpoint(evalio::read_container(checkpoint));
  ModelShape shape = cfg.model_shape();
  if (probe != nullptr) {
    shape.channels = probe->channels();
    shape.height = probe->height;
    shape.width = probe->width;
    if (shape.rank >= shape.channels) shape.rank = std::max(1, shape.channels / 4);
  }
  return init_params(shape, cfg.seed);
}

void check_compatible(const ModelParams& params, const FeatureMap<double>& f) {
  const ModelShape& s = params.shape();
  if (s.channels != f.channels() || s.height != f.height || s.width != f.width) {
    throw ConfigError("model expects " + std::to_string(s.channels) + "x" + std::to_string(s.height) + "x" +
                      std::to_string(s.width) + " features, input is " + std::to_string(f.channels()) + "x" +
                      std::to_string(f.height) + "x" + std::to_string(f.width));
  }
}

std::vector<training::SynthSample> load_or_synth(const std::string& data_dir, const char* file, std::uint64_t seed,
                                                 const training::SynthConfig& synth) {
  if (!data_dir.empty()) return dataset_from_records(evalio::read_container(fs::path(data_dir) / file));
  return training::synth_dataset(seed, synth);
}

std::string metrics_csv(const std::vector<training::MetricRow>& rows) {
  std::ostringstream out;
  out << "step,epoch,train_loss,val_pixel_auroc,val_image_auroc\n";
  out << std::setprecision(10);
  for (const auto& r : rows) {
    out << r.step << ',' << r.epoch << ',' << r.train_loss << ',' << r.val_pixel_auroc << ',' << r.val_image_auroc
        << '\n';
  }
  return out.str();
}

// --- subcommands -----------------------------------------------------------

int cmd_gen(const RunConfig& cfg, std::ostream& out) {
  const fs::path dir(cfg.out);
  ensure_dir(dir);
  const auto train = training::synth_dataset(cfg.train_seed(), cfg.train_data());
  const auto test = training::synth_dataset(cfg.test_seed(), cfg.test_data());
  evalio::write_container(dir / "train.had", dataset_records(train));
  evalio::write_container(dir / "test.had", dataset_records(test));
  write_text(dir / "config.txt", cfg.to_text());
  out << "wrote " << train.size() << " training and " << test.size() << " test samples to " << dir.string() << '\n';
  return kOk;
}

int cmd_train(const RunConfig& cfg, const std::string& data_dir, std::ostream& out) {
  const fs::path dir(cfg.out);
  ensure_dir(dir);
  write_text(dir / "config.txt", cfg.to_text());
  const auto train_samples = load_or_synth(data_dir, "train.had", cfg.train_seed(), cfg.train_data());
  const auto val_samples = training::synth_dataset(cfg.val_seed(), cfg.val_data());
  const auto train_set = training::prepare(train_samples, cfg.channels, cfg.patch);
  const auto val_set = training::prepare(val_samples, cfg.channels, cfg.patch);

  const training::TrainResult r = training::train(cfg.train_config(), train_set, val_set);
  evalio::write_container(dir / "checkpoint.had", checkpoint_records(r.params, r.optim));
  write_text(dir / "metrics.csv", metrics_csv(r.history));
  const auto& last = r.history.back();
  out << "trained " << cfg.steps << " steps; final loss " << last.train_loss << ", val pixel AUROC "
      << last.val_pixel_auroc << ", val image AUROC " << last.val_image_auroc << '\n';
  return kOk;
}

int cmd_eval(const RunConfig& cfg, const std::string& checkpoint, const std::string& data_dir, bool oracle,
             std::ostream& out) {
  const fs::path dir(cfg.out);
  ensure_dir(dir);
  write_text(dir / "config.txt", cfg.to_text());
  const auto samples = load_or_synth(data_dir, "test.had", cfg.test_seed(), cfg.test_data());
  std::vector<evalio::Prediction> preds;
  if (oracle) {
    for (const auto& s : samples) preds.push_back({s.pixel_mask, s.pixel_mask, s.anomalous ? 1.0 : 0.0, s.anomalous});
  } else {
    const auto examples = training::prepare(samples, cfg.channels, cfg.patch);
    const ModelParams params = load_or_init(checkpoint, cfg, nullptr);
    check_compatible(params, examples.front().features);
    const auto maps = training::predict(params, examples, cfg.pipeline_config(), cfg.patch);
    for (std::size_t i = 0; i < samples.size(); ++i) {
      preds.push_back({maps[i].pixel_scores, samples[i].pixel_mask, maps[i].image_score, samples[i].anomalous});
    }
  }
  const evalio::Metrics m = evalio::evaluate(preds);
  const std::string table = format_metrics_table({{oracle ? "oracle" : "model", m}});
  out << table;
  write_text(dir / "eval.txt", table);
  std::ostringstream csv;
  csv << std::setprecision(10) << "p_roc,i_roc,p_pr,i_pr\n" << m.p_roc << ',' << m.i_roc << ',' << m.p_pr << ','
      << m.i_pr << '\n';
  write_text(dir / "eval.csv", csv.str());
  return kOk;
}

int cmd_infer(const RunConfig& cfg, const std::string& checkpoint, const std::string& input, std::ostream& out) {
  const fs::path dir(cfg.out);
  ensure_dir(dir);
  write_text(dir / "config.txt", cfg.to_text());
  const std::vector<Input> inputs = load_inputs(input, cfg);
  const ModelParams params = load_or_init(checkpoint, cfg, &inputs.front().features);
  const Weights<double> w = unpack(params);
  const pipeline::PipelineConfig pc = cfg.pipeline_config();
  std::vector<TensorRecord> scores;
  for (const Input& in : inputs) {
    check_compatible(params, in.features);
    const pipeline::Forward<double> f = pipeline::forward(in.features, w, pc);
    const pipeline::AnomalyMap map =
        pipeline::anomaly_map(pipeline::patch_anomaly_score(f.recon, in.features), in.pixel_h, in.pixel_w);
    if (!map.pixel_scores.allFinite() || !map.patch_scores.allFinite()) {
      throw NumericError("non-finite anomaly map for " + in.name);
    }
    evalio::export_heatmap(map.patch_scores, dir / (in.name + "_patch.pgm"));
    evalio::export_heatmap(map.pixel_scores, dir / (in.name + "_pixel.pgm"));
    scores.push_back(evalio::matrix_record(in.name + ".patch", map.patch_scores));
    scores.push_back(evalio::matrix_record(in.name + ".pixel", map.pixel_scores));
    scores.push_back(TensorRecord::from_f64(in.name + ".image_score", {1}, std::span<const double>(&map.image_score, 1)));
    out << in.name << " image_score=" << std::setprecision(6) << map.image_score << " grid=" << in.features.channels()
        << "x" << in.features.height << "x" << in.features.width << '\n';
  }
  evalio::write_container(dir / "scores.had", scores);
  return kOk;
}

int cmd_split(const RunConfig& cfg, const std::string& checkpoint, const std::string& input, std::ostream& out) {
  const fs::path dir(cfg.out);
  ensure_dir(dir);
  write_text(dir / "config.txt", cfg.to_text());
  const std::vector<Input> inputs = load_inputs(input, cfg);
  softgate::GateParams<double> gp{0.5, 0.0};
  if (!checkpoint.empty()) {
    const Weights<double> w = unpack(params_from_checkpoint(evalio::read_container(checkpoint)));
    gp = w.gate;
  } else {
    const Weights<double> w = unpack(init_params(cfg.model_shape(), cfg.seed));
    gp = w.gate;
  }
  const softgate::SoftGateConfig gate = cfg.gate_config();
  std::vector<TensorRecord> low;
  std::vector<TensorRecord> high;
  std::ostringstream report;
  report << std::setprecision(10);
  for (const Input& in : inputs) {
    const softgate::Split<double> s = softgate::split(in.features, gate, gp);
    low.push_back(evalio::feature_record(in.name, s.low));
    high.push_back(evalio::feature_record(in.name, s.high));
    report << in.name << " mode=" << (gate.mode == softgate::SoftGateConfig::Mode::kHard ? "hard" : "soft")
           << " cutoff=" << s.state.cutoff << '\n';
  }
  evalio::write_container(dir / "low.had", low);
  evalio::write_container(dir / "high.had", high);
  write_text(dir / "split_report.txt", report.str());
  out << report.str();
  return kOk;
}

}  // namespace

std::vector<TensorRecord> dataset_records(const std::vector<training::SynthSample>& samples) {
  std::vector<TensorRecord> records;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& s = samples[i];
    const std::string name = sample_name(i);
    const auto h = static_cast<std::uint32_t>(s.image.rows());
    const auto w = static_cast<std::uint32_t>(s.image.cols());
    const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> img = s.image;
    records.push_back(TensorRecord::from_f64(name + ".image", {1, h, w},
                                             std::span<const double>(img.data(), static_cast<std::size_t>(img.size()))));
    std::vector<std::uint8_t> mask;
    for (std::uint32_t y = 0; y < h; ++y)
      for (std::uint32_t x = 0; x < w; ++x) mask.push_back(s.pixel_mask(y, x) != 0.0 ? 1 : 0);
    records.push_back(TensorRecord::from_u8(name + ".mask", {h, w}, mask));
    const double label[2] = {static_cast<double>(s.class_id), s.anomalous ? 1.0 : 0.0};
    records.push_back(TensorRecord::from_f64(name + ".label", {2}, label));
  }
  return records;
}

std::vector<training::SynthSample> dataset_from_records(const std::vector<TensorRecord>& records) {
  std::vector<training::SynthSample> samples;
  for (const TensorRecord& r : records) {
    if (!ends_with(r.name, ".image")) continue;
    const std::string base = r.name.substr(0, r.name.size() - 6);
    if (r.shape.size() != 3 || r.shape[0] != 1) throw ConfigError(r.name + ": images must be 1 x H x W");
    training::SynthSample s;
    const std::vector<double> v = r.to_f64();
    using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    s.image = Eigen::Map<const RowMat>(v.data(), r.shape[1], r.shape[2]);
    s.pixel_mask = evalio::record_matrix(evalio::find_record(records, base + ".mask"));
    const std::vector<double> label = evalio::find_record(records, base + ".label").to_f64();
    if (label.size() != 2) throw ConfigError(base + ".label must hold two values");
    s.class_id = static_cast<int>(label[0]);
    s.anomalous = label[1] != 0.0;
    samples.push_back(std::move(s));
  }
  return samples;
}

std::vector<TensorRecord> checkpoint_records(const ModelParams& params, const training::OptimState& optim) {
  std::vector<TensorRecord> records;
  const ModelShape& s = params.shape();
  const double shape[6] = {static_cast<double>(s.channels), static_cast<double>(s.height),
                           static_cast<double>(s.width),    static_cast<double>(s.head_dim),
                           static_cast<double>(s.rank),     static_cast<double>(s.mask_hidden)};
  records.push_back(TensorRecord::from_f64("model.shape", {6}, shape));
  for (const ParamGroup& g : params.groups()) records.push_back(group_record("param." + g.name, g, params.values()));
  if (optim.m.size() == params.total_count()) {
    for (const ParamGroup& g : params.groups()) {
      records.push_back(group_record("adam.m." + g.name, g, optim.m));
      records.push_back(group_record("adam.v." + g.name, g, optim.v));
    }
    const double step = static_cast<double>(optim.step);
    records.push_back(TensorRecord::from_f64("adam.step", {1}, std::span<const double>(&step, 1)));
  }
  return records;
}

ModelParams params_from_checkpoint(const std::vector<TensorRecord>& records) {
  const std::vector<double> s = evalio::find_record(records, "model.shape").to_f64();
  if (s.size() != 6) throw ConfigError("checkpoint model.shape must hold six values");
  ModelShape shape;
  shape.channels = static_cast<int>(s[0]);
  shape.height = static_cast<int>(s[1]);
  shape.width = static_cast<int>(s[2]);
  shape.head_dim = static_cast<int>(s[3]);
  shape.rank = static_cast<int>(s[4]);
  shape.mask_hidden = static_cast<int>(s[5]);
  ModelParams params(shape);
  for (const ParamGroup& g : params.groups()) {
    load_group(evalio::find_record(records, "param." + g.name), g, params.values());
  }
  return params;
}

training::OptimState optim_from_checkpoint(const std::vector<TensorRecord>& records, const ModelParams& params) {
  training::OptimState st = training::make_optim_state(params.total_count(), {});
  for (const ParamGroup& g : params.groups()) {
    load_group(evalio::find_record(records, "adam.m." + g.name), g, st.m);
    load_group(evalio::find_record(records, "adam.v." + g.name), g, st.v);
  }
  st.step = static_cast<std::int64_t>(evalio::find_record(records, "adam.step").to_f64().at(0));
  return st;
}

std::string format_metrics_table(const std::vector<std::pair<std::string, evalio::Metrics>>& rows) {
  std::ostringstream out;
  out << std::left << std::setw(16) << "variant" << std::right << std::setw(8) << "P-ROC" << std::setw(8) << "I-ROC"
      << std::setw(8) << "P-PR" << std::setw(8) << "I-PR" << '\n';
  out << std::fixed << std::setprecision(4);
  for (const auto& [name, m] : rows) {
    out << std::left << std::setw(16) << name << std::right << std::setw(8) << m.p_roc << std::setw(8) << m.i_roc
        << std::setw(8) << m.p_pr << std::setw(8) << m.i_pr << '\n';
  }
  return out.str();
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Frequency-guided dual-branch anomaly detection"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::optional<int> steps;
  std::optional<std::string> out_dir;
  std::optional<std::string> gate;
  bool no_fsam = false;
  bool no_gscm = false;
  bool no_f2s = false;
  std::string checkpoint;
  std::string data_dir;
  std::string input;
  bool oracle = false;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "key=value config file");
    sub->add_option("--set", overrides, "override a config key (key=value), repeatable");
    sub->add_option("--seed", seed, "random seed");
    sub->add_option("--steps", steps, "training steps");
    sub->add_option("--out", out_dir, "output directory");
    sub->add_option("--gate", gate, "soft | hard:<t>");
    sub->add_flag("--no-fsam", no_fsam, "bypass the high-frequency branch");
    sub->add_flag("--no-gscm", no_gscm, "bypass the low-frequency branch");
    sub->add_flag("--no-f2s", no_f2s, "drop the relative offset bias from attention");
  };

  CLI::App* gen = app.add_subcommand("gen", "generate a synthetic dataset");
  CLI::App* train = app.add_subcommand("train", "train a model");
  CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  CLI::App* infer = app.add_subcommand("infer", "write heatmaps for every input");
  CLI::App* split = app.add_subcommand("split", "split inputs into low/high frequency components");
  for (CLI::App* sub : {gen, train, eval, infer, split}) common(sub);
  train->add_option("--data", data_dir, "directory holding train.had");
  eval->add_option("--data", data_dir, "directory holding test.had");
  eval->add_option("--checkpoint", checkpoint, "checkpoint container");
  eval->add_flag("--oracle", oracle, "score every pixel by its ground truth");
  infer->add_option("--checkpoint", checkpoint, "checkpoint container");
  infer->add_option("--input", input, "container of images or C x H x W feature maps")->required();
  split->add_option("--checkpoint", checkpoint, "checkpoint container providing the gate parameters");
  split->add_option("--input", input, "container of images or C x H x W feature maps")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kConfigError;
  }

  try {
    RunConfig cfg = config_path.empty() ? RunConfig{} : RunConfig::load(config_path);
    for (const std::string& kv : overrides) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw ConfigError("--set expects key=value, got " + kv);
      cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (seed) cfg.seed = *seed;
    if (steps) cfg.steps = *steps;
    if (out_dir) cfg.out = *out_dir;
    if (gate) cfg.gate = *gate;
    if (no_fsam) cfg.no_fsam = true;
    if (no_gscm) cfg.no_gscm = true;
    if (no_f2s) cfg.no_f2s = true;
    cfg.validate();

    if (*gen) return cmd_gen(cfg, out);
    if (*train) return cmd_train(cfg, data_dir, out);
    if (*eval) return cmd_eval(cfg, checkpoint, data_dir, oracle, out);
    if (*infer) return cmd_infer(cfg, checkpoint, input, out);
    if (*split) return cmd_split(cfg, checkpoint, input, out);
    return kFailure;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const std::invalid_argument& e) {
    err << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const IoError& e) {
    err << "I/O error: " << e.what() << '\n';
    return kIoError;
  } catch (const NumericError& e) {
    err << "numeric error: " << e.what() << '\n';
    return kNumericError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kFailure;
  }
}

}  // namespace harmoniad::cli
