// Command-line entry point: generate / train / evaluate / predict / plot-data.

#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "flood/checkpoint.hpp"
#include "flood/experiment.hpp"

namespace fs = std::filesystem;
using namespace flood;

namespace {

// Builds the inference sample anchored at hour index t of the frame. Future
// covariates come from the frame when it extends past t, and fall back to
// hold-last otherwise (operationally the forecaster has no future data).
WindowedSample sample_at(const TimeSeriesFrame& frame, const ChannelLayout& layout,
                         int w, int k, Eigen::Index t) {
  if (t < w - 1 || t >= frame.length())
    throw DataError("anchor " + format_hour_stamp(frame.start_time + t) +
                    " leaves no full " + std::to_string(w) + "-hour history");
  WindowedSample s;
  s.anchor = frame.start_time + t;
  s.x_past = frame.values.middleRows(t - w + 1, w);
  s.x_cov_future.resize(k, layout.C);
  s.y_true = Eigen::MatrixXd::Zero(k, layout.M);
  for (int j = 0; j < k; ++j)
    for (int c = 0; c < layout.C; ++c) {
      const int col = layout.cov_idx[size_t(c)];
      s.x_cov_future(j, c) = (t + 1 + j < frame.length())
                                 ? frame.values(t + 1 + j, col)
                                 : frame.values(t, col);
    }
  return s;
}

Eigen::Index resolve_anchor(const TimeSeriesFrame& frame, const std::string& iso) {
  if (iso.empty()) return frame.length() - 1;
  const HourStamp h = parse_hour_stamp(iso);
  const Eigen::Index t = h - frame.start_time;
  if (t < 0 || t >= frame.length())
    throw DataError("anchor " + iso + " lies outside the data");
  return t;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path);
  if (!os) throw DataError("cannot write " + path.string());
  os << text;
}

int cmd_generate(const std::string& scenario, int hours, std::uint64_t seed,
                 const std::string& topology, const std::string& out) {
  ExperimentConfig cfg;
  cfg.topology_path = topology;
  cfg.scenario = scenario;
  cfg.scenario_hours = hours;
  cfg.seed = seed;
  cfg.validate();
  StationGraph graph = cfg.topology_path.empty()
                           ? build_graph(default_topology())
                           : build_graph(load_topology_file(cfg.topology_path));
  ScenarioConfig sc;
  if (scenario == "default")
    sc = default_scenario(hours, seed);
  else if (scenario == "tide-dominated")
    sc = tide_dominated_scenario(hours, seed);
  else
    throw ConfigError("unknown scenario: " + scenario);
  sc.graph = graph;
  TimeSeriesFrame frame = generate(sc);
  fs::path out_path(out);
  if (out_path.has_parent_path()) fs::create_directories(out_path.parent_path());
  write_frame(frame, out);
  write_run_manifest(cfg, "generate",
                     out_path.has_parent_path() ? out_path.parent_path().string()
                                                : ".");
  std::cout << "wrote " << frame.length() << " hourly rows x "
            << frame.channel_count() << " channels to " << out << "\n";
  return 0;
}

int cmd_train(const std::string& config_path) {
  ExperimentConfig cfg = ExperimentConfig::load(config_path);
  Dataset ds = prepare_dataset(cfg);
  fs::create_directories(cfg.output_dir);
  write_run_manifest(cfg, "train", cfg.output_dir);
  for (Architecture arch : cfg.architectures()) {
    ModelConfig mc = cfg.model;
    mc.architecture = arch;
    auto model = Model::create(mc, ds.meta, cfg.seed);
    double seconds = 0.0;
    if (arch != Architecture::Persistence) {
      TrainResult tr = train(*model, ds.train_set, cfg.train);
      seconds = tr.train_seconds;
      std::string loss_csv = "epoch,train_mse,val_mae_ft\n";
      for (size_t e = 0; e < tr.epoch_losses.size(); ++e) {
        char line[96];
        std::snprintf(line, sizeof(line), "%zu,%.12g,%.12g\n", e,
                      tr.epoch_losses[e],
                      e < tr.val_maes.size() ? tr.val_maes[e] : 0.0);
        loss_csv += line;
      }
      write_text(fs::path(cfg.output_dir) /
                     (architecture_name(arch) + "-loss.csv"),
                 loss_csv);
    }
    const fs::path ckpt =
        fs::path(cfg.output_dir) / (architecture_name(arch) + ".ckpt");
    save_checkpoint(ckpt.string(), *model, seconds, cfg.seed);
    std::cout << architecture_name(arch) << ": trained in " << seconds
              << " s, checkpoint " << ckpt.string() << "\n";
  }
  return 0;
}

int cmd_evaluate(const std::string& config_path) {
  ExperimentConfig cfg = ExperimentConfig::load(config_path);
  Dataset ds = prepare_dataset(cfg);
  fs::create_directories(cfg.output_dir);
  write_run_manifest(cfg, "evaluate", cfg.output_dir);
  AblationConfig ac;
  ac.architectures = cfg.architectures();
  ac.base_model = cfg.model;
  ac.train = cfg.train;
  EvalReport report = run_ablation(ac, ds.meta, ds.train_set, ds.test_set);
  write_text(fs::path(cfg.output_dir) / "report.txt", report.to_table());
  write_text(fs::path(cfg.output_dir) / "report.csv", report.to_csv());
  write_text(fs::path(cfg.output_dir) / "metrics.csv", report.metrics_csv());
  std::cout << report.to_table();
  return 0;
}

int cmd_predict(const std::string& ckpt_path, const std::string& data_csv,
                const std::string& out_dir, const std::string& anchor_iso) {
  LoadedModel loaded = load_checkpoint(ckpt_path);
  Model& model = *loaded.model;
  const DatasetMeta& meta = model.meta();
  TimeSeriesFrame frame = load_frame(data_csv, meta.graph);
  const Eigen::Index t = resolve_anchor(frame, anchor_iso);
  WindowedSample raw =
      sample_at(frame, meta.layout, model.config().w, model.config().k, t);
  WindowedSample norm = meta.scaler.transform(raw);

  const bool has_attention =
      model.config().architecture == Architecture::GtnParallel;
  Forecast fc = model.forecast(norm, has_attention);

  fs::create_directories(out_dir);
  std::string csv = "time";
  for (const auto& id : meta.graph.targets()) csv += "," + id + "_ft";
  csv += "\n";
  for (int j = 0; j < fc.y_hat.rows(); ++j) {
    csv += format_hour_stamp(fc.anchor + 1 + j);
    for (int m = 0; m < fc.y_hat.cols(); ++m) {
      char buf[32];
      std::snprintf(buf, sizeof(buf), ",%.6f", fc.y_hat(j, m));
      csv += buf;
    }
    csv += "\n";
  }
  write_text(fs::path(out_dir) / "forecast.csv", csv);

  if (fc.attention) {
    const AttentionTable& at = *fc.attention;
    std::string acsv = "target,horizon,channel,weight\n";
    const int k = model.config().k;
    for (int m = 0; m < int(at.target_names.size()); ++m)
      for (int j = 0; j < k; ++j)
        for (int c = 0; c < int(at.covariate_names.size()); ++c) {
          char buf[32];
          std::snprintf(buf, sizeof(buf), "%.9f", at.weights(m * k + j, c));
          acsv += at.target_names[size_t(m)] + "," + std::to_string(j + 1) + "," +
                  at.covariate_names[size_t(c)] + "," + buf + "\n";
        }
    write_text(fs::path(out_dir) / "attention.csv", acsv);
  }
  std::cout << "forecast from " << format_hour_stamp(fc.anchor) << " written to "
            << out_dir << "\n";
  return 0;
}

int cmd_plot_data(const std::vector<std::string>& ckpts, const std::string& data_csv,
                  const std::string& out_file, const std::string& anchor_iso) {
  if (ckpts.empty()) throw ConfigError("plot-data needs at least one checkpoint");
  LoadedModel first = load_checkpoint(ckpts[0]);
  const DatasetMeta& meta = first.model->meta();
  TimeSeriesFrame frame = load_frame(data_csv, meta.graph);
  const Eigen::Index t = resolve_anchor(frame, anchor_iso);
  const int w = first.model->config().w, k = first.model->config().k;

  std::string csv = "time,series,station,value_ft\n";
  auto emit = [&csv](HourStamp h, const std::string& series,
                     const std::string& station, double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    csv += format_hour_stamp(h) + "," + series + "," + station + "," + buf + "\n";
  };

  // observed traces across the history window and (where present) horizon
  const Eigen::Index last = std::min<Eigen::Index>(t + k, frame.length() - 1);
  for (Eigen::Index hr = t - w + 1; hr <= last; ++hr)
    for (int m = 0; m < meta.layout.M; ++m)
      emit(frame.start_time + hr, "OBS", meta.graph.targets()[size_t(m)],
           frame.values(hr, meta.layout.target_idx[size_t(m)]));

  for (const auto& path : ckpts) {
    LoadedModel loaded = load_checkpoint(path);
    Model& model = *loaded.model;
    if (model.config().w != w || model.config().k != k)
      throw ConfigError("checkpoint " + path +
                        " disagrees on the (w, k) window sizes");
    WindowedSample raw = sample_at(frame, model.meta().layout, w, k, t);
    Forecast fc = model.forecast(model.meta().scaler.transform(raw));
    const std::string name = architecture_name(model.config().architecture);
    for (int j = 0; j < k; ++j)
      for (int m = 0; m < int(fc.y_hat.cols()); ++m)
        emit(fc.anchor + 1 + j, name, model.meta().graph.targets()[size_t(m)],
             fc.y_hat(j, m));
  }
  fs::path out_path(out_file);
  if (out_path.has_parent_path()) fs::create_directories(out_path.parent_path());
  write_text(out_path, csv);
  std::cout << "wrote plot data for " << ckpts.size() << " model(s) to "
            << out_file << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"FloodGTN: spatio-temporal water-level forecasting"};
  app.require_subcommand(1);

  auto* gen = app.add_subcommand("generate", "Synthesize a scenario to CSV");
  std::string scenario = "default", topology, out_csv = "out/data.csv";
  int hours = 4320;
  std::uint64_t seed = 0;
  gen->add_option("--scenario", scenario, "default or tide-dominated");
  gen->add_option("--hours", hours, "scenario length in hours");
  gen->add_option("--seed", seed, "random seed");
  gen->add_option("--topology", topology, "topology file (bundled layout if omitted)");
  gen->add_option("--out", out_csv, "output CSV path");

  std::string config_path;
  auto* tr = app.add_subcommand("train", "Train models from an experiment config");
  tr->add_option("--config", config_path, "experiment JSON")->required();
  auto* ev = app.add_subcommand("evaluate",
                                "Run the two-arm ablation and write reports");
  ev->add_option("--config", config_path, "experiment JSON")->required();

  auto* pr = app.add_subcommand("predict", "Forecast from a checkpoint");
  std::string ckpt, data_csv, out_dir = "out", anchor;
  pr->add_option("--checkpoint", ckpt, "model checkpoint")->required();
  pr->add_option("--data", data_csv, "observation CSV")->required();
  pr->add_option("--out", out_dir, "output directory");
  pr->add_option("--anchor", anchor, "forecast origin (YYYY-MM-DDTHH:00:00Z)");

  auto* pl = app.add_subcommand("plot-data",
                                "Tidy observed-vs-predicted traces for plotting");
  std::vector<std::string> ckpts;
  std::string plot_out = "out/plot.csv";
  pl->add_option("--checkpoint", ckpts, "model checkpoints")->required();
  pl->add_option("--data", data_csv, "observation CSV")->required();
  pl->add_option("--out", plot_out, "output CSV path");
  pl->add_option("--anchor", anchor, "forecast origin (YYYY-MM-DDTHH:00:00Z)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }

  try {
    if (gen->parsed()) return cmd_generate(scenario, hours, seed, topology, out_csv);
    if (tr->parsed()) return cmd_train(config_path);
    if (ev->parsed()) return cmd_evaluate(config_path);
    if (pr->parsed()) return cmd_predict(ckpt, data_csv, out_dir, anchor);
    if (pl->parsed()) return cmd_plot_data(ckpts, data_csv, plot_out, anchor);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
