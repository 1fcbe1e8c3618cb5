#include "flood/experiment.hpp"

#include <filesystem>
#include <fstream>

#include "json.hpp"

namespace flood {

using nlohmann::json;

namespace {

ScenarioConfig scenario_by_name(const std::string& name, const StationGraph& graph,
                                int hours, std::uint64_t seed) {
  ScenarioConfig sc;
  if (name == "default") {
    sc = default_scenario(hours, seed);
  } else if (name == "tide-dominated") {
    sc = tide_dominated_scenario(hours, seed);
  } else {
    throw ConfigError("unknown scenario: " + name +
                      " (expected 'default' or 'tide-dominated')");
  }
  sc.graph = graph;
  return sc;
}

}  // namespace

ExperimentConfig ExperimentConfig::load(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open experiment config: " + path);
  std::string text((std::istreambuf_iterator<char>(is)),
                   std::istreambuf_iterator<char>());
  return from_json(text);
}

ExperimentConfig ExperimentConfig::from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("experiment config is not valid JSON: ") +
                      e.what());
  }
  ExperimentConfig cfg;
  try {
    cfg.topology_path = j.value("topology", cfg.topology_path);
    cfg.data_csv = j.value("data_csv", cfg.data_csv);
    cfg.scenario = j.value("scenario", cfg.scenario);
    cfg.scenario_hours = j.value("scenario_hours", cfg.scenario_hours);
    cfg.output_dir = j.value("output_dir", cfg.output_dir);
    cfg.split_ratio = j.value("split_ratio", cfg.split_ratio);
    cfg.models = j.value("models", cfg.models);
    cfg.seed = j.value("seed", cfg.seed);

    if (j.contains("model")) {
      const json& m = j["model"];
      cfg.model.w = m.value("w", cfg.model.w);
      cfg.model.k = m.value("k", cfg.model.k);
      cfg.model.hidden_dim = m.value("hidden_dim", cfg.model.hidden_dim);
      cfg.model.n_heads = m.value("n_heads", cfg.model.n_heads);
      cfg.model.n_encoder_layers =
          m.value("n_encoder_layers", cfg.model.n_encoder_layers);
      cfg.model.n_gcn_layers = m.value("n_gcn_layers", cfg.model.n_gcn_layers);
      cfg.model.lstm_layers = m.value("lstm_layers", cfg.model.lstm_layers);
      cfg.model.dropout = m.value("dropout", cfg.model.dropout);
      cfg.model.use_future_covariates =
          m.value("use_future_covariates", cfg.model.use_future_covariates);
    }
    if (j.contains("train")) {
      const json& t = j["train"];
      cfg.train.epochs = t.value("epochs", cfg.train.epochs);
      cfg.train.batch_size = t.value("batch_size", cfg.train.batch_size);
      cfg.train.learning_rate = t.value("learning_rate", cfg.train.learning_rate);
      cfg.train.patience = t.value("patience", cfg.train.patience);
      cfg.train.val_fraction = t.value("val_fraction", cfg.train.val_fraction);
      cfg.train.grad_clip_norm = t.value("grad_clip_norm", cfg.train.grad_clip_norm);
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("experiment config field has wrong type: ") +
                      e.what());
  }
  cfg.train.seed = cfg.seed;
  cfg.validate();
  return cfg;
}

std::string ExperimentConfig::to_json() const {
  json j;
  j["topology"] = topology_path;
  j["data_csv"] = data_csv;
  j["scenario"] = scenario;
  j["scenario_hours"] = scenario_hours;
  j["output_dir"] = output_dir;
  j["split_ratio"] = split_ratio;
  j["models"] = models;
  j["seed"] = seed;
  j["model"] = {{"w", model.w},
                {"k", model.k},
                {"hidden_dim", model.hidden_dim},
                {"n_heads", model.n_heads},
                {"n_encoder_layers", model.n_encoder_layers},
                {"n_gcn_layers", model.n_gcn_layers},
                {"lstm_layers", model.lstm_layers},
                {"dropout", model.dropout},
                {"use_future_covariates", model.use_future_covariates}};
  j["train"] = {{"epochs", train.epochs},
                {"batch_size", train.batch_size},
                {"learning_rate", train.learning_rate},
                {"patience", train.patience},
                {"val_fraction", train.val_fraction},
                {"grad_clip_norm", train.grad_clip_norm}};
  return j.dump(2);  // nlohmann sorts object keys: canonical
}

void ExperimentConfig::validate() const {
  model.validate();
  train.validate();
  if (split_ratio <= 0.0 || split_ratio >= 1.0)
    throw ConfigError("split ratio must lie in (0, 1)");
  if (data_csv.empty() && scenario_hours < model.w + model.k + 1)
    throw ConfigError("scenario too short for one window: " +
                      std::to_string(scenario_hours) + " hours");
  if (!topology_path.empty() && !std::filesystem::exists(topology_path))
    throw ConfigError("topology file does not exist: " + topology_path);
  if (!data_csv.empty() && !std::filesystem::exists(data_csv))
    throw ConfigError("data file does not exist: " + data_csv);
  architectures();  // validates the model-name list
}

std::vector<Architecture> ExperimentConfig::architectures() const {
  if (models.empty()) return all_architectures();
  std::vector<Architecture> out;
  for (const auto& name : models) out.push_back(parse_architecture(name));
  return out;
}

Dataset prepare_dataset(const ExperimentConfig& cfg) {
  Dataset ds;
  ds.graph = cfg.topology_path.empty()
                 ? build_graph(default_topology())
                 : build_graph(load_topology_file(cfg.topology_path));
  ds.frame = cfg.data_csv.empty()
                 ? generate(scenario_by_name(cfg.scenario, ds.graph,
                                             cfg.scenario_hours, cfg.seed))
                 : load_frame(cfg.data_csv, ds.graph);
  auto windows = sliding_windows(ds.frame, cfg.model.w, cfg.model.k, ds.graph);
  auto layout = make_layout(ds.frame, ds.graph);
  auto split = split_train_test(windows, cfg.split_ratio);
  if (split.train.empty() || split.test.empty())
    throw DataError("split leaves an empty train or test set (" +
                    std::to_string(split.train.size()) + "/" +
                    std::to_string(split.test.size()) + ")");
  auto [scaler, train_scaled] = fit_apply_scaler(split.train, split.train, layout);
  auto [scaler2, test_scaled] = fit_apply_scaler(split.train, split.test, layout);
  (void)scaler2;
  ds.meta = DatasetMeta::build(ds.graph, ds.frame, scaler);
  ds.train_set = std::move(train_scaled);
  ds.test_set = std::move(test_scaled);
  return ds;
}

std::string config_hash(const ExperimentConfig& cfg) {
  const std::string s = cfg.to_json();
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

void write_run_manifest(const ExperimentConfig& cfg, const std::string& command,
                        const std::string& dir) {
  std::filesystem::create_directories(dir);
  json j;
  j["command"] = command;
  j["config_hash"] = config_hash(cfg);
  j["seed"] = cfg.seed;
  j["config"] = json::parse(cfg.to_json());
  std::ofstream os(std::filesystem::path(dir) / "run-manifest.json");
  if (!os) throw DataError("cannot write run manifest in " + dir);
  os << j.dump(2) << "\n";
}

}  // namespace flood
