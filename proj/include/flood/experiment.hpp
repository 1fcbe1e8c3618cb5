#pragma once

#include <string>
#include <vector>

#include "flood/models.hpp"
#include "flood/synth.hpp"
#include "flood/train.hpp"

namespace flood {

// Everything one experiment run needs, loadable from a JSON document.
// When data_csv is empty the bundled synthetic scenario supplies the data;
// when topology_path is empty the bundled branched coastal layout is used.
struct ExperimentConfig {
  std::string topology_path;
  std::string data_csv;
  std::string scenario = "default";  // "default" or "tide-dominated"
  int scenario_hours = 4320;
  std::string output_dir = ".";
  double split_ratio = 0.8;
  std::vector<std::string> models;  // empty means every architecture
  ModelConfig model;                // architecture field overridden per run
  TrainConfig train;
  std::uint64_t seed = 0;

  static ExperimentConfig load(const std::string& path);
  static ExperimentConfig from_json(const std::string& text);
  std::string to_json() const;  // canonical (sorted keys, fixed layout)
  void validate() const;

  std::vector<Architecture> architectures() const;
};

struct Dataset {
  StationGraph graph;
  TimeSeriesFrame frame;
  DatasetMeta meta;
  std::vector<WindowedSample> train_set, test_set;
};

// Loads or synthesizes the frame, windows it, splits chronologically, and
// fits the scaler on the training rows only.
Dataset prepare_dataset(const ExperimentConfig& cfg);

// FNV-1a hash of the canonical JSON form, as fixed-width hex.
std::string config_hash(const ExperimentConfig& cfg);

// Writes <dir>/run-manifest.json recording the command, config hash, and
// seed. Deliberately timestamp-free so reruns are byte-identical.
void write_run_manifest(const ExperimentConfig& cfg, const std::string& command,
                        const std::string& dir);

}  // namespace flood
