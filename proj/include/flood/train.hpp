#pragma once

#include <string>
#include <vector>

#include "flood/models.hpp"

namespace flood {

struct TrainConfig {
  int epochs = 30;
  int batch_size = 16;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  int patience = 5;           // early-stopping patience on validation MAE
  double val_fraction = 0.1;  // chronological tail of the train set
  std::uint64_t seed = 0;
  double grad_clip_norm = 5.0;

  void validate() const;  // throws ConfigError
};

struct TrainResult {
  std::vector<double> epoch_losses;  // chronological mean train MSE per epoch
  std::vector<double> val_maes;      // validation MAE [ft] per epoch (if any)
  int best_epoch = -1;               // epoch whose parameters were kept
  double train_seconds = 0.0;
};

// Minimizes MSE on normalized targets with the adaptive-moment optimizer,
// gradient clipping, and early stopping on validation MAE. Deterministic
// given (seed, data, config). Restores the best-validation parameters.
TrainResult train(Model& model, const std::vector<WindowedSample>& train_samples,
                  const TrainConfig& cfg);

struct Metrics {
  double mae_ft = 0.0;
  double rmse_ft = 0.0;
  Eigen::VectorXd mae_per_step;   // k
  Eigen::VectorXd rmse_per_step;  // k
};

// Plain-loop metric core over per-sample k x M prediction/truth pairs in
// physical units; means run over samples x steps x targets.
Metrics compute_metrics(const std::vector<Eigen::MatrixXd>& y_hat,
                        const std::vector<Eigen::MatrixXd>& y_true);

// Runs the frozen model over the test set and scores it in feet.
Metrics evaluate(Model& model, const std::vector<WindowedSample>& test);

struct ReportRow {
  std::string model;
  std::string arm;  // "with-fpc" or "without-fpc"
  double mae_ft = 0.0;
  double rmse_ft = 0.0;
  double train_s = 0.0;
  double predict_s = 0.0;
};

struct EvalReport {
  std::vector<ReportRow> rows;

  const ReportRow& row(const std::string& model, const std::string& arm) const;
  std::string to_table() const;    // aligned MAE/RMSE x with/without table
  std::string to_csv() const;      // model,arm,mae_ft,rmse_ft,train_s,predict_s
  std::string metrics_csv() const; // model,arm,mae_ft,rmse_ft (no wall-clock)
};

struct AblationConfig {
  std::vector<Architecture> architectures = all_architectures();
  ModelConfig base_model;  // architecture and covariate flag overridden per run
  TrainConfig train;
};

// Trains every learned architecture twice (with/without future predicted
// covariates) under identical seeds and data; the persistence row is
// computed without training and repeated for both arms. Prediction times
// are medians of 3 full-test passes.
EvalReport run_ablation(const AblationConfig& cfg, const DatasetMeta& meta,
                        const std::vector<WindowedSample>& train_set,
                        const std::vector<WindowedSample>& test_set);

}  // namespace flood
