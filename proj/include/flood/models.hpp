#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "flood/graph.hpp"
#include "flood/nn/layers.hpp"
#include "flood/timeseries.hpp"

namespace flood {

enum class Architecture {
  GtnParallel,
  GtnSeries,
  Rnn,
  Cnn,
  Tcn,
  Gcn,
  Transformer,
  Persistence,
};

Architecture parse_architecture(const std::string& s);
std::string architecture_name(Architecture a);
const std::vector<Architecture>& all_architectures();      // CLI order
const std::vector<Architecture>& learned_architectures();  // everything but persistence

struct ModelConfig {
  Architecture architecture = Architecture::GtnParallel;
  int w = 72;
  int k = 24;
  int hidden_dim = 32;
  int n_heads = 4;
  int n_encoder_layers = 2;
  int n_gcn_layers = 2;
  int lstm_layers = 1;
  double dropout = 0.0;
  bool use_future_covariates = true;

  void validate() const;  // throws ConfigError
};

// Per-target, per-horizon-step distribution over covariate channels.
// Row m * k + j holds the weights for target m at horizon step j.
struct AttentionTable {
  std::vector<std::string> target_names;
  std::vector<std::string> covariate_names;
  Eigen::MatrixXd weights;  // (M*k) x C, rows sum to 1
};

struct Forecast {
  Eigen::MatrixXd y_hat;  // k x M, physical units [ft]
  HourStamp anchor = 0;
  std::optional<AttentionTable> attention;
};

// Everything a model needs to know about the dataset it was fitted to:
// the graph, the channel layout, the fitted scaler, and precomputed
// adjacency operators.
struct DatasetMeta {
  StationGraph graph;
  ChannelLayout layout;
  Scaler scaler;
  std::vector<ChannelSpec> channels;        // frame column -> spec
  Eigen::MatrixXd a_hat_full;               // N x N, all nodes
  Eigen::MatrixXd a_hat_station;            // Ns x Ns, station-induced subgraph
  std::vector<int> station_nodes;           // station row -> graph node index
  std::vector<int> target_station_rows;     // target m -> station row
  std::vector<std::vector<int>> node_channels;  // graph node -> frame columns

  static DatasetMeta build(const StationGraph& graph, const TimeSeriesFrame& frame,
                           const Scaler& scaler);
};

// Receptive field of a causal kernel-3 stack with dilations 1,2,4,...:
// 1 + 2*(2^L - 1). tcn_layers_for returns the smallest L covering `span`.
int tcn_receptive_field(int layers);
int tcn_layers_for(int span);

// A forecasting model over normalized samples. forward_norm_batch is the
// training workhorse: it maps B normalized samples to a (B*k) x M matrix of
// normalized predictions (sample-major, horizon steps within a sample).
// Models that ignore future covariates (use_future_covariates=false) apply
// the hold-last mask internally, so their output is exactly invariant to the
// sample's stored future-covariate block.
class Model {
 public:
  virtual ~Model() = default;

  const ModelConfig& config() const { return cfg_; }
  const DatasetMeta& meta() const { return meta_; }
  nn::ParamStore& params() { return params_; }
  const nn::ParamStore& params() const { return params_; }

  virtual nn::Value forward_norm_batch(const std::vector<WindowedSample>& batch,
                                       bool training, Rng& rng) = 0;

  nn::Value forward_norm(const WindowedSample& s);  // k x M, eval mode
  Forecast forecast(const WindowedSample& s, bool with_attention = false);

  // Fusion-attention attribution of covariate channels; only architectures
  // with a covariate cross-attention stage support this.
  virtual AttentionTable extract_attention(const WindowedSample& s);

  // Structural ablation hook: zero out the covariate memory before fusion.
  // No-op for architectures without a separate covariate branch.
  virtual void ablate_covariate_memory(bool) {}

  static std::unique_ptr<Model> create(const ModelConfig& cfg, const DatasetMeta& meta,
                                       std::uint64_t seed);

 protected:
  Model(const ModelConfig& cfg, const DatasetMeta& meta)
      : cfg_(cfg), meta_(meta) {}

  // (w+k) x F: past block verbatim; future rows hold the last past value
  // except covariate columns, which carry x_cov_future.
  Eigen::MatrixXd extended_sequence(const WindowedSample& s) const;
  // Applies the hold-last covariate mask when the config says to.
  WindowedSample masked(const WindowedSample& s) const;
  // (B*M) x k per-target predictions -> (B*k) x M sample-major output.
  static nn::Value assemble_targets(const nn::Value& per_target, int b, int m);

  ModelConfig cfg_;
  DatasetMeta meta_;
  nn::ParamStore params_;
};

}  // namespace flood
