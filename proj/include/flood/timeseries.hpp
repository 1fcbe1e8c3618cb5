#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "flood/common.hpp"
#include "flood/graph.hpp"

namespace flood {

enum class ChannelKind {
  WaterLevel,   // ft
  Rainfall,     // in/hr
  Tide,         // ft
  GateOpening,  // dimensionless 0..1
  PumpFlow,     // cfs
};

ChannelKind parse_channel_kind(const std::string& s);
std::string channel_kind_name(ChannelKind k);
std::string channel_kind_unit(ChannelKind k);

struct ChannelSpec {
  std::string name;
  std::string node_id;
  ChannelKind kind = ChannelKind::WaterLevel;
};

// Hours since the Unix epoch, always top-of-hour UTC.
using HourStamp = std::int64_t;
HourStamp parse_hour_stamp(const std::string& iso);   // YYYY-MM-DDTHH:00:00Z
std::string format_hour_stamp(HourStamp h);

// Hourly multichannel observations. values is T x F; mask(i,j) true means
// the stored value was observed rather than interpolated.
struct TimeSeriesFrame {
  HourStamp start_time = 0;
  std::vector<ChannelSpec> channels;
  Eigen::MatrixXd values;
  Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> mask;

  Eigen::Index length() const { return values.rows(); }
  Eigen::Index channel_count() const { return values.cols(); }
  int channel_index(const std::string& name) const;  // -1 if absent
};

// Fixed column roles for one (frame, graph) pairing: which channels are
// covariates and which water-level columns are prediction targets.
struct ChannelLayout {
  int F = 0, C = 0, M = 0;
  std::vector<int> cov_idx;     // covariate channel -> frame column
  std::vector<int> target_idx;  // target m -> frame column, ordered as graph.targets
  std::vector<std::string> channel_names;
};

ChannelLayout make_layout(const TimeSeriesFrame& frame, const StationGraph& graph);

struct WindowedSample {
  Eigen::MatrixXd x_past;        // w x F, hours t-w+1..t
  Eigen::MatrixXd x_cov_future;  // k x C, hours t+1..t+k
  Eigen::MatrixXd y_true;        // k x M, hours t+1..t+k
  HourStamp anchor = 0;          // hour t
};

// Per-channel z-score statistics fitted on training rows only.
struct Scaler {
  Eigen::VectorXd mean;  // F
  Eigen::VectorXd std;   // F, floored at epsilon
  ChannelLayout layout;
  static constexpr double kEpsilon = 1e-8;

  WindowedSample transform(const WindowedSample& s) const;
  Eigen::MatrixXd inverse_targets(const Eigen::MatrixXd& y_norm) const;  // k x M -> ft
};

// CSV ingestion per the documented schema. The sidecar manifest at
// `csv_path + ".manifest"` maps channel -> (node-id, kind, unit). Gaps of
// up to 3 consecutive missing hours are linearly interpolated and recorded
// in the mask; anything longer is an error.
TimeSeriesFrame load_frame(const std::string& csv_path, const StationGraph& graph);
TimeSeriesFrame load_frame(const std::string& csv_path,
                           const std::string& manifest_path,
                           const StationGraph& graph);
void write_frame(const TimeSeriesFrame& frame, const std::string& csv_path);

std::vector<WindowedSample> sliding_windows(const TimeSeriesFrame& frame, int w,
                                            int k, const StationGraph& graph);

struct TrainTestSplit {
  std::vector<WindowedSample> train;
  std::vector<WindowedSample> test;
};

// Chronological split at floor(ratio * N); train samples whose target
// window reaches into the test period are dropped.
TrainTestSplit split_train_test(const std::vector<WindowedSample>& samples,
                                double ratio);

// Fits on train x_past rows only, then z-scores every sample in `all`.
std::pair<Scaler, std::vector<WindowedSample>> fit_apply_scaler(
    const std::vector<WindowedSample>& train, const std::vector<WindowedSample>& all,
    const ChannelLayout& layout);

// Hold-last replacement of the future covariate block (the "without
// F.P.C." arm). x_past and y_true are untouched; idempotent.
WindowedSample mask_future_covariates(const WindowedSample& s,
                                      const ChannelLayout& layout);

}  // namespace flood
