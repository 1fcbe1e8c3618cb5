#include "flood/timeseries.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace flood {

namespace {

// Howard Hinnant's civil-date algorithms.
std::int64_t days_from_civil(int y, int m, int d) {
  y -= m <= 2;
  const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

void civil_from_days(std::int64_t z, int& y, int& m, int& d) {
  z += 719468;
  const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
  const unsigned doe = static_cast<unsigned>(z - era * 146097);
  const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  const std::int64_t yr = static_cast<std::int64_t>(yoe) + era * 400;
  const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const unsigned mp = (5 * doy + 2) / 153;
  d = int(doy - (153 * mp + 2) / 5 + 1);
  m = int(mp + (mp < 10 ? 3 : -9));
  y = int(yr + (m <= 2));
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

}  // namespace

ChannelKind parse_channel_kind(const std::string& s) {
  if (s == "water-level") return ChannelKind::WaterLevel;
  if (s == "rainfall") return ChannelKind::Rainfall;
  if (s == "tide") return ChannelKind::Tide;
  if (s == "gate-opening") return ChannelKind::GateOpening;
  if (s == "pump-flow") return ChannelKind::PumpFlow;
  throw DataError("unknown channel kind: " + s);
}

std::string channel_kind_name(ChannelKind k) {
  switch (k) {
    case ChannelKind::WaterLevel: return "water-level";
    case ChannelKind::Rainfall: return "rainfall";
    case ChannelKind::Tide: return "tide";
    case ChannelKind::GateOpening: return "gate-opening";
    case ChannelKind::PumpFlow: return "pump-flow";
  }
  throw DataError("bad channel kind enum");
}

std::string channel_kind_unit(ChannelKind k) {
  switch (k) {
    case ChannelKind::WaterLevel: return "ft";
    case ChannelKind::Rainfall: return "in/hr";
    case ChannelKind::Tide: return "ft";
    case ChannelKind::GateOpening: return "fraction";
    case ChannelKind::PumpFlow: return "cfs";
  }
  throw DataError("bad channel kind enum");
}

HourStamp parse_hour_stamp(const std::string& iso) {
  int y, mo, d, h, mi, s;
  char z;
  if (std::sscanf(iso.c_str(), "%d-%d-%dT%d:%d:%d%c", &y, &mo, &d, &h, &mi, &s,
                  &z) != 7 ||
      z != 'Z')
    throw DataError("bad timestamp: " + iso);
  if (mi != 0 || s != 0 || h < 0 || h > 23)
    throw DataError("non-hourly timestamp: " + iso);
  if (mo < 1 || mo > 12 || d < 1 || d > 31)
    throw DataError("bad timestamp: " + iso);
  return days_from_civil(y, mo, d) * 24 + h;
}

std::string format_hour_stamp(HourStamp hs) {
  std::int64_t days = hs / 24;
  int hour = int(hs % 24);
  if (hour < 0) {
    hour += 24;
    days -= 1;
  }
  int y, m, d;
  civil_from_days(days, y, m, d);
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%04d-%02d-%02dT%02d:00:00Z", y, m, d, hour);
  return buf;
}

int TimeSeriesFrame::channel_index(const std::string& name) const {
  for (size_t i = 0; i < channels.size(); ++i)
    if (channels[i].name == name) return int(i);
  return -1;
}

ChannelLayout make_layout(const TimeSeriesFrame& frame, const StationGraph& graph) {
  ChannelLayout layout;
  layout.F = int(frame.channel_count());
  for (int j = 0; j < layout.F; ++j) {
    layout.channel_names.push_back(frame.channels[j].name);
    if (frame.channels[j].kind != ChannelKind::WaterLevel)
      layout.cov_idx.push_back(j);
  }
  layout.C = int(layout.cov_idx.size());
  for (const auto& target : graph.targets()) {
    int found = -1;
    for (int j = 0; j < layout.F; ++j) {
      if (frame.channels[j].kind == ChannelKind::WaterLevel &&
          frame.channels[j].node_id == target) {
        found = j;
        break;
      }
    }
    if (found < 0) throw DataError("no water-level channel for target " + target);
    layout.target_idx.push_back(found);
  }
  layout.M = int(layout.target_idx.size());
  return layout;
}

TimeSeriesFrame load_frame(const std::string& csv_path, const StationGraph& graph) {
  return load_frame(csv_path, csv_path + ".manifest", graph);
}

TimeSeriesFrame load_frame(const std::string& csv_path,
                           const std::string& manifest_path,
                           const StationGraph& graph) {
  // manifest: channel,node,kind,unit
  std::ifstream mf(manifest_path);
  if (!mf) throw DataError("cannot open channel manifest: " + manifest_path);
  std::string line;
  if (!std::getline(mf, line) || split_csv_line(line) !=
          std::vector<std::string>{"channel", "node", "kind", "unit"})
    throw DataError("manifest header must be channel,node,kind,unit");
  struct ManifestRow { std::string node; ChannelKind kind; };
  std::vector<std::pair<std::string, ManifestRow>> manifest;
  while (std::getline(mf, line)) {
    if (line.empty()) continue;
    auto f = split_csv_line(line);
    if (f.size() != 4) throw DataError("bad manifest row: " + line);
    ChannelKind kind = parse_channel_kind(f[2]);
    if (f[3] != channel_kind_unit(kind))
      throw DataError("channel " + f[0] + ": unit " + f[3] + " does not match kind " +
                      f[2]);
    manifest.emplace_back(f[0], ManifestRow{f[1], kind});
  }

  std::ifstream in(csv_path);
  if (!in) throw DataError("cannot open data file: " + csv_path);
  if (!std::getline(in, line)) throw DataError("empty data file: " + csv_path);
  auto header = split_csv_line(line);
  if (header.empty() || header[0] != "timestamp")
    throw DataError("first CSV column must be 'timestamp'");

  TimeSeriesFrame frame;
  for (size_t j = 1; j < header.size(); ++j) {
    const std::string& name = header[j];
    const ManifestRow* row = nullptr;
    for (const auto& [n, r] : manifest)
      if (n == name) row = &r;
    if (!row) throw DataError("channel " + name + " missing from manifest");
    if (graph.index_of(row->node) < 0)
      throw DataError("channel " + name + " references unknown node " + row->node);
    frame.channels.push_back({name, row->node, row->kind});
  }
  const int f_cols = int(frame.channels.size());
  if (f_cols == 0) throw DataError("no data channels in " + csv_path);

  std::vector<std::vector<double>> cols(f_cols);
  std::vector<std::vector<bool>> present(f_cols);
  HourStamp prev = 0;
  Eigen::Index t_rows = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto f = split_csv_line(line);
    if (int(f.size()) != f_cols + 1)
      throw DataError("row has " + std::to_string(f.size()) + " fields, expected " +
                      std::to_string(f_cols + 1));
    HourStamp ts = parse_hour_stamp(f[0]);
    if (t_rows == 0)
      frame.start_time = ts;
    else if (ts != prev + 1)
      throw DataError("non-hourly timestamps: " + format_hour_stamp(prev) +
                      " followed by " + f[0]);
    prev = ts;
    for (int j = 0; j < f_cols; ++j) {
      const std::string& cell = f[j + 1];
      if (cell.empty()) {
        cols[j].push_back(0.0);
        present[j].push_back(false);
      } else {
        double v = 0.0;
        auto [p, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
        if (ec != std::errc() || p != cell.data() + cell.size())
          throw DataError("bad numeric cell '" + cell + "' at " + f[0]);
        cols[j].push_back(v);
        present[j].push_back(true);
      }
    }
    ++t_rows;
  }
  if (t_rows == 0) throw DataError("data file has no rows: " + csv_path);

  frame.values.resize(t_rows, f_cols);
  frame.mask.resize(t_rows, f_cols);
  for (int j = 0; j < f_cols; ++j) {
    Eigen::Index i = 0;
    while (i < t_rows) {
      if (present[j][i]) {
        ++i;
        continue;
      }
      Eigen::Index gap_end = i;
      while (gap_end < t_rows && !present[j][gap_end]) ++gap_end;
      const Eigen::Index gap = gap_end - i;
      if (i == 0 || gap_end == t_rows)
        throw DataError("channel " + frame.channels[j].name +
                        ": missing values touch the series boundary");
      if (gap > 3)
        throw DataError("channel " + frame.channels[j].name +
                        ": gap exceeds interpolation limit (" +
                        std::to_string(gap) + " h at " +
                        format_hour_stamp(frame.start_time + i) + ")");
      const double lo = cols[j][i - 1], hi = cols[j][gap_end];
      for (Eigen::Index g = i; g < gap_end; ++g) {
        const double frac = double(g - i + 1) / double(gap + 1);
        cols[j][g] = lo + (hi - lo) * frac;
      }
      i = gap_end;
    }
    for (Eigen::Index t = 0; t < t_rows; ++t) {
      frame.values(t, j) = cols[j][t];
      frame.mask(t, j) = present[j][t];
    }
  }
  return frame;
}

void write_frame(const TimeSeriesFrame& frame, const std::string& csv_path) {
  std::ofstream out(csv_path);
  if (!out) throw DataError("cannot write data file: " + csv_path);
  out << "timestamp";
  for (const auto& ch : frame.channels) out << "," << ch.name;
  out << "\n";
  char buf[32];
  for (Eigen::Index t = 0; t < frame.length(); ++t) {
    out << format_hour_stamp(frame.start_time + t);
    for (Eigen::Index j = 0; j < frame.channel_count(); ++j) {
      std::snprintf(buf, sizeof(buf), "%.10g", frame.values(t, j));
      out << "," << buf;
    }
    out << "\n";
  }
  std::ofstream mf(csv_path + ".manifest");
  if (!mf) throw DataError("cannot write channel manifest for " + csv_path);
  mf << "channel,node,kind,unit\n";
  for (const auto& ch : frame.channels)
    mf << ch.name << "," << ch.node_id << "," << channel_kind_name(ch.kind) << ","
       << channel_kind_unit(ch.kind) << "\n";
}

std::vector<WindowedSample> sliding_windows(const TimeSeriesFrame& frame, int w,
                                            int k, const StationGraph& graph) {
  if (w < 1 || k < 1) throw ConfigError("window sizes must be positive");
  const Eigen::Index t_len = frame.length();
  if (t_len < w + k)
    throw DataError("frame too short: T=" + std::to_string(t_len) + " < w+k=" +
                    std::to_string(w + k));
  ChannelLayout layout = make_layout(frame, graph);
  std::vector<WindowedSample> out;
  out.reserve(size_t(t_len - w - k + 1));
  for (Eigen::Index t = w - 1; t + k < t_len; ++t) {
    WindowedSample s;
    s.anchor = frame.start_time + t;
    s.x_past = frame.values.middleRows(t - w + 1, w);
    s.x_cov_future.resize(k, layout.C);
    for (int c = 0; c < layout.C; ++c)
      s.x_cov_future.col(c) = frame.values.col(layout.cov_idx[c]).segment(t + 1, k);
    s.y_true.resize(k, layout.M);
    for (int m = 0; m < layout.M; ++m)
      s.y_true.col(m) = frame.values.col(layout.target_idx[m]).segment(t + 1, k);
    out.push_back(std::move(s));
  }
  return out;
}

TrainTestSplit split_train_test(const std::vector<WindowedSample>& samples,
                                double ratio) {
  if (ratio <= 0.0 || ratio >= 1.0) throw ConfigError("split ratio must be in (0,1)");
  const size_t n = samples.size();
  const size_t s = size_t(std::floor(ratio * double(n)));
  if (s == 0) throw DataError("empty train side after split");
  if (s >= n) throw DataError("empty test side after split");
  const int k = int(samples[0].y_true.rows());
  const HourStamp test_first_target = samples[s].anchor + 1;
  TrainTestSplit split;
  for (size_t i = 0; i < s; ++i)
    if (samples[i].anchor + k < test_first_target) split.train.push_back(samples[i]);
  split.test.assign(samples.begin() + s, samples.end());
  if (split.train.empty()) throw DataError("empty train side after straddler drop");
  return split;
}

WindowedSample Scaler::transform(const WindowedSample& s) const {
  WindowedSample out = s;
  for (int j = 0; j < layout.F; ++j)
    out.x_past.col(j) = (s.x_past.col(j).array() - mean(j)) / std(j);
  for (int c = 0; c < layout.C; ++c) {
    const int j = layout.cov_idx[c];
    out.x_cov_future.col(c) = (s.x_cov_future.col(c).array() - mean(j)) / std(j);
  }
  for (int m = 0; m < layout.M; ++m) {
    const int j = layout.target_idx[m];
    out.y_true.col(m) = (s.y_true.col(m).array() - mean(j)) / std(j);
  }
  return out;
}

Eigen::MatrixXd Scaler::inverse_targets(const Eigen::MatrixXd& y_norm) const {
  if (y_norm.cols() != layout.M)
    throw ShapeError("inverse_targets: expected " + std::to_string(layout.M) +
                     " target columns");
  Eigen::MatrixXd out = y_norm;
  for (int m = 0; m < layout.M; ++m) {
    const int j = layout.target_idx[m];
    out.col(m) = y_norm.col(m).array() * std(j) + mean(j);
  }
  return out;
}

std::pair<Scaler, std::vector<WindowedSample>> fit_apply_scaler(
    const std::vector<WindowedSample>& train, const std::vector<WindowedSample>& all,
    const ChannelLayout& layout) {
  if (train.empty()) throw DataError("scaler: empty training set");
  Scaler scaler;
  scaler.layout = layout;
  scaler.mean = Eigen::VectorXd::Zero(layout.F);
  scaler.std = Eigen::VectorXd::Zero(layout.F);
  double count = 0.0;
  for (const auto& s : train) {
    scaler.mean += s.x_past.colwise().sum().transpose();
    count += double(s.x_past.rows());
  }
  scaler.mean /= count;
  for (const auto& s : train)
    scaler.std += (s.x_past.rowwise() - scaler.mean.transpose())
                      .array()
                      .square()
                      .colwise()
                      .sum()
                      .matrix()
                      .transpose();
  scaler.std = (scaler.std / count).cwiseSqrt().cwiseMax(Scaler::kEpsilon);

  std::vector<WindowedSample> normalized;
  normalized.reserve(all.size());
  for (const auto& s : all) normalized.push_back(scaler.transform(s));
  return {std::move(scaler), std::move(normalized)};
}

WindowedSample mask_future_covariates(const WindowedSample& s,
                                      const ChannelLayout& layout) {
  WindowedSample out = s;
  const Eigen::Index last = s.x_past.rows() - 1;
  for (int c = 0; c < layout.C; ++c)
    out.x_cov_future.col(c).setConstant(s.x_past(last, layout.cov_idx[c]));
  return out;
}

}  // namespace flood
