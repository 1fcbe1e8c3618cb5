#include "flood/synth.hpp"

#include <cmath>
#include <deque>

namespace flood {

namespace {

double coeff(const std::map<std::string, double>& m, const std::string& id) {
  auto it = m.find(id);
  return it == m.end() ? 0.0 : it->second;
}

void validate(const ScenarioConfig& cfg) {
  if (cfg.duration_hours < 2) throw ConfigError("scenario duration too short");
  for (const auto* m : {&cfg.storage_gain, &cfg.exchange_rate, &cfg.gate_drawdown,
                        &cfg.tide_coupling}) {
    for (const auto& [id, v] : *m) {
      if (cfg.graph.index_of(id) < 0)
        throw ConfigError("coefficient references unknown node: " + id);
      if (v < 0.0) throw ConfigError("negative coefficient for node " + id);
    }
  }
  if (cfg.rain_event_rate < 0.0 || cfg.rain_event_rate > 1.0)
    throw ConfigError("rain event rate must be in [0,1]");
  if (cfg.tidal_period_hours <= 0.0) throw ConfigError("tidal period must be positive");
  if (cfg.noise_sigma_ft < 0.0) throw ConfigError("negative noise sigma");
  // tide coupling only where the tide can physically act
  for (const auto& [id, v] : cfg.tide_coupling) {
    if (v == 0.0) continue;
    int i = cfg.graph.index_of(id);
    bool next_to_tide = false;
    for (int j : cfg.graph.neighbors(i))
      if (cfg.graph.node(j).kind == NodeKind::TideBoundary) next_to_tide = true;
    if (!next_to_tide)
      throw ConfigError("tide coupling on node not adjacent to tide boundary: " + id);
  }
}

}  // namespace

std::vector<int> nearest_rain_gauge(const StationGraph& g) {
  std::vector<int> gauges;
  for (int i = 0; i < g.node_count(); ++i)
    if (g.node(i).kind == NodeKind::RainGauge) gauges.push_back(i);
  std::vector<int> out(g.node_count(), -1);
  if (gauges.empty()) return out;
  for (int s = 0; s < g.node_count(); ++s) {
    // BFS from s; the first gauge found at minimal depth (lowest index on ties)
    std::vector<int> dist(g.node_count(), -1);
    std::deque<int> q{s};
    dist[s] = 0;
    int best = -1, best_dist = -1;
    while (!q.empty()) {
      int i = q.front();
      q.pop_front();
      if (best >= 0 && dist[i] > best_dist) break;
      if (g.node(i).kind == NodeKind::RainGauge &&
          (best < 0 || dist[i] < best_dist || i < best)) {
        best = i;
        best_dist = dist[i];
      }
      for (int j : g.neighbors(i))
        if (dist[j] < 0) {
          dist[j] = dist[i] + 1;
          q.push_back(j);
        }
    }
    out[s] = best;
  }
  return out;
}

TimeSeriesFrame generate(const ScenarioConfig& cfg) {
  validate(cfg);
  const StationGraph& g = cfg.graph;
  const int n = g.node_count();
  const int t_len = cfg.duration_hours;

  // channel order: water levels for all stations, then covariates, both
  // in graph node order
  TimeSeriesFrame frame;
  frame.start_time = parse_hour_stamp("2020-01-01T00:00:00Z");
  std::vector<int> station_nodes, gauge_nodes, gate_nodes, pump_nodes, tide_nodes;
  for (int i = 0; i < n; ++i) {
    switch (g.node(i).kind) {
      case NodeKind::WaterLevelStation:
        frame.channels.push_back({"wl_" + g.node(i).id, g.node(i).id,
                                  ChannelKind::WaterLevel});
        station_nodes.push_back(i);
        break;
      case NodeKind::RainGauge: gauge_nodes.push_back(i); break;
      case NodeKind::Gate: gate_nodes.push_back(i); break;
      case NodeKind::Pump: pump_nodes.push_back(i); break;
      case NodeKind::TideBoundary: tide_nodes.push_back(i); break;
    }
  }
  for (int i : gauge_nodes)
    frame.channels.push_back({"rain_" + g.node(i).id, g.node(i).id, ChannelKind::Rainfall});
  for (int i : tide_nodes)
    frame.channels.push_back({"tide_" + g.node(i).id, g.node(i).id, ChannelKind::Tide});
  for (int i : gate_nodes)
    frame.channels.push_back({"gate_" + g.node(i).id, g.node(i).id, ChannelKind::GateOpening});
  for (int i : pump_nodes)
    frame.channels.push_back({"pump_" + g.node(i).id, g.node(i).id, ChannelKind::PumpFlow});

  const int n_st = int(station_nodes.size());
  const int n_gauge = int(gauge_nodes.size());
  const int f_cols = int(frame.channels.size());
  frame.values.resize(t_len, f_cols);
  frame.mask.setConstant(t_len, f_cols, true);

  Rng rng(cfg.seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  // seeded controller thresholds, jittered per structure
  std::vector<double> gate_threshold(gate_nodes.size()), pump_threshold(pump_nodes.size());
  for (auto& th : gate_threshold) th = cfg.initial_level_ft + 0.6 + 0.2 * unit(rng);
  for (auto& th : pump_threshold) th = cfg.initial_level_ft + 0.8 + 0.2 * unit(rng);
  const double pump_capacity_cfs = 200.0;

  // rain event state per gauge
  std::vector<int> rain_hours_left(n_gauge, 0);
  std::vector<double> rain_intensity(n_gauge, 0.0);

  std::vector<int> gauge_of = nearest_rain_gauge(g);
  // station -> adjacent structures
  std::vector<std::vector<int>> adj_gates(n_st), adj_pumps(n_st);
  for (int s = 0; s < n_st; ++s) {
    for (int j : g.neighbors(station_nodes[s])) {
      for (size_t gi = 0; gi < gate_nodes.size(); ++gi)
        if (gate_nodes[gi] == j) adj_gates[s].push_back(int(gi));
      for (size_t pi = 0; pi < pump_nodes.size(); ++pi)
        if (pump_nodes[pi] == j) adj_pumps[s].push_back(int(pi));
    }
  }
  // station-station exchange neighborhood
  std::vector<std::vector<int>> st_neighbors(n_st);
  for (int a = 0; a < n_st; ++a)
    for (int b = 0; b < n_st; ++b)
      if (a != b && g.has_edge(station_nodes[a], station_nodes[b]))
        st_neighbors[a].push_back(b);

  std::vector<double> level(n_st, cfg.initial_level_ft);
  std::vector<double> alpha(n_st), kappa(n_st), beta(n_st), gamma(n_st);
  for (int s = 0; s < n_st; ++s) {
    const std::string& id = g.node(station_nodes[s]).id;
    if (auto it = cfg.initial_levels.find(id); it != cfg.initial_levels.end())
      level[s] = it->second;
    alpha[s] = coeff(cfg.storage_gain, id);
    kappa[s] = coeff(cfg.exchange_rate, id);
    beta[s] = coeff(cfg.gate_drawdown, id);
    gamma[s] = coeff(cfg.tide_coupling, id);
  }

  auto tide_at = [&](int t) {
    const double p1 = 2.0 * M_PI * double(t) / cfg.tidal_period_hours;
    const double p2 = 2.0 * M_PI * double(t) / (cfg.tidal_period_hours * 2.03) + 1.0;
    return cfg.tidal_amplitude_ft * (std::sin(p1) + 0.3 * std::sin(p2));
  };

  std::vector<double> gate_open(gate_nodes.size(), 0.0);
  std::vector<double> pump_flow(pump_nodes.size(), 0.0);
  std::vector<double> rain_now(n_gauge, 0.0);

  for (int t = 0; t < t_len; ++t) {
    if (t > 0) {
      // covariates for hour t
      for (int gi = 0; gi < n_gauge; ++gi) {
        const bool in_storm = cfg.storm_window && t >= cfg.storm_window->first &&
                              t < cfg.storm_window->second;
        if (rain_hours_left[gi] == 0) {
          const double rate = in_storm ? std::min(1.0, cfg.rain_event_rate * 10.0)
                                       : cfg.rain_event_rate;
          if (unit(rng) < rate) {
            rain_hours_left[gi] = 2 + int(unit(rng) * 8.0);
            rain_intensity[gi] = 0.05 + 0.45 * unit(rng);
          }
        }
        if (rain_hours_left[gi] > 0) {
          const double jitter = 0.8 + 0.4 * unit(rng);
          rain_now[gi] = rain_intensity[gi] * jitter * (in_storm ? 3.0 : 1.0);
          --rain_hours_left[gi];
        } else {
          rain_now[gi] = 0.0;
        }
      }
      const double tide = tide_at(t);
      // rule-based structures react to levels at t-1 with hysteresis
      for (size_t gi = 0; gi < gate_nodes.size(); ++gi) {
        double local = 0.0;
        int cnt = 0;
        for (int s = 0; s < n_st; ++s)
          for (int a : adj_gates[s])
            if (a == int(gi)) {
              local += level[s];
              ++cnt;
            }
        if (cnt > 0) local /= cnt;
        if (gate_open[gi] < 0.5 && local > gate_threshold[gi]) gate_open[gi] = 1.0;
        else if (gate_open[gi] > 0.5 && local < gate_threshold[gi] - 0.3) gate_open[gi] = 0.0;
      }
      for (size_t pi = 0; pi < pump_nodes.size(); ++pi) {
        double local = 0.0;
        int cnt = 0;
        for (int s = 0; s < n_st; ++s)
          for (int a : adj_pumps[s])
            if (a == int(pi)) {
              local += level[s];
              ++cnt;
            }
        if (cnt > 0) local /= cnt;
        pump_flow[pi] = local > pump_threshold[pi] ? pump_capacity_cfs : 0.0;
      }

      // level update
      std::vector<double> next(n_st);
      for (int s = 0; s < n_st; ++s) {
        double h = level[s];
        const int gauge = gauge_of[station_nodes[s]];
        double rain_s = 0.0;
        if (gauge >= 0)
          for (int gi = 0; gi < n_gauge; ++gi)
            if (gauge_nodes[gi] == gauge) rain_s = rain_now[gi];
        double exchange = 0.0;
        for (int nb : st_neighbors[s]) exchange += level[nb] - level[s];
        double structure = 0.0;
        for (int a : adj_gates[s]) structure += gate_open[a];
        for (int p : adj_pumps[s]) structure += pump_flow[p] / pump_capacity_cfs;
        h += alpha[s] * rain_s + kappa[s] * exchange - beta[s] * structure +
             gamma[s] * (tide - level[s]);
        if (cfg.noise_sigma_ft > 0.0) h += cfg.noise_sigma_ft * noise(rng);
        next[s] = h;
      }
      level = next;
    }

    int col = 0;
    for (int s = 0; s < n_st; ++s) frame.values(t, col++) = level[s];
    for (int gi = 0; gi < n_gauge; ++gi)
      frame.values(t, col++) = t == 0 ? 0.0 : rain_now[gi];
    for (size_t ti = 0; ti < tide_nodes.size(); ++ti)
      frame.values(t, col++) = tide_at(t);
    for (size_t gi = 0; gi < gate_nodes.size(); ++gi)
      frame.values(t, col++) = gate_open[gi];
    for (size_t pi = 0; pi < pump_nodes.size(); ++pi)
      frame.values(t, col++) = pump_flow[pi];
  }
  return frame;
}

ScenarioConfig default_scenario(int duration_hours, std::uint64_t seed) {
  ScenarioConfig cfg;
  cfg.graph = build_graph(default_topology());
  cfg.duration_hours = duration_hours;
  cfg.seed = seed;
  for (const char* id : {"S1", "S2", "S3", "S4", "S5", "S6", "S7"}) {
    cfg.storage_gain[id] = 0.5;
    cfg.exchange_rate[id] = 0.08;
  }
  cfg.gate_drawdown["S2"] = 0.25;  // gate G1 sits on S2
  cfg.gate_drawdown["S6"] = 0.15;  // pump P1 sits on S6
  cfg.tide_coupling["S4"] = 0.35;  // mouth station
  cfg.rain_event_rate = 0.03;
  return cfg;
}

ScenarioConfig tide_dominated_scenario(int duration_hours, std::uint64_t seed) {
  ScenarioConfig cfg = default_scenario(duration_hours, seed);
  cfg.storage_gain.clear();
  cfg.gate_drawdown.clear();
  cfg.tide_coupling["S4"] = 0.6;
  cfg.rain_event_rate = 0.01;
  return cfg;
}

}  // namespace flood
