#include "doctest.h"

#include "flood/synth.hpp"

using namespace flood;

namespace {

StationGraph path3_stations() {
  TopologySpec s;
  s.nodes = {{"A", NodeKind::WaterLevelStation},
             {"B", NodeKind::WaterLevelStation},
             {"C", NodeKind::WaterLevelStation}};
  s.edges = {{"A", "B"}, {"B", "C"}};
  s.targets = {"B"};
  return build_graph(s);
}

}  // namespace

TEST_CASE("same seed gives bit-identical frames") {
  auto cfg = default_scenario(300, 7);
  auto f1 = generate(cfg);
  auto f2 = generate(cfg);
  CHECK(f1.values == f2.values);
  CHECK(f1.start_time == f2.start_time);

  auto f3 = generate(default_scenario(300, 8));
  CHECK(f1.values != f3.values);
}

TEST_CASE("zero forcing with equal initial levels is a fixed point") {
  ScenarioConfig cfg;
  cfg.graph = path3_stations();
  cfg.duration_hours = 50;
  cfg.seed = 1;
  for (const char* id : {"A", "B", "C"}) cfg.exchange_rate[id] = 0.1;
  cfg.rain_event_rate = 0.0;
  cfg.noise_sigma_ft = 0.0;
  auto f = generate(cfg);
  for (int t = 0; t < 50; ++t)
    for (int j = 0; j < 3; ++j)
      CHECK(f.values(t, j) == doctest::Approx(cfg.initial_level_ft));
}

TEST_CASE("pure exchange contracts the level envelope") {
  ScenarioConfig cfg;
  cfg.graph = path3_stations();
  cfg.duration_hours = 51;
  cfg.seed = 1;
  for (const char* id : {"A", "B", "C"}) cfg.exchange_rate[id] = 0.1;
  cfg.rain_event_rate = 0.0;
  cfg.noise_sigma_ft = 0.0;
  cfg.initial_levels = {{"A", 4.0}, {"B", 2.0}, {"C", 1.0}};
  auto f = generate(cfg);
  for (int t = 1; t < 51; ++t) {
    double prev_max = f.values.row(t - 1).leftCols(3).maxCoeff();
    double prev_min = f.values.row(t - 1).leftCols(3).minCoeff();
    double cur_max = f.values.row(t).leftCols(3).maxCoeff();
    double cur_min = f.values.row(t).leftCols(3).minCoeff();
    CHECK(cur_max <= prev_max + 1e-12);
    CHECK(cur_min >= prev_min - 1e-12);
  }
  // levels homogenize toward the mean
  double spread0 = 4.0 - 1.0;
  double spread_end = f.values.row(50).leftCols(3).maxCoeff() -
                      f.values.row(50).leftCols(3).minCoeff();
  CHECK(spread_end < 0.1 * spread0);
}

TEST_CASE("mass balance: level sum tracks rain input when tide/gates off") {
  auto cfg = default_scenario(400, 42);
  cfg.tide_coupling.clear();
  cfg.gate_drawdown.clear();
  cfg.noise_sigma_ft = 0.0;
  auto f = generate(cfg);

  auto gauge_of = nearest_rain_gauge(cfg.graph);
  const int n_st = 7;
  // rain channels follow the 7 station-level channels, in graph node order
  auto rain_col = [&](int gauge_node) {
    for (Eigen::Index j = 0; j < f.channel_count(); ++j)
      if (f.channels[j].kind == ChannelKind::Rainfall &&
          f.channels[j].node_id == cfg.graph.node(gauge_node).id)
        return int(j);
    return -1;
  };
  auto stations = cfg.graph.station_indices();
  double expected = f.values.row(0).leftCols(n_st).sum();
  for (int t = 1; t < 400; ++t) {
    for (int s = 0; s < n_st; ++s) {
      int gauge = gauge_of[stations[s]];
      REQUIRE(gauge >= 0);
      expected += cfg.storage_gain.at(cfg.graph.node(stations[s]).id) *
                  f.values(t, rain_col(gauge));
    }
    CHECK(f.values.row(t).leftCols(n_st).sum() == doctest::Approx(expected).epsilon(1e-9));
  }
}

TEST_CASE("generated frame round-trips through the csv schema") {
  auto cfg = default_scenario(120, 3);
  auto f = generate(cfg);
  CHECK(f.length() == 120);
  CHECK(f.channel_count() == 12);  // 7 wl + 2 rain + 1 tide + 1 gate + 1 pump
  auto layout = make_layout(f, cfg.graph);
  CHECK(layout.M == 4);
  CHECK(layout.C == 5);
}

TEST_CASE("tide coupling away from the boundary is rejected") {
  auto cfg = default_scenario(120, 3);
  cfg.tide_coupling["S1"] = 0.2;  // S1 is not adjacent to TB
  CHECK_THROWS_AS(generate(cfg), ConfigError);
}

TEST_CASE("storm window amplifies rainfall") {
  auto cfg = default_scenario(600, 11);
  auto calm = generate(cfg);
  cfg.storm_window = {{300, 360}};
  auto stormy = generate(cfg);
  auto rain_cols = [&](const TimeSeriesFrame& f) {
    double total = 0.0;
    for (Eigen::Index j = 0; j < f.channel_count(); ++j)
      if (f.channels[j].kind == ChannelKind::Rainfall)
        total += f.values.block(300, j, 60, 1).sum();
    return total;
  };
  CHECK(rain_cols(stormy) > rain_cols(calm) + 1.0);
}
