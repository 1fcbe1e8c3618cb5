#include "doctest.h"

#include <random>

#include "flood/graph.hpp"

using namespace flood;

namespace {

TopologySpec path3() {
  TopologySpec s;
  s.nodes = {{"A", NodeKind::WaterLevelStation},
             {"B", NodeKind::WaterLevelStation},
             {"C", NodeKind::WaterLevelStation}};
  s.edges = {{"A", "B"}, {"B", "C"}};
  s.targets = {"B"};
  return s;
}

}  // namespace

TEST_CASE("smallest legal graph: one station, no edges") {
  TopologySpec s;
  s.nodes = {{"S1", NodeKind::WaterLevelStation}};
  s.targets = {"S1"};
  StationGraph g = build_graph(s);
  CHECK(g.node_count() == 1);
  CHECK(g.targets().size() == 1);
  auto a = normalized_adjacency(g);
  CHECK(a.values.rows() == 1);
  CHECK(a.values(0, 0) == doctest::Approx(1.0));
}

TEST_CASE("bundled default topology is valid with 4 targets") {
  StationGraph g = build_graph(default_topology());
  CHECK(g.targets().size() == 4);
  CHECK(g.station_indices().size() == 7);
  int tides = 0;
  for (const auto& n : g.nodes())
    if (n.kind == NodeKind::TideBoundary) ++tides;
  CHECK(tides == 1);
  for (const auto& t : g.targets())
    CHECK(g.node(g.index_of(t)).kind == NodeKind::WaterLevelStation);
}

TEST_CASE("validation failures") {
  SUBCASE("dangling endpoint") {
    auto s = path3();
    s.edges.push_back({"A", "S9"});
    CHECK_THROWS_WITH_AS(build_graph(s), "dangling endpoint: S9", DataError);
  }
  SUBCASE("duplicate node id") {
    auto s = path3();
    s.nodes.push_back({"A", NodeKind::Gate});
    CHECK_THROWS_AS(build_graph(s), DataError);
  }
  SUBCASE("disconnected graph") {
    auto s = path3();
    s.nodes.push_back({"D", NodeKind::WaterLevelStation});
    CHECK_THROWS_AS(build_graph(s), DataError);
  }
  SUBCASE("empty targets") {
    auto s = path3();
    s.targets.clear();
    CHECK_THROWS_AS(build_graph(s), DataError);
  }
  SUBCASE("target must be a water-level station") {
    auto s = path3();
    s.nodes.push_back({"G", NodeKind::Gate});
    s.edges.push_back({"C", "G"});
    s.targets = {"G"};
    CHECK_THROWS_AS(build_graph(s), DataError);
  }
}

TEST_CASE("normalized adjacency of a 3-node path") {
  StationGraph g = build_graph(path3());
  auto a = normalized_adjacency(g);
  // degrees with self-loops: 2, 3, 2
  CHECK(a.values(0, 0) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(a.values(0, 1) == doctest::Approx(1.0 / std::sqrt(6.0)).epsilon(1e-12));
  CHECK(a.values(1, 1) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  CHECK(a.values(0, 2) == doctest::Approx(0.0));
}

TEST_CASE("normalized adjacency: symmetry, range, spectral radius") {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 20; ++trial) {
    // random connected graph on up to 6 stations: random spanning tree + extras
    int n = 2 + int(rng() % 5);
    TopologySpec s;
    for (int i = 0; i < n; ++i)
      s.nodes.push_back({"N" + std::to_string(i), NodeKind::WaterLevelStation});
    for (int i = 1; i < n; ++i)
      s.edges.emplace_back("N" + std::to_string(rng() % i), "N" + std::to_string(i));
    for (int extra = 0; extra < 2; ++extra) {
      int a = int(rng() % n), b = int(rng() % n);
      if (a != b) s.edges.emplace_back("N" + std::to_string(a), "N" + std::to_string(b));
    }
    s.targets = {"N0"};
    auto adj = normalized_adjacency(build_graph(s));
    const auto& m = adj.values;
    CHECK((m - m.transpose()).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(m.minCoeff() >= 0.0);
    CHECK(m.maxCoeff() <= 1.0 + 1e-12);
    for (int i = 0; i < n; ++i) CHECK(m(i, i) > 0.0);

    // spectral radius by power iteration
    Eigen::VectorXd v = Eigen::VectorXd::Ones(n);
    for (int it = 0; it < 200; ++it) v = (m * v).normalized();
    double lambda = v.dot(m * v);
    CHECK(lambda <= 1.0 + 1e-9);
  }
}

TEST_CASE("permutation equivariance of normalized adjacency") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    int n = 3 + int(rng() % 4);
    TopologySpec s;
    for (int i = 0; i < n; ++i)
      s.nodes.push_back({"N" + std::to_string(i), NodeKind::WaterLevelStation});
    for (int i = 1; i < n; ++i)
      s.edges.emplace_back("N" + std::to_string(rng() % i), "N" + std::to_string(i));
    s.targets = {"N0"};
    auto base = normalized_adjacency(build_graph(s)).values;

    std::vector<int> perm(n);
    for (int i = 0; i < n; ++i) perm[i] = i;
    std::shuffle(perm.begin(), perm.end(), rng);

    // relabeled topology: node at position i is old node perm[i]
    TopologySpec sp;
    for (int i = 0; i < n; ++i) sp.nodes.push_back(s.nodes[perm[i]]);
    sp.edges = s.edges;
    sp.targets = s.targets;
    auto permuted = normalized_adjacency(build_graph(sp)).values;

    Eigen::MatrixXd p = Eigen::MatrixXd::Zero(n, n);
    for (int i = 0; i < n; ++i) p(i, perm[i]) = 1.0;
    CHECK((permuted - p * base * p.transpose()).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("topology text round trip and unknown kind rejection") {
  auto spec = default_topology();
  auto round = parse_topology(format_topology(spec));
  StationGraph g1 = build_graph(spec), g2 = build_graph(round);
  CHECK(g1.node_count() == g2.node_count());
  CHECK(g1.edges() == g2.edges());
  CHECK(g1.targets() == g2.targets());

  CHECK_THROWS_AS(parse_topology("[nodes]\nS1 weir\n"), DataError);
  CHECK_THROWS_AS(parse_topology("S1 gate\n"), DataError);
}
