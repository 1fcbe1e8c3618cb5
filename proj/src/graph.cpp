#include "flood/graph.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_map>

namespace flood {

NodeKind parse_node_kind(const std::string& s) {
  if (s == "water-level-station") return NodeKind::WaterLevelStation;
  if (s == "gate") return NodeKind::Gate;
  if (s == "pump") return NodeKind::Pump;
  if (s == "rain-gauge") return NodeKind::RainGauge;
  if (s == "tide-boundary") return NodeKind::TideBoundary;
  throw DataError("unknown node kind: " + s);
}

std::string node_kind_name(NodeKind k) {
  switch (k) {
    case NodeKind::WaterLevelStation: return "water-level-station";
    case NodeKind::Gate: return "gate";
    case NodeKind::Pump: return "pump";
    case NodeKind::RainGauge: return "rain-gauge";
    case NodeKind::TideBoundary: return "tide-boundary";
  }
  throw DataError("bad node kind enum");
}

int StationGraph::index_of(const std::string& id) const {
  for (size_t i = 0; i < nodes_.size(); ++i)
    if (nodes_[i].id == id) return int(i);
  return -1;
}

bool StationGraph::has_edge(int a, int b) const {
  if (a > b) std::swap(a, b);
  return std::find(edges_.begin(), edges_.end(), std::make_pair(a, b)) != edges_.end();
}

std::vector<int> StationGraph::neighbors(int i) const {
  std::vector<int> out;
  for (auto [a, b] : edges_) {
    if (a == i) out.push_back(b);
    if (b == i) out.push_back(a);
  }
  return out;
}

std::vector<int> StationGraph::target_indices() const {
  std::vector<int> out;
  for (const auto& t : targets_) out.push_back(index_of(t));
  return out;
}

std::vector<int> StationGraph::station_indices() const {
  std::vector<int> out;
  for (int i = 0; i < node_count(); ++i)
    if (nodes_[i].kind == NodeKind::WaterLevelStation) out.push_back(i);
  return out;
}

StationGraph build_graph(const TopologySpec& spec) {
  StationGraph g;
  g.nodes_ = spec.nodes;
  if (g.nodes_.empty()) throw DataError("topology has no nodes");

  std::unordered_map<std::string, int> index;
  for (size_t i = 0; i < g.nodes_.size(); ++i) {
    auto [it, fresh] = index.emplace(g.nodes_[i].id, int(i));
    if (!fresh) throw DataError("duplicate node id: " + g.nodes_[i].id);
  }

  std::set<std::pair<int, int>> edge_set;
  for (const auto& [a_id, b_id] : spec.edges) {
    auto a = index.find(a_id);
    auto b = index.find(b_id);
    if (a == index.end()) throw DataError("dangling endpoint: " + a_id);
    if (b == index.end()) throw DataError("dangling endpoint: " + b_id);
    if (a->second == b->second) throw DataError("self-edge on node: " + a_id);
    int lo = std::min(a->second, b->second), hi = std::max(a->second, b->second);
    edge_set.emplace(lo, hi);
  }
  g.edges_.assign(edge_set.begin(), edge_set.end());

  // connectivity (single river system)
  std::vector<char> seen(g.nodes_.size(), 0);
  std::vector<int> stack{0};
  seen[0] = 1;
  while (!stack.empty()) {
    int i = stack.back();
    stack.pop_back();
    for (int j : g.neighbors(i))
      if (!seen[j]) {
        seen[j] = 1;
        stack.push_back(j);
      }
  }
  for (size_t i = 0; i < seen.size(); ++i)
    if (!seen[i]) throw DataError("disconnected graph: node " + g.nodes_[i].id +
                                  " unreachable");

  if (spec.targets.empty()) throw DataError("empty targets");
  std::set<std::string> target_seen;
  for (const auto& t : spec.targets) {
    auto it = index.find(t);
    if (it == index.end()) throw DataError("target references unknown node: " + t);
    if (g.nodes_[it->second].kind != NodeKind::WaterLevelStation)
      throw DataError("target is not a water-level station: " + t);
    if (!target_seen.insert(t).second) throw DataError("duplicate target: " + t);
  }
  g.targets_ = spec.targets;
  return g;
}

AdjacencyMatrix normalized_adjacency(const StationGraph& g) {
  const int n = g.node_count();
  Eigen::MatrixXd a = Eigen::MatrixXd::Identity(n, n);  // A + I
  for (auto [i, j] : g.edges()) {
    a(i, j) = 1.0;
    a(j, i) = 1.0;
  }
  Eigen::VectorXd d_inv_sqrt(n);
  for (int i = 0; i < n; ++i) d_inv_sqrt(i) = 1.0 / std::sqrt(a.row(i).sum());
  AdjacencyMatrix out;
  out.values = d_inv_sqrt.asDiagonal() * a * d_inv_sqrt.asDiagonal();
  for (const auto& node : g.nodes()) out.ordering.push_back(node.id);
  return out;
}

namespace {

std::vector<std::string> split_ws(const std::string& line) {
  std::istringstream is(line);
  std::vector<std::string> out;
  std::string tok;
  while (is >> tok) out.push_back(tok);
  return out;
}

}  // namespace

TopologySpec parse_topology(const std::string& text) {
  TopologySpec spec;
  std::istringstream is(text);
  std::string line, section;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    auto toks = split_ws(line);
    if (toks.empty()) continue;
    if (toks[0] == "[nodes]" || toks[0] == "[edges]" || toks[0] == "[targets]") {
      section = toks[0];
      continue;
    }
    const std::string where = " (line " + std::to_string(line_no) + ")";
    if (section == "[nodes]") {
      if (toks.size() != 2) throw DataError("node line needs 'id kind'" + where);
      spec.nodes.push_back({toks[0], parse_node_kind(toks[1])});
    } else if (section == "[edges]") {
      if (toks.size() != 2) throw DataError("edge line needs two node ids" + where);
      spec.edges.emplace_back(toks[0], toks[1]);
    } else if (section == "[targets]") {
      for (const auto& t : toks) spec.targets.push_back(t);
    } else {
      throw DataError("content before any section header" + where);
    }
  }
  return spec;
}

TopologySpec load_topology_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open topology file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_topology(ss.str());
}

std::string format_topology(const TopologySpec& spec) {
  std::ostringstream os;
  os << "[nodes]\n";
  for (const auto& n : spec.nodes) os << n.id << " " << node_kind_name(n.kind) << "\n";
  os << "[edges]\n";
  for (const auto& [a, b] : spec.edges) os << a << " " << b << "\n";
  os << "[targets]\n";
  for (const auto& t : spec.targets) os << t << "\n";
  return os.str();
}

TopologySpec default_topology() {
  TopologySpec spec;
  auto station = [&](const std::string& id) {
    spec.nodes.push_back({id, NodeKind::WaterLevelStation});
  };
  // main stem, upstream to mouth
  station("S1");
  station("S2");
  station("S3");
  station("S4");
  // tributary stations
  station("S5");
  station("S6");
  station("S7");
  spec.nodes.push_back({"G1", NodeKind::Gate});
  spec.nodes.push_back({"P1", NodeKind::Pump});
  spec.nodes.push_back({"R1", NodeKind::RainGauge});
  spec.nodes.push_back({"R2", NodeKind::RainGauge});
  spec.nodes.push_back({"TB", NodeKind::TideBoundary});

  spec.edges = {
      {"S1", "S2"}, {"S2", "S3"}, {"S3", "S4"}, {"S4", "TB"},
      {"S5", "S1"}, {"S6", "S2"}, {"S7", "S3"},   // three tributaries
      {"G1", "S2"}, {"P1", "S6"}, {"R1", "S5"}, {"R2", "S7"},
  };
  spec.targets = {"S1", "S2", "S3", "S4"};
  return spec;
}

}  // namespace flood
