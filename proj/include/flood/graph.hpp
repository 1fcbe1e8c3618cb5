#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "flood/common.hpp"

namespace flood {

enum class NodeKind {
  WaterLevelStation,
  Gate,
  Pump,
  RainGauge,
  TideBoundary,
};

NodeKind parse_node_kind(const std::string& s);
std::string node_kind_name(NodeKind k);

struct NodeSpec {
  std::string id;
  NodeKind kind = NodeKind::WaterLevelStation;
};

struct TopologySpec {
  std::vector<NodeSpec> nodes;
  std::vector<std::pair<std::string, std::string>> edges;
  std::vector<std::string> targets;
};

// Immutable once built; see build_graph for validation rules.
class StationGraph {
 public:
  const std::vector<NodeSpec>& nodes() const { return nodes_; }
  const std::vector<std::pair<int, int>>& edges() const { return edges_; }
  const std::vector<std::string>& targets() const { return targets_; }

  int index_of(const std::string& id) const;               // -1 if absent
  const NodeSpec& node(int i) const { return nodes_[i]; }
  int node_count() const { return int(nodes_.size()); }
  bool has_edge(int a, int b) const;
  std::vector<int> neighbors(int i) const;
  std::vector<int> target_indices() const;
  std::vector<int> station_indices() const;                // water-level nodes

 private:
  friend StationGraph build_graph(const TopologySpec& spec);
  std::vector<NodeSpec> nodes_;
  std::vector<std::pair<int, int>> edges_;  // a < b, deduplicated
  std::vector<std::string> targets_;
};

// Validates and freezes a topology: unique ids, no dangling endpoints,
// connected, targets nonempty and water-level stations only.
StationGraph build_graph(const TopologySpec& spec);

struct AdjacencyMatrix {
  Eigen::MatrixXd values;             // symmetric, entries in [0,1]
  std::vector<std::string> ordering;  // row i <-> node ordering[i]
};

// Symmetric renormalization D~^(-1/2) (A+I) D~^(-1/2) over the 0/1
// undirected adjacency, rows ordered as g.nodes().
AdjacencyMatrix normalized_adjacency(const StationGraph& g);

// Plain-text topology document with [nodes]/[edges]/[targets] sections.
TopologySpec parse_topology(const std::string& text);
TopologySpec load_topology_file(const std::string& path);
std::string format_topology(const TopologySpec& spec);

// The bundled branched coastal layout: a four-station main stem draining
// to a tide boundary, three tributary stations, a gate, a pump, and two
// rain gauges. Targets are the four stem stations.
TopologySpec default_topology();

}  // namespace flood
