#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <loom/errors.hpp>
#include <loom/value.hpp>

namespace loom::topo {

enum class NodeKind { Source, Composite };

struct Node {
  std::string id;
  NodeKind kind = NodeKind::Source;
};

enum class OperandDist { Uniform, Skewed };

struct GeneratorKnobs {
  int num_streams = 0;
  int num_composite = 0;
  // Operand count per composite, drawn uniformly from [min, max] and clamped
  // to the candidates available at that position.
  int operands_min = 1;
  int operands_max = 1;
  OperandDist dist = OperandDist::Uniform;
  double skew_exponent = 1.0;  // Skewed: pick weight (out_degree + 1)^exponent
  bool allow_cycles = false;
  uint64_t seed = 0;
};

struct TopologySpec {
  std::vector<Node> nodes;
  std::vector<std::pair<std::string, std::string>> edges;  // from -> to
  uint64_t seed = 0;
  GeneratorKnobs knobs;

  const Node* node(const std::string& id) const;
  std::vector<std::string> source_ids() const;
};

json topology_to_json(const TopologySpec& spec);
TopologySpec topology_from_json(const json& doc);

// Deterministic per seed.  Composites pick distinct operands; without cycles
// the operands come from earlier positions of a shuffled order, which keeps
// the graph acyclic.
TopologySpec generate_random(const GeneratorKnobs& knobs);

enum class FamilyKind { Length, InDegree, OutDegree };

// Length(n): source -> c1 -> ... -> cn.  InDegree(n): n sources -> 1 sink.
// OutDegree(n): 1 source -> n sinks.
TopologySpec generate_family(FamilyKind kind, int size);

struct GraphMetrics {
  int max_in_degree = 0;
  double mean_in_degree = 0;
  double in_degree_std_dev = 0;
  int max_out_degree = 0;
  double mean_out_degree = 0;
  double out_degree_std_dev = 0;
  int edges = 0;
  int nodes = 0;
  int sources = 0;  // in-degree 0
  int sinks = 0;    // out-degree 0
  double density = 0;  // 2E / (N(N-1))
  int connectivity = 0;       // vertex connectivity, underlying undirected
  int edge_connectivity = 0;  // edge connectivity, underlying undirected
};

GraphMetrics compute_metrics(const TopologySpec& spec);
json metrics_to_json(const GraphMetrics& m);

// What one injection at `source` must do: every reachable composite computes
// exactly once; each further triggering edge is a discarded arrival.
struct ExecutionTree {
  std::vector<std::string> reachable;  // composite nodes, BFS order
  std::vector<std::pair<std::string, std::string>> tree_edges;
  int triggering_edges = 0;
  int expected_discards = 0;  // triggering_edges - |reachable|
};

ExecutionTree derive_execution_tree(const TopologySpec& spec,
                                    const std::string& source);

// Distance to the nearest novelty-generating stream.  A composite generates
// novelty when one of its in-edges contributes a source no other in-edge
// contributes; a single-input composite only when its input is a source
// itself.  Sources and generating composites score 0; other nodes score
// 1 + min over predecessors; unreachable nodes score -1.
std::map<std::string, int> compute_novelty(const TopologySpec& spec);

}  // namespace loom::topo
