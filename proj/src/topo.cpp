#include <loom/topo.hpp>

#include <algorithm>
#include <cmath>
#include <deque>
#include <queue>
#include <random>

namespace loom::topo {

namespace {

// Rejection-sampled draws so a seed produces the same graph everywhere,
// independent of the standard library's distribution implementations.
uint64_t rand_below(std::mt19937_64& rng, uint64_t n) {
  uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  uint64_t x;
  do {
    x = rng();
  } while (x >= limit);
  return x % n;
}

double rand_unit(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

void bad_topology(const std::string& why) {
  throw Error(ErrorCode::MalformedDescriptor, "topology: " + why);
}

}  // namespace

const Node* TopologySpec::node(const std::string& id) const {
  for (const Node& n : nodes)
    if (n.id == id) return &n;
  return nullptr;
}

std::vector<std::string> TopologySpec::source_ids() const {
  std::vector<std::string> out;
  for (const Node& n : nodes)
    if (n.kind == NodeKind::Source) out.push_back(n.id);
  return out;
}

json topology_to_json(const TopologySpec& spec) {
  json nodes = json::array();
  for (const Node& n : spec.nodes)
    nodes.push_back({{"id", n.id},
                     {"kind", n.kind == NodeKind::Source ? "source"
                                                         : "composite"}});
  json edges = json::array();
  for (const auto& [from, to] : spec.edges)
    edges.push_back(json::array({from, to}));
  const GeneratorKnobs& k = spec.knobs;
  json knobs{{"numStreams", k.num_streams},
             {"numComposite", k.num_composite},
             {"operandsMin", k.operands_min},
             {"operandsMax", k.operands_max},
             {"distribution", k.dist == OperandDist::Uniform ? "uniform"
                                                             : "skewed"},
             {"skewExponent", k.skew_exponent},
             {"allowCycles", k.allow_cycles},
             {"seed", k.seed}};
  return json{{"seed", spec.seed},
              {"knobs", std::move(knobs)},
              {"nodes", std::move(nodes)},
              {"edges", std::move(edges)}};
}

TopologySpec topology_from_json(const json& doc) {
  if (!doc.is_object() || !doc.contains("nodes") || !doc.contains("edges"))
    bad_topology("document must have nodes and edges");
  TopologySpec spec;
  spec.seed = doc.value("seed", uint64_t{0});
  if (doc.contains("knobs") && doc.at("knobs").is_object()) {
    const json& k = doc.at("knobs");
    spec.knobs.num_streams = k.value("numStreams", 0);
    spec.knobs.num_composite = k.value("numComposite", 0);
    spec.knobs.operands_min = k.value("operandsMin", 1);
    spec.knobs.operands_max = k.value("operandsMax", 1);
    spec.knobs.dist = k.value("distribution", "uniform") == std::string("skewed")
                          ? OperandDist::Skewed
                          : OperandDist::Uniform;
    spec.knobs.skew_exponent = k.value("skewExponent", 1.0);
    spec.knobs.allow_cycles = k.value("allowCycles", false);
    spec.knobs.seed = k.value("seed", uint64_t{0});
  }
  std::set<std::string> seen;
  for (const json& n : doc.at("nodes")) {
    if (!n.is_object() || !n.contains("id") || !n.at("id").is_string())
      bad_topology("node entries need a string id");
    std::string id = n.at("id").get<std::string>();
    if (!seen.insert(id).second) bad_topology("duplicate node id " + id);
    std::string kind = n.value("kind", "");
    if (kind != "source" && kind != "composite")
      bad_topology("node " + id + " kind must be source or composite");
    spec.nodes.push_back(
        {std::move(id),
         kind == "source" ? NodeKind::Source : NodeKind::Composite});
  }
  std::map<std::string, int> in_deg;
  for (const json& e : doc.at("edges")) {
    if (!e.is_array() || e.size() != 2 || !e[0].is_string() ||
        !e[1].is_string())
      bad_topology("edge entries must be [from, to] string pairs");
    std::string from = e[0].get<std::string>(), to = e[1].get<std::string>();
    if (!seen.count(from) || !seen.count(to))
      bad_topology("edge references unknown node");
    in_deg[to]++;
    spec.edges.emplace_back(std::move(from), std::move(to));
  }
  for (const Node& n : spec.nodes) {
    if (n.kind == NodeKind::Source && in_deg[n.id] != 0)
      bad_topology("source " + n.id + " has incoming edges");
    if (n.kind == NodeKind::Composite && in_deg[n.id] == 0)
      bad_topology("composite " + n.id + " has no inputs");
  }
  return spec;
}

TopologySpec generate_random(const GeneratorKnobs& knobs) {
  int n = knobs.num_streams;
  int c = knobs.num_composite;
  if (n < 1) throw Error(ErrorCode::InfeasibleKnobs, "need at least 1 stream");
  if (c < 0 || c > n)
    throw Error(ErrorCode::InfeasibleKnobs,
                "composite count must be within [0, numStreams]");
  if (knobs.operands_min < 1 || knobs.operands_min > knobs.operands_max)
    throw Error(ErrorCode::InfeasibleKnobs, "bad operand range");
  if (c > 0 && knobs.operands_min > n - 1)
    throw Error(ErrorCode::InfeasibleKnobs,
                "operands exceed available nodes");
  if (c == n && c > 0 && !knobs.allow_cycles)
    throw Error(ErrorCode::InfeasibleKnobs,
                "an acyclic graph needs at least one source");
  if (c > 0 && n == 1)
    throw Error(ErrorCode::InfeasibleKnobs,
                "a composite needs another node to read from");

  std::mt19937_64 rng(knobs.seed);
  std::vector<NodeKind> kinds(n, NodeKind::Source);
  std::fill(kinds.begin() + (n - c), kinds.end(), NodeKind::Composite);
  for (int i = n - 1; i > 0; --i) {
    int j = static_cast<int>(rand_below(rng, i + 1));
    std::swap(kinds[i], kinds[j]);
  }
  if (!knobs.allow_cycles && c < n && kinds[0] == NodeKind::Composite) {
    for (int i = 1; i < n; ++i)
      if (kinds[i] == NodeKind::Source) {
        std::swap(kinds[0], kinds[i]);
        break;
      }
  }

  TopologySpec spec;
  spec.seed = knobs.seed;
  spec.knobs = knobs;
  for (int i = 0; i < n; ++i)
    spec.nodes.push_back({"n" + std::to_string(i), kinds[i]});

  std::vector<int> out_deg(n, 0);
  for (int i = 0; i < n; ++i) {
    if (kinds[i] != NodeKind::Composite) continue;
    std::vector<int> pool;
    if (knobs.allow_cycles) {
      for (int j = 0; j < n; ++j)
        if (j != i) pool.push_back(j);
    } else {
      for (int j = 0; j < i; ++j) pool.push_back(j);
    }
    int span = knobs.operands_max - knobs.operands_min + 1;
    int k = knobs.operands_min + static_cast<int>(rand_below(rng, span));
    k = std::min<int>(k, static_cast<int>(pool.size()));
    for (int pick = 0; pick < k; ++pick) {
      size_t chosen;
      if (knobs.dist == OperandDist::Uniform) {
        chosen = rand_below(rng, pool.size());
      } else {
        double total = 0;
        std::vector<double> weight(pool.size());
        for (size_t t = 0; t < pool.size(); ++t) {
          weight[t] = std::pow(out_deg[pool[t]] + 1.0, knobs.skew_exponent);
          total += weight[t];
        }
        double r = rand_unit(rng) * total;
        chosen = pool.size() - 1;
        for (size_t t = 0; t < pool.size(); ++t) {
          r -= weight[t];
          if (r <= 0) {
            chosen = t;
            break;
          }
        }
      }
      int op = pool[chosen];
      pool.erase(pool.begin() + chosen);
      out_deg[op]++;
      spec.edges.emplace_back(spec.nodes[op].id, spec.nodes[i].id);
    }
  }
  return spec;
}

TopologySpec generate_family(FamilyKind kind, int size) {
  if (size < 1)
    throw Error(ErrorCode::InfeasibleKnobs, "family size must be >= 1");
  TopologySpec spec;
  switch (kind) {
    case FamilyKind::Length: {
      spec.nodes.push_back({"src", NodeKind::Source});
      std::string prev = "src";
      for (int i = 1; i <= size; ++i) {
        std::string id = "c" + std::to_string(i);
        spec.nodes.push_back({id, NodeKind::Composite});
        spec.edges.emplace_back(prev, id);
        prev = id;
      }
      break;
    }
    case FamilyKind::InDegree: {
      spec.nodes.push_back({"sink", NodeKind::Composite});
      for (int i = 1; i <= size; ++i) {
        std::string id = "s" + std::to_string(i);
        spec.nodes.push_back({id, NodeKind::Source});
        spec.edges.emplace_back(id, "sink");
      }
      break;
    }
    case FamilyKind::OutDegree: {
      spec.nodes.push_back({"src", NodeKind::Source});
      for (int i = 1; i <= size; ++i) {
        std::string id = "c" + std::to_string(i);
        spec.nodes.push_back({id, NodeKind::Composite});
        spec.edges.emplace_back("src", id);
      }
      break;
    }
  }
  return spec;
}

namespace {

std::map<std::string, int> index_nodes(const TopologySpec& spec) {
  std::map<std::string, int> idx;
  for (size_t i = 0; i < spec.nodes.size(); ++i)
    idx[spec.nodes[i].id] = static_cast<int>(i);
  return idx;
}

// Dinic-style BFS/DFS max-flow, small graphs only.
struct MaxFlow {
  struct Edge {
    int to, rev;
    int cap;
  };
  std::vector<std::vector<Edge>> g;

  explicit MaxFlow(int n) : g(n) {}

  void add_edge(int from, int to, int cap) {
    g[from].push_back({to, static_cast<int>(g[to].size()), cap});
    g[to].push_back({from, static_cast<int>(g[from].size()) - 1, 0});
  }

  int run(int s, int t) {
    int flow = 0;
    for (;;) {
      // BFS for one augmenting path (Edmonds-Karp).
      std::vector<std::pair<int, int>> parent(g.size(), {-1, -1});
      std::deque<int> q{s};
      parent[s] = {s, -1};
      while (!q.empty() && parent[t].first < 0) {
        int u = q.front();
        q.pop_front();
        for (size_t i = 0; i < g[u].size(); ++i) {
          const Edge& e = g[u][i];
          if (e.cap > 0 && parent[e.to].first < 0) {
            parent[e.to] = {u, static_cast<int>(i)};
            q.push_back(e.to);
          }
        }
      }
      if (parent[t].first < 0) return flow;
      int bottleneck = INT32_MAX;
      for (int v = t; v != s;) {
        auto [u, i] = parent[v];
        bottleneck = std::min(bottleneck, g[u][i].cap);
        v = u;
      }
      for (int v = t; v != s;) {
        auto [u, i] = parent[v];
        g[u][i].cap -= bottleneck;
        g[g[u][i].to][g[u][i].rev].cap += bottleneck;
        v = u;
      }
      flow += bottleneck;
    }
  }
};

struct Undirected {
  int n = 0;
  std::set<std::pair<int, int>> edges;  // (min, max), deduplicated
  std::vector<std::vector<int>> adj;
};

Undirected undirected_of(const TopologySpec& spec,
                         const std::map<std::string, int>& idx) {
  Undirected u;
  u.n = static_cast<int>(spec.nodes.size());
  u.adj.resize(u.n);
  for (const auto& [from, to] : spec.edges) {
    int a = idx.at(from), b = idx.at(to);
    if (a == b) continue;
    if (u.edges.insert({std::min(a, b), std::max(a, b)}).second) {
      u.adj[a].push_back(b);
      u.adj[b].push_back(a);
    }
  }
  return u;
}

bool connected(const Undirected& u) {
  if (u.n == 0) return true;
  std::vector<bool> seen(u.n, false);
  std::deque<int> q{0};
  seen[0] = true;
  int visited = 1;
  while (!q.empty()) {
    int v = q.front();
    q.pop_front();
    for (int w : u.adj[v])
      if (!seen[w]) {
        seen[w] = true;
        ++visited;
        q.push_back(w);
      }
  }
  return visited == u.n;
}

// DFS lowlink pass marking articulation points and bridges.
struct CutFinder {
  const Undirected& u;
  std::vector<int> disc, low;
  int timer = 0;
  bool articulation = false, bridge = false;

  explicit CutFinder(const Undirected& g)
      : u(g), disc(g.n, -1), low(g.n, 0) {}

  void dfs(int v, int parent) {
    disc[v] = low[v] = timer++;
    int children = 0;
    bool parent_skipped = false;
    for (int w : u.adj[v]) {
      if (w == parent && !parent_skipped) {
        parent_skipped = true;  // one tree edge back to parent, not a cycle
        continue;
      }
      if (disc[w] >= 0) {
        low[v] = std::min(low[v], disc[w]);
        continue;
      }
      ++children;
      dfs(w, v);
      low[v] = std::min(low[v], low[w]);
      if (low[w] > disc[v]) bridge = true;
      if (parent >= 0 && low[w] >= disc[v]) articulation = true;
    }
    if (parent < 0 && children > 1) articulation = true;
  }
};

int vertex_connectivity(const Undirected& u) {
  if (u.n <= 1) return 0;
  if (!connected(u)) return 0;
  CutFinder cf(u);
  cf.dfs(0, -1);
  if (cf.articulation) return 1;
  // No cut vertex: answer is min over non-adjacent pairs via node-split flow,
  // or n-1 for a complete graph.
  int best = u.n - 1;
  for (int s = 0; s < u.n; ++s) {
    for (int t = s + 1; t < u.n; ++t) {
      if (u.edges.count({s, t})) continue;
      MaxFlow mf(2 * u.n);
      for (int v = 0; v < u.n; ++v)
        mf.add_edge(2 * v, 2 * v + 1, v == s || v == t ? u.n : 1);
      for (const auto& [a, b] : u.edges) {
        mf.add_edge(2 * a + 1, 2 * b, u.n);
        mf.add_edge(2 * b + 1, 2 * a, u.n);
      }
      best = std::min(best, mf.run(2 * s + 1, 2 * t));
      if (best <= 2) return best;  // cannot get lower: no articulation point
    }
  }
  return best;
}

int edge_connectivity(const Undirected& u) {
  if (u.n <= 1) return 0;
  if (!connected(u)) return 0;
  CutFinder cf(u);
  cf.dfs(0, -1);
  if (cf.bridge) return 1;
  int best = INT32_MAX;
  for (int t = 1; t < u.n; ++t) {
    MaxFlow mf(u.n);
    for (const auto& [a, b] : u.edges) {
      mf.add_edge(a, b, 1);
      mf.add_edge(b, a, 1);
    }
    best = std::min(best, mf.run(0, t));
    if (best <= 2) return best;  // no bridge, so 2 is the floor
  }
  return best;
}

}  // namespace

GraphMetrics compute_metrics(const TopologySpec& spec) {
  GraphMetrics m;
  auto idx = index_nodes(spec);
  int n = static_cast<int>(spec.nodes.size());
  m.nodes = n;
  m.edges = static_cast<int>(spec.edges.size());
  std::vector<int> in_deg(n, 0), out_deg(n, 0);
  for (const auto& [from, to] : spec.edges) {
    out_deg[idx.at(from)]++;
    in_deg[idx.at(to)]++;
  }
  auto stats = [&](const std::vector<int>& deg, int& max_out, double& mean_out,
                   double& stddev_out) {
    double sum = 0;
    for (int d : deg) {
      max_out = std::max(max_out, d);
      sum += d;
    }
    mean_out = n ? sum / n : 0;
    double var = 0;
    for (int d : deg) var += (d - mean_out) * (d - mean_out);
    stddev_out = n ? std::sqrt(var / n) : 0;
  };
  stats(in_deg, m.max_in_degree, m.mean_in_degree, m.in_degree_std_dev);
  stats(out_deg, m.max_out_degree, m.mean_out_degree, m.out_degree_std_dev);
  for (int i = 0; i < n; ++i) {
    if (in_deg[i] == 0) m.sources++;
    if (out_deg[i] == 0) m.sinks++;
  }
  m.density = n > 1 ? 2.0 * m.edges / (double(n) * (n - 1)) : 0.0;
  Undirected u = undirected_of(spec, idx);
  m.connectivity = vertex_connectivity(u);
  m.edge_connectivity = edge_connectivity(u);
  return m;
}

json metrics_to_json(const GraphMetrics& m) {
  return json{{"maxInDegree", m.max_in_degree},
              {"meanInDegree", m.mean_in_degree},
              {"inDegreeStdDev", m.in_degree_std_dev},
              {"maxOutDegree", m.max_out_degree},
              {"meanOutDegree", m.mean_out_degree},
              {"outDegreeStdDev", m.out_degree_std_dev},
              {"edges", m.edges},
              {"nodes", m.nodes},
              {"sources", m.sources},
              {"sinks", m.sinks},
              {"density", m.density},
              {"connectivity", m.connectivity},
              {"edgeConnectivity", m.edge_connectivity}};
}

ExecutionTree derive_execution_tree(const TopologySpec& spec,
                                    const std::string& source) {
  const Node* src = spec.node(source);
  if (!src) throw Error(ErrorCode::NotFound, "unknown node: " + source);
  if (src->kind != NodeKind::Source)
    throw Error(ErrorCode::NotFound, source + " is not a source node");

  std::map<std::string, std::vector<std::string>> out;
  for (const auto& [from, to] : spec.edges) out[from].push_back(to);

  ExecutionTree tree;
  std::set<std::string> visited{source};
  std::deque<std::string> q{source};
  while (!q.empty()) {
    std::string v = std::move(q.front());
    q.pop_front();
    for (const std::string& w : out[v]) {
      if (visited.insert(w).second) {
        tree.reachable.push_back(w);
        tree.tree_edges.emplace_back(v, w);
        q.push_back(w);
      }
    }
  }
  for (const auto& [from, to] : spec.edges) {
    (void)to;
    if (visited.count(from)) tree.triggering_edges++;
  }
  tree.expected_discards =
      tree.triggering_edges - static_cast<int>(tree.reachable.size());
  return tree;
}

std::map<std::string, int> compute_novelty(const TopologySpec& spec) {
  auto idx = index_nodes(spec);
  int n = static_cast<int>(spec.nodes.size());
  std::map<std::string, std::vector<std::string>> out;
  for (const auto& [from, to] : spec.edges) out[from].push_back(to);

  // Source-ancestor sets: bit v of set[w] says source v reaches w.
  std::vector<std::set<int>> sources_of(n);
  for (int i = 0; i < n; ++i) {
    if (spec.nodes[i].kind != NodeKind::Source) continue;
    std::set<std::string> visited{spec.nodes[i].id};
    std::deque<std::string> q{spec.nodes[i].id};
    sources_of[i].insert(i);
    while (!q.empty()) {
      std::string v = std::move(q.front());
      q.pop_front();
      for (const std::string& w : out[v])
        if (visited.insert(w).second) {
          sources_of[idx.at(w)].insert(i);
          q.push_back(w);
        }
    }
  }

  std::vector<std::vector<int>> preds(n);
  for (const auto& [from, to] : spec.edges)
    preds[idx.at(to)].push_back(idx.at(from));

  auto generating = [&](int v) {
    const auto& in = preds[v];
    if (in.size() == 1)
      return spec.nodes[in[0]].kind == NodeKind::Source;
    for (size_t i = 0; i < in.size(); ++i) {
      std::set<int> others;
      for (size_t j = 0; j < in.size(); ++j)
        if (j != i)
          others.insert(sources_of[in[j]].begin(), sources_of[in[j]].end());
      for (int s : sources_of[in[i]])
        if (!others.count(s)) return true;
    }
    return false;
  };

  constexpr int kUnset = INT32_MAX;
  std::vector<int> novelty(n, kUnset);
  for (int v = 0; v < n; ++v)
    if (spec.nodes[v].kind == NodeKind::Source ||
        (!preds[v].empty() && generating(v)))
      novelty[v] = 0;
  // Relax to fixpoint; cycles converge because values only decrease.
  for (int round = 0; round < n; ++round) {
    bool changed = false;
    for (int v = 0; v < n; ++v) {
      if (novelty[v] == 0) continue;
      int best = kUnset;
      for (int p : preds[v])
        if (novelty[p] != kUnset) best = std::min(best, novelty[p] + 1);
      if (best < novelty[v]) {
        novelty[v] = best;
        changed = true;
      }
    }
    if (!changed) break;
  }
  std::map<std::string, int> result;
  for (int v = 0; v < n; ++v)
    result[spec.nodes[v].id] = novelty[v] == kUnset ? -1 : novelty[v];
  return result;
}

}  // namespace loom::topo
