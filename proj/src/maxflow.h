#pragma once

#include <cstddef>
#include <vector>

namespace chromaflow::internal {

// Dinic max-flow on a graph with implicit source and sink terminals.
class MaxFlow {
 public:
  explicit MaxFlow(int num_nodes);

  // Capacities of source->node and node->sink.
  void add_terminal(int node, double source_cap, double sink_cap);
  void add_edge(int from, int to, double cap);

  double solve();
  // After solve(): true if the node is reachable from the source in the
  // residual graph.
  bool source_side(int node) const { return reach_[node + 2] != 0; }

 private:
  struct Arc {
    int to;
    int rev;
    double cap;
  };

  void link(int from, int to, double cap);
  bool build_levels();
  double blocking_flow();

  static constexpr int kSource = 0;
  static constexpr int kSink = 1;

  std::vector<std::vector<Arc>> adj_;
  std::vector<int> level_;
  std::vector<std::size_t> next_;
  std::vector<char> reach_;
};

}  // namespace chromaflow::internal
