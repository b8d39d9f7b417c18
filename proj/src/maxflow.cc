#include "maxflow.h"

#include <algorithm>
#include <limits>
#include <queue>
#include <utility>

namespace chromaflow::internal {

namespace {
constexpr double kEps = 1e-12;
}

MaxFlow::MaxFlow(int num_nodes) : adj_(num_nodes + 2) {}

void MaxFlow::link(int from, int to, double cap) {
  adj_[from].push_back({to, static_cast<int>(adj_[to].size()), cap});
  adj_[to].push_back({from, static_cast<int>(adj_[from].size()) - 1, 0.0});
}

void MaxFlow::add_terminal(int node, double source_cap, double sink_cap) {
  if (source_cap > 0.0) link(kSource, node + 2, source_cap);
  if (sink_cap > 0.0) link(node + 2, kSink, sink_cap);
}

void MaxFlow::add_edge(int from, int to, double cap) {
  if (cap > 0.0) link(from + 2, to + 2, cap);
}

bool MaxFlow::build_levels() {
  level_.assign(adj_.size(), -1);
  std::queue<int> q;
  level_[kSource] = 0;
  q.push(kSource);
  while (!q.empty()) {
    const int v = q.front();
    q.pop();
    for (const Arc& a : adj_[v]) {
      if (a.cap > kEps && level_[a.to] < 0) {
        level_[a.to] = level_[v] + 1;
        q.push(a.to);
      }
    }
  }
  return level_[kSink] >= 0;
}

double MaxFlow::blocking_flow() {
  double flow = 0.0;
  next_.assign(adj_.size(), 0);
  std::vector<std::pair<int, std::size_t>> path;  // (node, arc index)
  int v = kSource;
  while (true) {
    if (v == kSink) {
      double f = std::numeric_limits<double>::infinity();
      for (const auto& [u, i] : path) f = std::min(f, adj_[u][i].cap);
      for (const auto& [u, i] : path) {
        Arc& a = adj_[u][i];
        a.cap -= f;
        adj_[a.to][a.rev].cap += f;
      }
      flow += f;
      path.clear();
      v = kSource;
      continue;
    }
    bool advanced = false;
    for (std::size_t& i = next_[v]; i < adj_[v].size(); ++i) {
      const Arc& a = adj_[v][i];
      if (a.cap > kEps && level_[a.to] == level_[v] + 1) {
        path.emplace_back(v, i);
        v = a.to;
        advanced = true;
        break;
      }
    }
    if (advanced) continue;
    if (v == kSource) break;
    // Dead end: retreat and skip the arc that led here.
    v = path.back().first;
    ++next_[v];
    path.pop_back();
  }
  return flow;
}

double MaxFlow::solve() {
  double flow = 0.0;
  while (build_levels()) {
    flow += blocking_flow();
  }
  // level_ now marks exactly the residual-reachable set.
  reach_.assign(adj_.size(), 0);
  for (std::size_t v = 0; v < adj_.size(); ++v) reach_[v] = level_[v] >= 0;
  return flow;
}

}  // namespace chromaflow::internal
