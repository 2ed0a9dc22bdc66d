#include "bipfit/max_flow.hpp"

#include <algorithm>
#include <limits>
#include <queue>

namespace bipfit {

namespace {

struct Edge {
  Index to;
  Index rev;
  double cap;
};

class Dinic {
 public:
  Dinic(Index n, double eps) : graph_(n), level_(n), next_(n), eps_(eps) {}

  Index add_edge(Index from, Index to, double cap) {
    graph_[from].push_back({to, graph_[to].size(), cap});
    graph_[to].push_back({from, graph_[from].size() - 1, 0.0});
    return graph_[from].size() - 1;
  }

  double run(Index s, Index t) {
    double total = 0.0;
    while (bfs(s, t)) {
      std::fill(next_.begin(), next_.end(), 0);
      while (true) {
        const double pushed = dfs(s, t, std::numeric_limits<double>::infinity());
        if (pushed <= eps_) break;
        total += pushed;
      }
    }
    return total;
  }

  std::vector<bool> reachable(Index s, double eps) const {
    std::vector<bool> seen(graph_.size(), false);
    std::queue<Index> queue;
    queue.push(s);
    seen[s] = true;
    while (!queue.empty()) {
      const Index u = queue.front();
      queue.pop();
      for (const Edge& e : graph_[u]) {
        if (e.cap > eps && !seen[e.to]) {
          seen[e.to] = true;
          queue.push(e.to);
        }
      }
    }
    return seen;
  }

  const Edge& edge(Index from, Index k) const { return graph_[from][k]; }

 private:
  bool bfs(Index s, Index t) {
    std::fill(level_.begin(), level_.end(), -1);
    std::queue<Index> queue;
    level_[s] = 0;
    queue.push(s);
    while (!queue.empty()) {
      const Index u = queue.front();
      queue.pop();
      for (const Edge& e : graph_[u]) {
        if (e.cap > eps_ && level_[e.to] < 0) {
          level_[e.to] = level_[u] + 1;
          queue.push(e.to);
        }
      }
    }
    return level_[t] >= 0;
  }

  double dfs(Index u, Index t, double limit) {
    if (u == t) return limit;
    for (Index& k = next_[u]; k < graph_[u].size(); ++k) {
      Edge& e = graph_[u][k];
      if (e.cap <= eps_ || level_[e.to] != level_[u] + 1) continue;
      const double got = dfs(e.to, t, std::min(limit, e.cap));
      if (got > eps_) {
        e.cap -= got;
        graph_[e.to][e.rev].cap += got;
        return got;
      }
    }
    return 0.0;
  }

  std::vector<std::vector<Edge>> graph_;
  std::vector<int> level_;
  std::vector<Index> next_;
  double eps_;
};

}  // namespace

TransportFlow max_transport_flow(std::span<const double> supply,
                                 std::span<const double> demand,
                                 const SupportPattern& pattern, double eps) {
  const Index p = supply.size();
  const Index q = demand.size();
  if (pattern.rows() != p || pattern.cols() != q)
    throw DimensionMismatch("max_transport_flow: pattern shape");

  const Index source = 0;
  const Index sink = p + q + 1;
  auto row_node = [](Index i) { return 1 + i; };
  auto col_node = [p](Index j) { return 1 + p + j; };

  double unbounded = 1.0;
  for (double s : supply) unbounded += s;

  Dinic dinic(p + q + 2, eps);
  for (Index i = 0; i < p; ++i) dinic.add_edge(source, row_node(i), supply[i]);
  std::vector<std::vector<std::pair<Index, Index>>> cell_edges(p);
  for (Index i = 0; i < p; ++i)
    for (Index j = 0; j < q; ++j)
      if (pattern(i, j))
        cell_edges[i].emplace_back(j, dinic.add_edge(row_node(i), col_node(j), unbounded));
  for (Index j = 0; j < q; ++j) dinic.add_edge(col_node(j), sink, demand[j]);

  TransportFlow out;
  out.value = dinic.run(source, sink);
  out.flow = Matrix(p, q);
  for (Index i = 0; i < p; ++i)
    for (const auto& [j, k] : cell_edges[i])
      out.flow(i, j) = std::max(0.0, unbounded - dinic.edge(row_node(i), k).cap);

  // Residual capacities below this are round-off, not room to push.
  const auto seen = dinic.reachable(source, 1e-13);
  out.source_side_rows.resize(p);
  out.source_side_cols.resize(q);
  for (Index i = 0; i < p; ++i) out.source_side_rows[i] = seen[row_node(i)];
  for (Index j = 0; j < q; ++j) out.source_side_cols[j] = seen[col_node(j)];
  return out;
}

}  // namespace bipfit
