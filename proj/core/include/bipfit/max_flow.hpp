#pragma once

#include <vector>

#include "bipfit/matrix_core.hpp"

namespace bipfit {

/// Transportation network: source -> row i (capacity supply[i]), row i ->
/// column j (unbounded, for cells of the pattern), column j -> sink
/// (capacity demand[j]).
struct TransportFlow {
  Matrix flow;  // rows x cols
  double value = 0.0;
  /// Rows / columns reachable from the source in the residual network. The
  /// reachable rows and the unreachable columns form a minimum cut.
  std::vector<bool> source_side_rows;
  std::vector<bool> source_side_cols;
};

/// Maximum flow by Dinic's algorithm on floating capacities. Augmenting
/// paths with bottleneck below `eps` are ignored.
TransportFlow max_transport_flow(std::span<const double> supply,
                                 std::span<const double> demand,
                                 const SupportPattern& pattern,
                                 double eps = 1e-15);

}  // namespace bipfit
