#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <utility>
#include <vector>

#include "gserec/nn/tape.hpp"
#include "gserec/rq/codes.hpp"
#include "gserec/util/matrix.hpp"

namespace gserec::graph {

/// A code is identified by its level and its index within that level.
struct CodeNode {
  int level = 0;
  int index = 0;
  auto operator<=>(const CodeNode&) const = default;
};

/// Bipartite user-code graph for one channel. Node ids: users 0..U-1, then
/// codes U..U+C-1 in (level, index) order. Only assigned codes are nodes.
struct UserCodeGraph {
  int num_users = 0;
  std::vector<CodeNode> codes;                 ///< dense code id -> (level, index)
  std::vector<std::vector<int>> user_codes;    ///< [user][level] -> dense code id
  std::vector<std::pair<int, int>> edges;      ///< (user, dense code id)
  std::vector<int> code_degree;
  /// Symmetric D^-1/2 A D^-1/2 over all U+C nodes.
  std::shared_ptr<const SparseMatrix> normalized;

  int num_codes() const { return static_cast<int>(codes.size()); }
  int num_nodes() const { return num_users + num_codes(); }
  int num_edges() const { return static_cast<int>(edges.size()); }
  /// Dense id of a code, or -1 if no user owns it.
  int code_id(const CodeNode& node) const;

 private:
  friend UserCodeGraph build_graph(const std::vector<std::vector<int>>& codes);
  std::map<CodeNode, int> lookup_;
};

/// `codes[u]` lists user u's per-level code indices.
UserCodeGraph build_graph(const std::vector<std::vector<int>>& codes);
UserCodeGraph build_graph(const rq::CodeAssignments& codes, rq::Channel channel);

struct Propagated {
  Matrix users;
  Matrix codes;
};

/// Mean of layers 0..K of LightGCN-style propagation.
Propagated propagate(const UserCodeGraph& graph, const Matrix& user_table, const Matrix& code_table, int layers);

struct PropagatedVars {
  nn::Var users;
  nn::Var codes;
};

/// Differentiable version; gradients reach both input tables.
PropagatedVars propagate(const UserCodeGraph& graph, nn::Var user_table, nn::Var code_table, int layers);

struct GraphStats {
  int users = 0;
  int codes = 0;
  int edges = 0;
  int components = 0;
  int max_code_degree = 0;
  double mean_code_degree = 0.0;
  std::vector<int> codes_per_level;
};

GraphStats graph_stats(const UserCodeGraph& graph);

/// One "u<user> c<level>_<index>" line per edge.
void write_edge_list(const std::filesystem::path& path, const UserCodeGraph& graph);

}  // namespace gserec::graph
