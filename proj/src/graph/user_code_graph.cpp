#include "gserec/graph/user_code_graph.hpp"

#include <cmath>
#include <numeric>
#include <set>
#include <stdexcept>

#include "gserec/nn/ops.hpp"
#include "gserec/util/archive.hpp"

namespace gserec::graph {

int UserCodeGraph::code_id(const CodeNode& node) const {
  const auto it = lookup_.find(node);
  return it == lookup_.end() ? -1 : it->second;
}

UserCodeGraph build_graph(const std::vector<std::vector<int>>& codes) {
  UserCodeGraph g;
  g.num_users = static_cast<int>(codes.size());
  for (const auto& row : codes) {
    for (std::size_t l = 0; l < row.size(); ++l) g.lookup_.emplace(CodeNode{static_cast<int>(l), row[l]}, 0);
  }
  for (auto& [node, id] : g.lookup_) {
    id = static_cast<int>(g.codes.size());
    g.codes.push_back(node);
  }
  g.code_degree.assign(g.codes.size(), 0);
  std::set<std::pair<int, int>> seen;
  g.user_codes.resize(codes.size());
  for (std::size_t u = 0; u < codes.size(); ++u) {
    for (std::size_t l = 0; l < codes[u].size(); ++l) {
      const int c = g.lookup_.at(CodeNode{static_cast<int>(l), codes[u][l]});
      if (!seen.emplace(static_cast<int>(u), c).second) throw std::logic_error("build_graph: duplicate edge");
      g.user_codes[u].push_back(c);
      g.edges.emplace_back(static_cast<int>(u), c);
      ++g.code_degree[static_cast<std::size_t>(c)];
    }
  }

  std::vector<Triplet> triplets;
  triplets.reserve(g.edges.size() * 2);
  for (const auto& [u, c] : g.edges) {
    const double du = static_cast<double>(g.user_codes[static_cast<std::size_t>(u)].size());
    const double dc = static_cast<double>(g.code_degree[static_cast<std::size_t>(c)]);
    const double w = 1.0 / std::sqrt(du * dc);
    triplets.emplace_back(u, g.num_users + c, w);
    triplets.emplace_back(g.num_users + c, u, w);
  }
  auto adj = std::make_shared<SparseMatrix>(g.num_nodes(), g.num_nodes());
  adj->setFromTriplets(triplets.begin(), triplets.end());
  g.normalized = std::move(adj);
  return g;
}

UserCodeGraph build_graph(const rq::CodeAssignments& codes, rq::Channel channel) {
  return build_graph(channel == rq::Channel::kSearch ? codes.search : codes.rec);
}

Propagated propagate(const UserCodeGraph& graph, const Matrix& user_table, const Matrix& code_table, int layers) {
  if (layers < 0) throw std::invalid_argument("propagate: layers must be >= 0");
  if (user_table.rows() != graph.num_users || code_table.rows() != graph.num_codes() ||
      user_table.cols() != code_table.cols()) {
    throw std::invalid_argument("propagate: table shapes do not match the graph");
  }
  Matrix x(graph.num_nodes(), user_table.cols());
  x.topRows(graph.num_users) = user_table;
  x.bottomRows(graph.num_codes()) = code_table;
  Matrix acc = x;
  for (int k = 0; k < layers; ++k) {
    x = (*graph.normalized) * x;
    acc += x;
  }
  acc /= static_cast<double>(layers + 1);
  return {acc.topRows(graph.num_users), acc.bottomRows(graph.num_codes())};
}

PropagatedVars propagate(const UserCodeGraph& graph, nn::Var user_table, nn::Var code_table, int layers) {
  if (layers < 0) throw std::invalid_argument("propagate: layers must be >= 0");
  if (user_table.rows() != graph.num_users || code_table.rows() != graph.num_codes()) {
    throw std::invalid_argument("propagate: table shapes do not match the graph");
  }
  if (layers == 0) return {user_table, code_table};
  const nn::Var parts[] = {user_table, code_table};
  nn::Var x = nn::concat_rows(parts);
  nn::Var acc = x;
  for (int k = 0; k < layers; ++k) {
    x = nn::sparse_matmul(graph.normalized, x);
    acc = nn::add(acc, x);
  }
  acc = nn::scale(acc, 1.0 / static_cast<double>(layers + 1));
  return {nn::slice_rows(acc, 0, graph.num_users), nn::slice_rows(acc, graph.num_users, graph.num_codes())};
}

GraphStats graph_stats(const UserCodeGraph& graph) {
  GraphStats s;
  s.users = graph.num_users;
  s.codes = graph.num_codes();
  s.edges = graph.num_edges();
  std::vector<int> parent(static_cast<std::size_t>(graph.num_nodes()));
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](int v) {
    while (parent[static_cast<std::size_t>(v)] != v) {
      parent[static_cast<std::size_t>(v)] = parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(v)])];
      v = parent[static_cast<std::size_t>(v)];
    }
    return v;
  };
  for (const auto& [u, c] : graph.edges) parent[static_cast<std::size_t>(find(u))] = find(graph.num_users + c);
  for (int v = 0; v < graph.num_nodes(); ++v) s.components += find(v) == v;
  for (int d : graph.code_degree) s.max_code_degree = std::max(s.max_code_degree, d);
  s.mean_code_degree = s.codes ? static_cast<double>(s.edges) / s.codes : 0.0;
  for (const auto& node : graph.codes) {
    if (static_cast<int>(s.codes_per_level.size()) <= node.level) s.codes_per_level.resize(static_cast<std::size_t>(node.level) + 1, 0);
    ++s.codes_per_level[static_cast<std::size_t>(node.level)];
  }
  return s;
}

void write_edge_list(const std::filesystem::path& path, const UserCodeGraph& graph) {
  std::string out;
  for (const auto& [u, c] : graph.edges) {
    const auto& node = graph.codes[static_cast<std::size_t>(c)];
    out += "u" + std::to_string(u) + " c" + std::to_string(node.level) + "_" + std::to_string(node.index) + "\n";
  }
  util::write_file_atomic(path, out);
}

}  // namespace gserec::graph
