#pragma once

#include "model.hpp"

#include <cstddef>
#include <numeric>
#include <string>
#include <vector>

namespace dtdens {

//! Directed graph with an edge i -> j iff x_j lies in [u_i, v_i].
struct TruncationGraph
{
  std::size_t n = 0;
  std::vector<std::vector<std::size_t>> adjacency;

  bool has_edge(std::size_t i, std::size_t j) const
  {
    const auto& out = adjacency[i];
    return std::binary_search(out.begin(), out.end(), j);
  }
};

enum class NpmleExistence
{
  unique_exists,
  does_not_exist,
  disconnected
};

inline std::string
to_string(NpmleExistence s)
{
  switch (s) {
    case NpmleExistence::unique_exists:
      return "UniqueExists";
    case NpmleExistence::does_not_exist:
      return "DoesNotExist";
    case NpmleExistence::disconnected:
      return "Disconnected";
  }
  return "Unknown";
}

struct NpmleStatus
{
  NpmleExistence existence;
  //! Strongly connected components, each sorted, listed by smallest vertex.
  std::vector<std::vector<std::size_t>> components;
  //! A vertex with no edge leaving its component; only set when there are
  //! several components.
  std::optional<std::size_t> sink_vertex;
};

inline TruncationGraph
build_graph(const TruncatedSample& sample)
{
  TruncationGraph g;
  g.n = sample.size();
  g.adjacency.resize(g.n);
  for (std::size_t i = 0; i < g.n; ++i) {
    const auto& ri = sample[i];
    for (std::size_t j = 0; j < g.n; ++j) {
      double xj = sample[j].x;
      if (ri.u <= xj && xj <= ri.v)
        g.adjacency[i].push_back(j);
    }
  }
  return g;
}

//! Tarjan's algorithm, iterative. Returns the component id of every vertex.
inline std::vector<std::size_t>
strong_components(const TruncationGraph& g, std::size_t& count)
{
  constexpr std::size_t unvisited = static_cast<std::size_t>(-1);
  std::vector<std::size_t> index(g.n, unvisited), low(g.n, 0), comp(g.n, 0);
  std::vector<bool> on_stack(g.n, false);
  std::vector<std::size_t> stack;
  std::size_t next_index = 0;
  count = 0;

  struct Frame
  {
    std::size_t v;
    std::size_t edge;
  };
  std::vector<Frame> call;

  for (std::size_t root = 0; root < g.n; ++root) {
    if (index[root] != unvisited)
      continue;
    call.push_back({ root, 0 });
    index[root] = low[root] = next_index++;
    stack.push_back(root);
    on_stack[root] = true;
    while (!call.empty()) {
      auto& fr = call.back();
      const auto& out = g.adjacency[fr.v];
      if (fr.edge < out.size()) {
        std::size_t w = out[fr.edge++];
        if (index[w] == unvisited) {
          index[w] = low[w] = next_index++;
          stack.push_back(w);
          on_stack[w] = true;
          call.push_back({ w, 0 });
        } else if (on_stack[w]) {
          low[fr.v] = std::min(low[fr.v], index[w]);
        }
        continue;
      }
      std::size_t v = fr.v;
      if (low[v] == index[v]) {
        std::size_t w;
        do {
          w = stack.back();
          stack.pop_back();
          on_stack[w] = false;
          comp[w] = count;
        } while (w != v);
        ++count;
      }
      call.pop_back();
      if (!call.empty())
        low[call.back().v] = std::min(low[call.back().v], low[v]);
    }
  }
  return comp;
}

namespace detail {

struct UnionFind
{
  std::vector<std::size_t> parent;
  explicit UnionFind(std::size_t n)
    : parent(n)
  {
    std::iota(parent.begin(), parent.end(), std::size_t{ 0 });
  }
  std::size_t find(std::size_t a)
  {
    while (parent[a] != a) {
      parent[a] = parent[parent[a]];
      a = parent[a];
    }
    return a;
  }
  bool unite(std::size_t a, std::size_t b)
  {
    a = find(a);
    b = find(b);
    if (a == b)
      return false;
    parent[std::max(a, b)] = std::min(a, b);
    return true;
  }
};

} // namespace detail

inline bool
weakly_connected(const TruncationGraph& g)
{
  detail::UnionFind uf(g.n);
  std::size_t groups = g.n;
  for (std::size_t i = 0; i < g.n; ++i)
    for (std::size_t j : g.adjacency[i])
      if (uf.unite(i, j))
        --groups;
  return groups <= 1;
}

inline NpmleStatus
npmle_status(const TruncationGraph& g)
{
  std::size_t count = 0;
  auto comp = strong_components(g, count);

  // relabel components by their smallest vertex for a stable ordering
  std::vector<std::size_t> relabel(count, static_cast<std::size_t>(-1));
  std::size_t next = 0;
  for (std::size_t v = 0; v < g.n; ++v)
    if (relabel[comp[v]] == static_cast<std::size_t>(-1))
      relabel[comp[v]] = next++;
  NpmleStatus status;
  status.components.resize(count);
  for (std::size_t v = 0; v < g.n; ++v) {
    comp[v] = relabel[comp[v]];
    status.components[comp[v]].push_back(v);
  }

  if (count == 1) {
    status.existence = NpmleExistence::unique_exists;
    return status;
  }
  status.existence = weakly_connected(g) ? NpmleExistence::does_not_exist
                                         : NpmleExistence::disconnected;

  std::vector<bool> has_exit(count, false);
  for (std::size_t i = 0; i < g.n; ++i)
    for (std::size_t j : g.adjacency[i])
      if (comp[i] != comp[j])
        has_exit[comp[i]] = true;
  for (std::size_t c = 0; c < count; ++c) {
    if (!has_exit[c]) {
      status.sink_vertex = status.components[c].front();
      break;
    }
  }
  return status;
}

inline NpmleStatus
npmle_status(const TruncatedSample& sample)
{
  return npmle_status(build_graph(sample));
}

} // namespace dtdens
