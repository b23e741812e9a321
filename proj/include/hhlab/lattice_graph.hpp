#ifndef HHLAB_LATTICE_GRAPH_HPP
#define HHLAB_LATTICE_GRAPH_HPP

#include <algorithm>
#include <bit>
#include <cstdint>
#include <map>
#include <optional>
#include <queue>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "hhlab/error.hpp"

namespace hhlab {

using Mask = std::uint64_t;

struct Edge {
  int a = 0;
  int b = 0;
  friend bool operator==(const Edge&, const Edge&) = default;
  friend auto operator<=>(const Edge&, const Edge&) = default;
};

/// Simple undirected graph on vertices 0..n-1 with a deduplicated edge set.
class Graph {
 public:
  Graph() = default;

  Graph(int vertex_count, const std::vector<Edge>& edges) : n_(vertex_count), adj_(vertex_count) {
    require(vertex_count >= 0, ErrorCode::kInvalidArgument, "negative vertex count");
    std::set<Edge> unique;
    for (Edge e : edges) {
      require(e.a >= 0 && e.a < n_ && e.b >= 0 && e.b < n_, ErrorCode::kInvalidArgument,
              "edge endpoint out of range");
      require(e.a != e.b, ErrorCode::kSelfLoop, "self-loop at vertex " + std::to_string(e.a));
      if (e.a > e.b) std::swap(e.a, e.b);
      unique.insert(e);
    }
    edges_.assign(unique.begin(), unique.end());
    for (const Edge& e : edges_) {
      adj_[e.a].push_back(e.b);
      adj_[e.b].push_back(e.a);
    }
    for (auto& row : adj_) std::sort(row.begin(), row.end());
  }

  int vertex_count() const { return n_; }
  const std::vector<Edge>& edges() const { return edges_; }
  const std::vector<int>& neighbors(int x) const { return adj_[x]; }

  bool adjacent(int x, int y) const {
    const auto& row = adj_[x];
    return std::binary_search(row.begin(), row.end(), y);
  }

  /// Component label per vertex; labels are assigned in order of the lowest vertex.
  std::vector<int> components() const {
    std::vector<int> label(n_, -1);
    int next = 0;
    for (int s = 0; s < n_; ++s) {
      if (label[s] >= 0) continue;
      std::queue<int> q;
      q.push(s);
      label[s] = next;
      while (!q.empty()) {
        int v = q.front();
        q.pop();
        for (int w : adj_[v])
          if (label[w] < 0) {
            label[w] = next;
            q.push(w);
          }
      }
      ++next;
    }
    return label;
  }

  bool connected() const {
    if (n_ <= 1) return true;
    auto c = components();
    return std::all_of(c.begin(), c.end(), [](int l) { return l == 0; });
  }

 private:
  int n_ = 0;
  std::vector<Edge> edges_;
  std::vector<std::vector<int>> adj_;
};

/// Integer embedding used to evaluate couplings as functions of vertex differences.
struct Embedding {
  std::vector<std::vector<int>> positions;
  /// Periodic extent per axis (2L for the hypercubic torus); 0 means open.
  std::vector<int> period;

  /// x - y reduced into [-period/2, period/2) on periodic axes.
  std::vector<int> difference(int x, int y) const {
    const auto& px = positions[x];
    const auto& py = positions[y];
    std::vector<int> d(px.size());
    for (std::size_t i = 0; i < px.size(); ++i) {
      int v = px[i] - py[i];
      int per = i < period.size() ? period[i] : 0;
      if (per > 0) {
        int half = per / 2;
        v = ((v + half) % per + per) % per - half;
      }
      d[i] = v;
    }
    return d;
  }
};

/// Finite bipartite graph with sublattice signs gamma(x) = +1 / -1.
class LatticeGraph : public Graph {
 public:
  LatticeGraph() = default;

  LatticeGraph(Graph g, std::vector<int> sign, std::optional<Embedding> embedding = std::nullopt)
      : Graph(std::move(g)), sign_(std::move(sign)), embedding_(std::move(embedding)) {}

  int gamma(int x) const { return sign_[x]; }
  const std::vector<int>& sublattice_sign() const { return sign_; }
  const std::optional<Embedding>& embedding() const { return embedding_; }

  /// Linear extent L and dimension d when built by build_hypercubic.
  std::optional<std::pair<int, int>> hypercubic_shape() const { return shape_; }

 private:
  std::vector<int> sign_;
  std::optional<Embedding> embedding_;
  std::optional<std::pair<int, int>> shape_;

  friend LatticeGraph build_hypercubic(int L, int d);
};

/// Two-colours g by breadth-first traversal; +1 on the lowest vertex of each component.
inline std::vector<int> two_coloring(const Graph& g) {
  const int n = g.vertex_count();
  std::vector<int> sign(n, 0);
  for (int s = 0; s < n; ++s) {
    if (sign[s] != 0) continue;
    sign[s] = 1;
    std::queue<int> q;
    q.push(s);
    while (!q.empty()) {
      int v = q.front();
      q.pop();
      for (int w : g.neighbors(v)) {
        if (sign[w] == 0) {
          sign[w] = -sign[v];
          q.push(w);
        } else if (sign[w] == sign[v]) {
          throw Error(ErrorCode::kNotBipartite, "odd cycle through edge {" + std::to_string(v) +
                                                    "," + std::to_string(w) + "}");
        }
      }
    }
  }
  return sign;
}

inline LatticeGraph build_general(int vertex_count, const std::vector<Edge>& edges) {
  Graph g(vertex_count, edges);
  auto sign = two_coloring(g);
  return LatticeGraph(std::move(g), std::move(sign));
}

/// Periodic hypercube [-L, L)^d with nearest-neighbour and wrap bonds, merged into a set.
inline LatticeGraph build_hypercubic(int L, int d) {
  require(L >= 1 && d >= 1, ErrorCode::kInvalidArgument, "build_hypercubic needs L >= 1, d >= 1");
  const int side = 2 * L;
  int n = 1;
  for (int i = 0; i < d; ++i) n *= side;

  Embedding emb;
  emb.period.assign(d, side);
  emb.positions.resize(n);
  for (int v = 0; v < n; ++v) {
    std::vector<int> pos(d);
    int r = v;
    for (int i = d - 1; i >= 0; --i) {
      pos[i] = r % side - L;
      r /= side;
    }
    emb.positions[v] = std::move(pos);
  }

  std::vector<Edge> edges;
  for (int x = 0; x < n; ++x)
    for (int y = x + 1; y < n; ++y) {
      int nonzero = 0;
      int last = 0;
      for (int i = 0; i < d; ++i) {
        int diff = std::abs(emb.positions[x][i] - emb.positions[y][i]);
        if (diff != 0) {
          ++nonzero;
          last = diff;
        }
      }
      // |x - y| = 1 or 2L - 1 along a single axis
      if (nonzero == 1 && (last == 1 || last == side - 1)) edges.push_back({x, y});
    }

  Graph g(n, edges);
  std::vector<int> sign(n);
  for (int v = 0; v < n; ++v) {
    int s = 0;
    for (int c : emb.positions[v]) s += c;
    sign[v] = (s % 2 == 0) ? 1 : -1;
  }
  // Fix the global sign: +1 on vertex 0 (the lowest index of the single component).
  if (sign[0] < 0)
    for (int& s : sign) s = -s;
  LatticeGraph lg(std::move(g), std::move(sign), std::move(emb));
  lg.shape_ = std::make_pair(L, d);
  return lg;
}

// --- fermionic graphs -------------------------------------------------------

inline std::vector<int> mask_to_subset(Mask m) {
  std::vector<int> out;
  while (m) {
    out.push_back(std::countr_zero(m));
    m &= m - 1;
  }
  return out;
}

inline Mask subset_to_mask(const std::vector<int>& xs) {
  Mask m = 0;
  for (int x : xs) m |= Mask{1} << x;
  return m;
}

/// All masks on `sites` bits with popcount n, ascending by integer value.
inline std::vector<Mask> combinations(int sites, int n) {
  std::vector<Mask> out;
  if (n < 0 || n > sites) return out;
  if (n == 0) return {Mask{0}};
  Mask m = (Mask{1} << n) - 1;
  const Mask limit = Mask{1} << sites;
  while (m < limit) {
    out.push_back(m);
    // Gosper's hack
    Mask c = m & (~m + 1);
    Mask r = m + c;
    m = (((r ^ m) >> 2) / c) | r;
  }
  return out;
}

/// The graph on n-subsets of the base vertices; X ~ Y iff they differ in one element
/// and the two differing elements are adjacent.
struct FermionicGraph {
  int n = 0;
  std::vector<Mask> vertices;
  Graph graph;

  int index_of(Mask m) const {
    auto it = std::lower_bound(vertices.begin(), vertices.end(), m);
    return (it != vertices.end() && *it == m) ? int(it - vertices.begin()) : -1;
  }
};

inline FermionicGraph fermionic_graph(const Graph& g, int n) {
  const int sites = g.vertex_count();
  require(n >= 0 && n <= sites, ErrorCode::kInvalidArgument, "particle number out of range");
  require(sites <= 63, ErrorCode::kInvalidArgument, "too many vertices for bitmask subsets");
  FermionicGraph fg;
  fg.n = n;
  fg.vertices = combinations(sites, n);
  std::vector<Edge> edges;
  for (std::size_t i = 0; i < fg.vertices.size(); ++i) {
    Mask x = fg.vertices[i];
    for (int a : mask_to_subset(x))
      for (int b : g.neighbors(a)) {
        if (x & (Mask{1} << b)) continue;
        Mask y = (x & ~(Mask{1} << a)) | (Mask{1} << b);
        int j = fg.index_of(y);
        if (j > int(i)) edges.push_back({int(i), j});
      }
  }
  fg.graph = Graph(int(fg.vertices.size()), edges);
  return fg;
}

using VertexPath = std::vector<int>;

/// All simple paths X = X_1 ... X_{L+1} = Y in the fermionic graph (vertex indices).
inline std::vector<VertexPath> paths_of_length(const FermionicGraph& fg, int from, int to, int length) {
  const int nv = fg.graph.vertex_count();
  require(from >= 0 && from < nv && to >= 0 && to < nv, ErrorCode::kInvalidArgument,
          "path endpoints are not vertices of the fermionic graph");
  require(length >= 0, ErrorCode::kInvalidArgument, "negative path length");
  std::vector<VertexPath> out;
  VertexPath path{from};
  std::vector<char> used(nv, 0);
  used[from] = 1;
  auto dfs = [&](auto&& self, int v) -> void {
    if (int(path.size()) - 1 == length) {
      if (v == to) out.push_back(path);
      return;
    }
    for (int w : fg.graph.neighbors(v)) {
      if (used[w]) continue;
      used[w] = 1;
      path.push_back(w);
      self(self, w);
      path.pop_back();
      used[w] = 0;
    }
  };
  dfs(dfs, from);
  return out;
}

// --- small-graph catalog ----------------------------------------------------

/// One representative per isomorphism class of connected simple graphs on exactly n vertices.
inline std::vector<Graph> connected_graph_catalog(int n) {
  require(n >= 1 && n <= 6, ErrorCode::kInvalidArgument, "catalog supports 1..6 vertices");
  std::vector<std::pair<int, int>> pairs;
  for (int a = 0; a < n; ++a)
    for (int b = a + 1; b < n; ++b) pairs.emplace_back(a, b);
  const int m = int(pairs.size());
  std::vector<int> pair_index(n * n, -1);
  for (int k = 0; k < m; ++k) {
    pair_index[pairs[k].first * n + pairs[k].second] = k;
    pair_index[pairs[k].second * n + pairs[k].first] = k;
  }
  std::vector<std::vector<int>> perms;
  std::vector<int> p(n);
  for (int i = 0; i < n; ++i) p[i] = i;
  do perms.push_back(p);
  while (std::next_permutation(p.begin(), p.end()));

  auto canonical = [&](std::uint32_t code) {
    std::uint32_t best = code;
    for (const auto& perm : perms) {
      std::uint32_t c = 0;
      for (int k = 0; k < m; ++k)
        if (code & (1u << k)) c |= 1u << pair_index[perm[pairs[k].first] * n + perm[pairs[k].second]];
      best = std::min(best, c);
    }
    return best;
  };

  std::set<std::uint32_t> seen;
  std::vector<Graph> out;
  for (std::uint32_t code = 0; code < (1u << m); ++code) {
    std::vector<Edge> edges;
    for (int k = 0; k < m; ++k)
      if (code & (1u << k)) edges.push_back({pairs[k].first, pairs[k].second});
    Graph g(n, edges);
    if (!g.connected()) continue;
    if (!seen.insert(canonical(code)).second) continue;
    out.push_back(std::move(g));
  }
  return out;
}

}  // namespace hhlab

#endif  // HHLAB_LATTICE_GRAPH_HPP
