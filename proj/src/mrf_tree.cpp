#include "spf/mrf_tree.hpp"

#include <fmt/format.h>
#include <fmt/ostream.h>

#include <algorithm>
#include <deque>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

namespace spf {

double CellTree::total_weight() const {
    double w = 0.0;
    for (const auto& e : edges) w += e.weight;
    return w;
}

namespace {

class DisjointSets {
public:
    explicit DisjointSets(std::size_t n) : parent_(n), rank_(n, 0) {
        std::iota(parent_.begin(), parent_.end(), 0);
    }
    std::size_t find(std::size_t a) {
        while (parent_[a] != a) {
            parent_[a] = parent_[parent_[a]];
            a = parent_[a];
        }
        return a;
    }
    bool unite(std::size_t a, std::size_t b) {
        a = find(a);
        b = find(b);
        if (a == b) return false;
        if (rank_[a] < rank_[b]) std::swap(a, b);
        parent_[b] = a;
        if (rank_[a] == rank_[b]) ++rank_[a];
        return true;
    }

private:
    std::vector<std::size_t> parent_;
    std::vector<unsigned> rank_;
};

std::vector<std::vector<std::size_t>> adjacency(std::size_t n, const std::vector<TreeEdge>& edges) {
    std::vector<std::vector<std::size_t>> adj(n);
    for (const auto& e : edges) {
        if (e.a >= n || e.b >= n)
            throw DataError(fmt::format("edge ({},{}) references a node outside [0,{})", e.a, e.b, n));
        adj[e.a].push_back(e.b);
        adj[e.b].push_back(e.a);
    }
    for (auto& nb : adj) std::sort(nb.begin(), nb.end());
    return adj;
}

std::vector<std::size_t> bfs_hops(const std::vector<std::vector<std::size_t>>& adj, std::size_t src) {
    std::vector<std::size_t> dist(adj.size(), std::numeric_limits<std::size_t>::max());
    std::deque<std::size_t> queue{src};
    dist[src] = 0;
    while (!queue.empty()) {
        const auto u = queue.front();
        queue.pop_front();
        for (auto v : adj[u])
            if (dist[v] == std::numeric_limits<std::size_t>::max()) {
                dist[v] = dist[u] + 1;
                queue.push_back(v);
            }
    }
    return dist;
}

}  // namespace

std::vector<TreeEdge> build_mst(const Positions& nodes) {
    if (nodes.empty()) throw std::invalid_argument("build_mst: no nodes");
    const auto n = nodes.size();
    std::vector<TreeEdge> all;
    all.reserve(n * (n - 1) / 2);
    for (std::size_t a = 0; a < n; ++a)
        for (std::size_t b = a + 1; b < n; ++b) all.push_back({a, b, (nodes[a] - nodes[b]).norm()});
    std::stable_sort(all.begin(), all.end(),
                     [](const TreeEdge& l, const TreeEdge& r) { return l.weight < r.weight; });

    DisjointSets sets(n);
    std::vector<TreeEdge> tree;
    tree.reserve(n - 1);
    for (const auto& e : all) {
        if (sets.unite(e.a, e.b)) tree.push_back(e);
        if (tree.size() + 1 == n) break;
    }
    return tree;
}

std::size_t choose_root(std::size_t node_count, const std::vector<TreeEdge>& edges) {
    const auto adj = adjacency(node_count, edges);
    std::size_t best = 0;
    std::size_t best_ecc = std::numeric_limits<std::size_t>::max();
    for (std::size_t k = 0; k < node_count; ++k) {
        const auto d = bfs_hops(adj, k);
        const auto ecc = *std::max_element(d.begin(), d.end());
        if (ecc < best_ecc) {
            best_ecc = ecc;
            best = k;
        }
    }
    return best;
}

std::vector<std::size_t> topological_order(std::size_t node_count, const std::vector<TreeEdge>& edges,
                                           std::size_t root,
                                           std::vector<std::optional<std::size_t>>* parent) {
    const auto adj = adjacency(node_count, edges);
    std::vector<std::optional<std::size_t>> par(node_count);
    std::vector<bool> seen(node_count, false);
    std::vector<std::size_t> order;
    order.reserve(node_count);
    std::deque<std::size_t> queue{root};
    seen[root] = true;
    while (!queue.empty()) {
        const auto u = queue.front();
        queue.pop_front();
        order.push_back(u);
        for (auto v : adj[u]) {
            if (seen[v]) continue;
            seen[v] = true;
            par[v] = u;
            queue.push_back(v);
        }
    }
    if (order.size() != node_count)
        throw DataError(fmt::format("tree is not connected: reached {} of {} nodes", order.size(),
                                    node_count));
    if (parent) *parent = std::move(par);
    return order;
}

std::vector<std::size_t> node_depths(const CellTree& tree) {
    std::vector<std::size_t> depth(tree.size(), 0);
    for (auto k : tree.order)
        if (tree.parent[k]) depth[k] = depth[*tree.parent[k]] + 1;
    return depth;
}

CellTree make_cell_tree(const Positions& nodes, std::vector<TreeEdge> edges, std::optional<std::size_t> root) {
    if (nodes.empty()) throw std::invalid_argument("cell tree needs at least one node");
    if (edges.size() + 1 != nodes.size())
        throw DataError(fmt::format("{} edges cannot span {} nodes", edges.size(), nodes.size()));
    CellTree tree;
    tree.nodes = nodes;
    tree.edges = std::move(edges);
    tree.root = root ? *root : choose_root(nodes.size(), tree.edges);
    if (tree.root >= nodes.size())
        throw DataError(fmt::format("root {} outside [0,{})", tree.root, nodes.size()));
    tree.order = topological_order(nodes.size(), tree.edges, tree.root, &tree.parent);
    return tree;
}

CellTree build_cell_tree(const Positions& nodes) { return make_cell_tree(nodes, build_mst(nodes)); }

void write_tree(std::ostream& os, const CellTree& tree) {
    fmt::print(os, "root {}\n", tree.root);
    for (const auto& e : tree.edges) fmt::print(os, "edge {} {} {:.17g}\n", e.a, e.b, e.weight);
}

void write_tree(const std::filesystem::path& path, const CellTree& tree) {
    std::ofstream os(path);
    if (!os) throw DataError(fmt::format("cannot write tree '{}'", path.string()));
    write_tree(os, tree);
}

CellTree read_tree(const std::filesystem::path& path, const Positions& nodes) {
    std::ifstream is(path);
    if (!is) throw DataError(fmt::format("cannot open tree '{}'", path.string()));
    std::optional<std::size_t> root;
    std::vector<TreeEdge> edges;
    std::string line;
    for (std::size_t lineno = 1; std::getline(is, line); ++lineno) {
        std::istringstream ls(line);
        std::string key;
        if (!(ls >> key) || key[0] == '#') continue;
        if (key == "root") {
            std::size_t r = 0;
            if (!(ls >> r)) throw DataError(fmt::format("{}:{}: malformed root line", path.string(), lineno));
            root = r;
        } else if (key == "edge") {
            TreeEdge e;
            if (!(ls >> e.a >> e.b >> e.weight))
                throw DataError(fmt::format("{}:{}: malformed edge line", path.string(), lineno));
            if (e.a > e.b) std::swap(e.a, e.b);
            edges.push_back(e);
        } else {
            throw DataError(fmt::format("{}:{}: unknown record '{}'", path.string(), lineno, key));
        }
    }
    if (!root) throw DataError(fmt::format("{}: missing root line", path.string()));
    return make_cell_tree(nodes, std::move(edges), root);
}

}  // namespace spf
