#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <vector>

#include "spf/geometry.hpp"

namespace spf {

struct TreeEdge {
    std::size_t a = 0, b = 0;  // a < b
    double weight = 0.0;
    bool operator==(const TreeEdge&) const = default;
};

/// Rooted minimum spanning tree over cell centroids.
struct CellTree {
    Positions nodes;
    std::vector<TreeEdge> edges;
    std::vector<std::optional<std::size_t>> parent;  // empty for the root
    std::size_t root = 0;
    std::vector<std::size_t> order;  // root first, parents before children

    std::size_t size() const { return nodes.size(); }
    double total_weight() const;
};

/// Kruskal over the complete Euclidean graph; equal weights are taken in
/// lexicographic (a, b) order.
std::vector<TreeEdge> build_mst(const Positions& nodes);

/// Tree center by hop-count eccentricity, smallest id on ties.
std::size_t choose_root(std::size_t node_count, const std::vector<TreeEdge>& edges);

/// Breadth-first order from `root`, children in ascending id. Also fills `parent`.
std::vector<std::size_t> topological_order(std::size_t node_count, const std::vector<TreeEdge>& edges,
                                           std::size_t root,
                                           std::vector<std::optional<std::size_t>>* parent = nullptr);

/// BFS depth of every node; the sweep can process one depth level at a time.
std::vector<std::size_t> node_depths(const CellTree& tree);

CellTree build_cell_tree(const Positions& nodes);
/// Tree with a given edge set (e.g. read from file); root and order recomputed
/// only when `root` is empty.
CellTree make_cell_tree(const Positions& nodes, std::vector<TreeEdge> edges,
                        std::optional<std::size_t> root = std::nullopt);

// Text form: "root <id>" followed by "edge k1 k2 weight" lines.
void write_tree(std::ostream& os, const CellTree& tree);
void write_tree(const std::filesystem::path& path, const CellTree& tree);
CellTree read_tree(const std::filesystem::path& path, const Positions& nodes);

}  // namespace spf
