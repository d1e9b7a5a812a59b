#pragma once

#include <cstddef>
#include <vector>

#include "ttr/core.hpp"

namespace ttr {

// Cutoff-induced adjacency: (i,j) is an edge iff ||r_i - r_j|| <= cutoff, i != j.
// Neighbor lists are in ascending index order.
struct RadiusGraph {
    std::size_t n = 0;
    double cutoff = 0.0;
    std::vector<std::vector<std::size_t>> neighbors;
    std::vector<std::size_t> degrees;

    bool has_edge(std::size_t i, std::size_t j) const {
        for (std::size_t k : neighbors[i])
            if (k == j) return true;
        return false;
    }

    std::size_t edge_count() const {
        std::size_t e = 0;
        for (const auto& nb : neighbors) e += nb.size();
        return e / 2;
    }
};

inline RadiusGraph build_radius_graph(const Structure& structure, double cutoff) {
    structure.validate();
    if (!(cutoff > 0.0)) throw InputError("build_radius_graph: cutoff must be > 0");

    const std::size_t n = structure.size();
    RadiusGraph g;
    g.n = n;
    g.cutoff = cutoff;
    g.neighbors.resize(n);
    g.degrees.assign(n, 0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            if (distance(structure.positions[i], structure.positions[j]) <= cutoff) {
                g.neighbors[i].push_back(j);
                g.neighbors[j].push_back(i);
            }
        }
    }
    for (std::size_t i = 0; i < n; ++i) g.degrees[i] = g.neighbors[i].size();
    return g;
}

// Connected-component count via union-find; used as an independent oracle for
// the zero-eigenvalue multiplicity of the normalized Laplacian.
inline std::size_t connected_components(const RadiusGraph& g) {
    std::vector<std::size_t> parent(g.n);
    for (std::size_t i = 0; i < g.n; ++i) parent[i] = i;
    auto find = [&](std::size_t x) {
        while (parent[x] != x) {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        return x;
    };
    for (std::size_t i = 0; i < g.n; ++i)
        for (std::size_t j : g.neighbors[i]) {
            std::size_t a = find(i), b = find(j);
            if (a != b) parent[a] = b;
        }
    std::size_t count = 0;
    for (std::size_t i = 0; i < g.n; ++i)
        if (find(i) == i) ++count;
    return count;
}

}  // namespace ttr
