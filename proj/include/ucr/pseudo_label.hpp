#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <queue>
#include <string>
#include <vector>

#include "ucr/core.hpp"
#include "ucr/matrix.hpp"

namespace ucr {

// Pairwise distances, re-ranked Jaccard distances, and DBSCAN clustering.
// Everything here is deterministic: ties are always broken by ascending
// sample index, and clusters are renumbered by first occurrence.

using DistanceMatrix = Matrix;

// d(i,j) = 1 - <f_i, f_j>. Rows are assumed unit-norm. Symmetric with a
// zero diagonal by construction.
inline DistanceMatrix cosine_distance_matrix(const Matrix& embeddings) {
    const int n = embeddings.rows;
    DistanceMatrix d(n, n);
    for (int i = 0; i < n; ++i) {
        d(i, i) = 0.0;
        for (int j = i + 1; j < n; ++j) {
            const double v = 1.0 - dot(embeddings.row(i), embeddings.row(j), embeddings.cols);
            d(i, j) = v;
            d(j, i) = v;
        }
    }
    return d;
}

namespace detail {

// Row-wise ranking by (distance, index); entry 0 is the row itself when the
// diagonal is zero.
inline std::vector<std::vector<int>> rank_rows(const DistanceMatrix& dist) {
    const int n = dist.rows;
    std::vector<std::vector<int>> rank(n);
    for (int i = 0; i < n; ++i) {
        rank[i].resize(n);
        std::iota(rank[i].begin(), rank[i].end(), 0);
        const double* row = dist.row(i);
        std::sort(rank[i].begin(), rank[i].end(), [row](int a, int b) {
            if (row[a] != row[b]) return row[a] < row[b];
            return a < b;
        });
    }
    return rank;
}

// R(i,k) = { j in top k+1 of i (self included) : i in top k+1 of j }
inline std::vector<int> reciprocal_set(const std::vector<std::vector<int>>& rank, int i, int k) {
    std::vector<int> out;
    for (int pos = 0; pos <= k; ++pos) {
        const int j = rank[i][pos];
        for (int qos = 0; qos <= k; ++qos) {
            if (rank[j][qos] == i) {
                out.push_back(j);
                break;
            }
        }
    }
    return out;
}

}  // namespace detail

// k-reciprocal re-ranking reduced to its Jaccard part: the result is the
// Jaccard distance between expanded reciprocal neighborhoods, with no
// blending back toward the original distances. Output is symmetrized and
// has a zero diagonal.
inline DistanceMatrix rerank_jaccard(const DistanceMatrix& original, int k1, int k2) {
    const int n = original.rows;
    if (original.cols != n) throw DataError("rerank_jaccard: distance matrix must be square");
    if (k1 < 1 || k1 > n - 1)
        throw DataError("rerank_jaccard: k1 must be in [1, n-1], got " + std::to_string(k1));
    if (k2 < 1 || k2 > k1)
        throw DataError("rerank_jaccard: k2 must be in [1, k1], got " + std::to_string(k2));

    const auto rank = detail::rank_rows(original);
    const int half = static_cast<int>(std::lround(k1 / 2.0));

    // V[i] is a sparse weight row over i's expanded reciprocal set.
    Matrix v(n, n);
    for (int i = 0; i < n; ++i) {
        const std::vector<int> base = detail::reciprocal_set(rank, i, k1);
        std::vector<int> expanded = base;
        for (int cand : base) {
            const std::vector<int> cand_set = detail::reciprocal_set(rank, cand, half);
            int common = 0;
            for (int c : cand_set)
                if (std::find(base.begin(), base.end(), c) != base.end()) ++common;
            if (3 * common > 2 * static_cast<int>(cand_set.size()))
                expanded.insert(expanded.end(), cand_set.begin(), cand_set.end());
        }
        std::sort(expanded.begin(), expanded.end());
        expanded.erase(std::unique(expanded.begin(), expanded.end()), expanded.end());

        double total = 0.0;
        for (int j : expanded) total += std::exp(-original(i, j));
        for (int j : expanded) v(i, j) = std::exp(-original(i, j)) / total;
    }

    // Local query expansion: average the weight rows of the k2 nearest
    // neighbours (self included).
    if (k2 > 1) {
        Matrix vq(n, n);
        for (int i = 0; i < n; ++i) {
            double* out = vq.row(i);
            for (int pos = 0; pos < k2; ++pos) {
                const double* src = v.row(rank[i][pos]);
                for (int j = 0; j < n; ++j) out[j] += src[j];
            }
            for (int j = 0; j < n; ++j) out[j] /= k2;
        }
        v = std::move(vq);
    }

    // Inverted index over nonzero columns keeps the min-sum sparse.
    std::vector<std::vector<int>> holders(n);
    for (int i = 0; i < n; ++i) {
        const double* row = v.row(i);
        for (int j = 0; j < n; ++j)
            if (row[j] != 0.0) holders[j].push_back(i);
    }

    DistanceMatrix jac(n, n);
    std::vector<double> min_sum(n);
    for (int i = 0; i < n; ++i) {
        std::fill(min_sum.begin(), min_sum.end(), 0.0);
        const double* vi = v.row(i);
        for (int j = 0; j < n; ++j) {
            if (vi[j] == 0.0) continue;
            for (int q : holders[j]) min_sum[q] += std::min(vi[j], v(q, j));
        }
        for (int q = 0; q < n; ++q) jac(i, q) = 1.0 - min_sum[q] / (2.0 - min_sum[q]);
    }

    for (int i = 0; i < n; ++i) {
        jac(i, i) = 0.0;
        for (int j = i + 1; j < n; ++j) {
            // rounding can push near-duplicate pairs a hair below zero
            const double s = std::max(0.0, 0.5 * (jac(i, j) + jac(j, i)));
            jac(i, j) = s;
            jac(j, i) = s;
        }
    }
    return jac;
}

// Classic DBSCAN over a precomputed distance matrix. A point is core when
// its eps-neighbourhood, itself included, holds at least min_pts points.
// Expansion is breadth-first with neighbours visited in ascending index
// order; border points stay with the first cluster that reaches them.
// Outliers get label -1. Cluster ids are renumbered so that id k's first
// member appears before id k+1's first member.
inline std::vector<int> dbscan(const DistanceMatrix& dist, double eps, int min_pts) {
    const int n = dist.rows;
    if (dist.cols != n) throw DataError("dbscan: distance matrix must be square");
    if (min_pts < 1) throw DataError("dbscan: min_pts must be >= 1");

    std::vector<std::vector<int>> neigh(n);
    for (int i = 0; i < n; ++i) {
        const double* row = dist.row(i);
        for (int j = 0; j < n; ++j)
            if (j != i && row[j] <= eps) neigh[i].push_back(j);
    }
    auto is_core = [&](int i) { return static_cast<int>(neigh[i].size()) + 1 >= min_pts; };

    constexpr int kUnset = -2;
    std::vector<int> labels(n, kUnset);
    int next = 0;
    for (int i = 0; i < n; ++i) {
        if (labels[i] != kUnset) continue;
        if (!is_core(i)) {
            labels[i] = -1;
            continue;
        }
        const int cluster = next++;
        labels[i] = cluster;
        std::queue<int> frontier;
        for (int j : neigh[i]) frontier.push(j);
        while (!frontier.empty()) {
            const int q = frontier.front();
            frontier.pop();
            if (labels[q] == -1) labels[q] = cluster;  // noise becomes border
            if (labels[q] != kUnset) continue;
            labels[q] = cluster;
            if (is_core(q))
                for (int j : neigh[q]) frontier.push(j);
        }
    }

    // Borders can be claimed out of scan order, so renumber by first
    // occurrence explicitly.
    std::vector<int> remap(next, -1);
    int renumbered = 0;
    for (int i = 0; i < n; ++i)
        if (labels[i] >= 0 && remap[labels[i]] < 0) remap[labels[i]] = renumbered++;
    for (int i = 0; i < n; ++i)
        if (labels[i] >= 0) labels[i] = remap[labels[i]];
    return labels;
}

struct PseudoLabeling {
    std::vector<int> labels;                // -1 marks outliers
    int num_clusters = 0;
    std::vector<std::vector<int>> members;  // ascending sample indices per cluster
};

// Full pipeline: cosine distances -> re-ranked Jaccard -> DBSCAN. k1/k2 are
// clamped for sets too small to support the configured neighbourhood sizes.
inline PseudoLabeling pseudo_labels(const Matrix& embeddings, const HyperParams& hp) {
    const int n = embeddings.rows;
    if (n < 2) throw DataError("pseudo_labels: need at least 2 samples");
    const int k1 = std::min(hp.rerank_k1, n - 1);
    const int k2 = std::min(hp.rerank_k2, k1);

    const DistanceMatrix cosine = cosine_distance_matrix(embeddings);
    const DistanceMatrix jac = rerank_jaccard(cosine, k1, k2);

    PseudoLabeling out;
    out.labels = dbscan(jac, hp.dbscan_eps, hp.dbscan_min_pts);
    for (int l : out.labels) out.num_clusters = std::max(out.num_clusters, l + 1);
    out.members.resize(out.num_clusters);
    for (int i = 0; i < n; ++i)
        if (out.labels[i] >= 0) out.members[out.labels[i]].push_back(i);
    return out;
}

}  // namespace ucr
