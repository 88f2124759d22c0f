#pragma once

#include <algorithm>
#include <fstream>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "ucr/core.hpp"
#include "ucr/matrix.hpp"

namespace ucr {

// Retrieval evaluation. For every query, gallery entries sharing both the
// query's identity and its camera are removed, the rest are ranked by
// descending cosine similarity (ties by ascending gallery index), and AP and
// CMC are computed over the surviving ranking. Queries left without any
// positive are skipped and counted.

struct RetrievalItem {
    int gt_id = 0;
    int camera_id = 0;
};

// Candidates sorted by descending similarity to the query row; stable on ties.
inline std::vector<int> rank_gallery(const double* query, const Matrix& gallery, const std::vector<int>& candidates) {
    std::vector<std::pair<double, int>> scored;
    scored.reserve(candidates.size());
    for (int g : candidates) scored.emplace_back(dot(query, gallery.row(g), gallery.cols), g);
    std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    });
    std::vector<int> out;
    out.reserve(scored.size());
    for (const auto& s : scored) out.push_back(s.second);
    return out;
}

// AP = (1/R) * sum over relevant ranks k of precision@k.
inline double average_precision(const std::vector<bool>& relevance, int total_relevant) {
    if (total_relevant <= 0) throw DataError("average_precision: no relevant items");
    double ap = 0.0;
    int hits = 0;
    for (size_t k = 0; k < relevance.size(); ++k) {
        if (!relevance[k]) continue;
        ++hits;
        ap += static_cast<double>(hits) / static_cast<double>(k + 1);
    }
    return ap / total_relevant;
}

struct EvalResult {
    double mean_ap = 0.0;
    std::vector<double> cmc;  // cmc[k] = fraction of queries with a match in top k+1
    int skipped = 0;
    int num_queries = 0;  // queries that actually scored

    double rank_at(int k) const {
        if (cmc.empty()) return 0.0;
        const int idx = std::min<int>(k, static_cast<int>(cmc.size())) - 1;
        return cmc[idx];
    }
};

inline EvalResult evaluate(const Matrix& query_emb, const std::vector<RetrievalItem>& query_meta,
                           const Matrix& gallery_emb, const std::vector<RetrievalItem>& gallery_meta,
                           int max_rank = 10) {
    if (query_emb.rows != static_cast<int>(query_meta.size()))
        throw DataError("evaluate: query metadata size mismatch");
    if (gallery_emb.rows != static_cast<int>(gallery_meta.size()))
        throw DataError("evaluate: gallery metadata size mismatch");
    if (query_emb.cols != gallery_emb.cols) throw DataError("evaluate: embedding dimension mismatch");

    EvalResult res;
    const int depth = std::min<int>(max_rank, gallery_emb.rows);
    res.cmc.assign(std::max(depth, 1), 0.0);

    for (int qi = 0; qi < query_emb.rows; ++qi) {
        const RetrievalItem& q = query_meta[qi];
        std::vector<int> candidates;
        int positives = 0;
        for (int g = 0; g < gallery_emb.rows; ++g) {
            if (gallery_meta[g].gt_id == q.gt_id && gallery_meta[g].camera_id == q.camera_id) continue;
            candidates.push_back(g);
            if (gallery_meta[g].gt_id == q.gt_id) ++positives;
        }
        if (positives == 0) {
            ++res.skipped;
            continue;
        }

        const std::vector<int> order = rank_gallery(query_emb.row(qi), gallery_emb, candidates);
        std::vector<bool> rel(order.size());
        int first_hit = -1;
        for (size_t k = 0; k < order.size(); ++k) {
            rel[k] = gallery_meta[order[k]].gt_id == q.gt_id;
            if (rel[k] && first_hit < 0) first_hit = static_cast<int>(k);
        }
        res.mean_ap += average_precision(rel, positives);
        for (int k = first_hit; k < static_cast<int>(res.cmc.size()); ++k) res.cmc[k] += 1.0;
        ++res.num_queries;
    }

    if (res.num_queries > 0) {
        res.mean_ap /= res.num_queries;
        for (double& v : res.cmc) v /= res.num_queries;
    }
    return res;
}

// One evaluation record; `step` is the number of domains trained so far when
// the measurement was taken.
struct EvalRow {
    std::string split_name;
    int step = 0;
    double mean_ap = 0.0;
    double rank1 = 0.0;
    double rank5 = 0.0;
    double rank10 = 0.0;
    int skipped = 0;
};

inline void write_eval_csv(const std::vector<EvalRow>& rows, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write eval csv: " + path);
    out << "split_name,step,mAP,rank1,rank5,rank10,skipped\n";
    char buf[64];
    for (const EvalRow& r : rows) {
        out << r.split_name << ',' << r.step << ',';
        std::snprintf(buf, sizeof(buf), "%.6f,%.6f,%.6f,%.6f", r.mean_ap, r.rank1, r.rank5, r.rank10);
        out << buf << ',' << r.skipped << '\n';
    }
    if (!out) throw DataError("write failed: " + path);
}

// Per-split mAP trajectory across sequential steps; how much a split decays
// after its own domain finished is the forgetting signal.
struct ForgettingCurve {
    std::vector<std::string> split_names;
    std::vector<std::vector<std::pair<int, double>>> series;  // (step, mAP) sorted by step
};

inline ForgettingCurve forgetting_curve(const std::vector<EvalRow>& rows) {
    ForgettingCurve fc;
    std::map<std::string, size_t> slot;
    for (const EvalRow& r : rows) {
        auto it = slot.find(r.split_name);
        if (it == slot.end()) {
            it = slot.emplace(r.split_name, fc.split_names.size()).first;
            fc.split_names.push_back(r.split_name);
            fc.series.emplace_back();
        }
        fc.series[it->second].emplace_back(r.step, r.mean_ap);
    }
    for (auto& s : fc.series)
        std::sort(s.begin(), s.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    return fc;
}

}  // namespace ucr
