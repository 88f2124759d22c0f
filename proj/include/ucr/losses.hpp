#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "ucr/core.hpp"
#include "ucr/matrix.hpp"
#include "ucr/prototypes.hpp"

namespace ucr {

// Contrastive losses. Every function returns the scalar loss together with
// its exact gradient with respect to the online embeddings that were fed in;
// prototypes and momentum/frozen embeddings are treated as constants.

struct LossResult {
    double value = 0.0;
    Matrix grad;  // same shape as the online embedding batch
};

namespace detail {

// Max-subtracted softmax over a logit vector.
inline std::vector<double> softmax(const std::vector<double>& logits) {
    double mx = logits.front();
    for (double v : logits) mx = std::max(mx, v);
    std::vector<double> p(logits.size());
    double total = 0.0;
    for (size_t i = 0; i < logits.size(); ++i) {
        p[i] = std::exp(logits[i] - mx);
        total += p[i];
    }
    for (double& v : p) v /= total;
    return p;
}

}  // namespace detail

// Prototype contrast: pull each embedding toward its own cluster prototype
// against all cluster prototypes.
//   L = mean_i -log softmax_c(<f_i, p_c> / tau_p)[a_i]
inline LossResult loss_cluster(const Matrix& online, const std::vector<int>& cluster_ids, const Matrix& protos,
                               double tau_p) {
    const int n = online.rows;
    const int d = online.cols;
    if (static_cast<int>(cluster_ids.size()) != n) throw TrainError("loss_cluster: cluster_ids size mismatch");
    if (protos.cols != d) throw TrainError("loss_cluster: prototype dimension mismatch");

    LossResult res;
    res.grad = Matrix(n, d);
    std::vector<double> logits(protos.rows);
    for (int i = 0; i < n; ++i) {
        const int a = cluster_ids[i];
        if (a < 0 || a >= protos.rows) throw TrainError("loss_cluster: cluster id out of range");
        for (int c = 0; c < protos.rows; ++c) logits[c] = dot(online.row(i), protos.row(c), d) / tau_p;
        const std::vector<double> q = detail::softmax(logits);
        res.value += -std::log(q[a]);
        double* g = res.grad.row(i);
        for (int c = 0; c < protos.rows; ++c) {
            const double w = (q[c] - (c == a ? 1.0 : 0.0)) / (tau_p * n);
            const double* p = protos.row(c);
            for (int k = 0; k < d; ++k) g[k] += w * p[k];
        }
    }
    res.value /= n;
    return res;
}

// Camera contrast: for each anchor, every same-cluster camera prototype in
// turn plays the positive against the n_neg hardest camera prototypes drawn
// from other clusters (hardest by similarity to the anchor, ties by lowest
// prototype row). Each positive keeps its own denominator.
inline LossResult loss_cam(const Matrix& online, const std::vector<int>& cluster_ids, const CameraPrototypes& cams,
                           double tau_c, int n_neg) {
    const int n = online.rows;
    const int d = online.cols;
    if (static_cast<int>(cluster_ids.size()) != n) throw TrainError("loss_cam: cluster_ids size mismatch");
    if (n_neg < 1) throw ConfigError("n_neg must be >= 1");

    LossResult res;
    res.grad = Matrix(n, d);
    for (int i = 0; i < n; ++i) {
        const int a = cluster_ids[i];
        if (a < 0 || a >= static_cast<int>(cams.by_cluster.size()))
            throw TrainError("loss_cam: cluster id out of range");
        const std::vector<int>& positives = cams.by_cluster[a];
        if (positives.empty()) throw TrainError("loss_cam: cluster without camera prototypes");

        std::vector<std::pair<double, int>> negs;
        for (int r = 0; r < cams.protos.rows; ++r)
            if (cams.cluster_of[r] != a) negs.emplace_back(dot(online.row(i), cams.protos.row(r), d), r);
        std::sort(negs.begin(), negs.end(), [](const auto& x, const auto& y) {
            if (x.first != y.first) return x.first > y.first;
            return x.second < y.second;
        });
        const int keep = std::min<int>(n_neg, static_cast<int>(negs.size()));
        if (keep == 0) continue;  // single-cluster batch: no contrast available

        double* g = res.grad.row(i);
        const double scale = 1.0 / (tau_c * n * positives.size());
        for (int pos : positives) {
            std::vector<double> logits;
            logits.push_back(dot(online.row(i), cams.protos.row(pos), d) / tau_c);
            for (int t = 0; t < keep; ++t) logits.push_back(negs[t].first / tau_c);
            const std::vector<double> q = detail::softmax(logits);
            res.value += -std::log(q[0]) / positives.size();

            const double* pp = cams.protos.row(pos);
            for (int k = 0; k < d; ++k) g[k] += scale * (q[0] - 1.0) * pp[k];
            for (int t = 0; t < keep; ++t) {
                const double* pn = cams.protos.row(negs[t].second);
                for (int k = 0; k < d; ++k) g[k] += scale * q[t + 1] * pn[k];
            }
        }
    }
    res.value /= n;
    return res;
}

// Hardest-positive instance contrast against momentum embeddings of the
// batch. The positive is the same-cluster momentum embedding least similar
// to the anchor; the denominator adds every different-cluster momentum
// embedding. No temperature. Anchors lacking a positive or a negative are
// skipped and the mean runs over contributing anchors.
inline LossResult loss_hard(const Matrix& online, const Matrix& momentum, const std::vector<int>& cluster_ids) {
    const int n = online.rows;
    const int d = online.cols;
    if (!online.same_shape(momentum)) throw TrainError("loss_hard: online/momentum shape mismatch");
    if (static_cast<int>(cluster_ids.size()) != n) throw TrainError("loss_hard: cluster_ids size mismatch");

    LossResult res;
    res.grad = Matrix(n, d);
    int counted = 0;
    for (int i = 0; i < n; ++i) {
        int pos = -1;
        double pos_sim = 0.0;
        std::vector<int> negs;
        for (int j = 0; j < n; ++j) {
            if (j == i) continue;
            if (cluster_ids[j] == cluster_ids[i]) {
                const double s = dot(online.row(i), momentum.row(j), d);
                if (pos < 0 || s < pos_sim) {
                    pos = j;
                    pos_sim = s;
                }
            } else {
                negs.push_back(j);
            }
        }
        if (pos < 0 || negs.empty()) continue;
        ++counted;

        std::vector<double> logits;
        logits.push_back(pos_sim);
        for (int j : negs) logits.push_back(dot(online.row(i), momentum.row(j), d));
        const std::vector<double> q = detail::softmax(logits);
        res.value += -std::log(q[0]);

        double* g = res.grad.row(i);
        const double* mp = momentum.row(pos);
        for (int k = 0; k < d; ++k) g[k] += (q[0] - 1.0) * mp[k];
        for (size_t t = 0; t < negs.size(); ++t) {
            const double* mn = momentum.row(negs[t]);
            for (int k = 0; k < d; ++k) g[k] += q[t + 1] * mn[k];
        }
    }
    if (counted > 0) {
        res.value /= counted;
        res.grad *= 1.0 / counted;
    }
    return res;
}

// Current-domain loss under the configured variant.
inline LossResult loss_current(const Matrix& online, const Matrix& momentum, const std::vector<int>& cluster_ids,
                               const PrototypeMemory& protos, const HyperParams& hp) {
    LossResult res = loss_cluster(online, cluster_ids, protos.clusters, hp.tau_p);
    switch (hp.baseline_variant) {
        case BaselineVariant::ClusterOnly:
            break;
        case BaselineVariant::ClusterHard: {
            const LossResult hard = loss_hard(online, momentum, cluster_ids);
            res.value += hard.value;
            res.grad += hard.grad;
            break;
        }
        case BaselineVariant::ClusterCam: {
            LossResult cam = loss_cam(online, cluster_ids, protos.cameras, hp.tau_c, hp.n_neg);
            res.value += hp.lambda_cam * cam.value;
            cam.grad *= hp.lambda_cam;
            res.grad += cam.grad;
            break;
        }
    }
    return res;
}

// Old prototypes first, current-domain prototypes after: the rehearsal loss
// contrasts against every prototype seen so far.
inline Matrix stacked_prototypes(const MemoryBank& bank, const Matrix& current_protos) {
    const int d = current_protos.cols;
    Matrix all(static_cast<int>(bank.clusters.size()) + current_protos.rows, d);
    for (size_t c = 0; c < bank.clusters.size(); ++c) {
        if (static_cast<int>(bank.clusters[c].prototype.size()) != d)
            throw TrainError("stacked_prototypes: dimension mismatch");
        double* row = all.row(static_cast<int>(c));
        for (int k = 0; k < d; ++k) row[k] = bank.clusters[c].prototype[k];
    }
    for (int c = 0; c < current_protos.rows; ++c) {
        double* row = all.row(static_cast<int>(bank.clusters.size()) + c);
        const double* src = current_protos.row(c);
        for (int k = 0; k < d; ++k) row[k] = src[k];
    }
    return all;
}

// Rehearsal: memory images are pulled toward their stored prototype against
// the union of old and current prototypes. Same form as loss_cluster.
inline LossResult loss_old(const Matrix& online_old, const std::vector<int>& memory_cluster_ids,
                           const Matrix& all_protos, double tau_p) {
    return loss_cluster(online_old, memory_cluster_ids, all_protos, tau_p);
}

// Pairwise similarity distributions over a batch, self-pairs included.
//   P_ij = softmax_j(<f(x_i|theta), f(x_j|theta_m)> / tau_s)
//   Q_ij = softmax_j(<f(x_i|theta_f), f(x_j|theta_f)> / tau_s)
struct SimDistributions {
    Matrix p;
    Matrix q;
    Matrix momentum;  // kept for the gradient of loss_sim
    double tau_s = 0.0;
};

inline SimDistributions sim_distributions(const Matrix& online, const Matrix& momentum, const Matrix& frozen,
                                          double tau_s) {
    const int n = online.rows;
    const int d = online.cols;
    if (!online.same_shape(momentum) || !online.same_shape(frozen))
        throw TrainError("sim_distributions: embedding shape mismatch");

    SimDistributions sd;
    sd.p = Matrix(n, n);
    sd.q = Matrix(n, n);
    sd.momentum = momentum;
    sd.tau_s = tau_s;
    std::vector<double> logits(n);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) logits[j] = dot(online.row(i), momentum.row(j), d) / tau_s;
        const std::vector<double> pi = detail::softmax(logits);
        for (int j = 0; j < n; ++j) sd.p(i, j) = pi[j];
        for (int j = 0; j < n; ++j) logits[j] = dot(frozen.row(i), frozen.row(j), d) / tau_s;
        const std::vector<double> qi = detail::softmax(logits);
        for (int j = 0; j < n; ++j) sd.q(i, j) = qi[j];
    }
    return sd;
}

// L_sim = mean_i KL(P_i || Q_i). The gradient flows only through the online
// embeddings inside P; row i of the result is
//   (1 / (N tau_s)) sum_j P_ij (ln(P_ij/Q_ij) - KL_i) m_j.
inline LossResult loss_sim(const SimDistributions& sd) {
    const int n = sd.p.rows;
    const int c = sd.p.cols;  // reference set size; equals n in training use
    const int d = sd.momentum.cols;

    LossResult res;
    res.grad = Matrix(n, d);
    std::vector<double> log_ratio(c);
    for (int i = 0; i < n; ++i) {
        double kl = 0.0;
        for (int j = 0; j < c; ++j) {
            log_ratio[j] = std::log(sd.p(i, j)) - std::log(sd.q(i, j));
            kl += sd.p(i, j) * log_ratio[j];
        }
        res.value += kl;
        double* g = res.grad.row(i);
        for (int j = 0; j < c; ++j) {
            const double w = sd.p(i, j) * (log_ratio[j] - kl) / (n * sd.tau_s);
            const double* m = sd.momentum.row(j);
            for (int k = 0; k < d; ++k) g[k] += w * m[k];
        }
    }
    res.value /= n;
    return res;
}

// Combined objective over one step: current-domain batch plus, once a past
// domain exists, a batch of memory images carrying the rehearsal loss, the
// similarity constraint, or both. grad_old is the total gradient for that
// batch and already folds in lambda_sim * grad(L_sim). Either part may be
// absent (ablations disable them independently).
struct OverallLoss {
    double current = 0.0;
    double old = 0.0;
    double sim = 0.0;
    double total = 0.0;
    Matrix grad_current;
    Matrix grad_old;
    bool has_old = false;
};

inline OverallLoss loss_overall(const LossResult& current, const LossResult* old_part, const LossResult* sim_part,
                                double lambda_sim) {
    OverallLoss out;
    out.current = current.value;
    out.grad_current = current.grad;
    out.total = current.value;
    if (!old_part && !sim_part) return out;

    out.has_old = true;
    if (old_part && sim_part && !old_part->grad.same_shape(sim_part->grad))
        throw TrainError("loss_overall: rehearsal gradient shape mismatch");
    if (old_part) {
        out.old = old_part->value;
        out.total += old_part->value;
        out.grad_old = old_part->grad;
    }
    if (sim_part) {
        out.sim = sim_part->value;
        out.total += lambda_sim * sim_part->value;
        if (out.grad_old.data.empty()) out.grad_old = Matrix(sim_part->grad.rows, sim_part->grad.cols);
        for (size_t k = 0; k < out.grad_old.data.size(); ++k)
            out.grad_old.data[k] += lambda_sim * sim_part->grad.data[k];
    }
    return out;
}

}  // namespace ucr
