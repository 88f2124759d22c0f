// Acceptance gate for the lifelong trainer. Each numbered check prints one
// PASS/FAIL line; the process exits nonzero if any check fails. Checks that
// train real streams also enforce their wall-clock budgets.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <deque>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "ucr/runner.hpp"

using namespace ucr;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

struct Outcome {
    bool pass = false;
    std::string detail;
};

Matrix random_unit_rows(int n, int d, uint64_t seed) {
    Rng rng(seed);
    Matrix m(n, d);
    for (double& v : m.data) v = rng.normal();
    for (int r = 0; r < n; ++r) {
        const double norm = l2_norm(m.row(r), d);
        for (int c = 0; c < d; ++c) m(r, c) /= norm;
    }
    return m;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

// ---------------------------------------------------------------------------
// 1. Loss gradients chained through the encoder vs central differences.

std::vector<double> flatten(const Gradients& g) {
    std::vector<double> out;
    for (const auto& layer : g.layers) {
        out.insert(out.end(), layer.w.data.begin(), layer.w.data.end());
        out.insert(out.end(), layer.b.begin(), layer.b.end());
    }
    return out;
}

double* param_entry(EncoderParams& p, size_t flat_idx) {
    for (auto& layer : p.layers) {
        if (flat_idx < layer.w.data.size()) return &layer.w.data[flat_idx];
        flat_idx -= layer.w.data.size();
        if (flat_idx < layer.b.size()) return &layer.b[flat_idx];
        flat_idx -= layer.b.size();
    }
    return nullptr;
}

// max over losses of ||g_analytic - g_fd|| / max(||g_fd||, eps)
template <typename MakeLoss>
double encoder_grad_error(const EncoderParams& params, const Matrix& feats, MakeLoss make) {
    ForwardCache cache;
    const Matrix emb = encoder_forward(params, feats, &cache);
    const LossResult loss = make(emb);
    const std::vector<double> analytic = flatten(encoder_backward(params, cache, loss.grad));

    EncoderParams probe = params;
    const double h = 1e-5;
    double diff2 = 0.0, ref2 = 0.0;
    for (size_t i = 0; i < analytic.size(); ++i) {
        double* entry = param_entry(probe, i);
        const double orig = *entry;
        *entry = orig + h;
        const double up = make(encoder_forward(probe, feats)).value;
        *entry = orig - h;
        const double dn = make(encoder_forward(probe, feats)).value;
        *entry = orig;
        const double fd = (up - dn) / (2.0 * h);
        diff2 += (analytic[i] - fd) * (analytic[i] - fd);
        ref2 += fd * fd;
    }
    return std::sqrt(diff2) / std::max(std::sqrt(ref2), 1e-12);
}

Outcome check_gradients() {
    const auto start = Clock::now();
    const int d_in = 8, d_emb = 6;
    Rng rng(101);
    const EncoderParams params = make_encoder(d_in, {12}, d_emb, rng);
    const EncoderParams momentum_params = make_encoder(d_in, {12}, d_emb, rng);
    const EncoderParams frozen_params = make_encoder(d_in, {12}, d_emb, rng);

    Matrix feats(6, d_in);
    for (double& v : feats.data) v = rng.normal();
    const std::vector<int> ids = {0, 1, 2, 0, 1, 2};
    const Matrix protos = random_unit_rows(4, d_emb, 102);

    // camera prototypes from a separate labelled pool
    const Matrix pool = random_unit_rows(18, d_emb, 103);
    PseudoLabeling pl;
    pl.labels.resize(18);
    std::vector<int> pool_cams(18);
    for (int i = 0; i < 18; ++i) {
        pl.labels[i] = i % 3;
        pool_cams[i] = i % 2;
    }
    pl.num_clusters = 3;
    pl.members.assign(3, {});
    for (int i = 0; i < 18; ++i) pl.members[pl.labels[i]].push_back(i);
    const CameraPrototypes cams = camera_prototypes(pool, pl, pool_cams);

    const Matrix momentum_emb = encoder_forward(momentum_params, feats);
    const Matrix frozen_emb = encoder_forward(frozen_params, feats);

    HyperParams hp;
    double worst = 0.0;
    std::string worst_name;
    auto track = [&](const char* name, double err) {
        if (err > worst) {
            worst = err;
            worst_name = name;
        }
    };

    track("cluster", encoder_grad_error(params, feats, [&](const Matrix& e) {
              return loss_cluster(e, ids, protos, hp.tau_p);
          }));
    track("cam", encoder_grad_error(params, feats, [&](const Matrix& e) {
              return loss_cam(e, ids, cams, hp.tau_c, 3);
          }));
    track("hard", encoder_grad_error(params, feats, [&](const Matrix& e) {
              return loss_hard(e, momentum_emb, ids);
          }));
    track("sim", encoder_grad_error(params, feats, [&](const Matrix& e) {
              return loss_sim(sim_distributions(e, momentum_emb, frozen_emb, hp.tau_s));
          }));

    // rehearsal target: old prototypes stacked before current ones
    MemoryBank bank;
    const Matrix old_protos = random_unit_rows(2, d_emb, 104);
    for (int c = 0; c < 2; ++c) {
        MemoryCluster mc;
        mc.domain_index = 0;
        mc.prototype.assign(old_protos.row(c), old_protos.row(c) + d_emb);
        bank.clusters.push_back(mc);
    }
    const Matrix all_protos = stacked_prototypes(bank, protos);
    track("old", encoder_grad_error(params, feats, [&](const Matrix& e) {
              return loss_old(e, std::vector<int>{0, 1, 2, 3, 4, 5}, all_protos, hp.tau_p);
          }));

    // the full per-iteration objective: current batch plus rehearsal batch
    {
        Matrix old_feats(5, d_in);
        Rng r2(105);
        for (double& v : old_feats.data) v = r2.normal();
        const std::vector<int> old_ids = {0, 1, 2, 3, 4};
        const double lambda = hp.lambda_sim;

        auto total_value = [&](EncoderParams& p) {
            const Matrix cur = encoder_forward(p, feats);
            const Matrix old_online = encoder_forward(p, old_feats);
            const Matrix old_m = encoder_forward(momentum_params, old_feats);
            const Matrix old_f = encoder_forward(frozen_params, old_feats);
            const LossResult c = loss_cluster(cur, ids, protos, hp.tau_p);
            const LossResult o = loss_old(old_online, old_ids, all_protos, hp.tau_p);
            const LossResult s = loss_sim(sim_distributions(old_online, old_m, old_f, hp.tau_s));
            return loss_overall(c, &o, &s, lambda).total;
        };

        ForwardCache cache_cur, cache_old;
        const Matrix cur = encoder_forward(params, feats, &cache_cur);
        const Matrix old_online = encoder_forward(params, old_feats, &cache_old);
        const Matrix old_m = encoder_forward(momentum_params, old_feats);
        const Matrix old_f = encoder_forward(frozen_params, old_feats);
        const LossResult c = loss_cluster(cur, ids, protos, hp.tau_p);
        const LossResult o = loss_old(old_online, old_ids, all_protos, hp.tau_p);
        const LossResult s = loss_sim(sim_distributions(old_online, old_m, old_f, hp.tau_s));
        const OverallLoss overall = loss_overall(c, &o, &s, hp.lambda_sim);
        Gradients grads = encoder_backward(params, cache_cur, overall.grad_current);
        accumulate(grads, encoder_backward(params, cache_old, overall.grad_old));
        const std::vector<double> analytic = flatten(grads);

        EncoderParams probe = params;
        const double h = 1e-5;
        double diff2 = 0.0, ref2 = 0.0;
        for (size_t i = 0; i < analytic.size(); ++i) {
            double* entry = param_entry(probe, i);
            const double orig = *entry;
            *entry = orig + h;
            const double up = total_value(probe);
            *entry = orig - h;
            const double dn = total_value(probe);
            *entry = orig;
            const double fd = (up - dn) / (2.0 * h);
            diff2 += (analytic[i] - fd) * (analytic[i] - fd);
            ref2 += fd * fd;
        }
        track("overall", std::sqrt(diff2) / std::max(std::sqrt(ref2), 1e-12));
    }

    const double elapsed = seconds_since(start);
    Outcome out;
    out.pass = worst < 1e-4 && elapsed < 60.0;
    std::ostringstream os;
    os << "worst rel err " << worst << " (" << worst_name << "), " << elapsed << "s";
    out.detail = os.str();
    return out;
}

// ---------------------------------------------------------------------------
// 2. Clustering, re-ranking and retrieval scoring vs independent oracles.

std::vector<std::vector<int>> oracle_rank(const Matrix& dist) {
    const int n = dist.rows;
    std::vector<std::vector<int>> rank(n, std::vector<int>(n));
    for (int i = 0; i < n; ++i) {
        std::vector<std::pair<double, int>> order;
        for (int j = 0; j < n; ++j) order.emplace_back(dist(i, j), j);
        std::sort(order.begin(), order.end());
        for (int j = 0; j < n; ++j) rank[i][j] = order[j].second;
    }
    return rank;
}

std::set<int> oracle_reciprocal(const std::vector<std::vector<int>>& rank, int i, int k) {
    std::set<int> out;
    for (int pos = 0; pos <= k; ++pos) {
        const int j = rank[i][pos];
        for (int q = 0; q <= k; ++q)
            if (rank[j][q] == i) {
                out.insert(j);
                break;
            }
    }
    return out;
}

Matrix oracle_rerank(const Matrix& dist, int k1, int k2) {
    const int n = dist.rows;
    const auto rank = oracle_rank(dist);
    const int half = static_cast<int>(std::lround(k1 / 2.0));

    Matrix v(n, n);
    for (int i = 0; i < n; ++i) {
        const std::set<int> base = oracle_reciprocal(rank, i, k1);
        std::set<int> expanded = base;
        for (int cand : base) {
            const std::set<int> cs = oracle_reciprocal(rank, cand, half);
            int common = 0;
            for (int c : cs)
                if (base.count(c)) ++common;
            if (common * 3 > static_cast<int>(cs.size()) * 2) expanded.insert(cs.begin(), cs.end());
        }
        double total = 0.0;
        for (int j : expanded) total += std::exp(-dist(i, j));
        for (int j : expanded) v(i, j) = std::exp(-dist(i, j)) / total;
    }
    if (k2 > 1) {
        Matrix vq(n, n);
        for (int i = 0; i < n; ++i)
            for (int pos = 0; pos < k2; ++pos)
                for (int j = 0; j < n; ++j) vq(i, j) += v(rank[i][pos], j) / k2;
        v = vq;
    }
    Matrix jac(n, n);
    for (int i = 0; i < n; ++i)
        for (int q = 0; q < n; ++q) {
            double tm = 0.0;
            for (int j = 0; j < n; ++j) tm += std::min(v(i, j), v(q, j));
            jac(i, q) = 1.0 - tm / (2.0 - tm);
        }
    for (int i = 0; i < n; ++i) {
        jac(i, i) = 0.0;
        for (int q = i + 1; q < n; ++q) {
            const double s = 0.5 * (jac(i, q) + jac(q, i));
            jac(i, q) = s;
            jac(q, i) = s;
        }
    }
    return jac;
}

std::vector<int> oracle_dbscan(const Matrix& dist, double eps, int min_pts) {
    const int n = dist.rows;
    std::vector<std::set<int>> neigh(n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            if (i != j && dist(i, j) <= eps) neigh[i].insert(j);
    std::vector<bool> core(n);
    for (int i = 0; i < n; ++i) core[i] = static_cast<int>(neigh[i].size()) + 1 >= min_pts;

    std::vector<int> label(n, -3);
    int next_raw = 0;
    for (int i = 0; i < n; ++i) {
        if (label[i] != -3) continue;
        if (!core[i]) {
            label[i] = -1;
            continue;
        }
        const int cl = next_raw++;
        label[i] = cl;
        std::deque<int> work(neigh[i].begin(), neigh[i].end());
        while (!work.empty()) {
            const int q = work.front();
            work.pop_front();
            if (label[q] == -1) label[q] = cl;
            if (label[q] != -3) continue;
            label[q] = cl;
            if (core[q])
                for (int j : neigh[q]) work.push_back(j);
        }
    }
    std::vector<int> remap(next_raw, -1);
    int out = 0;
    for (int i = 0; i < n; ++i)
        if (label[i] >= 0 && remap[label[i]] < 0) remap[label[i]] = out++;
    for (int i = 0; i < n; ++i)
        if (label[i] >= 0) label[i] = remap[label[i]];
    return label;
}

double oracle_map(const Matrix& qe, const std::vector<RetrievalItem>& qm, const Matrix& ge,
                  const std::vector<RetrievalItem>& gm, int* skipped) {
    double total = 0.0;
    int counted = 0;
    *skipped = 0;
    for (int qi = 0; qi < qe.rows; ++qi) {
        std::vector<std::pair<double, int>> scored;
        for (int g = 0; g < ge.rows; ++g) {
            if (gm[g].gt_id == qm[qi].gt_id && gm[g].camera_id == qm[qi].camera_id) continue;
            scored.emplace_back(-dot(qe.row(qi), ge.row(g), qe.cols), g);
        }
        std::sort(scored.begin(), scored.end());
        int rel = 0;
        for (const auto& s : scored)
            if (gm[s.second].gt_id == qm[qi].gt_id) ++rel;
        if (rel == 0) {
            ++*skipped;
            continue;
        }
        double ap = 0.0;
        int hits = 0;
        for (size_t k = 0; k < scored.size(); ++k)
            if (gm[scored[k].second].gt_id == qm[qi].gt_id) ap += static_cast<double>(++hits) / (k + 1);
        total += ap / rel;
        ++counted;
    }
    return counted > 0 ? total / counted : 0.0;
}

Outcome check_oracles() {
    double worst = 0.0;
    int mismatches = 0;

    for (uint64_t seed : {201ull, 202ull, 203ull}) {
        const Matrix emb = random_unit_rows(45, 8, seed);
        const DistanceMatrix dist = cosine_distance_matrix(emb);
        for (auto [k1, k2] : {std::pair{8, 3}, std::pair{12, 5}, std::pair{10, 1}}) {
            const Matrix fast = rerank_jaccard(dist, k1, k2);
            const Matrix slow = oracle_rerank(dist, k1, k2);
            for (size_t i = 0; i < fast.data.size(); ++i)
                worst = std::max(worst, std::abs(fast.data[i] - slow.data[i]));
        }
        for (double eps : {0.2, 0.35, 0.5})
            for (int min_pts : {2, 4}) {
                Rng r(seed * 7 + static_cast<uint64_t>(eps * 100) + min_pts);
                const int n = 30;
                Matrix d(n, n);
                for (int i = 0; i < n; ++i)
                    for (int j = i + 1; j < n; ++j) {
                        const double v = r.next_double();
                        d(i, j) = v;
                        d(j, i) = v;
                    }
                if (dbscan(d, eps, min_pts) != oracle_dbscan(d, eps, min_pts)) ++mismatches;
            }

        Rng meta_rng(seed + 500);
        const Matrix qe = random_unit_rows(15, 6, seed + 10);
        const Matrix ge = random_unit_rows(50, 6, seed + 20);
        std::vector<RetrievalItem> qm(15), gm(50);
        for (auto& it : qm) it = {meta_rng.uniform_int(7), meta_rng.uniform_int(3)};
        for (auto& it : gm) it = {meta_rng.uniform_int(7), meta_rng.uniform_int(3)};
        int oracle_skipped = 0;
        const double want = oracle_map(qe, qm, ge, gm, &oracle_skipped);
        const EvalResult got = evaluate(qe, qm, ge, gm, 10);
        worst = std::max(worst, std::abs(got.mean_ap - want));
        if (got.skipped != oracle_skipped) ++mismatches;
    }

    Outcome out;
    out.pass = worst < 1e-10 && mismatches == 0;
    std::ostringstream os;
    os << "max numeric gap " << worst << ", label mismatches " << mismatches;
    out.detail = os.str();
    return out;
}

// ---------------------------------------------------------------------------
// 3. Frozen analytic values.

Outcome check_analytic_values() {
    std::ostringstream os;
    bool pass = true;
    auto expect = [&](const char* name, double got, double want) {
        const bool good = std::abs(got - want) < 1e-9;
        if (!good) {
            pass = false;
            os << name << " got " << got << " want " << want << "; ";
        }
    };

    expect("ap", average_precision({true, false, true, false, false}, 2), 5.0 / 6.0);

    Matrix online(1, 2);
    online(0, 0) = 1.0;
    Matrix protos(2, 2);
    protos(0, 1) = 1.0;
    protos(1, 1) = -1.0;
    expect("equal-logit", loss_cluster(online, {0}, protos, 0.5).value, std::log(2.0));

    Matrix o(3, 2), m(3, 2);
    o(0, 0) = 1.0;
    o(1, 0) = 1.0;
    o(2, 1) = 1.0;
    m(0, 0) = 1.0;
    m(1, 0) = 1.0;
    m(2, 1) = 1.0;
    expect("hard", loss_hard(o, m, {0, 0, 1}).value, -std::log(std::exp(1.0) / (std::exp(1.0) + 1.0)));

    SimDistributions sd;
    sd.p = Matrix(1, 2);
    sd.q = Matrix(1, 2);
    sd.momentum = Matrix(1, 2);
    sd.tau_s = 0.2;
    sd.p(0, 0) = 0.5;
    sd.p(0, 1) = 0.5;
    sd.q(0, 0) = 0.9;
    sd.q(0, 1) = 0.1;
    expect("kl", loss_sim(sd).value, 0.5 * std::log(25.0 / 9.0));

    Outcome out;
    out.pass = pass;
    out.detail = pass ? "ap 5/6, ln 2, softmax margin, kl all exact" : os.str();
    return out;
}

// ---------------------------------------------------------------------------
// 4. Momentum update follows its closed form for a constant online encoder.

Outcome check_ema_closed_form() {
    Rng rng(401);
    EncoderSet set(make_encoder(5, {7}, 4, rng));
    // drive momentum away from online first so the gap is nontrivial
    for (auto& layer : set.momentum.layers)
        for (double& w : layer.w.data) w += 0.5;

    const EncoderParams theta = set.online;
    const EncoderParams m0 = set.momentum;
    const double alpha = 0.99;

    double worst = 0.0;
    int t = 0;
    for (int target : {1, 10, 100, 1000}) {
        for (; t < target; ++t) ema_update(set, alpha);
        const double at = std::pow(alpha, target);
        for (size_t l = 0; l < theta.layers.size(); ++l) {
            for (size_t k = 0; k < theta.layers[l].w.data.size(); ++k) {
                const double want =
                    at * (m0.layers[l].w.data[k] - theta.layers[l].w.data[k]) + theta.layers[l].w.data[k];
                worst = std::max(worst, std::abs(set.momentum.layers[l].w.data[k] - want));
            }
            for (size_t k = 0; k < theta.layers[l].b.size(); ++k) {
                const double want = at * (m0.layers[l].b[k] - theta.layers[l].b[k]) + theta.layers[l].b[k];
                worst = std::max(worst, std::abs(set.momentum.layers[l].b[k] - want));
            }
        }
    }

    Outcome out;
    out.pass = worst < 1e-9;
    std::ostringstream os;
    os << "max deviation from closed form over 1000 steps: " << worst;
    out.detail = os.str();
    return out;
}

// ---------------------------------------------------------------------------
// 5. Memory bank invariants across keep sizes and policies.

Outcome check_memory_bank() {
    std::ostringstream os;
    bool pass = true;
    auto fail = [&](const std::string& why) {
        pass = false;
        os << why << "; ";
    };

    const int n = 18, d = 5;
    const Matrix emb = random_unit_rows(n, d, 501);
    PseudoLabeling pl;
    pl.labels.assign(n, -1);
    pl.members = {{}, {}, {}};
    for (int i = 0; i < 15; ++i) {
        const int c = i < 5 ? 0 : (i < 8 ? 1 : 2);  // sizes 5, 3, 7
        pl.labels[i] = c;
        pl.members[c].push_back(i);
    }
    pl.num_clusters = 3;
    std::vector<Sample> samples(n);
    for (int i = 0; i < n; ++i) {
        samples[i].features.assign(d, static_cast<float>(i));
        samples[i].camera_id = i % 2;
    }
    const Matrix protos = cluster_prototypes(emb, pl);
    auto ranked = [&](int cluster) {
        std::vector<std::pair<double, int>> sc;
        for (int idx : pl.members[cluster])
            sc.emplace_back(1.0 - dot(emb.row(idx), protos.row(cluster), d), idx);
        std::sort(sc.begin(), sc.end());
        return sc;
    };
    auto stored = [&](const MemoryBank& bank, int cluster) {
        std::set<int> got;
        for (int img : bank.clusters[cluster].image_indices)
            got.insert(static_cast<int>(bank.images[img].features[0]));
        return got;
    };

    for (int k_mem : {1, 2, 4, 8}) {
        MemoryBank near_bank, far_bank;
        Rng r1(502), r2(502);
        commit_domain_memory(near_bank, 3, samples, emb, pl, k_mem, MemoryPolicy::Nearest, r1);
        commit_domain_memory(far_bank, 3, samples, emb, pl, k_mem, MemoryPolicy::Farthest, r2);

        if (near_bank.clusters.size() != 3) fail("cluster count off at k=" + std::to_string(k_mem));
        size_t total = 0;
        for (int c = 0; c < 3; ++c) {
            const size_t want = std::min<size_t>(k_mem, pl.members[c].size());
            total += want;
            if (near_bank.clusters[c].image_indices.size() != want)
                fail("keep size off at k=" + std::to_string(k_mem));
            if (near_bank.clusters[c].domain_index != 3) fail("domain tag off");

            const auto sc = ranked(c);
            std::set<int> want_near, want_far;
            for (size_t t = 0; t < want; ++t) {
                want_near.insert(sc[t].second);
                want_far.insert(sc[sc.size() - 1 - t].second);
            }
            if (stored(near_bank, c) != want_near) fail("nearest picks wrong at k=" + std::to_string(k_mem));
            if (stored(far_bank, c) != want_far) fail("farthest picks wrong at k=" + std::to_string(k_mem));
        }
        if (near_bank.images.size() != total) fail("image total off at k=" + std::to_string(k_mem));
        for (const auto& img : near_bank.images)
            if (img.features.size() != static_cast<size_t>(d)) fail("image dim off");

        // policies must actually differ once clusters overflow the keep size
        if (k_mem <= 2 && stored(near_bank, 2) == stored(far_bank, 2)) fail("policies indistinct");
    }

    // random policy: reproducible, in-cluster, no duplicates
    MemoryBank ra, rb;
    Rng s1(77), s2(77);
    commit_domain_memory(ra, 0, samples, emb, pl, 4, MemoryPolicy::Random, s1);
    commit_domain_memory(rb, 0, samples, emb, pl, 4, MemoryPolicy::Random, s2);
    for (int c = 0; c < 3; ++c) {
        if (stored(ra, c) != stored(rb, c)) fail("random policy not reproducible");
        std::set<int> member_set(pl.members[c].begin(), pl.members[c].end());
        for (int idx : stored(ra, c))
            if (!member_set.count(idx)) fail("random pick outside cluster");
        if (ra.clusters[c].image_indices.size() != std::min<size_t>(4, pl.members[c].size()))
            fail("random keep size off");
    }

    Outcome out;
    out.pass = pass;
    out.detail = pass ? "keep sizes, selections and tags correct for k in {1,2,4,8}" : os.str();
    return out;
}

// ---------------------------------------------------------------------------
// 6 and 8. Directional training effects on the synthetic stream.

struct AblationStats {
    double base = 0.0;
    double rehearsal = 0.0;
    double similarity = 0.0;
    double full = 0.0;
};

AblationStats ablation_means(const std::vector<AblationRun>& runs, const std::string& split, int final_step) {
    AblationStats s;
    s.base = first_domain_final_map(runs, "baseline", split, final_step);
    s.rehearsal = first_domain_final_map(runs, "rehearsal", split, final_step);
    s.similarity = first_domain_final_map(runs, "similarity", split, final_step);
    s.full = first_domain_final_map(runs, "full", split, final_step);
    return s;
}

Outcome check_forward_ablation(const GeneratedStream& stream, const std::vector<uint64_t>& seeds) {
    const auto start = Clock::now();
    const auto runs = run_ablation(stream, desk_hyperparams(), TrainOptions{}, seeds);
    const double elapsed = seconds_since(start);

    const std::string split = first_trained_split(stream);
    const int final_step = stream.num_train();
    const AblationStats s = ablation_means(runs, split, final_step);

    Outcome out;
    out.pass = (s.full - s.base >= 0.05) && (s.rehearsal - s.base >= 0.02) &&
               (s.similarity - s.base >= 0.02) && elapsed < 600.0;
    std::ostringstream os;
    os.precision(3);
    os << std::fixed << split << " final mAP: base " << s.base << ", rehearsal " << s.rehearsal
       << ", similarity " << s.similarity << ", full " << s.full << " (" << elapsed << "s)";
    out.detail = os.str();
    return out;
}

Outcome check_reversed_ablation(const GeneratedStream& stream, const std::vector<uint64_t>& seeds) {
    const auto start = Clock::now();
    const GeneratedStream reversed = reversed_train_order(stream);
    const std::string split = first_trained_split(reversed);
    const int final_step = reversed.num_train();

    HyperParams hp = desk_hyperparams();
    TrainOptions opt;
    double base = 0.0, full = 0.0;
    for (uint64_t seed : seeds) {
        hp.seed = seed;
        opt.use_old = false;
        opt.use_sim = false;
        base += map_at(run_stream(reversed, hp, opt).result.eval_rows, split, final_step);
        opt.use_old = true;
        opt.use_sim = true;
        full += map_at(run_stream(reversed, hp, opt).result.eval_rows, split, final_step);
    }
    base /= seeds.size();
    full /= seeds.size();

    Outcome out;
    out.pass = full - base >= 0.03;
    std::ostringstream os;
    os.precision(3);
    os << std::fixed << split << " final mAP: base " << base << ", full " << full << " ("
       << seconds_since(start) << "s)";
    out.detail = os.str();
    return out;
}

// ---------------------------------------------------------------------------
// 7. Bytewise reproducibility of a full run.

Outcome check_determinism(const fs::path& dir) {
    StreamSpec spec;
    spec.num_train_domains = 2;
    spec.num_unseen_domains = 0;
    spec.ids_per_domain = 16;
    spec.samples_per_id = 12;
    spec.eval_ids = 6;
    spec.seed = 5;
    const GeneratedStream stream = generate_stream(spec);

    HyperParams hp = desk_hyperparams();
    hp.epochs_per_domain = 3;
    hp.iters_per_epoch = 10;

    const fs::path a = dir / "det_a";
    const fs::path b = dir / "det_b";
    for (int i = 0; i < 2; ++i) {
        const RunOutput run = run_stream(stream, hp, TrainOptions{});
        write_run_outputs(run, hp, TrainOptions{}, "determinism probe", (i == 0 ? a : b).string());
    }

    const bool metrics_same = slurp(a / "metrics.csv") == slurp(b / "metrics.csv");
    const bool encoder_same = slurp(a / "encoder.ucrw") == slurp(b / "encoder.ucrw");
    const bool memory_same = slurp(a / "memory.ucrm") == slurp(b / "memory.ucrm");
    const bool eval_same = slurp(a / "eval.csv") == slurp(b / "eval.csv");
    const bool nonempty = !slurp(a / "metrics.csv").empty() && !slurp(a / "encoder.ucrw").empty();

    Outcome out;
    out.pass = metrics_same && encoder_same && memory_same && eval_same && nonempty;
    out.detail = out.pass ? "metrics, eval, encoder and memory bytes identical across reruns"
                          : std::string("mismatch in") + (metrics_same ? "" : " metrics") +
                                (encoder_same ? "" : " encoder") + (memory_same ? "" : " memory") +
                                (eval_same ? "" : " eval");
    return out;
}

// ---------------------------------------------------------------------------
// 9. Binary formats round-trip bit-exactly with distinct failure modes.

Outcome check_formats(const fs::path& dir) {
    std::ostringstream os;
    bool pass = true;
    auto fail = [&](const std::string& why) {
        pass = false;
        os << why << "; ";
    };

    // encoder checkpoints
    Rng rng(901);
    const EncoderParams params = make_encoder(6, {9}, 4, rng);
    const fs::path w1 = dir / "fmt1.ucrw";
    const fs::path w2 = dir / "fmt2.ucrw";
    save_checkpoint(params, w1.string());
    const EncoderParams back = load_checkpoint(w1.string());
    save_checkpoint(back, w2.string());
    if (slurp(w1) != slurp(w2)) fail("checkpoint bytes drift");

    // feature files
    StreamSpec spec;
    spec.num_train_domains = 1;
    spec.num_unseen_domains = 0;
    spec.ids_per_domain = 4;
    spec.samples_per_id = 3;
    spec.eval_ids = 1;
    spec.queries_per_id = 1;
    spec.d_in = 6;
    const GeneratedStream stream = generate_stream(spec);
    const fs::path f1 = dir / "fmt.ucrf";
    write_features(stream.domains[0].domain.samples, f1.string());
    const auto rows = read_features(f1.string());
    bool feat_ok = rows.size() == stream.domains[0].domain.samples.size();
    for (size_t i = 0; feat_ok && i < rows.size(); ++i)
        feat_ok = rows[i] == stream.domains[0].domain.samples[i].features;
    if (!feat_ok) fail("feature rows drift");

    // memory banks
    const Matrix emb = random_unit_rows(6, 4, 902);
    PseudoLabeling pl;
    pl.labels = {0, 0, 0, 1, 1, 1};
    pl.num_clusters = 2;
    pl.members = {{0, 1, 2}, {3, 4, 5}};
    std::vector<Sample> samples(6);
    for (int i = 0; i < 6; ++i) samples[i].features.assign(4, 0.5f * i);
    MemoryBank bank;
    Rng r2(903);
    commit_domain_memory(bank, 0, samples, emb, pl, 2, MemoryPolicy::Nearest, r2);
    const fs::path m1 = dir / "fmt1.ucrm";
    const fs::path m2 = dir / "fmt2.ucrm";
    save_memory(bank, m1.string());
    save_memory(load_memory(m1.string()), m2.string());
    if (slurp(m1) != slurp(m2)) fail("memory bytes drift");

    // every format reports bad magic and bad version differently
    auto probe_errors = [&](const std::string& tag, auto loader) {
        const fs::path magic_path = dir / (tag + "_magic.bin");
        {
            std::ofstream f(magic_path, std::ios::binary);
            f.write("WHAT\x01\x00\x00\x00\x00\x00\x00\x00\x00\x00\x00\x00", 16);
        }
        const fs::path version_path = dir / (tag + "_version.bin");
        {
            std::ofstream f(version_path, std::ios::binary);
            const char* magic = tag == "ucrw" ? "UCRW" : (tag == "ucrf" ? "UCRF" : "UCRM");
            f.write(magic, 4);
            const uint32_t vals[5] = {99, 0, 0, 0, 0};
            f.write(reinterpret_cast<const char*>(vals), sizeof(vals));
        }
        std::string magic_msg, version_msg;
        try {
            loader(magic_path.string());
            fail(tag + " accepted bad magic");
        } catch (const DataError& e) {
            magic_msg = e.what();
        }
        try {
            loader(version_path.string());
            fail(tag + " accepted bad version");
        } catch (const DataError& e) {
            version_msg = e.what();
        }
        if (magic_msg.find("magic") == std::string::npos) fail(tag + " magic error unclear");
        if (version_msg.find("version") == std::string::npos) fail(tag + " version error unclear");
        if (magic_msg == version_msg) fail(tag + " failure modes indistinct");
    };
    probe_errors("ucrw", [](const std::string& p) { load_checkpoint(p); });
    probe_errors("ucrf", [](const std::string& p) { read_features(p); });
    probe_errors("ucrm", [](const std::string& p) { load_memory(p); });

    Outcome out;
    out.pass = pass;
    out.detail = pass ? "checkpoint, feature and memory formats stable with distinct error modes"
                      : os.str();
    return out;
}

}  // namespace

int main() {
    const fs::path workdir = fs::temp_directory_path() / "ucr_acceptance";
    fs::remove_all(workdir);
    fs::create_directories(workdir);

    const GeneratedStream stream = generate_stream(StreamSpec{});  // the stock benchmark stream
    const std::vector<uint64_t> seeds = {0, 1, 2, 3, 4};

    int index = 0, passed = 0;
    auto report = [&](const char* name, const Outcome& o) {
        ++index;
        std::printf("[%d/9] %s %s (%s)\n", index, o.pass ? "PASS" : "FAIL", name, o.detail.c_str());
        std::fflush(stdout);
        if (o.pass) ++passed;
    };

    report("loss gradients through the encoder match finite differences", check_gradients());
    report("clustering, re-ranking and retrieval match independent oracles", check_oracles());
    report("hand-computed loss and metric values reproduce exactly", check_analytic_values());
    report("momentum tracking follows its closed form", check_ema_closed_form());
    report("memory bank honours keep sizes and selection policies", check_memory_bank());
    report("rehearsal and similarity each lift first-domain retention", check_forward_ablation(stream, seeds));
    report("identical configs reproduce identical artifacts", check_determinism(workdir));
    report("the full method survives a reversed domain order", check_reversed_ablation(stream, seeds));
    report("binary formats round-trip with distinct failure modes", check_formats(workdir));

    fs::remove_all(workdir);
    std::printf("%d/9 checks passed\n", passed);
    return passed == 9 ? 0 : 1;
}
