#pragma once

#include <cstdio>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <mutex>
#include <numeric>
#include <string>
#include <thread>
#include <vector>

#include "ucr/core.hpp"
#include "ucr/encoder.hpp"
#include "ucr/eval.hpp"
#include "ucr/losses.hpp"
#include "ucr/matrix.hpp"
#include "ucr/prototypes.hpp"
#include "ucr/pseudo_label.hpp"
#include "ucr/rng.hpp"
#include "ucr/synthdata.hpp"

namespace ucr {

// Sequential training over a domain stream. Per epoch: cluster the current
// domain on momentum embeddings, rebuild prototypes, then run contrastive
// iterations that mix the current batch with a rehearsal batch from memory.
// At every domain boundary the memory absorbs the finished domain and the
// momentum encoder becomes both the frozen expert and the new online start.

// Worker cap: UCR_THREADS wins, then hardware concurrency, floor of 1.
inline int ucr_thread_count() {
    if (const char* env = std::getenv("UCR_THREADS")) {
        const int n = std::atoi(env);
        if (n >= 1) return n;
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 1 : static_cast<int>(hw);
}

// Row-sharded batch embedding. Each output row depends only on its input
// row and the parameters, so the shard boundaries cannot change results.
inline Matrix encode_rows(const EncoderParams& params, const Matrix& features, int threads) {
    const int n = features.rows;
    if (threads <= 1 || n < 2 * threads) return encoder_forward(params, features);

    Matrix out(n, params.d_emb());
    std::vector<std::thread> pool;
    std::exception_ptr first_error;
    std::mutex error_mu;
    const int chunk = (n + threads - 1) / threads;
    for (int t = 0; t < threads; ++t) {
        const int lo = t * chunk;
        const int hi = std::min(n, lo + chunk);
        if (lo >= hi) break;
        pool.emplace_back([&, lo, hi]() {
            try {
                Matrix part(hi - lo, features.cols);
                for (int r = lo; r < hi; ++r)
                    for (int c = 0; c < features.cols; ++c) part(r - lo, c) = features(r, c);
                const Matrix emb = encoder_forward(params, part);
                for (int r = lo; r < hi; ++r)
                    for (int c = 0; c < emb.cols; ++c) out(r, c) = emb(r - lo, c);
            } catch (...) {
                std::lock_guard<std::mutex> lock(error_mu);
                if (!first_error) first_error = std::current_exception();
            }
        });
    }
    for (std::thread& th : pool) th.join();
    if (first_error) std::rethrow_exception(first_error);
    return out;
}

// Linear warmup to the base rate, constant afterwards.
struct LrSchedule {
    double base = 0.0;
    int warmup_epochs = 0;

    double at(int epoch) const {
        if (warmup_epochs <= 0) return base;
        const double ramp = static_cast<double>(epoch + 1) / warmup_epochs;
        return base * std::min(1.0, ramp);
    }
};

struct TrainOptions {
    bool use_old = true;   // rehearsal loss on memory images
    bool use_sim = true;   // pairwise similarity constraint on memory images
    MemoryPolicy memory_policy = MemoryPolicy::Nearest;
    bool normalize_prototypes = true;
    // When false, the similarity constraint reads momentum embeddings cached
    // at epoch start instead of recomputing them with the drifting encoder.
    bool sim_momentum_per_iteration = true;
    int eval_max_rank = 10;
};

struct MetricsRow {
    int domain_index = 0;
    int epoch = 0;
    int iter = 0;  // -1 marks an epoch skipped for lack of clusters
    double loss_current = 0.0;
    double loss_old = 0.0;
    double loss_sim = 0.0;
    double loss_overall = 0.0;
    double lr = 0.0;
    int num_clusters = 0;
};

inline void write_metrics_csv(const std::vector<MetricsRow>& rows, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write metrics csv: " + path);
    out << "domain_index,epoch,iter,loss_current,loss_old,loss_sim,loss_overall,lr,num_clusters\n";
    char buf[160];
    for (const MetricsRow& r : rows) {
        std::snprintf(buf, sizeof(buf), "%d,%d,%d,%.6f,%.6f,%.6f,%.6f,%.8f,%d", r.domain_index, r.epoch, r.iter,
                      r.loss_current, r.loss_old, r.loss_sim, r.loss_overall, r.lr, r.num_clusters);
        out << buf << '\n';
    }
    if (!out) throw DataError("write failed: " + path);
}

struct TrainState {
    EncoderSet encoders;
    MemoryBank bank;
    Rng root;
    int domains_done = 0;
    int skipped_epochs = 0;
    int commits_skipped = 0;

    TrainState(EncoderParams init, uint64_t seed) : encoders(std::move(init)), root(seed) {}
};

namespace detail {

inline std::vector<std::vector<int>> memory_pools(const MemoryBank& bank) {
    std::vector<std::vector<int>> pools;
    pools.reserve(bank.clusters.size());
    for (const MemoryCluster& c : bank.clusters) pools.push_back(c.image_indices);
    return pools;
}

inline Matrix memory_features(const MemoryBank& bank, const std::vector<int>& image_indices) {
    const int d = static_cast<int>(bank.images.front().features.size());
    Matrix m(static_cast<int>(image_indices.size()), d);
    for (size_t r = 0; r < image_indices.size(); ++r) {
        const MemoryImage& img = bank.images[image_indices[r]];
        for (int k = 0; k < d; ++k) m(static_cast<int>(r), k) = img.features[k];
    }
    return m;
}

}  // namespace detail

// One domain: epochs of (cluster, refresh prototypes, contrastive iterations)
// followed by the memory commit and the frozen-expert handoff.
inline void train_domain(TrainState& state, const Domain& domain, const std::vector<int>& train_indices,
                         int domain_index, const HyperParams& hp, const TrainOptions& opt,
                         std::vector<MetricsRow>& metrics) {
    if (train_indices.size() < 2) throw TrainError("train_domain: not enough training samples");
    const int threads = ucr_thread_count();
    const Matrix pool_features = gather_features(domain.samples, train_indices);
    std::vector<int> pool_cameras;
    for (int i : train_indices) pool_cameras.push_back(domain.samples[i].camera_id);

    Rng batch_rng = state.root.fork(2 * static_cast<uint64_t>(domain_index) + 1);
    Rng old_rng = state.root.fork(2 * static_cast<uint64_t>(domain_index) + 2);
    const LrSchedule schedule{hp.lr, hp.warmup_epochs};

    const bool have_memory = !state.bank.clusters.empty();
    const bool rehearse = have_memory && opt.use_old;
    const bool constrain_sim = have_memory && opt.use_sim && state.encoders.frozen.has_value();

    PseudoLabeling last_good;
    bool have_labeling = false;

    for (int epoch = 0; epoch < hp.epochs_per_domain; ++epoch) {
        const double lr_now = schedule.at(epoch);
        const Matrix momentum_pool = encode_rows(state.encoders.momentum, pool_features, threads);
        const PseudoLabeling labeling = pseudo_labels(momentum_pool, hp);
        if (labeling.num_clusters == 0) {
            ++state.skipped_epochs;
            MetricsRow row;
            row.domain_index = domain_index;
            row.epoch = epoch;
            row.iter = -1;
            row.lr = lr_now;
            metrics.push_back(row);
            continue;
        }
        last_good = labeling;
        have_labeling = true;

        const PrototypeMemory protos =
            refresh_prototype_memory(momentum_pool, labeling, pool_cameras, opt.normalize_prototypes);
        const Matrix all_protos =
            rehearse ? stacked_prototypes(state.bank, protos.clusters) : Matrix();

        // Epoch-start cache for the cheaper similarity variant.
        Matrix cached_memory_momentum;
        std::vector<int> all_memory_indices;
        if (constrain_sim && !opt.sim_momentum_per_iteration) {
            all_memory_indices.resize(state.bank.images.size());
            std::iota(all_memory_indices.begin(), all_memory_indices.end(), 0);
            cached_memory_momentum = encode_rows(
                state.encoders.momentum, detail::memory_features(state.bank, all_memory_indices), threads);
        }

        for (int iter = 0; iter < hp.iters_per_epoch; ++iter) {
            const MiniBatch batch = sample_batch(labeling.members, hp.batch_current.first, hp.batch_current.second,
                                                 batch_rng);
            std::vector<int> feature_rows;
            for (int s : batch.sample_indices) feature_rows.push_back(train_indices[s]);
            const Matrix batch_features = gather_features(domain.samples, feature_rows);

            ForwardCache cache;
            const Matrix online = encoder_forward(state.encoders.online, batch_features, &cache);
            Matrix momentum_batch;
            if (hp.baseline_variant == BaselineVariant::ClusterHard)
                momentum_batch = encoder_forward(state.encoders.momentum, batch_features);
            const LossResult current = loss_current(online, momentum_batch.rows ? momentum_batch : online,
                                                    batch.group_ids, protos, hp);

            Gradients grads = encoder_backward(state.encoders.online, cache, current.grad);
            OverallLoss overall;
            if (rehearse || constrain_sim) {
                const MiniBatch old_batch =
                    sample_batch(detail::memory_pools(state.bank), hp.batch_old.first, hp.batch_old.second, old_rng);
                const Matrix old_features = detail::memory_features(state.bank, old_batch.sample_indices);
                ForwardCache old_cache;
                const Matrix old_online = encoder_forward(state.encoders.online, old_features, &old_cache);

                LossResult old_loss;
                LossResult sim_loss;
                if (rehearse) old_loss = loss_old(old_online, old_batch.group_ids, all_protos, hp.tau_p);
                if (constrain_sim) {
                    Matrix old_momentum;
                    if (opt.sim_momentum_per_iteration) {
                        old_momentum = encoder_forward(state.encoders.momentum, old_features);
                    } else {
                        old_momentum = Matrix(old_online.rows, old_online.cols);
                        for (int r = 0; r < old_momentum.rows; ++r)
                            for (int c = 0; c < old_momentum.cols; ++c)
                                old_momentum(r, c) = cached_memory_momentum(old_batch.sample_indices[r], c);
                    }
                    const Matrix old_frozen = encoder_forward(*state.encoders.frozen, old_features);
                    const SimDistributions sd = sim_distributions(old_online, old_momentum, old_frozen, hp.tau_s);
                    sim_loss = loss_sim(sd);
                }
                overall = loss_overall(current, rehearse ? &old_loss : nullptr,
                                       constrain_sim ? &sim_loss : nullptr, hp.lambda_sim);
                accumulate(grads, encoder_backward(state.encoders.online, old_cache, overall.grad_old));
            } else {
                overall = loss_overall(current, nullptr, nullptr, hp.lambda_sim);
            }

            adam_step(state.encoders, grads, lr_now, hp.weight_decay);
            ema_update(state.encoders, hp.alpha);

            MetricsRow row;
            row.domain_index = domain_index;
            row.epoch = epoch;
            row.iter = iter;
            row.loss_current = overall.current;
            row.loss_old = overall.old;
            row.loss_sim = overall.sim;
            row.loss_overall = overall.total;
            row.lr = lr_now;
            row.num_clusters = labeling.num_clusters;
            metrics.push_back(row);
        }
    }

    // Commit with a fresh labeling under the final momentum encoder; if that
    // collapses, fall back to the last epoch's cluster memberships.
    {
        Rng commit_rng = state.root.fork(5000 + static_cast<uint64_t>(domain_index));
        const Matrix momentum_pool = encode_rows(state.encoders.momentum, pool_features, threads);
        PseudoLabeling commit_labels = pseudo_labels(momentum_pool, hp);
        if (commit_labels.num_clusters == 0 && have_labeling) commit_labels = last_good;
        if (commit_labels.num_clusters > 0) {
            std::vector<Sample> pool_samples;
            for (int i : train_indices) pool_samples.push_back(domain.samples[i]);
            commit_domain_memory(state.bank, domain_index, pool_samples, momentum_pool, commit_labels, hp.k_mem,
                                 opt.memory_policy, commit_rng, opt.normalize_prototypes);
        } else {
            ++state.commits_skipped;
        }
    }

    snapshot_frozen(state.encoders);
    state.domains_done += 1;
}

// Retrieval check of one domain's split under the momentum encoder.
inline EvalRow evaluate_domain(const TrainState& state, const GeneratedDomain& gd, int step, int max_rank) {
    const int threads = ucr_thread_count();
    const Matrix q_feat = gather_features(gd.domain.samples, gd.query_indices);
    const Matrix g_feat = gather_features(gd.domain.samples, gd.gallery_indices);
    const Matrix q_emb = encode_rows(state.encoders.momentum, q_feat, threads);
    const Matrix g_emb = encode_rows(state.encoders.momentum, g_feat, threads);

    auto meta = [&](const std::vector<int>& idx) {
        std::vector<RetrievalItem> items;
        for (int i : idx) {
            const Sample& s = gd.domain.samples[i];
            if (!s.gt_id) throw DataError("evaluate_domain: sample without ground-truth id in " + gd.domain.name);
            items.push_back({*s.gt_id, s.camera_id});
        }
        return items;
    };

    const EvalResult res = evaluate(q_emb, meta(gd.query_indices), g_emb, meta(gd.gallery_indices), max_rank);
    EvalRow row;
    row.split_name = gd.domain.name;
    row.step = step;
    row.mean_ap = res.mean_ap;
    row.rank1 = res.rank_at(1);
    row.rank5 = res.rank_at(5);
    row.rank10 = res.rank_at(10);
    row.skipped = res.skipped;
    return row;
}

struct TrainResult {
    std::vector<MetricsRow> metrics;
    std::vector<EvalRow> eval_rows;
    int skipped_epochs = 0;
    int commits_skipped = 0;
};

// Full stream: train every "train" domain in the order given, evaluating all
// splits after each domain boundary.
inline TrainResult train_stream(TrainState& state, const GeneratedStream& stream, const HyperParams& hp,
                                const TrainOptions& opt) {
    TrainResult result;
    int step = 0;
    for (size_t d = 0; d < stream.domains.size(); ++d) {
        const GeneratedDomain& gd = stream.domains[d];
        if (gd.kind != "train") continue;
        train_domain(state, gd.domain, gd.train_indices(), static_cast<int>(d), hp, opt, result.metrics);
        ++step;
        for (const GeneratedDomain& split : stream.domains)
            result.eval_rows.push_back(evaluate_domain(state, split, step, opt.eval_max_rank));
    }
    result.skipped_epochs = state.skipped_epochs;
    result.commits_skipped = state.commits_skipped;
    return result;
}

}  // namespace ucr
