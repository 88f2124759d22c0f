#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "ucr/core.hpp"
#include "ucr/trainer.hpp"

namespace ucr {

// Dataset-level orchestration shared by the command-line tool and the
// acceptance suite: build a fresh state, train a whole stream, write the
// artifacts, and run ablation grids.

constexpr int kHiddenWidth = 64;
constexpr int kEmbeddingDim = 32;

// Small-run settings, mirrored by configs/desk_scale.json: a short schedule
// with a faster-moving momentum encoder and clustering neighbourhoods sized
// for 12-sample identities.
inline HyperParams desk_hyperparams() {
    HyperParams hp;
    hp.epochs_per_domain = 10;
    hp.iters_per_epoch = 50;
    hp.warmup_epochs = 3;
    hp.alpha = 0.99;
    hp.lr = 2e-3;
    hp.rerank_k1 = 10;
    hp.rerank_k2 = 4;
    hp.dbscan_eps = 0.5;
    return hp;
}

inline TrainState make_train_state(int d_in, const HyperParams& hp) {
    Rng root(hp.seed);
    Rng init_rng = root.fork(0);
    EncoderParams enc = make_encoder(d_in, {kHiddenWidth, kHiddenWidth}, kEmbeddingDim, init_rng);
    return TrainState(std::move(enc), hp.seed);
}

struct RunOutput {
    TrainState state;
    TrainResult result;
};

inline RunOutput run_stream(const GeneratedStream& stream, const HyperParams& hp, const TrainOptions& opt) {
    validate_hyperparams(hp);
    if (stream.num_train() == 0) throw DataError("run_stream: no train domains in stream");
    RunOutput out{make_train_state(stream.d_in, hp), {}};
    out.result = train_stream(out.state, stream, hp, opt);
    return out;
}

inline nlohmann::json options_to_json(const TrainOptions& opt) {
    nlohmann::json j;
    j["use_old"] = opt.use_old;
    j["use_sim"] = opt.use_sim;
    j["memory_policy"] = to_string(opt.memory_policy);
    j["normalize_prototypes"] = opt.normalize_prototypes;
    j["sim_momentum_per_iteration"] = opt.sim_momentum_per_iteration;
    return j;
}

// metrics.csv, eval.csv, the momentum encoder, the memory bank, and a
// manifest describing exactly what ran.
inline void write_run_outputs(const RunOutput& run, const HyperParams& hp, const TrainOptions& opt,
                              const std::string& dataset_desc, const std::string& outdir) {
    std::filesystem::create_directories(outdir);
    write_metrics_csv(run.result.metrics, outdir + "/metrics.csv");
    write_eval_csv(run.result.eval_rows, outdir + "/eval.csv");
    save_checkpoint(run.state.encoders.momentum, outdir + "/encoder.ucrw");
    save_memory(run.state.bank, outdir + "/memory.ucrm");

    nlohmann::json manifest;
    manifest["dataset"] = dataset_desc;
    manifest["hyperparams"] = hyperparams_to_json(hp);
    manifest["options"] = options_to_json(opt);
    manifest["domains_done"] = run.state.domains_done;
    manifest["skipped_epochs"] = run.result.skipped_epochs;
    manifest["commits_skipped"] = run.result.commits_skipped;
    std::ofstream out(outdir + "/run_manifest.json");
    if (!out) throw DataError("cannot write run manifest in " + outdir);
    out << manifest.dump(2) << "\n";
}

inline std::string first_trained_split(const GeneratedStream& stream) {
    for (const GeneratedDomain& d : stream.domains)
        if (d.kind == "train") return d.domain.name;
    throw DataError("stream has no train domains");
}

// mAP of `split` at `step` in the evaluation log; throws when absent.
inline double map_at(const std::vector<EvalRow>& rows, const std::string& split, int step) {
    for (const EvalRow& r : rows)
        if (r.split_name == split && r.step == step) return r.mean_ap;
    throw DataError("no evaluation row for split " + split + " at step " + std::to_string(step));
}

// Same stream with the train domains visited in reverse; unseen domains
// keep their positions at the end.
inline GeneratedStream reversed_train_order(const GeneratedStream& stream) {
    GeneratedStream out;
    out.d_in = stream.d_in;
    out.seed = stream.seed;
    std::vector<GeneratedDomain> train, rest;
    for (const GeneratedDomain& d : stream.domains)
        (d.kind == "train" ? train : rest).push_back(d);
    for (auto it = train.rbegin(); it != train.rend(); ++it) out.domains.push_back(*it);
    for (const GeneratedDomain& d : rest) out.domains.push_back(d);
    return out;
}

// ---------------------------------------------------------------------------
// Ablation grid: the four on/off combinations of the rehearsal loss and the
// similarity constraint, each trained from scratch per seed.

struct AblationVariant {
    std::string name;
    bool use_old = false;
    bool use_sim = false;
};

inline std::vector<AblationVariant> ablation_variants() {
    return {{"baseline", false, false},
            {"rehearsal", true, false},
            {"similarity", false, true},
            {"full", true, true}};
}

struct AblationRun {
    std::string variant;
    uint64_t seed = 0;
    std::vector<EvalRow> eval_rows;
};

inline std::vector<AblationRun> run_ablation(const GeneratedStream& stream, HyperParams hp, TrainOptions opt,
                                             const std::vector<uint64_t>& seeds) {
    std::vector<AblationRun> runs;
    for (const AblationVariant& variant : ablation_variants()) {
        for (uint64_t seed : seeds) {
            hp.seed = seed;
            opt.use_old = variant.use_old;
            opt.use_sim = variant.use_sim;
            const RunOutput out = run_stream(stream, hp, opt);
            runs.push_back({variant.name, seed, out.result.eval_rows});
        }
    }
    return runs;
}

// Mean over seeds of the first-trained domain's mAP at the final step.
inline double first_domain_final_map(const std::vector<AblationRun>& runs, const std::string& variant,
                                     const std::string& split, int final_step) {
    double total = 0.0;
    int count = 0;
    for (const AblationRun& r : runs) {
        if (r.variant != variant) continue;
        total += map_at(r.eval_rows, split, final_step);
        ++count;
    }
    if (count == 0) throw DataError("no ablation runs for variant " + variant);
    return total / count;
}

inline void write_ablation_csv(const std::vector<AblationRun>& runs, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write ablation csv: " + path);
    out << "variant,seed,split_name,step,mAP,rank1,rank5,rank10,skipped\n";
    char buf[96];
    for (const AblationRun& r : runs) {
        for (const EvalRow& e : r.eval_rows) {
            std::snprintf(buf, sizeof(buf), "%.6f,%.6f,%.6f,%.6f", e.mean_ap, e.rank1, e.rank5, e.rank10);
            out << r.variant << ',' << r.seed << ',' << e.split_name << ',' << e.step << ',' << buf << ','
                << e.skipped << '\n';
        }
    }
    if (!out) throw DataError("write failed: " + path);
}

}  // namespace ucr
