// Command-line front end: generate synthetic domain streams, train over
// them, evaluate checkpoints, and run the ablation grid.
//
// Exit codes: 0 success, 1 usage, 2 bad configuration, 3 bad data,
// 4 training failure.

#include <cstdio>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ucr/runner.hpp"

namespace {

struct CliOverrides {
    std::string config_path;
    bool no_old = false;
    bool no_sim = false;
    std::string baseline_variant;
    std::string memory_policy;
    int k_mem = -1;
    long long seed = -1;

    void attach(CLI::App* cmd, bool with_train_flags) {
        cmd->add_option("--config", config_path, "hyperparameter JSON file");
        cmd->add_option("--seed", seed, "run seed (wins over the config file)");
        if (with_train_flags) {
            cmd->add_flag("--no-old", no_old, "disable the rehearsal loss on memory images");
            cmd->add_flag("--no-sim", no_sim, "disable the pairwise similarity constraint");
            cmd->add_option("--baseline-variant", baseline_variant,
                            "current-domain loss: cluster_only, cluster+hard or cluster+cam");
            cmd->add_option("--k-mem", k_mem, "exemplar images stored per cluster");
            cmd->add_option("--memory-policy", memory_policy, "exemplar choice: nearest, farthest or random");
        }
    }

    ucr::HyperParams hyperparams() const {
        ucr::HyperParams hp;
        if (!config_path.empty()) hp = ucr::load_config(config_path);
        if (seed >= 0) hp.seed = static_cast<uint64_t>(seed);
        if (!baseline_variant.empty()) hp.baseline_variant = ucr::baseline_variant_from_string(baseline_variant);
        if (k_mem > 0) hp.k_mem = k_mem;
        ucr::validate_hyperparams(hp);
        return hp;
    }

    ucr::TrainOptions train_options() const {
        ucr::TrainOptions opt;
        opt.use_old = !no_old;
        opt.use_sim = !no_sim;
        if (!memory_policy.empty()) opt.memory_policy = ucr::memory_policy_from_string(memory_policy);
        return opt;
    }
};

void print_eval_rows(const std::vector<ucr::EvalRow>& rows) {
    for (const ucr::EvalRow& r : rows)
        std::printf("  step %d  %-10s mAP=%.4f rank1=%.4f rank5=%.4f rank10=%.4f skipped=%d\n", r.step,
                    r.split_name.c_str(), r.mean_ap, r.rank1, r.rank5, r.rank10, r.skipped);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"lifelong unsupervised contrastive-rehearsal trainer"};
    app.require_subcommand(1);

    // generate
    auto* gen = app.add_subcommand("generate", "write a synthetic domain stream to a directory");
    ucr::StreamSpec spec;
    std::string gen_out;
    long long gen_seed = -1;
    gen->add_option("--out", gen_out, "output dataset directory")->required();
    gen->add_option("--seed", gen_seed, "generator seed");
    gen->add_option("--train-domains", spec.num_train_domains, "number of training domains");
    gen->add_option("--unseen-domains", spec.num_unseen_domains, "held-out domains, never trained");
    gen->add_option("--ids", spec.ids_per_domain, "identities per domain");
    gen->add_option("--samples-per-id", spec.samples_per_id, "samples per identity");
    gen->add_option("--cameras", spec.num_cameras, "cameras per domain");
    gen->add_option("--d-in", spec.d_in, "input feature dimension");
    gen->add_option("--translation", spec.translation, "domain drift step");
    gen->add_option("--rotation-deg", spec.rotation_deg, "per-domain rotation of the identity subspace");

    // train
    auto* train = app.add_subcommand("train", "train sequentially over a stream");
    CliOverrides train_over;
    std::string train_data, train_out;
    train->add_option("--data", train_data, "dataset directory (manifest.json)")->required();
    train->add_option("--out", train_out, "output directory for run artifacts")->required();
    train_over.attach(train, true);

    // eval
    auto* ev = app.add_subcommand("eval", "evaluate a saved encoder on every split");
    std::string eval_data, eval_ckpt, eval_out;
    ev->add_option("--data", eval_data, "dataset directory")->required();
    ev->add_option("--checkpoint", eval_ckpt, "encoder checkpoint (.ucrw)")->required();
    ev->add_option("--out", eval_out, "optional eval CSV path");

    // ablate
    auto* ab = app.add_subcommand("ablate", "train every loss-component combination over several seeds");
    CliOverrides ab_over;
    std::string ab_data, ab_out;
    int ab_num_seeds = 5;
    bool ab_reversed = false;
    ab->add_option("--data", ab_data, "dataset directory")->required();
    ab->add_option("--out", ab_out, "output directory")->required();
    ab->add_option("--num-seeds", ab_num_seeds, "seeds per variant, starting at 0");
    ab->add_flag("--reversed", ab_reversed, "train the domains in reverse order");
    ab_over.attach(ab, false);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (gen->parsed()) {
            if (gen_seed >= 0) spec.seed = static_cast<uint64_t>(gen_seed);
            const ucr::GeneratedStream stream = ucr::generate_stream(spec);
            ucr::write_dataset(stream, gen_out);
            std::printf("wrote %zu domains (%d train) to %s\n", stream.domains.size(), stream.num_train(),
                        gen_out.c_str());
        } else if (train->parsed()) {
            const ucr::GeneratedStream stream = ucr::read_dataset(train_data);
            const ucr::HyperParams hp = train_over.hyperparams();
            const ucr::TrainOptions opt = train_over.train_options();
            const ucr::RunOutput run = ucr::run_stream(stream, hp, opt);
            ucr::write_run_outputs(run, hp, opt, train_data, train_out);
            std::printf("trained %d domains, %zu metric rows; artifacts in %s\n", run.state.domains_done,
                        run.result.metrics.size(), train_out.c_str());
            print_eval_rows(run.result.eval_rows);
        } else if (ev->parsed()) {
            const ucr::GeneratedStream stream = ucr::read_dataset(eval_data);
            const ucr::EncoderParams enc = ucr::load_checkpoint(eval_ckpt);
            ucr::TrainState state(enc, 0);
            std::vector<ucr::EvalRow> rows;
            for (const ucr::GeneratedDomain& gd : stream.domains)
                rows.push_back(ucr::evaluate_domain(state, gd, 0, 10));
            print_eval_rows(rows);
            if (!eval_out.empty()) ucr::write_eval_csv(rows, eval_out);
        } else if (ab->parsed()) {
            if (ab_num_seeds < 1) throw ucr::ConfigError("--num-seeds must be >= 1");
            ucr::GeneratedStream stream = ucr::read_dataset(ab_data);
            if (ab_reversed) stream = ucr::reversed_train_order(stream);
            const ucr::HyperParams hp = ab_over.hyperparams();
            const ucr::TrainOptions opt = ab_over.train_options();
            std::vector<uint64_t> seeds;
            for (int s = 0; s < ab_num_seeds; ++s) seeds.push_back(static_cast<uint64_t>(s));
            const auto runs = ucr::run_ablation(stream, hp, opt, seeds);
            std::filesystem::create_directories(ab_out);
            ucr::write_ablation_csv(runs, ab_out + "/ablation.csv");
            const std::string first = ucr::first_trained_split(stream);
            const int final_step = stream.num_train();
            std::printf("first-trained domain (%s) mAP at step %d, averaged over %d seeds:\n", first.c_str(),
                        final_step, ab_num_seeds);
            for (const ucr::AblationVariant& v : ucr::ablation_variants())
                std::printf("  %-10s %.4f\n", v.name.c_str(),
                            ucr::first_domain_final_map(runs, v.name, first, final_step));
        }
    } catch (const ucr::ConfigError& e) {
        std::fprintf(stderr, "configuration error: %s\n", e.what());
        return 2;
    } catch (const ucr::DataError& e) {
        std::fprintf(stderr, "data error: %s\n", e.what());
        return 3;
    } catch (const ucr::TrainError& e) {
        std::fprintf(stderr, "training error: %s\n", e.what());
        return 4;
    }
    return 0;
}
