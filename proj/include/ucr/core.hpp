#pragma once

#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "ucr/rng.hpp"

namespace ucr {

// Error taxonomy. The CLI maps these onto distinct exit codes.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct TrainError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// One item of the stream: a raw feature vector plus its domain and camera.
// gt_id is carried for evaluation only; training code never reads it.
struct Sample {
    std::vector<float> features;
    int domain_id = 0;
    int camera_id = 0;
    std::optional<int> gt_id;
};

struct Domain {
    std::string name;
    std::vector<Sample> samples;
    int num_cameras = 1;
};

enum class BaselineVariant { ClusterOnly, ClusterHard, ClusterCam };

inline std::string to_string(BaselineVariant v) {
    switch (v) {
        case BaselineVariant::ClusterOnly: return "cluster_only";
        case BaselineVariant::ClusterHard: return "cluster+hard";
        case BaselineVariant::ClusterCam: return "cluster+cam";
    }
    return "cluster+cam";
}

inline BaselineVariant baseline_variant_from_string(const std::string& s) {
    if (s == "cluster_only") return BaselineVariant::ClusterOnly;
    if (s == "cluster+hard") return BaselineVariant::ClusterHard;
    if (s == "cluster+cam") return BaselineVariant::ClusterCam;
    throw ConfigError("baseline_variant: unknown value '" + s + "'");
}

// Training configuration. Defaults are the full-scale reference settings;
// desk-scale runs override the schedule via a config file (see configs/).
struct HyperParams {
    double alpha = 0.999;        // momentum encoder EMA coefficient
    double tau_p = 0.5;          // prototype temperature
    double tau_c = 0.07;         // camera prototype temperature
    double tau_s = 0.2;          // similarity distribution temperature
    double lambda_cam = 0.5;
    double lambda_sim = 20.0;
    int n_neg = 50;              // hardest negative camera prototypes per anchor
    int k_mem = 2;               // stored images per cluster
    std::pair<int, int> batch_current = {8, 4};   // (ids, images per id)
    std::pair<int, int> batch_old = {16, 2};
    double dbscan_eps = 0.55;
    int dbscan_min_pts = 4;
    int rerank_k1 = 30;
    int rerank_k2 = 6;
    double lr = 3.5e-4;
    double weight_decay = 5e-4;
    int warmup_epochs = 10;
    int epochs_per_domain = 30;
    int iters_per_epoch = 400;
    BaselineVariant baseline_variant = BaselineVariant::ClusterCam;
    uint64_t seed = 0;

    bool operator==(const HyperParams&) const = default;
};

inline void validate_hyperparams(const HyperParams& h) {
    auto fail = [](const std::string& msg) { throw ConfigError(msg); };
    if (!(h.tau_p > 0.0)) fail("tau_p must be > 0");
    if (!(h.tau_c > 0.0)) fail("tau_c must be > 0");
    if (!(h.tau_s > 0.0)) fail("tau_s must be > 0");
    if (h.alpha < 0.0 || h.alpha > 1.0) fail("alpha out of range [0,1]");
    if (h.k_mem < 1) fail("k_mem must be >= 1");
    if (h.batch_current.first <= 0 || h.batch_current.second <= 0) fail("batch_current sizes must be > 0");
    if (h.batch_old.first <= 0 || h.batch_old.second <= 0) fail("batch_old sizes must be > 0");
    if (!(h.dbscan_eps > 0.0) || h.dbscan_eps > 1.0) fail("dbscan_eps out of range (0,1]");
    if (h.dbscan_min_pts < 2) fail("dbscan_min_pts must be >= 2");
    if (h.rerank_k1 < 1 || h.rerank_k2 < 1) fail("rerank_k1/rerank_k2 must be >= 1");
    if (h.rerank_k2 > h.rerank_k1) fail("rerank_k2 must be <= rerank_k1");
    if (!(h.lr > 0.0)) fail("lr must be > 0");
    if (h.weight_decay < 0.0) fail("weight_decay must be >= 0");
    if (h.warmup_epochs < 1) fail("warmup_epochs must be >= 1");
    if (h.epochs_per_domain < 1) fail("epochs_per_domain must be >= 1");
    if (h.iters_per_epoch < 1) fail("iters_per_epoch must be >= 1");
    if (h.n_neg < 1) fail("n_neg must be >= 1");
}

namespace detail {

inline std::pair<int, int> parse_batch(const nlohmann::json& j, const std::string& key) {
    if (!j.is_array() || j.size() != 2 || !j[0].is_number_integer() || !j[1].is_number_integer())
        throw ConfigError(key + ": expected [ids, images_per_id]");
    return {j[0].get<int>(), j[1].get<int>()};
}

template <typename T>
T get_number(const nlohmann::json& j, const std::string& key) {
    if (!j.is_number()) throw ConfigError(key + ": expected a number");
    return j.get<T>();
}

}  // namespace detail

// Parses a JSON config object. Omitted keys keep their defaults; unknown
// keys are rejected so typos cannot silently fall back to defaults.
inline HyperParams hyperparams_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw ConfigError("config root must be a JSON object");
    HyperParams h;
    for (const auto& [key, value] : j.items()) {
        if (key == "alpha") h.alpha = detail::get_number<double>(value, key);
        else if (key == "tau_p") h.tau_p = detail::get_number<double>(value, key);
        else if (key == "tau_c") h.tau_c = detail::get_number<double>(value, key);
        else if (key == "tau_s") h.tau_s = detail::get_number<double>(value, key);
        else if (key == "lambda_cam") h.lambda_cam = detail::get_number<double>(value, key);
        else if (key == "lambda_sim") h.lambda_sim = detail::get_number<double>(value, key);
        else if (key == "n_neg") h.n_neg = detail::get_number<int>(value, key);
        else if (key == "k_mem") h.k_mem = detail::get_number<int>(value, key);
        else if (key == "batch_current") h.batch_current = detail::parse_batch(value, key);
        else if (key == "batch_old") h.batch_old = detail::parse_batch(value, key);
        else if (key == "dbscan_eps") h.dbscan_eps = detail::get_number<double>(value, key);
        else if (key == "dbscan_min_pts") h.dbscan_min_pts = detail::get_number<int>(value, key);
        else if (key == "rerank_k1") h.rerank_k1 = detail::get_number<int>(value, key);
        else if (key == "rerank_k2") h.rerank_k2 = detail::get_number<int>(value, key);
        else if (key == "lr") h.lr = detail::get_number<double>(value, key);
        else if (key == "weight_decay") h.weight_decay = detail::get_number<double>(value, key);
        else if (key == "warmup_epochs") h.warmup_epochs = detail::get_number<int>(value, key);
        else if (key == "epochs_per_domain") h.epochs_per_domain = detail::get_number<int>(value, key);
        else if (key == "iters_per_epoch") h.iters_per_epoch = detail::get_number<int>(value, key);
        else if (key == "baseline_variant") {
            if (!value.is_string()) throw ConfigError("baseline_variant: expected a string");
            h.baseline_variant = baseline_variant_from_string(value.get<std::string>());
        } else if (key == "seed") {
            h.seed = detail::get_number<uint64_t>(value, key);
        } else {
            throw ConfigError("unknown config key '" + key + "'");
        }
    }
    validate_hyperparams(h);
    return h;
}

inline nlohmann::json hyperparams_to_json(const HyperParams& h) {
    nlohmann::json j;
    j["alpha"] = h.alpha;
    j["tau_p"] = h.tau_p;
    j["tau_c"] = h.tau_c;
    j["tau_s"] = h.tau_s;
    j["lambda_cam"] = h.lambda_cam;
    j["lambda_sim"] = h.lambda_sim;
    j["n_neg"] = h.n_neg;
    j["k_mem"] = h.k_mem;
    j["batch_current"] = {h.batch_current.first, h.batch_current.second};
    j["batch_old"] = {h.batch_old.first, h.batch_old.second};
    j["dbscan_eps"] = h.dbscan_eps;
    j["dbscan_min_pts"] = h.dbscan_min_pts;
    j["rerank_k1"] = h.rerank_k1;
    j["rerank_k2"] = h.rerank_k2;
    j["lr"] = h.lr;
    j["weight_decay"] = h.weight_decay;
    j["warmup_epochs"] = h.warmup_epochs;
    j["epochs_per_domain"] = h.epochs_per_domain;
    j["iters_per_epoch"] = h.iters_per_epoch;
    j["baseline_variant"] = to_string(h.baseline_variant);
    j["seed"] = h.seed;
    return j;
}

inline HyperParams load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config file not found: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config parse error in " + path + ": " + e.what());
    }
    return hyperparams_from_json(j);
}

inline void write_config(const HyperParams& h, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write config: " + path);
    out << hyperparams_to_json(h).dump(2) << "\n";
}

// Checks that every sample matches the declared input dimension and that
// camera ids stay inside their domain's camera count.
inline void validate_stream(const std::vector<Domain>& domains, int d_in) {
    for (size_t d = 0; d < domains.size(); ++d) {
        const Domain& dom = domains[d];
        if (dom.num_cameras < 1)
            throw DataError("domain '" + dom.name + "': num_cameras must be >= 1");
        for (size_t i = 0; i < dom.samples.size(); ++i) {
            const Sample& s = dom.samples[i];
            if (static_cast<int>(s.features.size()) != d_in) {
                std::ostringstream msg;
                msg << "dimension mismatch in domain '" << dom.name << "' (index " << d
                    << "), sample " << i << ": got " << s.features.size() << ", expected " << d_in;
                throw DataError(msg.str());
            }
            if (s.camera_id < 0 || s.camera_id >= dom.num_cameras) {
                std::ostringstream msg;
                msg << "camera out of range in domain '" << dom.name << "', sample " << i
                    << ": camera_id " << s.camera_id << ", num_cameras " << dom.num_cameras;
                throw DataError(msg.str());
            }
        }
    }
}

}  // namespace ucr
