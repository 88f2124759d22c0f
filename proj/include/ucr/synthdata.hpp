#pragma once

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ucr/core.hpp"
#include "ucr/encoder.hpp"
#include "ucr/matrix.hpp"
#include "ucr/rng.hpp"

namespace ucr {

// Synthetic domain stream. Each domain draws fresh identity centroids from
// an anisotropic Gaussian whose orientation rotates domain by domain while
// the whole cloud drifts along a random walk; cameras add a per-camera
// offset on top. Later domains therefore occupy genuinely different regions
// of input space, which is what makes sequential training forget.

struct StreamSpec {
    int num_train_domains = 3;
    int num_unseen_domains = 2;
    int ids_per_domain = 30;
    int samples_per_id = 12;
    int num_cameras = 3;
    int d_in = 32;
    int eval_ids = 10;       // identities per domain held out for retrieval
    int queries_per_id = 2;  // per eval identity, the rest go to the gallery
    double sigma_id = 0.9;
    double axis_ratio = 0.25;  // scale of the flat half of the identity axes
    double camera_shift = 0.3;
    double rotation_deg = 45.0;
    double translation = 1.5;
    double sigma_noise = 0.3;
    uint64_t seed = 0;
};

inline void validate_stream_spec(const StreamSpec& s) {
    if (s.num_train_domains < 1) throw ConfigError("num_train_domains must be >= 1");
    if (s.num_unseen_domains < 0) throw ConfigError("num_unseen_domains must be >= 0");
    if (s.ids_per_domain < 2) throw ConfigError("ids_per_domain must be >= 2");
    if (s.samples_per_id < 2) throw ConfigError("samples_per_id must be >= 2");
    if (s.num_cameras < 2) throw ConfigError("num_cameras must be >= 2 (retrieval needs cross-camera pairs)");
    if (s.d_in < 2) throw ConfigError("d_in must be >= 2");
    if (s.eval_ids < 1 || s.eval_ids > s.ids_per_domain) throw ConfigError("eval_ids out of range");
    if (s.queries_per_id < 1 || s.queries_per_id >= s.samples_per_id)
        throw ConfigError("queries_per_id must leave at least one gallery sample per identity");
    if (s.sigma_id <= 0.0 || s.sigma_noise < 0.0 || s.camera_shift < 0.0)
        throw ConfigError("stream scales must be positive");
}

struct GeneratedDomain {
    Domain domain;
    std::string kind;  // "train" or "unseen"
    std::vector<int> query_indices;
    std::vector<int> gallery_indices;

    // Everything outside the retrieval split is unsupervised training data.
    std::vector<int> train_indices() const {
        std::vector<bool> held(domain.samples.size(), false);
        for (int i : query_indices) held[i] = true;
        for (int i : gallery_indices) held[i] = true;
        std::vector<int> out;
        for (size_t i = 0; i < held.size(); ++i)
            if (!held[i]) out.push_back(static_cast<int>(i));
        return out;
    }
};

struct GeneratedStream {
    std::vector<GeneratedDomain> domains;  // train domains first, then unseen
    int d_in = 0;
    uint64_t seed = 0;

    int num_train() const {
        int n = 0;
        for (const GeneratedDomain& d : domains)
            if (d.kind == "train") ++n;
        return n;
    }
};

namespace detail {

// Rotation by `angle` on every consecutive axis pair.
inline void rotate_pairs(std::vector<double>& v, double angle) {
    const double c = std::cos(angle), s = std::sin(angle);
    for (size_t k = 0; k + 1 < v.size(); k += 2) {
        const double a = v[k], b = v[k + 1];
        v[k] = c * a - s * b;
        v[k + 1] = s * a + c * b;
    }
}

inline std::vector<double> random_unit(Rng& rng, int d) {
    std::vector<double> u(d);
    double n = 0.0;
    do {
        for (double& x : u) x = rng.normal();
        n = l2_norm(u.data(), d);
    } while (n < 1e-9);
    for (double& x : u) x /= n;
    return u;
}

}  // namespace detail

inline GeneratedStream generate_stream(const StreamSpec& spec) {
    validate_stream_spec(spec);
    Rng root(spec.seed);

    GeneratedStream stream;
    stream.d_in = spec.d_in;
    stream.seed = spec.seed;

    std::vector<double> drift(spec.d_in, 0.0);
    const int total = spec.num_train_domains + spec.num_unseen_domains;
    for (int d = 0; d < total; ++d) {
        const bool unseen = d >= spec.num_train_domains;
        Rng rng = root.fork(static_cast<uint64_t>(d) + 1);

        if (d > 0) {
            const std::vector<double> dir = detail::random_unit(rng, spec.d_in);
            for (int k = 0; k < spec.d_in; ++k) drift[k] += spec.translation * dir[k];
        }
        const double angle = spec.rotation_deg * (3.14159265358979323846 / 180.0) * d;

        // Identity centroids: anisotropic scale, then domain rotation and drift.
        std::vector<std::vector<double>> centroids(spec.ids_per_domain);
        for (auto& c : centroids) {
            c.resize(spec.d_in);
            // Strong and flat axes interleave so the pairwise rotation tilts
            // the discriminative subspace from one domain to the next.
            for (int k = 0; k < spec.d_in; ++k) {
                const double scale = (k % 2 == 0) ? spec.sigma_id : spec.sigma_id * spec.axis_ratio;
                c[k] = scale * rng.normal();
            }
            detail::rotate_pairs(c, angle);
            for (int k = 0; k < spec.d_in; ++k) c[k] += drift[k];
        }

        std::vector<std::vector<double>> cam_offsets(spec.num_cameras);
        for (auto& o : cam_offsets) {
            o.resize(spec.d_in);
            for (double& x : o) x = spec.camera_shift * rng.normal();
        }

        GeneratedDomain gd;
        gd.kind = unseen ? "unseen" : "train";
        gd.domain.name =
            (unseen ? "unseen_" : "train_") + std::to_string(unseen ? d - spec.num_train_domains : d);
        gd.domain.num_cameras = spec.num_cameras;

        const int first_eval_id = unseen ? 0 : spec.ids_per_domain - spec.eval_ids;
        for (int id = 0; id < spec.ids_per_domain; ++id) {
            for (int s = 0; s < spec.samples_per_id; ++s) {
                const int cam = s % spec.num_cameras;
                Sample sample;
                sample.domain_id = d;
                sample.camera_id = cam;
                sample.gt_id = id;
                sample.features.resize(spec.d_in);
                for (int k = 0; k < spec.d_in; ++k) {
                    const double v = centroids[id][k] + cam_offsets[cam][k] + spec.sigma_noise * rng.normal();
                    sample.features[k] = static_cast<float>(v);
                }
                const int idx = static_cast<int>(gd.domain.samples.size());
                gd.domain.samples.push_back(std::move(sample));
                if (id >= first_eval_id) {
                    if (s < spec.queries_per_id)
                        gd.query_indices.push_back(idx);
                    else
                        gd.gallery_indices.push_back(idx);
                }
            }
        }
        stream.domains.push_back(std::move(gd));
    }
    return stream;
}

// Row matrix of selected sample features, in the order given.
inline Matrix gather_features(const std::vector<Sample>& samples, const std::vector<int>& indices) {
    if (indices.empty()) throw DataError("gather_features: empty index list");
    const int d = static_cast<int>(samples.front().features.size());
    Matrix m(static_cast<int>(indices.size()), d);
    for (size_t r = 0; r < indices.size(); ++r) {
        const Sample& s = samples[indices[r]];
        if (static_cast<int>(s.features.size()) != d) throw DataError("gather_features: ragged feature dims");
        for (int k = 0; k < d; ++k) m(static_cast<int>(r), k) = s.features[k];
    }
    return m;
}

// ---------------------------------------------------------------------------
// On-disk form: manifest.json plus one feature file per domain. Feature
// files are little-endian, magic "UCRF", version u32, count u32, dim u32,
// then count*dim f32 row-major.

namespace detail {
constexpr uint32_t kFeatureVersion = 1;
}

inline void write_features(const std::vector<Sample>& samples, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write feature file: " + path);
    const uint32_t count = static_cast<uint32_t>(samples.size());
    const uint32_t dim = samples.empty() ? 0u : static_cast<uint32_t>(samples.front().features.size());
    out.write("UCRF", 4);
    detail::put_u32(out, detail::kFeatureVersion);
    detail::put_u32(out, count);
    detail::put_u32(out, dim);
    for (const Sample& s : samples) {
        if (s.features.size() != dim) throw DataError("write_features: ragged feature dims");
        for (float v : s.features) detail::put_f32(out, v);
    }
    if (!out) throw DataError("write failed: " + path);
}

inline std::vector<std::vector<float>> read_features(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("feature file not found: " + path);
    char magic[4];
    if (!in.read(magic, 4) || std::memcmp(magic, "UCRF", 4) != 0)
        throw DataError("bad magic in feature file: " + path);
    const uint32_t version = detail::take_u32(in, "version");
    if (version != detail::kFeatureVersion)
        throw DataError("unsupported feature file version " + std::to_string(version) + " in " + path);
    const uint32_t count = detail::take_u32(in, "count");
    const uint32_t dim = detail::take_u32(in, "dim");
    std::vector<std::vector<float>> rows(count);
    for (auto& r : rows) {
        r.resize(dim);
        for (float& v : r) v = detail::take_f32(in, "features");
    }
    return rows;
}

inline void write_dataset(const GeneratedStream& stream, const std::string& dir) {
    std::filesystem::create_directories(dir);
    nlohmann::json manifest;
    manifest["d_in"] = stream.d_in;
    manifest["seed"] = stream.seed;
    manifest["domains"] = nlohmann::json::array();
    for (const GeneratedDomain& gd : stream.domains) {
        const std::string feature_file = gd.domain.name + ".ucrf";
        write_features(gd.domain.samples, dir + "/" + feature_file);
        nlohmann::json jd;
        jd["name"] = gd.domain.name;
        jd["kind"] = gd.kind;
        jd["num_cameras"] = gd.domain.num_cameras;
        jd["feature_file"] = feature_file;
        std::vector<int> cams, gts;
        for (const Sample& s : gd.domain.samples) {
            cams.push_back(s.camera_id);
            gts.push_back(s.gt_id.value_or(-1));
        }
        jd["camera_ids"] = cams;
        jd["gt_ids"] = gts;
        jd["query_indices"] = gd.query_indices;
        jd["gallery_indices"] = gd.gallery_indices;
        manifest["domains"].push_back(std::move(jd));
    }
    std::ofstream out(dir + "/manifest.json");
    if (!out) throw DataError("cannot write manifest: " + dir + "/manifest.json");
    out << manifest.dump(2) << "\n";
    if (!out) throw DataError("write failed: " + dir + "/manifest.json");
}

inline GeneratedStream read_dataset(const std::string& dir) {
    std::ifstream in(dir + "/manifest.json");
    if (!in) throw DataError("manifest not found: " + dir + "/manifest.json");
    nlohmann::json manifest;
    try {
        in >> manifest;
    } catch (const nlohmann::json::exception& e) {
        throw DataError("manifest parse error: " + std::string(e.what()));
    }

    GeneratedStream stream;
    try {
        stream.d_in = manifest.at("d_in").get<int>();
        stream.seed = manifest.at("seed").get<uint64_t>();
        for (const auto& jd : manifest.at("domains")) {
            GeneratedDomain gd;
            gd.domain.name = jd.at("name").get<std::string>();
            gd.kind = jd.at("kind").get<std::string>();
            if (gd.kind != "train" && gd.kind != "unseen")
                throw DataError("manifest: unknown domain kind '" + gd.kind + "'");
            gd.domain.num_cameras = jd.at("num_cameras").get<int>();
            const auto features = read_features(dir + "/" + jd.at("feature_file").get<std::string>());
            const auto cams = jd.at("camera_ids").get<std::vector<int>>();
            const auto gts = jd.at("gt_ids").get<std::vector<int>>();
            if (cams.size() != features.size() || gts.size() != features.size())
                throw DataError("manifest: metadata length does not match feature count in " + gd.domain.name);
            const int domain_index = static_cast<int>(stream.domains.size());
            for (size_t i = 0; i < features.size(); ++i) {
                Sample s;
                s.features = features[i];
                s.domain_id = domain_index;
                s.camera_id = cams[i];
                if (gts[i] >= 0) s.gt_id = gts[i];
                gd.domain.samples.push_back(std::move(s));
            }
            gd.query_indices = jd.at("query_indices").get<std::vector<int>>();
            gd.gallery_indices = jd.at("gallery_indices").get<std::vector<int>>();
            const int n = static_cast<int>(gd.domain.samples.size());
            for (int qi : gd.query_indices)
                if (qi < 0 || qi >= n) throw DataError("manifest: query index out of range in " + gd.domain.name);
            for (int gi : gd.gallery_indices)
                if (gi < 0 || gi >= n) throw DataError("manifest: gallery index out of range in " + gd.domain.name);
            stream.domains.push_back(std::move(gd));
        }
    } catch (const nlohmann::json::exception& e) {
        throw DataError("manifest field error: " + std::string(e.what()));
    }

    std::vector<Domain> plain;
    for (const GeneratedDomain& gd : stream.domains) plain.push_back(gd.domain);
    validate_stream(plain, stream.d_in);
    return stream;
}

}  // namespace ucr
