#pragma once

#include <algorithm>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "ucr/core.hpp"
#include "ucr/encoder.hpp"
#include "ucr/matrix.hpp"
#include "ucr/pseudo_label.hpp"
#include "ucr/rng.hpp"

namespace ucr {

// Cluster and camera prototypes for the current domain, plus the long-term
// rehearsal memory: one prototype per past cluster and a handful of exemplar
// images per prototype.

// Mean of member embeddings per cluster; L2-normalized onto the unit sphere
// when `normalize` is set (the default everywhere).
inline Matrix cluster_prototypes(const Matrix& embeddings, const PseudoLabeling& pl, bool normalize = true) {
    const int d = embeddings.cols;
    Matrix protos(pl.num_clusters, d);
    for (int c = 0; c < pl.num_clusters; ++c) {
        if (pl.members[c].empty()) throw TrainError("cluster_prototypes: empty cluster " + std::to_string(c));
        double* p = protos.row(c);
        for (int i : pl.members[c])
            for (int k = 0; k < d; ++k) p[k] += embeddings(i, k);
        const double inv = 1.0 / static_cast<double>(pl.members[c].size());
        for (int k = 0; k < d; ++k) p[k] *= inv;
        if (normalize) {
            const double n = l2_norm(p, d);
            if (n < 1e-12) throw TrainError("cluster_prototypes: degenerate prototype " + std::to_string(c));
            for (int k = 0; k < d; ++k) p[k] /= n;
        }
    }
    return protos;
}

// One prototype per (cluster, camera) pair that has at least one member.
struct CameraPrototypes {
    Matrix protos;                             // total x d
    std::vector<int> cluster_of;               // per row
    std::vector<int> camera_of;                // per row
    std::vector<std::vector<int>> by_cluster;  // row indices per cluster, ascending camera
};

inline CameraPrototypes camera_prototypes(const Matrix& embeddings, const PseudoLabeling& pl,
                                          const std::vector<int>& camera_ids, bool normalize = true) {
    if (static_cast<int>(camera_ids.size()) != embeddings.rows)
        throw DataError("camera_prototypes: camera_ids size mismatch");
    const int d = embeddings.cols;

    struct Slot {
        int cluster, camera;
        std::vector<int> members;
    };
    std::vector<Slot> slots;
    for (int c = 0; c < pl.num_clusters; ++c) {
        int max_cam = -1;
        for (int i : pl.members[c]) max_cam = std::max(max_cam, camera_ids[i]);
        for (int cam = 0; cam <= max_cam; ++cam) {
            Slot s{c, cam, {}};
            for (int i : pl.members[c])
                if (camera_ids[i] == cam) s.members.push_back(i);
            if (!s.members.empty()) slots.push_back(std::move(s));
        }
    }

    CameraPrototypes out;
    out.protos = Matrix(static_cast<int>(slots.size()), d);
    out.by_cluster.resize(pl.num_clusters);
    for (size_t r = 0; r < slots.size(); ++r) {
        const Slot& s = slots[r];
        out.cluster_of.push_back(s.cluster);
        out.camera_of.push_back(s.camera);
        out.by_cluster[s.cluster].push_back(static_cast<int>(r));
        double* p = out.protos.row(static_cast<int>(r));
        for (int i : s.members)
            for (int k = 0; k < d; ++k) p[k] += embeddings(i, k);
        const double inv = 1.0 / static_cast<double>(s.members.size());
        for (int k = 0; k < d; ++k) p[k] *= inv;
        if (normalize) {
            const double n = l2_norm(p, d);
            if (n < 1e-12) throw TrainError("camera_prototypes: degenerate prototype");
            for (int k = 0; k < d; ++k) p[k] /= n;
        }
    }
    return out;
}

// Current-domain prototype state, rebuilt from momentum embeddings at the
// start of every epoch.
struct PrototypeMemory {
    Matrix clusters;
    CameraPrototypes cameras;
};

inline PrototypeMemory refresh_prototype_memory(const Matrix& momentum_embeddings, const PseudoLabeling& pl,
                                                const std::vector<int>& camera_ids, bool normalize = true) {
    PrototypeMemory mem;
    mem.clusters = cluster_prototypes(momentum_embeddings, pl, normalize);
    mem.cameras = camera_prototypes(momentum_embeddings, pl, camera_ids, normalize);
    return mem;
}

// ---------------------------------------------------------------------------
// Long-term memory. Only general cluster prototypes survive a domain; camera
// prototypes are domain-local.

enum class MemoryPolicy { Nearest, Farthest, Random };

inline std::string to_string(MemoryPolicy p) {
    switch (p) {
        case MemoryPolicy::Nearest: return "nearest";
        case MemoryPolicy::Farthest: return "farthest";
        case MemoryPolicy::Random: return "random";
    }
    return "nearest";
}

inline MemoryPolicy memory_policy_from_string(const std::string& s) {
    if (s == "nearest") return MemoryPolicy::Nearest;
    if (s == "farthest") return MemoryPolicy::Farthest;
    if (s == "random") return MemoryPolicy::Random;
    throw ConfigError("unknown memory policy: " + s + " (expected nearest, farthest or random)");
}

struct MemoryImage {
    std::vector<float> features;
    int domain_index = 0;
    int camera_id = 0;
};

struct MemoryCluster {
    std::vector<double> prototype;
    int domain_index = 0;
    std::vector<int> image_indices;  // into MemoryBank::images
};

struct MemoryBank {
    std::vector<MemoryCluster> clusters;
    std::vector<MemoryImage> images;

    int d_emb() const { return clusters.empty() ? 0 : static_cast<int>(clusters.front().prototype.size()); }
};

// Freeze the finished domain into the bank: one prototype per cluster plus
// k_mem exemplars chosen by `policy` (distance to the prototype in momentum
// embedding space, ties by lowest sample index; k_mem is clamped to the
// cluster size).
inline void commit_domain_memory(MemoryBank& bank, int domain_index, const std::vector<Sample>& samples,
                                 const Matrix& momentum_embeddings, const PseudoLabeling& pl, int k_mem,
                                 MemoryPolicy policy, Rng& rng, bool normalize = true) {
    if (k_mem < 1) throw ConfigError("k_mem must be >= 1");
    const Matrix protos = cluster_prototypes(momentum_embeddings, pl, normalize);
    const int d = protos.cols;

    for (int c = 0; c < pl.num_clusters; ++c) {
        const std::vector<int>& members = pl.members[c];
        const int take = std::min<int>(k_mem, static_cast<int>(members.size()));

        std::vector<int> chosen;
        if (policy == MemoryPolicy::Random) {
            std::vector<int> pool = members;
            for (int t = 0; t < take; ++t) {
                const uint64_t pick = rng.next_below(pool.size() - t);
                std::swap(pool[t], pool[t + pick]);
            }
            chosen.assign(pool.begin(), pool.begin() + take);
        } else {
            std::vector<std::pair<double, int>> scored;
            scored.reserve(members.size());
            for (int i : members) {
                const double dist = 1.0 - dot(momentum_embeddings.row(i), protos.row(c), d);
                scored.emplace_back(dist, i);
            }
            std::sort(scored.begin(), scored.end(), [&](const auto& a, const auto& b) {
                if (a.first != b.first) return policy == MemoryPolicy::Nearest ? a.first < b.first : a.first > b.first;
                return a.second < b.second;
            });
            for (int t = 0; t < take; ++t) chosen.push_back(scored[t].second);
        }

        MemoryCluster entry;
        entry.prototype.assign(protos.row(c), protos.row(c) + d);
        entry.domain_index = domain_index;
        for (int i : chosen) {
            MemoryImage img;
            img.features = samples[i].features;
            img.domain_index = domain_index;
            img.camera_id = samples[i].camera_id;
            entry.image_indices.push_back(static_cast<int>(bank.images.size()));
            bank.images.push_back(std::move(img));
        }
        bank.clusters.push_back(std::move(entry));
    }
}

// ---------------------------------------------------------------------------
// Identity-balanced batch sampling over arbitrary pools (cluster member
// lists for the current domain, exemplar lists for the memory).

struct MiniBatch {
    std::vector<int> sample_indices;  // into whatever array the pools index
    std::vector<int> group_ids;       // pool each row was drawn from
};

// Draws `ids` pools and `per_id` members from each. Pools are distinct when
// enough exist, otherwise drawn uniformly with replacement. Members are a
// distinct subset when the pool is large enough, otherwise the whole pool
// followed by uniform-with-replacement fills.
inline MiniBatch sample_batch(const std::vector<std::vector<int>>& pools, int ids, int per_id, Rng& rng) {
    const int n_pools = static_cast<int>(pools.size());
    if (n_pools == 0) throw TrainError("sample_batch: no pools to sample from");
    if (ids < 1 || per_id < 1) throw ConfigError("sample_batch: ids and per_id must be >= 1");

    std::vector<int> picked;
    if (n_pools >= ids) {
        std::vector<int> order(n_pools);
        std::iota(order.begin(), order.end(), 0);
        for (int t = 0; t < ids; ++t) {
            const uint64_t pick = rng.next_below(static_cast<uint64_t>(n_pools - t));
            std::swap(order[t], order[t + pick]);
        }
        picked.assign(order.begin(), order.begin() + ids);
    } else {
        for (int t = 0; t < ids; ++t) picked.push_back(static_cast<int>(rng.next_below(n_pools)));
    }

    MiniBatch batch;
    batch.sample_indices.reserve(static_cast<size_t>(ids) * per_id);
    for (int pid : picked) {
        const std::vector<int>& pool = pools[pid];
        if (pool.empty()) throw TrainError("sample_batch: empty pool " + std::to_string(pid));
        if (static_cast<int>(pool.size()) >= per_id) {
            std::vector<int> copy = pool;
            for (int t = 0; t < per_id; ++t) {
                const uint64_t pick = rng.next_below(copy.size() - t);
                std::swap(copy[t], copy[t + pick]);
                batch.sample_indices.push_back(copy[t]);
                batch.group_ids.push_back(pid);
            }
        } else {
            for (int s : pool) {
                batch.sample_indices.push_back(s);
                batch.group_ids.push_back(pid);
            }
            const int fill = per_id - static_cast<int>(pool.size());
            for (int t = 0; t < fill; ++t) {
                batch.sample_indices.push_back(pool[rng.next_below(pool.size())]);
                batch.group_ids.push_back(pid);
            }
        }
    }
    return batch;
}

// ---------------------------------------------------------------------------
// Memory dump: magic "UCRM", version u32, d_emb u32, d_in u32, cluster count
// u32, image count u32, then per image (domain u32, camera u32, features
// f32) and per cluster (domain u32, prototype f32, index count u32, indices
// u32). All little-endian.

namespace detail {
constexpr uint32_t kMemoryVersion = 1;
}

inline void save_memory(const MemoryBank& bank, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write memory dump: " + path);
    const uint32_t d_emb = bank.clusters.empty() ? 0u : static_cast<uint32_t>(bank.clusters.front().prototype.size());
    const uint32_t d_in = bank.images.empty() ? 0u : static_cast<uint32_t>(bank.images.front().features.size());
    out.write("UCRM", 4);
    detail::put_u32(out, detail::kMemoryVersion);
    detail::put_u32(out, d_emb);
    detail::put_u32(out, d_in);
    detail::put_u32(out, static_cast<uint32_t>(bank.clusters.size()));
    detail::put_u32(out, static_cast<uint32_t>(bank.images.size()));
    for (const MemoryImage& img : bank.images) {
        detail::put_u32(out, static_cast<uint32_t>(img.domain_index));
        detail::put_u32(out, static_cast<uint32_t>(img.camera_id));
        if (img.features.size() != d_in) throw DataError("save_memory: inconsistent image dimension");
        for (float v : img.features) detail::put_f32(out, v);
    }
    for (const MemoryCluster& c : bank.clusters) {
        detail::put_u32(out, static_cast<uint32_t>(c.domain_index));
        if (c.prototype.size() != d_emb) throw DataError("save_memory: inconsistent prototype dimension");
        for (double v : c.prototype) detail::put_f32(out, static_cast<float>(v));
        detail::put_u32(out, static_cast<uint32_t>(c.image_indices.size()));
        for (int i : c.image_indices) detail::put_u32(out, static_cast<uint32_t>(i));
    }
    if (!out) throw DataError("write failed: " + path);
}

inline MemoryBank load_memory(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("memory dump not found: " + path);
    char magic[4];
    if (!in.read(magic, 4) || std::memcmp(magic, "UCRM", 4) != 0)
        throw DataError("bad magic in memory dump: " + path);
    const uint32_t version = detail::take_u32(in, "version");
    if (version != detail::kMemoryVersion)
        throw DataError("unsupported memory dump version " + std::to_string(version) + " in " + path);
    const uint32_t d_emb = detail::take_u32(in, "d_emb");
    const uint32_t d_in = detail::take_u32(in, "d_in");
    const uint32_t n_clusters = detail::take_u32(in, "cluster count");
    const uint32_t n_images = detail::take_u32(in, "image count");

    MemoryBank bank;
    bank.images.resize(n_images);
    for (MemoryImage& img : bank.images) {
        img.domain_index = static_cast<int>(detail::take_u32(in, "image domain"));
        img.camera_id = static_cast<int>(detail::take_u32(in, "image camera"));
        img.features.resize(d_in);
        for (float& v : img.features) v = detail::take_f32(in, "image features");
    }
    bank.clusters.resize(n_clusters);
    for (MemoryCluster& c : bank.clusters) {
        c.domain_index = static_cast<int>(detail::take_u32(in, "cluster domain"));
        c.prototype.resize(d_emb);
        for (double& v : c.prototype) v = detail::take_f32(in, "prototype");
        const uint32_t cnt = detail::take_u32(in, "index count");
        c.image_indices.resize(cnt);
        for (int& idx : c.image_indices) {
            const uint32_t raw = detail::take_u32(in, "image index");
            if (raw >= n_images) throw DataError("memory dump references image out of range");
            idx = static_cast<int>(raw);
        }
    }
    return bank;
}

}  // namespace ucr
