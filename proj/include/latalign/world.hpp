#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "latalign/rng.hpp"
#include "latalign/tensor.hpp"

namespace latalign {

/// Generator spec for the paired two-modality toy world. Both observation
/// maps are fixed random affine+sine functions of a shared factor vector.
struct WorldSpec {
    std::size_t factor_dim = 4;
    std::size_t classes = 8;
    std::size_t dv = 32;
    std::size_t da = 32;
    double sigma = 0.05;   // observation noise
    double jitter = 0.25;  // per-sample factor spread around the class prototype
    std::uint64_t map_seed_v = 101;
    std::uint64_t map_seed_a = 202;

    void validate() const;
};

/// x -> w2 sin(w1 c + b1) + b2
struct SineMap {
    Tensor w1, b1, w2, b2;

    Tensor operator()(const Tensor& c) const;
    static SineMap init(std::size_t in, std::size_t hidden, std::size_t out, Rng& rng);
};

struct World {
    WorldSpec spec;
    std::uint64_t seed = 0;
    SineMap g_v;
    SineMap g_a;
    std::vector<Tensor> prototypes;  // one factor vector per class
};

World make_world(const WorldSpec& spec, std::uint64_t seed);

struct PairedSample {
    Tensor v;
    Tensor a;
    std::size_t class_id = 0;
    Tensor factors;  // the shared c both observations were generated from
};

PairedSample sample_pair(const World& world, std::size_t class_id, std::uint64_t seed);

struct Dataset {
    WorldSpec spec;
    std::uint64_t world_seed = 0;
    std::vector<PairedSample> samples;
};

/// n samples per class, stratified then shuffled by seed.
Dataset generate_dataset(const World& world, std::size_t per_class, std::uint64_t seed);

/// Binary SHDS file; layout documented in the README. Round-trips bit-exactly.
void save_dataset(const Dataset& dataset, const std::string& path);
Dataset load_dataset(const std::string& path);

}  // namespace latalign
