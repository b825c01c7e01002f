#include "latalign/world.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace latalign {

namespace {
constexpr char kMagic[4] = {'S', 'H', 'D', 'S'};
constexpr std::uint16_t kVersion = 1;

void write_u16(std::ostream& os, std::uint16_t v) {
    unsigned char b[2] = {static_cast<unsigned char>(v & 0xFF), static_cast<unsigned char>(v >> 8)};
    os.write(reinterpret_cast<const char*>(b), 2);
}

void write_u64(std::ostream& os, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xFF);
    os.write(reinterpret_cast<const char*>(b), 8);
}

void write_f64(std::ostream& os, double d) {
    std::uint64_t bits;
    std::memcpy(&bits, &d, 8);
    write_u64(os, bits);
}

std::uint16_t read_u16(std::istream& is) {
    unsigned char b[2];
    is.read(reinterpret_cast<char*>(b), 2);
    if (!is) throw std::runtime_error("dataset: truncated file");
    return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
}

std::uint64_t read_u64(std::istream& is) {
    unsigned char b[8];
    is.read(reinterpret_cast<char*>(b), 8);
    if (!is) throw std::runtime_error("dataset: truncated file");
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
    return v;
}

double read_f64(std::istream& is) {
    const std::uint64_t bits = read_u64(is);
    double d;
    std::memcpy(&d, &bits, 8);
    return d;
}
}  // namespace

void WorldSpec::validate() const {
    if (factor_dim < 1) throw std::invalid_argument("world spec: factor_dim must be >= 1");
    if (classes < 2) throw std::invalid_argument("world spec: classes must be >= 2");
    if (dv < factor_dim || da < factor_dim) {
        throw std::invalid_argument("world spec: modality widths must be >= factor_dim");
    }
    if (sigma < 0.0 || jitter < 0.0) throw std::invalid_argument("world spec: sigma and jitter must be >= 0");
}

Tensor SineMap::operator()(const Tensor& c) const {
    if (!c.is_vector() || c.numel() != w1.cols()) {
        throw std::invalid_argument("sine map: input width " + shape_str(c.shape));
    }
    const std::size_t hidden = w1.rows(), out_dim = w2.rows();
    Tensor h = Tensor::zeros({hidden});
    for (std::size_t i = 0; i < hidden; ++i) {
        double acc = b1.data[i];
        for (std::size_t j = 0; j < c.numel(); ++j) acc += w1.data[i * c.numel() + j] * c.data[j];
        h.data[i] = std::sin(acc);
    }
    Tensor out = Tensor::zeros({out_dim});
    for (std::size_t i = 0; i < out_dim; ++i) {
        double acc = b2.data[i];
        for (std::size_t j = 0; j < hidden; ++j) acc += w2.data[i * hidden + j] * h.data[j];
        out.data[i] = acc;
    }
    return out;
}

SineMap SineMap::init(std::size_t in, std::size_t hidden, std::size_t out, Rng& rng) {
    SineMap m;
    m.w1 = rng.normal_tensor({hidden, in}, 1.0 / std::sqrt(static_cast<double>(in)));
    m.b1 = rng.normal_tensor({hidden});
    m.w2 = rng.normal_tensor({out, hidden}, 1.7 / std::sqrt(static_cast<double>(hidden)));
    m.b2 = rng.normal_tensor({out}, 0.1);
    return m;
}

World make_world(const WorldSpec& spec, std::uint64_t seed) {
    spec.validate();
    World world;
    world.spec = spec;
    world.seed = seed;

    Rng rng_v(derive_stream(spec.map_seed_v, 1));
    Rng rng_a(derive_stream(spec.map_seed_a, 2));
    world.g_v = SineMap::init(spec.factor_dim, spec.dv, spec.dv, rng_v);
    world.g_a = SineMap::init(spec.factor_dim, spec.da, spec.da, rng_a);

    // Greedy maximin prototype placement: deterministic and keeps classes
    // separated even at small factor_dim.
    Rng rng_p(derive_stream(seed, 3));
    world.prototypes.reserve(spec.classes);
    world.prototypes.push_back(rng_p.normal_tensor({spec.factor_dim}, 1.5));
    while (world.prototypes.size() < spec.classes) {
        Tensor best;
        double best_score = -1.0;
        for (int cand = 0; cand < 64; ++cand) {
            Tensor c = rng_p.normal_tensor({spec.factor_dim}, 1.5);
            double min_dist = 1e300;
            for (const Tensor& p : world.prototypes) {
                double d2 = 0.0;
                for (std::size_t j = 0; j < c.numel(); ++j) {
                    const double d = c.data[j] - p.data[j];
                    d2 += d * d;
                }
                min_dist = std::min(min_dist, d2);
            }
            if (min_dist > best_score) {
                best_score = min_dist;
                best = std::move(c);
            }
        }
        world.prototypes.push_back(std::move(best));
    }
    return world;
}

PairedSample sample_pair(const World& world, std::size_t class_id, std::uint64_t seed) {
    if (class_id >= world.spec.classes) {
        throw std::invalid_argument("sample_pair: class " + std::to_string(class_id) + " out of range");
    }
    Rng rng(seed);
    PairedSample s;
    s.class_id = class_id;
    s.factors = world.prototypes[class_id].detached();
    for (double& v : s.factors.data) v += world.spec.jitter * rng.normal();
    s.v = world.g_v(s.factors);
    s.a = world.g_a(s.factors);
    for (double& v : s.v.data) v += world.spec.sigma * rng.normal();
    for (double& v : s.a.data) v += world.spec.sigma * rng.normal();
    return s;
}

Dataset generate_dataset(const World& world, std::size_t per_class, std::uint64_t seed) {
    if (per_class == 0) throw std::invalid_argument("generate_dataset: per_class must be >= 1");
    Dataset ds;
    ds.spec = world.spec;
    ds.world_seed = world.seed;
    ds.samples.reserve(per_class * world.spec.classes);
    std::uint64_t draw = 0;
    for (std::size_t c = 0; c < world.spec.classes; ++c) {
        for (std::size_t i = 0; i < per_class; ++i) {
            ds.samples.push_back(sample_pair(world, c, derive_stream(seed, draw++)));
        }
    }
    Rng rng(derive_stream(seed, 0xDA7A));
    rng.shuffle(ds.samples);
    return ds;
}

void save_dataset(const Dataset& ds, const std::string& path) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os) throw std::runtime_error("dataset: cannot open " + tmp + " for writing");
        os.write(kMagic, 4);
        write_u16(os, kVersion);
        write_u64(os, ds.spec.factor_dim);
        write_u64(os, ds.spec.classes);
        write_u64(os, ds.spec.dv);
        write_u64(os, ds.spec.da);
        write_f64(os, ds.spec.sigma);
        write_f64(os, ds.spec.jitter);
        write_u64(os, ds.spec.map_seed_v);
        write_u64(os, ds.spec.map_seed_a);
        write_u64(os, ds.world_seed);
        write_u64(os, ds.samples.size());
        for (const PairedSample& s : ds.samples) {
            write_f64(os, static_cast<double>(s.class_id));
            for (double v : s.factors.data) write_f64(os, v);
            for (double v : s.v.data) write_f64(os, v);
            for (double v : s.a.data) write_f64(os, v);
        }
        if (!os) throw std::runtime_error("dataset: write failed for " + tmp);
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0) {
        throw std::runtime_error("dataset: rename to " + path + " failed");
    }
}

Dataset load_dataset(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("dataset: cannot open " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kMagic, 4) != 0) throw std::runtime_error("dataset: bad magic in " + path);
    const std::uint16_t version = read_u16(is);
    if (version != kVersion) throw std::runtime_error("dataset: unsupported version");

    Dataset ds;
    ds.spec.factor_dim = read_u64(is);
    ds.spec.classes = read_u64(is);
    ds.spec.dv = read_u64(is);
    ds.spec.da = read_u64(is);
    ds.spec.sigma = read_f64(is);
    ds.spec.jitter = read_f64(is);
    ds.spec.map_seed_v = read_u64(is);
    ds.spec.map_seed_a = read_u64(is);
    ds.world_seed = read_u64(is);
    const std::uint64_t n = read_u64(is);
    ds.samples.reserve(n);
    for (std::uint64_t i = 0; i < n; ++i) {
        PairedSample s;
        s.class_id = static_cast<std::size_t>(read_f64(is));
        s.factors = Tensor::zeros({ds.spec.factor_dim});
        for (double& v : s.factors.data) v = read_f64(is);
        s.v = Tensor::zeros({ds.spec.dv});
        for (double& v : s.v.data) v = read_f64(is);
        s.a = Tensor::zeros({ds.spec.da});
        for (double& v : s.a.data) v = read_f64(is);
        ds.samples.push_back(std::move(s));
    }
    return ds;
}

}  // namespace latalign
