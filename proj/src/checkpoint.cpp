#include "latalign/checkpoint.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace latalign {

namespace {

constexpr char kMagic[4] = {'S', 'H', 'L', 'A'};
constexpr std::uint16_t kCkptVersion = 1;

std::uint64_t fnv1a64(const unsigned char* data, std::size_t n) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (std::size_t i = 0; i < n; ++i) {
        h ^= data[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

void put_u16(std::string& out, std::uint16_t v) {
    out.push_back(static_cast<char>(v & 0xFF));
    out.push_back(static_cast<char>(v >> 8));
}

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

struct Reader {
    const unsigned char* p;
    const unsigned char* end;
    const std::string& path;

    void need(std::size_t n) const {
        if (static_cast<std::size_t>(end - p) < n) {
            throw std::runtime_error("checkpoint: truncated file " + path);
        }
    }
    std::uint16_t u16() {
        need(2);
        std::uint16_t v = static_cast<std::uint16_t>(p[0] | (p[1] << 8));
        p += 2;
        return v;
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 3; i >= 0; --i) v = (v << 8) | p[i];
        p += 4;
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
        p += 8;
        return v;
    }
    std::string str(std::size_t n) {
        need(n);
        std::string s(reinterpret_cast<const char*>(p), n);
        p += n;
        return s;
    }
};

}  // namespace

void save_checkpoint(const std::string& path, const std::string& kind,
                     const std::vector<std::pair<std::string, const Tensor*>>& tensors) {
    std::string buf;
    buf.append(kMagic, 4);
    put_u16(buf, kCkptVersion);
    put_u32(buf, static_cast<std::uint32_t>(kind.size()));
    buf.append(kind);
    put_u32(buf, static_cast<std::uint32_t>(tensors.size()));
    for (const auto& [name, t] : tensors) {
        put_u32(buf, static_cast<std::uint32_t>(name.size()));
        buf.append(name);
        put_u32(buf, static_cast<std::uint32_t>(t->shape.size()));
        for (std::size_t d : t->shape) put_u64(buf, d);
    }

    std::string payload;
    for (const auto& [name, t] : tensors) {
        (void)name;
        for (double d : t->data) {
            std::uint64_t bits;
            std::memcpy(&bits, &d, 8);
            put_u64(payload, bits);
        }
    }
    const std::uint64_t checksum =
        fnv1a64(reinterpret_cast<const unsigned char*>(payload.data()), payload.size());
    buf += payload;
    put_u64(buf, checksum);

    const std::string tmp = path + ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os) throw std::runtime_error("checkpoint: cannot open " + tmp);
        os.write(buf.data(), static_cast<std::streamsize>(buf.size()));
        if (!os) throw std::runtime_error("checkpoint: write failed for " + tmp);
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0) {
        throw std::runtime_error("checkpoint: rename to " + path + " failed");
    }
}

std::vector<std::pair<std::string, Tensor>> load_checkpoint(const std::string& path,
                                                            const std::string& expected_kind) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("checkpoint: cannot open " + path);
    std::string buf((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());

    Reader r{reinterpret_cast<const unsigned char*>(buf.data()),
             reinterpret_cast<const unsigned char*>(buf.data()) + buf.size(), path};
    r.need(4);
    if (std::memcmp(r.p, kMagic, 4) != 0) throw std::runtime_error("checkpoint: bad magic in " + path);
    r.p += 4;
    if (r.u16() != kCkptVersion) throw std::runtime_error("checkpoint: unsupported version in " + path);
    const std::string kind = r.str(r.u32());
    if (kind != expected_kind) {
        throw std::runtime_error("checkpoint: kind mismatch in " + path + ": expected '" + expected_kind +
                                 "', found '" + kind + "'");
    }

    struct Entry {
        std::string name;
        Shape shape;
    };
    std::vector<Entry> manifest;
    const std::uint32_t count = r.u32();
    manifest.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        Entry e;
        e.name = r.str(r.u32());
        const std::uint32_t ndim = r.u32();
        for (std::uint32_t d = 0; d < ndim; ++d) e.shape.push_back(r.u64());
        manifest.push_back(std::move(e));
    }

    std::size_t payload_doubles = 0;
    for (const Entry& e : manifest) payload_doubles += shape_numel(e.shape);
    const std::size_t payload_bytes = payload_doubles * 8;
    r.need(payload_bytes + 8);
    const std::uint64_t checksum = fnv1a64(r.p, payload_bytes);

    std::vector<std::pair<std::string, Tensor>> out;
    out.reserve(manifest.size());
    for (const Entry& e : manifest) {
        Tensor t = Tensor::zeros(e.shape);
        for (double& v : t.data) {
            std::uint64_t bits = 0;
            for (int i = 7; i >= 0; --i) bits = (bits << 8) | r.p[i];
            r.p += 8;
            std::memcpy(&v, &bits, 8);
        }
        out.emplace_back(e.name, std::move(t));
    }
    const std::uint64_t stored = r.u64();
    if (stored != checksum) throw std::runtime_error("checkpoint: checksum mismatch in " + path);
    if (r.p != r.end) throw std::runtime_error("checkpoint: trailing bytes in " + path);
    return out;
}

namespace {

Tensor meta_tensor(std::initializer_list<std::size_t> dims) {
    Tensor t = Tensor::zeros({dims.size()});
    std::size_t i = 0;
    for (std::size_t d : dims) t.data[i++] = static_cast<double>(d);
    return t;
}

const Tensor& find(const std::vector<std::pair<std::string, Tensor>>& entries, const std::string& name,
                   const std::string& path) {
    for (const auto& [n, t] : entries) {
        if (n == name) return t;
    }
    throw std::runtime_error("checkpoint: missing tensor '" + name + "' in " + path);
}

void append_mlp(std::vector<std::pair<std::string, const Tensor*>>& out, const std::string& prefix,
                const Mlp& net) {
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
        out.emplace_back(prefix + ".l" + std::to_string(i) + ".w", &net.layers[i].w);
        out.emplace_back(prefix + ".l" + std::to_string(i) + ".b", &net.layers[i].b);
    }
}

Mlp read_mlp(const std::vector<std::pair<std::string, Tensor>>& entries, const std::string& prefix,
             std::size_t n_layers, const std::string& path) {
    Mlp net;
    for (std::size_t i = 0; i < n_layers; ++i) {
        DenseLayer layer;
        layer.w = find(entries, prefix + ".l" + std::to_string(i) + ".w", path);
        layer.b = find(entries, prefix + ".l" + std::to_string(i) + ".b", path);
        net.layers.push_back(std::move(layer));
    }
    return net;
}

}  // namespace

void save_denoiser(const DenoiserModel& model, const std::string& path) {
    const Tensor meta = meta_tensor({model.latent_dim, model.time_dim, model.cond_dim, model.net.layers.size()});
    std::vector<std::pair<std::string, const Tensor*>> tensors{{"meta", &meta}};
    append_mlp(tensors, "net", model.net);
    save_checkpoint(path, "denoiser", tensors);
}

DenoiserModel load_denoiser(const std::string& path) {
    const auto entries = load_checkpoint(path, "denoiser");
    const Tensor& meta = find(entries, "meta", path);
    DenoiserModel m;
    m.latent_dim = static_cast<std::size_t>(meta.data[0]);
    m.time_dim = static_cast<std::size_t>(meta.data[1]);
    m.cond_dim = static_cast<std::size_t>(meta.data[2]);
    m.net = read_mlp(entries, "net", static_cast<std::size_t>(meta.data[3]), path);
    return m;
}

void save_binder(const BinderModel& binder, const std::string& path) {
    Tensor meta = meta_tensor({binder.embed_dim, binder.enc_v.layers.size()});
    Tensor tau = Tensor::scalar(binder.tau);
    std::vector<std::pair<std::string, const Tensor*>> tensors{{"meta", &meta}, {"tau", &tau}};
    append_mlp(tensors, "v", binder.enc_v);
    append_mlp(tensors, "a", binder.enc_a);
    append_mlp(tensors, "p", binder.enc_p);
    save_checkpoint(path, "binder", tensors);
}

BinderModel load_binder(const std::string& path) {
    const auto entries = load_checkpoint(path, "binder");
    const Tensor& meta = find(entries, "meta", path);
    BinderModel b;
    b.embed_dim = static_cast<std::size_t>(meta.data[0]);
    b.tau = find(entries, "tau", path).scalar_value();
    const auto n_layers = static_cast<std::size_t>(meta.data[1]);
    b.enc_v = read_mlp(entries, "v", n_layers, path);
    b.enc_a = read_mlp(entries, "a", n_layers, path);
    b.enc_p = read_mlp(entries, "p", n_layers, path);
    return b;
}

void save_prompt_table(const PromptTable& table, const std::string& path) {
    save_checkpoint(path, "prompt-table", {{"table", &table.table}});
}

PromptTable load_prompt_table(const std::string& path) {
    const auto entries = load_checkpoint(path, "prompt-table");
    PromptTable t;
    t.table = find(entries, "table", path);
    return t;
}

void save_autoencoder(const Autoencoder& ae, const std::string& path) {
    const Tensor meta = meta_tensor(
        {static_cast<std::size_t>(ae.kind == AutoencoderKind::Affine ? 1 : 0), ae.data_dim, ae.latent_dim});
    std::vector<std::pair<std::string, const Tensor*>> tensors{{"meta", &meta}};
    if (ae.kind == AutoencoderKind::Affine) {
        tensors.emplace_back("enc.w", &ae.enc.w);
        tensors.emplace_back("enc.b", &ae.enc.b);
        tensors.emplace_back("dec.w", &ae.dec.w);
        tensors.emplace_back("dec.b", &ae.dec.b);
    }
    save_checkpoint(path, "autoencoder", tensors);
}

Autoencoder load_autoencoder(const std::string& path) {
    const auto entries = load_checkpoint(path, "autoencoder");
    const Tensor& meta = find(entries, "meta", path);
    if (meta.data[0] == 0.0) {
        return Autoencoder::identity(static_cast<std::size_t>(meta.data[1]));
    }
    Autoencoder ae;
    ae.kind = AutoencoderKind::Affine;
    ae.data_dim = static_cast<std::size_t>(meta.data[1]);
    ae.latent_dim = static_cast<std::size_t>(meta.data[2]);
    ae.enc.w = find(entries, "enc.w", path);
    ae.enc.b = find(entries, "enc.b", path);
    ae.dec.w = find(entries, "dec.w", path);
    ae.dec.b = find(entries, "dec.b", path);
    return ae;
}

}  // namespace latalign
