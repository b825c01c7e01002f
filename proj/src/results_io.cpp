#include "latalign/results_io.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace latalign {

namespace {

constexpr char kMagic[4] = {'S', 'H', 'R', 'R'};
constexpr std::uint16_t kVersion = 1;

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

void put_f64(std::string& out, double d) {
    std::uint64_t bits;
    std::memcpy(&bits, &d, 8);
    put_u64(out, bits);
}

void put_str(std::string& out, const std::string& s) {
    put_u32(out, static_cast<std::uint32_t>(s.size()));
    out.append(s);
}

void put_tensor(std::string& out, const Tensor& t) {
    put_u32(out, static_cast<std::uint32_t>(t.shape.size()));
    for (std::size_t d : t.shape) put_u64(out, d);
    for (double v : t.data) put_f64(out, v);
}

void put_result(std::string& out, const GenerationResult& r) {
    out.push_back(r.sample_v.has_value() ? 1 : 0);
    if (r.sample_v) put_tensor(out, *r.sample_v);
    out.push_back(r.sample_a.has_value() ? 1 : 0);
    if (r.sample_a) put_tensor(out, *r.sample_a);
    put_tensor(out, r.prompt_embedding);
    out.push_back(r.prompt_tuned ? 1 : 0);
    put_u64(out, r.steps.size());
    for (const StepTrace& s : r.steps) {
        put_u64(out, s.step_index);
        put_u64(out, s.t);
        put_u32(out, static_cast<std::uint32_t>(s.inner_losses.size()));
        for (double v : s.inner_losses) put_f64(out, v);
        put_f64(out, s.alignment);
    }
}

struct Reader {
    const unsigned char* p;
    const unsigned char* end;

    void need(std::size_t n) const {
        if (static_cast<std::size_t>(end - p) < n) throw std::runtime_error("results: truncated file");
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
    double f64() {
        const std::uint64_t bits = u64();
        double d;
        std::memcpy(&d, &bits, 8);
        return d;
    }
    unsigned char byte() {
        need(1);
        return *p++;
    }
    std::string str() {
        const std::uint32_t n = u32();
        need(n);
        std::string s(reinterpret_cast<const char*>(p), n);
        p += n;
        return s;
    }
    Tensor tensor() {
        const std::uint32_t ndim = u32();
        Shape shape;
        for (std::uint32_t i = 0; i < ndim; ++i) shape.push_back(u64());
        Tensor t = Tensor::zeros(shape);
        for (double& v : t.data) v = f64();
        return t;
    }
    GenerationResult result() {
        GenerationResult r;
        if (byte()) r.sample_v = tensor();
        if (byte()) r.sample_a = tensor();
        r.prompt_embedding = tensor();
        r.prompt_tuned = byte() != 0;
        const std::uint64_t n = u64();
        r.steps.reserve(n);
        for (std::uint64_t i = 0; i < n; ++i) {
            StepTrace s;
            s.step_index = u64();
            s.t = u64();
            const std::uint32_t ni = u32();
            for (std::uint32_t j = 0; j < ni; ++j) s.inner_losses.push_back(f64());
            s.alignment = f64();
            r.steps.push_back(std::move(s));
        }
        return r;
    }
};

std::string read_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("results: cannot open " + path);
    return std::string((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
}

}  // namespace

void save_results(const RunFile& file, const std::string& path) {
    std::string payload;
    put_str(payload, file.task);
    put_str(payload, file.config_echo);
    put_u64(payload, file.runs.size());
    for (const RunRecord& run : file.runs) {
        put_u64(payload, run.run_index);
        put_u64(payload, run.run_seed);
        put_u64(payload, run.true_class);
        put_u64(payload, static_cast<std::uint64_t>(run.caption_class));
        put_tensor(payload, run.condition.numel() ? run.condition : Tensor::zeros({1}));
        payload.push_back(run.condition.numel() ? 1 : 0);
        put_result(payload, run.vanilla);
        put_result(payload, run.guided);
    }

    std::string buf;
    buf.append(kMagic, 4);
    put_u16(buf, kVersion);
    put_u64(buf, payload.size());
    buf += payload;
    for (const RunRecord& run : file.runs) {  // non-deterministic footer
        put_f64(buf, run.vanilla.duration_ms);
        put_f64(buf, run.guided.duration_ms);
    }

    const std::string tmp = path + ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os) throw std::runtime_error("results: cannot open " + tmp);
        os.write(buf.data(), static_cast<std::streamsize>(buf.size()));
        if (!os) throw std::runtime_error("results: write failed for " + tmp);
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0) {
        throw std::runtime_error("results: rename to " + path + " failed");
    }
}

RunFile load_results(const std::string& path) {
    const std::string buf = read_file(path);
    Reader r{reinterpret_cast<const unsigned char*>(buf.data()),
             reinterpret_cast<const unsigned char*>(buf.data()) + buf.size()};
    r.need(4);
    if (std::memcmp(r.p, kMagic, 4) != 0) throw std::runtime_error("results: bad magic in " + path);
    r.p += 4;
    if (r.u16() != kVersion) throw std::runtime_error("results: unsupported version in " + path);
    const std::uint64_t payload_size = r.u64();
    (void)payload_size;

    RunFile file;
    file.task = r.str();
    file.config_echo = r.str();
    const std::uint64_t n = r.u64();
    file.runs.reserve(n);
    for (std::uint64_t i = 0; i < n; ++i) {
        RunRecord run;
        run.run_index = r.u64();
        run.run_seed = r.u64();
        run.true_class = r.u64();
        run.caption_class = static_cast<std::ptrdiff_t>(r.u64());
        Tensor cond = r.tensor();
        if (r.byte()) run.condition = std::move(cond);
        run.vanilla = r.result();
        run.guided = r.result();
        file.runs.push_back(std::move(run));
    }
    for (RunRecord& run : file.runs) {
        run.vanilla.duration_ms = r.f64();
        run.guided.duration_ms = r.f64();
    }
    return file;
}

std::vector<unsigned char> results_payload_bytes(const std::string& path) {
    const std::string buf = read_file(path);
    Reader r{reinterpret_cast<const unsigned char*>(buf.data()),
             reinterpret_cast<const unsigned char*>(buf.data()) + buf.size()};
    r.need(4);
    if (std::memcmp(r.p, kMagic, 4) != 0) throw std::runtime_error("results: bad magic in " + path);
    r.p += 4;
    r.u16();
    const std::uint64_t payload_size = r.u64();
    r.need(payload_size);
    return std::vector<unsigned char>(r.p, r.p + payload_size);
}

}  // namespace latalign
