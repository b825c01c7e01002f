#include "latalign/tape.hpp"

#include <atomic>
#include <cmath>
#include <stdexcept>
#include <string>

namespace latalign {

namespace {

constexpr double kMinNorm = 1e-12;

std::atomic<std::uint64_t> g_tape_counter{1};

[[noreturn]] void shape_error(OpKind kind, const std::string& detail) {
    throw std::invalid_argument(std::string(op_name(kind)) + ": " + detail);
}

void require_vector(OpKind kind, const Tensor& t, const char* what) {
    if (!t.is_vector()) shape_error(kind, std::string(what) + " must be 1-D, got " + shape_str(t.shape));
}

void require_same_shape(OpKind kind, const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) {
        shape_error(kind, "shape mismatch " + shape_str(a.shape) + " vs " + shape_str(b.shape));
    }
}

double stable_softplus(double x) {
    if (x > 0.0) return x + std::log1p(std::exp(-x));
    return std::log1p(std::exp(x));
}

double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    double e = std::exp(x);
    return e / (1.0 + e);
}

Tensor eval_matmul(const Tensor& a, const Tensor& b) {
    if (!a.is_matrix()) shape_error(OpKind::MatMul, "left operand must be 2-D, got " + shape_str(a.shape));
    const std::size_t m = a.rows(), k = a.cols();
    if (b.is_vector()) {
        if (b.shape[0] != k) {
            shape_error(OpKind::MatMul, "inner dimensions " + shape_str(a.shape) + " x " + shape_str(b.shape));
        }
        Tensor out = Tensor::zeros({m});
        for (std::size_t i = 0; i < m; ++i) {
            double acc = 0.0;
            const double* row = a.data.data() + i * k;
            for (std::size_t j = 0; j < k; ++j) acc += row[j] * b.data[j];
            out.data[i] = acc;
        }
        return out;
    }
    if (!b.is_matrix() || b.rows() != k) {
        shape_error(OpKind::MatMul, "inner dimensions " + shape_str(a.shape) + " x " + shape_str(b.shape));
    }
    const std::size_t n = b.cols();
    Tensor out = Tensor::zeros({m, n});
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t l = 0; l < k; ++l) {
            const double av = a.data[i * k + l];
            if (av == 0.0) continue;
            const double* brow = b.data.data() + l * n;
            double* orow = out.data.data() + i * n;
            for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
        }
    }
    return out;
}

}  // namespace

const char* op_name(OpKind kind) {
    switch (kind) {
        case OpKind::MatMul: return "matmul";
        case OpKind::Add: return "add";
        case OpKind::Mul: return "elementwise-multiply";
        case OpKind::ScalarScale: return "scalar-scale";
        case OpKind::Tanh: return "tanh";
        case OpKind::Softplus: return "softplus";
        case OpKind::Sum: return "sum";
        case OpKind::Mean: return "mean";
        case OpKind::L2Normalize: return "l2-normalize";
        case OpKind::CosineSimilarity: return "cosine-similarity";
        case OpKind::SquaredError: return "squared-error";
        case OpKind::Concat: return "concatenate";
    }
    return "?";
}

Tensor eval_primitive(OpKind kind, std::span<const Tensor> in) {
    auto arity = [&](std::size_t n) {
        if (in.size() != n) {
            shape_error(kind, "expects " + std::to_string(n) + " inputs, got " + std::to_string(in.size()));
        }
    };
    switch (kind) {
        case OpKind::MatMul:
            arity(2);
            return eval_matmul(in[0], in[1]);
        case OpKind::Add: {
            arity(2);
            require_same_shape(kind, in[0], in[1]);
            Tensor out = in[0].detached();
            for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] += in[1].data[i];
            return out;
        }
        case OpKind::Mul: {
            arity(2);
            require_same_shape(kind, in[0], in[1]);
            Tensor out = in[0].detached();
            for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] *= in[1].data[i];
            return out;
        }
        case OpKind::ScalarScale: {
            arity(2);
            if (!in[1].is_scalar()) shape_error(kind, "second input must be scalar, got " + shape_str(in[1].shape));
            const double s = in[1].data[0];
            Tensor out = in[0].detached();
            for (double& v : out.data) v *= s;
            return out;
        }
        case OpKind::Tanh: {
            arity(1);
            Tensor out = in[0].detached();
            for (double& v : out.data) v = std::tanh(v);
            return out;
        }
        case OpKind::Softplus: {
            arity(1);
            Tensor out = in[0].detached();
            for (double& v : out.data) v = stable_softplus(v);
            return out;
        }
        case OpKind::Sum: {
            arity(1);
            double acc = 0.0;
            for (double v : in[0].data) acc += v;
            return Tensor::scalar(acc);
        }
        case OpKind::Mean: {
            arity(1);
            double acc = 0.0;
            for (double v : in[0].data) acc += v;
            return Tensor::scalar(acc / static_cast<double>(in[0].numel()));
        }
        case OpKind::L2Normalize: {
            arity(1);
            require_vector(kind, in[0], "input");
            const double r = in[0].l2_norm();
            if (r < kMinNorm) shape_error(kind, "near-zero norm (degenerate embedding)");
            Tensor out = in[0].detached();
            for (double& v : out.data) v /= r;
            return out;
        }
        case OpKind::CosineSimilarity: {
            arity(2);
            require_vector(kind, in[0], "left");
            require_vector(kind, in[1], "right");
            require_same_shape(kind, in[0], in[1]);
            const double ra = in[0].l2_norm(), rb = in[1].l2_norm();
            if (ra < kMinNorm || rb < kMinNorm) shape_error(kind, "near-zero norm");
            double dot = 0.0;
            for (std::size_t i = 0; i < in[0].numel(); ++i) dot += in[0].data[i] * in[1].data[i];
            return Tensor::scalar(dot / (ra * rb));
        }
        case OpKind::SquaredError: {
            arity(2);
            require_same_shape(kind, in[0], in[1]);
            double acc = 0.0;
            for (std::size_t i = 0; i < in[0].numel(); ++i) {
                const double d = in[0].data[i] - in[1].data[i];
                acc += d * d;
            }
            return Tensor::scalar(acc);
        }
        case OpKind::Concat: {
            if (in.empty()) shape_error(kind, "needs at least one input");
            std::size_t n = 0;
            for (const Tensor& t : in) {
                require_vector(kind, t, "input");
                n += t.numel();
            }
            Tensor out = Tensor::zeros({n});
            std::size_t off = 0;
            for (const Tensor& t : in) {
                for (std::size_t i = 0; i < t.numel(); ++i) out.data[off + i] = t.data[i];
                off += t.numel();
            }
            return out;
        }
    }
    shape_error(kind, "unknown primitive");
}

Tape::Tape() : id_(g_tape_counter.fetch_add(1, std::memory_order_relaxed)) {}

Tensor Tape::watch(const Tensor& t) {
    Node node;
    node.kind = OpKind::Add;  // unused for leaves
    node.leaf = true;
    node.output = t.detached();
    const auto idx = static_cast<std::int32_t>(nodes_.size());
    nodes_.push_back(std::move(node));
    roots_.push_back(idx);
    Tensor out = t.detached();
    out.node = idx;
    out.tape_id = id_;
    return out;
}

Tensor Tape::apply(OpKind kind, std::span<const Tensor> inputs) {
    Tensor value = eval_primitive(kind, inputs);
    Node node;
    node.kind = kind;
    node.inputs.reserve(inputs.size());
    node.input_values.reserve(inputs.size());
    for (const Tensor& t : inputs) {
        node.inputs.push_back(t.tape_id == id_ ? t.node : -1);
        node.input_values.push_back(t.detached());
    }
    node.output = value;
    const auto idx = static_cast<std::int32_t>(nodes_.size());
    nodes_.push_back(std::move(node));
    value.node = idx;
    value.tape_id = id_;
    return value;
}

GradientMap Tape::backward(const Tensor& loss) const {
    if (!loss.is_scalar()) {
        throw std::invalid_argument("backward: loss must be scalar, got " + shape_str(loss.shape));
    }
    if (loss.tape_id != id_ || loss.node < 0 || loss.node >= static_cast<std::int32_t>(nodes_.size())) {
        throw std::invalid_argument("backward: loss is not a node of this tape");
    }

    // Adjoints are allocated lazily; nodes never reached keep an empty tensor.
    std::vector<Tensor> adjoint(nodes_.size());
    auto touch = [&](std::int32_t idx, const Shape& shape) -> Tensor& {
        Tensor& a = adjoint[static_cast<std::size_t>(idx)];
        if (a.numel() == 0) a = Tensor::zeros(shape);
        return a;
    };
    touch(loss.node, {1}).data[0] = 1.0;

    for (std::int32_t i = loss.node; i >= 0; --i) {
        const Node& node = nodes_[static_cast<std::size_t>(i)];
        const Tensor& g = adjoint[static_cast<std::size_t>(i)];
        if (node.leaf || g.numel() == 0) continue;

        auto acc = [&](std::size_t input_idx, const Tensor& delta) {
            const std::int32_t src = node.inputs[input_idx];
            if (src < 0) return;  // constant input
            Tensor& a = touch(src, node.input_values[input_idx].shape);
            for (std::size_t j = 0; j < a.numel(); ++j) a.data[j] += delta.data[j];
        };
        const std::vector<Tensor>& iv = node.input_values;

        switch (node.kind) {
            case OpKind::MatMul: {
                const Tensor& a = iv[0];
                const std::size_t m = a.rows(), k = a.cols();
                if (iv[1].is_vector()) {
                    // y = A x : dA = g xT, dx = AT g
                    Tensor da = Tensor::zeros(a.shape);
                    Tensor dx = Tensor::zeros(iv[1].shape);
                    for (std::size_t r = 0; r < m; ++r) {
                        const double gr = g.data[r];
                        for (std::size_t c = 0; c < k; ++c) {
                            da.data[r * k + c] = gr * iv[1].data[c];
                            dx.data[c] += a.data[r * k + c] * gr;
                        }
                    }
                    acc(0, da);
                    acc(1, dx);
                } else {
                    const std::size_t n = iv[1].cols();
                    Tensor da = Tensor::zeros(a.shape);
                    Tensor db = Tensor::zeros(iv[1].shape);
                    for (std::size_t r = 0; r < m; ++r) {
                        for (std::size_t c = 0; c < k; ++c) {
                            double acc_da = 0.0;
                            for (std::size_t j = 0; j < n; ++j) acc_da += g.data[r * n + j] * iv[1].data[c * n + j];
                            da.data[r * k + c] = acc_da;
                        }
                    }
                    for (std::size_t c = 0; c < k; ++c) {
                        for (std::size_t j = 0; j < n; ++j) {
                            double acc_db = 0.0;
                            for (std::size_t r = 0; r < m; ++r) acc_db += a.data[r * k + c] * g.data[r * n + j];
                            db.data[c * n + j] = acc_db;
                        }
                    }
                    acc(0, da);
                    acc(1, db);
                }
                break;
            }
            case OpKind::Add:
                acc(0, g);
                acc(1, g);
                break;
            case OpKind::Mul: {
                Tensor da = g;
                Tensor db = g;
                for (std::size_t j = 0; j < g.numel(); ++j) {
                    da.data[j] *= iv[1].data[j];
                    db.data[j] *= iv[0].data[j];
                }
                acc(0, da);
                acc(1, db);
                break;
            }
            case OpKind::ScalarScale: {
                const double s = iv[1].data[0];
                Tensor dx = g;
                for (double& v : dx.data) v *= s;
                acc(0, dx);
                double ds = 0.0;
                for (std::size_t j = 0; j < g.numel(); ++j) ds += g.data[j] * iv[0].data[j];
                acc(1, Tensor::scalar(ds));
                break;
            }
            case OpKind::Tanh: {
                Tensor dx = g;
                for (std::size_t j = 0; j < g.numel(); ++j) {
                    const double y = node.output.data[j];
                    dx.data[j] *= (1.0 - y * y);
                }
                acc(0, dx);
                break;
            }
            case OpKind::Softplus: {
                Tensor dx = g;
                for (std::size_t j = 0; j < g.numel(); ++j) dx.data[j] *= sigmoid(iv[0].data[j]);
                acc(0, dx);
                break;
            }
            case OpKind::Sum:
                acc(0, Tensor::full(iv[0].shape, g.data[0]));
                break;
            case OpKind::Mean:
                acc(0, Tensor::full(iv[0].shape, g.data[0] / static_cast<double>(iv[0].numel())));
                break;
            case OpKind::L2Normalize: {
                const double r = iv[0].l2_norm();
                double ydotg = 0.0;
                for (std::size_t j = 0; j < g.numel(); ++j) ydotg += node.output.data[j] * g.data[j];
                Tensor dx = g;
                for (std::size_t j = 0; j < g.numel(); ++j) {
                    dx.data[j] = (g.data[j] - node.output.data[j] * ydotg) / r;
                }
                acc(0, dx);
                break;
            }
            case OpKind::CosineSimilarity: {
                const double ra = iv[0].l2_norm(), rb = iv[1].l2_norm();
                const double c = node.output.data[0];
                const double g0 = g.data[0];
                Tensor da = Tensor::zeros(iv[0].shape);
                Tensor db = Tensor::zeros(iv[1].shape);
                for (std::size_t j = 0; j < iv[0].numel(); ++j) {
                    da.data[j] = g0 * (iv[1].data[j] / (ra * rb) - c * iv[0].data[j] / (ra * ra));
                    db.data[j] = g0 * (iv[0].data[j] / (ra * rb) - c * iv[1].data[j] / (rb * rb));
                }
                acc(0, da);
                acc(1, db);
                break;
            }
            case OpKind::SquaredError: {
                const double g0 = g.data[0];
                Tensor da = Tensor::zeros(iv[0].shape);
                for (std::size_t j = 0; j < iv[0].numel(); ++j) {
                    da.data[j] = 2.0 * g0 * (iv[0].data[j] - iv[1].data[j]);
                }
                Tensor db = da;
                for (double& v : db.data) v = -v;
                acc(0, da);
                acc(1, db);
                break;
            }
            case OpKind::Concat: {
                std::size_t off = 0;
                for (std::size_t p = 0; p < iv.size(); ++p) {
                    Tensor part = Tensor::zeros(iv[p].shape);
                    for (std::size_t j = 0; j < part.numel(); ++j) part.data[j] = g.data[off + j];
                    off += part.numel();
                    acc(p, part);
                }
                break;
            }
        }
    }

    GradientMap grads;
    grads.reserve(roots_.size());
    for (std::int32_t r : roots_) {
        Tensor& a = adjoint[static_cast<std::size_t>(r)];
        if (a.numel() == 0) a = Tensor::zeros(nodes_[static_cast<std::size_t>(r)].output.shape);
        grads.emplace(r, std::move(a));
    }
    return grads;
}

namespace {
Tensor dispatch(Tape* tape, OpKind kind, std::span<const Tensor> inputs) {
    return tape ? tape->apply(kind, inputs) : eval_primitive(kind, inputs);
}
}  // namespace

Tensor matmul(Tape* tape, const Tensor& a, const Tensor& b) {
    const Tensor in[] = {a, b};
    return dispatch(tape, OpKind::MatMul, in);
}

Tensor add(Tape* tape, const Tensor& a, const Tensor& b) {
    const Tensor in[] = {a, b};
    return dispatch(tape, OpKind::Add, in);
}

Tensor mul(Tape* tape, const Tensor& a, const Tensor& b) {
    const Tensor in[] = {a, b};
    return dispatch(tape, OpKind::Mul, in);
}

Tensor scalar_scale(Tape* tape, const Tensor& x, const Tensor& s) {
    const Tensor in[] = {x, s};
    return dispatch(tape, OpKind::ScalarScale, in);
}

Tensor scale(Tape* tape, const Tensor& x, double c) { return scalar_scale(tape, x, Tensor::scalar(c)); }

Tensor sub(Tape* tape, const Tensor& a, const Tensor& b) { return add(tape, a, scale(tape, b, -1.0)); }

Tensor tanh(Tape* tape, const Tensor& x) {
    const Tensor in[] = {x};
    return dispatch(tape, OpKind::Tanh, in);
}

Tensor softplus(Tape* tape, const Tensor& x) {
    const Tensor in[] = {x};
    return dispatch(tape, OpKind::Softplus, in);
}

Tensor sum(Tape* tape, const Tensor& x) {
    const Tensor in[] = {x};
    return dispatch(tape, OpKind::Sum, in);
}

Tensor mean(Tape* tape, const Tensor& x) {
    const Tensor in[] = {x};
    return dispatch(tape, OpKind::Mean, in);
}

Tensor l2_normalize(Tape* tape, const Tensor& x) {
    const Tensor in[] = {x};
    return dispatch(tape, OpKind::L2Normalize, in);
}

Tensor cosine_similarity(Tape* tape, const Tensor& a, const Tensor& b) {
    const Tensor in[] = {a, b};
    return dispatch(tape, OpKind::CosineSimilarity, in);
}

Tensor squared_error(Tape* tape, const Tensor& a, const Tensor& b) {
    const Tensor in[] = {a, b};
    return dispatch(tape, OpKind::SquaredError, in);
}

Tensor concat(Tape* tape, std::span<const Tensor> parts) { return dispatch(tape, OpKind::Concat, parts); }

}  // namespace latalign
