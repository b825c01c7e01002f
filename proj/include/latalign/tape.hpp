#pragma once

#include <cstdint>
#include <span>
#include <unordered_map>
#include <vector>

#include "latalign/tensor.hpp"

namespace latalign {

enum class OpKind {
    MatMul,
    Add,
    Mul,           // elementwise multiply
    ScalarScale,   // inputs (x, s) with s a one-element tensor
    Tanh,
    Softplus,
    Sum,
    Mean,
    L2Normalize,
    CosineSimilarity,
    SquaredError,  // sum of squared differences
    Concat,
};

const char* op_name(OpKind kind);

/// Evaluate a primitive without recording anything. Shape rules and the
/// near-zero-norm guards are enforced here; the recorded path reuses this.
Tensor eval_primitive(OpKind kind, std::span<const Tensor> inputs);

/// node id of a root -> gradient tensor (shape of the root).
using GradientMap = std::unordered_map<std::int32_t, Tensor>;

/// Reverse-mode tape. Nodes are appended during forward evaluation, so
/// insertion order is already a topological order and backward() is a single
/// reverse sweep that visits each node once. A tape is confined to one
/// thread; independent tapes can run concurrently.
class Tape {
public:
    Tape();
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    /// Register a value as a differentiation root (leaf). Returns a copy
    /// linked to this tape.
    Tensor watch(const Tensor& t);

    /// Record one primitive application. Inputs produced by this tape keep
    /// their graph linkage; anything else participates as a constant.
    Tensor apply(OpKind kind, std::span<const Tensor> inputs);

    /// Gradients of a scalar loss with respect to every root. Roots that the
    /// loss does not reach get zero gradients.
    GradientMap backward(const Tensor& loss) const;

    std::size_t size() const { return nodes_.size(); }
    std::uint64_t id() const { return id_; }

private:
    struct Node {
        OpKind kind;
        bool leaf = false;
        std::vector<std::int32_t> inputs;   // node id per input, -1 for constants
        std::vector<Tensor> input_values;   // detached input snapshots
        Tensor output;                      // detached output snapshot
    };

    std::vector<Node> nodes_;
    std::vector<std::int32_t> roots_;
    std::uint64_t id_;
};

// Primitive helpers. Passing tape == nullptr evaluates without recording;
// this is the one forward-code path shared by training, guidance, and the
// finite-difference oracle.
Tensor matmul(Tape* tape, const Tensor& a, const Tensor& b);
Tensor add(Tape* tape, const Tensor& a, const Tensor& b);
Tensor mul(Tape* tape, const Tensor& a, const Tensor& b);
Tensor scalar_scale(Tape* tape, const Tensor& x, const Tensor& s);
Tensor scale(Tape* tape, const Tensor& x, double c);  // constant factor
Tensor sub(Tape* tape, const Tensor& a, const Tensor& b);
Tensor tanh(Tape* tape, const Tensor& x);
Tensor softplus(Tape* tape, const Tensor& x);
Tensor sum(Tape* tape, const Tensor& x);
Tensor mean(Tape* tape, const Tensor& x);
Tensor l2_normalize(Tape* tape, const Tensor& x);
Tensor cosine_similarity(Tape* tape, const Tensor& a, const Tensor& b);
Tensor squared_error(Tape* tape, const Tensor& a, const Tensor& b);
Tensor concat(Tape* tape, std::span<const Tensor> parts);

}  // namespace latalign
