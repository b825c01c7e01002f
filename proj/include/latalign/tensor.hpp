#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace latalign {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

/// Dense row-major tensor of doubles. When produced by an op recorded on a
/// Tape, `node`/`tape_id` identify the producing node; value-only tensors
/// have node == -1. The pair is what lets a fresh Tape distinguish its own
/// intermediates from constants captured out of an older graph.
struct Tensor {
    Shape shape;
    std::vector<double> data;
    std::int32_t node = -1;
    std::uint64_t tape_id = 0;

    Tensor() = default;
    Tensor(Shape s, std::vector<double> d);

    static Tensor zeros(Shape s);
    static Tensor full(Shape s, double v);
    static Tensor scalar(double v);
    static Tensor vector(std::vector<double> v);
    static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> v);

    std::size_t numel() const { return data.size(); }
    bool is_scalar() const { return data.size() == 1; }
    bool is_vector() const { return shape.size() == 1; }
    bool is_matrix() const { return shape.size() == 2; }
    std::size_t rows() const;
    std::size_t cols() const;

    double scalar_value() const;  // throws unless numel() == 1
    double& operator[](std::size_t i) { return data[i]; }
    double operator[](std::size_t i) const { return data[i]; }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }
    bool all_finite() const;
    double l2_norm() const;

    /// Copy with the graph linkage stripped; use when carrying a value from
    /// one tape into the next optimization iteration.
    Tensor detached() const;
};

}  // namespace latalign
