#include "latalign/tensor.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace latalign {

std::size_t shape_numel(const Shape& s) {
    std::size_t n = 1;
    for (std::size_t d : s) n *= d;
    return n;
}

std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "(";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) os << ",";
        os << s[i];
    }
    os << ")";
    return os.str();
}

Tensor::Tensor(Shape s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
    if (shape_numel(shape) != data.size()) {
        throw std::invalid_argument("tensor: shape " + shape_str(shape) + " does not match data length " +
                                    std::to_string(data.size()));
    }
    for (std::size_t d_i : shape) {
        if (d_i == 0) throw std::invalid_argument("tensor: zero dimension in shape " + shape_str(shape));
    }
}

Tensor Tensor::zeros(Shape s) {
    std::size_t n = shape_numel(s);
    return Tensor(std::move(s), std::vector<double>(n, 0.0));
}

Tensor Tensor::full(Shape s, double v) {
    std::size_t n = shape_numel(s);
    return Tensor(std::move(s), std::vector<double>(n, v));
}

Tensor Tensor::scalar(double v) { return Tensor({1}, {v}); }

Tensor Tensor::vector(std::vector<double> v) {
    Shape s{v.size()};
    return Tensor(std::move(s), std::move(v));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> v) {
    return Tensor({rows, cols}, std::move(v));
}

std::size_t Tensor::rows() const {
    if (!is_matrix()) throw std::invalid_argument("tensor: rows() on non-matrix " + shape_str(shape));
    return shape[0];
}

std::size_t Tensor::cols() const {
    if (!is_matrix()) throw std::invalid_argument("tensor: cols() on non-matrix " + shape_str(shape));
    return shape[1];
}

double Tensor::scalar_value() const {
    if (!is_scalar()) throw std::invalid_argument("tensor: scalar_value() on shape " + shape_str(shape));
    return data[0];
}

bool Tensor::all_finite() const {
    for (double v : data) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

double Tensor::l2_norm() const {
    double s = 0.0;
    for (double v : data) s += v * v;
    return std::sqrt(s);
}

Tensor Tensor::detached() const {
    Tensor t = *this;
    t.node = -1;
    t.tape_id = 0;
    return t;
}

}  // namespace latalign
