#include "latalign/gradcheck.hpp"

#include <cmath>
#include <stdexcept>

namespace latalign {

Tensor finite_diff_grad(const std::function<double(const Tensor&)>& f, const Tensor& x, double h) {
    if (!(h > 0.0)) throw std::invalid_argument("finite_diff_grad: h must be positive");
    Tensor grad = Tensor::zeros(x.shape);
    Tensor probe = x.detached();
    for (std::size_t i = 0; i < x.numel(); ++i) {
        const double orig = probe.data[i];
        probe.data[i] = orig + h;
        const double fp = f(probe);
        probe.data[i] = orig - h;
        const double fm = f(probe);
        probe.data[i] = orig;
        grad.data[i] = (fp - fm) / (2.0 * h);
    }
    return grad;
}

double rel_err(double a, double b) {
    double denom = 1.0;
    if (std::abs(a) > denom) denom = std::abs(a);
    if (std::abs(b) > denom) denom = std::abs(b);
    return std::abs(a - b) / denom;
}

double max_rel_err(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) throw std::invalid_argument("max_rel_err: shape mismatch");
    double worst = 0.0;
    for (std::size_t i = 0; i < a.numel(); ++i) {
        const double e = rel_err(a.data[i], b.data[i]);
        if (e > worst) worst = e;
    }
    return worst;
}

}  // namespace latalign
