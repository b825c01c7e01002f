#include "latalign/schedule.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace latalign {

namespace {
constexpr double kMinAlphaBar = 1e-12;

void check_step(const NoiseSchedule& s, std::size_t t, const char* who) {
    if (t < 1 || t > s.T) {
        throw std::invalid_argument(std::string(who) + ": step " + std::to_string(t) + " outside [1, " +
                                    std::to_string(s.T) + "]");
    }
}
}  // namespace

double NoiseSchedule::beta(std::size_t t) const {
    check_step(*this, t, "beta");
    return betas[t - 1];
}

double NoiseSchedule::alpha(std::size_t t) const {
    check_step(*this, t, "alpha");
    return alphas[t - 1];
}

double NoiseSchedule::alpha_bar(std::size_t t) const {
    if (t == 0) return 1.0;
    check_step(*this, t, "alpha_bar");
    return alpha_bars[t - 1];
}

NoiseSchedule make_linear_schedule(std::size_t T, double beta_start, double beta_end) {
    if (T < 2) throw std::invalid_argument("make_linear_schedule: T must be >= 2");
    if (!(beta_start > 0.0) || !(beta_start <= beta_end) || !(beta_end < 1.0)) {
        throw std::invalid_argument("make_linear_schedule: need 0 < beta_start <= beta_end < 1");
    }
    NoiseSchedule s;
    s.T = T;
    s.betas.resize(T);
    s.alphas.resize(T);
    s.alpha_bars.resize(T);
    double prod = 1.0;
    for (std::size_t i = 0; i < T; ++i) {
        const double frac = static_cast<double>(i) / static_cast<double>(T - 1);
        s.betas[i] = beta_start + (beta_end - beta_start) * frac;
        s.alphas[i] = 1.0 - s.betas[i];
        prod *= s.alphas[i];
        s.alpha_bars[i] = prod;
    }
    return s;
}

Tensor q_sample(const Tensor& z0, std::size_t t, const Tensor& eps, const NoiseSchedule& schedule) {
    check_step(schedule, t, "q_sample");
    if (!z0.same_shape(eps)) {
        throw std::invalid_argument("q_sample: shape mismatch " + shape_str(z0.shape) + " vs " +
                                    shape_str(eps.shape));
    }
    const double ab = schedule.alpha_bar(t);
    const double c0 = std::sqrt(ab);
    const double ce = std::sqrt(1.0 - ab);
    Tensor out = z0.detached();
    for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] = c0 * z0.data[i] + ce * eps.data[i];
    return out;
}

Tensor predict_z0(const Tensor& z_t, const Tensor& eps_hat, std::size_t t, const NoiseSchedule& schedule) {
    check_step(schedule, t, "predict_z0");
    if (!z_t.same_shape(eps_hat)) {
        throw std::invalid_argument("predict_z0: shape mismatch " + shape_str(z_t.shape) + " vs " +
                                    shape_str(eps_hat.shape));
    }
    const double ab = schedule.alpha_bar(t);
    if (ab < kMinAlphaBar) throw std::invalid_argument("predict_z0: alpha_bar below 1e-12, schedule misuse");
    const double cz = 1.0 / std::sqrt(ab);
    const double ce = std::sqrt((1.0 - ab) / ab);
    Tensor out = z_t.detached();
    for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] = cz * z_t.data[i] - ce * eps_hat.data[i];
    return out;
}

Tensor predict_z0_on_tape(Tape* tape, const Tensor& z_t, const Tensor* eps_hat, double alpha_bar) {
    if (alpha_bar < kMinAlphaBar) {
        throw std::invalid_argument("predict_z0_on_tape: alpha_bar below 1e-12");
    }
    if (alpha_bar == 1.0) return z_t;  // clean end of the chain
    if (eps_hat == nullptr) throw std::invalid_argument("predict_z0_on_tape: eps_hat required for alpha_bar < 1");
    const double cz = 1.0 / std::sqrt(alpha_bar);
    const double ce = std::sqrt((1.0 - alpha_bar) / alpha_bar);
    return add(tape, scale(tape, z_t, cz), scale(tape, *eps_hat, -ce));
}

}  // namespace latalign
