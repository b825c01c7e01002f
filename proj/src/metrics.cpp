#include "latalign/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace latalign {

namespace {

double dot(const Tensor& a, const Tensor& b) {
    double d = 0.0;
    for (std::size_t i = 0; i < a.numel(); ++i) d += a.data[i] * b.data[i];
    return d;
}

double sq_dist(const Tensor& a, const Tensor& b) {
    double d2 = 0.0;
    for (std::size_t i = 0; i < a.numel(); ++i) {
        const double d = a.data[i] - b.data[i];
        d2 += d * d;
    }
    return d2;
}

double gaussian_kernel(const Tensor& a, const Tensor& b, double bandwidth) {
    return std::exp(-sq_dist(a, b) / (2.0 * bandwidth * bandwidth));
}

double mean_of(const std::vector<double>& xs) {
    double s = 0.0;
    for (double x : xs) s += x;
    return s / static_cast<double>(xs.size());
}

}  // namespace

AlignmentResult alignment_score(const BinderModel& binder, std::span<const Tensor> generated,
                                Modality gen_modality, std::span<const Tensor> references,
                                Modality ref_modality) {
    if (generated.empty()) throw std::invalid_argument("alignment_score: empty sample set");
    if (generated.size() != references.size()) {
        throw std::invalid_argument("alignment_score: pairing mismatch, " + std::to_string(generated.size()) +
                                    " generated vs " + std::to_string(references.size()) + " references");
    }
    AlignmentResult result;
    result.per_pair.reserve(generated.size());
    for (std::size_t i = 0; i < generated.size(); ++i) {
        const Tensor e_gen = binder.embed(nullptr, gen_modality, generated[i]);
        const Tensor e_ref = binder.embed(nullptr, ref_modality, references[i]);
        result.per_pair.push_back(dot(e_gen, e_ref));
    }
    result.mean = mean_of(result.per_pair);
    double var = 0.0;
    for (double v : result.per_pair) var += (v - result.mean) * (v - result.mean);
    result.stddev = std::sqrt(var / static_cast<double>(result.per_pair.size()));
    return result;
}

double median_heuristic_bandwidth(std::span<const Tensor> a, std::span<const Tensor> b) {
    std::vector<const Tensor*> pool;
    pool.reserve(a.size() + b.size());
    for (const Tensor& t : a) pool.push_back(&t);
    for (const Tensor& t : b) pool.push_back(&t);
    std::vector<double> dists;
    dists.reserve(pool.size() * (pool.size() - 1) / 2);
    for (std::size_t i = 0; i < pool.size(); ++i) {
        for (std::size_t j = i + 1; j < pool.size(); ++j) {
            dists.push_back(std::sqrt(sq_dist(*pool[i], *pool[j])));
        }
    }
    if (dists.empty()) return 1.0;
    std::nth_element(dists.begin(), dists.begin() + dists.size() / 2, dists.end());
    const double med = dists[dists.size() / 2];
    return med > 0.0 ? med : 1.0;
}

double mmd2_unbiased(std::span<const Tensor> a, std::span<const Tensor> b, double bandwidth) {
    if (a.empty() || b.empty()) throw std::invalid_argument("mmd: both sets must be nonempty");
    if (a.size() < 2 || b.size() < 2) throw std::invalid_argument("mmd: unbiased estimate needs >= 2 per set");
    if (a[0].numel() != b[0].numel()) throw std::invalid_argument("mmd: width mismatch");
    const double m = static_cast<double>(a.size());
    const double n = static_cast<double>(b.size());

    double kaa = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        for (std::size_t j = i + 1; j < a.size(); ++j) kaa += gaussian_kernel(a[i], a[j], bandwidth);
    }
    double kbb = 0.0;
    for (std::size_t i = 0; i < b.size(); ++i) {
        for (std::size_t j = i + 1; j < b.size(); ++j) kbb += gaussian_kernel(b[i], b[j], bandwidth);
    }
    double kab = 0.0;
    for (const Tensor& x : a) {
        for (const Tensor& y : b) kab += gaussian_kernel(x, y, bandwidth);
    }
    return 2.0 * kaa / (m * (m - 1.0)) + 2.0 * kbb / (n * (n - 1.0)) - 2.0 * kab / (m * n);
}

double sign_test_p(std::size_t wins, std::size_t losses) {
    const std::size_t n = wins + losses;
    if (n == 0) return 1.0;
    // P[X >= wins], X ~ Binomial(n, 1/2). Terms in log space so large n
    // neither overflows the coefficients nor underflows the 2^-n factor.
    const double ln2 = 0.69314718055994530942;
    const double lg_n1 = std::lgamma(static_cast<double>(n) + 1.0);
    double tail = 0.0;
    for (std::size_t k = wins; k <= n; ++k) {
        const double log_term = lg_n1 - std::lgamma(static_cast<double>(k) + 1.0) -
                                std::lgamma(static_cast<double>(n - k) + 1.0) -
                                static_cast<double>(n) * ln2;
        tail += std::exp(log_term);
    }
    return std::min(1.0, tail);
}

EvalReport compare_runs(std::span<const RunOutcome> vanilla, std::span<const RunOutcome> guided,
                        std::span<const Tensor> reference_set) {
    if (vanilla.size() != guided.size()) {
        throw std::invalid_argument("compare_runs: run count mismatch, " + std::to_string(vanilla.size()) +
                                    " vs " + std::to_string(guided.size()));
    }
    if (vanilla.empty()) throw std::invalid_argument("compare_runs: no runs");
    for (std::size_t i = 0; i < vanilla.size(); ++i) {
        if (vanilla[i].seed != guided[i].seed || vanilla[i].condition_key != guided[i].condition_key) {
            throw std::invalid_argument("compare_runs: pair " + std::to_string(i) +
                                        " has mismatched seed or condition; refusing unpaired data");
        }
    }

    EvalReport report;
    report.pairs = vanilla.size();

    std::vector<double> av, ag, tv, tg;
    std::vector<Tensor> sv, sg;
    std::size_t align_wins = 0, align_losses = 0;
    std::size_t tri_wins = 0, tri_losses = 0;
    for (std::size_t i = 0; i < vanilla.size(); ++i) {
        report.records.push_back({"alignment", i, vanilla[i].alignment, guided[i].alignment});
        av.push_back(vanilla[i].alignment);
        ag.push_back(guided[i].alignment);
        tv.push_back(vanilla[i].triangle_final);
        tg.push_back(guided[i].triangle_final);
        sv.push_back(vanilla[i].sample);
        sg.push_back(guided[i].sample);
        if (guided[i].alignment > vanilla[i].alignment) {
            ++align_wins;
        } else if (guided[i].alignment < vanilla[i].alignment) {
            ++align_losses;
        }
        if (guided[i].triangle_final < vanilla[i].triangle_final) {
            ++tri_wins;
        } else if (guided[i].triangle_final > vanilla[i].triangle_final) {
            ++tri_losses;
        }
    }

    report.align_mean_vanilla = mean_of(av);
    report.align_mean_guided = mean_of(ag);
    report.align_mean_diff = report.align_mean_guided - report.align_mean_vanilla;
    report.align_rel_improvement =
        report.align_mean_vanilla != 0.0 ? report.align_mean_diff / std::abs(report.align_mean_vanilla) : 0.0;
    report.align_sign_p = sign_test_p(align_wins, align_losses);
    report.triangle_mean_vanilla = mean_of(tv);
    report.triangle_mean_guided = mean_of(tg);
    report.triangle_sign_p = sign_test_p(tri_wins, tri_losses);

    double mmd_v = 0.0, mmd_g = 0.0;
    if (!reference_set.empty() && reference_set.size() >= 2 && vanilla.size() >= 2) {
        const double bw = median_heuristic_bandwidth(sv, reference_set);
        mmd_v = mmd2_unbiased(sv, reference_set, bw);
        mmd_g = mmd2_unbiased(sg, reference_set, bw);
    }
    report.mmd_vanilla = std::max(0.0, mmd_v);
    report.mmd_guided = std::max(0.0, mmd_g);
    for (std::size_t i = 0; i < vanilla.size(); ++i) {
        report.records.push_back({"mmd", i, report.mmd_vanilla, report.mmd_guided});
    }
    for (std::size_t i = 0; i < vanilla.size(); ++i) {
        report.records.push_back({"triangle", i, vanilla[i].triangle_final, guided[i].triangle_final});
    }
    return report;
}

std::string eval_csv_header() {
    return "task,seed,lambda1,lambda2,inf_steps,optim_start,align_vanilla,align_guided,"
           "mmd_vanilla,mmd_guided,triangle_final_vanilla,triangle_final_guided,runtime_ms";
}

std::string eval_csv_line(const EvalCsvRow& r) {
    std::ostringstream os;
    os.precision(17);
    os << r.task << ',' << r.seed << ',' << r.lambda1 << ',' << r.lambda2 << ',' << r.inf_steps << ','
       << r.optim_start << ',' << r.align_vanilla << ',' << r.align_guided << ',' << r.mmd_vanilla << ','
       << r.mmd_guided << ',' << r.triangle_final_vanilla << ',' << r.triangle_final_guided << ','
       << r.runtime_ms;
    return os.str();
}

std::string report_summary(const EvalReport& r) {
    std::ostringstream os;
    os.precision(6);
    os << "pairs: " << r.pairs << "\n"
       << "alignment vanilla mean: " << r.align_mean_vanilla << "\n"
       << "alignment guided mean:  " << r.align_mean_guided << "\n"
       << "alignment mean diff:    " << r.align_mean_diff << "\n"
       << "alignment rel improvement: " << r.align_rel_improvement << "\n"
       << "alignment sign-test p (guided > vanilla): " << r.align_sign_p << "\n"
       << "triangle vanilla mean: " << r.triangle_mean_vanilla << "\n"
       << "triangle guided mean:  " << r.triangle_mean_guided << "\n"
       << "triangle sign-test p (guided < vanilla): " << r.triangle_sign_p << "\n"
       << "mmd vanilla: " << r.mmd_vanilla << "\n"
       << "mmd guided:  " << r.mmd_guided << "\n";
    return os.str();
}

}  // namespace latalign
