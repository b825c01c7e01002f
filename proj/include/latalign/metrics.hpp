#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "latalign/binder.hpp"
#include "latalign/tensor.hpp"

namespace latalign {

struct AlignmentResult {
    double mean = 0.0;
    double stddev = 0.0;
    std::vector<double> per_pair;
};

/// Mean binder-space cosine between generated samples and their index-paired
/// references. Invariant under any common permutation of both sets.
AlignmentResult alignment_score(const BinderModel& binder, std::span<const Tensor> generated,
                                Modality gen_modality, std::span<const Tensor> references,
                                Modality ref_modality);

/// Median of pairwise Euclidean distances over the pooled sets; the default
/// kernel bandwidth.
double median_heuristic_bandwidth(std::span<const Tensor> a, std::span<const Tensor> b);

/// Unbiased Gaussian-kernel MMD^2 estimate. May be slightly negative by
/// estimator noise; reports clamp at zero, the raw value is returned here.
double mmd2_unbiased(std::span<const Tensor> a, std::span<const Tensor> b, double bandwidth);

/// One-sided sign test: probability of >= wins successes among wins + losses
/// fair coin flips. Ties are dropped by the caller; n == 0 gives p = 1.
double sign_test_p(std::size_t wins, std::size_t losses);

/// Everything eval needs about one finished generation, paired by index.
struct RunOutcome {
    std::uint64_t seed = 0;
    std::uint64_t condition_key = 0;  // condition identity; must match across paired runs
    double alignment = 0.0;
    double triangle_final = 0.0;
    double runtime_ms = 0.0;
    Tensor sample;  // generated sample of the reported modality (for MMD)
};

struct PairedMetricRecord {
    std::string metric;
    std::size_t pair_index = 0;
    double vanilla = 0.0;
    double guided = 0.0;
};

struct EvalReport {
    std::vector<PairedMetricRecord> records;  // metric kinds x pairs
    std::size_t pairs = 0;
    double align_mean_vanilla = 0.0;
    double align_mean_guided = 0.0;
    double align_mean_diff = 0.0;
    double align_rel_improvement = 0.0;
    double align_sign_p = 1.0;
    double triangle_mean_vanilla = 0.0;
    double triangle_mean_guided = 0.0;
    double triangle_sign_p = 1.0;  // direction: guided below vanilla
    double mmd_vanilla = 0.0;      // set-level, clamped at zero
    double mmd_guided = 0.0;
    std::string config_echo;
};

/// Paired comparison of matched runs. Refuses unpaired data (count, seed, or
/// condition mismatches) outright. The reference set feeds the set-level MMD.
EvalReport compare_runs(std::span<const RunOutcome> vanilla, std::span<const RunOutcome> guided,
                        std::span<const Tensor> reference_set);

/// One row per paired run in the eval CSV.
struct EvalCsvRow {
    std::string task;
    std::uint64_t seed = 0;
    double lambda1 = 0.0;
    double lambda2 = 0.0;
    std::size_t inf_steps = 0;
    double optim_start = 0.0;
    double align_vanilla = 0.0;
    double align_guided = 0.0;
    double mmd_vanilla = 0.0;
    double mmd_guided = 0.0;
    double triangle_final_vanilla = 0.0;
    double triangle_final_guided = 0.0;
    double runtime_ms = 0.0;
};

std::string eval_csv_header();
std::string eval_csv_line(const EvalCsvRow& row);
std::string report_summary(const EvalReport& report);

}  // namespace latalign
