#include <cmath>
#include <stdexcept>

#include "doctest.h"
#include "latalign/metrics.hpp"
#include "latalign/rng.hpp"

using namespace latalign;

namespace {

BinderModel tiny_binder() {
    Rng rng(5);
    return BinderModel::init(6, 6, 4, 16, 0.07, rng, 16);
}

std::vector<Tensor> gaussians(std::size_t n, std::size_t dim, double mean, Rng& rng) {
    std::vector<Tensor> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        Tensor t = rng.normal_tensor({dim});
        for (double& v : t.data) v += mean;
        out.push_back(std::move(t));
    }
    return out;
}

}  // namespace

TEST_CASE("alignment of a set with itself is one") {
    BinderModel b = tiny_binder();
    Rng rng(2);
    std::vector<Tensor> xs;
    for (int i = 0; i < 8; ++i) xs.push_back(rng.normal_tensor({6}));
    AlignmentResult r = alignment_score(b, xs, Modality::V, xs, Modality::V);
    CHECK(r.mean == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(r.per_pair.size() == 8);
}

TEST_CASE("random unit embeddings have near-zero mean cosine") {
    // Monte-Carlo null for the alignment scale: 256 independent pairs on the
    // 16-sphere.
    Rng rng(33);
    double mean = 0.0;
    for (int i = 0; i < 256; ++i) {
        Tensor a = l2_normalize(nullptr, rng.normal_tensor({16}));
        Tensor b = l2_normalize(nullptr, rng.normal_tensor({16}));
        double d = 0.0;
        for (std::size_t j = 0; j < 16; ++j) d += a.data[j] * b.data[j];
        mean += d;
    }
    mean /= 256.0;
    CHECK(std::abs(mean) < 0.1);
}

TEST_CASE("alignment is invariant under a common permutation") {
    BinderModel b = tiny_binder();
    Rng rng(4);
    std::vector<Tensor> gen, ref;
    for (int i = 0; i < 10; ++i) {
        gen.push_back(rng.normal_tensor({6}));
        ref.push_back(rng.normal_tensor({6}));
    }
    AlignmentResult before = alignment_score(b, gen, Modality::V, ref, Modality::A);

    std::vector<Tensor> gen_p, ref_p;
    for (int i = 9; i >= 0; --i) {
        gen_p.push_back(gen[static_cast<std::size_t>(i)]);
        ref_p.push_back(ref[static_cast<std::size_t>(i)]);
    }
    AlignmentResult after = alignment_score(b, gen_p, Modality::V, ref_p, Modality::A);
    CHECK(before.mean == doctest::Approx(after.mean).epsilon(1e-12));

    CHECK_THROWS_AS(alignment_score(b, {}, Modality::V, {}, Modality::A), std::invalid_argument);
    std::vector<Tensor> short_ref(ref.begin(), ref.begin() + 5);
    CHECK_THROWS_AS(alignment_score(b, gen, Modality::V, short_ref, Modality::A), std::invalid_argument);
}

TEST_CASE("mmd of a set against itself is non-positive, clamped to zero in reports") {
    Rng rng(6);
    std::vector<Tensor> a = gaussians(32, 4, 0.0, rng);
    const double bw = median_heuristic_bandwidth(a, a);
    const double raw = mmd2_unbiased(a, a, bw);
    CHECK(raw <= 1e-6);
    CHECK(std::max(0.0, raw) == 0.0);
}

TEST_CASE("mmd separates shifted gaussians and flattens at huge bandwidth") {
    Rng rng(33);
    std::vector<Tensor> a = gaussians(256, 4, 0.0, rng);
    std::vector<Tensor> b = gaussians(256, 4, 5.0, rng);
    const double bw = median_heuristic_bandwidth(a, b);
    CHECK(mmd2_unbiased(a, b, bw) > 0.5);
    CHECK(std::abs(mmd2_unbiased(a, b, 1e9)) < 1e-9);

    std::vector<Tensor> narrow = gaussians(8, 3, 0.0, rng);
    CHECK_THROWS_AS(mmd2_unbiased(a, narrow, bw), std::invalid_argument);
    CHECK_THROWS_AS(mmd2_unbiased(a, {}, bw), std::invalid_argument);
}

TEST_CASE("sign test tail probabilities") {
    CHECK(sign_test_p(0, 0) == 1.0);
    CHECK(sign_test_p(4, 1) == doctest::Approx(6.0 / 32.0).epsilon(1e-12));  // C(5,4)+C(5,5) over 2^5
    CHECK(sign_test_p(60, 4) < 1e-9);
    CHECK(sign_test_p(32, 32) == doctest::Approx(0.5496733768739834).epsilon(1e-9));
    CHECK(sign_test_p(0, 10) == 1.0);
}

TEST_CASE("compare_runs on identical runs reports zero differences and p = 1") {
    Rng rng(8);
    std::vector<RunOutcome> runs;
    for (std::size_t i = 0; i < 6; ++i) {
        RunOutcome o;
        o.seed = 100 + i;
        o.condition_key = i;
        o.alignment = rng.uniform();
        o.triangle_final = rng.uniform(0, 3);
        o.sample = rng.normal_tensor({4});
        runs.push_back(std::move(o));
    }
    std::vector<Tensor> refs = gaussians(8, 4, 0.0, rng);
    EvalReport report = compare_runs(runs, runs, refs);
    CHECK(report.align_mean_diff == 0.0);
    CHECK(report.align_sign_p == 1.0);
    CHECK(report.triangle_sign_p == 1.0);
    CHECK(report.records.size() == 3 * runs.size());  // metric kinds x pairs
    CHECK(report.mmd_vanilla == report.mmd_guided);
}

TEST_CASE("compare_runs detects a consistent improvement with a tiny p-value") {
    Rng rng(9);
    std::vector<RunOutcome> vanilla, guided;
    for (std::size_t i = 0; i < 64; ++i) {
        RunOutcome v;
        v.seed = i;
        v.condition_key = i % 8;
        v.alignment = 0.3;
        v.triangle_final = 2.0;
        v.sample = rng.normal_tensor({4});
        RunOutcome g = v;
        g.alignment = i < 60 ? 0.5 : 0.2;  // 60 of 64 improve
        vanilla.push_back(v);
        guided.push_back(std::move(g));
    }
    std::vector<Tensor> refs = gaussians(16, 4, 0.0, rng);
    EvalReport report = compare_runs(vanilla, guided, refs);
    CHECK(report.align_sign_p < 1e-9);
    CHECK(report.align_mean_guided > report.align_mean_vanilla);
}

TEST_CASE("compare_runs refuses unpaired data") {
    RunOutcome a;
    a.seed = 1;
    a.condition_key = 0;
    a.sample = Tensor::zeros({2});
    RunOutcome b = a;
    b.seed = 2;
    std::vector<RunOutcome> vanilla{a}, guided{b};
    std::vector<Tensor> refs;
    CHECK_THROWS_AS(compare_runs(vanilla, guided, refs), std::invalid_argument);
    std::vector<RunOutcome> empty;
    CHECK_THROWS_AS(compare_runs(empty, empty, refs), std::invalid_argument);
    std::vector<RunOutcome> two{a, a};
    CHECK_THROWS_AS(compare_runs(two, vanilla, refs), std::invalid_argument);
}

TEST_CASE("csv layout") {
    CHECK(eval_csv_header() ==
          "task,seed,lambda1,lambda2,inf_steps,optim_start,align_vanilla,align_guided,mmd_vanilla,"
          "mmd_guided,triangle_final_vanilla,triangle_final_guided,runtime_ms");
    EvalCsvRow row;
    row.task = "v2a";
    row.seed = 33;
    row.lambda1 = 0.1;
    row.inf_steps = 30;
    const std::string line = eval_csv_line(row);
    CHECK(line.substr(0, 4) == "v2a,");
    CHECK(line.find(",30,") != std::string::npos);
}
