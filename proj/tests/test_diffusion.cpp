#include <cmath>
#include <stdexcept>

#include "doctest.h"
#include "latalign/autoencoder.hpp"
#include "latalign/denoiser.hpp"
#include "latalign/rng.hpp"
#include "latalign/sampler.hpp"
#include "latalign/schedule.hpp"

using namespace latalign;

namespace {

NoiseSchedule schedule_with_bars(std::vector<double> betas) {
    NoiseSchedule s;
    s.T = betas.size();
    s.betas = betas;
    double prod = 1.0;
    for (double b : betas) {
        s.alphas.push_back(1.0 - b);
        prod *= 1.0 - b;
        s.alpha_bars.push_back(prod);
    }
    return s;
}

}  // namespace

TEST_CASE("linear schedule endpoints and hand-checked products") {
    NoiseSchedule s = make_linear_schedule(1000, 1e-4, 0.02);
    CHECK(s.alpha_bar(1) == doctest::Approx(0.9999).epsilon(1e-12));
    CHECK(s.beta(1) == doctest::Approx(1e-4));
    CHECK(s.beta(1000) == doctest::Approx(0.02));
    CHECK(s.alpha_bar(1000) < s.alpha_bar(1));
    for (std::size_t t = 2; t <= 1000; ++t) CHECK(s.alpha_bar(t) < s.alpha_bar(t - 1));

    NoiseSchedule two = make_linear_schedule(2, 0.1, 0.2);
    CHECK(two.alpha_bar(2) == doctest::Approx(0.72).epsilon(1e-12));  // 0.9 * 0.8
}

TEST_CASE("schedule identity: alpha_bar ratio equals alpha") {
    NoiseSchedule s = make_linear_schedule(1000, 1e-4, 0.02);
    for (std::size_t t = 1; t <= s.T; ++t) {
        CHECK(std::abs(s.alpha_bar(t) / s.alpha_bar(t - 1) - s.alpha(t)) < 1e-12);
    }
}

TEST_CASE("schedule range violations") {
    CHECK_THROWS_AS(make_linear_schedule(1, 1e-4, 0.02), std::invalid_argument);
    CHECK_THROWS_AS(make_linear_schedule(10, 0.0, 0.02), std::invalid_argument);
    CHECK_THROWS_AS(make_linear_schedule(10, 0.3, 0.2), std::invalid_argument);
    CHECK_THROWS_AS(make_linear_schedule(10, 0.1, 1.0), std::invalid_argument);
}

TEST_CASE("q_sample closed form") {
    NoiseSchedule s = schedule_with_bars({0.36, 0.5});  // alpha_bar(1) == 0.64
    Tensor z0 = Tensor::vector({1, 0});
    Tensor eps = Tensor::vector({0, 1});
    Tensor zt = q_sample(z0, 1, eps, s);
    CHECK(zt.data[0] == doctest::Approx(0.8).epsilon(1e-12));
    CHECK(zt.data[1] == doctest::Approx(0.6).epsilon(1e-12));

    Tensor no_noise = q_sample(z0, 1, Tensor::zeros({2}), s);
    CHECK(no_noise.data[0] == doctest::Approx(0.8));
    CHECK(no_noise.data[1] == 0.0);

    // near-clean limit: alpha_bar ~ 1 keeps z0
    NoiseSchedule tiny = schedule_with_bars({1e-12, 1e-12});
    Tensor z = q_sample(Tensor::vector({2, -3}), 1, Tensor::vector({5, 5}), tiny);
    CHECK(z.data[0] == doctest::Approx(2.0).epsilon(1e-5));
    CHECK(z.data[1] == doctest::Approx(-3.0).epsilon(1e-5));

    CHECK_THROWS_AS(q_sample(z0, 3, eps, s), std::invalid_argument);
    CHECK_THROWS_AS(q_sample(z0, 0, eps, s), std::invalid_argument);
    CHECK_THROWS_AS(q_sample(z0, 1, Tensor::zeros({3}), s), std::invalid_argument);
}

TEST_CASE("predict_z0 inverts q_sample") {
    NoiseSchedule s = schedule_with_bars({0.36, 0.5});
    Tensor zt = Tensor::vector({0.8, 0.6});
    Tensor eps = Tensor::vector({0, 1});
    Tensor z0 = predict_z0(zt, eps, 1, s);
    CHECK(z0.data[0] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(z0.data[1] == doctest::Approx(0.0).epsilon(1e-12));

    Tensor zero_eps = predict_z0(zt, Tensor::zeros({2}), 1, s);
    CHECK(zero_eps.data[0] == doctest::Approx(1.0));
    CHECK(zero_eps.data[1] == doctest::Approx(0.75));

    NoiseSchedule degenerate = schedule_with_bars({1.0 - 1e-14, 0.5});
    CHECK_THROWS_AS(predict_z0(zt, eps, 2, degenerate), std::invalid_argument);
}

TEST_CASE("q_sample / predict_z0 round trip over 100 random cases") {
    NoiseSchedule s = make_linear_schedule(1000, 1e-4, 0.02);
    Rng rng(33);
    double worst = 0.0;
    for (int i = 0; i < 100; ++i) {
        const std::size_t dim = 2 + rng.index(30);
        Tensor z0 = rng.normal_tensor({dim});
        Tensor eps = rng.normal_tensor({dim});
        const std::size_t t = 1 + rng.index(s.T);
        Tensor rec = predict_z0(q_sample(z0, t, eps, s), eps, t, s);
        for (std::size_t j = 0; j < dim; ++j) worst = std::max(worst, std::abs(rec.data[j] - z0.data[j]));
    }
    CHECK(worst < 1e-9);
}

TEST_CASE("predict_z0_on_tape matches the closed form and handles the clean end") {
    NoiseSchedule s = schedule_with_bars({0.36, 0.5});
    Tensor zt = Tensor::vector({0.8, 0.6});
    Tensor eps = Tensor::vector({0, 1});
    Tensor graph = predict_z0_on_tape(nullptr, zt, &eps, s.alpha_bar(1));
    Tensor closed = predict_z0(zt, eps, 1, s);
    CHECK(graph.data[0] == doctest::Approx(closed.data[0]).epsilon(1e-14));
    CHECK(graph.data[1] == doctest::Approx(closed.data[1]).epsilon(1e-14));

    Tensor clean = predict_z0_on_tape(nullptr, zt, nullptr, 1.0);
    CHECK(clean.data == zt.data);
    CHECK_THROWS_AS(predict_z0_on_tape(nullptr, zt, nullptr, 0.5), std::invalid_argument);
}

TEST_CASE("time features are deterministic and need an even width") {
    Tensor a = time_features(17, 16);
    Tensor b = time_features(17, 16);
    CHECK(a.data == b.data);
    CHECK(a.numel() == 16);
    CHECK_THROWS_AS(time_features(1, 15), std::invalid_argument);
}

TEST_CASE("denoiser forward is pure and shape preserving") {
    Rng rng(5);
    DenoiserModel m = DenoiserModel::init(8, 4, rng, 32, 8);
    PromptTable prompts = PromptTable::init(3, 4, rng);
    Tensor z = rng.normal_tensor({8});
    Tensor y = prompts.row(1);
    Tensor e1 = m.forward(nullptr, z, 10, y);
    Tensor e2 = denoiser_forward(m, nullptr, z, 10, y);
    CHECK(e1.data == e2.data);
    CHECK(e1.shape == z.shape);
    CHECK_THROWS_AS(m.forward(nullptr, rng.normal_tensor({7}), 10, y), std::invalid_argument);
    CHECK_THROWS_AS(m.forward(nullptr, z, 10, rng.normal_tensor({5})), std::invalid_argument);
}

TEST_CASE("denoiser training reduces noise-estimation loss and is reproducible") {
    NoiseSchedule s = make_linear_schedule(200, 1e-4, 0.02);
    Rng rng(7);
    PromptTable prompts = PromptTable::init(2, 4, rng);

    // two tight clusters
    std::vector<std::pair<Tensor, std::size_t>> data;
    for (int i = 0; i < 64; ++i) {
        Tensor x = rng.normal_tensor({8}, 0.2);
        const std::size_t cls = i % 2;
        x.data[0] += cls == 0 ? 1.5 : -1.5;
        data.emplace_back(std::move(x), cls);
    }
    const Autoencoder ae = Autoencoder::identity(8);
    const TrainConfig cfg{12, 16, 1e-3, 33};

    // untrained loss sits near E||eps||^2 == latent_dim
    {
        Rng init(21);
        DenoiserModel fresh = DenoiserModel::init(8, 4, init, 32, 8);
        Rng probe(99);
        double loss = 0.0;
        const int n_probe = 400;
        for (int i = 0; i < n_probe; ++i) {
            const auto& [x, cls] = data[probe.index(data.size())];
            const std::size_t t = 1 + probe.index(s.T);
            Tensor eps = probe.normal_tensor({8});
            Tensor eh = fresh.forward(nullptr, q_sample(x, t, eps, s), t, prompts.row(cls));
            loss += squared_error(nullptr, eh, eps).scalar_value();
        }
        loss /= n_probe;
        CHECK(loss > 0.6 * 8.0);
        CHECK(loss < 1.6 * 8.0);
    }

    auto train_once = [&] {
        Rng init(21);
        DenoiserModel model = DenoiserModel::init(8, 4, init, 32, 8);
        PromptTable table;
        table.table = prompts.table.detached();
        TrainStats stats = train_denoiser(model, table, false, data, ae, s, cfg);
        return std::make_pair(std::move(model), std::move(stats));
    };
    auto [model1, stats1] = train_once();
    auto [model2, stats2] = train_once();

    CHECK(stats1.epoch_loss.back() < stats1.epoch_loss.front());
    CHECK(stats1.epoch_loss == stats2.epoch_loss);
    for (std::size_t l = 0; l < model1.net.layers.size(); ++l) {
        CHECK(model1.net.layers[l].w.data == model2.net.layers[l].w.data);
    }
    CHECK_THROWS_AS(train_denoiser(model1, prompts, false, {}, ae, s, cfg), std::invalid_argument);
}

TEST_CASE("inference grid evenly subsamples and ends at T") {
    auto grid = inference_grid(1000, 30);
    REQUIRE(grid.size() == 30);
    CHECK(grid.front() == 33);
    CHECK(grid.back() == 1000);
    for (std::size_t i = 1; i < grid.size(); ++i) CHECK(grid[i] > grid[i - 1]);
    CHECK_THROWS_AS(inference_grid(10, 11), std::invalid_argument);
}

TEST_CASE("ddim sampling is deterministic with trajectory length n_steps + 1") {
    Rng rng(3);
    DenoiserModel m = DenoiserModel::init(4, 2, rng, 16, 4);
    PromptTable prompts = PromptTable::init(2, 2, rng);
    NoiseSchedule s = make_linear_schedule(100, 1e-4, 0.02);

    LatentTrajectory a = sample_vanilla(m, prompts.row(0), s, 10, SamplerKind::Ddim, 42);
    LatentTrajectory b = sample_vanilla(m, prompts.row(0), s, 10, SamplerKind::Ddim, 42);
    REQUIRE(a.latents.size() == 11);
    CHECK(a.times.back() == 0);
    for (std::size_t i = 0; i < a.latents.size(); ++i) CHECK(a.latents[i].data == b.latents[i].data);

    LatentTrajectory c = sample_vanilla(m, prompts.row(0), s, 10, SamplerKind::Ddpm, 42);
    LatentTrajectory d = sample_vanilla(m, prompts.row(0), s, 10, SamplerKind::Ddpm, 42);
    for (std::size_t i = 0; i < c.latents.size(); ++i) CHECK(c.latents[i].data == d.latents[i].data);
    CHECK(c.latents.back().data != a.latents.back().data);
}

TEST_CASE("a denoiser trained on a point mass samples near the point") {
    NoiseSchedule s = make_linear_schedule(100, 1e-4, 0.05);
    Rng rng(9);
    PromptTable prompts = PromptTable::init(2, 2, rng);
    const Tensor target = Tensor::vector({0.8, -0.5});
    std::vector<std::pair<Tensor, std::size_t>> data(48, {target, 0});
    DenoiserModel model = DenoiserModel::init(2, 2, rng, 32, 8);
    const Autoencoder ae = Autoencoder::identity(2);
    train_denoiser(model, prompts, false, data, ae, s, {600, 16, 2e-3, 33});

    LatentTrajectory traj = sample_vanilla(model, prompts.row(0), s, 20, SamplerKind::Ddim, 4);
    const Tensor& z0 = traj.latents.back();
    double err = 0.0;
    for (std::size_t i = 0; i < z0.numel(); ++i) {
        err += (z0.data[i] - target.data[i]) * (z0.data[i] - target.data[i]);
    }
    CHECK(std::sqrt(err) < 0.1);
}

TEST_CASE("identity autoencoder is a strict no-op; affine trains to low reconstruction error") {
    Autoencoder id = Autoencoder::identity(4);
    Tensor x = Tensor::vector({1, 2, 3, 4});
    CHECK(autoencode(nullptr, id, x, CodecDirection::Encode).data == x.data);
    CHECK(autoencode(nullptr, id, x, CodecDirection::Decode).data == x.data);
    CHECK_THROWS_AS(id.encode(nullptr, Tensor::vector({1, 2})), std::invalid_argument);

    Rng rng(17);
    Autoencoder affine = Autoencoder::affine(6, 6, rng);
    std::vector<Tensor> train_data, test_data;
    for (int i = 0; i < 96; ++i) train_data.push_back(rng.normal_tensor({6}));
    for (int i = 0; i < 32; ++i) test_data.push_back(rng.normal_tensor({6}));
    train_autoencoder(affine, train_data, {150, 16, 5e-3, 33});

    double se = 0.0;
    std::size_t n = 0;
    for (const Tensor& x_test : test_data) {
        Tensor rec = affine.decode(nullptr, affine.encode(nullptr, x_test));
        for (std::size_t i = 0; i < rec.numel(); ++i) {
            se += (rec.data[i] - x_test.data[i]) * (rec.data[i] - x_test.data[i]);
            ++n;
        }
    }
    CHECK(std::sqrt(se / static_cast<double>(n)) < 0.05);

    // zero-bias affine decodes zero to zero
    Autoencoder zb = Autoencoder::affine(4, 4, rng);
    for (double& v : zb.dec.b.data) v = 0.0;
    Tensor out = zb.decode(nullptr, Tensor::zeros({4}));
    for (double v : out.data) CHECK(v == 0.0);
}
