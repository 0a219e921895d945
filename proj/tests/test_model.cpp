#include <doctest.h>

#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <sstream>

#include "support/temp_dir.hpp"
#include "wafl/error.hpp"
#include "wafl/model.hpp"

using namespace wafl;

namespace {

Tensor random_tensor(Rng& rng, std::size_t rows, std::size_t cols) {
    Tensor t(rows, cols);
    for (auto& x : t.flat()) x = rng.normal();
    return t;
}

// Frozen path X * W0^T, accumulated in the same order as the layer.
Tensor frozen_path(const Tensor& x, const Tensor& w0) {
    Tensor h(x.rows(), w0.rows());
    for (std::size_t t = 0; t < x.rows(); ++t) {
        for (std::size_t i = 0; i < w0.rows(); ++i) {
            double acc = 0.0;
            for (std::size_t c = 0; c < x.cols(); ++c) acc += w0(i, c) * x(t, c);
            h(t, i) = acc;
        }
    }
    return h;
}

double central_difference(double& param, const std::function<double()>& f, double h) {
    const double saved = param;
    param = saved + h;
    const double plus = f();
    param = saved - h;
    const double minus = f();
    param = saved;
    return (plus - minus) / (2.0 * h);
}

double rel_err(double a, double b) {
    const double scale = std::max({std::abs(a), std::abs(b), 1e-8});
    return std::abs(a - b) / scale;
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

ModelConfig tiny_config() {
    ModelConfig c;
    c.k_v = 5;
    c.k_a = 4;
    c.d_v = 4;
    c.d_a = 3;
    c.rank = 2;
    c.dropout_rate = 0.0;
    c.seed = 21;
    c.pad = {6, 5, PadStrategy::Reflection, PadStrategy::Trailing};
    return c;
}

TokenFeatures random_token(Rng& rng, const ModelConfig& c, std::size_t tv = 4, std::size_t ta = 7) {
    TokenFeatures tf{FeatureMatrix(tv, c.k_v), FeatureMatrix(ta, c.k_a)};
    for (auto& x : tf.visual.flat()) x = static_cast<float>(rng.normal());
    for (auto& x : tf.audio.flat()) x = static_cast<float>(rng.normal());
    return tf;
}

}  // namespace

TEST_CASE("init_realign zero-initializes phi_up and bounds phi_down") {
    for (std::uint64_t seed : {0u, 1u, 99u}) {
        const auto layer = init_realign(8, 6, 4, 16.0, 0.1, seed);
        for (double x : layer.phi_up.flat()) CHECK(x == 0.0);
        const double bound = std::sqrt(0.75);
        for (double x : layer.phi_down.flat()) {
            CHECK(x > -bound);
            CHECK(x < bound);
        }
        CHECK(layer.w0.rows() == 6);
        CHECK(layer.w0.cols() == 8);
    }
    CHECK_THROWS_AS(init_realign(4, 3, 4, 16.0, 0.1, 0), Error);
    try {
        init_realign(4, 3, 4, 16.0, 0.1, 0);
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::InvalidRank);
    }
}

TEST_CASE("freshly initialized layer reproduces the frozen path exactly") {
    Rng rng(4);
    auto layer = init_realign(6, 5, 2, 16.0, 0.3, 8);
    for (int trial = 0; trial < 20; ++trial) {
        const auto x = random_tensor(rng, 9, 6);
        CHECK(realign_forward(layer, x, false, rng) == frozen_path(x, layer.w0));
        // Dropout only feeds the low-rank branch, which is zero here.
        CHECK(realign_forward(layer, x, true, rng) == frozen_path(x, layer.w0));
    }
}

TEST_CASE("realign_forward hand example") {
    RealignLayer layer;
    layer.w0 = Tensor(2, 2, std::vector<double>{1, 0, 0, 1});
    layer.phi_up = Tensor(2, 1, std::vector<double>{1, 0});
    layer.phi_down = Tensor(1, 2, std::vector<double>{1, 0});
    layer.alpha = 16.0;
    layer.rank = 1;
    layer.dropout_rate = 0.0;
    Rng rng(0);
    const auto h = realign_forward(layer, Tensor(1, 2, std::vector<double>{1, 0}), false, rng);
    CHECK(h(0, 0) == 17.0);
    CHECK(h(0, 1) == 0.0);

    const auto h_train = realign_forward(layer, Tensor(1, 2, std::vector<double>{1, 0}), true, rng);
    CHECK(h_train == h);
    CHECK_THROWS_AS(realign_forward(layer, Tensor(1, 3), false, rng), Error);
}

TEST_CASE("inverted dropout preserves the expected low-rank output") {
    Rng rng(12);
    auto layer = init_realign(6, 5, 2, 16.0, 0.25, 3);
    layer.phi_up = random_tensor(rng, 5, 2);
    const auto x = random_tensor(rng, 1, 6);
    const auto eval = realign_forward(layer, x, false, rng);
    Tensor mean(1, 5);
    constexpr int draws = 40000;
    for (int i = 0; i < draws; ++i) {
        const auto h = realign_forward(layer, x, true, rng);
        for (std::size_t j = 0; j < 5; ++j) mean(0, j) += h(0, j) / draws;
    }
    for (std::size_t j = 0; j < 5; ++j) CHECK(mean(0, j) == doctest::Approx(eval(0, j)).epsilon(0.02).scale(5.0));
}

TEST_CASE("realign_backward matches central differences") {
    Rng rng(31);
    auto layer = init_realign(6, 5, 2, 16.0, 0.0, 5);
    layer.phi_up = random_tensor(rng, 5, 2);
    auto x = random_tensor(rng, 4, 6);
    const auto upstream = random_tensor(rng, 4, 5);
    auto objective = [&] {
        Rng r(0);
        const auto h = realign_forward(layer, x, false, r);
        double acc = 0.0;
        for (std::size_t i = 0; i < h.size(); ++i) acc += h.flat()[i] * upstream.flat()[i];
        return acc;
    };

    RealignCache cache;
    realign_forward(layer, x, true, rng, &cache);
    const auto g = realign_backward(layer, x, cache, upstream);

    double worst = 0.0;
    for (std::size_t i = 0; i < layer.phi_up.size(); ++i) {
        worst = std::max(worst, rel_err(g.phi_up.flat()[i], central_difference(layer.phi_up.flat()[i], objective, 1e-4)));
    }
    for (std::size_t i = 0; i < layer.phi_down.size(); ++i) {
        worst = std::max(worst,
                         rel_err(g.phi_down.flat()[i], central_difference(layer.phi_down.flat()[i], objective, 1e-4)));
    }
    for (std::size_t i = 0; i < x.size(); ++i) {
        worst = std::max(worst, rel_err(g.input.flat()[i], central_difference(x.flat()[i], objective, 1e-4)));
    }
    CHECK(worst < 1e-4);
}

TEST_CASE("realign_backward with dropout uses the captured mask") {
    Rng rng(8);
    auto layer = init_realign(6, 5, 2, 16.0, 0.5, 5);
    layer.phi_up = random_tensor(rng, 5, 2);
    const auto x = random_tensor(rng, 3, 6);
    const auto upstream = random_tensor(rng, 3, 5);
    RealignCache cache;
    realign_forward(layer, x, true, rng, &cache);
    const auto masked_input = cache.dropped;
    const auto g = realign_backward(layer, x, cache, upstream);

    // With the mask fixed, the layer is linear in phi_down: recompute the
    // objective with the captured dropped input in place of x.
    auto objective = [&] {
        double acc = 0.0;
        for (std::size_t t = 0; t < 3; ++t) {
            for (std::size_t i = 0; i < 5; ++i) {
                double low = 0.0;
                for (std::size_t j = 0; j < 2; ++j) {
                    double b = 0.0;
                    for (std::size_t c = 0; c < 6; ++c) b += layer.phi_down(j, c) * masked_input(t, c);
                    low += layer.phi_up(i, j) * b;
                }
                acc += upstream(t, i) * layer.scale() * low;
            }
        }
        return acc;
    };
    for (std::size_t i = 0; i < layer.phi_down.size(); ++i) {
        CHECK(rel_err(g.phi_down.flat()[i], central_difference(layer.phi_down.flat()[i], objective, 1e-4)) < 1e-4);
    }
}

TEST_CASE("realign_backward structural cases") {
    Rng rng(2);
    auto layer = init_realign(6, 5, 2, 16.0, 0.0, 1);
    const auto x = random_tensor(rng, 3, 6);

    RealignCache cache;
    realign_forward(layer, x, true, rng, &cache);
    const auto zero = realign_backward(layer, x, cache, Tensor(3, 5));
    for (double v : zero.phi_up.flat()) CHECK(v == 0.0);
    for (double v : zero.phi_down.flat()) CHECK(v == 0.0);
    for (double v : zero.input.flat()) CHECK(v == 0.0);

    // At zero init phi_up still receives gradient, so learning can start.
    realign_forward(layer, x, true, rng, &cache);
    const auto g = realign_backward(layer, x, cache, random_tensor(rng, 3, 5));
    CHECK(std::any_of(g.phi_up.flat().begin(), g.phi_up.flat().end(), [](double v) { return v != 0.0; }));

    try {
        realign_backward(layer, x, cache, Tensor(3, 5));
        FAIL("expected StaleMask");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::StaleMask);
    }
}

TEST_CASE("pool takes column means") {
    CHECK(pool(Tensor(3, 2, std::vector<double>{4, 5, 4, 5, 4, 5})) == std::vector<double>{4, 5});
    CHECK(pool(Tensor(2, 2, std::vector<double>{0, 2, 2, 0})) == std::vector<double>{1, 1});
    const auto a = pool(Tensor(3, 2, std::vector<double>{1, 2, 3, 4, 5, 6}));
    const auto b = pool(Tensor(3, 2, std::vector<double>{5, 6, 1, 2, 3, 4}));
    CHECK(a[0] == doctest::Approx(b[0]));
    CHECK(a[1] == doctest::Approx(b[1]));
}

TEST_CASE("head_forward") {
    LinearHead zero{{0.0, 0.0}, 0.0};
    CHECK(head_forward(zero, std::vector<double>{3.0, -7.0}) == 0.5);
    LinearHead h{{2.0, 1.0}, -1.0};
    CHECK(head_forward(h, std::vector<double>{1.0, -1.0}) == 0.5);
    LinearHead big{{0.0}, 1e6};
    const double p = head_forward(big, std::vector<double>{0.0});
    CHECK(std::isfinite(p));
    CHECK(p <= 1.0);
    CHECK(p > 0.999);
    LinearHead small{{0.0}, -1e6};
    const double q = head_forward(small, std::vector<double>{0.0});
    CHECK(std::isfinite(q));
    CHECK(q >= 0.0);
    CHECK_THROWS_AS(head_forward(h, std::vector<double>{1.0}), Error);
}

TEST_CASE("forward_token composes realignment, pooling and heads") {
    const auto cfg = tiny_config();
    auto bundle = init_model(cfg);
    Rng rng(1);
    const auto tf = random_token(rng, cfg);

    SUBCASE("zero heads give 0.5 everywhere") {
        for (auto* head : {&bundle.head_v, &bundle.head_a, &bundle.head_va}) {
            std::fill(head->w.begin(), head->w.end(), 0.0);
            head->b = 0.0;
        }
        const auto f = forward_token(bundle, tf, false, rng);
        CHECK(f.p_v == 0.5);
        CHECK(f.p_a == 0.5);
        CHECK(f.p_av == 0.5);
    }
    SUBCASE("fusion dimension and determinism") {
        const auto a = forward_token(bundle, tf, false, rng);
        const auto b = forward_token(bundle, tf, false, rng);
        CHECK(a.fused().size() == cfg.d_v + cfg.d_a);
        CHECK(bundle.head_va.w.size() == cfg.d_v + cfg.d_a);
        CHECK(a.p_av == b.p_av);
        CHECK(a.f_v == b.f_v);
    }
}

TEST_CASE("bundle gradients match central differences for every trainable tensor") {
    const auto cfg = tiny_config();
    auto bundle = init_model(cfg);
    Rng rng(41);
    for (auto* t : {&bundle.realign_v.phi_up, &bundle.realign_a.phi_up}) {
        for (auto& x : t->flat()) x = 0.3 * rng.normal();
    }
    const auto tf = random_token(rng, cfg);
    // Objective: sum of weighted logits, so dL/dlogit per head is the weight.
    const double wv = 0.7, wa = -1.3, wva = 0.4;
    auto objective = [&] {
        Rng r(0);
        const auto f = forward_token(bundle, tf, false, r);
        return wv * head_logit(bundle.head_v, f.f_v) + wa * head_logit(bundle.head_a, f.f_a) +
               wva * head_logit(bundle.head_va, f.fused());
    };
    auto fwd = forward_token(bundle, tf, true, rng);
    auto grads = BundleGrads::zeros_like(bundle);
    backward_token(bundle, fwd, wv, wa, wva, grads);

    auto check_all = [&](std::span<double> param, std::span<const double> analytic) {
        for (std::size_t i = 0; i < param.size(); ++i) {
            CHECK(rel_err(analytic[i], central_difference(param[i], objective, 1e-5)) < 1e-4);
        }
    };
    check_all(bundle.realign_v.phi_up.flat(), grads.phi_up_v.flat());
    check_all(bundle.realign_v.phi_down.flat(), grads.phi_down_v.flat());
    check_all(bundle.realign_a.phi_up.flat(), grads.phi_up_a.flat());
    check_all(bundle.realign_a.phi_down.flat(), grads.phi_down_a.flat());
    check_all(bundle.head_v.w, grads.w_v);
    check_all(bundle.head_a.w, grads.w_a);
    check_all(bundle.head_va.w, grads.w_va);
    CHECK(grads.b_v == wv);
    CHECK(grads.b_a == wa);
    CHECK(grads.b_va == wva);
}

TEST_CASE("checkpoint round-trip") {
    TempDir dir;
    const auto cfg = tiny_config();
    auto bundle = init_model(cfg);
    save_checkpoint(bundle, dir.path() / "a.bin");
    const auto loaded = load_checkpoint(dir.path() / "a.bin");
    CHECK(loaded.config == bundle.config);
    // Initialization is float-representable, so nothing is lost.
    CHECK(loaded.realign_v.w0 == bundle.realign_v.w0);
    CHECK(loaded.realign_a.phi_down == bundle.realign_a.phi_down);
    CHECK(loaded.head_va.w == bundle.head_va.w);
    CHECK(loaded.head_va.b == bundle.head_va.b);

    save_checkpoint(loaded, dir.path() / "b.bin");
    const auto bytes = slurp(dir.path() / "a.bin");
    CHECK(bytes == slurp(dir.path() / "b.bin"));
    CHECK(bytes.substr(0, 8) == "WAFLCKP1");

    auto corrupt = bytes;
    corrupt[3] = 'x';
    std::ofstream(dir.path() / "c.bin", std::ios::binary) << corrupt;
    try {
        load_checkpoint(dir.path() / "c.bin");
        FAIL("expected FormatError");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::FormatError);
    }
}
