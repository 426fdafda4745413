#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "error.hpp"
#include "neuron.hpp"
#include "rng.hpp"
#include "tensor.hpp"

using namespace snnzip;

TEST_CASE("one step at the default constants") {
    LifParams p;  // leak 0.5, threshold 1.0
    Tensor u0({3}), in = Tensor::from({3}, {1.0, 0.999, 0.3});
    auto r = lif_step(u0, in, p);
    CHECK(r.u_pre[0] == doctest::Approx(1.0));
    CHECK(r.spikes[0] == 1.0);  // threshold is inclusive
    CHECK(r.u_post[0] == 0.0);  // hard reset
    CHECK(r.spikes[1] == 0.0);
    CHECK(r.u_post[1] == doctest::Approx(0.999));
    CHECK(r.spikes[2] == 0.0);
}

TEST_CASE("membrane charge combines leaked state and input") {
    LifParams p;
    Tensor u0 = Tensor::from({1}, {0.8}), in = Tensor::from({1}, {0.3});
    auto r = lif_step(u0, in, p);
    CHECK(r.u_pre[0] == doctest::Approx(0.5 * 0.8 + 0.3));
    CHECK(r.spikes[0] == 0.0);
}

TEST_CASE("three-step recurrence by hand") {
    // Constant drive 0.6 at leak 0.5: 0.6, 0.9, 1.05 (fires), then the reset
    // restarts the climb.
    LifParams p;
    Tensor u({1}), in = Tensor::from({1}, {0.6});
    auto r1 = lif_step(u, in, p);
    CHECK(r1.u_pre[0] == doctest::Approx(0.6));
    CHECK(r1.spikes[0] == 0.0);
    auto r2 = lif_step(r1.u_post, in, p);
    CHECK(r2.u_pre[0] == doctest::Approx(0.9));
    CHECK(r2.spikes[0] == 0.0);
    auto r3 = lif_step(r2.u_post, in, p);
    CHECK(r3.u_pre[0] == doctest::Approx(1.05));
    CHECK(r3.spikes[0] == 1.0);
    CHECK(r3.u_post[0] == 0.0);
    auto r4 = lif_step(r3.u_post, in, p);
    CHECK(r4.u_pre[0] == doctest::Approx(0.6));
}

TEST_CASE("step honors the update equations elementwise on random data") {
    Rng rng(11);
    for (int rep = 0; rep < 50; ++rep) {
        LifParams p;
        p.leak = rng.uniform(0.0, 0.99);
        p.threshold = rng.uniform(0.1, 2.0);
        Tensor u0({40}), in({40});
        for (std::size_t i = 0; i < 40; ++i) {
            u0[i] = rng.uniform(-1.0, 1.0);
            in[i] = rng.uniform(-1.0, 2.0);
        }
        auto r = lif_step(u0, in, p);
        for (std::size_t i = 0; i < 40; ++i) {
            const double u = p.leak * u0[i] + in[i];
            CHECK(r.u_pre[i] == u);
            CHECK(r.spikes[i] == (u >= p.threshold ? 1.0 : 0.0));
            CHECK(r.u_post[i] == u * (1.0 - r.spikes[i]));
        }
    }
}

TEST_CASE("shape and parameter validation") {
    LifParams p;
    CHECK_THROWS_AS(lif_step(Tensor({2}), Tensor({3}), p), Error);

    LifParams bad = p;
    bad.leak = -0.1;
    CHECK_THROWS_AS(bad.validate(), Error);
    bad = p;
    bad.leak = 1.0;
    CHECK_THROWS_AS(bad.validate(), Error);
    bad = p;
    bad.threshold = 0.0;
    CHECK_THROWS_AS(bad.validate(), Error);
    bad = p;
    bad.surrogate_width = 0.0;
    CHECK_THROWS_AS(bad.validate(), Error);
    CHECK_NOTHROW(p.validate());
}

TEST_CASE("surrogate slope is a unit-peak triangle around the threshold") {
    LifParams p;  // threshold 1, width 1
    CHECK(surrogate_grad(1.0, p) == doctest::Approx(1.0));
    CHECK(surrogate_grad(0.5, p) == doctest::Approx(0.5));
    CHECK(surrogate_grad(1.5, p) == doctest::Approx(0.5));
    CHECK(surrogate_grad(0.0, p) == doctest::Approx(0.0));
    CHECK(surrogate_grad(2.0, p) == doctest::Approx(0.0));
    CHECK(surrogate_grad(-3.0, p) == 0.0);
    CHECK(surrogate_grad(9.0, p) == 0.0);

    LifParams n;
    n.threshold = 0.8;
    n.surrogate_width = 0.4;
    CHECK(surrogate_grad(0.8, n) == doctest::Approx(1.0));
    CHECK(surrogate_grad(0.6, n) == doctest::Approx(0.5));
    CHECK(surrogate_grad(1.2, n) == doctest::Approx(0.0));
    CHECK(surrogate_grad(1.3, n) == 0.0);
}

TEST_CASE("surrogate slope integrates to one at the default width") {
    LifParams p;
    const int n = 200000;
    const double lo = p.threshold - 2.0, hi = p.threshold + 2.0;
    const double h = (hi - lo) / n;
    double area = 0.0;
    for (int i = 0; i <= n; ++i) {
        const double w = (i == 0 || i == n) ? 0.5 : 1.0;
        area += w * surrogate_grad(lo + i * h, p);
    }
    area *= h;
    CHECK(area == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("surrogate area scales with the width") {
    // Height stays 1, support is [-w, +w] around the threshold, so the area
    // under the triangle is exactly the width.
    for (double width : {0.5, 1.5, 2.0}) {
        LifParams p;
        p.surrogate_width = width;
        const int n = 400000;
        const double lo = p.threshold - 3.0, hi = p.threshold + 3.0;
        const double h = (hi - lo) / n;
        double area = 0.0;
        for (int i = 0; i <= n; ++i) {
            const double w = (i == 0 || i == n) ? 0.5 : 1.0;
            area += w * surrogate_grad(lo + i * h, p);
        }
        area *= h;
        CHECK(area == doctest::Approx(width).epsilon(1e-6));
    }
}
