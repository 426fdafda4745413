#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <vector>

#include "error.hpp"
#include "network.hpp"
#include "oracles.hpp"
#include "prune.hpp"
#include "rng.hpp"
#include "tensor.hpp"

using namespace snnzip;
using namespace snnzip::testsupport;

namespace {

// [B, T, C, h, w] history with the given flat values.
Tensor history(std::size_t B, std::size_t T, std::size_t C, std::size_t h, std::size_t w,
               std::vector<double> vals) {
    return Tensor::from({B, T, C, h, w}, std::move(vals));
}

Architecture prunable_arch(std::size_t channels1, std::size_t channels2, double r1, double r2) {
    Architecture a;
    a.input = {1, 8, 8, true};
    a.n_classes = 2;
    LayerDef c1;
    c1.kind = LayerKind::conv2d;
    c1.out_channels = channels1;
    c1.kernel = 3;
    c1.padding = 1;
    c1.prunable = true;
    c1.prune_ratio = r1;
    LayerDef l1{};
    l1.kind = LayerKind::lif;
    LayerDef pool;
    pool.kind = LayerKind::maxpool;
    LayerDef c2;
    c2.kind = LayerKind::conv2d;
    c2.out_channels = channels2;
    c2.kernel = 3;
    c2.padding = 1;
    c2.prunable = true;
    c2.prune_ratio = r2;
    LayerDef l2{};
    l2.kind = LayerKind::lif;
    LayerDef pool2;
    pool2.kind = LayerKind::maxpool;
    LayerDef d;
    d.kind = LayerKind::dense;
    d.out_features = 2;
    LayerDef l3{};
    l3.kind = LayerKind::lif;
    a.layers = {c1, l1, pool, c2, l2, pool2, d, l3};
    return a;
}

}  // namespace

TEST_CASE("membrane-magnitude scores by hand") {
    // One sample, one step, two channels of 2x2.
    auto h = history(1, 1, 2, 2, 2, {1.0, -1.0, 2.0, 0.0, 0.5, 0.5, 0.5, 0.5});
    auto s = score_sca(h);
    REQUIRE(s.size() == 2);
    CHECK(s[0] == doctest::Approx(4.0));
    CHECK(s[1] == doctest::Approx(2.0));

    // Averaging over two samples and two steps.
    std::vector<double> v;
    for (int i = 0; i < 4; ++i) {  // (b,t) blocks
        v.insert(v.end(), {1.0, 1.0, 1.0, 1.0});   // channel 0: |.|_1 = 4 each block
        v.insert(v.end(), {0.0, 0.0, 0.0, double(i)});  // channel 1: 0,1,2,3
    }
    auto s2 = score_sca(history(2, 2, 2, 2, 2, v));
    CHECK(s2[0] == doctest::Approx(4.0));
    CHECK(s2[1] == doctest::Approx((0.0 + 1.0 + 2.0 + 3.0) / 4.0));

    // Flattened histories [B, T, C] score the channel magnitudes alone.
    auto s3 = score_sca(Tensor::from({1, 2, 2}, {1.0, -3.0, 2.0, 1.0}));
    CHECK(s3[0] == doctest::Approx(1.5));
    CHECK(s3[1] == doctest::Approx(2.0));
}

TEST_CASE("spike-map rank scores by hand") {
    SUBCASE("constant-on map is rank one") {
        auto h = history(1, 2, 1, 3, 3, [] {
            std::vector<double> v(18, 1.0);
            return v;
        }());
        auto s = score_svs(h, 1e-6);
        REQUIRE(s.size() == 1);
        CHECK(s[0] == doctest::Approx(1.0));
    }
    SUBCASE("silent map is rank zero") {
        auto s = score_svs(history(1, 1, 1, 3, 3, std::vector<double>(9, 0.0)), 1e-6);
        CHECK(s[0] == doctest::Approx(0.0));
    }
    SUBCASE("identity pattern has full rank") {
        std::vector<double> v(9, 0.0);
        v[0] = v[4] = v[8] = 1.0;
        auto s = score_svs(history(1, 1, 1, 3, 3, std::move(v)), 1e-6);
        CHECK(s[0] == doctest::Approx(3.0));
    }
    SUBCASE("the batch average of per-sample ranks") {
        // Sample 1: all ones (rank 1).  Sample 2: identity (rank 2).
        std::vector<double> v = {1, 1, 1, 1, 1, 0, 0, 1};
        auto s = score_svs(history(2, 1, 1, 2, 2, std::move(v)), 1e-6);
        CHECK(s[0] == doctest::Approx(1.5));
    }
    SUBCASE("significance threshold is strict") {
        // T=2 with one step firing only the top-left pixel: average map
        // diag(0.5, 0) plus a firing corner, so singular values {~1, 0.5}.
        std::vector<double> v = {1, 0, 0, 1,   // step 1: identity
                                 1, 0, 0, 0};  // step 2: top-left only
        // Average = [[1, 0], [0, 0.5]]; singular values 1 and 0.5.
        auto h = history(1, 2, 1, 2, 2, std::move(v));
        CHECK(score_svs(h, 0.4)[0] == doctest::Approx(2.0));
        CHECK(score_svs(h, 0.6)[0] == doctest::Approx(1.0));
    }
}

TEST_CASE("spike-map rank requires spatial history and a positive threshold") {
    try {
        score_svs(Tensor({1, 2, 3}), 1e-6);
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::unsupported_layer);
    }
    CHECK_THROWS_AS(score_svs(history(1, 1, 1, 2, 2, {1, 0, 0, 1}), 0.0), Error);
    CHECK_THROWS_AS(score_svs(history(1, 1, 1, 2, 2, {1, 0, 0, 1}), -1.0), Error);
}

TEST_CASE("rank scores agree with exact integer rank on random binary activity") {
    Rng rng(31);
    for (int rep = 0; rep < 100; ++rep) {
        const std::size_t B = 1 + rng.below(3), T = 1 + rng.below(8), C = 1 + rng.below(3);
        const std::size_t hh = 2 + rng.below(7), ww = 2 + rng.below(7);
        Tensor h({B, T, C, hh, ww});
        const double p = rng.uniform(0.2, 0.8);
        for (std::size_t i = 0; i < h.size(); ++i) h[i] = rng.uniform() < p ? 1.0 : 0.0;

        auto scores = score_svs(h, 1e-6);
        REQUIRE(scores.size() == C);
        for (std::size_t c = 0; c < C; ++c) {
            double expect = 0.0;
            for (std::size_t b = 0; b < B; ++b) {
                // Integer matrix: T * average spike map = total spike counts.
                std::vector<std::vector<long long>> m(hh, std::vector<long long>(ww, 0));
                for (std::size_t t = 0; t < T; ++t)
                    for (std::size_t y = 0; y < hh; ++y)
                        for (std::size_t x = 0; x < ww; ++x) {
                            const std::size_t idx = (((b * T + t) * C + c) * hh + y) * ww + x;
                            m[y][x] += static_cast<long long>(h[idx]);
                        }
                expect += static_cast<double>(integer_rank(m));
            }
            expect /= static_cast<double>(B);
            CHECK(scores[c] == doctest::Approx(expect).epsilon(1e-12));
        }
    }
}

TEST_CASE("pairwise cosine similarity of score batches") {
    ImportanceReport r;
    r.batch_scores = {{1.0, 0.0}, {1.0, 0.0}};
    CHECK(avg_cos_similarity(r) == doctest::Approx(1.0));

    r.batch_scores = {{1.0, 0.0}, {0.0, 1.0}};
    CHECK(avg_cos_similarity(r) == doctest::Approx(0.0));

    r.batch_scores = {{1.0, 0.0}, {1.0, 1.0}};
    CHECK(avg_cos_similarity(r) == doctest::Approx(1.0 / std::sqrt(2.0)));

    // Three batches: mean of the three pair cosines.
    r.batch_scores = {{1.0, 0.0}, {0.0, 1.0}, {1.0, 1.0}};
    const double c = (0.0 + 1.0 / std::sqrt(2.0) + 1.0 / std::sqrt(2.0)) / 3.0;
    CHECK(avg_cos_similarity(r) == doctest::Approx(c));

    r.batch_scores = {{1.0, 0.0}};
    CHECK_THROWS_AS(avg_cos_similarity(r), Error);
    r.batch_scores = {{1.0, 0.0}, {0.0, 0.0}};
    try {
        avg_cos_similarity(r);
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::degenerate_input);
    }
}

TEST_CASE("mask construction keeps the highest-scoring channels") {
    ImportanceReport rep;
    rep.layer_index = 0;
    rep.layer_name = "conv1";
    rep.scores = {0.1, 0.9, 0.5, 0.7};
    ImportanceReport last;
    last.layer_index = 3;
    last.layer_name = "conv2";
    last.scores = {0.3, 0.2};

    auto mask = build_mask({rep, last}, {0.5, 0.5});
    REQUIRE(mask.layers.size() == 2);
    CHECK(mask.layers[0].ratio == doctest::Approx(0.5));
    CHECK(mask.layers[0].keep == std::vector<std::size_t>{1, 3});
    CHECK(mask.layers[0].total_channels == 4);

    // The deepest prunable layer feeds the head: never cut.
    CHECK(mask.layers[1].ratio == 0.0);
    CHECK(mask.layers[1].keep == std::vector<std::size_t>{0, 1});
}

TEST_CASE("mask construction: rounding and tie-breaks") {
    ImportanceReport rep;
    rep.layer_index = 0;
    rep.scores = {0.5, 0.5, 0.9};
    ImportanceReport last;
    last.layer_index = 3;
    last.scores = {1.0};

    // round(1/3 * 3) = 1 channel pruned; of the tied pair the lower index wins.
    auto mask = build_mask({rep, last}, {1.0 / 3.0, 0.0});
    CHECK(mask.layers[0].keep == std::vector<std::size_t>{0, 2});

    // Half rounds away from zero: 0.5 * 3 = 1.5 -> prune 2.
    auto mask2 = build_mask({rep, last}, {0.5, 0.0});
    CHECK(mask2.layers[0].keep == std::vector<std::size_t>{2});

    // A ratio that would round to pruning everything is rejected.
    ImportanceReport tiny;
    tiny.layer_index = 0;
    tiny.scores = {0.5, 0.4};
    CHECK_THROWS_AS(build_mask({tiny, last}, {0.9, 0.0}), Error);
    CHECK_THROWS_AS(build_mask({rep, last}, {1.5, 0.0}), Error);
    CHECK_THROWS_AS(build_mask({rep}, {0.5, 0.0}), Error);  // report/ratio count mismatch
}

TEST_CASE("scoring a network yields one report per prunable conv") {
    Network net = Network::build(prunable_arch(4, 4, 0.5, 0.0), 17);
    Rng rng(18);
    Tensor x({12, 1, 8, 8});
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = rng.uniform(0.0, 1.0);

    auto reports = score_network(net, x, 2, PruneCriterion::svs, 1e-6, 4, 3, 99);
    REQUIRE(reports.size() == 2);
    CHECK(reports[0].layer_index == 0);
    CHECK(reports[1].layer_index == 3);
    CHECK(reports[0].criterion == PruneCriterion::svs);
    CHECK(reports[0].batch_size == 4);
    REQUIRE(reports[0].batch_scores.size() == 3);
    REQUIRE(reports[0].scores.size() == 4);
    for (std::size_t c = 0; c < 4; ++c) {
        double mean = 0.0;
        for (const auto& bs : reports[0].batch_scores) mean += bs[c];
        CHECK(reports[0].scores[c] == doctest::Approx(mean / 3.0));
    }

    // Same seed, same scores; different seed draws different batches.
    auto again = score_network(net, x, 2, PruneCriterion::svs, 1e-6, 4, 3, 99);
    CHECK(again[0].scores == reports[0].scores);

    // Asking for more samples than the set holds is an error.
    CHECK_THROWS_AS(score_network(net, x, 2, PruneCriterion::svs, 1e-6, 8, 3, 99), Error);
}

TEST_CASE("physically removing channels equals zeroing them, on the readout") {
    Rng rng(41);
    for (int rep = 0; rep < 10; ++rep) {
        const std::size_t ch1 = 4 + rng.below(3);  // 4..6
        Network net = Network::build(prunable_arch(ch1, 3, 0.5, 0.0), 100 + rep);

        Tensor score_x({8, 1, 8, 8});
        for (std::size_t i = 0; i < score_x.size(); ++i) score_x[i] = rng.uniform(0.0, 1.0);
        auto reports =
            score_network(net, score_x, 2, rep % 2 ? PruneCriterion::svs : PruneCriterion::sca, 1e-6, 4, 1, rep);
        auto mask = build_mask(reports, {0.5, 0.0});

        // Copy A: channels physically removed.
        Network pruned = Network::build(prunable_arch(ch1, 3, 0.5, 0.0), 100 + rep);
        apply_mask(pruned, mask);
        CHECK(pruned.layer(0).out_channels < ch1);
        CHECK(pruned.layer(3).in_channels == pruned.layer(0).out_channels);

        // Copy B: same channels silenced in place.
        Network zeroed = Network::build(prunable_arch(ch1, 3, 0.5, 0.0), 100 + rep);
        {
            const auto& keep = mask.layers[0].keep;
            Layer& l = zeroed.layer_mut(0);
            for (std::size_t oc = 0; oc < ch1; ++oc) {
                if (std::find(keep.begin(), keep.end(), oc) != keep.end()) continue;
                for (std::size_t j = 0; j < l.weight.size() / ch1; ++j)
                    l.weight[oc * (l.weight.size() / ch1) + j] = 0.0;
                l.bias[oc] = 0.0;
                if (l.affine) l.scale[oc] = 0.0;
            }
        }

        Tensor probe({4, 1, 8, 8});
        for (std::size_t i = 0; i < probe.size(); ++i) probe[i] = rng.uniform(0.0, 1.5);
        ForwardTrace ta = pruned.forward(probe, 3);
        ForwardTrace tb = zeroed.forward(probe, 3);
        for (std::size_t i = 0; i < ta.readout.size(); ++i)
            CHECK(std::abs(ta.readout[i] - tb.readout[i]) < 1e-12);
    }
}

TEST_CASE("criterion names round-trip") {
    CHECK(criterion_from_name(criterion_name(PruneCriterion::sca)) == PruneCriterion::sca);
    CHECK(criterion_from_name(criterion_name(PruneCriterion::svs)) == PruneCriterion::svs);
    CHECK_THROWS_AS(criterion_from_name("hessian"), Error);
}
