#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <limits>
#include <vector>

#include "drq/rng.hpp"
#include "drq/twohot.hpp"

using namespace drq;

TEST_CASE("signed exponential and its inverse at pinned points") {
    CHECK(symexp(0.0) == 0.0);
    CHECK(symexp(1.0) == doctest::Approx(std::exp(1.0) - 1.0).epsilon(1e-15));
    CHECK(symexp(1.0) == doctest::Approx(1.718281828).epsilon(1e-9));
    CHECK(symexp(-1.0) == doctest::Approx(-(std::exp(1.0) - 1.0)).epsilon(1e-15));
    CHECK(symlog(0.0) == 0.0);
    CHECK(symlog(symexp(3.7)) == doctest::Approx(3.7).epsilon(1e-12));
    for (double x : {-9.5, -2.0, -1e-3, 0.4, 5.0, 9.9})
        CHECK(symexp(symlog(symexp(x))) ==
              doctest::Approx(symexp(x)).epsilon(1e-12));
}

TEST_CASE("the default grid is symmetric, strictly increasing and centered at zero") {
    const BinGrid grid;
    REQUIRE(grid.num_bins == 65);
    REQUIRE(static_cast<int>(grid.centers.size()) == 65);
    for (int i = 1; i < 65; ++i) CHECK(grid.centers[i] > grid.centers[i - 1]);
    CHECK(grid.centers[32] == 0.0);
    for (int i = 0; i < 65; ++i)
        CHECK(grid.centers[i] == doctest::Approx(-grid.centers[64 - i]).epsilon(1e-12));
    CHECK(grid.min_center() == doctest::Approx(-(std::exp(10.0) - 1.0)).epsilon(1e-12));
    CHECK(grid.max_center() == doctest::Approx(std::exp(10.0) - 1.0).epsilon(1e-12));
}

TEST_CASE("zero encodes as an exact one-hot at the central bin") {
    const BinGrid grid;
    const TwoHotCode code = encode(0.0, grid);
    CHECK(code.lo_index == 32);
    CHECK(code.lo_weight == 1.0);

    const auto targets = twohot_targets<double>({0.0}, grid);
    for (int k = 0; k < grid.num_bins; ++k)
        CHECK(targets.at(0, k) == (k == 32 ? 1.0 : 0.0));
}

TEST_CASE("a midpoint reward splits its mass evenly") {
    const BinGrid grid;
    const double mid = 0.5 * (grid.centers[40] + grid.centers[41]);
    const TwoHotCode code = encode(mid, grid);
    CHECK(code.lo_index == 40);
    CHECK(code.lo_weight == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("out-of-range rewards clamp to the outermost centers") {
    const BinGrid grid;
    const TwoHotCode hi = encode(1e9, grid);
    CHECK(hi.lo_index == 63);
    CHECK(hi.lo_weight == 0.0);
    CHECK(decode_code(hi, grid) == grid.max_center());

    const TwoHotCode lo = encode(-1e9, grid);
    CHECK(lo.lo_index == 0);
    CHECK(lo.lo_weight == 1.0);
    CHECK(decode_code(lo, grid) == grid.min_center());

    CHECK_THROWS_AS(encode(std::numeric_limits<double>::quiet_NaN(), grid),
                    input_error);
}

TEST_CASE("encode is monotone in the reward") {
    const BinGrid grid;
    int prev = -1;
    for (double r = -30.0; r <= 30.0; r += 0.37) {
        const TwoHotCode code = encode(r, grid);
        CHECK(code.lo_index >= prev);
        CHECK(code.lo_index >= 0);
        CHECK(code.lo_index <= grid.num_bins - 2);
        CHECK(code.lo_weight >= 0.0);
        CHECK(code.lo_weight <= 1.0);
        prev = code.lo_index;
    }
}

TEST_CASE("encode then decode roundtrips in-range rewards") {
    const BinGrid grid;
    Rng rng(2024);
    for (int i = 0; i < 10000; ++i) {
        // log-uniform magnitudes cover every bin scale
        const double mag = symexp(rng.uniform(0.0, 10.0));
        const double r = rng.uniform(0.0, 1.0) < 0.5 ? mag : -mag;
        const double back = decode_code(encode(r, grid), grid);
        CHECK(std::abs(back - r) <= 1e-6 * std::max(1.0, std::abs(r)));
    }

    // The dense-target path agrees with the code path.
    const std::vector<double> rs = {-100.0, -1.0, 0.0, 0.3, 7.77, 12345.0};
    const auto targets = twohot_targets<double>(rs, grid);
    for (size_t i = 0; i < rs.size(); ++i) {
        std::vector<double> row(targets.row(static_cast<int>(i)),
                                targets.row(static_cast<int>(i)) + grid.num_bins);
        const double direct = decode(row, grid);
        CHECK(direct == doctest::Approx(decode_code(encode(rs[i], grid), grid))
                            .epsilon(1e-12));
    }
}

TEST_CASE("decoding a uniform categorical gives zero by symmetry") {
    const BinGrid grid;
    std::vector<double> probs(65, 1.0 / 65.0);
    CHECK(std::abs(decode(probs, grid)) <= 1e-8);
}

TEST_CASE("decode validates its input") {
    const BinGrid grid;
    std::vector<double> short_probs(64, 1.0 / 64.0);
    CHECK_THROWS_AS(decode(short_probs, grid), shape_error);

    std::vector<double> neg(65, 1.0 / 65.0);
    neg[3] = -neg[3];
    CHECK_THROWS_AS(decode(neg, grid), input_error);

    std::vector<double> unnorm(65, 1.0 / 65.0);
    unnorm[10] += 0.5;
    CHECK_THROWS_AS(decode(unnorm, grid), input_error);
}

TEST_CASE("uniform logits cost the log of the bin count") {
    const BinGrid grid;
    std::vector<double> logits(65, -1.3);
    CHECK(reward_loss(logits, 0.77, grid) ==
          doctest::Approx(std::log(65.0)).epsilon(1e-12));
    CHECK(reward_loss(logits, 0.77, grid) == doctest::Approx(4.1744).epsilon(1e-4));
}

TEST_CASE("matched logits drive the coding loss toward zero") {
    const BinGrid grid;
    // Reward exactly at a center: a huge logit there dominates.
    const double r = grid.centers[40];
    std::vector<double> logits(65, 0.0);
    logits[40] = 40.0;
    CHECK(reward_loss(logits, r, grid) <= 1e-9);
}

TEST_CASE("the coding loss gradient is softmax minus target") {
    const BinGrid grid;
    Rng rng(5);
    std::vector<double> logits(65);
    for (auto& l : logits) l = rng.uniform(-2.0, 2.0);
    const double r = 3.14;

    // softmax and two-hot target
    double mx = logits[0];
    for (double l : logits) mx = std::max(mx, l);
    double z = 0.0;
    for (double l : logits) z += std::exp(l - mx);
    const TwoHotCode code = encode(r, grid);

    const double h = 1e-6;
    for (int k = 0; k < 65; k += 7) {
        auto up = logits, dn = logits;
        up[k] += h;
        dn[k] -= h;
        const double fd =
            (reward_loss(up, r, grid) - reward_loss(dn, r, grid)) / (2.0 * h);
        const double soft = std::exp(logits[k] - mx) / z;
        double target = 0.0;
        if (k == code.lo_index) target = code.lo_weight;
        if (k == code.lo_index + 1) target = 1.0 - code.lo_weight;
        CHECK(fd == doctest::Approx(soft - target).epsilon(1e-5));
    }
}

TEST_CASE("the coding loss rejects malformed logits") {
    const BinGrid grid;
    std::vector<double> logits(64, 0.0);
    CHECK_THROWS_AS(reward_loss(logits, 0.0, grid), shape_error);
    std::vector<double> inf_logits(65, 0.0);
    inf_logits[7] = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(reward_loss(inf_logits, 0.0, grid), input_error);
}

TEST_CASE("grid construction rejects malformed ranges") {
    CHECK_THROWS_AS(BinGrid(1, -10.0, 10.0), config_error);
    CHECK_THROWS_AS(BinGrid(65, 10.0, -10.0), config_error);
}
