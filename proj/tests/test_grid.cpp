#include <catch2/catch_amalgamated.hpp>

#include "freecond/grid.hpp"
#include "freecond/rng.hpp"
#include "oracles.hpp"

using namespace freecond;

static MaskGrid random_binary(int h, int w, SeededStream& rng) {
    MaskGrid m(h, w);
    for (double& v : m.values) v = rng.next_uniform() < 0.5 ? 0.0 : 1.0;
    return m;
}

TEST_CASE("hadamard elementwise product") {
    LatentGrid a(1, 1, 1);
    a.at(0, 0, 0) = 2.0;
    LatentGrid b(1, 1, 1);
    b.at(0, 0, 0) = 3.0;
    CHECK(hadamard(a, b).at(0, 0, 0) == 6.0);

    LatentGrid g(1, 2, 2);
    g.values = {1, 2, 3, 4};
    MaskGrid m(2, 2);
    m.values = {0, 1, 1, 0};
    LatentGrid r = hadamard(g, m);
    CHECK(r.values == std::vector<double>{0, 2, 3, 0});
}

TEST_CASE("hadamard with all-ones mask is the identity") {
    SeededStream rng(11);
    LatentGrid a(3, 4, 5);
    for (double& v : a.values) v = rng.next_normal();
    MaskGrid ones(4, 5, 1.0);
    CHECK(hadamard(a, ones).values == a.values);
}

TEST_CASE("hadamard shape mismatch names both shapes") {
    LatentGrid a(1, 2, 2), b(1, 3, 2);
    CHECK_THROWS_AS(hadamard(a, b), DimensionError);
    try {
        hadamard(a, b);
    } catch (const DimensionError& e) {
        std::string msg = e.what();
        CHECK(msg.find("1x2x2") != std::string::npos);
        CHECK(msg.find("1x3x2") != std::string::npos);
    }
}

TEST_CASE("complement flips binary masks and is an involution") {
    MaskGrid m(1, 2);
    m.values = {1, 0};
    CHECK(complement(m).values == std::vector<double>{0, 1});

    MaskGrid zeros(3, 3, 0.0);
    CHECK(complement(zeros).values == std::vector<double>(9, 1.0));

    SeededStream rng(5);
    for (int trial = 0; trial < 20; ++trial) {
        MaskGrid r = random_binary(6, 7, rng);
        CHECK(complement(complement(r)).values == r.values);
    }
}

TEST_CASE("complement rejects non-binary masks") {
    MaskGrid m(1, 1);
    m.values = {0.5};
    CHECK_THROWS_AS(complement(m), DomainError);
}

TEST_CASE("downsample_nearest uses the top-left sample") {
    MaskGrid m(4, 4, 0.0);
    for (int y = 0; y < 2; ++y)
        for (int x = 0; x < 2; ++x) m.at(y, x) = 1.0;
    MaskGrid d = downsample_nearest(m, 2);
    REQUIRE(d.height == 2);
    REQUIRE(d.width == 2);
    CHECK(d.values == std::vector<double>{1, 0, 0, 0});

    CHECK(downsample_nearest(m, 1).values == m.values);
}

TEST_CASE("downsample_nearest matches the per-cell oracle") {
    SeededStream rng(21);
    for (int trial = 0; trial < 50; ++trial) {
        MaskGrid m = random_binary(8, 8, rng);
        CHECK(downsample_nearest(m, 4).values == oracle::naive_downsample(m, 4).values);
        CHECK(downsample_nearest(m, 2).values == oracle::naive_downsample(m, 2).values);
    }
    for (int trial = 0; trial < 20; ++trial) {
        MaskGrid m = random_binary(16, 16, rng);
        CHECK(downsample_nearest(m, 4).values == oracle::naive_downsample(m, 4).values);
    }
}

TEST_CASE("downsample_nearest rejects non-divisible dims") {
    MaskGrid m(5, 4, 0.0);
    CHECK_THROWS_AS(downsample_nearest(m, 2), DimensionError);
}

TEST_CASE("dilate grows a center pixel into a block") {
    MaskGrid m(5, 5, 0.0);
    m.at(2, 2) = 1.0;
    MaskGrid d = dilate(m, 1);
    for (int y = 0; y < 5; ++y)
        for (int x = 0; x < 5; ++x) {
            bool inside = y >= 1 && y <= 3 && x >= 1 && x <= 3;
            CHECK(d.at(y, x) == (inside ? 1.0 : 0.0));
        }
    CHECK(dilate(m, 0).values == m.values);

    MaskGrid ones(4, 4, 1.0);
    CHECK(dilate(ones, 3).values == ones.values);
}

TEST_CASE("dilate matches the brute-force sweep and is monotone/extensive") {
    SeededStream rng(33);
    for (int trial = 0; trial < 20; ++trial) {
        MaskGrid m = random_binary(9, 9, rng);
        for (int r = 0; r <= 2; ++r) {
            MaskGrid d = dilate(m, r);
            CHECK(d.values == oracle::naive_dilate(m, r).values);
            for (std::size_t i = 0; i < m.values.size(); ++i)
                CHECK(m.values[i] <= d.values[i]);  // extensive
        }
        // monotone: adding pixels never shrinks the dilation
        MaskGrid bigger = m;
        bigger.at(0, 0) = 1.0;
        MaskGrid d1 = dilate(m, 1), d2 = dilate(bigger, 1);
        for (std::size_t i = 0; i < m.values.size(); ++i) CHECK(d1.values[i] <= d2.values[i]);
    }
}

TEST_CASE("shift translates and zero-fills") {
    MaskGrid m(3, 3, 0.0);
    m.at(0, 0) = 1.0;
    MaskGrid s = shift(m, 1, 1);
    CHECK(s.at(1, 1) == 1.0);
    CHECK(s.sum() == 1.0);

    CHECK(shift(m, 0, 0).values == m.values);
    CHECK(shift(m, 5, 0).sum() == 0.0);  // fully off-grid

    SeededStream rng(44);
    for (int trial = 0; trial < 20; ++trial) {
        MaskGrid r = random_binary(6, 6, rng);
        CHECK(shift(r, 2, -1).sum() <= r.sum());  // never invents pixels
    }
}

TEST_CASE("require_binary names the offender") {
    MaskGrid m(1, 2);
    m.values = {1.0, 0.25};
    try {
        require_binary(m, "test-mask");
        FAIL("expected DomainError");
    } catch (const DomainError& e) {
        CHECK(std::string(e.what()).find("test-mask") != std::string::npos);
    }
}

TEST_CASE("grid accessors and shape strings") {
    LatentGrid z(2, 3, 4);
    CHECK(z.size() == 24);
    CHECK(z.shape_str() == "2x3x4");
    MaskGrid m(3, 4);
    CHECK(m.shape_str() == "3x4");
    z.at(1, 2, 3) = 7.0;
    CHECK(z.values[1 * 12 + 2 * 4 + 3] == 7.0);
    CHECK(z.all_finite());
    z.at(0, 0, 0) = std::numeric_limits<double>::quiet_NaN();
    CHECK(!z.all_finite());
}
