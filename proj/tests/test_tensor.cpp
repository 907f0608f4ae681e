#include <random>

#include "doctest.h"
#include "oracles.hpp"
#include "prcnn/tensor.hpp"

using namespace prcnn;

TEST_CASE("matmul identity and projector") {
    Tensor eye({2, 2}, {1, 0, 0, 1});
    Tensor a({2, 2}, {1, 2, 3, 4});
    Tensor r = matmul(eye, a);
    CHECK(r(0, 0) == 1);
    CHECK(r(0, 1) == 2);
    CHECK(r(1, 0) == 3);
    CHECK(r(1, 1) == 4);

    Tensor proj({2, 2}, {1, 0, 0, 0});
    Tensor v({2, 1}, {5, 7});
    Tensor pv = matmul(proj, v);
    CHECK(pv(0, 0) == 5);
    CHECK(pv(1, 0) == 0);
}

TEST_CASE("matmul matches triple-loop oracle on random inputs") {
    Rng rng(42);
    std::uniform_real_distribution<double> dist(-2.0, 2.0);
    for (int trial = 0; trial < 20; ++trial) {
        std::uniform_int_distribution<std::size_t> ext(1, 8);
        const std::size_t m = ext(rng), k = ext(rng), n = ext(rng);
        Tensor a({m, k}), b({k, n});
        for (std::size_t i = 0; i < a.size(); ++i) a[i] = dist(rng);
        for (std::size_t i = 0; i < b.size(); ++i) b[i] = dist(rng);
        Tensor got = matmul(a, b);
        Tensor want = oracle::matmul(a, b);
        REQUIRE(got.shape() == std::vector<std::size_t>{m, n});
        for (std::size_t i = 0; i < got.size(); ++i) {
            CHECK(std::abs(got[i] - want[i]) <= 1e-12);
        }
    }
}

TEST_CASE("matmul shape mismatch names both shapes") {
    Tensor a({2, 3}), b({4, 2});
    CHECK_THROWS_WITH_AS(matmul(a, b), doctest::Contains("[2x3]"), DimensionError);
}

TEST_CASE("map_elementwise basics") {
    Tensor t({3}, {1, -2, 3});
    Tensor same = map_elementwise(t, [](double x) { return x; });
    CHECK(same[1] == -2);
    Tensor zero = map_elementwise(t, [](double) { return 0.0; });
    CHECK(zero[0] == 0);
    CHECK(zero[2] == 0);
    Tensor sig = map_elementwise(Tensor({1}, {0.0}),
                                 [](double x) { return 1.0 / (1.0 + std::exp(-x)); });
    CHECK(sig[0] == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("zip_elementwise multiply and add") {
    Tensor a({3}, {1, 2, 3});
    Tensor zeros({3}, {0, 0, 0});
    Tensor ones({3}, {1, 1, 1});
    auto mul = [](double x, double y) { return x * y; };
    Tensor z = zip_elementwise(a, zeros, mul);
    CHECK(z[0] == 0);
    CHECK(z[2] == 0);
    Tensor id = zip_elementwise(a, ones, mul);
    CHECK(id[1] == 2);
    Tensor sum = zip_elementwise(Tensor({2}, {1, 2}), Tensor({2}, {3, 4}),
                                 [](double x, double y) { return x + y; });
    CHECK(sum[0] == 4);
    CHECK(sum[1] == 6);
    CHECK_THROWS_AS(zip_elementwise(a, Tensor({2}), mul), DimensionError);
}

TEST_CASE("zip multiply is commutative with ones identity") {
    Rng rng(7);
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    Tensor a({4, 3}), b({4, 3});
    for (std::size_t i = 0; i < a.size(); ++i) {
        a[i] = dist(rng);
        b[i] = dist(rng);
    }
    auto mul = [](double x, double y) { return x * y; };
    Tensor ab = zip_elementwise(a, b, mul);
    Tensor ba = zip_elementwise(b, a, mul);
    for (std::size_t i = 0; i < ab.size(); ++i) CHECK(ab[i] == ba[i]);
}

TEST_CASE("pad_time_axis construction and round trip") {
    Tensor t({1, 2, 1}, {1.5, -2.5});
    Tensor same = pad_time_axis(t, 0);
    CHECK(same.shape() == t.shape());

    Tensor padded = pad_time_axis(t, 1);
    REQUIRE(padded.shape() == std::vector<std::size_t>{1, 4, 1});
    CHECK(padded(0, 0, 0) == 0);
    CHECK(padded(0, 1, 0) == 1.5);
    CHECK(padded(0, 2, 0) == -2.5);
    CHECK(padded(0, 3, 0) == 0);

    double sum_orig = 0, sum_pad = 0;
    for (std::size_t i = 0; i < t.size(); ++i) sum_orig += t[i];
    for (std::size_t i = 0; i < padded.size(); ++i) sum_pad += padded[i];
    CHECK(sum_orig == sum_pad);

    Tensor back = crop_time_axis(padded, 1);
    REQUIRE(back.shape() == t.shape());
    for (std::size_t i = 0; i < t.size(); ++i) CHECK(back[i] == t[i]);
}

TEST_CASE("random_init zeros and determinism") {
    Tensor z = random_init({3}, InitScheme::zeros, Seed{1});
    CHECK(z[0] == 0);
    CHECK(z[2] == 0);

    Tensor a = random_init({4, 5}, InitScheme::uniform_scaled, Seed{99});
    Tensor b = random_init({4, 5}, InitScheme::uniform_scaled, Seed{99});
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
    Tensor c = random_init({4, 5}, InitScheme::uniform_scaled, Seed{100});
    bool any_diff = false;
    for (std::size_t i = 0; i < a.size(); ++i) any_diff = any_diff || a[i] != c[i];
    CHECK(any_diff);
}

TEST_CASE("uniform_scaled bound and mean for fan 3+3") {
    // s = sqrt(6/(3+3)) = 1
    Rng rng(5);
    const std::size_t draws = 10000;
    double mean = 0.0;
    for (std::size_t rep = 0; rep < draws / 9; ++rep) {
        Tensor t = uniform_scaled({3, 3}, 3, 3, rng);
        for (std::size_t i = 0; i < t.size(); ++i) {
            CHECK(t[i] > -1.0);
            CHECK(t[i] < 1.0);
            mean += t[i];
        }
    }
    mean /= static_cast<double>((draws / 9) * 9);
    CHECK(std::abs(mean) < 0.02);
}
