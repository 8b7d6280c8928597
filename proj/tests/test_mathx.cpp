#include <catch2/catch_amalgamated.hpp>

#include "peerscreen/mathx.hpp"
#include "peerscreen/rng.hpp"

using namespace peerscreen;

// Reference values generated independently with scipy.stats (norm, t).
TEST_CASE("normal cdf and quantile against external references", "[mathx]") {
    CHECK(norm_cdf(-0.5) == Catch::Approx(0.3085375387259869).epsilon(1e-12));
    CHECK(norm_cdf(-1.0) == Catch::Approx(0.15865525393145707).epsilon(1e-12));
    CHECK(norm_cdf(1.23) == Catch::Approx(0.8906514475743081).epsilon(1e-12));
    CHECK(norm_cdf(-3.7) == Catch::Approx(0.00010779973347738823).epsilon(1e-10));

    CHECK(norm_quantile(0.975) == Catch::Approx(1.959963984540054).epsilon(1e-10));
    CHECK(norm_quantile(0.9) == Catch::Approx(1.2815515655446004).epsilon(1e-10));
    CHECK(norm_quantile(0.999) == Catch::Approx(3.090232306167813).epsilon(1e-10));
    CHECK(norm_quantile(1e-9) == Catch::Approx(-5.9978070150076865).epsilon(1e-8));
    CHECK_THROWS_AS(norm_quantile(-0.1), std::domain_error);
}

TEST_CASE("quantile inverts cdf across the support", "[mathx]") {
    for (double x = -6.0; x <= 6.0; x += 0.37)
        CHECK(norm_quantile(norm_cdf(x)) == Catch::Approx(x).margin(1e-9));
}

TEST_CASE("student t cdf against external references", "[mathx]") {
    CHECK(student_t_cdf(1.5, 3) == Catch::Approx(0.8847080673775886).epsilon(1e-10));
    CHECK(student_t_cdf(2.0, 10) == Catch::Approx(0.9633059826146297).epsilon(1e-10));
    CHECK(student_t_cdf(1.0, 1) == Catch::Approx(0.75).epsilon(1e-10));
    CHECK(student_t_cdf(2.045, 29) == Catch::Approx(0.9749879620387941).epsilon(1e-10));
    CHECK(student_t_cdf(1.98, 120) == Catch::Approx(0.9750039622112295).epsilon(1e-10));
    CHECK(student_t_cdf(-2.3, 5) == Catch::Approx(0.03488623466601864).epsilon(1e-10));
    CHECK(student_t_cdf(0.0, 7) == Catch::Approx(0.5).margin(1e-14));
}

TEST_CASE("sample statistics helpers", "[mathx]") {
    std::vector<double> v{1.0, 2.0, 3.0, 4.0};
    CHECK(mean(v) == Catch::Approx(2.5));
    CHECK(sample_variance(v) == Catch::Approx(5.0 / 3.0));
    CHECK(median_of_sorted(v) == Catch::Approx(2.5));
    CHECK_THROWS_AS(mean(std::vector<double>{}), std::invalid_argument);
}

TEST_CASE("rng streams are deterministic and decorrelated", "[mathx]") {
    Rng a = Rng::stream(42, 7);
    Rng b = Rng::stream(42, 7);
    for (int i = 0; i < 100; ++i) REQUIRE(a.next_u64() == b.next_u64());

    Rng c = Rng::stream(42, 8);
    int same = 0;
    Rng a2 = Rng::stream(42, 7);
    for (int i = 0; i < 100; ++i) same += a2.next_u64() == c.next_u64();
    CHECK(same == 0);
}

TEST_CASE("rng normal moments are sane", "[mathx]") {
    Rng r(123);
    const int n = 200000;
    double s = 0, s2 = 0;
    for (int i = 0; i < n; ++i) {
        double z = r.normal();
        s += z;
        s2 += z * z;
    }
    double m = s / n, var = s2 / n - m * m;
    CHECK(std::abs(m) < 0.01);
    CHECK(var == Catch::Approx(1.0).margin(0.02));
}

TEST_CASE("rng uniform stays inside the open unit interval", "[mathx]") {
    Rng r(9);
    for (int i = 0; i < 100000; ++i) {
        double u = r.uniform();
        REQUIRE(u > 0.0);
        REQUIRE(u < 1.0);
    }
}
