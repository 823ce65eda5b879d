#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <set>

#include "stiffwork/rng.hpp"

using namespace stiffwork;

TEST_CASE("identical seeds give identical streams", "[rng]") {
    Rng a(42), b(42);
    for (int i = 0; i < 1000; ++i) REQUIRE(a.next() == b.next());
}

TEST_CASE("different seeds give different streams", "[rng]") {
    Rng a(1), b(2);
    int same = 0;
    for (int i = 0; i < 64; ++i)
        if (a.next() == b.next()) ++same;
    REQUIRE(same == 0);
}

TEST_CASE("uniform lies in [0,1) with sane mean", "[rng]") {
    Rng r(7);
    double acc = 0.0;
    for (int i = 0; i < 100000; ++i) {
        const double u = r.uniform();
        REQUIRE(u >= 0.0);
        REQUIRE(u < 1.0);
        acc += u;
    }
    REQUIRE(std::abs(acc / 100000.0 - 0.5) < 0.01);
}

TEST_CASE("normal has unit variance and zero mean", "[rng]") {
    Rng r(11);
    double s = 0.0, s2 = 0.0;
    const int n = 200000;
    for (int i = 0; i < n; ++i) {
        const double x = r.normal();
        s += x;
        s2 += x * x;
    }
    const double mean = s / n;
    const double var = s2 / n - mean * mean;
    REQUIRE(std::abs(mean) < 0.01);
    REQUIRE(std::abs(var - 1.0) < 0.02);
}

TEST_CASE("complex normal components are independent draws", "[rng]") {
    Rng r(5), ref(5);
    const auto z = r.complex_normal();
    const double re = ref.normal();
    const double im = ref.normal();
    REQUIRE(z.real() == re);
    REQUIRE(z.imag() == im);
}

TEST_CASE("job seeds are distinct and scheduling independent", "[rng]") {
    std::set<std::uint64_t> seen;
    for (std::uint64_t j = 0; j < 4096; ++j) seen.insert(job_seed(123456789ULL, j));
    REQUIRE(seen.size() == 4096);
    REQUIRE(job_seed(99, 7) == job_seed(99, 7));
    REQUIRE(job_seed(99, 7) != job_seed(100, 7));
}
