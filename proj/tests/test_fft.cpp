#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <complex>
#include <vector>

#include <fftw3.h>

#include "stiffwork/fft.hpp"
#include "stiffwork/rng.hpp"

using namespace stiffwork;
using cplx = std::complex<double>;

namespace {

std::vector<cplx> random_signal(std::size_t n, std::uint64_t seed) {
    Rng r(seed);
    std::vector<cplx> x(n);
    for (auto& z : x) z = r.complex_normal();
    return x;
}

std::vector<cplx> fftw_forward(const std::vector<cplx>& x) {
    std::vector<cplx> out(x.size());
    fftw_plan plan = fftw_plan_dft_1d(static_cast<int>(x.size()),
                                      reinterpret_cast<fftw_complex*>(const_cast<cplx*>(x.data())),
                                      reinterpret_cast<fftw_complex*>(out.data()), FFTW_FORWARD,
                                      FFTW_ESTIMATE | FFTW_PRESERVE_INPUT);
    fftw_execute(plan);
    fftw_destroy_plan(plan);
    return out;
}

}  // namespace

TEST_CASE("forward transform matches FFTW", "[fft]") {
    for (const std::size_t n : {8u, 64u, 1024u, 4096u}) {
        auto x = random_signal(n, 1000 + n);
        const auto ref = fftw_forward(x);
        fft(x);
        double err = 0.0;
        for (std::size_t i = 0; i < n; ++i) err = std::max(err, std::abs(x[i] - ref[i]));
        REQUIRE(err < 1e-10);
    }
}

TEST_CASE("round trip restores the signal", "[fft]") {
    auto x = random_signal(2048, 77);
    const auto orig = x;
    fft(x);
    ifft(x);
    double err = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) err = std::max(err, std::abs(x[i] - orig[i]));
    REQUIRE(err < 1e-12);
}

TEST_CASE("small sizes match the direct DFT", "[fft]") {
    const std::size_t n = 32;
    auto x = random_signal(n, 9);
    std::vector<cplx> ref(n, {0.0, 0.0});
    for (std::size_t k = 0; k < n; ++k)
        for (std::size_t j = 0; j < n; ++j)
            ref[k] += x[j] * std::polar(1.0, -2.0 * M_PI * static_cast<double>(k * j % n) / static_cast<double>(n));
    fft(x);
    for (std::size_t k = 0; k < n; ++k) REQUIRE(std::abs(x[k] - ref[k]) < 1e-12);
}

TEST_CASE("non power of two is rejected", "[fft]") {
    std::vector<cplx> x(12);
    REQUIRE_THROWS_AS(fft_pow2(x.data(), x.size(), false), ValidationError);
}
