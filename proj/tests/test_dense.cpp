#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>
#include <complex>
#include <vector>

#include "stiffwork/dense.hpp"
#include "stiffwork/rng.hpp"

using namespace stiffwork;
using cplx = std::complex<double>;

namespace {

std::vector<double> random_symmetric(int n, std::uint64_t seed) {
    Rng r(seed);
    std::vector<double> a(static_cast<std::size_t>(n) * n);
    for (int j = 0; j < n; ++j)
        for (int i = 0; i <= j; ++i) {
            const double v = r.normal();
            a[static_cast<std::size_t>(j) * n + i] = v;
            a[static_cast<std::size_t>(i) * n + j] = v;
        }
    return a;
}

}  // namespace

TEST_CASE("eigh matches an independent solver", "[dense]") {
    const int n = 60;
    auto a = random_symmetric(n, 4);
    const Eigen::Map<Eigen::MatrixXd> am(a.data(), n, n);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(am);
    std::vector<double> w;
    auto v = a;
    eigh_inplace(v, n, w);
    for (int i = 0; i < n; ++i) REQUIRE_THAT(w[i], Catch::Matchers::WithinAbs(es.eigenvalues()(i), 1e-11));
    const Eigen::Map<Eigen::MatrixXd> vm(v.data(), n, n);
    REQUIRE((vm.transpose() * vm - Eigen::MatrixXd::Identity(n, n)).cwiseAbs().maxCoeff() < 1e-12);
    REQUIRE((vm.transpose() * am * vm - es.eigenvalues().asDiagonal().toDenseMatrix()).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("transposed apply equals the naive loop", "[dense]") {
    const int n = 37;
    auto v = random_symmetric(n, 8);
    Rng r(9);
    std::vector<cplx> x(n), y(n), ref(n, {0.0, 0.0});
    for (auto& z : x) z = r.complex_normal();
    real_mat_t_apply(v.data(), n, x.data(), y.data());
    for (int j = 0; j < n; ++j)
        for (int i = 0; i < n; ++i) ref[j] += v[static_cast<std::size_t>(j) * n + i] * x[i];
    for (int j = 0; j < n; ++j) REQUIRE(std::abs(y[j] - ref[j]) < 1e-13);
}

TEST_CASE("apply then transposed apply restores an orthogonal frame", "[dense]") {
    const int n = 50;
    auto a = random_symmetric(n, 12);
    std::vector<double> w;
    eigh_inplace(a, n, w);
    Rng r(13);
    std::vector<cplx> x(n), mid(n), back(n);
    for (auto& z : x) z = r.complex_normal();
    real_mat_t_apply(a.data(), n, x.data(), mid.data());
    real_mat_apply(a.data(), n, mid.data(), back.data());
    for (int i = 0; i < n; ++i) REQUIRE(std::abs(back[i] - x[i]) < 1e-12);
}

TEST_CASE("gemm wrapper matches the naive product", "[dense]") {
    const int n = 20, ma = 7, mb = 5;
    Rng r(21);
    std::vector<double> a(static_cast<std::size_t>(n) * ma), b(static_cast<std::size_t>(n) * mb),
        c(static_cast<std::size_t>(ma) * mb);
    for (auto& v : a) v = r.normal();
    for (auto& v : b) v = r.normal();
    real_gemm_tn(a.data(), b.data(), c.data(), n, ma, mb);
    for (int i = 0; i < ma; ++i)
        for (int j = 0; j < mb; ++j) {
            double ref = 0.0;
            for (int k = 0; k < n; ++k)
                ref += a[static_cast<std::size_t>(i) * n + k] * b[static_cast<std::size_t>(j) * n + k];
            REQUIRE_THAT(c[static_cast<std::size_t>(j) * ma + i], Catch::Matchers::WithinAbs(ref, 1e-12));
        }
}

TEST_CASE("dense conversion rejects complex operators", "[dense]") {
    Csr m;
    m.dim = 2;
    m.row_ptr = {0, 1, 2};
    m.col = {0, 1};
    m.val = {{1.0, 0.0}, {0.0, 1.0}};
    REQUIRE_THROWS_AS(csr_to_dense_real(m), ValidationError);
}
