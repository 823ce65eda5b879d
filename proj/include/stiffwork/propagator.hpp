#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <string>
#include <vector>

#include "stiffwork/dense.hpp"
#include "stiffwork/errors.hpp"
#include "stiffwork/model.hpp"
#include "stiffwork/rng.hpp"

namespace stiffwork {

// Drive f(t) = lambda * sin(nu * t) over a whole number of half periods, so the total
// duration is half_periods * pi / nu. The backward protocol runs H(T - t).
struct DriveProtocol {
    double lambda = 0.0;
    double nu = 0.5;
    int half_periods = 1;
    bool backward = false;

    double duration() const { return half_periods * M_PI / nu; }

    void validate() const {
        if (nu <= 0.0) throw ValidationError("protocol.nu must be > 0");
        if (half_periods < 1) throw ValidationError("protocol.half_periods must be >= 1");
    }
};

// n_steps * dt == duration exactly; dt is adjusted downward from the requested value.
struct TimeGrid {
    std::int64_t n_steps = 0;
    double dt = 0.0;

    static TimeGrid over(double duration, double dt_target) {
        if (dt_target <= 0.0) throw ValidationError("time grid: dt must be > 0");
        if (duration <= 0.0) throw ValidationError("time grid: duration must be > 0");
        TimeGrid g;
        g.n_steps = static_cast<std::int64_t>(std::ceil(duration / dt_target - 1e-12));
        if (g.n_steps < 1) g.n_steps = 1;
        g.dt = duration / static_cast<double>(g.n_steps);
        return g;
    }
};

struct PropagateOptions {
    double norm_tol = 1e-6;
    std::int64_t cadence = 0;  // observer every `cadence` steps; 0 -> ceil(n_steps / 2000)
};

namespace detail {

inline void check_norm(const std::complex<double>* psi, std::int64_t dim, double tol, double t) {
    double n2 = 0.0;
    for (std::int64_t i = 0; i < dim; ++i) n2 += std::norm(psi[i]);
    if (std::abs(n2 - 1.0) > tol)
        throw NumericBudgetError("propagate: |psi|^2 drifted to " + std::to_string(n2) + " at t=" +
                                 std::to_string(t) + "; reduce dt");
}

}  // namespace detail

// One RK4 step with the Hamiltonian frozen at the interval midpoint:
// nu_k = (-i dt / k) H(t_mid) nu_{k-1}, psi += nu_1 + nu_2 + nu_3 + nu_4.
// No renormalization is applied; the norm is monitored against options.norm_tol.
template <class Observer>
inline void propagate(const Csr& h0, const Csr* v, const DriveProtocol& proto, const TimeGrid& grid,
                      std::vector<std::complex<double>>& psi, const PropagateOptions& options,
                      Observer&& observe) {
    proto.validate();
    const std::int64_t dim = h0.dim;
    if (static_cast<std::int64_t>(psi.size()) != dim) throw ValidationError("propagate: state size mismatch");
    if (v && v->dim != dim) throw ValidationError("propagate: drive dimension mismatch");
    const double T = proto.duration();
    const std::int64_t cadence =
        options.cadence > 0 ? options.cadence : (grid.n_steps + 1999) / 2000;
    std::vector<std::complex<double>> cur(psi.size()), hx(psi.size()), vx;
    if (v) vx.resize(psi.size());
    observe(std::int64_t{0}, 0.0, psi.data());
    for (std::int64_t i = 0; i < grid.n_steps; ++i) {
        const double t_mid = (static_cast<double>(i) + 0.5) * grid.dt;
        const double tau = proto.backward ? T - t_mid : t_mid;
        const double f = proto.lambda * std::sin(proto.nu * tau);
        cur = psi;
        for (int k = 1; k <= 4; ++k) {
            h0.apply(cur.data(), hx.data());
            if (v) {
                v->apply(cur.data(), vx.data());
                for (std::size_t j = 0; j < hx.size(); ++j) hx[j] += f * vx[j];
            }
            const std::complex<double> c{0.0, -grid.dt / k};
            for (std::size_t j = 0; j < cur.size(); ++j) cur[j] = c * hx[j];
            for (std::size_t j = 0; j < psi.size(); ++j) psi[j] += cur[j];
        }
        const double t = static_cast<double>(i + 1) * grid.dt;
        if ((i + 1) % cadence == 0 || i + 1 == grid.n_steps) {
            detail::check_norm(psi.data(), dim, options.norm_tol, t);
            observe(i + 1, t, psi.data());
        }
    }
}

inline void propagate(const Csr& h0, const Csr* v, const DriveProtocol& proto, const TimeGrid& grid,
                      std::vector<std::complex<double>>& psi, const PropagateOptions& options = {}) {
    propagate(h0, v, proto, grid, psi, options, [](std::int64_t, double, const std::complex<double>*) {});
}

// Column-blocked variant: propagates ncol states at once (col-major, leading dim = h0.dim).
// Bitwise-identical per column to the single-state path.
inline void propagate_block(const Csr& h0, const Csr* v, const DriveProtocol& proto, const TimeGrid& grid,
                            std::vector<std::complex<double>>& block, int ncol,
                            const PropagateOptions& options = {}) {
    proto.validate();
    const std::int64_t dim = h0.dim;
    if (static_cast<std::int64_t>(block.size()) != dim * ncol)
        throw ValidationError("propagate_block: block size mismatch");
    const double T = proto.duration();
    const std::int64_t cadence =
        options.cadence > 0 ? options.cadence : (grid.n_steps + 1999) / 2000;
    std::vector<std::complex<double>> cur(block.size()), hx(block.size()), vx;
    if (v) vx.resize(block.size());
    for (std::int64_t i = 0; i < grid.n_steps; ++i) {
        const double t_mid = (static_cast<double>(i) + 0.5) * grid.dt;
        const double tau = proto.backward ? T - t_mid : t_mid;
        const double f = proto.lambda * std::sin(proto.nu * tau);
        cur = block;
        for (int k = 1; k <= 4; ++k) {
            h0.apply_block(cur.data(), hx.data(), ncol);
            if (v) {
                v->apply_block(cur.data(), vx.data(), ncol);
                for (std::size_t j = 0; j < hx.size(); ++j) hx[j] += f * vx[j];
            }
            const std::complex<double> c{0.0, -grid.dt / k};
            for (std::size_t j = 0; j < cur.size(); ++j) cur[j] = c * hx[j];
            for (std::size_t j = 0; j < block.size(); ++j) block[j] += cur[j];
        }
        if ((i + 1) % cadence == 0 || i + 1 == grid.n_steps) {
            const double t = static_cast<double>(i + 1) * grid.dt;
            for (int c = 0; c < ncol; ++c)
                detail::check_norm(block.data() + static_cast<std::size_t>(c) * static_cast<std::size_t>(dim),
                                   dim, options.norm_tol, t);
        }
    }
}

constexpr std::int64_t kDenseOracleMaxDim = 4096;
constexpr std::int64_t kDenseUnitaryMaxDim = 512;

// Exact exponential of each midpoint-frozen step applied to a state. This is the
// reference the RK4 path converges to at fixed grid; only the Taylor truncation differs.
inline std::vector<std::complex<double>> oracle_propagate(const Csr& h0, const Csr* v,
                                                          const DriveProtocol& proto, const TimeGrid& grid,
                                                          std::vector<std::complex<double>> psi) {
    proto.validate();
    const auto dim = h0.dim;
    if (dim > kDenseOracleMaxDim) throw ValidationError("oracle_propagate: dimension exceeds dense guard");
    const int n = static_cast<int>(dim);
    const auto h0d = csr_to_dense_real(h0);
    std::vector<double> vd;
    if (v) vd = csr_to_dense_real(*v);
    const double T = proto.duration();
    std::vector<double> a, w;
    std::vector<std::complex<double>> tmp(psi.size());
    for (std::int64_t i = 0; i < grid.n_steps; ++i) {
        const double t_mid = (static_cast<double>(i) + 0.5) * grid.dt;
        const double tau = proto.backward ? T - t_mid : t_mid;
        const double f = proto.lambda * std::sin(proto.nu * tau);
        a = h0d;
        if (v)
            for (std::size_t j = 0; j < a.size(); ++j) a[j] += f * vd[j];
        eigh_inplace(a, n, w);
        real_mat_t_apply(a.data(), n, psi.data(), tmp.data());
        for (int j = 0; j < n; ++j) tmp[static_cast<std::size_t>(j)] *= std::polar(1.0, -w[static_cast<std::size_t>(j)] * grid.dt);
        real_mat_apply(a.data(), n, tmp.data(), psi.data());
    }
    return psi;
}

// Full unitary built from the same frozen steps (column-major dim x dim, complex).
inline std::vector<std::complex<double>> oracle_full_unitary(const Csr& h0, const Csr* v,
                                                             const DriveProtocol& proto,
                                                             const TimeGrid& grid) {
    proto.validate();
    const auto dim = h0.dim;
    if (dim > kDenseUnitaryMaxDim) throw ValidationError("oracle_full_unitary: dimension exceeds dense guard");
    const int n = static_cast<int>(dim);
    const auto h0d = csr_to_dense_real(h0);
    std::vector<double> vd;
    if (v) vd = csr_to_dense_real(*v);
    const double T = proto.duration();
    std::vector<std::complex<double>> u(static_cast<std::size_t>(n) * n, {0.0, 0.0});
    for (int j = 0; j < n; ++j) u[static_cast<std::size_t>(j) * n + j] = {1.0, 0.0};
    std::vector<double> a, w;
    std::vector<std::complex<double>> col(static_cast<std::size_t>(n)), tmp(static_cast<std::size_t>(n));
    for (std::int64_t i = 0; i < grid.n_steps; ++i) {
        const double t_mid = (static_cast<double>(i) + 0.5) * grid.dt;
        const double tau = proto.backward ? T - t_mid : t_mid;
        const double f = proto.lambda * std::sin(proto.nu * tau);
        a = h0d;
        if (v)
            for (std::size_t j = 0; j < a.size(); ++j) a[j] += f * vd[j];
        eigh_inplace(a, n, w);
        for (int cidx = 0; cidx < n; ++cidx) {
            std::complex<double>* ucol = u.data() + static_cast<std::size_t>(cidx) * n;
            real_mat_t_apply(a.data(), n, ucol, tmp.data());
            for (int j = 0; j < n; ++j) tmp[static_cast<std::size_t>(j)] *= std::polar(1.0, -w[static_cast<std::size_t>(j)] * grid.dt);
            real_mat_apply(a.data(), n, tmp.data(), ucol);
        }
    }
    return u;
}

struct FilterOptions {
    std::int64_t n_steps = 0;  // 0 -> automatic from a spectral-radius bound, floor 2000
    bool self_check = true;    // re-run at twice the steps and compare
    double check_tol = 1e-6;
};

// Estimate of the spectral radius by power iteration on H^2 (deterministic start vector).
inline double spectral_radius_estimate(const Csr& h, int iters = 40) {
    const auto dim = h.dim;
    Rng rng(0x5eedc0ffeeULL);
    std::vector<std::complex<double>> x(static_cast<std::size_t>(dim)), y(x.size());
    double n2 = 0.0;
    for (auto& z : x) {
        z = {rng.normal(), 0.0};
        n2 += std::norm(z);
    }
    for (auto& z : x) z /= std::sqrt(n2);
    double lam = 0.0;
    for (int it = 0; it < iters; ++it) {
        h.apply(x.data(), y.data());
        h.apply(y.data(), x.data());
        double nn = 0.0;
        for (const auto& z : x) nn += std::norm(z);
        lam = std::sqrt(std::sqrt(nn));
        for (auto& z : x) z /= std::sqrt(nn);
    }
    return lam;
}

namespace detail {

inline std::vector<std::complex<double>> imag_filter_run(const Csr& h0, double energy, double tau_total,
                                                         std::vector<std::complex<double>> psi,
                                                         std::int64_t n_steps) {
    const double dtau = tau_total / static_cast<double>(n_steps);
    std::vector<std::complex<double>> cur(psi.size()), w1(psi.size()), w2(psi.size());
    for (std::int64_t i = 0; i < n_steps; ++i) {
        cur = psi;
        for (int k = 1; k <= 4; ++k) {
            h0.apply(cur.data(), w1.data());
            for (std::size_t j = 0; j < w1.size(); ++j) w1[j] -= energy * cur[j];
            h0.apply(w1.data(), w2.data());
            for (std::size_t j = 0; j < w2.size(); ++j) w2[j] -= energy * w1[j];
            const double c = -dtau / k;
            for (std::size_t j = 0; j < cur.size(); ++j) cur[j] = c * w2[j];
            for (std::size_t j = 0; j < psi.size(); ++j) psi[j] += cur[j];
        }
        double n2 = 0.0;
        for (const auto& z : psi) n2 += std::norm(z);
        if (!(n2 > 1e-300))
            throw ValidationError("imaginary-time filter: state norm vanished (target energy outside spectrum)");
        const double inv = 1.0 / std::sqrt(n2);
        for (auto& z : psi) z *= inv;
    }
    return psi;
}

}  // namespace detail

// e^{ -tau (H - E)^2 } |psi> via imaginary-time RK4 with per-step renormalization;
// tau = 1 / (4 sigma^2) targets a filtered energy spread of sigma.
inline std::vector<std::complex<double>> imaginary_time_filter(const Csr& h0, double energy, double sigma,
                                                               const std::vector<std::complex<double>>& psi0,
                                                               const FilterOptions& options = {}) {
    if (sigma <= 0.0) throw ValidationError("filter: sigma must be > 0");
    const double tau = 1.0 / (4.0 * sigma * sigma);
    const double radius = spectral_radius_estimate(h0);
    if (std::abs(energy) > radius * 1.2 + 5.0 * sigma + 1.0)
        throw ValidationError("filter: target energy " + std::to_string(energy) +
                              " is far outside the spectrum (radius ~" + std::to_string(radius) + ")");
    std::int64_t n = options.n_steps;
    if (n <= 0) {
        const double lam_max = (radius * 1.1 + std::abs(energy)) * (radius * 1.1 + std::abs(energy));
        n = std::max<std::int64_t>(2000, static_cast<std::int64_t>(std::ceil(tau * lam_max / 2.785)));
    }
    auto out = detail::imag_filter_run(h0, energy, tau, psi0, n);
    if (options.self_check) {
        const auto ref = detail::imag_filter_run(h0, energy, tau, psi0, 2 * n);
        std::complex<double> ov{0.0, 0.0};
        for (std::size_t j = 0; j < out.size(); ++j) ov += std::conj(ref[j]) * out[j];
        if (std::abs(std::abs(ov) - 1.0) > options.check_tol)
            throw NumericBudgetError("imaginary-time filter failed step-halving self-check; overlap deficit " +
                                     std::to_string(std::abs(std::abs(ov) - 1.0)));
    }
    return out;
}

}  // namespace stiffwork
