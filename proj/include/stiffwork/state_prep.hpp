#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <string>
#include <vector>

#include "stiffwork/eigencache.hpp"
#include "stiffwork/errors.hpp"
#include "stiffwork/model.hpp"
#include "stiffwork/propagator.hpp"
#include "stiffwork/rng.hpp"

namespace stiffwork {

struct EnergyWindow {
    double energy = 0.0;
    double delta = 0.07;

    double lo() const { return energy - 0.5 * delta; }
    double hi() const { return energy + 0.5 * delta; }

    void validate() const {
        if (delta <= 0.0) throw ValidationError("energy window: delta must be > 0");
    }
};

enum class PrepMethod { exact_window, gaussian_filter, product };

struct PreparedState {
    std::vector<std::complex<double>> state;
    double achieved_mean = 0.0;
    double achieved_std = 0.0;
    PrepMethod method = PrepMethod::exact_window;
};

namespace detail {

// Mean and spread of H in |psi> via two sparse applies.
inline void energy_stats(const Csr& h0, const std::vector<std::complex<double>>& psi, double& mean,
                         double& stdev) {
    std::vector<std::complex<double>> hx(psi.size()), hhx(psi.size());
    h0.apply(psi.data(), hx.data());
    h0.apply(hx.data(), hhx.data());
    std::complex<double> e1{0.0, 0.0}, e2{0.0, 0.0};
    for (std::size_t j = 0; j < psi.size(); ++j) {
        e1 += std::conj(psi[j]) * hx[j];
        e2 += std::conj(psi[j]) * hhx[j];
    }
    mean = e1.real();
    const double var = e2.real() - mean * mean;
    stdev = std::sqrt(std::max(var, 0.0));
}

inline void normalize(std::vector<std::complex<double>>& psi) {
    double n2 = 0.0;
    for (const auto& z : psi) n2 += std::norm(z);
    const double inv = 1.0 / std::sqrt(n2);
    for (auto& z : psi) z *= inv;
}

}  // namespace detail

// Flat indices of the window's eigenstates; empty windows are an error that names the
// nearest eigenvalue so the caller can recenter.
inline std::vector<std::int64_t> window_states(const EigenSystem& es, const EnergyWindow& win) {
    win.validate();
    auto idx = es.window_indices(win.lo(), win.hi());
    if (idx.empty())
        throw ValidationError("energy window [" + std::to_string(win.lo()) + ", " + std::to_string(win.hi()) +
                              "] contains no eigenstate; nearest eigenvalue is " +
                              std::to_string(es.nearest_eval(win.energy)));
    return idx;
}

// Haar-random superposition of the window's eigenstates: i.i.d. complex Gaussian
// coefficients drawn in ascending-eigenvalue order, then normalized.
inline PreparedState microcanonical_pure(const EigenSystem& es, const EnergyWindow& win,
                                         std::uint64_t seed) {
    const auto idx = window_states(es, win);
    Rng rng(seed);
    std::vector<std::complex<double>> flat(static_cast<std::size_t>(es.total_dim), {0.0, 0.0});
    double mean = 0.0, m2 = 0.0, n2 = 0.0;
    for (const auto f : idx) {
        const auto z = rng.complex_normal();
        flat[static_cast<std::size_t>(f)] = z;
        const double w = std::norm(z);
        const double e = es.flat_evals()[static_cast<std::size_t>(f)];
        n2 += w;
        mean += w * e;
        m2 += w * e * e;
    }
    mean /= n2;
    m2 /= n2;
    PreparedState out;
    out.method = PrepMethod::exact_window;
    out.achieved_mean = mean;
    out.achieved_std = std::sqrt(std::max(m2 - mean * mean, 0.0));
    out.state = es.synthesize(flat);
    detail::normalize(out.state);
    return out;
}

// Exact-trace mixture over the window: uniform weights on its eigenstates.
struct WindowMixture {
    std::vector<std::int64_t> states;
    std::vector<double> weights;
};

inline WindowMixture window_mixture(const EigenSystem& es, const EnergyWindow& win) {
    WindowMixture m;
    m.states = window_states(es, win);
    m.weights.assign(m.states.size(), 1.0 / static_cast<double>(m.states.size()));
    return m;
}

// Gaussian energy filter applied to a Haar state of the full space; the large-N route
// that never touches the eigenbasis.
inline PreparedState gaussian_filter_state(const Csr& h0, double energy, double sigma, std::uint64_t seed,
                                           const FilterOptions& options = {}) {
    Rng rng(seed);
    std::vector<std::complex<double>> psi(static_cast<std::size_t>(h0.dim));
    for (auto& z : psi) z = rng.complex_normal();
    detail::normalize(psi);
    PreparedState out;
    out.method = PrepMethod::gaussian_filter;
    out.state = imaginary_time_filter(h0, energy, sigma, psi, options);
    detail::energy_stats(h0, out.state, out.achieved_mean, out.achieved_std);
    return out;
}

// (Haar bath window state) x (probe spin up/down), assembled on the full basis; the
// achieved statistics are evaluated under the full coupled Hamiltonian.
inline PreparedState product_state(const Csr& h0_full, const EigenSystem& bath_es,
                                   const EnergyWindow& bath_win, bool probe_up, std::uint64_t seed) {
    const auto bath = microcanonical_pure(bath_es, bath_win, seed);
    const auto bath_dim = static_cast<std::size_t>(1) << static_cast<std::size_t>(bath_es.nspins);
    if (bath.state.size() != bath_dim) throw ValidationError("product_state: bath dimension mismatch");
    PreparedState out;
    out.method = PrepMethod::product;
    out.state.assign(bath_dim * 2, {0.0, 0.0});
    const std::size_t off = probe_up ? bath_dim : 0;
    for (std::size_t b = 0; b < bath_dim; ++b) out.state[b + off] = bath.state[b];
    detail::energy_stats(h0_full, out.state, out.achieved_mean, out.achieved_std);
    return out;
}

}  // namespace stiffwork
