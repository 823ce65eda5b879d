#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <string>
#include <vector>

#include "stiffwork/errors.hpp"
#include "stiffwork/fft.hpp"

namespace stiffwork {

// Absolute energy grid: bin j covers [e_anchor + j*graining, e_anchor + (j+1)*graining).
// The anchor is snapped to a multiple of 2*graining so grids at graining and 2*graining
// share bin edges, which makes cross-graining resampling exact.
struct GrainSpec {
    double e_anchor = 0.0;
    double graining = 0.07;
    std::int64_t n_bins = 0;

    double bin_center(std::int64_t j) const { return e_anchor + (static_cast<double>(j) + 0.5) * graining; }

    std::int64_t nearest_bin(double e) const {
        return static_cast<std::int64_t>(std::floor((e - e_anchor) / graining));
    }
};

inline GrainSpec make_grain(double min_e, double max_e, double graining, int pad_bins = 8) {
    if (graining <= 0.0) throw ValidationError("graining must be > 0");
    if (max_e < min_e) throw ValidationError("make_grain: empty energy range");
    GrainSpec g;
    g.graining = graining;
    const double lo = min_e - pad_bins * graining;
    g.e_anchor = 2.0 * graining * std::floor(lo / (2.0 * graining));
    g.n_bins = static_cast<std::int64_t>(std::ceil((max_e + pad_bins * graining - g.e_anchor) / graining));
    return g;
}

// Gaussian time-domain taper; the induced spectral kernel has width ~1.1 * graining.
inline std::vector<double> taper_weights(double theta, double dt) {
    const auto kt = static_cast<std::size_t>(std::floor(theta / dt)) + 1;
    std::vector<double> w(kt);
    for (std::size_t k = 0; k < kt; ++k) {
        const double t = static_cast<double>(k) * dt;
        w[k] = std::exp(-4.0 * (t / theta) * (t / theta));
    }
    return w;
}

struct GrainedPdf {
    GrainSpec grid;
    std::vector<double> density;   // per bin, integrates to 1 over the grid
    double clipped_mass = 0.0;     // negative mass removed before renormalization
};

namespace detail {

struct FinePlan {
    double h;           // fine spacing = graining / q
    std::size_t K;      // pow2 fine points
    double dt;          // 2*pi / (K*h)
    int q;
};

inline FinePlan fine_plan(const GrainSpec& g, int q) {
    FinePlan p;
    p.q = q;
    p.h = g.graining / q;
    const double span = static_cast<double>(g.n_bins) * g.graining;
    std::size_t K = 1;
    while (static_cast<double>(K) * p.h < span) K <<= 1;
    p.K = K;
    p.dt = 2.0 * M_PI / (static_cast<double>(K) * p.h);
    return p;
}

// p at the K fine points E_j = e_anchor + (j + 0.5) h, from autocorrelation samples
// c_k at t_k = k*dt with taper w. ifft is exact here (a finite DFT identity), so this
// path and the direct cosine sum agree to rounding.
inline std::vector<double> invert_autocorr(const std::vector<std::complex<double>>& c,
                                           const std::vector<double>& w, const FinePlan& fp,
                                           double e_ref) {
    std::vector<std::complex<double>> y(fp.K, {0.0, 0.0});
    const std::size_t kt = w.size();
    for (std::size_t k = 0; k < kt; ++k)
        y[k] = w[k] * c[k] * std::polar(1.0, e_ref * static_cast<double>(k) * fp.dt);
    fft_pow2(y.data(), fp.K, true);
    std::vector<double> p(fp.K);
    const double scale = fp.dt / (2.0 * M_PI);
    const double base = w[0] * c[0].real();
    for (std::size_t j = 0; j < fp.K; ++j) p[j] = scale * (2.0 * y[j].real() - base);
    return p;
}

inline GrainedPdf finish_pdf(std::vector<double>& fine, const GrainSpec& g, const FinePlan& fp) {
    double pos = 0.0, neg = 0.0;
    for (double& v : fine) {
        if (v < 0.0) {
            neg -= v;
            v = 0.0;
        } else {
            pos += v;
        }
    }
    GrainedPdf out;
    out.grid = g;
    out.clipped_mass = (pos + neg) > 0.0 ? neg * fp.h : 0.0;
    out.density.assign(static_cast<std::size_t>(g.n_bins), 0.0);
    for (std::int64_t b = 0; b < g.n_bins; ++b) {
        double acc = 0.0;
        for (int i = 0; i < fp.q; ++i) acc += fine[static_cast<std::size_t>(b) * fp.q + i];
        out.density[static_cast<std::size_t>(b)] = acc / fp.q;
    }
    double mass = 0.0;
    for (const double v : out.density) mass += v;
    mass *= g.graining;
    if (mass <= 0.0) throw NumericBudgetError("grained pdf has vanishing mass");
    for (double& v : out.density) v /= mass;
    return out;
}

}  // namespace detail

// Exact path: spectral weights w2 on known eigenvalues, pushed through the discrete
// Gaussian-taper kernel with Theta = pi / graining.
inline GrainedPdf kernel_pdf_from_amps(const std::vector<double>& evals, const std::vector<double>& w2,
                                       const GrainSpec& g, int q = 4) {
    if (evals.size() != w2.size()) throw ValidationError("kernel_pdf_from_amps: size mismatch");
    const auto fp = detail::fine_plan(g, q);
    const double e_lo = g.e_anchor;
    const double e_hi = g.e_anchor + static_cast<double>(fp.K) * fp.h;
    for (const double e : evals)
        if (e < e_lo || e > e_hi)
            throw ValidationError("kernel_pdf_from_amps: eigenvalue outside grid (aliasing): e=" + std::to_string(e));
    const auto w = taper_weights(M_PI / g.graining, fp.dt);
    const double e_ref = g.e_anchor + 0.5 * fp.h;
    std::vector<std::complex<double>> c(w.size(), {0.0, 0.0});
    std::vector<std::complex<double>> phase(evals.size()), step(evals.size());
    for (std::size_t n = 0; n < evals.size(); ++n) {
        phase[n] = {w2[n], 0.0};
        step[n] = std::polar(1.0, -(evals[n] - e_ref) * fp.dt);
    }
    for (std::size_t k = 0; k < w.size(); ++k) {
        std::complex<double> acc{0.0, 0.0};
        for (std::size_t n = 0; n < evals.size(); ++n) {
            acc += phase[n];
            phase[n] *= step[n];
        }
        c[k] = acc;
    }
    auto fine = detail::invert_autocorr(c, w, fp, 0.0);
    return detail::finish_pdf(fine, g, fp);
}

// Same inversion from externally measured autocorrelation samples c_k = <psi(0)|psi(t_k)>,
// t_k = k * dt_required(g, q). Used by the propagation (typicality) route.
inline double autocorr_dt(const GrainSpec& g, int q = 4) { return detail::fine_plan(g, q).dt; }

inline std::size_t autocorr_samples(const GrainSpec& g, int q = 4) {
    const auto fp = detail::fine_plan(g, q);
    return static_cast<std::size_t>(std::floor(M_PI / g.graining / fp.dt)) + 1;
}

inline GrainedPdf kernel_pdf_from_autocorr(const std::vector<std::complex<double>>& c, const GrainSpec& g,
                                           double max_abs_energy, int q = 4) {
    const auto fp = detail::fine_plan(g, q);
    if (max_abs_energy >= M_PI / fp.dt)
        throw ValidationError("kernel_pdf_from_autocorr: spectral radius exceeds Nyquist limit");
    const auto w = taper_weights(M_PI / g.graining, fp.dt);
    if (c.size() < w.size()) throw ValidationError("kernel_pdf_from_autocorr: too few autocorrelation samples");
    const double e_ref = g.e_anchor + 0.5 * fp.h;
    std::vector<std::complex<double>> cc(c.begin(), c.begin() + static_cast<std::ptrdiff_t>(w.size()));
    auto fine = detail::invert_autocorr(cc, w, fp, e_ref);
    return detail::finish_pdf(fine, g, fp);
}

// Direct cosine-sum inversion at the fine points; oracle for the FFT path.
inline GrainedPdf kernel_pdf_direct(const std::vector<double>& evals, const std::vector<double>& w2,
                                    const GrainSpec& g, int q = 4) {
    const auto fp = detail::fine_plan(g, q);
    const auto w = taper_weights(M_PI / g.graining, fp.dt);
    std::vector<std::complex<double>> c(w.size(), {0.0, 0.0});
    for (std::size_t k = 0; k < w.size(); ++k) {
        const double t = static_cast<double>(k) * fp.dt;
        for (std::size_t n = 0; n < evals.size(); ++n)
            c[k] += w2[n] * std::polar(1.0, -evals[n] * t);
    }
    std::vector<double> fine(fp.K, 0.0);
    for (std::size_t j = 0; j < fp.K; ++j) {
        const double ej = g.e_anchor + (static_cast<double>(j) + 0.5) * fp.h;
        std::complex<double> acc{0.0, 0.0};
        for (std::size_t k = 0; k < w.size(); ++k) {
            const double t = static_cast<double>(k) * fp.dt;
            acc += w[k] * c[k] * std::polar(1.0, ej * t);
        }
        fine[j] = fp.dt / (2.0 * M_PI) * (2.0 * acc.real() - w[0] * c[0].real());
    }
    return detail::finish_pdf(fine, g, fp);
}

// Weighted histogram on the grain: density[b] = (sum of weights with eval in bin b) / graining.
// Not normalized; callers divide by total weight where a pdf is wanted.
inline std::vector<double> histogram_density(const std::vector<double>& evals,
                                             const std::vector<double>& weights, const GrainSpec& g) {
    if (evals.size() != weights.size()) throw ValidationError("histogram_density: size mismatch");
    std::vector<double> density(static_cast<std::size_t>(g.n_bins), 0.0);
    for (std::size_t n = 0; n < evals.size(); ++n) {
        const std::int64_t b = g.nearest_bin(evals[n]);
        if (b < 0 || b >= g.n_bins)
            throw ValidationError("histogram_density: eigenvalue outside grid: e=" + std::to_string(evals[n]));
        density[static_cast<std::size_t>(b)] += weights[n];
    }
    for (double& v : density) v /= g.graining;
    return density;
}

struct Dos {
    GrainSpec grid;
    std::vector<double> density;  // normalized: sum(density) * graining == 1
};

inline Dos dos_exact(const std::vector<double>& evals, const GrainSpec& g) {
    Dos d;
    d.grid = g;
    d.density.assign(static_cast<std::size_t>(g.n_bins), 0.0);
    for (const double e : evals) {
        const std::int64_t b = g.nearest_bin(e);
        if (b < 0 || b >= g.n_bins) throw ValidationError("dos_exact: eigenvalue outside grid");
        d.density[static_cast<std::size_t>(b)] += 1.0;
    }
    const double norm = static_cast<double>(evals.size()) * g.graining;
    for (double& v : d.density) v /= norm;
    return d;
}

struct ExpFit {
    double beta = 0.0;
    double log_prefactor = 0.0;
    double max_log_residual = 0.0;

    // With density ~ exp(beta * (E - F)): F plays the role of a free energy.
    double free_energy() const { return -log_prefactor / beta; }
};

// Least-squares fit of ln(density) = beta * E + log_prefactor over bins inside [e_lo, e_hi].
inline ExpFit fit_exponential(const Dos& dos, double e_lo, double e_hi) {
    std::vector<double> xs, ys;
    for (std::int64_t j = 0; j < dos.grid.n_bins; ++j) {
        const double ec = dos.grid.bin_center(j);
        if (ec < e_lo || ec > e_hi) continue;
        const double v = dos.density[static_cast<std::size_t>(j)];
        if (v <= 0.0)
            throw ValidationError("fit_exponential: empty bin at E=" + std::to_string(ec) +
                                  " inside the fit window");
        xs.push_back(ec);
        ys.push_back(std::log(v));
    }
    if (xs.size() < 2) throw ValidationError("fit_exponential: fewer than 2 bins in window");
    double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
    const auto n = static_cast<double>(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) {
        sx += xs[i];
        sy += ys[i];
        sxx += xs[i] * xs[i];
        sxy += xs[i] * ys[i];
    }
    ExpFit f;
    f.beta = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    f.log_prefactor = (sy - f.beta * sx) / n;
    for (std::size_t i = 0; i < xs.size(); ++i)
        f.max_log_residual = std::max(f.max_log_residual, std::abs(ys[i] - (f.beta * xs[i] + f.log_prefactor)));
    return f;
}

// Mean of q consecutive bins -> one coarser bin; exact when the grids nest.
inline std::vector<double> bin_average(const std::vector<double>& p, int q) {
    std::vector<double> out(p.size() / static_cast<std::size_t>(q));
    for (std::size_t b = 0; b < out.size(); ++b) {
        double acc = 0.0;
        for (int i = 0; i < q; ++i) acc += p[b * q + i];
        out[b] = acc / q;
    }
    return out;
}

}  // namespace stiffwork
