#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <string>
#include <vector>

#include "stiffwork/eigencache.hpp"
#include "stiffwork/errors.hpp"
#include "stiffwork/model.hpp"
#include "stiffwork/propagator.hpp"
#include "stiffwork/spectral.hpp"
#include "stiffwork/state_prep.hpp"

namespace stiffwork {

enum class WorkMethod { exact, autocorr };

// Work distribution on a width-delta bin lattice. The density lives on an absolute
// final-energy grid shared by every pdf of a study; the work value of bin j is
// (j - shift_bin) * graining, where shift_bin holds the initial energy rounded to its
// containing bin (|rounding| <= graining/2, recorded).
struct WorkPdf {
    GrainSpec grid;
    DriveProtocol protocol;
    WorkMethod method = WorkMethod::exact;
    double initial_e = 0.0;
    std::int64_t shift_bin = 0;
    double rounding = 0.0;
    double renorm_deficit = 0.0;      // mass absorbed by the final renormalization
    double mean_level_spacing = 0.0;  // 0 when no eigensystem backed the construction
    bool spacing_warning = false;     // graining finer than the mean level spacing
    std::vector<double> density;

    double w_value(std::int64_t j) const { return static_cast<double>(j - shift_bin) * grid.graining; }
    double mass(std::int64_t j) const { return density[static_cast<std::size_t>(j)] * grid.graining; }

    void validate() const {
        double m = 0.0;
        for (const double v : density) {
            if (v < 0.0) throw ValidationError("work pdf: negative density");
            m += v;
        }
        if (std::abs(m * grid.graining - 1.0) > 1e-6)
            throw ValidationError("work pdf: mass " + std::to_string(m * grid.graining) + " is not 1");
    }
};

namespace detail {

inline void require_same_grid(const GrainSpec& a, const GrainSpec& b, const char* who) {
    if (a.graining != b.graining || a.e_anchor != b.e_anchor || a.n_bins != b.n_bins)
        throw ValidationError(std::string(who) + ": work pdfs live on different grids; resample first");
}

inline void require_same_protocol(const DriveProtocol& a, const DriveProtocol& b, const char* who) {
    if (a.lambda != b.lambda || a.nu != b.nu || a.half_periods != b.half_periods || a.backward != b.backward)
        throw ValidationError(std::string(who) + ": mixed drive protocols");
}

inline WorkPdf assemble_work_pdf(const EigenSystem& es, const std::vector<double>& w_final,
                                 double initial_e, const GrainSpec& g, const DriveProtocol& proto,
                                 double norm_tol) {
    double raw = 0.0;
    for (const double w : w_final) {
        if (w < 0.0) throw ValidationError("work pdf: negative spectral weight");
        raw += w;
    }
    if (std::abs(raw - 1.0) > norm_tol + 1e-12)
        throw NumericBudgetError("work pdf: final spectral weight " + std::to_string(raw) +
                                 " breaches the norm budget " + std::to_string(norm_tol));
    WorkPdf p;
    p.grid = g;
    p.protocol = proto;
    p.method = WorkMethod::exact;
    p.initial_e = initial_e;
    p.density = histogram_density(es.flat_evals(), w_final, g);
    for (double& v : p.density) v /= raw;
    p.shift_bin = g.nearest_bin(initial_e);
    if (p.shift_bin < 0 || p.shift_bin >= g.n_bins)
        throw ValidationError("work pdf: initial energy " + std::to_string(initial_e) + " outside the grid");
    p.rounding = initial_e - g.bin_center(p.shift_bin);
    p.renorm_deficit = std::abs(raw - 1.0);
    p.mean_level_spacing =
        (es.max_eval() - es.min_eval()) / static_cast<double>(std::max<std::int64_t>(es.total_dim - 1, 1));
    p.spacing_warning = g.graining < p.mean_level_spacing;
    return p;
}

}  // namespace detail

// |<E_m|U psi>|^2 for each input state, propagated in column chunks under the drive.
inline std::vector<std::vector<double>> final_eigen_weights(
    const EigenSystem& es, const Csr& h0, const Csr* v, const DriveProtocol& proto, const TimeGrid& tgrid,
    const PropagateOptions& popt, const std::vector<std::vector<std::complex<double>>>& states,
    int chunk = 8) {
    const auto dim = static_cast<std::size_t>(h0.dim);
    std::vector<std::vector<double>> out;
    out.reserve(states.size());
    std::vector<std::complex<double>> block;
    for (std::size_t s0 = 0; s0 < states.size(); s0 += static_cast<std::size_t>(chunk)) {
        const int nc = static_cast<int>(std::min<std::size_t>(static_cast<std::size_t>(chunk), states.size() - s0));
        block.assign(dim * static_cast<std::size_t>(nc), {0.0, 0.0});
        for (int c = 0; c < nc; ++c) {
            const auto& st = states[s0 + static_cast<std::size_t>(c)];
            if (st.size() != dim) throw ValidationError("final_eigen_weights: state dimension mismatch");
            std::copy(st.begin(), st.end(), block.begin() + static_cast<std::ptrdiff_t>(dim * static_cast<std::size_t>(c)));
        }
        propagate_block(h0, v, proto, tgrid, block, nc, popt);
        for (int c = 0; c < nc; ++c) out.push_back(es.amps2(block.data() + dim * static_cast<std::size_t>(c)));
    }
    return out;
}

// Exact-path pdf of a pure prepared state: one propagation, final weights binned on g,
// work origin at the preparation's achieved mean energy.
inline WorkPdf work_pdf(const EigenSystem& es, const Csr& h0, const Csr* v, const DriveProtocol& proto,
                        const TimeGrid& tgrid, const PropagateOptions& popt, const PreparedState& prep,
                        const GrainSpec& g) {
    const auto w = final_eigen_weights(es, h0, v, proto, tgrid, popt, {prep.state}, 1);
    return detail::assemble_work_pdf(es, w[0], prep.achieved_mean, g, proto, popt.norm_tol);
}

// Exact-trace pdf of the window's uniform mixture: every window eigenstate propagated,
// weights averaged before binning.
inline WorkPdf work_pdf_window_trace(const EigenSystem& es, const Csr& h0, const Csr* v,
                                     const DriveProtocol& proto, const TimeGrid& tgrid,
                                     const PropagateOptions& popt, const EnergyWindow& win,
                                     const GrainSpec& g, int chunk = 8) {
    const auto idx = window_states(es, win);
    std::vector<std::vector<std::complex<double>>> cols;
    cols.reserve(idx.size());
    double initial_e = 0.0;
    for (const auto f : idx) {
        cols.push_back(es.eigenstate_full(f));
        initial_e += es.flat_evals()[static_cast<std::size_t>(f)];
    }
    initial_e /= static_cast<double>(idx.size());
    const auto ws = final_eigen_weights(es, h0, v, proto, tgrid, popt, cols, chunk);
    std::vector<double> mean(ws[0].size(), 0.0);
    for (const auto& w : ws)
        for (std::size_t m = 0; m < mean.size(); ++m) mean[m] += w[m];
    for (double& v2 : mean) v2 /= static_cast<double>(ws.size());
    return detail::assemble_work_pdf(es, mean, initial_e, g, proto, popt.norm_tol);
}

// Large-N route with no eigenbasis: propagate under the drive, then bin the final
// state's energy distribution through the spectral kernel from autocorrelation samples
// collected under the static Hamiltonian.
inline WorkPdf work_pdf_autocorr(const Csr& h0, const Csr* v, const DriveProtocol& proto,
                                 const TimeGrid& tgrid, const PropagateOptions& popt,
                                 const PreparedState& prep, const GrainSpec& g, double dt_sample = 0.005,
                                 int q = 4) {
    std::vector<std::complex<double>> phi = prep.state;
    propagate(h0, v, proto, tgrid, phi, popt);

    const double dt_c = autocorr_dt(g, q);
    const auto n_c = autocorr_samples(g, q);
    const auto n_sub = std::max<std::int64_t>(1, static_cast<std::int64_t>(std::ceil(dt_c / dt_sample)));
    TimeGrid free_grid;
    free_grid.n_steps = static_cast<std::int64_t>(n_c - 1) * n_sub;
    free_grid.dt = dt_c / static_cast<double>(n_sub);
    DriveProtocol free_proto;
    free_proto.lambda = 0.0;
    free_proto.nu = M_PI / (static_cast<double>(free_grid.n_steps) * free_grid.dt);
    free_proto.half_periods = 1;

    std::vector<std::complex<double>> c(n_c, {0.0, 0.0});
    PropagateOptions sample_opt = popt;
    sample_opt.cadence = n_sub;
    std::vector<std::complex<double>> cur = phi;
    propagate(h0, nullptr, free_proto, free_grid, cur, sample_opt,
              [&](std::int64_t step, double, const std::complex<double>* psi) {
                  if (step % n_sub != 0) return;
                  std::complex<double> acc{0.0, 0.0};
                  for (std::size_t i = 0; i < phi.size(); ++i) acc += std::conj(phi[i]) * psi[i];
                  c[static_cast<std::size_t>(step / n_sub)] = acc;
              });

    const double rho = spectral_radius_estimate(h0);
    const auto gp = kernel_pdf_from_autocorr(c, g, rho * 1.05, q);
    WorkPdf p;
    p.grid = g;
    p.protocol = proto;
    p.method = WorkMethod::autocorr;
    p.initial_e = prep.achieved_mean;
    p.density = gp.density;
    p.shift_bin = g.nearest_bin(p.initial_e);
    if (p.shift_bin < 0 || p.shift_bin >= g.n_bins)
        throw ValidationError("work pdf: initial energy outside the grid");
    p.rounding = p.initial_e - g.bin_center(p.shift_bin);
    p.renorm_deficit = gp.clipped_mass;
    return p;
}

// Integral of the squared difference of two work distributions, aligned by work value.
inline double chi(const WorkPdf& p, const WorkPdf& q) {
    detail::require_same_grid(p.grid, q.grid, "chi");
    const std::int64_t klo = std::min(-p.shift_bin, -q.shift_bin);
    const std::int64_t khi =
        std::max(p.grid.n_bins - 1 - p.shift_bin, q.grid.n_bins - 1 - q.shift_bin);
    double acc = 0.0;
    for (std::int64_t k = klo; k <= khi; ++k) {
        const std::int64_t jp = k + p.shift_bin;
        const std::int64_t jq = k + q.shift_bin;
        const double pv = (jp >= 0 && jp < p.grid.n_bins) ? p.density[static_cast<std::size_t>(jp)] : 0.0;
        const double qv = (jq >= 0 && jq < q.grid.n_bins) ? q.density[static_cast<std::size_t>(jq)] : 0.0;
        const double d = pv - qv;
        acc += d * d;
    }
    return acc * p.grid.graining;
}

inline double integral_p2(const WorkPdf& p) {
    double acc = 0.0;
    for (const double v : p.density) acc += v * v;
    return acc * p.grid.graining;
}

// Mass-conserving projection onto a coarser grid whose edges contain the fine edges.
inline WorkPdf resample_to(const WorkPdf& p, const GrainSpec& coarse) {
    const double ratio = coarse.graining / p.grid.graining;
    const auto m = static_cast<std::int64_t>(std::llround(ratio));
    if (m < 1 || std::abs(ratio - static_cast<double>(m)) > 1e-9)
        throw ValidationError("resample: grainings do not nest");
    const double off = (p.grid.e_anchor - coarse.e_anchor) / p.grid.graining;
    if (std::abs(off - std::llround(off)) > 1e-9)
        throw ValidationError("resample: grid anchors do not nest");
    WorkPdf out;
    out.grid = coarse;
    out.protocol = p.protocol;
    out.method = p.method;
    out.initial_e = p.initial_e;
    out.renorm_deficit = p.renorm_deficit;
    out.mean_level_spacing = p.mean_level_spacing;
    out.spacing_warning = coarse.graining < p.mean_level_spacing;
    out.density.assign(static_cast<std::size_t>(coarse.n_bins), 0.0);
    for (std::int64_t j = 0; j < p.grid.n_bins; ++j) {
        const double d = p.density[static_cast<std::size_t>(j)];
        if (d == 0.0) continue;
        const std::int64_t k = coarse.nearest_bin(p.grid.bin_center(j));
        if (k < 0 || k >= coarse.n_bins) throw ValidationError("resample: fine bin outside the coarse grid");
        out.density[static_cast<std::size_t>(k)] += d * p.grid.graining;
    }
    for (double& v : out.density) v /= coarse.graining;
    out.shift_bin = coarse.nearest_bin(p.initial_e);
    if (out.shift_bin < 0 || out.shift_bin >= coarse.n_bins)
        throw ValidationError("resample: initial energy outside the coarse grid");
    out.rounding = p.initial_e - coarse.bin_center(out.shift_bin);
    return out;
}

struct StiffnessReport {
    double e0 = 0.0;
    double probe_span = 0.0;
    std::vector<double> probe_e;
    std::vector<double> chi_values;
    double chi_bar = 0.0;
    double chi_min = 0.0;
    double chi_max = 0.0;
};

inline StiffnessReport make_stiffness_report(double e0, double probe_span, std::vector<double> probe_e,
                                             std::vector<double> chi_values) {
    if (chi_values.size() < 5) throw ValidationError("stiffness: need at least 5 probe energies");
    if (probe_e.size() != chi_values.size()) throw ValidationError("stiffness: probe/chi size mismatch");
    StiffnessReport r;
    r.e0 = e0;
    r.probe_span = probe_span;
    r.probe_e = std::move(probe_e);
    r.chi_values = std::move(chi_values);
    r.chi_min = r.chi_values[0];
    r.chi_max = r.chi_values[0];
    double acc = 0.0;
    for (const double c : r.chi_values) {
        acc += c;
        r.chi_min = std::min(r.chi_min, c);
        r.chi_max = std::max(r.chi_max, c);
    }
    r.chi_bar = acc / static_cast<double>(r.chi_values.size());
    return r;
}

inline StiffnessReport chi_bar(const WorkPdf& center, const std::vector<WorkPdf>& probes, double e0,
                               double probe_span) {
    std::vector<double> pe, cv;
    pe.reserve(probes.size());
    cv.reserve(probes.size());
    for (const auto& q : probes) {
        pe.push_back(q.initial_e);
        cv.push_back(chi(center, q));
    }
    return make_stiffness_report(e0, probe_span, std::move(pe), std::move(cv));
}

struct JrEstimate {
    double value = 0.0;
    double beta = 0.0;
    double rhs_reference = 1.0;
    double deviation = 0.0;  // relative to rhs_reference
};

inline JrEstimate jarzynski_estimate(const WorkPdf& p, double beta, double rhs_reference = 1.0) {
    if (rhs_reference <= 0.0) throw ValidationError("jarzynski: rhs reference must be > 0");
    double acc = 0.0;
    for (std::int64_t j = 0; j < p.grid.n_bins; ++j) {
        const double d = p.density[static_cast<std::size_t>(j)];
        if (d != 0.0) acc += d * std::exp(-beta * p.w_value(j));
    }
    JrEstimate e;
    e.value = acc * p.grid.graining;
    e.beta = beta;
    e.rhs_reference = rhs_reference;
    e.deviation = std::abs(e.value - rhs_reference) / rhs_reference;
    if (!(e.value > 0.0)) throw NumericBudgetError("jarzynski: estimate collapsed to zero");
    return e;
}

struct MixtureWeights {
    std::vector<double> centers;
    std::vector<double> weights;

    void validate() const {
        if (centers.size() != weights.size()) throw ValidationError("mixture weights: size mismatch");
        if (weights.empty()) throw ValidationError("mixture weights: empty");
        double s = 0.0;
        for (const double w : weights) {
            if (w < 0.0) throw ValidationError("mixture weights: negative weight");
            s += w;
        }
        if (std::abs(s - 1.0) > 1e-12)
            throw ValidationError("mixture weights: sum " + std::to_string(s) + " is not 1");
    }
};

// Convex combination of same-protocol pdfs, accumulated by work value. The result's
// grid is a pure work axis (anchor 0) spanning the union of the component supports.
inline WorkPdf mixture_work_pdf(const std::vector<WorkPdf>& comps, const MixtureWeights& k) {
    k.validate();
    if (comps.size() != k.weights.size()) throw ValidationError("mixture: component/weight count mismatch");
    for (std::size_t i = 1; i < comps.size(); ++i) {
        detail::require_same_grid(comps[0].grid, comps[i].grid, "mixture");
        detail::require_same_protocol(comps[0].protocol, comps[i].protocol, "mixture");
    }
    std::int64_t klo = 0, khi = -1;
    for (const auto& p : comps) {
        klo = std::min(klo, -p.shift_bin);
        khi = std::max(khi, p.grid.n_bins - 1 - p.shift_bin);
    }
    WorkPdf out;
    out.grid.e_anchor = 0.0;
    out.grid.graining = comps[0].grid.graining;
    out.grid.n_bins = khi - klo + 1;
    out.shift_bin = -klo;
    out.protocol = comps[0].protocol;
    out.method = comps[0].method;
    out.density.assign(static_cast<std::size_t>(out.grid.n_bins), 0.0);
    for (std::size_t i = 0; i < comps.size(); ++i) {
        const auto& p = comps[i];
        const double w = k.weights[i];
        out.initial_e += w * p.initial_e;
        out.rounding += w * p.rounding;
        out.renorm_deficit += w * p.renorm_deficit;
        out.mean_level_spacing = std::max(out.mean_level_spacing, p.mean_level_spacing);
        out.spacing_warning = out.spacing_warning || p.spacing_warning;
        const std::int64_t base = -p.shift_bin - klo;
        for (std::int64_t j = 0; j < p.grid.n_bins; ++j)
            out.density[static_cast<std::size_t>(base + j)] += w * p.density[static_cast<std::size_t>(j)];
    }
    return out;
}

struct CrooksPoint {
    double w = 0.0;
    double forward_density = 0.0;
    double backward_density = 0.0;
    double residual = 0.0;
};

struct CrooksReport {
    std::vector<CrooksPoint> points;
    double max_abs_residual = 0.0;
    double beta = 0.0;
};

// Per-bin residuals of the microcanonical fluctuation relation: the forward density at
// W against the backward density at -W from the pdf prepared at E+W, minus the
// DOS-ratio prediction beta*W from the exponential fit.
inline CrooksReport crooks_check(const WorkPdf& forward, const std::vector<WorkPdf>& backward,
                                 const ExpFit& dos_fit, double floor_frac = 0.01) {
    if (forward.protocol.backward) throw ValidationError("crooks: forward pdf carries the backward protocol");
    if (backward.empty()) throw ValidationError("crooks: no backward pdfs");
    for (const auto& b : backward) {
        if (!b.protocol.backward) throw ValidationError("crooks: backward pdf lacks the backward direction");
        detail::require_same_grid(forward.grid, b.grid, "crooks");
    }
    const double peak_f = *std::max_element(forward.density.begin(), forward.density.end());
    std::vector<double> peak_b(backward.size());
    for (std::size_t i = 0; i < backward.size(); ++i)
        peak_b[i] = *std::max_element(backward[i].density.begin(), backward[i].density.end());

    CrooksReport rep;
    rep.beta = dos_fit.beta;
    for (std::int64_t j = 0; j < forward.grid.n_bins; ++j) {
        const double fd = forward.density[static_cast<std::size_t>(j)];
        if (fd < floor_frac * peak_f || fd == 0.0) continue;
        const double w = forward.w_value(j);
        const double target_e = forward.initial_e + w;
        std::size_t best = 0;
        double best_dev = std::abs(backward[0].initial_e - target_e);
        for (std::size_t i = 1; i < backward.size(); ++i) {
            const double dev = std::abs(backward[i].initial_e - target_e);
            if (dev < best_dev) {
                best_dev = dev;
                best = i;
            }
        }
        if (best_dev > 0.5 * forward.grid.graining + 1e-9)
            throw ValidationError("crooks: no backward pdf prepared near E+W for W=" + std::to_string(w));
        const auto& b = backward[best];
        const std::int64_t jb = b.shift_bin - (j - forward.shift_bin);
        const double bd =
            (jb >= 0 && jb < b.grid.n_bins) ? b.density[static_cast<std::size_t>(jb)] : 0.0;
        if (bd < floor_frac * peak_b[best] || bd == 0.0) continue;
        CrooksPoint pt;
        pt.w = w;
        pt.forward_density = fd;
        pt.backward_density = bd;
        pt.residual = std::log(fd) - std::log(bd) - dos_fit.beta * w;
        rep.max_abs_residual = std::max(rep.max_abs_residual, std::abs(pt.residual));
        rep.points.push_back(pt);
    }
    if (rep.points.empty()) throw ValidationError("crooks: no admissible bins above the density floor");
    return rep;
}

struct TypicalityProbe {
    std::int64_t w_index = 0;
    double sample_mean = 0.0;
    double sample_variance = 0.0;
    double bound = 0.0;  // 1 / (window states + 1)
    std::size_t n_seeds = 0;
    std::size_t window_states = 0;
};

// Spread of the mass in one work bin across pure-state seeds of the same window. The
// probed bin is anchored at the window center's bin, shared by every seed, so all
// seeds sample the same absolute energy bin.
inline TypicalityProbe typicality_variance_probe(const EigenSystem& es, const Csr& h0, const Csr* v,
                                                 const DriveProtocol& proto, const TimeGrid& tgrid,
                                                 const PropagateOptions& popt, const EnergyWindow& win,
                                                 std::size_t n_seeds, std::int64_t w_index,
                                                 const GrainSpec& g, std::uint64_t seed0 = 1,
                                                 int chunk = 8) {
    if (n_seeds < 10) throw ValidationError("typicality probe: need at least 10 seeds");
    const auto idx = window_states(es, win);
    const std::int64_t center_bin = g.nearest_bin(win.energy);
    const std::int64_t j = center_bin + w_index;
    if (j < 0 || j >= g.n_bins) throw ValidationError("typicality probe: work bin outside the grid");

    std::vector<std::vector<std::complex<double>>> states;
    states.reserve(n_seeds);
    for (std::size_t s = 0; s < n_seeds; ++s)
        states.push_back(microcanonical_pure(es, win, seed0 + s).state);
    const auto ws = final_eigen_weights(es, h0, v, proto, tgrid, popt, states, chunk);

    std::vector<std::int64_t> bin_of(static_cast<std::size_t>(es.total_dim));
    for (std::int64_t f = 0; f < es.total_dim; ++f)
        bin_of[static_cast<std::size_t>(f)] = g.nearest_bin(es.flat_evals()[static_cast<std::size_t>(f)]);

    std::vector<double> masses(n_seeds, 0.0);
    for (std::size_t s = 0; s < n_seeds; ++s) {
        double raw = 0.0, in_bin = 0.0;
        for (std::size_t f = 0; f < ws[s].size(); ++f) {
            raw += ws[s][f];
            if (bin_of[f] == j) in_bin += ws[s][f];
        }
        masses[s] = in_bin / raw;
    }
    TypicalityProbe out;
    out.w_index = w_index;
    out.n_seeds = n_seeds;
    out.window_states = idx.size();
    out.bound = 1.0 / (static_cast<double>(idx.size()) + 1.0);
    for (const double m : masses) out.sample_mean += m;
    out.sample_mean /= static_cast<double>(n_seeds);
    for (const double m : masses) out.sample_variance += (m - out.sample_mean) * (m - out.sample_mean);
    out.sample_variance /= static_cast<double>(n_seeds - 1);
    return out;
}

}  // namespace stiffwork
