#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <vector>

#include "stiffwork/eigencache.hpp"
#include "stiffwork/errors.hpp"
#include "stiffwork/model.hpp"
#include "stiffwork/propagator.hpp"
#include "stiffwork/spectral.hpp"
#include "stiffwork/state_prep.hpp"
#include "stiffwork/work_stats.hpp"

using namespace stiffwork;
using cplx = std::complex<double>;

namespace {

struct Setup {
    ModelSpec m{Topology::ladder, 2, 1.0, 0.2, 0.5};
    EigenSystem es = EigenSystem::build(m);
    Basis basis = Basis::full(m.spin_count());
    Csr h0 = static_hamiltonian(m, basis);
    Csr v = drive_operator(m, basis);
    DriveProtocol weak{0.26, 0.5, 1, false};
    PropagateOptions popt{1e-4, 0};
    GrainSpec g, g2;

    Setup() {
        g = make_grain(es.min_eval(), es.max_eval(), 0.07);
        g2 = make_grain(es.min_eval(), es.max_eval(), 0.14);
    }
    TimeGrid grid(const DriveProtocol& p, double dt = 0.02) const { return TimeGrid::over(p.duration(), dt); }
};

const Setup& setup() {
    static const Setup s;
    return s;
}

EnergyWindow ground_window(const EigenSystem& es) {
    auto sorted = es.flat_evals();
    std::sort(sorted.begin(), sorted.end());
    return {sorted[0], sorted[1] - sorted[0]};
}

// Mass of the bin at work index k, zero when the bin is off the grid.
double mass_at(const WorkPdf& p, std::int64_t k) {
    const std::int64_t j = k + p.shift_bin;
    if (j < 0 || j >= p.grid.n_bins) return 0.0;
    return p.mass(j);
}

// Point mass of unit probability at work index w_bins on a synthetic grid.
WorkPdf point_mass(const GrainSpec& g, std::int64_t shift, std::int64_t w_bins,
                   DriveProtocol proto = {0.26, 0.5, 1, false}) {
    WorkPdf p;
    p.grid = g;
    p.protocol = proto;
    p.shift_bin = shift;
    p.initial_e = g.bin_center(shift);
    p.density.assign(static_cast<std::size_t>(g.n_bins), 0.0);
    p.density[static_cast<std::size_t>(shift + w_bins)] = 1.0 / g.graining;
    return p;
}

}  // namespace

TEST_CASE("zero drive piles all mass at zero work", "[work_stats]") {
    const auto& s = setup();
    const auto prep = microcanonical_pure(s.es, ground_window(s.es), 7);
    const DriveProtocol still{0.0, 0.5, 1, false};
    const auto p = work_pdf(s.es, s.h0, &s.v, still, s.grid(still), s.popt, prep, s.g);

    p.validate();
    CHECK(p.method == WorkMethod::exact);
    CHECK(p.initial_e == prep.achieved_mean);
    CHECK(std::abs(p.rounding) <= 0.5 * s.g.graining + 1e-12);
    CHECK(p.renorm_deficit < 1e-6);
    CHECK(p.spacing_warning);
    CHECK(p.mean_level_spacing > s.g.graining);
    CHECK(p.w_value(p.shift_bin) == 0.0);
    CHECK(mass_at(p, 0) == Catch::Approx(1.0).margin(1e-12));
    double off_mass = 0.0;
    for (std::int64_t j = 0; j < p.grid.n_bins; ++j)
        if (j != p.shift_bin) off_mass += p.mass(j);
    CHECK(off_mass < 1e-12);

    const auto jr = jarzynski_estimate(p, 0.69);
    CHECK(jr.beta == 0.69);
    CHECK(jr.rhs_reference == 1.0);
    CHECK(jr.value == Catch::Approx(1.0).margin(1e-12));
    CHECK(jr.deviation < 1e-12);
}

TEST_CASE("work support stays inside the spectrum range", "[work_stats]") {
    const auto& s = setup();
    const auto prep = microcanonical_pure(s.es, {-1.0, 0.8}, 5);
    const auto p = work_pdf(s.es, s.h0, &s.v, s.weak, s.grid(s.weak), s.popt, prep, s.g);
    p.validate();
    const double d = s.g.graining;
    for (std::int64_t j = 0; j < p.grid.n_bins; ++j) {
        if (p.density[static_cast<std::size_t>(j)] == 0.0) continue;
        const double w = p.w_value(j);
        CHECK(w >= s.es.min_eval() - p.initial_e - d);
        CHECK(w <= s.es.max_eval() - p.initial_e + d);
    }
}

TEST_CASE("halved graining resample matches direct coarse binning", "[work_stats]") {
    const auto& s = setup();
    const auto prep = microcanonical_pure(s.es, {-1.0, 0.8}, 5);
    const auto tg = s.grid(s.weak);
    const auto p1 = work_pdf(s.es, s.h0, &s.v, s.weak, tg, s.popt, prep, s.g);
    const auto p2 = work_pdf(s.es, s.h0, &s.v, s.weak, tg, s.popt, prep, s.g2);
    const auto r = resample_to(p1, s.g2);
    r.validate();
    REQUIRE(r.shift_bin == p2.shift_bin);
    CHECK(r.initial_e == p1.initial_e);
    CHECK(chi(r, p2) < 1e-20);
    CHECK(chi(r, p2) < 0.05 * integral_p2(p2));
}

TEST_CASE("chi is a squared distance on aligned work grids", "[work_stats]") {
    const auto& s = setup();
    const auto prep = microcanonical_pure(s.es, {-1.0, 0.8}, 5);
    const auto p = work_pdf(s.es, s.h0, &s.v, s.weak, s.grid(s.weak), s.popt, prep, s.g);
    const auto q = work_pdf(s.es, s.h0, &s.v, s.weak, s.grid(s.weak), s.popt,
                            microcanonical_pure(s.es, {-1.0, 0.8}, 9), s.g);
    CHECK(chi(p, p) == 0.0);
    CHECK(chi(p, q) == chi(q, p));
    CHECK(chi(p, q) > 0.0);

    const GrainSpec hand{0.0, 0.5, 20};
    const auto a = point_mass(hand, 10, 2);
    const auto b = point_mass(hand, 10, 5);
    a.validate();
    b.validate();
    CHECK(chi(a, b) == Catch::Approx(2.0 / hand.graining).epsilon(1e-12));

    // Identical work content at different absolute energies aligns to zero.
    CHECK(chi(point_mass(hand, 10, 0), point_mass(hand, 4, 0)) == 0.0);

    CHECK_THROWS_AS(chi(p, resample_to(p, s.g2)), ValidationError);
}

TEST_CASE("resampling validates grid nesting and coverage", "[work_stats]") {
    const GrainSpec fine{0.0, 0.1, 30};
    const auto p = point_mass(fine, 7, 0);
    const auto r = resample_to(p, GrainSpec{0.0, 0.2, 15});
    r.validate();
    CHECK(r.shift_bin == 3);
    CHECK(r.density[3] == Catch::Approx(5.0).epsilon(1e-12));
    CHECK(mass_at(r, 0) == Catch::Approx(1.0).margin(1e-12));

    CHECK_THROWS_AS(resample_to(p, (GrainSpec{0.0, 0.15, 20})), ValidationError);
    CHECK_THROWS_AS(resample_to(p, (GrainSpec{0.05, 0.2, 15})), ValidationError);
    CHECK_THROWS_AS(resample_to(p, (GrainSpec{0.0, 0.2, 2})), ValidationError);
}

TEST_CASE("work pdf validation rejects bad densities", "[work_stats]") {
    const GrainSpec hand{0.0, 0.5, 20};
    auto p = point_mass(hand, 10, 0);
    p.density[3] = -1e-3;
    CHECK_THROWS_AS(p.validate(), ValidationError);
    p.density[3] = 1.0;
    CHECK_THROWS_AS(p.validate(), ValidationError);
}

TEST_CASE("stiffness report averages at least five probes", "[work_stats]") {
    const GrainSpec hand{0.0, 0.5, 20};
    const auto c = point_mass(hand, 10, 0);
    std::vector<WorkPdf> probes(5, c);
    const auto same = chi_bar(c, probes, -1.0, 1.25);
    CHECK(same.e0 == -1.0);
    CHECK(same.probe_span == 1.25);
    CHECK(same.chi_values.size() == 5);
    CHECK(same.chi_bar == 0.0);
    CHECK(same.chi_min == 0.0);
    CHECK(same.chi_max == 0.0);

    std::vector<double> chis{1.0, 2.0, 3.0, 4.0, 10.0};
    const auto rep = make_stiffness_report(-1.0, 1.25, {{-2.0, -1.5, -1.0, -0.5, 0.0}}, chis);
    CHECK(rep.chi_bar == Catch::Approx(4.0).epsilon(1e-12));
    CHECK(rep.chi_min == 1.0);
    CHECK(rep.chi_max == 10.0);
    CHECK(rep.chi_bar >= rep.chi_min);
    CHECK(rep.chi_bar <= rep.chi_max);

    CHECK_THROWS_AS(make_stiffness_report(-1.0, 1.25, {{0.0, 1.0}}, {{0.1, 0.2}}), ValidationError);
    CHECK_THROWS_AS(make_stiffness_report(-1.0, 1.25, {{0.0}}, {{0.1, 0.2, 0.3, 0.4, 0.5}}),
                    ValidationError);
}

TEST_CASE("jarzynski estimate is exact at zero temperature bias", "[work_stats]") {
    const auto& s = setup();
    const auto prep = microcanonical_pure(s.es, {-1.0, 0.8}, 5);
    const auto p = work_pdf(s.es, s.h0, &s.v, s.weak, s.grid(s.weak), s.popt, prep, s.g);
    const auto jr0 = jarzynski_estimate(p, 0.0);
    CHECK(jr0.value == Catch::Approx(1.0).margin(1e-9));
    CHECK_THROWS_AS(jarzynski_estimate(p, 0.69, 0.0), ValidationError);
    CHECK_THROWS_AS(jarzynski_estimate(p, 0.69, -1.0), ValidationError);
}

TEST_CASE("mixtures combine pdfs convexly on a shared work grid", "[work_stats]") {
    const auto& s = setup();
    const auto tg = s.grid(s.weak);
    const auto pa = work_pdf(s.es, s.h0, &s.v, s.weak, tg, s.popt,
                             microcanonical_pure(s.es, {-1.0, 0.8}, 5), s.g);
    const auto pb = work_pdf(s.es, s.h0, &s.v, s.weak, tg, s.popt,
                             microcanonical_pure(s.es, {-0.4, 0.8}, 9), s.g);

    const auto ident = mixture_work_pdf({pa}, {{pa.initial_e}, {1.0}});
    ident.validate();
    CHECK(ident.initial_e == pa.initial_e);
    for (std::int64_t k = -pa.shift_bin; k < pa.grid.n_bins - pa.shift_bin; ++k)
        CHECK(std::abs(mass_at(ident, k) - mass_at(pa, k)) < 1e-15);

    const auto twin = mixture_work_pdf({pa, pa}, {{pa.initial_e, pa.initial_e}, {0.4, 0.6}});
    for (std::int64_t k = -pa.shift_bin; k < pa.grid.n_bins - pa.shift_bin; ++k)
        CHECK(std::abs(mass_at(twin, k) - mass_at(pa, k)) < 1e-12);

    const MixtureWeights k2{{pa.initial_e, pb.initial_e}, {0.3, 0.7}};
    const auto mix = mixture_work_pdf({pa, pb}, k2);
    mix.validate();
    const double beta = 0.7;
    const double lhs = jarzynski_estimate(mix, beta).value;
    const double rhs = 0.3 * jarzynski_estimate(pa, beta).value + 0.7 * jarzynski_estimate(pb, beta).value;
    CHECK(lhs == Catch::Approx(rhs).epsilon(1e-12));
    CHECK(mix.initial_e == Catch::Approx(0.3 * pa.initial_e + 0.7 * pb.initial_e).epsilon(1e-12));

    CHECK_THROWS_AS(mixture_work_pdf({pa, pb}, (MixtureWeights{{0.0, 0.0}, {0.5, 0.6}})),
                    ValidationError);
    CHECK_THROWS_AS(mixture_work_pdf({pa, pb}, (MixtureWeights{{0.0, 0.0}, {-0.1, 1.1}})),
                    ValidationError);
    CHECK_THROWS_AS(mixture_work_pdf({pa, pb}, (MixtureWeights{{0.0}, {0.5, 0.5}})), ValidationError);
    CHECK_THROWS_AS(mixture_work_pdf({pa}, (MixtureWeights{{0.0, 0.0}, {0.5, 0.5}})), ValidationError);

    const auto coarse = work_pdf(s.es, s.h0, &s.v, s.weak, tg, s.popt,
                                 microcanonical_pure(s.es, {-1.0, 0.8}, 5), s.g2);
    CHECK_THROWS_AS(mixture_work_pdf({pa, coarse}, k2), ValidationError);
    const DriveProtocol still{0.0, 0.5, 1, false};
    const auto quiet = work_pdf(s.es, s.h0, &s.v, still, s.grid(still), s.popt,
                                microcanonical_pure(s.es, {-0.4, 0.8}, 9), s.g);
    CHECK_THROWS_AS(mixture_work_pdf({pa, quiet}, k2), ValidationError);
}

TEST_CASE("forward and backward drives agree for a time-symmetric pulse", "[work_stats]") {
    const auto& s = setup();
    const auto prep = microcanonical_pure(s.es, {-1.0, 0.8}, 5);
    const DriveProtocol fwd{0.26, 0.5, 1, false};
    const DriveProtocol bwd{0.26, 0.5, 1, true};
    const auto pf = work_pdf(s.es, s.h0, &s.v, fwd, s.grid(fwd), s.popt, prep, s.g);
    const auto pb = work_pdf(s.es, s.h0, &s.v, bwd, s.grid(bwd), s.popt, prep, s.g);
    CHECK(chi(pf, pb) < 1e-8);
}

TEST_CASE("crooks residual vanishes for an undriven protocol", "[work_stats]") {
    const auto& s = setup();
    const auto prep = microcanonical_pure(s.es, ground_window(s.es), 7);
    const DriveProtocol f0{0.0, 0.5, 1, false};
    const DriveProtocol b0{0.0, 0.5, 1, true};
    const auto pf = work_pdf(s.es, s.h0, &s.v, f0, s.grid(f0), s.popt, prep, s.g);
    const auto pb = work_pdf(s.es, s.h0, &s.v, b0, s.grid(b0), s.popt, prep, s.g);
    const ExpFit fit{0.7, 0.0, 0.0};

    const auto rep = crooks_check(pf, {pb}, fit);
    REQUIRE(rep.points.size() == 1);
    CHECK(rep.beta == 0.7);
    CHECK(rep.points[0].w == 0.0);
    CHECK(std::abs(rep.points[0].residual) < 1e-10);
    CHECK(rep.max_abs_residual == std::abs(rep.points[0].residual));

    CHECK_THROWS_AS(crooks_check(pb, {pb}, fit), ValidationError);
    CHECK_THROWS_AS(crooks_check(pf, {pf}, fit), ValidationError);
    CHECK_THROWS_AS(crooks_check(pf, {}, fit), ValidationError);
    CHECK_THROWS_AS(crooks_check(pf, {pb}, fit, 2.0), ValidationError);
}

TEST_CASE("crooks matching requires a backward pdf near every admissible bin", "[work_stats]") {
    const auto& s = setup();
    const auto prep = microcanonical_pure(s.es, {-1.0, 0.8}, 5);
    const DriveProtocol strong{2.5, 0.5, 1, false};
    const DriveProtocol strong_b{2.5, 0.5, 1, true};
    const auto pf = work_pdf(s.es, s.h0, &s.v, strong, s.grid(strong), s.popt, prep, s.g);
    const auto pb = work_pdf(s.es, s.h0, &s.v, strong_b, s.grid(strong_b), s.popt, prep, s.g);

    double spread_mass = 0.0;
    for (std::int64_t j = 0; j < pf.grid.n_bins; ++j)
        if (j != pf.shift_bin) spread_mass += pf.mass(j);
    INFO("mass off the zero-work bin: " << spread_mass);
    REQUIRE(spread_mass > 0.05);

    CHECK_THROWS_AS(crooks_check(pf, {pb}, (ExpFit{0.7, 0.0, 0.0})), ValidationError);
}

TEST_CASE("typicality probe bounds the seed variance", "[work_stats]") {
    const auto& s = setup();
    const auto win = ground_window(s.es);
    const auto tg = s.grid(s.weak);
    const auto probe =
        typicality_variance_probe(s.es, s.h0, &s.v, s.weak, tg, s.popt, win, 10, 0, s.g);
    CHECK(probe.n_seeds == 10);
    CHECK(probe.window_states == 1);
    CHECK(probe.bound == 0.5);
    CHECK(probe.w_index == 0);
    CHECK(probe.sample_mean > 0.0);
    CHECK(probe.sample_mean <= 1.0 + 1e-12);
    CHECK(probe.sample_variance < 1e-24);

    CHECK_THROWS_AS(
        typicality_variance_probe(s.es, s.h0, &s.v, s.weak, tg, s.popt, win, 5, 0, s.g),
        ValidationError);
    CHECK_THROWS_AS(typicality_variance_probe(s.es, s.h0, &s.v, s.weak, tg, s.popt, win, 10,
                                              10 * s.g.n_bins, s.g),
                    ValidationError);
}

TEST_CASE("window trace equals the mean over window eigenstates", "[work_stats]") {
    const auto& s = setup();
    const EnergyWindow win{-1.0, 0.5};
    const auto idx = window_states(s.es, win);
    REQUIRE(idx.size() >= 2);
    const auto tg = s.grid(s.weak);
    const auto trace = work_pdf_window_trace(s.es, s.h0, &s.v, s.weak, tg, s.popt, win, s.g, 3);
    const auto trace1 = work_pdf_window_trace(s.es, s.h0, &s.v, s.weak, tg, s.popt, win, s.g, 1);
    trace.validate();

    for (std::size_t j = 0; j < trace.density.size(); ++j)
        REQUIRE(trace.density[j] == trace1.density[j]);

    double e_mean = 0.0;
    std::vector<double> mean(trace.density.size(), 0.0);
    for (const auto f : idx) {
        e_mean += s.es.flat_evals()[static_cast<std::size_t>(f)];
        PreparedState eig;
        eig.state = s.es.eigenstate_full(f);
        eig.achieved_mean = s.es.flat_evals()[static_cast<std::size_t>(f)];
        eig.method = PrepMethod::exact_window;
        const auto p = work_pdf(s.es, s.h0, &s.v, s.weak, tg, s.popt, eig, s.g);
        for (std::size_t j = 0; j < mean.size(); ++j) mean[j] += p.density[j];
    }
    e_mean /= static_cast<double>(idx.size());
    CHECK(trace.initial_e == Catch::Approx(e_mean).margin(1e-12));
    for (std::size_t j = 0; j < mean.size(); ++j) {
        mean[j] /= static_cast<double>(idx.size());
        CHECK(std::abs(trace.density[j] - mean[j]) < 1e-6);
    }
}

TEST_CASE("autocorrelation route reproduces the exact kernel pdf", "[work_stats]") {
    const auto& s = setup();
    const auto prep = microcanonical_pure(s.es, {-1.0, 0.8}, 5);
    const auto tg = s.grid(s.weak);
    const auto pa = work_pdf_autocorr(s.h0, &s.v, s.weak, tg, s.popt, prep, s.g, 0.004);
    pa.validate();
    CHECK(pa.method == WorkMethod::autocorr);
    CHECK(pa.initial_e == prep.achieved_mean);
    CHECK(pa.mean_level_spacing == 0.0);
    CHECK_FALSE(pa.spacing_warning);

    auto phi = oracle_propagate(s.h0, &s.v, s.weak, tg, prep.state);
    auto w2 = s.es.amps2(phi.data());
    double raw = 0.0;
    for (const double w : w2) raw += w;
    for (double& w : w2) w /= raw;
    const auto ker = kernel_pdf_from_amps(s.es.flat_evals(), w2, s.g);

    double peak = 0.0, worst = 0.0;
    for (std::size_t j = 0; j < ker.density.size(); ++j) {
        peak = std::max(peak, ker.density[j]);
        worst = std::max(worst, std::abs(pa.density[j] - ker.density[j]));
    }
    INFO("max density deviation " << worst << " against peak " << peak);
    CHECK(worst < 1e-5);
    CHECK(worst < 1e-4 * peak);
}

TEST_CASE("norm budget breach surfaces as a numeric error", "[work_stats]") {
    const auto& s = setup();
    const auto prep = microcanonical_pure(s.es, {-1.0, 0.8}, 5);
    const PropagateOptions tight{1e-18, 0};
    CHECK_THROWS_AS(work_pdf(s.es, s.h0, &s.v, s.weak, s.grid(s.weak), tight, prep, s.g),
                    NumericBudgetError);
}
