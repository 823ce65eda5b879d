#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <complex>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "stiffwork/dense.hpp"
#include "stiffwork/eigencache.hpp"
#include "stiffwork/errors.hpp"
#include "stiffwork/model.hpp"
#include "stiffwork/state_prep.hpp"

namespace stiffwork {

// Contiguous width-delta energy windows covering [e_lo, e_lo + n_windows*delta), with
// per-window eigenstate counts.
struct WindowPartition {
    double e_lo = 0.0;
    double delta = 0.0;
    std::int64_t n_windows = 0;
    std::vector<std::int64_t> counts;

    double lo(std::int64_t w) const { return e_lo + static_cast<double>(w) * delta; }
    double hi(std::int64_t w) const { return e_lo + static_cast<double>(w + 1) * delta; }
    double center(std::int64_t w) const { return e_lo + (static_cast<double>(w) + 0.5) * delta; }

    std::int64_t window_of(double e) const {
        const auto w = static_cast<std::int64_t>(std::floor((e - e_lo) / delta));
        return (w >= 0 && w < n_windows) ? w : -1;
    }

    void validate() const {
        if (delta <= 0.0) throw ValidationError("partition: delta must be > 0");
        if (n_windows < 1) throw ValidationError("partition: need at least one window");
        if (counts.size() != static_cast<std::size_t>(n_windows))
            throw ValidationError("partition: count vector does not match the window count");
        std::int64_t total = 0;
        for (const auto c : counts) {
            if (c < 0) throw ValidationError("partition: negative count");
            total += c;
        }
        if (total == 0) throw ValidationError("partition: no eigenstates in range");
    }
};

inline WindowPartition make_partition(const EigenSystem& es, double e_lo, double e_hi, double delta) {
    if (delta <= 0.0) throw ValidationError("partition: delta must be > 0");
    if (e_hi <= e_lo) throw ValidationError("partition: empty energy range");
    WindowPartition p;
    p.e_lo = e_lo;
    p.delta = delta;
    p.n_windows = static_cast<std::int64_t>(std::ceil((e_hi - e_lo) / delta - 1e-9));
    p.counts.assign(static_cast<std::size_t>(p.n_windows), 0);
    for (const double e : es.flat_evals()) {
        const auto w = p.window_of(e);
        if (w >= 0) ++p.counts[static_cast<std::size_t>(w)];
    }
    p.validate();
    return p;
}

// Accumulated statistics of the matrix elements <i|v|f> with the two eigenstate energies
// in a given window pair.
struct PairCell {
    std::int64_t count = 0;  // elements accumulated
    std::int64_t nnz = 0;    // elements with |value| above the zero tolerance
    double sum_v = 0.0;
    double sum_abs = 0.0;
    double sum_sq = 0.0;
};

// Optional element-level filter on (flat_i, flat_f) eigenstate index pairs; elements the
// filter rejects are left out of every cell.
using PairFilter = std::function<bool(std::int64_t, std::int64_t)>;

// Window-pair element table of a sector-preserving-basis operator. Off-diagonal elements
// (i != f) land in cells[src][dst]; the i == f elements are kept apart in diag[w] so rate
// sums and pure off-diagonal statistics stay separable. Only eigenstate pairs whose
// sectors the operator actually connects are enumerated, so selection-rule-forbidden
// sector pairs contribute neither elements nor zeros.
struct PairTable {
    WindowPartition part;
    double zero_tol = 0.0;
    std::vector<PairCell> cells;  // src-major n_windows x n_windows
    std::vector<PairCell> diag;   // per window, i == f elements

    const PairCell& cell(std::int64_t src, std::int64_t dst) const {
        return cells[static_cast<std::size_t>(src * part.n_windows + dst)];
    }
    PairCell& cell(std::int64_t src, std::int64_t dst) {
        return cells[static_cast<std::size_t>(src * part.n_windows + dst)];
    }

    double sum_sq_total(std::int64_t src, std::int64_t dst) const {
        return cell(src, dst).sum_sq + (src == dst ? diag[static_cast<std::size_t>(src)].sum_sq : 0.0);
    }
    double sum_abs_total(std::int64_t src, std::int64_t dst) const {
        return cell(src, dst).sum_abs + (src == dst ? diag[static_cast<std::size_t>(src)].sum_abs : 0.0);
    }
    std::int64_t count_total(std::int64_t src, std::int64_t dst) const {
        return cell(src, dst).count + (src == dst ? diag[static_cast<std::size_t>(src)].count : 0);
    }
    std::int64_t nnz_total(std::int64_t src, std::int64_t dst) const {
        return cell(src, dst).nnz + (src == dst ? diag[static_cast<std::size_t>(src)].nnz : 0);
    }
};

namespace detail {

inline void tally(PairCell& c, double v, double zero_tol) {
    ++c.count;
    c.sum_v += v;
    c.sum_abs += std::abs(v);
    c.sum_sq += v * v;
    if (std::abs(v) > zero_tol) ++c.nnz;
}

}  // namespace detail

inline PairTable pair_table(const EigenSystem& es, const Csr& v, const WindowPartition& part,
                            double zero_tol = 1e-12, const PairFilter& keep = {}) {
    part.validate();
    if (v.dim != (std::int64_t{1} << es.nspins))
        throw ValidationError("pair table: operator must act on the full basis");
    if (v.max_abs_imag() > 1e-12)
        throw ValidationError("pair table: operator must be real in the computational basis");

    // In-range eigenvector columns gathered per sector.
    struct Sel {
        std::vector<int> col;
        std::vector<std::int64_t> flat;
        std::vector<std::int64_t> win;
        std::vector<double> mat;  // sector_dim x col.size(), col-major
    };
    const int n_sec = static_cast<int>(es.sectors.size());
    std::vector<Sel> sel(static_cast<std::size_t>(n_sec));
    for (int s = 0; s < n_sec; ++s) {
        const auto& se = es.sectors[static_cast<std::size_t>(s)];
        auto& sl = sel[static_cast<std::size_t>(s)];
        for (std::int64_t k = 0; k < se.basis.dim; ++k) {
            const auto w = part.window_of(se.evals[static_cast<std::size_t>(k)]);
            if (w < 0) continue;
            sl.col.push_back(static_cast<int>(k));
            sl.flat.push_back(es.sector_offset(s) + k);
            sl.win.push_back(w);
        }
        sl.mat.resize(static_cast<std::size_t>(se.basis.dim) * sl.col.size());
        for (std::size_t j = 0; j < sl.col.size(); ++j)
            std::copy_n(se.vecs.begin() + static_cast<std::size_t>(sl.col[j]) * se.basis.dim,
                        se.basis.dim, sl.mat.begin() + static_cast<std::size_t>(j) * se.basis.dim);
    }

    // Nonzero operator entries bucketed by the (row sector, column sector) pair, with
    // row/column indices rebased into the sector bases.
    struct Entry {
        std::int32_t r, c;
        double w;
    };
    std::map<std::pair<int, int>, std::vector<Entry>> buckets;
    for (std::int64_t r = 0; r < v.dim; ++r) {
        const int sr = std::popcount(static_cast<std::uint64_t>(r));
        for (std::int64_t k = v.row_ptr[static_cast<std::size_t>(r)];
             k < v.row_ptr[static_cast<std::size_t>(r) + 1]; ++k) {
            const std::int64_t c = v.col[static_cast<std::size_t>(k)];
            const double w = v.val[static_cast<std::size_t>(k)].real();
            if (w == 0.0) continue;
            const int sc = std::popcount(static_cast<std::uint64_t>(c));
            const auto& br = es.sectors[static_cast<std::size_t>(sr)].basis;
            const auto& bc = es.sectors[static_cast<std::size_t>(sc)].basis;
            buckets[{sr, sc}].push_back(
                {static_cast<std::int32_t>(br.index(static_cast<std::uint32_t>(r))),
                 static_cast<std::int32_t>(bc.index(static_cast<std::uint32_t>(c))), w});
        }
    }

    PairTable t;
    t.part = part;
    t.zero_tol = zero_tol;
    t.cells.assign(static_cast<std::size_t>(part.n_windows * part.n_windows), {});
    t.diag.assign(static_cast<std::size_t>(part.n_windows), {});

    std::vector<double> w_block, c_block;
    for (const auto& [key, entries] : buckets) {
        const auto& sa = sel[static_cast<std::size_t>(key.first)];
        const auto& sb = sel[static_cast<std::size_t>(key.second)];
        const auto na = static_cast<std::int64_t>(sa.col.size());
        const auto nb = static_cast<std::int64_t>(sb.col.size());
        if (na == 0 || nb == 0) continue;
        const std::int64_t dim_a = es.sectors[static_cast<std::size_t>(key.first)].basis.dim;
        const std::int64_t dim_b = es.sectors[static_cast<std::size_t>(key.second)].basis.dim;

        w_block.assign(static_cast<std::size_t>(dim_a) * static_cast<std::size_t>(nb), 0.0);
        for (const auto& e : entries)
            for (std::int64_t j = 0; j < nb; ++j)
                w_block[static_cast<std::size_t>(e.r) + static_cast<std::size_t>(j * dim_a)] +=
                    e.w * sb.mat[static_cast<std::size_t>(e.c) + static_cast<std::size_t>(j * dim_b)];

        c_block.resize(static_cast<std::size_t>(na) * static_cast<std::size_t>(nb));
        real_gemm_tn(sa.mat.data(), w_block.data(), c_block.data(), static_cast<int>(dim_a),
                     static_cast<int>(na), static_cast<int>(nb));

        for (std::int64_t jb = 0; jb < nb; ++jb)
            for (std::int64_t ia = 0; ia < na; ++ia) {
                const auto fi = sa.flat[static_cast<std::size_t>(ia)];
                const auto ff = sb.flat[static_cast<std::size_t>(jb)];
                if (keep && !keep(fi, ff)) continue;
                const double val = c_block[static_cast<std::size_t>(ia + jb * na)];
                if (fi == ff)
                    detail::tally(t.diag[static_cast<std::size_t>(sa.win[static_cast<std::size_t>(ia)])],
                                  val, zero_tol);
                else
                    detail::tally(t.cell(sa.win[static_cast<std::size_t>(ia)],
                                         sb.win[static_cast<std::size_t>(jb)]),
                                  val, zero_tol);
            }
    }
    return t;
}

namespace detail {

inline void require_populated(const WindowPartition& part, const char* who) {
    for (const auto c : part.counts)
        if (c == 0) throw ValidationError(std::string(who) + ": empty window in the requested range");
}

}  // namespace detail

// Windowed golden-rule transition rates gamma[src][dst] = 2*pi/(delta*N(src)) * sum |v_if|^2,
// per unit time for unit drive amplitude (scale by lambda^2). counts mirrors the number of
// matrix elements behind each entry for downstream weighting.
struct RateMatrix {
    WindowPartition part;
    std::vector<double> gamma;        // src-major n_windows x n_windows
    std::vector<std::int64_t> counts;

    double at(std::int64_t src, std::int64_t dst) const {
        return gamma[static_cast<std::size_t>(src * part.n_windows + dst)];
    }
    std::int64_t count_at(std::int64_t src, std::int64_t dst) const {
        return counts[static_cast<std::size_t>(src * part.n_windows + dst)];
    }
};

inline RateMatrix fgr_rates(const PairTable& t) {
    detail::require_populated(t.part, "fgr rates");
    RateMatrix rm;
    rm.part = t.part;
    const auto n = t.part.n_windows;
    rm.gamma.assign(static_cast<std::size_t>(n * n), 0.0);
    rm.counts.assign(static_cast<std::size_t>(n * n), 0);
    for (std::int64_t s = 0; s < n; ++s) {
        const auto ns = static_cast<double>(t.part.counts[static_cast<std::size_t>(s)]);
        for (std::int64_t d = 0; d < n; ++d) {
            rm.gamma[static_cast<std::size_t>(s * n + d)] =
                2.0 * M_PI * t.sum_sq_total(s, d) / (t.part.delta * ns);
            rm.counts[static_cast<std::size_t>(s * n + d)] = t.count_total(s, d);
        }
    }
    return rm;
}

inline RateMatrix fgr_rates(const EigenSystem& es, const Csr& v, const WindowPartition& part) {
    return fgr_rates(pair_table(es, v, part));
}

// Spread of a window-pair map across the source energy at fixed energy transfer
// omega = (dst - src)*delta. cv is std/mean, strict is (max-min)/mean, weighted_cv
// weights each source by its element count.
struct SpreadRow {
    double omega = 0.0;
    std::int64_t n_sources = 0;
    double mean = 0.0;
    double cv = 0.0;
    double strict = 0.0;
    double weighted_cv = 0.0;
};

struct SpreadReport {
    std::vector<SpreadRow> rows;

    double max_cv(double omega_cap) const { return max_of(&SpreadRow::cv, omega_cap); }
    double max_strict(double omega_cap) const { return max_of(&SpreadRow::strict, omega_cap); }
    double max_weighted_cv(double omega_cap) const { return max_of(&SpreadRow::weighted_cv, omega_cap); }

  private:
    double max_of(double SpreadRow::* field, double omega_cap) const {
        double m = -1.0;
        for (const auto& r : rows)
            if (std::abs(r.omega) <= omega_cap + 1e-12) m = std::max(m, r.*field);
        if (m < 0.0) throw ValidationError("spread report: no rows within the frequency cap");
        return m;
    }
};

namespace detail {

inline SpreadReport spread_over_sources(const WindowPartition& part, const std::vector<double>& map,
                                        const std::vector<std::int64_t>& counts) {
    const auto n = part.n_windows;
    SpreadReport rep;
    for (std::int64_t k = -(n - 1); k <= n - 1; ++k) {
        std::vector<double> vals;
        std::vector<double> wts;
        for (std::int64_t s = 0; s < n; ++s) {
            const std::int64_t d = s + k;
            if (d < 0 || d >= n) continue;
            vals.push_back(map[static_cast<std::size_t>(s * n + d)]);
            wts.push_back(static_cast<double>(counts[static_cast<std::size_t>(s * n + d)]));
        }
        if (vals.size() < 2) continue;
        double mean = 0.0, mn = vals[0], mx = vals[0];
        for (const double x : vals) {
            mean += x;
            mn = std::min(mn, x);
            mx = std::max(mx, x);
        }
        mean /= static_cast<double>(vals.size());
        if (mean <= 0.0) continue;
        double var = 0.0;
        for (const double x : vals) var += (x - mean) * (x - mean);
        var /= static_cast<double>(vals.size());

        double wsum = 0.0, wmean = 0.0;
        for (std::size_t i = 0; i < vals.size(); ++i) {
            wsum += wts[i];
            wmean += wts[i] * vals[i];
        }
        double wcv = 0.0;
        if (wsum > 0.0 && wmean > 0.0) {
            wmean /= wsum;
            double wvar = 0.0;
            for (std::size_t i = 0; i < vals.size(); ++i)
                wvar += wts[i] * (vals[i] - wmean) * (vals[i] - wmean);
            wcv = std::sqrt(wvar / wsum) / wmean;
        }

        SpreadRow row;
        row.omega = static_cast<double>(k) * part.delta;
        row.n_sources = static_cast<std::int64_t>(vals.size());
        row.mean = mean;
        row.cv = std::sqrt(var) / mean;
        row.strict = (mx - mn) / mean;
        row.weighted_cv = wcv;
        rep.rows.push_back(row);
    }
    return rep;
}

}  // namespace detail

inline SpreadReport rate_stiffness(const RateMatrix& rm) {
    if (rm.part.n_windows < 3) throw ValidationError("rate stiffness: need at least 3 windows");
    return detail::spread_over_sources(rm.part, rm.gamma, rm.counts);
}

// Coarse-grained transition map g(src,dst) = sum |v_if| * sqrt(N_mid) / (N_dst * N_src),
// with N_mid the count of the window holding the midpoint energy (edge midpoints average
// the two neighbors).
struct CoarseMatrix {
    WindowPartition part;
    std::vector<double> g;  // src-major n_windows x n_windows
    std::vector<std::int64_t> counts;

    double at(std::int64_t src, std::int64_t dst) const {
        return g[static_cast<std::size_t>(src * part.n_windows + dst)];
    }
};

inline CoarseMatrix coarse_grained_map(const PairTable& t) {
    detail::require_populated(t.part, "coarse map");
    CoarseMatrix cm;
    cm.part = t.part;
    const auto n = t.part.n_windows;
    cm.g.assign(static_cast<std::size_t>(n * n), 0.0);
    cm.counts.assign(static_cast<std::size_t>(n * n), 0);
    for (std::int64_t s = 0; s < n; ++s)
        for (std::int64_t d = 0; d < n; ++d) {
            const std::int64_t m2 = s + d;
            double n_mid;
            if (m2 % 2 == 0) {
                n_mid = static_cast<double>(t.part.counts[static_cast<std::size_t>(m2 / 2)]);
            } else {
                const auto lo = (m2 - 1) / 2, hi = (m2 + 1) / 2;
                if (lo < 0 || hi >= n) throw ValidationError("coarse map: midpoint outside the partition");
                n_mid = 0.5 * static_cast<double>(t.part.counts[static_cast<std::size_t>(lo)] +
                                                  t.part.counts[static_cast<std::size_t>(hi)]);
            }
            const auto ns = static_cast<double>(t.part.counts[static_cast<std::size_t>(s)]);
            const auto nd = static_cast<double>(t.part.counts[static_cast<std::size_t>(d)]);
            cm.g[static_cast<std::size_t>(s * n + d)] =
                t.sum_abs_total(s, d) * std::sqrt(n_mid) / (nd * ns);
            cm.counts[static_cast<std::size_t>(s * n + d)] = t.count_total(s, d);
        }
    return cm;
}

inline CoarseMatrix coarse_grained_map(const EigenSystem& es, const Csr& v, const WindowPartition& part) {
    return coarse_grained_map(pair_table(es, v, part));
}

// Spread of the coarse map along lines of constant energy transfer.
inline SpreadReport anti_diagonal_spread(const CoarseMatrix& cm) {
    if (cm.part.n_windows < 3) throw ValidationError("coarse map spread: need at least 3 windows");
    return detail::spread_over_sources(cm.part, cm.g, cm.counts);
}

// Per-(mean energy, energy transfer) statistics of the off-diagonal matrix elements, and
// the windowed mean of the diagonal elements as a profile over energy.
struct EthCell {
    double e_bar = 0.0;
    double omega = 0.0;
    std::int64_t count = 0;
    std::int64_t nnz = 0;
    double mean = 0.0;
    double variance = 0.0;
    double zero_fraction = 0.0;
    bool reliable = false;  // at least 10 elements behind the statistics
};

struct EthStats {
    WindowPartition part;
    std::vector<EthCell> cells;  // src-major n_windows x n_windows, off-diagonal elements only
    std::vector<double> diag_profile;
    std::vector<std::int64_t> diag_count;

    const EthCell& cell(std::int64_t src, std::int64_t dst) const {
        return cells[static_cast<std::size_t>(src * part.n_windows + dst)];
    }

    // Zero fraction pooled over every off-diagonal element in the table.
    double aggregate_zero_fraction() const {
        std::int64_t count = 0, nnz = 0;
        for (const auto& c : cells) {
            count += c.count;
            nnz += c.nnz;
        }
        if (count == 0) throw ValidationError("eth stats: no off-diagonal elements");
        return static_cast<double>(count - nnz) / static_cast<double>(count);
    }
};

inline EthStats eth_offdiagonal_stats(const PairTable& t) {
    EthStats st;
    st.part = t.part;
    const auto n = t.part.n_windows;
    st.cells.assign(static_cast<std::size_t>(n * n), {});
    st.diag_profile.assign(static_cast<std::size_t>(n), 0.0);
    st.diag_count.assign(static_cast<std::size_t>(n), 0);
    for (std::int64_t s = 0; s < n; ++s) {
        for (std::int64_t d = 0; d < n; ++d) {
            const auto& pc = t.cell(s, d);
            auto& c = st.cells[static_cast<std::size_t>(s * n + d)];
            c.e_bar = 0.5 * (t.part.center(s) + t.part.center(d));
            c.omega = t.part.center(d) - t.part.center(s);
            c.count = pc.count;
            c.nnz = pc.nnz;
            c.reliable = pc.count >= 10;
            if (pc.count == 0) continue;
            c.mean = pc.sum_v / static_cast<double>(pc.count);
            c.variance = std::max(0.0, pc.sum_sq / static_cast<double>(pc.count) - c.mean * c.mean);
            c.zero_fraction =
                static_cast<double>(pc.count - pc.nnz) / static_cast<double>(pc.count);
        }
        const auto& dg = t.diag[static_cast<std::size_t>(s)];
        st.diag_count[static_cast<std::size_t>(s)] = dg.count;
        if (dg.count > 0) st.diag_profile[static_cast<std::size_t>(s)] = dg.sum_v / static_cast<double>(dg.count);
    }
    return st;
}

inline EthStats eth_offdiagonal_stats(const EigenSystem& es, const Csr& v, const WindowPartition& part) {
    return eth_offdiagonal_stats(pair_table(es, v, part));
}

// Leg-swap parity of every eigenstate of a ladder model: +1/-1, or 0 when the state is
// too degenerate to carry a sharp label.
inline std::vector<int> leg_swap_parity_labels(const EigenSystem& es) {
    if (es.spec.topology != Topology::ladder)
        throw ValidationError("parity labels: ladder topology required");
    const int legs = es.spec.L;
    std::vector<int> labels(static_cast<std::size_t>(es.total_dim), 0);
    for (std::size_t s = 0; s < es.sectors.size(); ++s) {
        const auto& se = es.sectors[s];
        const auto dim = se.basis.dim;
        std::vector<std::int64_t> perm(static_cast<std::size_t>(dim));
        for (std::int64_t k = 0; k < dim; ++k) {
            const std::uint64_t state = se.basis.state(k);
            std::uint64_t swapped = state;
            for (int i = 0; i < legs; ++i) {
                const auto a = (state >> (2 * i)) & 1ULL;
                const auto b = (state >> (2 * i + 1)) & 1ULL;
                swapped &= ~((1ULL << (2 * i)) | (1ULL << (2 * i + 1)));
                swapped |= (b << (2 * i)) | (a << (2 * i + 1));
            }
            perm[static_cast<std::size_t>(k)] = se.basis.index(static_cast<std::uint32_t>(swapped));
        }
        const std::int64_t off = es.sector_offset(static_cast<int>(s));
        for (std::int64_t j = 0; j < dim; ++j) {
            const double* u = se.vecs.data() + static_cast<std::size_t>(j) * dim;
            double p = 0.0;
            for (std::int64_t k = 0; k < dim; ++k)
                p += u[perm[static_cast<std::size_t>(k)]] * u[k];
            if (std::abs(p) > 0.9) labels[static_cast<std::size_t>(off + j)] = p > 0.0 ? 1 : -1;
        }
    }
    return labels;
}

// Twice the total-spin quantum number of every eigenstate (so integer for any N), or -1
// when the expectation value does not resolve to a sharp multiplet.
inline std::vector<int> twice_total_spin_labels(const EigenSystem& es) {
    const int n = es.nspins;
    std::vector<int> labels(static_cast<std::size_t>(es.total_dim), -1);
    std::vector<Bond> pairs;
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) pairs.push_back({i, j, 1.0});
    for (std::size_t s = 0; s < es.sectors.size(); ++s) {
        const auto& se = es.sectors[s];
        const auto dim = se.basis.dim;
        const Csr h = detail::heisenberg_operator(pairs, 0.0, 0, se.basis);
        const std::int64_t off = es.sector_offset(static_cast<int>(s));
        std::vector<double> hu(static_cast<std::size_t>(dim));
        for (std::int64_t j = 0; j < dim; ++j) {
            const double* u = se.vecs.data() + static_cast<std::size_t>(j) * dim;
            for (std::int64_t r = 0; r < dim; ++r) {
                double acc = 0.0;
                for (std::int64_t k = h.row_ptr[static_cast<std::size_t>(r)];
                     k < h.row_ptr[static_cast<std::size_t>(r) + 1]; ++k)
                    acc += h.val[static_cast<std::size_t>(k)].real() * u[h.col[static_cast<std::size_t>(k)]];
                hu[static_cast<std::size_t>(r)] = acc;
            }
            double exp_pairs = 0.0;
            for (std::int64_t r = 0; r < dim; ++r) exp_pairs += u[r] * hu[static_cast<std::size_t>(r)];
            const double s2 = 2.0 * exp_pairs + 0.75 * static_cast<double>(n);
            const double spin = 0.5 * (-1.0 + std::sqrt(1.0 + 4.0 * std::max(0.0, s2)));
            const auto twice = static_cast<int>(std::llround(2.0 * spin));
            if (std::abs(2.0 * spin - static_cast<double>(twice)) < 0.1)
                labels[static_cast<std::size_t>(off + j)] = twice;
        }
    }
    return labels;
}

// Residuals of the up-vs-down rate balance under an exponential density of states
// n(E) ~ exp(beta*E): r(omega) = ln gamma_up(omega) - ln gamma_down(omega) - beta*omega,
// with count-weighted window means in both directions. The pair identity makes the rate
// ratio track the count ratio exactly, so r measures how exponential the counts are.
struct BalanceRow {
    double omega = 0.0;
    std::int64_t n_pairs = 0;
    double residual = 0.0;
};

struct DetailedBalanceReport {
    std::vector<BalanceRow> rows;
    double beta = 0.0;
    double max_abs_residual = 0.0;
    double spread = 0.0;  // max residual - min residual
};

inline DetailedBalanceReport detailed_balance_residuals(
    const RateMatrix& rm, double beta, double omega_cap = std::numeric_limits<double>::infinity()) {
    const auto n = rm.part.n_windows;
    DetailedBalanceReport rep;
    rep.beta = beta;
    double rmin = 0.0, rmax = 0.0;
    for (std::int64_t k = 1; k < n; ++k) {
        if (static_cast<double>(k) * rm.part.delta > omega_cap + 1e-12) break;
        double up = 0.0, dn = 0.0, wsum = 0.0;
        std::int64_t pairs = 0;
        for (std::int64_t s = 0; s + k < n; ++s) {
            const auto w = static_cast<double>(rm.count_at(s, s + k));
            if (w <= 0.0) continue;
            up += w * rm.at(s, s + k);
            dn += w * rm.at(s + k, s);
            wsum += w;
            ++pairs;
        }
        if (wsum <= 0.0 || up <= 0.0 || dn <= 0.0) continue;
        BalanceRow row;
        row.omega = static_cast<double>(k) * rm.part.delta;
        row.n_pairs = pairs;
        row.residual = std::log(up / wsum) - std::log(dn / wsum) - beta * row.omega;
        if (rep.rows.empty()) {
            rmin = rmax = row.residual;
        } else {
            rmin = std::min(rmin, row.residual);
            rmax = std::max(rmax, row.residual);
        }
        rep.max_abs_residual = std::max(rep.max_abs_residual, std::abs(row.residual));
        rep.rows.push_back(row);
    }
    if (rep.rows.empty()) throw ValidationError("detailed balance: no populated frequency rows");
    rep.spread = rmax - rmin;
    return rep;
}

// Per-cell factor by which the rate rebuilt from the coarse map through half-normal
// element statistics reproduces the direct rate: q = (pi/2) * S1^2 / (S2 * nnz). Unity
// when the nonzero elements are Gaussian; heavy tails push q below 1.
struct ReconCell {
    std::int64_t src = 0, dst = 0;
    std::int64_t count = 0, nnz = 0;
    double q = 0.0;
};

struct ReconReport {
    std::vector<ReconCell> cells;
    double q_median = 0.0;
    double q_cv = 0.0;
    double max_abs_dev = 0.0;  // max |q - 1|
};

inline ReconReport reconstruction_report(const PairTable& t, std::int64_t min_count = 100) {
    ReconReport rep;
    const auto n = t.part.n_windows;
    std::vector<double> qs;
    for (std::int64_t s = 0; s < n; ++s)
        for (std::int64_t d = 0; d < n; ++d) {
            const auto count = t.count_total(s, d);
            const auto nnz = t.nnz_total(s, d);
            const double s2 = t.sum_sq_total(s, d);
            if (count < min_count || nnz < 1 || s2 <= 0.0) continue;
            const double s1 = t.sum_abs_total(s, d);
            ReconCell c;
            c.src = s;
            c.dst = d;
            c.count = count;
            c.nnz = nnz;
            c.q = 0.5 * M_PI * s1 * s1 / (s2 * static_cast<double>(nnz));
            rep.cells.push_back(c);
            qs.push_back(c.q);
        }
    if (qs.empty()) throw ValidationError("reconstruction: no cells with enough elements");
    std::sort(qs.begin(), qs.end());
    const auto m = qs.size();
    rep.q_median = (m % 2 == 1) ? qs[m / 2] : 0.5 * (qs[m / 2 - 1] + qs[m / 2]);
    double mean = 0.0;
    for (const double q : qs) mean += q;
    mean /= static_cast<double>(m);
    double var = 0.0;
    for (const double q : qs) {
        var += (q - mean) * (q - mean);
        rep.max_abs_dev = std::max(rep.max_abs_dev, std::abs(q - 1.0));
    }
    rep.q_cv = std::sqrt(var / static_cast<double>(m)) / mean;
    return rep;
}

// Golden-rule rate of a state into one target window, resolved over the state's
// eigenbasis weights: sum_i |a_i|^2 * 2*pi/delta * sum_{f in window} v_if^2.
inline double fgr_state_rate(const EigenSystem& es, const Csr& v,
                             const std::vector<std::complex<double>>& psi, const EnergyWindow& target,
                             double amp_cut = 1e-12) {
    if (v.dim != (std::int64_t{1} << es.nspins))
        throw ValidationError("state rate: operator must act on the full basis");
    const auto targets = window_states(es, target);
    const auto amps = es.coeffs(psi.data());

    std::vector<std::complex<double>> u_full, vu(static_cast<std::size_t>(v.dim));
    double rate = 0.0;
    for (std::int64_t i = 0; i < es.total_dim; ++i) {
        const double w_i = std::norm(amps[static_cast<std::size_t>(i)]);
        if (w_i <= amp_cut) continue;
        u_full = es.eigenstate_full(i);
        v.apply(u_full.data(), vu.data());
        double s2 = 0.0;
        for (const auto f : targets) {
            const auto [sec, col] = es.locate(f);
            const auto& se = es.sectors[static_cast<std::size_t>(sec)];
            const double* uf = se.vecs.data() + static_cast<std::size_t>(col) * se.basis.dim;
            double el = 0.0;
            for (std::int64_t k = 0; k < se.basis.dim; ++k)
                el += uf[k] * vu[static_cast<std::size_t>(se.basis.state(k))].real();
            s2 += el * el;
        }
        rate += w_i * 2.0 * M_PI * s2 / target.delta;
    }
    return rate;
}

}  // namespace stiffwork
