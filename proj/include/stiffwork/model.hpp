#pragma once

#include <algorithm>
#include <bit>
#include <complex>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "stiffwork/errors.hpp"

namespace stiffwork {

enum class Topology { ladder, chain };

// Spin-1/2 clusters with isotropic Heisenberg couplings and a probe spin.
//
// ladder: two legs of L rungs; leg bonds and rung bonds carry J; the probe spin couples
//         with strength kappa to both spins of the last rung; field B acts on S^z of the probe.
// chain:  L bulk spins in a line with J bonds; the probe spin attaches to the last bulk
//         spin with strength kappa; B acts on the probe.
//
// Site bits: ladder site (i, r) with rung i in [0, L) and leg r in {0, 1} maps to bit 2*i + r;
// chain site i maps to bit i. The probe spin is always the highest bit (spin_count() - 1).
// Bit value 1 means spin up (S^z = +1/2).
struct ModelSpec {
    Topology topology = Topology::ladder;
    int L = 2;
    double J = 1.0;
    double kappa = 0.2;
    double B = 0.5;

    int spin_count() const { return topology == Topology::ladder ? 2 * L + 1 : L + 1; }
    int probe_bit() const { return spin_count() - 1; }

    void validate() const {
        if (L < 1) throw ValidationError("model.L must be >= 1");
        if (spin_count() > 26) throw ValidationError("model: spin count " + std::to_string(spin_count()) + " too large");
        if (kappa <= 0.0) throw ValidationError("model.kappa must be > 0");
        if (J <= 0.0) throw ValidationError("model.J must be > 0");
    }
};

struct Bond {
    int a;
    int b;
    double w;
};

inline std::vector<Bond> coupling_bonds(const ModelSpec& m) {
    m.validate();
    std::vector<Bond> bonds;
    if (m.topology == Topology::ladder) {
        const int sys = m.probe_bit();
        for (int r = 0; r < 2; ++r)
            for (int i = 0; i + 1 < m.L; ++i) bonds.push_back({2 * i + r, 2 * (i + 1) + r, m.J});
        for (int i = 0; i < m.L; ++i) bonds.push_back({2 * i, 2 * i + 1, m.J});
        bonds.push_back({2 * (m.L - 1), sys, m.kappa});
        bonds.push_back({2 * (m.L - 1) + 1, sys, m.kappa});
    } else {
        for (int i = 0; i + 1 < m.L; ++i) bonds.push_back({i, i + 1, m.J});
        bonds.push_back({m.L - 1, m.L, m.kappa});
    }
    return bonds;
}

// Computational basis, either the full 2^n space or one magnetization sector
// (fixed number of up spins). States are listed in increasing bit-pattern order.
struct Basis {
    int nspins = 0;
    std::int64_t dim = 0;
    std::optional<int> n_up;
    std::vector<std::uint32_t> states;    // empty for the full basis (identity map)
    std::vector<std::int32_t> index_of;   // empty for the full basis

    static Basis full(int nspins) {
        Basis b;
        b.nspins = nspins;
        b.dim = std::int64_t{1} << nspins;
        return b;
    }

    static Basis sector(int nspins, int n_up) {
        if (n_up < 0 || n_up > nspins) throw ValidationError("basis: n_up out of range");
        Basis b;
        b.nspins = nspins;
        b.n_up = n_up;
        const std::uint32_t total = std::uint32_t{1} << nspins;
        b.index_of.assign(total, -1);
        for (std::uint32_t s = 0; s < total; ++s) {
            if (std::popcount(s) == n_up) {
                b.index_of[s] = static_cast<std::int32_t>(b.states.size());
                b.states.push_back(s);
            }
        }
        b.dim = static_cast<std::int64_t>(b.states.size());
        return b;
    }

    bool is_full() const { return !n_up.has_value(); }

    std::uint32_t state(std::int64_t idx) const {
        return is_full() ? static_cast<std::uint32_t>(idx) : states[static_cast<std::size_t>(idx)];
    }

    std::int64_t index(std::uint32_t s) const {
        if (is_full()) return static_cast<std::int64_t>(s);
        return index_of[s];
    }
};

// Compressed sparse rows with complex values; all operators here are Hermitian with
// real matrix elements in the computational basis, which construction asserts.
struct Csr {
    std::int64_t dim = 0;
    std::vector<std::int64_t> row_ptr;
    std::vector<std::int32_t> col;
    std::vector<std::complex<double>> val;

    void apply(const std::complex<double>* x, std::complex<double>* y) const {
        for (std::int64_t r = 0; r < dim; ++r) {
            std::complex<double> acc{0.0, 0.0};
            for (std::int64_t k = row_ptr[r]; k < row_ptr[r + 1]; ++k)
                acc += val[static_cast<std::size_t>(k)] * x[col[static_cast<std::size_t>(k)]];
            y[r] = acc;
        }
    }

    // y[:, 0:ncol] += or = M x for column-blocked states (column-major, leading dim = dim).
    void apply_block(const std::complex<double>* x, std::complex<double>* y, int ncol) const {
        for (std::int64_t r = 0; r < dim; ++r) {
            for (int c = 0; c < ncol; ++c) y[r + c * dim] = {0.0, 0.0};
            for (std::int64_t k = row_ptr[r]; k < row_ptr[r + 1]; ++k) {
                const std::complex<double> v = val[static_cast<std::size_t>(k)];
                const std::int64_t cc = col[static_cast<std::size_t>(k)];
                for (int c = 0; c < ncol; ++c) y[r + c * dim] += v * x[cc + c * dim];
            }
        }
    }

    double max_abs_imag() const {
        double m = 0.0;
        for (const auto& v : val) m = std::max(m, std::abs(v.imag()));
        return m;
    }

    double row_abs_sum_max() const {
        double m = 0.0;
        for (std::int64_t r = 0; r < dim; ++r) {
            double s = 0.0;
            for (std::int64_t k = row_ptr[r]; k < row_ptr[r + 1]; ++k)
                s += std::abs(val[static_cast<std::size_t>(k)]);
            m = std::max(m, s);
        }
        return m;
    }
};

namespace detail {

struct RowEntry {
    std::int32_t col;
    double v;
};

inline Csr csr_from_rows(std::int64_t dim, std::vector<std::vector<RowEntry>>& rows) {
    Csr out;
    out.dim = dim;
    out.row_ptr.assign(static_cast<std::size_t>(dim) + 1, 0);
    std::size_t nnz = 0;
    for (auto& r : rows) {
        std::sort(r.begin(), r.end(), [](const RowEntry& a, const RowEntry& b) { return a.col < b.col; });
        nnz += r.size();
    }
    out.col.reserve(nnz);
    out.val.reserve(nnz);
    for (std::int64_t i = 0; i < dim; ++i) {
        auto& r = rows[static_cast<std::size_t>(i)];
        for (std::size_t k = 0; k < r.size();) {
            double v = r[k].v;
            std::size_t j = k + 1;
            while (j < r.size() && r[j].col == r[k].col) v += r[j++].v;
            if (v != 0.0) {
                out.col.push_back(r[k].col);
                out.val.emplace_back(v, 0.0);
            }
            k = j;
        }
        out.row_ptr[static_cast<std::size_t>(i) + 1] = static_cast<std::int64_t>(out.col.size());
    }
    return out;
}

}  // namespace detail

namespace detail {

inline Csr heisenberg_operator(const std::vector<Bond>& bonds, double b_field, int field_bit,
                               const Basis& basis) {
    std::vector<std::vector<RowEntry>> rows(static_cast<std::size_t>(basis.dim));
    for (std::int64_t i = 0; i < basis.dim; ++i) {
        const std::uint32_t s = basis.state(i);
        double diag = b_field * (((s >> field_bit) & 1u) ? 0.5 : -0.5);
        for (const auto& b : bonds) {
            const bool ua = (s >> b.a) & 1u;
            const bool ub = (s >> b.b) & 1u;
            diag += b.w * (ua == ub ? 0.25 : -0.25);
            if (ua != ub) {
                const std::uint32_t t = s ^ (1u << b.a) ^ (1u << b.b);
                const std::int64_t j = basis.index(t);
                rows[static_cast<std::size_t>(i)].push_back({static_cast<std::int32_t>(j), 0.5 * b.w});
            }
        }
        rows[static_cast<std::size_t>(i)].push_back({static_cast<std::int32_t>(i), diag});
    }
    return csr_from_rows(basis.dim, rows);
}

}  // namespace detail

// H0 = sum_bonds w * S_a.S_b + B * S^z_probe. Magnetization is conserved, so the operator
// restricts cleanly to a sector basis.
inline Csr static_hamiltonian(const ModelSpec& m, const Basis& basis) {
    return detail::heisenberg_operator(coupling_bonds(m), m.B, m.probe_bit(), basis);
}

// The bath alone: every coupling not touching the probe, and no field. Acts on the
// lower spin_count() - 1 bits.
inline Csr bath_hamiltonian(const ModelSpec& m, const Basis& basis) {
    if (basis.nspins != m.spin_count() - 1)
        throw ValidationError("bath_hamiltonian: basis must cover all spins except the probe");
    const int probe = m.probe_bit();
    std::vector<Bond> bonds;
    for (const auto& b : coupling_bonds(m))
        if (b.a != probe && b.b != probe) bonds.push_back(b);
    return detail::heisenberg_operator(bonds, 0.0, 0, basis);
}

// V = S^x_probe. Flips the probe spin, so it only exists on the full basis.
inline Csr drive_operator(const ModelSpec& m, const Basis& basis) {
    if (!basis.is_full())
        throw ValidationError("drive_operator: probe-flip drive breaks magnetization, full basis required");
    const int sys = m.probe_bit();
    Csr out;
    out.dim = basis.dim;
    out.row_ptr.resize(static_cast<std::size_t>(basis.dim) + 1);
    out.col.resize(static_cast<std::size_t>(basis.dim));
    out.val.assign(static_cast<std::size_t>(basis.dim), {0.5, 0.0});
    for (std::int64_t i = 0; i <= basis.dim; ++i) out.row_ptr[static_cast<std::size_t>(i)] = i;
    for (std::int64_t i = 0; i < basis.dim; ++i)
        out.col[static_cast<std::size_t>(i)] = static_cast<std::int32_t>(static_cast<std::uint32_t>(i) ^ (1u << sys));
    return out;
}

inline std::vector<double> sz_site_diagonal(const Basis& basis, int site) {
    std::vector<double> d(static_cast<std::size_t>(basis.dim));
    for (std::int64_t i = 0; i < basis.dim; ++i)
        d[static_cast<std::size_t>(i)] = ((basis.state(i) >> site) & 1u) ? 0.5 : -0.5;
    return d;
}

inline std::vector<double> total_magnetization_diagonal(const Basis& basis) {
    std::vector<double> d(static_cast<std::size_t>(basis.dim));
    for (std::int64_t i = 0; i < basis.dim; ++i)
        d[static_cast<std::size_t>(i)] = 0.5 * (2.0 * std::popcount(basis.state(i)) - basis.nspins);
    return d;
}

}  // namespace stiffwork
