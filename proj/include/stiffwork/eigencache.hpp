#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "stiffwork/dense.hpp"
#include "stiffwork/errors.hpp"
#include "stiffwork/model.hpp"

namespace stiffwork {

constexpr std::int64_t kExactDiagMaxDim = 32768;

struct SectorEig {
    Basis basis;
    std::vector<double> evals;
    std::vector<double> vecs;  // col-major dim x dim, column k = k-th eigenvector
};

// Full eigendecomposition of the static Hamiltonian, blocked by magnetization sector.
// Flat state index: sectors in increasing n_up order, eigenvalues ascending inside each.
class EigenSystem {
  public:
    ModelSpec spec;
    int nspins = 0;
    std::vector<SectorEig> sectors;
    std::int64_t total_dim = 0;

    // Diagonalize any sector-preserving operator builder over the n-spin sectors.
    template <class OpBuilder>
    static EigenSystem build_with(const ModelSpec& m, int n, OpBuilder&& op) {
        m.validate();
        if ((std::int64_t{1} << n) > kExactDiagMaxDim)
            throw ValidationError("eigensystem: dimension " + std::to_string(std::int64_t{1} << n) +
                                  " exceeds exact-diagonalization guard " + std::to_string(kExactDiagMaxDim));
        EigenSystem es;
        es.spec = m;
        es.nspins = n;
        es.sectors.reserve(static_cast<std::size_t>(n) + 1);
        for (int k = 0; k <= n; ++k) {
            SectorEig se;
            se.basis = Basis::sector(n, k);
            const Csr h = op(se.basis);
            se.vecs = csr_to_dense_real(h);
            eigh_inplace(se.vecs, static_cast<int>(se.basis.dim), se.evals);
            es.total_dim += se.basis.dim;
            es.sectors.push_back(std::move(se));
        }
        es.build_flat();
        return es;
    }

    static EigenSystem build(const ModelSpec& m) {
        return build_with(m, m.spin_count(), [&](const Basis& b) { return static_hamiltonian(m, b); });
    }

    static EigenSystem build_bath(const ModelSpec& m) {
        return build_with(m, m.spin_count() - 1, [&](const Basis& b) { return bath_hamiltonian(m, b); });
    }

    const std::vector<double>& flat_evals() const { return flat_evals_; }

    // (sector, column) location of a flat index.
    std::pair<int, std::int64_t> locate(std::int64_t flat) const {
        int s = 0;
        while (flat >= sector_offset_[static_cast<std::size_t>(s) + 1]) ++s;
        return {s, flat - sector_offset_[static_cast<std::size_t>(s)]};
    }

    std::int64_t sector_offset(int s) const { return sector_offset_[static_cast<std::size_t>(s)]; }

    // |<e_i|psi>|^2 for every eigenstate, psi given in the full computational basis.
    std::vector<double> amps2(const std::complex<double>* psi_full) const {
        std::vector<double> out(static_cast<std::size_t>(total_dim));
        std::vector<std::complex<double>> gathered, coeffs;
        for (std::size_t s = 0; s < sectors.size(); ++s) {
            const auto& se = sectors[s];
            const auto d = se.basis.dim;
            gathered.resize(static_cast<std::size_t>(d));
            coeffs.resize(static_cast<std::size_t>(d));
            for (std::int64_t i = 0; i < d; ++i)
                gathered[static_cast<std::size_t>(i)] = psi_full[se.basis.states[static_cast<std::size_t>(i)]];
            real_mat_t_apply(se.vecs.data(), static_cast<int>(d), gathered.data(), coeffs.data());
            const std::int64_t off = sector_offset_[s];
            for (std::int64_t i = 0; i < d; ++i)
                out[static_cast<std::size_t>(off + i)] = std::norm(coeffs[static_cast<std::size_t>(i)]);
        }
        return out;
    }

    // <e_i|psi> for every eigenstate, psi given in the full computational basis.
    std::vector<std::complex<double>> coeffs(const std::complex<double>* psi_full) const {
        std::vector<std::complex<double>> out(static_cast<std::size_t>(total_dim));
        std::vector<std::complex<double>> gathered;
        for (std::size_t s = 0; s < sectors.size(); ++s) {
            const auto& se = sectors[s];
            const auto d = se.basis.dim;
            gathered.resize(static_cast<std::size_t>(d));
            for (std::int64_t i = 0; i < d; ++i)
                gathered[static_cast<std::size_t>(i)] = psi_full[se.basis.states[static_cast<std::size_t>(i)]];
            real_mat_t_apply(se.vecs.data(), static_cast<int>(d), gathered.data(),
                             out.data() + sector_offset_[s]);
        }
        return out;
    }

    std::vector<std::complex<double>> synthesize(const std::vector<std::complex<double>>& flat_coeffs) const {
        std::vector<std::complex<double>> psi(std::size_t{1} << nspins, {0.0, 0.0});
        std::vector<std::complex<double>> sec_coeffs, sec_vec;
        for (std::size_t s = 0; s < sectors.size(); ++s) {
            const auto& se = sectors[s];
            const auto d = se.basis.dim;
            const std::int64_t off = sector_offset_[s];
            bool any = false;
            for (std::int64_t i = 0; i < d && !any; ++i)
                any = flat_coeffs[static_cast<std::size_t>(off + i)] != std::complex<double>{0.0, 0.0};
            if (!any) continue;
            sec_coeffs.assign(flat_coeffs.begin() + off, flat_coeffs.begin() + off + d);
            sec_vec.resize(static_cast<std::size_t>(d));
            real_mat_apply(se.vecs.data(), static_cast<int>(d), sec_coeffs.data(), sec_vec.data());
            for (std::int64_t i = 0; i < d; ++i)
                psi[se.basis.states[static_cast<std::size_t>(i)]] = sec_vec[static_cast<std::size_t>(i)];
        }
        return psi;
    }

    std::vector<std::complex<double>> eigenstate_full(std::int64_t flat) const {
        std::vector<std::complex<double>> coeffs(static_cast<std::size_t>(total_dim), {0.0, 0.0});
        coeffs[static_cast<std::size_t>(flat)] = {1.0, 0.0};
        return synthesize(coeffs);
    }

    // Flat indices with eigenvalue in [e_lo, e_hi], sorted by eigenvalue.
    std::vector<std::int64_t> window_indices(double e_lo, double e_hi) const {
        std::vector<std::int64_t> idx;
        for (std::int64_t f = 0; f < total_dim; ++f) {
            const double e = flat_evals_[static_cast<std::size_t>(f)];
            if (e >= e_lo && e <= e_hi) idx.push_back(f);
        }
        std::sort(idx.begin(), idx.end(), [&](std::int64_t a, std::int64_t b) {
            return flat_evals_[static_cast<std::size_t>(a)] < flat_evals_[static_cast<std::size_t>(b)];
        });
        return idx;
    }

    double nearest_eval(double e) const {
        double best = flat_evals_.empty() ? 0.0 : flat_evals_[0];
        for (const double v : flat_evals_)
            if (std::abs(v - e) < std::abs(best - e)) best = v;
        return best;
    }

    double min_eval() const { return *std::min_element(flat_evals_.begin(), flat_evals_.end()); }
    double max_eval() const { return *std::max_element(flat_evals_.begin(), flat_evals_.end()); }

    // <n|O|n> for a computational-basis-diagonal observable, per flat eigenstate.
    std::vector<double> diagonal_expectation(const std::vector<double>& obs_full_diag) const {
        std::vector<double> out(static_cast<std::size_t>(total_dim), 0.0);
        for (std::size_t s = 0; s < sectors.size(); ++s) {
            const auto& se = sectors[s];
            const auto d = se.basis.dim;
            const std::int64_t off = sector_offset_[s];
            for (std::int64_t k = 0; k < d; ++k) {
                double acc = 0.0;
                const double* colv = se.vecs.data() + static_cast<std::size_t>(k) * static_cast<std::size_t>(d);
                for (std::int64_t i = 0; i < d; ++i)
                    acc += colv[i] * colv[i] * obs_full_diag[se.basis.states[static_cast<std::size_t>(i)]];
                out[static_cast<std::size_t>(off + k)] = acc;
            }
        }
        return out;
    }

  private:
    void build_flat() {
        sector_offset_.assign(sectors.size() + 1, 0);
        for (std::size_t s = 0; s < sectors.size(); ++s)
            sector_offset_[s + 1] = sector_offset_[s] + sectors[s].basis.dim;
        flat_evals_.reserve(static_cast<std::size_t>(total_dim));
        for (const auto& se : sectors)
            flat_evals_.insert(flat_evals_.end(), se.evals.begin(), se.evals.end());
    }

    std::vector<double> flat_evals_;
    std::vector<std::int64_t> sector_offset_;
};

}  // namespace stiffwork
