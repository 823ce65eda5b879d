#pragma once

#include <complex>
#include <cstdint>
#include <string>
#include <vector>

#include <cblas.h>
#include <lapacke.h>

#include "stiffwork/errors.hpp"
#include "stiffwork/model.hpp"

namespace stiffwork {

// Symmetric eigendecomposition, column-major n x n. On return a holds the eigenvectors
// (column j is the j-th eigenvector) and w the ascending eigenvalues.
inline void eigh_inplace(std::vector<double>& a, int n, std::vector<double>& w) {
    w.assign(static_cast<std::size_t>(n), 0.0);
    const int info = LAPACKE_dsyevd(LAPACK_COL_MAJOR, 'V', 'U', n, a.data(), n, w.data());
    if (info != 0) throw NumericBudgetError("dsyevd failed, info=" + std::to_string(info));
}

inline std::vector<double> csr_to_dense_real(const Csr& m) {
    for (const auto& v : m.val)
        if (v.imag() != 0.0) throw ValidationError("csr_to_dense_real: operator has imaginary entries");
    const std::int64_t n = m.dim;
    std::vector<double> a(static_cast<std::size_t>(n) * static_cast<std::size_t>(n), 0.0);
    for (std::int64_t r = 0; r < n; ++r)
        for (std::int64_t k = m.row_ptr[r]; k < m.row_ptr[r + 1]; ++k)
            a[static_cast<std::size_t>(r) + static_cast<std::size_t>(m.col[static_cast<std::size_t>(k)]) * static_cast<std::size_t>(n)] =
                m.val[static_cast<std::size_t>(k)].real();
    return a;
}

// y = V^T x for a real col-major n x n matrix V acting on a complex vector. The complex
// array is viewed as a real 2 x n col-major matrix X, giving Y = X V in one dgemm.
inline void real_mat_t_apply(const double* v, int n, const std::complex<double>* x, std::complex<double>* y) {
    cblas_dgemm(CblasColMajor, CblasNoTrans, CblasNoTrans, 2, n, n, 1.0,
                reinterpret_cast<const double*>(x), 2, v, n, 0.0, reinterpret_cast<double*>(y), 2);
}

// y = V x (same trick with V transposed in the product: Y = X V^T).
inline void real_mat_apply(const double* v, int n, const std::complex<double>* x, std::complex<double>* y) {
    cblas_dgemm(CblasColMajor, CblasNoTrans, CblasTrans, 2, n, n, 1.0,
                reinterpret_cast<const double*>(x), 2, v, n, 0.0, reinterpret_cast<double*>(y), 2);
}

// Y = V^T X for a complex block X of ncol columns (leading dimension n).
inline void real_mat_t_apply_block(const double* v, int n, const std::complex<double>* x,
                                   std::complex<double>* y, int ncol) {
    for (int c = 0; c < ncol; ++c)
        real_mat_t_apply(v, n, x + static_cast<std::size_t>(c) * static_cast<std::size_t>(n),
                         y + static_cast<std::size_t>(c) * static_cast<std::size_t>(n));
}

// C = A^T B for real col-major blocks: A is n x ma, B is n x mb, C is ma x mb.
inline void real_gemm_tn(const double* a, const double* b, double* c, int n, int ma, int mb) {
    cblas_dgemm(CblasColMajor, CblasTrans, CblasNoTrans, ma, mb, n, 1.0, a, n, b, n, 0.0, c, ma);
}

}  // namespace stiffwork
