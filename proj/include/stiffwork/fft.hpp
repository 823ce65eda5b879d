#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <vector>

#include "stiffwork/errors.hpp"

namespace stiffwork {

inline bool is_pow2(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

// In-place radix-2 FFT. inverse=true applies the conjugate transform WITHOUT the 1/n factor,
// i.e. inverse(forward(x)) == n * x.
inline void fft_pow2(std::complex<double>* a, std::size_t n, bool inverse) {
    if (!is_pow2(n)) throw ValidationError("fft_pow2: length must be a power of two");
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    const double sign = inverse ? 1.0 : -1.0;
    std::vector<std::complex<double>> tw(n / 2);
    for (std::size_t k = 0; k < n / 2; ++k)
        tw[k] = std::polar(1.0, sign * 2.0 * M_PI * static_cast<double>(k) / static_cast<double>(n));
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const std::size_t stride = n / len;
        for (std::size_t i = 0; i < n; i += len) {
            for (std::size_t k = 0; k < len / 2; ++k) {
                const std::complex<double> w = tw[k * stride];
                const std::complex<double> u = a[i + k];
                const std::complex<double> v = a[i + k + len / 2] * w;
                a[i + k] = u + v;
                a[i + k + len / 2] = u - v;
            }
        }
    }
}

inline void fft(std::vector<std::complex<double>>& a) { fft_pow2(a.data(), a.size(), false); }

// Normalized inverse: ifft(fft(x)) == x.
inline void ifft(std::vector<std::complex<double>>& a) {
    fft_pow2(a.data(), a.size(), true);
    const double inv = 1.0 / static_cast<double>(a.size());
    for (auto& z : a) z *= inv;
}

}  // namespace stiffwork
