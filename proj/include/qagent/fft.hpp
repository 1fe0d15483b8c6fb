#pragma once

#include <complex>
#include <vector>

#include "qagent/error.hpp"
#include "qagent/image.hpp"

// Iterative radix-2 FFT in double precision plus the 2D wrappers used by
// frequency-domain deconvolution and spectral statistics. Inputs of awkward
// sizes are zero-padded to the next power of two by the callers below.

namespace qagent {

using cplx = std::complex<double>;

inline int next_pow2(int n) {
    int p = 1;
    while (p < n) p <<= 1;
    return p;
}

// In-place radix-2 Cooley-Tukey; n must be a power of two.
inline void fft1d(std::vector<cplx>& a, bool inverse) {
    const size_t n = a.size();
    if (n == 0 || (n & (n - 1)) != 0)
        throw ParamOutOfRange("fft1d: length must be a power of two");
    for (size_t i = 1, j = 0; i < n; ++i) {
        size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    for (size_t len = 2; len <= n; len <<= 1) {
        const double ang = (inverse ? 2.0 : -2.0) * 3.14159265358979323846 / static_cast<double>(len);
        const cplx wlen(std::cos(ang), std::sin(ang));
        for (size_t i = 0; i < n; i += len) {
            cplx w(1.0, 0.0);
            for (size_t j = 0; j < len / 2; ++j) {
                const cplx u = a[i + j];
                const cplx v = a[i + j + len / 2] * w;
                a[i + j] = u + v;
                a[i + j + len / 2] = u - v;
                w *= wlen;
            }
        }
    }
    if (inverse)
        for (cplx& x : a) x /= static_cast<double>(n);
}

struct ComplexGrid {
    int width = 0;
    int height = 0;
    std::vector<cplx> v;

    ComplexGrid() = default;
    ComplexGrid(int w, int h) : width(w), height(h), v(static_cast<size_t>(w) * h) {}

    cplx& at(int x, int y) { return v[static_cast<size_t>(y) * width + x]; }
    const cplx& at(int x, int y) const { return v[static_cast<size_t>(y) * width + x]; }
};

// In-place 2D transform; both dimensions must be powers of two.
inline void fft2d(ComplexGrid& g, bool inverse) {
    std::vector<cplx> row(static_cast<size_t>(g.width));
    for (int y = 0; y < g.height; ++y) {
        for (int x = 0; x < g.width; ++x) row[static_cast<size_t>(x)] = g.at(x, y);
        fft1d(row, inverse);
        for (int x = 0; x < g.width; ++x) g.at(x, y) = row[static_cast<size_t>(x)];
    }
    std::vector<cplx> col(static_cast<size_t>(g.height));
    for (int x = 0; x < g.width; ++x) {
        for (int y = 0; y < g.height; ++y) col[static_cast<size_t>(y)] = g.at(x, y);
        fft1d(col, inverse);
        for (int y = 0; y < g.height; ++y) g.at(x, y) = col[static_cast<size_t>(y)];
    }
}

// Forward transform of a real plane, zero-padded to fw x fh (powers of two).
inline ComplexGrid fft2d_real(const Plane& p, int fw, int fh) {
    ComplexGrid g(fw, fh);
    for (int y = 0; y < p.height; ++y)
        for (int x = 0; x < p.width; ++x)
            g.at(x, y) = cplx(p.at(x, y), 0.0);
    fft2d(g, false);
    return g;
}

// OTF of a centered kernel on an fw x fh grid: the kernel center is moved
// to the origin with circular wrapping before the transform.
inline ComplexGrid psf_to_otf(const Kernel2D& k, int fw, int fh) {
    ComplexGrid g(fw, fh);
    const int cx = k.width / 2, cy = k.height / 2;
    for (int y = 0; y < k.height; ++y)
        for (int x = 0; x < k.width; ++x) {
            const int gx = ((x - cx) % fw + fw) % fw;
            const int gy = ((y - cy) % fh + fh) % fh;
            g.at(gx, gy) += cplx(k.at(x, y), 0.0);
        }
    fft2d(g, false);
    return g;
}

} // namespace qagent
