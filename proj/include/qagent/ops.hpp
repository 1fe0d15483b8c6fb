#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <vector>

#include "qagent/error.hpp"
#include "qagent/image.hpp"

// Shared raster kernels: border handling, convolution, resampling, rank
// filters, integral-image box statistics, guided filter. Everything here
// is pure and reflect-101 at borders.

namespace qagent {

// reflect-101 index: ... 2 1 | 0 1 2 ... n-1 | n-2 n-3 ...
inline int reflect101(int i, int n) {
    if (n == 1) return 0;
    const int period = 2 * (n - 1);
    i = std::abs(i) % period;
    return i < n ? i : period - i;
}

inline Kernel2D gaussian_kernel2d(int size, double sigma) {
    Kernel2D k(size, size);
    const int r = size / 2;
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
            const double dx = x - r, dy = y - r;
            k.at(x, y) = static_cast<float>(std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma)));
        }
    k.normalize();
    return k;
}

inline std::vector<float> gaussian_kernel1d(int size, double sigma) {
    std::vector<float> k(static_cast<size_t>(size));
    const int r = size / 2;
    double s = 0.0;
    for (int i = 0; i < size; ++i) {
        const double d = i - r;
        k[i] = static_cast<float>(std::exp(-d * d / (2.0 * sigma * sigma)));
        s += k[i];
    }
    for (float& t : k) t = static_cast<float>(t / s);
    return k;
}

// Anti-aliased line segment through the kernel center, unit sum.
inline Kernel2D motion_kernel(double length, double angle_deg) {
    if (length < 1.0) throw ParamOutOfRange("motion_kernel: length must be >= 1");
    const int half = static_cast<int>(std::ceil(length / 2.0));
    const int size = 2 * half + 1;
    Kernel2D k(size, size);
    const double rad = angle_deg * 3.14159265358979323846 / 180.0;
    const double dx = std::cos(rad), dy = std::sin(rad);
    // Sample the segment densely and splat bilinearly.
    const int samples = std::max(32, static_cast<int>(length * 8));
    for (int i = 0; i < samples; ++i) {
        const double t = (static_cast<double>(i) / (samples - 1) - 0.5) * (length - 1.0);
        const double px = half + t * dx;
        const double py = half + t * dy;
        const int x0 = static_cast<int>(std::floor(px));
        const int y0 = static_cast<int>(std::floor(py));
        const double fx = px - x0, fy = py - y0;
        for (int oy = 0; oy <= 1; ++oy)
            for (int ox = 0; ox <= 1; ++ox) {
                const int x = x0 + ox, y = y0 + oy;
                if (x < 0 || y < 0 || x >= size || y >= size) continue;
                const double w = (ox ? fx : 1.0 - fx) * (oy ? fy : 1.0 - fy);
                k.at(x, y) += static_cast<float>(w);
            }
    }
    k.normalize();
    return k;
}

// Anti-aliased disk, unit sum.
inline Kernel2D disk_kernel(double radius) {
    if (radius < 0.5) throw ParamOutOfRange("disk_kernel: radius must be >= 0.5");
    const int half = static_cast<int>(std::ceil(radius));
    const int size = 2 * half + 1;
    Kernel2D k(size, size);
    // 4x4 subsampling per tap for soft edges.
    for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
            int inside = 0;
            for (int sy = 0; sy < 4; ++sy)
                for (int sx = 0; sx < 4; ++sx) {
                    const double px = x - half + (sx + 0.5) / 4.0 - 0.5;
                    const double py = y - half + (sy + 0.5) / 4.0 - 0.5;
                    if (px * px + py * py <= radius * radius) ++inside;
                }
            k.at(x, y) = static_cast<float>(inside / 16.0);
        }
    k.normalize();
    return k;
}

inline Plane convolve2d(const Plane& p, const Kernel2D& k) {
    if (k.width % 2 == 0 || k.height % 2 == 0)
        throw ParamOutOfRange("convolve2d: kernel dimensions must be odd");
    if (k.width >= 2 * std::min(p.width, p.height) || k.height >= 2 * std::min(p.width, p.height))
        throw KernelTooLarge("convolve2d: kernel too large for plane");
    Plane out(p.width, p.height);
    const int rx = k.width / 2, ry = k.height / 2;
    for (int y = 0; y < p.height; ++y) {
        for (int x = 0; x < p.width; ++x) {
            double acc = 0.0;
            for (int ky = 0; ky < k.height; ++ky) {
                const int sy = reflect101(y + ky - ry, p.height);
                const float* row = &p.v[static_cast<size_t>(sy) * p.width];
                const float* krow = &k.taps[static_cast<size_t>(ky) * k.width];
                for (int kx = 0; kx < k.width; ++kx) {
                    const int sx = reflect101(x + kx - rx, p.width);
                    acc += static_cast<double>(krow[kx]) * row[sx];
                }
            }
            out.at(x, y) = static_cast<float>(acc);
        }
    }
    return out;
}

// Separable convolution, reflect-101. Much cheaper than convolve2d for
// Gaussian and box windows.
inline Plane convolve_sep(const Plane& p, const std::vector<float>& kx, const std::vector<float>& ky) {
    const int rx = static_cast<int>(kx.size()) / 2;
    const int ry = static_cast<int>(ky.size()) / 2;
    Plane tmp(p.width, p.height), out(p.width, p.height);
    for (int y = 0; y < p.height; ++y) {
        const float* row = &p.v[static_cast<size_t>(y) * p.width];
        float* trow = &tmp.v[static_cast<size_t>(y) * p.width];
        for (int x = 0; x < p.width; ++x) {
            double acc = 0.0;
            for (size_t i = 0; i < kx.size(); ++i)
                acc += static_cast<double>(kx[i]) * row[reflect101(x + static_cast<int>(i) - rx, p.width)];
            trow[x] = static_cast<float>(acc);
        }
    }
    for (int y = 0; y < p.height; ++y) {
        float* orow = &out.v[static_cast<size_t>(y) * p.width];
        for (int x = 0; x < p.width; ++x) {
            double acc = 0.0;
            for (size_t i = 0; i < ky.size(); ++i) {
                const int sy = reflect101(y + static_cast<int>(i) - ry, p.height);
                acc += static_cast<double>(ky[i]) * tmp.v[static_cast<size_t>(sy) * p.width + x];
            }
            orow[x] = static_cast<float>(acc);
        }
    }
    return out;
}

inline ImageF convolve_image(const ImageF& img, const Kernel2D& k) {
    ImageF out(img.width, img.height);
    for (int c = 0; c < 3; ++c) {
        Plane p = extract_plane(img, c);
        Plane q = convolve2d(p, k);
        std::copy(q.v.begin(), q.v.end(), out.plane(c));
    }
    clamp_image(out);
    return out;
}

// --- resampling ---------------------------------------------------------

namespace detail {

inline float catmull_rom(float t, float pm1, float p0, float p1, float p2) {
    const float t2 = t * t, t3 = t2 * t;
    return 0.5f * ((2.0f * p0) + (-pm1 + p1) * t +
                   (2.0f * pm1 - 5.0f * p0 + 4.0f * p1 - p2) * t2 +
                   (-pm1 + 3.0f * p0 - 3.0f * p1 + p2) * t3);
}

inline Plane resize_bicubic(const Plane& src, int w, int h) {
    Plane out(w, h);
    const double sx = static_cast<double>(src.width) / w;
    const double sy = static_cast<double>(src.height) / h;
    for (int y = 0; y < h; ++y) {
        const double fy = (y + 0.5) * sy - 0.5;
        const int y0 = static_cast<int>(std::floor(fy));
        const float ty = static_cast<float>(fy - y0);
        for (int x = 0; x < w; ++x) {
            const double fx = (x + 0.5) * sx - 0.5;
            const int x0 = static_cast<int>(std::floor(fx));
            const float tx = static_cast<float>(fx - x0);
            float col[4];
            for (int j = -1; j <= 2; ++j) {
                const int yy = reflect101(y0 + j, src.height);
                const float* row = &src.v[static_cast<size_t>(yy) * src.width];
                float p[4];
                for (int i = -1; i <= 2; ++i)
                    p[i + 1] = row[reflect101(x0 + i, src.width)];
                col[j + 1] = catmull_rom(tx, p[0], p[1], p[2], p[3]);
            }
            out.at(x, y) = catmull_rom(ty, col[0], col[1], col[2], col[3]);
        }
    }
    return out;
}

// Area-average resampling; exact block mean for integer downscale ratios.
inline Plane resize_box(const Plane& src, int w, int h) {
    Plane out(w, h);
    const double sx = static_cast<double>(src.width) / w;
    const double sy = static_cast<double>(src.height) / h;
    for (int y = 0; y < h; ++y) {
        const double y0 = y * sy, y1 = (y + 1) * sy;
        const int iy0 = static_cast<int>(std::floor(y0));
        const int iy1 = std::min(static_cast<int>(std::ceil(y1)), src.height);
        for (int x = 0; x < w; ++x) {
            const double x0 = x * sx, x1 = (x + 1) * sx;
            const int ix0 = static_cast<int>(std::floor(x0));
            const int ix1 = std::min(static_cast<int>(std::ceil(x1)), src.width);
            double acc = 0.0, area = 0.0;
            for (int yy = iy0; yy < iy1; ++yy) {
                const double wy = std::min<double>(yy + 1, y1) - std::max<double>(yy, y0);
                const float* row = &src.v[static_cast<size_t>(yy) * src.width];
                for (int xx = ix0; xx < ix1; ++xx) {
                    const double wx = std::min<double>(xx + 1, x1) - std::max<double>(xx, x0);
                    acc += wx * wy * row[xx];
                    area += wx * wy;
                }
            }
            out.at(x, y) = static_cast<float>(area > 0.0 ? acc / area : 0.0);
        }
    }
    return out;
}

} // namespace detail

enum class ResizeFilter { Box, Bicubic };

inline ImageF resize(const ImageF& img, int w, int h, ResizeFilter filter) {
    if (w <= 0 || h <= 0) throw ParamOutOfRange("resize: target dimensions must be positive");
    ImageF out(w, h);
    for (int c = 0; c < 3; ++c) {
        Plane p = extract_plane(img, c);
        Plane q = (filter == ResizeFilter::Box) ? detail::resize_box(p, w, h)
                                                : detail::resize_bicubic(p, w, h);
        std::copy(q.v.begin(), q.v.end(), out.plane(c));
    }
    clamp_image(out);
    return out;
}

// --- rank filters -------------------------------------------------------

inline Plane median_filter(const Plane& p, int radius) {
    Plane out(p.width, p.height);
    const int k = 2 * radius + 1;
    std::vector<float> window(static_cast<size_t>(k) * k);
    for (int y = 0; y < p.height; ++y)
        for (int x = 0; x < p.width; ++x) {
            size_t n = 0;
            for (int dy = -radius; dy <= radius; ++dy) {
                const int sy = reflect101(y + dy, p.height);
                const float* row = &p.v[static_cast<size_t>(sy) * p.width];
                for (int dx = -radius; dx <= radius; ++dx)
                    window[n++] = row[reflect101(x + dx, p.width)];
            }
            auto mid = window.begin() + n / 2;
            std::nth_element(window.begin(), mid, window.begin() + n);
            out.at(x, y) = *mid;
        }
    return out;
}

// Separable sliding-window minimum (erosion with a square structuring
// element); used by the dark channel.
inline Plane min_filter(const Plane& p, int radius) {
    Plane tmp(p.width, p.height), out(p.width, p.height);
    for (int y = 0; y < p.height; ++y) {
        const float* row = &p.v[static_cast<size_t>(y) * p.width];
        float* trow = &tmp.v[static_cast<size_t>(y) * p.width];
        for (int x = 0; x < p.width; ++x) {
            float m = row[x];
            for (int d = -radius; d <= radius; ++d) {
                const int sx = std::clamp(x + d, 0, p.width - 1);
                m = std::min(m, row[sx]);
            }
            trow[x] = m;
        }
    }
    for (int x = 0; x < p.width; ++x)
        for (int y = 0; y < p.height; ++y) {
            float m = tmp.at(x, y);
            for (int d = -radius; d <= radius; ++d) {
                const int sy = std::clamp(y + d, 0, p.height - 1);
                m = std::min(m, tmp.at(x, sy));
            }
            out.at(x, y) = m;
        }
    return out;
}

// --- integral-image box statistics ---------------------------------------

// mean over a (2r+1)^2 window with edge-truncated normalization.
inline Plane box_mean(const Plane& p, int radius) {
    const int w = p.width, h = p.height;
    std::vector<double> integral(static_cast<size_t>(w + 1) * (h + 1), 0.0);
    for (int y = 0; y < h; ++y) {
        double rowsum = 0.0;
        for (int x = 0; x < w; ++x) {
            rowsum += p.at(x, y);
            integral[static_cast<size_t>(y + 1) * (w + 1) + x + 1] =
                integral[static_cast<size_t>(y) * (w + 1) + x + 1] + rowsum;
        }
    }
    Plane out(w, h);
    for (int y = 0; y < h; ++y) {
        const int y0 = std::max(0, y - radius), y1 = std::min(h - 1, y + radius);
        for (int x = 0; x < w; ++x) {
            const int x0 = std::max(0, x - radius), x1 = std::min(w - 1, x + radius);
            const double s = integral[static_cast<size_t>(y1 + 1) * (w + 1) + x1 + 1] -
                             integral[static_cast<size_t>(y0) * (w + 1) + x1 + 1] -
                             integral[static_cast<size_t>(y1 + 1) * (w + 1) + x0] +
                             integral[static_cast<size_t>(y0) * (w + 1) + x0];
            out.at(x, y) = static_cast<float>(s / ((y1 - y0 + 1) * (x1 - x0 + 1)));
        }
    }
    return out;
}

// Gray-guide guided filter (He et al. formulation).
inline Plane guided_filter(const Plane& guide, const Plane& src, int radius, double eps) {
    if (guide.width != src.width || guide.height != src.height)
        throw DimMismatch("guided_filter: guide/src dimensions differ");
    const size_t n = src.size();
    Plane ip(src.width, src.height), ii(src.width, src.height);
    for (size_t i = 0; i < n; ++i) {
        ip.v[i] = guide.v[i] * src.v[i];
        ii.v[i] = guide.v[i] * guide.v[i];
    }
    Plane mean_i = box_mean(guide, radius);
    Plane mean_p = box_mean(src, radius);
    Plane mean_ip = box_mean(ip, radius);
    Plane mean_ii = box_mean(ii, radius);
    Plane a(src.width, src.height), b(src.width, src.height);
    for (size_t i = 0; i < n; ++i) {
        const double var = static_cast<double>(mean_ii.v[i]) - static_cast<double>(mean_i.v[i]) * mean_i.v[i];
        const double cov = static_cast<double>(mean_ip.v[i]) - static_cast<double>(mean_i.v[i]) * mean_p.v[i];
        const double ai = cov / (var + eps);
        a.v[i] = static_cast<float>(ai);
        b.v[i] = static_cast<float>(mean_p.v[i] - ai * mean_i.v[i]);
    }
    Plane mean_a = box_mean(a, radius);
    Plane mean_b = box_mean(b, radius);
    Plane out(src.width, src.height);
    for (size_t i = 0; i < n; ++i)
        out.v[i] = mean_a.v[i] * guide.v[i] + mean_b.v[i];
    return out;
}

// --- gradients -----------------------------------------------------------

struct GradientField {
    Plane gx;
    Plane gy;
};

inline GradientField sobel(const Plane& p) {
    GradientField g{Plane(p.width, p.height), Plane(p.width, p.height)};
    for (int y = 0; y < p.height; ++y)
        for (int x = 0; x < p.width; ++x) {
            auto s = [&](int dx, int dy) {
                return p.at(reflect101(x + dx, p.width), reflect101(y + dy, p.height));
            };
            g.gx.at(x, y) = (s(1, -1) + 2.0f * s(1, 0) + s(1, 1)) -
                            (s(-1, -1) + 2.0f * s(-1, 0) + s(-1, 1));
            g.gy.at(x, y) = (s(-1, 1) + 2.0f * s(0, 1) + s(1, 1)) -
                            (s(-1, -1) + 2.0f * s(0, -1) + s(1, -1));
        }
    return g;
}

// --- order statistics -----------------------------------------------------

// Percentile with linear interpolation between ranks; pct in [0, 100].
inline double percentile(std::vector<double> xs, double pct) {
    if (xs.empty()) throw EmptyInput("percentile: empty sample");
    std::sort(xs.begin(), xs.end());
    const double rank = pct / 100.0 * (static_cast<double>(xs.size()) - 1.0);
    const size_t lo = static_cast<size_t>(std::floor(rank));
    const size_t hi = std::min(lo + 1, xs.size() - 1);
    const double t = rank - static_cast<double>(lo);
    return xs[lo] * (1.0 - t) + xs[hi] * t;
}

inline double percentile_of_plane(const Plane& p, double pct) {
    std::vector<double> xs(p.v.begin(), p.v.end());
    return percentile(std::move(xs), pct);
}

} // namespace qagent
