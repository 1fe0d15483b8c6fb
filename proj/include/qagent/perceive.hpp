#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "qagent/calibration.hpp"
#include "qagent/degrade.hpp"
#include "qagent/error.hpp"
#include "qagent/fft.hpp"
#include "qagent/image.hpp"
#include "qagent/iqa/proxies.hpp"
#include "qagent/ops.hpp"

// Degradation perception, decomposed the way the agent asks about it: one
// independent statistical detector per family (no cross-conditioning), a
// noise-intensity follow-up, and the exact-match / per-type accuracy scores.
// Every threshold comparison is closed-upper: value == threshold is positive.

namespace qagent {

using PerceptionVector = LabelVector;

enum class BlurClass { None, Motion, Defocus };

struct NoiseDetection {
    bool present = false;
    Severity severity = Severity::Low;
    double sigma_hat = 0.0;
    double confidence = 0.0;
};

struct JpegDetection {
    bool present = false;
    double blockiness = 1.0;
    double confidence = 0.0;
};

struct HazeDetection {
    bool present = false;
    double t_hat = 1.0;
    double dark_mean = 0.0;
    double contrast = 0.0;
    double confidence = 0.0;
};

struct LowLightDetection {
    bool present = false;
    double mean_luma = 0.0;
    double dark_fraction = 0.0;
    double confidence = 0.0;
};

struct RainDetection {
    bool present = false;
    double angle_deg = 0.0;
    double band_ratio = 0.0;
    double resid_density = 0.0;
    double confidence = 0.0;
};

struct BlurDetection {
    BlurClass kind = BlurClass::None;
    double extent = 0.0;
    double angle_deg = 0.0;
    double vol = 0.0;
    double anisotropy = 1.0;
    double confidence = 0.0;
};

struct LowResDetection {
    bool present = false;
    int scale = 1;
    double hf_fraction = 0.0;
    double confidence = 0.0;
};

struct DetectorReport {
    NoiseDetection noise;
    JpegDetection jpeg;
    HazeDetection haze;
    LowLightDetection low_light;
    RainDetection rain;
    BlurDetection blur;
    LowResDetection low_res;
};

namespace perdetail {

inline double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline double fold180(double deg) {
    double a = std::fmod(deg, 180.0);
    if (a < 0) a += 180.0;
    return a;
}

// Radially averaged power spectrum of a mean-removed plane, zero-padded to a
// power of two. Bin index runs 0..63 over normalized radius [0, 1] (Nyquist).
inline constexpr int kRadialBins = 64;

inline std::vector<double> radial_power(const Plane& p) {
    const int fw = next_pow2(p.width), fh = next_pow2(p.height);
    Plane z = p;
    double mean = 0.0;
    for (float v : z.v) mean += v;
    mean /= static_cast<double>(z.v.size());
    for (float& v : z.v) v = static_cast<float>(v - mean);

    ComplexGrid g = fft2d_real(z, fw, fh);
    std::vector<double> power(kRadialBins, 0.0);
    std::vector<double> count(kRadialBins, 0.0);
    for (int fy = 0; fy < fh; ++fy)
        for (int fx = 0; fx < fw; ++fx) {
            const int u = fx <= fw / 2 ? fx : fx - fw;
            const int v = fy <= fh / 2 ? fy : fy - fh;
            const double ru = static_cast<double>(u) / (fw / 2);
            const double rv = static_cast<double>(v) / (fh / 2);
            const double r = std::sqrt(ru * ru + rv * rv);
            if (r > 1.0) continue;
            const int bin = std::min(kRadialBins - 1, static_cast<int>(r * (kRadialBins - 1) + 0.5));
            power[static_cast<size_t>(bin)] += std::norm(g.at(fx, fy));
            count[static_cast<size_t>(bin)] += 1.0;
        }
    for (int b = 0; b < kRadialBins; ++b)
        if (count[static_cast<size_t>(b)] > 0) power[static_cast<size_t>(b)] /= count[static_cast<size_t>(b)];
    return power;
}

// Fraction of spectral energy at or above `cutoff` (fraction of Nyquist); DC
// bin excluded.
inline double high_freq_fraction(const std::vector<double>& radial, double cutoff) {
    double total = 0.0, high = 0.0;
    const int start = std::max(1, static_cast<int>(cutoff * (kRadialBins - 1)));
    for (int b = 1; b < kRadialBins; ++b) {
        total += radial[static_cast<size_t>(b)];
        if (b >= start) high += radial[static_cast<size_t>(b)];
    }
    return total > 1e-30 ? high / total : 0.0;
}

// ---- spectral kernel-support matching -----------------------------------------
// A blur kernel stamps its OTF zero pattern onto the image spectrum. Reading
// support off one minimum is brittle — texture dips fake nulls and noise fills
// real ones — so these helpers detrend the log spectrum and correlate it
// against candidate-kernel OTF fields, letting the whole pattern vote.

inline ComplexGrid luma_spectrum(const ImageF& img, int n) {
    Plane y = to_luma(img);
    const double m = plane_mean(y);
    for (float& v : y.v) v -= static_cast<float>(m);
    return fft2d_real(y, n, n);
}

inline int spectral_ring(int x, int y, int n) {
    const int fx = x <= n / 2 ? x : x - n;
    const int fy = y <= n / 2 ? y : y - n;
    return static_cast<int>(
        std::lround(std::sqrt(static_cast<double>(fx) * fx + static_cast<double>(fy) * fy)));
}

inline std::vector<double> ring_median_log(const ComplexGrid& f, int n, int lo, int hi) {
    std::vector<std::vector<double>> rings(static_cast<size_t>(hi) + 1);
    for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x) {
            const int r = spectral_ring(x, y, n);
            if (r >= lo && r <= hi)
                rings[static_cast<size_t>(r)].push_back(std::log(std::norm(f.at(x, y)) + 1e-20));
        }
    std::vector<double> med(static_cast<size_t>(hi) + 1, 0.0);
    for (int r = lo; r <= hi; ++r) {
        auto& v = rings[static_cast<size_t>(r)];
        if (v.empty()) continue;
        std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2), v.end());
        med[static_cast<size_t>(r)] = v[v.size() / 2];
    }
    return med;
}

// Log power per annulus cell minus its ring median. The median kills the
// radial falloff of natural images (and of any isotropic kernel), leaving the
// anisotropic stripe pattern a motion kernel imprints.
struct SpectrumField {
    std::vector<double> val;
    std::vector<int> cells;  // linear index into the n x n grid
};

inline SpectrumField annulus_field(const ComplexGrid& f, int n, int lo, int hi) {
    const std::vector<double> med = ring_median_log(f, n, lo, hi);
    SpectrumField out;
    for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x) {
            const int r = spectral_ring(x, y, n);
            if (r < lo || r > hi) continue;
            out.cells.push_back(y * n + x);
            out.val.push_back(std::log(std::norm(f.at(x, y)) + 1e-20) - med[static_cast<size_t>(r)]);
        }
    return out;
}

// Same detrending applied to a candidate kernel's OTF, sampled at the
// observation's cells.
inline std::vector<double> annulus_template(const Kernel2D& k, int n, const SpectrumField& ref,
                                            int lo, int hi) {
    const ComplexGrid otf = psf_to_otf(k, n, n);
    const std::vector<double> med = ring_median_log(otf, n, lo, hi);
    std::vector<double> out(ref.cells.size());
    for (size_t i = 0; i < ref.cells.size(); ++i) {
        const int idx = ref.cells[i];
        const int r = spectral_ring(idx % n, idx / n, n);
        out[i] = std::log(std::norm(otf.v[static_cast<size_t>(idx)]) + 1e-20) -
                 med[static_cast<size_t>(r)];
    }
    return out;
}

inline double pearson(const std::vector<double>& a, const std::vector<double>& b) {
    const double n = static_cast<double>(a.size());
    double ma = 0.0, mb = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        ma += a[i];
        mb += b[i];
    }
    ma /= n;
    mb /= n;
    double saa = 0.0, sbb = 0.0, sab = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        const double da = a[i] - ma, db = b[i] - mb;
        saa += da * da;
        sbb += db * db;
        sab += da * db;
    }
    return sab / std::sqrt(std::max(saa * sbb, 1e-30));
}

struct MotionSupportMatch {
    double length = 13.0;
    double angle_deg = 0.0;
    double corr = -1.0;
};

// Best motion support over lengths 9..21 and small angle offsets around
// `angle0`. On genuinely smeared input the winning correlation sits well
// above anything a pristine or differently-degraded image produces.
inline MotionSupportMatch motion_support_match(const ImageF& img, double angle0,
                                               const std::vector<double>& angle_offsets) {
    const int n = next_pow2(std::max(img.width, img.height));
    const int lo = 6, hi = n / 2 - 2;
    MotionSupportMatch best;
    if (hi <= lo) return best;
    const SpectrumField obs = annulus_field(luma_spectrum(img, n), n, lo, hi);
    for (int len = 9; len <= 21; len += 2)
        for (const double da : angle_offsets) {
            const double ang = fold180(angle0 + da);
            const double c =
                pearson(obs.val, annulus_template(motion_kernel(len, ang), n, obs, lo, hi));
            if (c > best.corr) best = {static_cast<double>(len), ang, c};
        }
    return best;
}

// Fine (half-pixel-radius) profile of mean log power; bin index is twice the
// spectral radius.
inline std::vector<double> fine_radial_log(const ComplexGrid& f, int n) {
    std::vector<double> acc(static_cast<size_t>(n), 0.0);
    std::vector<int> cnt(static_cast<size_t>(n), 0);
    for (int y = 0; y < n; ++y) {
        const int fy = y <= n / 2 ? y : y - n;
        for (int x = 0; x < n; ++x) {
            const int fx = x <= n / 2 ? x : x - n;
            const int rf = static_cast<int>(
                std::lround(2.0 * std::sqrt(static_cast<double>(fx) * fx + static_cast<double>(fy) * fy)));
            if (rf >= 1 && rf < n) {
                acc[static_cast<size_t>(rf)] += std::log(std::norm(f.at(x, y)) + 1e-20);
                ++cnt[static_cast<size_t>(rf)];
            }
        }
    }
    for (int i = 1; i < n; ++i)
        if (cnt[static_cast<size_t>(i)] > 0) acc[static_cast<size_t>(i)] /= cnt[static_cast<size_t>(i)];
    return acc;
}

// Subtract the least-squares a + b*log r fit over [lo, hi] — natural spectra
// decay as a power law, so what is left is the kernel's ripple.
inline std::vector<double> powerlaw_detrend(const std::vector<double>& s, int lo, int hi) {
    double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
    int n = 0;
    for (int i = lo; i <= hi; ++i) {
        const double x = std::log(static_cast<double>(i));
        sx += x;
        sy += s[static_cast<size_t>(i)];
        sxx += x * x;
        sxy += x * s[static_cast<size_t>(i)];
        ++n;
    }
    const double b = (n * sxy - sx * sy) / std::max(n * sxx - sx * sx, 1e-12);
    const double a = (sy - b * sx) / n;
    std::vector<double> out(s.size(), 0.0);
    for (int i = lo; i <= hi; ++i)
        out[static_cast<size_t>(i)] = s[static_cast<size_t>(i)] - (a + b * std::log(static_cast<double>(i)));
    return out;
}

inline double pearson_band(const std::vector<double>& a, const std::vector<double>& b, int lo,
                           int hi) {
    double ma = 0.0, mb = 0.0;
    int n = 0;
    for (int i = lo; i <= hi; ++i) {
        ma += a[static_cast<size_t>(i)];
        mb += b[static_cast<size_t>(i)];
        ++n;
    }
    ma /= n;
    mb /= n;
    double saa = 0.0, sbb = 0.0, sab = 0.0;
    for (int i = lo; i <= hi; ++i) {
        const double da = a[static_cast<size_t>(i)] - ma, db = b[static_cast<size_t>(i)] - mb;
        saa += da * da;
        sbb += db * db;
        sab += da * db;
    }
    return sab / std::sqrt(std::max(saa * sbb, 1e-30));
}

inline constexpr std::array<double, 5> kDiskRadii = {2.0, 3.0, 4.0, 5.0, 6.0};

// Correlation of the observed radial profile against each disk radius. A disk
// kernel's rings are radially symmetric, so the ring-median detrend above
// would erase them; the 1-D profile with a power-law detrend keeps them.
inline std::array<double, kDiskRadii.size()> disk_radius_scores(const ImageF& img) {
    const int n = next_pow2(std::max(img.width, img.height));
    std::array<double, kDiskRadii.size()> sc{};
    sc.fill(-1.0);
    const int lo = 10, hi = n - 6;
    if (hi <= lo) return sc;
    const std::vector<double> obs =
        powerlaw_detrend(fine_radial_log(luma_spectrum(img, n), n), lo, hi);
    for (size_t i = 0; i < kDiskRadii.size(); ++i) {
        const std::vector<double> t =
            powerlaw_detrend(fine_radial_log(psf_to_otf(disk_kernel(kDiskRadii[i]), n, n), n), lo, hi);
        sc[i] = pearson_band(obs, t, lo, hi);
    }
    return sc;
}

// Interior response to the 3x3 Laplacian [1,-2,1; -2,4,-2; 1,-2,1].
inline std::vector<double> laplacian_interior(const Plane& y) {
    std::vector<double> out;
    if (y.width < 3 || y.height < 3) return out;
    out.reserve(static_cast<size_t>(y.width - 2) * (y.height - 2));
    for (int yy = 1; yy < y.height - 1; ++yy)
        for (int xx = 1; xx < y.width - 1; ++xx) {
            const double l = y.at(xx - 1, yy - 1) - 2.0 * y.at(xx, yy - 1) + y.at(xx + 1, yy - 1) -
                             2.0 * y.at(xx - 1, yy) + 4.0 * y.at(xx, yy) - 2.0 * y.at(xx + 1, yy) +
                             y.at(xx - 1, yy + 1) - 2.0 * y.at(xx, yy + 1) + y.at(xx + 1, yy + 1);
            out.push_back(l);
        }
    return out;
}

} // namespace perdetail

// Immerkaer fast noise estimate: mean |Laplacian| over the interior of every
// channel, scaled so white Gaussian noise of deviation sigma returns sigma.
// Channels are pooled rather than converted to luma: the luma mix would
// attenuate independent per-channel noise by the norm of its weights.
inline double estimate_noise_sigma(const ImageF& img) {
    if (std::min(img.width, img.height) < 32)
        throw ImageTooSmall("estimate_noise_sigma: min dimension must be >= 32");
    double acc = 0.0;
    size_t count = 0;
    for (int c = 0; c < 3; ++c) {
        Plane ch(img.width, img.height);
        const float* src = img.plane(c);
        std::copy(src, src + ch.v.size(), ch.v.begin());
        const std::vector<double> lap = perdetail::laplacian_interior(ch);
        for (double l : lap) acc += std::abs(l);
        count += lap.size();
    }
    return std::sqrt(3.14159265358979323846 / 2.0) * acc / (6.0 * static_cast<double>(count));
}

inline NoiseDetection detect_noise(const ImageF& img, const DetectorThresholds& thr = {}) {
    NoiseDetection d;
    d.sigma_hat = estimate_noise_sigma(img);
    d.present = d.sigma_hat >= thr.noise_sigma;
    d.severity = d.sigma_hat >= thr.noise_mid_high  ? Severity::High
                 : d.sigma_hat >= thr.noise_low_mid ? Severity::Mid
                                                    : Severity::Low;
    d.confidence = perdetail::logistic(350.0 * std::abs(d.sigma_hat - thr.noise_sigma));
    return d;
}

inline JpegDetection detect_jpeg(const ImageF& img, const DetectorThresholds& thr = {}) {
    JpegDetection d;
    d.blockiness = blockiness_index(img);
    d.present = d.blockiness >= thr.jpeg_blockiness;
    d.confidence = perdetail::logistic(12.0 * std::abs(d.blockiness - thr.jpeg_blockiness));
    return d;
}

inline HazeDetection detect_haze(const ImageF& img, const DetectorThresholds& thr = {}) {
    HazeDetection d;
    Plane min_channel(img.width, img.height);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            min_channel.at(x, y) = std::min({img.at(0, x, y), img.at(1, x, y), img.at(2, x, y)});
    const Plane dark = min_filter(min_channel, 7); // 15x15 window
    d.dark_mean = plane_mean(dark);
    d.contrast = rms_contrast(img);
    d.present = d.dark_mean >= thr.haze_dark_mean && d.contrast <= thr.haze_contrast;

    // airlight from the brightest 0.1% of the dark channel
    std::vector<double> dv(dark.v.begin(), dark.v.end());
    const size_t k = std::max<size_t>(1, dv.size() / 1000);
    std::nth_element(dv.begin(), dv.begin() + static_cast<long>(k) - 1, dv.end(),
                     std::greater<double>());
    double airlight = 0.0;
    for (size_t i = 0; i < k; ++i) airlight += dv[i];
    airlight /= static_cast<double>(k);
    d.t_hat = std::clamp(1.0 - d.dark_mean / std::max(airlight, 1e-6), 0.0, 1.0);

    const double m_dark = perdetail::logistic(25.0 * (d.dark_mean - thr.haze_dark_mean));
    const double m_contrast = perdetail::logistic(40.0 * (thr.haze_contrast - d.contrast));
    d.confidence = d.present ? std::min(m_dark, m_contrast)
                             : std::max(1.0 - m_dark, 1.0 - m_contrast);
    if (d.dark_mean >= 0.9) d.confidence = std::min(d.confidence, 0.5); // washed out: ambiguous
    return d;
}

inline LowLightDetection detect_low_light(const ImageF& img, const DetectorThresholds& thr = {}) {
    LowLightDetection d;
    const Plane y = to_luma(img);
    d.mean_luma = plane_mean(y);
    size_t dark = 0;
    for (float v : y.v)
        if (v < thr.low_light_dark_level) ++dark;
    d.dark_fraction = static_cast<double>(dark) / static_cast<double>(y.v.size());
    d.present = d.mean_luma <= thr.low_light_mean && d.dark_fraction >= thr.low_light_dark_frac;
    const double t_mean = (thr.low_light_mean - d.mean_luma) / thr.low_light_mean;
    const double t_frac =
        (d.dark_fraction - thr.low_light_dark_frac) / (1.0 - thr.low_light_dark_frac);
    d.confidence = d.present ? std::clamp(std::min(t_mean, t_frac), 0.0, 1.0)
                             : std::clamp(std::max(-t_mean, -t_frac), 0.0, 1.0);
    return d;
}

inline RainDetection detect_rain(const ImageF& img, const DetectorThresholds& thr = {}) {
    RainDetection d;
    const Plane y = to_luma(img);
    const Plane med = median_filter(y, 2); // 5x5
    Plane resid(y.width, y.height);
    size_t wet = 0;
    for (size_t i = 0; i < y.v.size(); ++i) {
        resid.v[i] = y.v[i] - med.v[i];
        if (resid.v[i] >= static_cast<float>(thr.rain_resid_level)) ++wet;
    }
    d.resid_density = static_cast<double>(wet) / static_cast<double>(y.v.size());

    // orientation histogram of residual gradient energy; streak orientation
    // is the gradient orientation rotated a quarter turn
    const GradientField g = sobel(resid);
    std::array<double, 12> bins{};
    double total = 0.0;
    for (size_t i = 0; i < resid.v.size(); ++i) {
        const double e = static_cast<double>(g.gx.v[i]) * g.gx.v[i] +
                         static_cast<double>(g.gy.v[i]) * g.gy.v[i];
        if (e < 1e-12) continue;
        const double streak =
            perdetail::fold180(std::atan2(g.gy.v[i], g.gx.v[i]) * 180.0 / 3.14159265358979323846 +
                               90.0);
        bins[static_cast<size_t>(streak / 15.0) % 12] += e;
        total += e;
    }
    if (total < 1e-9) {
        d.confidence = 0.9; // no residual texture at all
        return d;
    }
    const double median_bin = percentile(std::vector<double>(bins.begin(), bins.end()), 50.0);
    int best = 4;
    for (int b = 5; b <= 7; ++b)
        if (bins[static_cast<size_t>(b)] > bins[static_cast<size_t>(best)]) best = b;
    d.band_ratio = bins[static_cast<size_t>(best)] / std::max(median_bin, 1e-12);
    d.angle_deg = best * 15.0 + 7.5;
    const bool density_ok =
        d.resid_density >= thr.rain_density_min && d.resid_density <= thr.rain_density_max;
    d.present = density_ok && d.band_ratio >= thr.rain_band_ratio;
    const double m = perdetail::logistic(1.5 * (d.band_ratio - thr.rain_band_ratio));
    d.confidence = d.present ? m : std::max(1.0 - m, density_ok ? 0.0 : 0.8);
    return d;
}

inline BlurDetection detect_blur(const ImageF& img, const DetectorThresholds& thr = {}) {
    BlurDetection d;
    const Plane y = to_luma(img);
    const std::vector<double> lap = perdetail::laplacian_interior(y);
    double s1 = 0.0, s2 = 0.0;
    for (double l : lap) {
        s1 += l;
        s2 += l * l;
    }
    const double n = static_cast<double>(lap.size());
    const double mean = s1 / n;
    d.vol = std::max(0.0, s2 / n - mean * mean);

    const GradientField g = sobel(y);
    double jxx = 0.0, jxy = 0.0, jyy = 0.0;
    for (size_t i = 0; i < y.v.size(); ++i) {
        const double gx = g.gx.v[i], gy = g.gy.v[i];
        jxx += gx * gx;
        jxy += gx * gy;
        jyy += gy * gy;
    }
    const double half_tr = 0.5 * (jxx + jyy);
    const double disc = std::sqrt(std::max(0.0, 0.25 * (jxx - jyy) * (jxx - jyy) + jxy * jxy));
    const double l1 = half_tr + disc, l2 = half_tr - disc;
    d.anisotropy = l1 / std::max(l2, 1e-12);
    const double grad_dir = 0.5 * std::atan2(2.0 * jxy, jxx - jyy);
    d.angle_deg = perdetail::fold180(grad_dir * 180.0 / 3.14159265358979323846 + 90.0);

    const double log_margin = std::log10(std::max(d.vol, 1e-12)) - std::log10(thr.blur_vol);
    if (d.vol > thr.blur_vol) {
        d.kind = BlurClass::None;
        d.confidence = perdetail::logistic(6.0 * log_margin);
        return d;
    }
    d.kind = d.anisotropy >= thr.blur_anisotropy ? BlurClass::Motion : BlurClass::Defocus;
    d.confidence = perdetail::logistic(-6.0 * log_margin);

    // blur extent from the spectral-minimum pattern: the kernel's first null
    // and its successors together pin the support, so read them by matching
    // candidate-kernel spectra instead of hunting one dip
    if (d.kind == BlurClass::Motion) {
        d.extent = perdetail::motion_support_match(img, d.angle_deg, {0.0}).length;
    } else {
        const auto sc = perdetail::disk_radius_scores(img);
        const auto bi = std::max_element(sc.begin(), sc.end()) - sc.begin();
        d.extent = 2.0 * perdetail::kDiskRadii[static_cast<size_t>(bi)] + 1.0;
    }
    return d;
}

inline LowResDetection detect_low_res(const ImageF& img, const DetectorThresholds& thr = {}) {
    LowResDetection d;
    const std::vector<double> radial = perdetail::radial_power(to_luma(img));
    d.hf_fraction = perdetail::high_freq_fraction(radial, thr.lr_cutoff);
    const double limit = thr.lr_hf_ratio * thr.lr_pristine_hf;
    d.present = d.hf_fraction <= limit;
    d.confidence = perdetail::logistic(
        8.0 * std::abs(d.hf_fraction - limit) / std::max(limit, 1e-9));

    // upscale factor via operator self-consistency: an image already produced
    // by a box-down / bicubic-up at factor s barely changes when the same
    // round trip is applied again, while the first factor past the true one
    // destroys real detail. Take the largest factor still invariant.
    d.scale = 1;
    for (int s = 2; s <= 4; ++s) {
        const ImageF rt = detail::apply_low_res(img, LowResParams{s});
        double acc = 0.0;
        for (size_t i = 0; i < img.data.size(); ++i) {
            const double e = static_cast<double>(rt.data[i]) - img.data[i];
            acc += e * e;
        }
        const double rmse = std::sqrt(acc / static_cast<double>(img.data.size()));
        if (rmse > thr.lr_invariance) break;
        d.scale = s;
    }
    return d;
}

// All eight questions asked independently; results mapped into the shared
// bit order. At most one NI-* bit is ever set (the intensity follow-up).
inline std::pair<PerceptionVector, DetectorReport> perceive(const ImageF& img,
                                                            const DetectorThresholds& thr = {}) {
    DetectorReport r;
    r.noise = detect_noise(img, thr);
    r.jpeg = detect_jpeg(img, thr);
    r.haze = detect_haze(img, thr);
    r.low_light = detect_low_light(img, thr);
    r.rain = detect_rain(img, thr);
    r.blur = detect_blur(img, thr);
    r.low_res = detect_low_res(img, thr);

    PerceptionVector v{};
    if (r.noise.present) {
        const int bit = r.noise.severity == Severity::High  ? kBitNiH
                        : r.noise.severity == Severity::Mid ? kBitNiM
                                                            : kBitNiL;
        v.bits[static_cast<size_t>(bit)] = true;
    }
    v.bits[kBitJp] = r.jpeg.present;
    v.bits[kBitRa] = r.rain.present;
    v.bits[kBitHa] = r.haze.present;
    v.bits[kBitMb] = r.blur.kind == BlurClass::Motion;
    v.bits[kBitDb] = r.blur.kind == BlurClass::Defocus;
    v.bits[kBitLl] = r.low_light.present;
    v.bits[kBitLr] = r.low_res.present;
    return {v, r};
}

// ---- accuracy scores -------------------------------------------------------

// Exact-match accuracy over full 10-bit vectors.
inline double macc(const std::vector<PerceptionVector>& preds,
                   const std::vector<LabelVector>& labels) {
    if (preds.size() != labels.size()) throw LengthMismatch("macc: size mismatch");
    if (preds.empty()) throw EmptyInput("macc: empty");
    size_t hits = 0;
    for (size_t i = 0; i < preds.size(); ++i)
        if (preds[i] == labels[i]) ++hits;
    return static_cast<double>(hits) / static_cast<double>(preds.size());
}

// Per-type recall: among samples labeled with bit i, the fraction predicted
// with bit i.
inline double dacc(const std::vector<PerceptionVector>& preds,
                   const std::vector<LabelVector>& labels, int bit) {
    if (preds.size() != labels.size()) throw LengthMismatch("dacc: size mismatch");
    size_t labeled = 0, hit = 0;
    for (size_t i = 0; i < preds.size(); ++i) {
        if (!labels[i].bits[static_cast<size_t>(bit)]) continue;
        ++labeled;
        if (preds[i].bits[static_cast<size_t>(bit)]) ++hit;
    }
    if (labeled == 0) throw EmptyClass("dacc: no labels with bit " + std::to_string(bit));
    return static_cast<double>(hit) / static_cast<double>(labeled);
}

// Per-type precision, reported alongside dacc. Vacuously 1 when the bit is
// never predicted.
inline double dprecision(const std::vector<PerceptionVector>& preds,
                         const std::vector<LabelVector>& labels, int bit) {
    if (preds.size() != labels.size()) throw LengthMismatch("dprecision: size mismatch");
    size_t predicted = 0, hit = 0;
    for (size_t i = 0; i < preds.size(); ++i) {
        if (!preds[i].bits[static_cast<size_t>(bit)]) continue;
        ++predicted;
        if (labels[i].bits[static_cast<size_t>(bit)]) ++hit;
    }
    return predicted == 0 ? 1.0 : static_cast<double>(hit) / static_cast<double>(predicted);
}

// ---- threshold calibration -------------------------------------------------

namespace perdetail {

// Youden-optimal split between negative and positive samples of one decision
// statistic. positive_low: positives lie at or below the threshold. Falls
// back when the distributions barely separate, and clamps to sane bounds.
inline double youden_threshold(const std::vector<double>& neg, const std::vector<double>& pos,
                               bool positive_low, double fallback, double lo, double hi) {
    if (neg.empty() || pos.empty()) return fallback;
    std::vector<double> all = neg;
    all.insert(all.end(), pos.begin(), pos.end());
    std::sort(all.begin(), all.end());
    double best = fallback, best_j = 0.0;
    auto frac = [](const std::vector<double>& v, auto pred) {
        size_t k = 0;
        for (double x : v)
            if (pred(x)) ++k;
        return static_cast<double>(k) / static_cast<double>(v.size());
    };
    for (size_t i = 0; i + 1 < all.size(); ++i) {
        if (all[i + 1] <= all[i]) continue;
        const double c = 0.5 * (all[i] + all[i + 1]);
        const double tpr = positive_low ? frac(pos, [c](double x) { return x <= c; })
                                        : frac(pos, [c](double x) { return x >= c; });
        const double tnr = positive_low ? frac(neg, [c](double x) { return x > c; })
                                        : frac(neg, [c](double x) { return x < c; });
        const double j = tpr + tnr - 1.0;
        if (j > best_j + 1e-12) {
            best_j = j;
            best = c;
        }
    }
    if (best_j < 0.3) return fallback; // not separable; keep the shipped default
    return std::clamp(best, lo, hi);
}

} // namespace perdetail

// Re-derive the data-dependent detector thresholds from the pristine corpus
// plus a labeled single-degradation sweep, writing them into the artifact.
// Shipped defaults survive wherever the statistic fails to separate.
inline void calibrate_detectors(CalibrationArtifact& cal, const std::vector<ImageF>& pristine,
                                uint64_t seed) {
    const DetectorThresholds base; // stats don't depend on thresholds
    std::vector<double> neg_sigma, neg_block, neg_dark, neg_luma, neg_ratio, neg_vol, neg_hf;
    for (const ImageF& img : pristine) {
        neg_sigma.push_back(detect_noise(img, base).sigma_hat);
        neg_block.push_back(detect_jpeg(img, base).blockiness);
        neg_dark.push_back(detect_haze(img, base).dark_mean);
        neg_luma.push_back(detect_low_light(img, base).mean_luma);
        neg_ratio.push_back(detect_rain(img, base).band_ratio);
        neg_vol.push_back(detect_blur(img, base).vol);
        neg_hf.push_back(detect_low_res(img, base).hf_fraction);
    }

    std::vector<double> pos_sigma, pos_block, pos_dark, pos_luma, pos_ratio, pos_vol, pos_hf;
    Rng rng(Rng::mix(seed, 0x70657263ull));
    for (size_t i = 0; i < pristine.size(); ++i)
        for (int k = 0; k < kNumDegradationKinds; ++k) {
            const auto kind = static_cast<DegradationKind>(k);
            const int level = 1 + static_cast<int>((i + static_cast<size_t>(k)) % 3);
            Rng step_rng = rng.fork(Rng::mix(i, static_cast<uint64_t>(k)));
            const DegradationStep step = sweep_step(kind, level, step_rng);
            const ImageF deg = apply_step(pristine[i], step, step_rng);
            switch (kind) {
                case DegradationKind::Noise:
                    pos_sigma.push_back(detect_noise(deg, base).sigma_hat);
                    break;
                case DegradationKind::Jpeg:
                    pos_block.push_back(detect_jpeg(deg, base).blockiness);
                    break;
                case DegradationKind::Haze:
                    pos_dark.push_back(detect_haze(deg, base).dark_mean);
                    break;
                case DegradationKind::LowLight:
                    pos_luma.push_back(detect_low_light(deg, base).mean_luma);
                    break;
                case DegradationKind::Rain:
                    pos_ratio.push_back(detect_rain(deg, base).band_ratio);
                    break;
                case DegradationKind::MotionBlur:
                case DegradationKind::DefocusBlur:
                    pos_vol.push_back(detect_blur(deg, base).vol);
                    break;
                case DegradationKind::LowRes:
                    pos_hf.push_back(detect_low_res(deg, base).hf_fraction);
                    break;
            }
        }

    DetectorThresholds& t = cal.detectors;
    t.noise_sigma = perdetail::youden_threshold(neg_sigma, pos_sigma, false, t.noise_sigma,
                                                3.5 / 255.0, 12.0 / 255.0);
    t.jpeg_blockiness =
        perdetail::youden_threshold(neg_block, pos_block, false, t.jpeg_blockiness, 1.05, 1.6);
    t.haze_dark_mean =
        perdetail::youden_threshold(neg_dark, pos_dark, false, t.haze_dark_mean, 0.25, 0.55);
    t.low_light_mean =
        perdetail::youden_threshold(neg_luma, pos_luma, true, t.low_light_mean, 0.12, 0.35);
    t.rain_band_ratio =
        perdetail::youden_threshold(neg_ratio, pos_ratio, false, t.rain_band_ratio, 1.3, 5.0);
    t.blur_vol = perdetail::youden_threshold(neg_vol, pos_vol, true, t.blur_vol, 1e-6, 1.0);

    double pristine_hf = 0.0;
    for (double x : neg_hf) pristine_hf += x;
    pristine_hf /= static_cast<double>(neg_hf.size());
    t.lr_pristine_hf = pristine_hf;
    const double hf_thr = perdetail::youden_threshold(neg_hf, pos_hf, true,
                                                      t.lr_hf_ratio * pristine_hf, 1e-9, 1.0);
    t.lr_hf_ratio = std::clamp(hf_thr / std::max(pristine_hf, 1e-9), 0.1, 0.95);
}

// Quality model plus detector thresholds in one pass.
inline CalibrationArtifact calibrate_all(const std::vector<ImageF>& pristine,
                                         const std::string& descriptor, uint64_t seed) {
    CalibrationArtifact cal = fit_calibration(pristine, descriptor, seed);
    calibrate_detectors(cal, pristine, seed);
    return cal;
}

} // namespace qagent
