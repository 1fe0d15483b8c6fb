#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "qagent/calibration.hpp"
#include "qagent/error.hpp"
#include "qagent/fft.hpp"
#include "qagent/image.hpp"
#include "qagent/ops.hpp"
#include "qagent/perceive.hpp"

// Classical restoration toolbox: one task slot per label bit, a registry
// with alternates per slot, and blind parameter grids (Wiener NSR / disk
// radius / fallback motion kernels) resolved by the normalized quality
// score when a calibration artifact is supplied.

namespace qagent {

// ---- task labels ------------------------------------------------------------

enum class TaskLabel { DN_L, DN_M, DN_H, DJ, DR, DH, MDB, DDB, LE, SR };

inline constexpr std::array<const char*, 10> kTaskLabelNames = {
    "DN_L", "DN_M", "DN_H", "DJ", "DR", "DH", "MDB", "DDB", "LE", "SR"};

inline const char* task_label_name(TaskLabel t) {
    return kTaskLabelNames[static_cast<size_t>(t)];
}

inline TaskLabel task_label_from_string(const std::string& s) {
    for (size_t i = 0; i < kTaskLabelNames.size(); ++i)
        if (s == kTaskLabelNames[i]) return static_cast<TaskLabel>(i);
    throw ConfigError("unknown task label: " + s);
}

// Label bits and task slots share one order: NI-L..LR maps onto DN_L..SR.
inline TaskLabel task_for_bit(int bit) {
    if (bit < 0 || bit >= static_cast<int>(kTaskLabelNames.size()))
        throw ParamOutOfRange("task_for_bit: bit outside [0,9]");
    return static_cast<TaskLabel>(bit);
}

inline int bit_for_task(TaskLabel t) { return static_cast<int>(t); }

// ---- tool specs -------------------------------------------------------------

using ToolParams = std::map<std::string, double>;

struct ToolSpec {
    TaskLabel task = TaskLabel::DN_M;
    std::string tool_id;
    ToolParams params;
};

// Optional side information for the blind tools. Without a calibration
// artifact there is no quality probe, so parameter grids collapse to their
// midpoints instead of being searched.
struct ToolContext {
    const CalibrationArtifact* calibration = nullptr;
    std::optional<double> streak_angle_deg; // rain streak direction hint
    std::optional<int> lr_scale;            // upsampling factor hint
};

namespace restdetail {

inline double param_or(const ToolParams& p, const char* key, double dflt) {
    const auto it = p.find(key);
    return it == p.end() ? dflt : it->second;
}

inline std::optional<double> param_opt(const ToolParams& p, const char* key) {
    const auto it = p.find(key);
    if (it == p.end()) return std::nullopt;
    return it->second;
}

inline double noise_preset_sigma(TaskLabel t) {
    switch (t) {
        case TaskLabel::DN_L: return 10.0 / 255.0;
        case TaskLabel::DN_M: return 25.0 / 255.0;
        case TaskLabel::DN_H: return 50.0 / 255.0;
        default: throw UnknownTool("noise preset requested for a non-denoise task");
    }
}

inline std::optional<double> probe_quality(const ImageF& img, const ToolContext& ctx) {
    if (ctx.calibration == nullptr || !ctx.calibration->fitted()) return std::nullopt;
    return measure_quality(img, *ctx.calibration, QualityMode::Normalized).value;
}

// ---- denoising --------------------------------------------------------------

// Non-local means, 5x5 patches over an 11x11 search window. Patch distances
// are mean squared differences over all channels with the 2*sigma^2 noise
// floor subtracted, so two noisy copies of the same patch weigh as equals.
inline ImageF nlm_denoise(const ImageF& img, double h, double noise_sigma) {
    if (h <= 0.0) throw ParamOutOfRange("nlm: h must be positive");
    if (noise_sigma < 0.0) throw ParamOutOfRange("nlm: sigma must be nonnegative");
    const int w = img.width, ht = img.height;
    const int patch_radius = 2, window_radius = 5;

    std::array<Plane, 3> num = {Plane(w, ht), Plane(w, ht), Plane(w, ht)};
    Plane den(w, ht);
    for (int c = 0; c < 3; ++c)
        std::copy(img.plane(c), img.plane(c) + img.plane_size(), num[static_cast<size_t>(c)].v.begin());
    std::fill(den.v.begin(), den.v.end(), 1.0f); // the center tap

    const double inv_h2 = 1.0 / (h * h);
    const double comp = 2.0 * noise_sigma * noise_sigma;
    Plane d2(w, ht);
    for (int dy = -window_radius; dy <= window_radius; ++dy) {
        for (int dx = -window_radius; dx <= window_radius; ++dx) {
            if (dx == 0 && dy == 0) continue;
            for (int y = 0; y < ht; ++y) {
                const int sy = reflect101(y + dy, ht);
                for (int x = 0; x < w; ++x) {
                    const int sx = reflect101(x + dx, w);
                    double d = 0.0;
                    for (int c = 0; c < 3; ++c) {
                        const double diff = static_cast<double>(img.at(c, x, y)) - img.at(c, sx, sy);
                        d += diff * diff;
                    }
                    d2.at(x, y) = static_cast<float>(d / 3.0);
                }
            }
            const Plane s = box_mean(d2, patch_radius);
            for (int y = 0; y < ht; ++y) {
                const int sy = reflect101(y + dy, ht);
                for (int x = 0; x < w; ++x) {
                    const int sx = reflect101(x + dx, w);
                    const double wgt =
                        std::exp(-std::max(static_cast<double>(s.at(x, y)) - comp, 0.0) * inv_h2);
                    for (int c = 0; c < 3; ++c)
                        num[static_cast<size_t>(c)].at(x, y) += static_cast<float>(wgt * img.at(c, sx, sy));
                    den.at(x, y) += static_cast<float>(wgt);
                }
            }
        }
    }

    ImageF out(w, ht);
    for (int c = 0; c < 3; ++c)
        for (size_t i = 0; i < img.plane_size(); ++i)
            out.plane(c)[i] = clamp01(num[static_cast<size_t>(c)].v[i] / den.v[i]);
    return out;
}

inline ImageF bilateral_denoise(const ImageF& img, double sigma_s, double sigma_r) {
    if (sigma_s <= 0.0 || sigma_r <= 0.0)
        throw ParamOutOfRange("bilateral: sigmas must be positive");
    const int w = img.width, ht = img.height;
    const int rad = std::max(1, static_cast<int>(std::ceil(2.5 * sigma_s)));
    const int side = 2 * rad + 1;
    std::vector<double> spatial(static_cast<size_t>(side) * side);
    for (int dy = -rad; dy <= rad; ++dy)
        for (int dx = -rad; dx <= rad; ++dx)
            spatial[static_cast<size_t>(dy + rad) * side + (dx + rad)] =
                std::exp(-(dx * dx + dy * dy) / (2.0 * sigma_s * sigma_s));
    const double inv_2r2 = 1.0 / (2.0 * sigma_r * sigma_r);

    ImageF out(w, ht);
    for (int y = 0; y < ht; ++y)
        for (int x = 0; x < w; ++x) {
            double acc[3] = {0.0, 0.0, 0.0}, wsum = 0.0;
            for (int dy = -rad; dy <= rad; ++dy) {
                const int sy = reflect101(y + dy, ht);
                for (int dx = -rad; dx <= rad; ++dx) {
                    const int sx = reflect101(x + dx, w);
                    double d = 0.0;
                    for (int c = 0; c < 3; ++c) {
                        const double diff = static_cast<double>(img.at(c, x, y)) - img.at(c, sx, sy);
                        d += diff * diff;
                    }
                    const double wgt =
                        spatial[static_cast<size_t>(dy + rad) * side + (dx + rad)] *
                        std::exp(-(d / 3.0) * inv_2r2);
                    for (int c = 0; c < 3; ++c) acc[c] += wgt * img.at(c, sx, sy);
                    wsum += wgt;
                }
            }
            for (int c = 0; c < 3; ++c)
                out.at(c, x, y) = clamp01(static_cast<float>(acc[c] / wsum));
        }
    return out;
}

// ---- deblocking -------------------------------------------------------------

// H.263-style boundary filter on the 8-pixel grid: steps that dominate the
// gradients just inside each block are folded back across four pixels. Real
// edges escape through the magnitude cap.
inline ImageF deblock_jpeg(const ImageF& img, double h, double gate_ratio, double edge_cap) {
    if (h <= 0.0) throw ParamOutOfRange("deblock: h must be positive");
    ImageF out = img;
    const int w = img.width, ht = img.height;
    for (int c = 0; c < 3; ++c) {
        for (int x = 8; x + 1 < w; x += 8) {
            if (x < 2) continue;
            for (int y = 0; y < ht; ++y) {
                const float step = out.at(c, x, y) - out.at(c, x - 1, y);
                const float act = 0.5f * (std::abs(out.at(c, x - 1, y) - out.at(c, x - 2, y)) +
                                          std::abs(out.at(c, x + 1, y) - out.at(c, x, y)));
                if (std::abs(step) > gate_ratio * (act + 1.0 / 255.0) && std::abs(step) < edge_cap) {
                    out.at(c, x - 1, y) += step * 0.25f;
                    out.at(c, x, y) -= step * 0.25f;
                    out.at(c, x - 2, y) += step * 0.125f;
                    out.at(c, x + 1, y) -= step * 0.125f;
                }
            }
        }
        for (int y = 8; y + 1 < ht; y += 8) {
            if (y < 2) continue;
            for (int x = 0; x < w; ++x) {
                const float step = out.at(c, x, y) - out.at(c, x, y - 1);
                const float act = 0.5f * (std::abs(out.at(c, x, y - 1) - out.at(c, x, y - 2)) +
                                          std::abs(out.at(c, x, y + 1) - out.at(c, x, y)));
                if (std::abs(step) > gate_ratio * (act + 1.0 / 255.0) && std::abs(step) < edge_cap) {
                    out.at(c, x, y - 1) += step * 0.25f;
                    out.at(c, x, y) -= step * 0.25f;
                    out.at(c, x, y - 2) += step * 0.125f;
                    out.at(c, x, y + 1) -= step * 0.125f;
                }
            }
        }
    }
    clamp_image(out);
    // mild plain NLM (no noise floor) to even out in-block ringing
    return nlm_denoise(out, h, 0.0);
}

// ---- rain removal -----------------------------------------------------------

inline Plane directional_median(const Plane& p, double angle_deg, int len) {
    if (len < 3) throw ParamOutOfRange("directional median: length must be >= 3");
    len |= 1;
    const int half = len / 2;
    const double rad = angle_deg * 3.14159265358979323846 / 180.0;
    const double dx = std::cos(rad), dy = std::sin(rad);
    Plane out(p.width, p.height);
    std::vector<float> buf(static_cast<size_t>(len));
    for (int y = 0; y < p.height; ++y)
        for (int x = 0; x < p.width; ++x) {
            for (int t = -half; t <= half; ++t) {
                const int sx = reflect101(static_cast<int>(std::lround(x + t * dx)), p.width);
                const int sy = reflect101(static_cast<int>(std::lround(y + t * dy)), p.height);
                buf[static_cast<size_t>(t + half)] = p.at(sx, sy);
            }
            std::nth_element(buf.begin(), buf.begin() + half, buf.end());
            out.at(x, y) = buf[static_cast<size_t>(half)];
        }
    return out;
}

inline Plane directional_rank(const Plane& p, double angle_deg, int len, bool take_max) {
    if (len < 3) throw ParamOutOfRange("directional rank: length must be >= 3");
    len |= 1;
    const int half = len / 2;
    const double rad = angle_deg * 3.14159265358979323846 / 180.0;
    const double dx = std::cos(rad), dy = std::sin(rad);
    Plane out(p.width, p.height);
    for (int y = 0; y < p.height; ++y)
        for (int x = 0; x < p.width; ++x) {
            float v = take_max ? -1.0f : 2.0f;
            for (int t = -half; t <= half; ++t) {
                const int sx = reflect101(static_cast<int>(std::lround(x + t * dx)), p.width);
                const int sy = reflect101(static_cast<int>(std::lround(y + t * dy)), p.height);
                v = take_max ? std::max(v, p.at(sx, sy)) : std::min(v, p.at(sx, sy));
            }
            out.at(x, y) = v;
        }
    return out;
}

// Streaks are coherent along their own direction while scene texture is not,
// so the median of the high-pass residual taken along the streak keeps the
// rain and drops everything else. Only the bright part is subtracted —
// streaks are an additive overlay.
inline ImageF remove_rain_median(const ImageF& img, double angle_deg, int len) {
    const Plane y = to_luma(img);
    const Plane med = median_filter(y, 2);
    Plane resid(y.width, y.height);
    for (size_t i = 0; i < y.v.size(); ++i) resid.v[i] = y.v[i] - med.v[i];
    const Plane streak = directional_median(resid, angle_deg, len);
    ImageF out = img;
    for (int c = 0; c < 3; ++c) {
        float* dst = out.plane(c);
        for (size_t i = 0; i < out.plane_size(); ++i)
            dst[i] = clamp01(dst[i] - std::max(streak.v[i], 0.0f));
    }
    return out;
}

// Grayscale opening per channel with a line element ACROSS the streaks: a
// one- or two-pixel-wide streak cannot contain the element and dies in the
// erosion, while anything wider in that direction survives.
inline ImageF remove_rain_opening(const ImageF& img, double angle_deg, int se_len) {
    const double cross = angle_deg + 90.0;
    ImageF out(img.width, img.height);
    for (int c = 0; c < 3; ++c) {
        const Plane ch = extract_plane(img, c);
        const Plane eroded = directional_rank(ch, cross, se_len, false);
        const Plane opened = directional_rank(eroded, cross, se_len, true);
        std::copy(opened.v.begin(), opened.v.end(), out.plane(c));
    }
    clamp_image(out);
    return out;
}

// ---- dehazing ---------------------------------------------------------------

inline ImageF dcp_dehaze(const ImageF& img, const ToolParams& prm) {
    const int w = img.width, ht = img.height;
    const int rad = 7; // 15x15 dark-channel window

    Plane mn(w, ht);
    for (size_t i = 0; i < img.plane_size(); ++i)
        mn.v[i] = std::min({img.plane(0)[i], img.plane(1)[i], img.plane(2)[i]});
    const Plane dark = min_filter(mn, rad);

    std::array<double, 3> air{};
    if (const auto a = param_opt(prm, "airlight")) {
        air = {*a, *a, *a};
    } else {
        // image color averaged over the haziest 0.1% (brightest dark-channel pixels)
        const size_t take = std::max<size_t>(1, dark.v.size() / 1000);
        std::vector<size_t> idx(dark.v.size());
        std::iota(idx.begin(), idx.end(), size_t{0});
        std::nth_element(idx.begin(), idx.begin() + static_cast<long>(take) - 1, idx.end(),
                         [&dark](size_t a, size_t b) { return dark.v[a] > dark.v[b]; });
        for (int c = 0; c < 3; ++c) {
            double s = 0.0;
            for (size_t k = 0; k < take; ++k) s += img.plane(c)[idx[k]];
            air[static_cast<size_t>(c)] = s / static_cast<double>(take);
        }
    }
    for (int c = 0; c < 3; ++c) {
        if (const auto a = param_opt(prm, c == 0 ? "airlight_r" : c == 1 ? "airlight_g" : "airlight_b"))
            air[static_cast<size_t>(c)] = *a;
        air[static_cast<size_t>(c)] = std::clamp(air[static_cast<size_t>(c)], 0.05, 1.0);
    }

    Plane t(w, ht);
    if (const auto tv = param_opt(prm, "t")) {
        if (*tv <= 0.0 || *tv > 1.0) throw ParamOutOfRange("dcp: t outside (0,1]");
        std::fill(t.v.begin(), t.v.end(), static_cast<float>(*tv));
    } else {
        Plane norm_min(w, ht);
        for (size_t i = 0; i < img.plane_size(); ++i) {
            double v = 2.0;
            for (int c = 0; c < 3; ++c)
                v = std::min(v, img.plane(c)[i] / air[static_cast<size_t>(c)]);
            norm_min.v[i] = static_cast<float>(v);
        }
        const Plane norm_dark = min_filter(norm_min, rad);
        for (size_t i = 0; i < t.v.size(); ++i)
            t.v[i] = static_cast<float>(std::clamp(1.0 - 0.95 * norm_dark.v[i], 0.0, 1.0));
        t = guided_filter(to_luma(img), t, 20, 1e-3);
    }

    ImageF out(w, ht);
    for (int c = 0; c < 3; ++c) {
        const float* src = img.plane(c);
        float* dst = out.plane(c);
        const double a = air[static_cast<size_t>(c)];
        for (size_t i = 0; i < img.plane_size(); ++i)
            dst[i] = clamp01(static_cast<float>((src[i] - a) / std::max<double>(t.v[i], 0.1) + a));
    }
    return out;
}

// ---- deconvolution ----------------------------------------------------------

// Forward spectra of the reflect-padded channels, reusable across a grid of
// kernel/NSR candidates so the grid pays one extra FFT per candidate.
struct WienerPlan {
    int w = 0, h = 0, pad = 0, fw = 0, fh = 0;
    std::array<ComplexGrid, 3> spec;
};

inline WienerPlan make_wiener_plan(const ImageF& img, int pad) {
    WienerPlan pl;
    pl.w = img.width;
    pl.h = img.height;
    pl.pad = pad;
    pl.fw = next_pow2(pl.w + 2 * pad);
    pl.fh = next_pow2(pl.h + 2 * pad);
    Plane padded(pl.fw, pl.fh);
    for (int c = 0; c < 3; ++c) {
        for (int y = 0; y < pl.fh; ++y) {
            const int sy = reflect101(y - pad, pl.h);
            for (int x = 0; x < pl.fw; ++x)
                padded.at(x, y) = img.at(c, reflect101(x - pad, pl.w), sy);
        }
        pl.spec[static_cast<size_t>(c)] = fft2d_real(padded, pl.fw, pl.fh);
    }
    return pl;
}

inline ImageF wiener_apply_otf(const WienerPlan& pl, const ComplexGrid& otf, double nsr) {
    ImageF out(pl.w, pl.h);
    ComplexGrid g(pl.fw, pl.fh);
    for (int c = 0; c < 3; ++c) {
        const ComplexGrid& f = pl.spec[static_cast<size_t>(c)];
        for (size_t i = 0; i < g.v.size(); ++i)
            g.v[i] = std::conj(otf.v[i]) * f.v[i] / (std::norm(otf.v[i]) + nsr);
        fft2d(g, true);
        for (int y = 0; y < pl.h; ++y)
            for (int x = 0; x < pl.w; ++x)
                out.at(c, x, y) = clamp01(static_cast<float>(g.at(x + pl.pad, y + pl.pad).real()));
    }
    return out;
}

inline ImageF wiener_apply(const WienerPlan& pl, const Kernel2D& k, double nsr) {
    if (nsr < 0.0) throw ParamOutOfRange("wiener: nsr must be nonnegative");
    return wiener_apply_otf(pl, psf_to_otf(k, pl.fw, pl.fh), nsr);
}

// The reflect pad band violates the circular blur model (blurring a reflection
// is not reflecting the blur for oriented kernels) and the mismatch gets
// amplified by ~1/nsr at the kernel's spectral nulls. Each refinement round
// rebuilds the pad band by re-blurring the current estimate — which the
// circular model does satisfy — keeps the observed interior, and deconvolves
// again. A delta kernel passes through unchanged, so the identity is intact.
inline ImageF wiener_refine(const WienerPlan& pl, const ComplexGrid& otf, const ImageF& obs,
                            ImageF est, double nsr, int rounds) {
    ComplexGrid g(pl.fw, pl.fh);
    for (int r = 0; r < rounds; ++r) {
        ImageF next(pl.w, pl.h);
        for (int c = 0; c < 3; ++c) {
            for (int y = 0; y < pl.fh; ++y) {
                const int sy = reflect101(y - pl.pad, pl.h);
                for (int x = 0; x < pl.fw; ++x)
                    g.at(x, y) = cplx(est.at(c, reflect101(x - pl.pad, pl.w), sy), 0.0);
            }
            fft2d(g, false);
            for (size_t i = 0; i < g.v.size(); ++i) g.v[i] *= otf.v[i];
            fft2d(g, true);
            for (int y = 0; y < pl.h; ++y)
                for (int x = 0; x < pl.w; ++x)
                    g.at(x + pl.pad, y + pl.pad) = cplx(obs.at(c, x, y), 0.0);
            for (cplx& v : g.v) v = cplx(v.real(), 0.0);
            fft2d(g, false);
            for (size_t i = 0; i < g.v.size(); ++i)
                g.v[i] = std::conj(otf.v[i]) * g.v[i] / (std::norm(otf.v[i]) + nsr);
            fft2d(g, true);
            for (int y = 0; y < pl.h; ++y)
                for (int x = 0; x < pl.w; ++x)
                    next.at(c, x, y) = clamp01(static_cast<float>(g.at(x + pl.pad, y + pl.pad).real()));
        }
        est = std::move(next);
    }
    return est;
}

inline constexpr int kWienerRefineRounds = 3;

inline ImageF wiener_deconvolve(const ImageF& img, const Kernel2D& k, double nsr,
                                int rounds = kWienerRefineRounds) {
    if (nsr < 0.0) throw ParamOutOfRange("wiener: nsr must be nonnegative");
    const int pad = std::max({8, k.width, k.height});
    const WienerPlan pl = make_wiener_plan(img, pad);
    const ComplexGrid otf = psf_to_otf(k, pl.fw, pl.fh);
    return wiener_refine(pl, otf, img, wiener_apply_otf(pl, otf, nsr), nsr, rounds);
}

inline constexpr std::array<double, 3> kNsrGrid = {0.002, 0.01, 0.05};

// Best (kernel, nsr) by the quality probe; midpoints when there is none.
// Candidates are ranked after a single refinement round — unrefined renders at
// the low end of the NSR grid are dominated by pad-band ringing and would be
// ranked on that artifact instead of the deblur — and the winner alone gets
// the full budget.
inline ImageF wiener_best(const ImageF& img, const std::vector<Kernel2D>& kernels,
                          const std::vector<double>& nsrs, const ToolContext& ctx) {
    int pad = 8;
    for (const Kernel2D& k : kernels) pad = std::max({pad, k.width, k.height});
    if (kernels.size() == 1 && nsrs.size() == 1)
        return wiener_deconvolve(img, kernels[0], nsrs[0]);
    if (ctx.calibration == nullptr || !ctx.calibration->fitted())
        return wiener_deconvolve(img, kernels[kernels.size() / 2], nsrs[nsrs.size() / 2]);
    const WienerPlan plan = make_wiener_plan(img, pad);
    size_t best_k = 0;
    double best_nsr = nsrs[0];
    double best_q = -1e30;
    for (size_t ki = 0; ki < kernels.size(); ++ki) {
        const ComplexGrid otf = psf_to_otf(kernels[ki], plan.fw, plan.fh);
        for (const double nsr : nsrs) {
            ImageF cand = wiener_refine(plan, otf, img, wiener_apply_otf(plan, otf, nsr), nsr, 1);
            const double q = *probe_quality(cand, ctx);
            if (q > best_q) {
                best_q = q;
                best_k = ki;
                best_nsr = nsr;
            }
        }
    }
    const ComplexGrid otf = psf_to_otf(kernels[best_k], plan.fw, plan.fh);
    return wiener_refine(plan, otf, img, wiener_apply_otf(plan, otf, best_nsr), best_nsr,
                         kWienerRefineRounds);
}

// ---- low-light enhancement --------------------------------------------------

// Gamma chosen so the mean luma lands on the target, then a 2-98 percentile
// stretch with one affine map for all channels (hue-preserving).
inline ImageF enhance_gamma(const ImageF& img, double target) {
    if (target <= 0.0 || target >= 1.0) throw ParamOutOfRange("agamma: target outside (0,1)");
    ImageF out = img;
    const double m = plane_mean(to_luma(img));
    if (m < target) {
        const double g = std::log(target) / std::log(std::max(m, 1e-3));
        for (float& s : out.data) s = static_cast<float>(std::pow(std::max(s, 0.0f), g));
    }
    const Plane y = to_luma(out);
    const double lo = percentile_of_plane(y, 2.0);
    const double hi = percentile_of_plane(y, 98.0);
    if (hi - lo > 1e-4) {
        const double scale = 1.0 / (hi - lo);
        for (float& s : out.data) s = static_cast<float>((s - lo) * scale);
    }
    clamp_image(out);
    return out;
}

// Tile histogram equalization with clipping; channels follow the luma ratio.
inline ImageF enhance_clahe(const ImageF& img, int tiles, double clip) {
    if (tiles < 2 || tiles > 64) throw ParamOutOfRange("tile_heq: tiles outside [2,64]");
    if (clip < 1.0) throw ParamOutOfRange("tile_heq: clip below 1");
    const int w = img.width, ht = img.height;
    const int bins = 256;
    const int tw = (w + tiles - 1) / tiles, th = (ht + tiles - 1) / tiles;

    std::vector<std::vector<double>> maps(static_cast<size_t>(tiles) * tiles,
                                          std::vector<double>(static_cast<size_t>(bins)));
    const Plane y = to_luma(img);
    for (int tj = 0; tj < tiles; ++tj)
        for (int ti = 0; ti < tiles; ++ti) {
            auto& map = maps[static_cast<size_t>(tj) * tiles + ti];
            const int x0 = ti * tw, y0 = tj * th;
            const int x1 = std::min(x0 + tw, w), y1 = std::min(y0 + th, ht);
            std::vector<double> hist(static_cast<size_t>(bins), 0.0);
            double cnt = 0.0;
            for (int yy = y0; yy < y1; ++yy)
                for (int xx = x0; xx < x1; ++xx) {
                    const int b = std::min(bins - 1, static_cast<int>(y.at(xx, yy) * bins));
                    hist[static_cast<size_t>(std::max(b, 0))] += 1.0;
                    cnt += 1.0;
                }
            if (cnt < 1.0) { // degenerate tile off the image edge
                for (int b = 0; b < bins; ++b)
                    map[static_cast<size_t>(b)] = (b + 0.5) / bins;
                continue;
            }
            const double lim = std::max(1.0, clip * cnt / bins);
            double excess = 0.0;
            for (double& hb : hist)
                if (hb > lim) {
                    excess += hb - lim;
                    hb = lim;
                }
            for (double& hb : hist) hb += excess / bins;
            double cdf = 0.0;
            for (int b = 0; b < bins; ++b) {
                cdf += hist[static_cast<size_t>(b)];
                map[static_cast<size_t>(b)] = cdf / cnt;
            }
        }

    ImageF out(w, ht);
    for (int yy = 0; yy < ht; ++yy) {
        const double gy = (yy + 0.5) / th - 0.5;
        const int j0 = std::clamp(static_cast<int>(std::floor(gy)), 0, tiles - 1);
        const int j1 = std::min(j0 + 1, tiles - 1);
        const double fy = std::clamp(gy - j0, 0.0, 1.0);
        for (int xx = 0; xx < w; ++xx) {
            const double gx = (xx + 0.5) / tw - 0.5;
            const int i0 = std::clamp(static_cast<int>(std::floor(gx)), 0, tiles - 1);
            const int i1 = std::min(i0 + 1, tiles - 1);
            const double fx = std::clamp(gx - i0, 0.0, 1.0);
            const float l = y.at(xx, yy);
            const int b = std::clamp(static_cast<int>(l * bins), 0, bins - 1);
            const double m00 = maps[static_cast<size_t>(j0) * tiles + i0][static_cast<size_t>(b)];
            const double m10 = maps[static_cast<size_t>(j0) * tiles + i1][static_cast<size_t>(b)];
            const double m01 = maps[static_cast<size_t>(j1) * tiles + i0][static_cast<size_t>(b)];
            const double m11 = maps[static_cast<size_t>(j1) * tiles + i1][static_cast<size_t>(b)];
            const double lp = (m00 * (1 - fx) + m10 * fx) * (1 - fy) + (m01 * (1 - fx) + m11 * fx) * fy;
            const double ratio = std::min(lp / std::max<double>(l, 1e-3), 12.0);
            for (int c = 0; c < 3; ++c)
                out.at(c, xx, yy) = clamp01(static_cast<float>(img.at(c, xx, yy) * ratio));
        }
    }
    return out;
}

// ---- detail restoration -----------------------------------------------------

// Iterative back-projection against the box-down / bicubic-up forward model,
// then an unsharp pass to recover edge contrast the projection cannot.
inline ImageF super_resolve_ibp(const ImageF& img, int scale, int iters, double amount,
                                double radius) {
    if (scale < 1 || scale > 8) throw ParamOutOfRange("ibp: scale outside [1,8]");
    if (iters < 1 || iters > 50) throw ParamOutOfRange("ibp: iterations outside [1,50]");
    if (radius <= 0.0) throw ParamOutOfRange("ibp: radius must be positive");
    const int w = img.width, ht = img.height;
    const int dw = std::max(1, static_cast<int>(std::lround(w / static_cast<double>(scale))));
    const int dh = std::max(1, static_cast<int>(std::lround(ht / static_cast<double>(scale))));

    ImageF j = img;
    for (int it = 0; it < iters; ++it) {
        const ImageF sim = resize(resize(j, dw, dh, ResizeFilter::Box), w, ht, ResizeFilter::Bicubic);
        for (size_t i = 0; i < j.data.size(); ++i) j.data[i] += img.data[i] - sim.data[i];
        clamp_image(j);
    }

    const int ksz = 2 * static_cast<int>(std::ceil(2.5 * radius)) + 1;
    const auto k1 = gaussian_kernel1d(ksz, radius);
    ImageF out(w, ht);
    for (int c = 0; c < 3; ++c) {
        const Plane ch = extract_plane(j, c);
        const Plane blur = convolve_sep(ch, k1, k1);
        float* dst = out.plane(c);
        for (size_t i = 0; i < out.plane_size(); ++i)
            dst[i] = clamp01(static_cast<float>(ch.v[i] + amount * (ch.v[i] - blur.v[i])));
    }
    return out;
}

inline double resolve_streak_angle(const ImageF& img, const ToolParams& prm,
                                   const ToolContext& ctx) {
    if (const auto a = param_opt(prm, "angle_deg")) return *a;
    if (ctx.streak_angle_deg) return *ctx.streak_angle_deg;
    return detect_rain(img).angle_deg;
}

inline int resolve_sr_scale(const ImageF& img, const ToolParams& prm, const ToolContext& ctx) {
    if (const auto s = param_opt(prm, "scale")) {
        const int v = static_cast<int>(std::lround(*s));
        if (v < 1 || v > 8) throw ParamOutOfRange("ibp: scale outside [1,8]");
        return v;
    }
    const int s = ctx.lr_scale ? *ctx.lr_scale : detect_low_res(img).scale;
    return std::clamp(s, 2, 4);
}

} // namespace restdetail

// ---- blind motion-kernel estimation ------------------------------------------

struct MotionKernelEstimate {
    double length = 13.0;
    double angle_deg = 0.0;
    bool from_grid = false;
};

// Angle from the structure tensor of the high-pass residual (the dominant
// gradients run across the smear); length from the power-spectrum nulls along
// that direction — a length-L line kernel zeroes the spectrum in stripes at
// multiples of 1/L cycles per pixel, and matching the whole stripe pattern
// against candidate lengths reads the first zero without being faked out by
// texture dips. When either cue is unreliable the estimate falls back to a
// candidate grid scored by deconvolution quality.
inline MotionKernelEstimate estimate_motion_kernel(const ImageF& img, const ToolContext& ctx = {}) {
    const Plane y = to_luma(img);
    const Plane med = median_filter(y, 2);
    Plane resid(y.width, y.height);
    for (size_t i = 0; i < y.v.size(); ++i) resid.v[i] = y.v[i] - med.v[i];

    const GradientField g = sobel(resid);
    double jxx = 0.0, jxy = 0.0, jyy = 0.0;
    for (size_t i = 0; i < resid.v.size(); ++i) {
        const double gx = g.gx.v[i], gy = g.gy.v[i];
        jxx += gx * gx;
        jxy += gx * gy;
        jyy += gy * gy;
    }
    const double half_tr = 0.5 * (jxx + jyy);
    const double disc = std::sqrt(std::max(0.0, 0.25 * (jxx - jyy) * (jxx - jyy) + jxy * jxy));
    const double anisotropy = (half_tr + disc) / std::max(half_tr - disc, 1e-12);
    const double grad_dir = 0.5 * std::atan2(2.0 * jxy, jxx - jyy);
    const double angle =
        perdetail::fold180(grad_dir * 180.0 / 3.14159265358979323846 + 90.0);
    const bool angle_ok = anisotropy >= DetectorThresholds{}.blur_anisotropy;

    // Pristine images top out near 0.19 on this match and real smears start
    // around 0.29, so the floor separates them cleanly.
    constexpr double kMatchFloor = 0.25;
    if (angle_ok) {
        const perdetail::MotionSupportMatch m =
            perdetail::motion_support_match(img, angle, {-4.0, -2.0, 0.0, 2.0, 4.0});
        if (m.corr >= kMatchFloor) return {m.length, m.angle_deg, false};
    }

    MotionKernelEstimate est{13.0, angle_ok ? angle : 0.0, true};
    if (ctx.calibration == nullptr || !ctx.calibration->fitted()) return est;
    const restdetail::WienerPlan plan = restdetail::make_wiener_plan(img, 24);
    double best_q = -1e30;
    for (const double len : {9.0, 13.0, 17.0, 21.0})
        for (const double ang : {0.0, 45.0, 90.0, 135.0}) {
            const ImageF cand = restdetail::wiener_apply(plan, motion_kernel(len, ang), 0.01);
            const double q = *restdetail::probe_quality(cand, ctx);
            if (q > best_q) {
                best_q = q;
                est = {len, ang, true};
            }
        }
    return est;
}

// ---- tool dispatch ------------------------------------------------------------

inline ImageF apply_tool(const ImageF& img, const ToolSpec& spec, const ToolContext& ctx = {}) {
    using restdetail::param_opt;
    using restdetail::param_or;
    const auto& prm = spec.params;
    const std::string& id = spec.tool_id;

    const auto guard = [&](std::initializer_list<TaskLabel> allowed) {
        for (const TaskLabel t : allowed)
            if (t == spec.task) return;
        throw UnknownTool("tool '" + id + "' is not registered for task " +
                          task_label_name(spec.task));
    };

    if (id == "nlm") {
        guard({TaskLabel::DN_L, TaskLabel::DN_M, TaskLabel::DN_H});
        const double sigma = param_or(prm, "sigma", restdetail::noise_preset_sigma(spec.task));
        if (sigma <= 0.0 || sigma > 1.0) throw ParamOutOfRange("nlm: sigma outside (0,1]");
        return restdetail::nlm_denoise(img, param_or(prm, "h", 0.7 * sigma), sigma);
    }
    if (id == "bilateral") {
        guard({TaskLabel::DN_L, TaskLabel::DN_M, TaskLabel::DN_H});
        const double sigma = param_or(prm, "sigma", restdetail::noise_preset_sigma(spec.task));
        if (sigma <= 0.0 || sigma > 1.0) throw ParamOutOfRange("bilateral: sigma outside (0,1]");
        return restdetail::bilateral_denoise(img, param_or(prm, "sigma_s", 3.0),
                                             param_or(prm, "sigma_r", 2.0 * sigma));
    }
    if (id == "deblock") {
        guard({TaskLabel::DJ});
        return restdetail::deblock_jpeg(img, param_or(prm, "h", 4.0 / 255.0),
                                        param_or(prm, "gate_ratio", 2.0),
                                        param_or(prm, "edge_cap", 0.15));
    }
    if (id == "dirmedian") {
        guard({TaskLabel::DR});
        const int len = static_cast<int>(std::lround(param_or(prm, "length", 9.0)));
        return restdetail::remove_rain_median(
            img, restdetail::resolve_streak_angle(img, prm, ctx), len);
    }
    if (id == "morphopen") {
        guard({TaskLabel::DR});
        const int len = static_cast<int>(std::lround(param_or(prm, "se_length", 7.0)));
        return restdetail::remove_rain_opening(
            img, restdetail::resolve_streak_angle(img, prm, ctx), len);
    }
    if (id == "dcp") {
        guard({TaskLabel::DH});
        return restdetail::dcp_dehaze(img, prm);
    }
    if (id == "wiener_motion") {
        guard({TaskLabel::MDB});
        Kernel2D k;
        const auto len = param_opt(prm, "length");
        const auto ang = param_opt(prm, "angle_deg");
        if (len && ang) {
            if (*len < 1.0 || *len > 64.0) throw ParamOutOfRange("wiener_motion: length outside [1,64]");
            k = motion_kernel(*len, *ang);
        } else {
            const MotionKernelEstimate est = estimate_motion_kernel(img, ctx);
            k = motion_kernel(est.length, est.angle_deg);
        }
        std::vector<double> nsrs(restdetail::kNsrGrid.begin(), restdetail::kNsrGrid.end());
        if (const auto nsr = param_opt(prm, "nsr")) nsrs = {*nsr};
        return restdetail::wiener_best(img, {k}, nsrs, ctx);
    }
    if (id == "wiener_disk") {
        guard({TaskLabel::DDB});
        std::vector<double> radii;
        if (const auto r = param_opt(prm, "radius")) {
            if (*r < 1.0 || *r > 16.0) throw ParamOutOfRange("wiener_disk: radius outside [1,16]");
            radii = {*r};
        } else {
            // narrow the grid to the radii whose zero pattern the spectrum
            // actually backs — the no-reference probe cannot tell ringing from
            // sharpness, so it only gets to resolve the smoothing strength
            const auto sc = perdetail::disk_radius_scores(img);
            size_t b0 = 0;
            for (size_t i = 1; i < sc.size(); ++i)
                if (sc[i] > sc[b0]) b0 = i;
            size_t b1 = b0 == 0 ? 1 : 0;
            for (size_t i = 0; i < sc.size(); ++i)
                if (i != b0 && sc[i] > sc[b1]) b1 = i;
            radii = {perdetail::kDiskRadii[b0], perdetail::kDiskRadii[b1]};
            if (ctx.calibration == nullptr || !ctx.calibration->fitted())
                radii = {perdetail::kDiskRadii[b0]};  // nothing to rank the pair with
        }
        std::vector<Kernel2D> kernels;
        for (const double r : radii) kernels.push_back(disk_kernel(r));
        std::vector<double> nsrs(restdetail::kNsrGrid.begin(), restdetail::kNsrGrid.end());
        if (const auto nsr = param_opt(prm, "nsr")) nsrs = {*nsr};
        return restdetail::wiener_best(img, kernels, nsrs, ctx);
    }
    if (id == "agamma") {
        guard({TaskLabel::LE});
        return restdetail::enhance_gamma(img, param_or(prm, "target", 0.45));
    }
    if (id == "tile_heq") {
        guard({TaskLabel::LE});
        return restdetail::enhance_clahe(img, static_cast<int>(std::lround(param_or(prm, "tiles", 8.0))),
                                         param_or(prm, "clip", 2.0));
    }
    if (id == "ibp") {
        guard({TaskLabel::SR});
        return restdetail::super_resolve_ibp(
            img, restdetail::resolve_sr_scale(img, prm, ctx),
            static_cast<int>(std::lround(param_or(prm, "iters", 5.0))),
            param_or(prm, "amount", 0.6), param_or(prm, "radius", 1.5));
    }
    throw UnknownTool("unknown tool id: " + id);
}

// ---- registry -----------------------------------------------------------------

struct ToolRegistry {
    std::map<TaskLabel, std::vector<ToolSpec>> tools;

    const std::vector<ToolSpec>& for_task(TaskLabel t) const {
        const auto it = tools.find(t);
        if (it == tools.end() || it->second.empty())
            throw UnknownTool(std::string("no tools registered for task ") + task_label_name(t));
        return it->second;
    }
};

inline ToolRegistry default_registry() {
    ToolRegistry reg;
    const auto add = [&reg](TaskLabel t, std::string id, ToolParams prm = {}) {
        reg.tools[t].push_back({t, std::move(id), std::move(prm)});
    };
    add(TaskLabel::DN_L, "nlm", {{"sigma", 10.0 / 255.0}});
    add(TaskLabel::DN_L, "bilateral", {{"sigma", 10.0 / 255.0}, {"sigma_s", 3.0}});
    add(TaskLabel::DN_M, "nlm", {{"sigma", 25.0 / 255.0}});
    add(TaskLabel::DN_M, "bilateral", {{"sigma", 25.0 / 255.0}, {"sigma_s", 3.0}});
    add(TaskLabel::DN_H, "nlm", {{"sigma", 50.0 / 255.0}});
    add(TaskLabel::DN_H, "bilateral", {{"sigma", 50.0 / 255.0}, {"sigma_s", 3.0}});
    add(TaskLabel::DJ, "deblock", {{"h", 4.0 / 255.0}});
    add(TaskLabel::DR, "dirmedian", {{"length", 9.0}});
    add(TaskLabel::DR, "morphopen", {{"se_length", 7.0}});
    add(TaskLabel::DH, "dcp");
    add(TaskLabel::MDB, "wiener_motion");
    add(TaskLabel::DDB, "wiener_disk");
    add(TaskLabel::LE, "agamma");
    add(TaskLabel::LE, "tile_heq", {{"tiles", 8.0}, {"clip", 2.0}});
    add(TaskLabel::SR, "ibp", {{"iters", 5.0}, {"amount", 0.6}, {"radius", 1.5}});
    return reg;
}

inline nlohmann::json registry_to_json(const ToolRegistry& reg) {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [task, list] : reg.tools) {
        nlohmann::json arr = nlohmann::json::array();
        for (const ToolSpec& s : list) {
            nlohmann::json entry = {{"tool", s.tool_id}, {"params", nlohmann::json::object()}};
            for (const auto& [k, v] : s.params) entry["params"][k] = v;
            arr.push_back(std::move(entry));
        }
        j[task_label_name(task)] = std::move(arr);
    }
    return j;
}

inline ToolRegistry registry_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw ConfigError("registry: expected an object keyed by task label");
    ToolRegistry reg;
    for (const auto& [key, val] : j.items()) {
        const TaskLabel task = task_label_from_string(key);
        if (!val.is_array()) throw ConfigError("registry: tools for " + key + " must be an array");
        for (const auto& e : val) {
            if (!e.is_object() || !e.contains("tool") || !e["tool"].is_string())
                throw ConfigError("registry: every entry needs a \"tool\" string");
            ToolSpec s;
            s.task = task;
            s.tool_id = e["tool"].get<std::string>();
            if (e.contains("params")) {
                if (!e["params"].is_object())
                    throw ConfigError("registry: params must be an object");
                for (const auto& [pk, pv] : e["params"].items()) {
                    if (!pv.is_number())
                        throw ConfigError("registry: param " + pk + " must be a number");
                    s.params[pk] = pv.get<double>();
                }
            }
            reg.tools[task].push_back(std::move(s));
        }
    }
    return reg;
}

inline void validate_registry(const ToolRegistry& reg) {
    for (size_t i = 0; i < kTaskLabelNames.size(); ++i) {
        const auto it = reg.tools.find(static_cast<TaskLabel>(i));
        if (it == reg.tools.end() || it->second.empty())
            throw ConfigError(std::string("registry: no tools for task ") + kTaskLabelNames[i]);
    }
}

} // namespace qagent
