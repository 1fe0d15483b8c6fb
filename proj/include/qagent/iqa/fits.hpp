#pragma once

#include <array>
#include <cmath>
#include <vector>

#include "qagent/error.hpp"

// Moment-matching fits of the (asymmetric) generalized Gaussian families to
// MSCN samples. Shape parameters are recovered by inverting the moment-ratio
// function over a precomputed table.

namespace qagent {

struct GgdFit {
    double alpha;
    double sigma_sq;
};

struct AggdFit {
    double alpha;
    double sigma_l_sq;
    double sigma_r_sq;
    double mean;
};

namespace fitdetail {

// rho(alpha) = Gamma(2/a)^2 / (Gamma(1/a) * Gamma(3/a)), monotone in alpha.
struct RhoTable {
    std::vector<double> gammas;
    std::vector<double> rhos;

    RhoTable() {
        for (double g = 0.2; g <= 10.0 + 1e-9; g += 0.001) {
            gammas.push_back(g);
            const double num = std::tgamma(2.0 / g);
            rhos.push_back(num * num / (std::tgamma(1.0 / g) * std::tgamma(3.0 / g)));
        }
    }

    double invert(double rho) const {
        // rhos is increasing in gamma; clamp then binary search
        if (rho <= rhos.front()) return gammas.front();
        if (rho >= rhos.back()) return gammas.back();
        size_t lo = 0, hi = rhos.size() - 1;
        while (hi - lo > 1) {
            const size_t mid = (lo + hi) / 2;
            (rhos[mid] < rho ? lo : hi) = mid;
        }
        // linear interpolation between bracketing entries
        const double t = (rho - rhos[lo]) / (rhos[hi] - rhos[lo]);
        return gammas[lo] + t * (gammas[hi] - gammas[lo]);
    }
};

inline const RhoTable& rho_table() {
    static const RhoTable table;
    return table;
}

} // namespace fitdetail

template <typename It>
GgdFit ggd_fit(It begin, It end) {
    double e_abs = 0.0, e_sq = 0.0;
    size_t n = 0;
    for (It it = begin; it != end; ++it) {
        const double x = static_cast<double>(*it);
        e_abs += std::abs(x);
        e_sq += x * x;
        ++n;
    }
    if (n == 0) throw EmptyInput("ggd_fit: no samples");
    e_abs /= static_cast<double>(n);
    e_sq /= static_cast<double>(n);
    if (e_sq < 1e-12) return {2.0, 0.0}; // degenerate flat field
    const double rho = e_abs * e_abs / e_sq;
    return {fitdetail::rho_table().invert(rho), e_sq};
}

template <typename It>
AggdFit aggd_fit(It begin, It end) {
    double sum_sq_l = 0.0, sum_sq_r = 0.0, e_abs = 0.0, e_sq = 0.0;
    size_t n = 0, n_l = 0, n_r = 0;
    for (It it = begin; it != end; ++it) {
        const double x = static_cast<double>(*it);
        if (x < 0.0) {
            sum_sq_l += x * x;
            ++n_l;
        } else {
            sum_sq_r += x * x;
            ++n_r;
        }
        e_abs += std::abs(x);
        e_sq += x * x;
        ++n;
    }
    if (n == 0) throw EmptyInput("aggd_fit: no samples");
    if (e_sq / static_cast<double>(n) < 1e-12) return {2.0, 0.0, 0.0, 0.0};

    const double sigma_l = n_l ? std::sqrt(sum_sq_l / static_cast<double>(n_l)) : 1e-9;
    const double sigma_r = n_r ? std::sqrt(sum_sq_r / static_cast<double>(n_r)) : 1e-9;
    const double gamma_hat = sigma_l / std::max(sigma_r, 1e-12);
    const double r_hat = (e_abs / n) * (e_abs / n) / (e_sq / n);
    const double g2 = gamma_hat * gamma_hat;
    const double r_big = r_hat * (gamma_hat * g2 + 1.0) * (gamma_hat + 1.0) /
                         ((g2 + 1.0) * (g2 + 1.0));
    const double alpha = fitdetail::rho_table().invert(r_big);

    const double gr = std::tgamma(2.0 / alpha) / std::tgamma(1.0 / alpha);
    const double konst = std::sqrt(std::tgamma(1.0 / alpha) / std::tgamma(3.0 / alpha));
    const double mean = (sigma_r - sigma_l) * konst * gr;
    return {alpha, sigma_l * sigma_l, sigma_r * sigma_r, mean};
}

} // namespace qagent
