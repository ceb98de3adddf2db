#pragma once

#include "gsfix/image.hpp"

#include <array>
#include <cmath>
#include <vector>

namespace gsfix {

inline constexpr double kPsnrCap = 100.0;
inline constexpr double kSsimC1 = 0.01 * 0.01;
inline constexpr double kSsimC2 = 0.03 * 0.03;
inline constexpr int kSsimWindow = 11;
inline constexpr double kSsimSigma = 1.5;

// Mean absolute difference over all pixels and channels. If `grad` is given it
// receives d(loss)/d(a).
inline double l1_loss(const Image &a, const Image &b, Image *grad = nullptr) {
    require_same_shape(a, b, "l1_loss");
    if (grad) {
        *grad = Image(a.width, a.height, a.channels);
    }
    if (a.empty()) {
        return 0.0;
    }
    const double inv_n = 1.0 / static_cast<double>(a.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a.data[i] - b.data[i];
        acc += std::abs(d);
        if (grad) {
            grad->data[i] = d > 0 ? inv_n : (d < 0 ? -inv_n : 0.0);
        }
    }
    return acc * inv_n;
}

inline double mse(const Image &a, const Image &b) {
    require_same_shape(a, b, "mse");
    if (a.empty()) {
        return 0.0;
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a.data[i] - b.data[i];
        acc += d * d;
    }
    return acc / static_cast<double>(a.size());
}

// 10 log10(1 / MSE) on unit range, capped at 100 dB when MSE < 1e-10.
inline double psnr_from_mse(double m) {
    if (m < 1e-10) {
        return kPsnrCap;
    }
    return 10.0 * std::log10(1.0 / m);
}

inline double psnr(const Image &a, const Image &b) { return psnr_from_mse(mse(a, b)); }

namespace detail {

inline const std::array<double, kSsimWindow> &ssim_kernel() {
    static const std::array<double, kSsimWindow> k = [] {
        std::array<double, kSsimWindow> w{};
        double sum = 0.0;
        for (int i = 0; i < kSsimWindow; ++i) {
            const double x = i - kSsimWindow / 2;
            w[i] = std::exp(-x * x / (2.0 * kSsimSigma * kSsimSigma));
            sum += w[i];
        }
        for (double &v : w) {
            v /= sum;
        }
        return w;
    }();
    return k;
}

// Mirror index without repeating the edge sample (..., 2, 1, 0, 1, 2, ...).
inline int reflect_index(int i, int n) {
    if (n == 1) {
        return 0;
    }
    const int period = 2 * (n - 1);
    i %= period;
    if (i < 0) {
        i += period;
    }
    return i < n ? i : period - i;
}

// Separable Gaussian blur of one plane with reflect padding.
inline std::vector<double> blur(const std::vector<double> &in, int w, int h) {
    const auto &k = ssim_kernel();
    constexpr int r = kSsimWindow / 2;
    std::vector<double> tmp(in.size(), 0.0), out(in.size(), 0.0);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double acc = 0.0;
            for (int j = 0; j < kSsimWindow; ++j) {
                acc += k[j] * in[static_cast<std::size_t>(y) * w + reflect_index(x + j - r, w)];
            }
            tmp[static_cast<std::size_t>(y) * w + x] = acc;
        }
    }
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double acc = 0.0;
            for (int j = 0; j < kSsimWindow; ++j) {
                acc += k[j] * tmp[static_cast<std::size_t>(reflect_index(y + j - r, h)) * w + x];
            }
            out[static_cast<std::size_t>(y) * w + x] = acc;
        }
    }
    return out;
}

// Adjoint of blur(): scatters each output gradient back to its taps.
inline std::vector<double> blur_adjoint(const std::vector<double> &g_out, int w, int h) {
    const auto &k = ssim_kernel();
    constexpr int r = kSsimWindow / 2;
    std::vector<double> g_tmp(g_out.size(), 0.0), g_in(g_out.size(), 0.0);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const double g = g_out[static_cast<std::size_t>(y) * w + x];
            for (int j = 0; j < kSsimWindow; ++j) {
                g_tmp[static_cast<std::size_t>(reflect_index(y + j - r, h)) * w + x] += k[j] * g;
            }
        }
    }
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const double g = g_tmp[static_cast<std::size_t>(y) * w + x];
            for (int j = 0; j < kSsimWindow; ++j) {
                g_in[static_cast<std::size_t>(y) * w + reflect_index(x + j - r, w)] += k[j] * g;
            }
        }
    }
    return g_in;
}

inline std::vector<double> plane(const Image &img, int c) {
    std::vector<double> p(static_cast<std::size_t>(img.width) * img.height);
    for (std::size_t i = 0; i < p.size(); ++i) {
        p[i] = img.data[i * img.channels + c];
    }
    return p;
}

} // namespace detail

// Mean windowed SSIM (11x11 Gaussian, sigma 1.5, reflect padding) over every
// pixel and channel. If `grad` is given it receives d(ssim)/d(a).
inline double ssim(const Image &a, const Image &b, Image *grad = nullptr) {
    require_same_shape(a, b, "ssim");
    if (grad) {
        *grad = Image(a.width, a.height, a.channels);
    }
    if (a.empty()) {
        return 1.0;
    }
    const int w = a.width, h = a.height;
    const std::size_t n_px = static_cast<std::size_t>(w) * h;
    const double inv_n = 1.0 / static_cast<double>(a.size());
    double total = 0.0;
    for (int c = 0; c < a.channels; ++c) {
        const std::vector<double> pa = detail::plane(a, c);
        const std::vector<double> pb = detail::plane(b, c);
        std::vector<double> aa(n_px), bb(n_px), ab(n_px);
        for (std::size_t i = 0; i < n_px; ++i) {
            aa[i] = pa[i] * pa[i];
            bb[i] = pb[i] * pb[i];
            ab[i] = pa[i] * pb[i];
        }
        const std::vector<double> mu_a = detail::blur(pa, w, h);
        const std::vector<double> mu_b = detail::blur(pb, w, h);
        const std::vector<double> e_aa = detail::blur(aa, w, h);
        const std::vector<double> e_bb = detail::blur(bb, w, h);
        const std::vector<double> e_ab = detail::blur(ab, w, h);
        std::vector<double> d_mu(grad ? n_px : 0), d_aa(grad ? n_px : 0), d_ab(grad ? n_px : 0);
        for (std::size_t i = 0; i < n_px; ++i) {
            const double ma = mu_a[i], mb = mu_b[i];
            const double var_a = e_aa[i] - ma * ma;
            const double var_b = e_bb[i] - mb * mb;
            const double cov = e_ab[i] - ma * mb;
            const double a1 = 2.0 * ma * mb + kSsimC1;
            const double a2 = 2.0 * cov + kSsimC2;
            const double b1 = ma * ma + mb * mb + kSsimC1;
            const double b2 = var_a + var_b + kSsimC2;
            const double s = (a1 * a2) / (b1 * b2);
            total += s;
            if (grad) {
                const double ds_dmu = (2.0 * mb * a2) / (b1 * b2) - s * 2.0 * ma / b1;
                const double ds_dvar = -s / b2;
                const double ds_dcov = 2.0 * a1 / (b1 * b2);
                // Expressed in the blurred moments E[a], E[a^2], E[ab].
                d_mu[i] = inv_n * (ds_dmu - 2.0 * ma * ds_dvar - mb * ds_dcov);
                d_aa[i] = inv_n * ds_dvar;
                d_ab[i] = inv_n * ds_dcov;
            }
        }
        if (grad) {
            const std::vector<double> g_mu = detail::blur_adjoint(d_mu, w, h);
            const std::vector<double> g_aa = detail::blur_adjoint(d_aa, w, h);
            const std::vector<double> g_ab = detail::blur_adjoint(d_ab, w, h);
            for (std::size_t i = 0; i < n_px; ++i) {
                grad->data[i * a.channels + c] = g_mu[i] + 2.0 * pa[i] * g_aa[i] + pb[i] * g_ab[i];
            }
        }
    }
    return total * inv_n;
}

} // namespace gsfix
