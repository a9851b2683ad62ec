#ifndef EBSDCS_METRICS_HPP
#define EBSDCS_METRICS_HPP

#include <cmath>
#include <cstddef>
#include <limits>
#include <vector>

#include "ebsdcs/errors.hpp"
#include "ebsdcs/map_image.hpp"

namespace ebsdcs {

struct SsimParams {
    std::size_t window = 11;
    double sigma = 1.5;
    double k1 = 0.01;
    double k2 = 0.03;
    double dynamic_range = 1.0;

    void validate() const {
        if (window == 0 || window % 2 == 0) throw DomainError("SSIM window must be odd");
        if (!(sigma > 0.0 && k1 > 0.0 && k2 > 0.0 && dynamic_range > 0.0))
            throw DomainError("SSIM parameters must be positive");
    }

    /// Normalized 1-D Gaussian taps; the 2-D window is their outer product.
    std::vector<double> taps() const {
        std::vector<double> w(window);
        const double half = static_cast<double>(window / 2);
        double sum = 0.0;
        for (std::size_t i = 0; i < window; ++i) {
            const double x = static_cast<double>(i) - half;
            w[i] = std::exp(-x * x / (2.0 * sigma * sigma));
            sum += w[i];
        }
        for (double& v : w) v /= sum;
        return w;
    }
};

namespace detail {

inline void require_same_shape(const MapImage& a, const MapImage& b) {
    if (!a.same_shape(b)) throw DomainError("images differ in dimensions or channel count");
}

// Valid-mode separable filtering of one channel: output is
// (w - n + 1) x (h - n + 1).
inline std::vector<double> filter_valid(const std::vector<double>& img, std::size_t w, std::size_t h,
                                        const std::vector<double>& taps) {
    const std::size_t n = taps.size();
    const std::size_t ow = w - n + 1;
    const std::size_t oh = h - n + 1;
    std::vector<double> tmp(ow * h);
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < ow; ++x) {
            double s = 0.0;
            for (std::size_t t = 0; t < n; ++t) s += taps[t] * img[y * w + x + t];
            tmp[y * ow + x] = s;
        }
    std::vector<double> out(ow * oh);
    for (std::size_t y = 0; y < oh; ++y)
        for (std::size_t x = 0; x < ow; ++x) {
            double s = 0.0;
            for (std::size_t t = 0; t < n; ++t) s += taps[t] * tmp[(y + t) * ow + x];
            out[y * ow + x] = s;
        }
    return out;
}

} // namespace detail

/// Mean SSIM over the fully-windowed interior. For multi-channel images the
/// per-channel means are averaged with equal weight.
inline double ssim(const MapImage& a, const MapImage& b, const SsimParams& params = {}) {
    params.validate();
    detail::require_same_shape(a, b);
    const std::size_t w = a.width();
    const std::size_t h = a.height();
    if (w < params.window || h < params.window)
        throw DomainError("image smaller than the SSIM window");

    const auto taps = params.taps();
    const double c1 = (params.k1 * params.dynamic_range) * (params.k1 * params.dynamic_range);
    const double c2 = (params.k2 * params.dynamic_range) * (params.k2 * params.dynamic_range);
    const std::size_t C = a.channels();

    double total = 0.0;
    std::vector<double> x(w * h), y(w * h), xx(w * h), yy(w * h), xy(w * h);
    for (std::size_t ch = 0; ch < C; ++ch) {
        for (std::size_t p = 0; p < w * h; ++p) {
            x[p] = a.data()[p * C + ch];
            y[p] = b.data()[p * C + ch];
            xx[p] = x[p] * x[p];
            yy[p] = y[p] * y[p];
            xy[p] = x[p] * y[p];
        }
        const auto mx = detail::filter_valid(x, w, h, taps);
        const auto my = detail::filter_valid(y, w, h, taps);
        const auto mxx = detail::filter_valid(xx, w, h, taps);
        const auto myy = detail::filter_valid(yy, w, h, taps);
        const auto mxy = detail::filter_valid(xy, w, h, taps);
        double sum = 0.0;
        for (std::size_t p = 0; p < mx.size(); ++p) {
            const double vx = mxx[p] - mx[p] * mx[p];
            const double vy = myy[p] - my[p] * my[p];
            const double cxy = mxy[p] - mx[p] * my[p];
            sum += ((2.0 * mx[p] * my[p] + c1) * (2.0 * cxy + c2)) /
                   ((mx[p] * mx[p] + my[p] * my[p] + c1) * (vx + vy + c2));
        }
        total += sum / static_cast<double>(mx.size());
    }
    return total / static_cast<double>(C);
}

inline double mean_squared_error(const MapImage& a, const MapImage& b) {
    detail::require_same_shape(a, b);
    double sum = 0.0;
    for (std::size_t i = 0; i < a.data().size(); ++i) {
        const double d = a.data()[i] - b.data()[i];
        sum += d * d;
    }
    return sum / static_cast<double>(a.data().size());
}

/// PSNR in dB for unit peak; +inf for identical images.
inline double psnr(const MapImage& a, const MapImage& b) {
    const double mse = mean_squared_error(a, b);
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(1.0 / mse);
}

} // namespace ebsdcs

#endif
