#ifndef EBSDCS_PIPELINE_HPP
#define EBSDCS_PIPELINE_HPP

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <functional>
#include <map>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "ebsdcs/bpfa.hpp"
#include "ebsdcs/errors.hpp"
#include "ebsdcs/map_image.hpp"
#include "ebsdcs/metrics.hpp"
#include "ebsdcs/metrics_csv.hpp"
#include "ebsdcs/phantom.hpp"
#include "ebsdcs/sampler.hpp"

namespace ebsdcs {

// Rate at which a full 1024 x 704 scan takes 444 s (7 min 24 s).
inline constexpr double kDefaultPatternsPerSecond = 1623.4;

struct PipelineConfig {
    PatchParams patch;
    BpfaHyperParams bpfa;
    SsimParams ssim;
    double noise_sigma = 0.0;
    double patterns_per_second = kDefaultPatternsPerSecond;
};

struct LegResult {
    MetricsRecord record;
    MaskedMap masked;
    InpaintResult inpainted;
};

/// Acquisition noise is drawn from a stream decorrelated from the mask seed.
inline std::uint64_t noise_seed(std::uint64_t seed) { return seed ^ 0x9e3779b97f4a7c15ULL; }

/// One (map, ratio, seed) evaluation: mask, acquire, inpaint, score. The seed
/// drives the mask, the acquisition noise and the sampler.
inline LegResult run_leg(const MapImage& truth, double ratio, std::uint64_t seed, const PipelineConfig& cfg,
                         const SweepCallback& on_sweep = {}) {
    const auto t0 = std::chrono::steady_clock::now();
    SamplingSet mask = generate_uniform_mask(truth.positions(), ratio, seed);
    MaskedMap masked = apply_acquisition(truth, mask, cfg.noise_sigma, noise_seed(seed));
    BpfaHyperParams hp = cfg.bpfa;
    hp.seed = seed;
    InpaintResult res = inpaint(masked, cfg.patch, hp, on_sweep);

    MetricsRecord rec;
    rec.sampling_ratio = ratio;
    rec.map_kind = truth.kind();
    rec.seed = seed;
    rec.ssim = ssim(res.map, truth, cfg.ssim);
    rec.psnr_db = psnr(res.map, truth);
    rec.estimated_acquisition_s = acquisition_time_estimate(truth.positions(), ratio, cfg.patterns_per_second);
    rec.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return LegResult{rec, std::move(masked), std::move(res)};
}

struct SweepConfig {
    std::vector<double> ratios{0.01, 0.05, 0.10, 0.15, 0.25};
    std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
    std::vector<MapKind> kinds{MapKind::BandContrast, MapKind::Ipf};
    PipelineConfig pipeline;
    PhantomSpec phantom;
    unsigned jobs = 1;

    void validate() const {
        if (ratios.empty() || seeds.empty() || kinds.empty())
            throw DomainError("sweep needs at least one ratio, seed and map kind");
        if (!std::is_sorted(ratios.begin(), ratios.end())) throw DomainError("sweep ratios must be ascending");
        for (double r : ratios)
            if (!(r > 0.0 && r <= 1.0)) throw DomainError("sweep ratios must lie in (0, 1]");
        for (MapKind k : kinds)
            if (k == MapKind::Other) throw DomainError("sweep map kinds are band_contrast and ipf");
        pipeline.bpfa.validate();
    }
};

/// Thrown when a leg fails; carries the records of every leg that finished
/// before the first failing one, in sweep order.
class SweepError : public std::runtime_error {
public:
    SweepError(const std::string& what, std::vector<MetricsRecord> partial)
        : std::runtime_error(what), partial_(std::move(partial)) {}
    const std::vector<MetricsRecord>& partial() const noexcept { return partial_; }

private:
    std::vector<MetricsRecord> partial_;
};

using LegCallback = std::function<void(const MetricsRecord&)>;

/// Runs every (kind, ratio, seed) leg. Legs may execute on `jobs` threads;
/// the returned records are always ordered by kind, then ratio, then seed.
inline std::vector<MetricsRecord> run_sweep(const SweepConfig& cfg, const MapImage& band_contrast,
                                            const MapImage& ipf, const LegCallback& on_leg = {}) {
    cfg.validate();
    struct Leg {
        const MapImage* truth;
        double ratio;
        std::uint64_t seed;
    };
    std::vector<Leg> legs;
    for (MapKind kind : cfg.kinds)
        for (double r : cfg.ratios)
            for (std::uint64_t s : cfg.seeds)
                legs.push_back({kind == MapKind::BandContrast ? &band_contrast : &ipf, r, s});

    std::vector<MetricsRecord> out(legs.size());
    std::vector<int> state(legs.size(), 0);  // 0 pending, 1 done, 2 failed
    std::vector<std::string> errors(legs.size());
    std::mutex mu;
    std::size_t next = 0;
    bool stop = false;

    auto worker = [&] {
        for (;;) {
            std::size_t n;
            {
                std::lock_guard lock(mu);
                if (stop || next >= legs.size()) return;
                n = next++;
            }
            try {
                MetricsRecord rec = run_leg(*legs[n].truth, legs[n].ratio, legs[n].seed, cfg.pipeline).record;
                std::lock_guard lock(mu);
                out[n] = rec;
                state[n] = 1;
                if (on_leg) on_leg(rec);
            } catch (const std::exception& e) {
                std::lock_guard lock(mu);
                state[n] = 2;
                errors[n] = e.what();
                stop = true;
            }
        }
    };
    const unsigned jobs = std::max(1u, cfg.jobs);
    if (jobs == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (unsigned t = 0; t < jobs; ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }

    for (std::size_t n = 0; n < legs.size(); ++n) {
        if (state[n] == 1) continue;
        std::vector<MetricsRecord> partial(out.begin(), out.begin() + static_cast<std::ptrdiff_t>(n));
        std::string msg = "sweep aborted";
        for (std::size_t m = 0; m < legs.size(); ++m)
            if (state[m] == 2) {
                msg = "sweep leg failed: " + errors[m];
                break;
            }
        throw SweepError(msg, std::move(partial));
    }
    return out;
}

inline double median(std::vector<double> v) {
    if (v.empty()) throw DomainError("median of an empty set");
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

struct CurvePoint {
    double ratio;
    double value;
};

enum class Metric { Ssim, Psnr };

/// Median over seeds of one metric per ratio, for one map kind.
inline std::vector<CurvePoint> median_curve(const std::vector<MetricsRecord>& records, MapKind kind,
                                            Metric metric) {
    std::map<double, std::vector<double>> by_ratio;
    for (const auto& r : records)
        if (r.map_kind == kind) by_ratio[r.sampling_ratio].push_back(metric == Metric::Ssim ? r.ssim : r.psnr_db);
    std::vector<CurvePoint> curve;
    for (auto& [ratio, values] : by_ratio) curve.push_back({ratio, median(values)});
    return curve;
}

namespace detail {

inline std::string svg_num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

} // namespace detail

/// Minimal line plot: sampling ratio (%) on x, the chosen metric on y, one
/// polyline per map kind. Infinite PSNR values are clipped to the plot top.
inline std::string render_svg(const std::vector<MetricsRecord>& records, Metric metric) {
    constexpr double W = 640, H = 420, L = 70, R = 150, T = 40, B = 60;
    std::vector<MapKind> kinds;
    for (const auto& r : records)
        if (std::find(kinds.begin(), kinds.end(), r.map_kind) == kinds.end()) kinds.push_back(r.map_kind);

    double xmax = 0.0, ymin = metric == Metric::Ssim ? 0.0 : 1e300, ymax = metric == Metric::Ssim ? 1.0 : -1e300;
    std::vector<std::pair<MapKind, std::vector<CurvePoint>>> curves;
    for (MapKind k : kinds) {
        auto c = median_curve(records, k, metric);
        for (const auto& p : c) {
            xmax = std::max(xmax, p.ratio);
            if (metric == Metric::Psnr && std::isfinite(p.value)) {
                ymin = std::min(ymin, p.value);
                ymax = std::max(ymax, p.value);
            }
        }
        curves.emplace_back(k, std::move(c));
    }
    if (metric == Metric::Psnr) {
        if (ymin > ymax) {
            ymin = 0.0;
            ymax = 50.0;
        }
        ymin = std::floor(ymin / 5.0) * 5.0;
        ymax = std::ceil(ymax / 5.0) * 5.0 + 5.0;
    }
    if (xmax <= 0.0) xmax = 1.0;

    auto px = [&](double ratio) { return L + (W - L - R) * ratio / xmax; };
    auto py = [&](double v) {
        if (!std::isfinite(v)) v = ymax;
        v = std::clamp(v, ymin, ymax);
        return T + (H - T - B) * (1.0 - (v - ymin) / (ymax - ymin));
    };

    const char* colours[] = {"#1f77b4", "#d62728", "#2ca02c"};
    std::ostringstream s;
    s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n";
    s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    s << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\"" << H - B
      << "\" stroke=\"black\"/>\n";
    s << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
    for (int t = 0; t <= 5; ++t) {
        const double v = ymin + (ymax - ymin) * t / 5.0;
        s << "<text x=\"" << L - 8 << "\" y=\"" << detail::svg_num(py(v) + 4)
          << "\" font-size=\"12\" text-anchor=\"end\">" << detail::svg_num(v) << "</text>\n";
    }
    if (!curves.empty()) {
        for (const auto& p : curves.front().second)
            s << "<text x=\"" << detail::svg_num(px(p.ratio)) << "\" y=\"" << H - B + 18
              << "\" font-size=\"12\" text-anchor=\"middle\">" << detail::svg_num(100.0 * p.ratio) << "</text>\n";
    }
    s << "<text x=\"" << (L + W - R) / 2 << "\" y=\"" << H - 15
      << "\" font-size=\"14\" text-anchor=\"middle\">sampling ratio (%)</text>\n";
    s << "<text x=\"18\" y=\"" << (T + H - B) / 2 << "\" font-size=\"14\" text-anchor=\"middle\" transform=\"rotate(-90 18 "
      << (T + H - B) / 2 << ")\">" << (metric == Metric::Ssim ? "SSIM" : "PSNR (dB)") << "</text>\n";
    for (std::size_t c = 0; c < curves.size(); ++c) {
        const char* col = colours[c % 3];
        s << "<polyline fill=\"none\" stroke=\"" << col << "\" stroke-width=\"2\" points=\"";
        for (std::size_t i = 0; i < curves[c].second.size(); ++i) {
            const auto& p = curves[c].second[i];
            s << (i ? " " : "") << detail::svg_num(px(p.ratio)) << ',' << detail::svg_num(py(p.value));
        }
        s << "\"/>\n";
        for (const auto& p : curves[c].second)
            s << "<circle cx=\"" << detail::svg_num(px(p.ratio)) << "\" cy=\"" << detail::svg_num(py(p.value))
              << "\" r=\"3\" fill=\"" << col << "\"/>\n";
        s << "<text x=\"" << W - R + 10 << "\" y=\"" << T + 20 * (c + 1) << "\" font-size=\"12\" fill=\"" << col
          << "\">" << to_string(curves[c].first) << "</text>\n";
    }
    s << "</svg>\n";
    return s.str();
}

/// Plain-text report: every modelling assumption, then the median curves.
inline std::string render_report(const SweepConfig& cfg, const std::vector<MetricsRecord>& records) {
    const auto& pp = cfg.pipeline.patch;
    const auto& hp = cfg.pipeline.bpfa;
    const auto& sp = cfg.pipeline.ssim;
    std::ostringstream s;
    char buf[256];
    s << "Subsampled EBSD map reconstruction sweep\n\n";
    s << "Assumptions\n";
    s << "  mask family        : uniform random probe positions, without replacement\n";
    std::snprintf(buf, sizeof buf, "  acquisition noise  : sigma = %g\n", cfg.pipeline.noise_sigma);
    s << buf;
    std::snprintf(buf, sizeof buf, "  patch geometry     : %zux%zu, stride %zu, keep_measured = %s\n", pp.patch_size,
                  pp.patch_size, pp.stride,
                  pp.keep_measured ? (*pp.keep_measured ? "true" : "false") : "auto (true when noiseless)");
    s << buf;
    std::snprintf(buf, sizeof buf,
                  "  BPFA               : K = %zu, a0 = %g, b0 = %g, c0 = %g, d0 = %g, e0 = %g, f0 = %g, "
                  "burn-in = %zu, samples = %zu\n",
                  hp.atoms, hp.a0, hp.b0, hp.c0, hp.d0, hp.e0, hp.f0, hp.burn_in, hp.samples);
    s << buf;
    std::snprintf(buf, sizeof buf,
                  "  SSIM               : %zux%zu Gaussian window, sigma %g, k1 = %g, k2 = %g, L = %g, "
                  "interior-only mean, channel mean\n",
                  sp.window, sp.window, sp.sigma, sp.k1, sp.k2, sp.dynamic_range);
    s << buf;
    std::snprintf(buf, sizeof buf, "  PSNR               : peak 1.0, MSE over all pixels and channels\n");
    s << buf;
    std::snprintf(buf, sizeof buf, "  acquisition rate   : %g patterns/s\n", cfg.pipeline.patterns_per_second);
    s << buf;
    std::snprintf(buf, sizeof buf,
                  "  phantom            : %zux%zu Voronoi, %zu grains, boundary %g px, seed %llu, "
                  "BC grains [%g, %g], BC boundary %g\n",
                  cfg.phantom.width, cfg.phantom.height, cfg.phantom.n_grains, cfg.phantom.boundary_width_px,
                  static_cast<unsigned long long>(cfg.phantom.seed), cfg.phantom.bc_grain_low,
                  cfg.phantom.bc_grain_high, cfg.phantom.bc_boundary_level);
    s << buf;
    s << "\nMedian over " << cfg.seeds.size() << " seed(s)\n";
    s << "  kind            ratio    SSIM      PSNR(dB)  est. acquisition (s)\n";
    for (MapKind k : cfg.kinds) {
        const auto ssim_c = median_curve(records, k, Metric::Ssim);
        const auto psnr_c = median_curve(records, k, Metric::Psnr);
        for (std::size_t i = 0; i < ssim_c.size(); ++i) {
            double acq = 0.0;
            for (const auto& r : records)
                if (r.map_kind == k && r.sampling_ratio == ssim_c[i].ratio) acq = r.estimated_acquisition_s;
            std::snprintf(buf, sizeof buf, "  %-14s %6.2f%%  %7.4f  %9.3f  %10.3f\n", std::string(to_string(k)).c_str(),
                          100.0 * ssim_c[i].ratio, ssim_c[i].value, psnr_c[i].value, acq);
            s << buf;
        }
    }
    return s.str();
}

} // namespace ebsdcs

#endif
