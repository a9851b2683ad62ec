#ifndef EBSDCS_PHANTOM_HPP
#define EBSDCS_PHANTOM_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <set>
#include <vector>

#include "ebsdcs/errors.hpp"
#include "ebsdcs/map_image.hpp"
#include "ebsdcs/random.hpp"

namespace ebsdcs {

struct PhantomSpec {
    std::size_t width = 256;
    std::size_t height = 256;
    std::size_t n_grains = 60;
    double boundary_width_px = 1.5;
    std::uint64_t seed = 0;
    double bc_grain_low = 0.55;
    double bc_grain_high = 0.9;
    double bc_boundary_level = 0.3;

    void validate() const {
        if (width == 0 || height == 0) throw DomainError("phantom dimensions must be positive");
        if (n_grains == 0 || n_grains > width * height)
            throw DomainError("grain count must lie in [1, width*height]");
        if (!(boundary_width_px > 0.0)) throw DomainError("boundary width must be positive");
        if (!(0.0 <= bc_grain_low && bc_grain_low <= bc_grain_high && bc_grain_high <= 1.0))
            throw DomainError("band contrast grain range must be an interval inside [0, 1]");
        if (!(bc_boundary_level >= 0.0 && bc_boundary_level < bc_grain_low))
            throw DomainError("boundary level must lie in [0, grain range low)");
    }
};

struct GrainSeed {
    double x;
    double y;
};

struct Phantom {
    MapImage band_contrast;
    MapImage ipf;
    std::vector<std::uint32_t> labels;
    std::vector<GrainSeed> seeds;
};

/// Nearest-seed labeling at pixel centres (x, y) = (column, row); ties go to
/// the lowest seed index.
inline std::vector<std::uint32_t> label_voronoi(std::size_t width, std::size_t height,
                                                const std::vector<GrainSeed>& seeds) {
    if (seeds.empty()) throw DomainError("need at least one seed");
    std::vector<std::uint32_t> labels(width * height);
    for (std::size_t y = 0; y < height; ++y) {
        for (std::size_t x = 0; x < width; ++x) {
            double best = std::numeric_limits<double>::infinity();
            std::uint32_t arg = 0;
            for (std::size_t s = 0; s < seeds.size(); ++s) {
                const double dx = static_cast<double>(x) - seeds[s].x;
                const double dy = static_cast<double>(y) - seeds[s].y;
                const double d2 = dx * dx + dy * dy;
                if (d2 < best) {
                    best = d2;
                    arg = static_cast<std::uint32_t>(s);
                }
            }
            labels[y * width + x] = arg;
        }
    }
    return labels;
}

/// Euclidean distance from (x, y) to the boundary of the Voronoi cell of
/// seed `own`, i.e. the nearest perpendicular bisector with any other seed.
inline double distance_to_cell_boundary(double x, double y, std::size_t own,
                                        const std::vector<GrainSeed>& seeds) {
    double best = std::numeric_limits<double>::infinity();
    const GrainSeed& si = seeds[own];
    const double di2 = (x - si.x) * (x - si.x) + (y - si.y) * (y - si.y);
    for (std::size_t j = 0; j < seeds.size(); ++j) {
        if (j == own) continue;
        const GrainSeed& sj = seeds[j];
        const double sep = std::hypot(sj.x - si.x, sj.y - si.y);
        if (sep == 0.0) continue;
        const double dj2 = (x - sj.x) * (x - sj.x) + (y - sj.y) * (y - sj.y);
        best = std::min(best, std::max(0.0, (dj2 - di2) / (2.0 * sep)));
    }
    return best;
}

namespace detail {

inline double smoothstep(double t) {
    t = std::clamp(t, 0.0, 1.0);
    return t * t * (3.0 - 2.0 * t);
}

// Grain pairs that share a 4-connected pixel edge.
inline std::vector<std::set<std::uint32_t>> grain_adjacency(const std::vector<std::uint32_t>& labels,
                                                            std::size_t width, std::size_t height,
                                                            std::size_t n_grains) {
    std::vector<std::set<std::uint32_t>> adj(n_grains);
    auto link = [&](std::uint32_t a, std::uint32_t b) {
        if (a == b) return;
        adj[a].insert(b);
        adj[b].insert(a);
    };
    for (std::size_t y = 0; y < height; ++y)
        for (std::size_t x = 0; x < width; ++x) {
            const std::uint32_t l = labels[y * width + x];
            if (x + 1 < width) link(l, labels[y * width + x + 1]);
            if (y + 1 < height) link(l, labels[(y + 1) * width + x]);
        }
    return adj;
}

} // namespace detail

/// Renders band contrast, IPF and label maps for a given seed layout. Draws
/// per-grain band contrast levels and IPF colours from `rng`.
inline Phantom render_phantom(const PhantomSpec& spec, std::vector<GrainSeed> seeds, Rng& rng) {
    const std::size_t W = spec.width;
    const std::size_t H = spec.height;
    const std::size_t G = seeds.size();
    auto labels = label_voronoi(W, H, seeds);

    std::uniform_real_distribution<double> bc_level(spec.bc_grain_low, spec.bc_grain_high);
    std::vector<double> grain_bc(G);
    for (double& v : grain_bc) v = bc_level(rng);

    // Greedy colouring in grain order: redraw while an already coloured
    // neighbour is closer than 0.1 in max-norm, giving up after 100 tries.
    const auto adj = detail::grain_adjacency(labels, W, H, G);
    std::vector<std::array<double, 3>> colour(G);
    std::vector<bool> coloured(G, false);
    for (std::size_t g = 0; g < G; ++g) {
        for (int attempt = 0; attempt <= 100; ++attempt) {
            for (double& c : colour[g]) c = uniform01(rng);
            bool ok = true;
            for (std::uint32_t n : adj[g]) {
                if (!coloured[n]) continue;
                double dist = 0.0;
                for (int c = 0; c < 3; ++c) dist = std::max(dist, std::abs(colour[g][c] - colour[n][c]));
                if (dist < 0.1) {
                    ok = false;
                    break;
                }
            }
            if (ok) break;
        }
        coloured[g] = true;
    }

    std::vector<double> bc(W * H);
    std::vector<double> ipf(W * H * 3);
    for (std::size_t y = 0; y < H; ++y) {
        for (std::size_t x = 0; x < W; ++x) {
            const std::size_t p = y * W + x;
            const std::uint32_t l = labels[p];
            const double d = distance_to_cell_boundary(static_cast<double>(x), static_cast<double>(y), l, seeds);
            const double s = detail::smoothstep(d / spec.boundary_width_px);
            bc[p] = spec.bc_boundary_level + (grain_bc[l] - spec.bc_boundary_level) * s;
            for (int c = 0; c < 3; ++c) ipf[p * 3 + c] = colour[l][c];
        }
    }
    return Phantom{MapImage(W, H, 1, std::move(bc), MapKind::BandContrast),
                   MapImage(W, H, 3, std::move(ipf), MapKind::Ipf), std::move(labels), std::move(seeds)};
}

/// Voronoi grain phantom: seeds at distinct pixel centres drawn uniformly,
/// so every grain owns at least its seed pixel.
inline Phantom generate_phantom(const PhantomSpec& spec) {
    spec.validate();
    Rng rng(spec.seed);
    const std::size_t n = spec.width * spec.height;
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    std::vector<GrainSeed> seeds(spec.n_grains);
    for (std::size_t g = 0; g < spec.n_grains; ++g) {
        std::uniform_int_distribution<std::size_t> pick(g, n - 1);
        std::swap(perm[g], perm[pick(rng)]);
        seeds[g] = {static_cast<double>(perm[g] % spec.width), static_cast<double>(perm[g] / spec.width)};
    }
    return render_phantom(spec, std::move(seeds), rng);
}

} // namespace ebsdcs

#endif
