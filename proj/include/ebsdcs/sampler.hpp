#ifndef EBSDCS_SAMPLER_HPP
#define EBSDCS_SAMPLER_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "ebsdcs/errors.hpp"
#include "ebsdcs/map_image.hpp"

namespace ebsdcs {

/// The set of visited probe positions, stored sorted ascending.
class SamplingSet {
public:
    SamplingSet(std::size_t n_positions, std::vector<std::size_t> indices, std::uint64_t seed = 0)
        : n_positions_(n_positions), indices_(std::move(indices)), seed_(seed) {
        if (n_positions_ == 0) throw DomainError("sampling set needs at least one position");
        if (indices_.empty()) throw DomainError("sampling set must contain at least one index");
        std::sort(indices_.begin(), indices_.end());
        if (std::adjacent_find(indices_.begin(), indices_.end()) != indices_.end())
            throw DomainError("sampling set indices must be distinct");
        if (indices_.back() >= n_positions_) throw DomainError("sampling index out of range");
    }

    std::size_t n_positions() const noexcept { return n_positions_; }
    std::size_t size() const noexcept { return indices_.size(); }
    const std::vector<std::size_t>& indices() const noexcept { return indices_; }
    std::uint64_t seed() const noexcept { return seed_; }
    double ratio() const noexcept {
        return static_cast<double>(indices_.size()) / static_cast<double>(n_positions_);
    }

    /// One flag per probe position, 1 where the position was visited.
    std::vector<std::uint8_t> observed_flags() const {
        std::vector<std::uint8_t> flags(n_positions_, 0);
        for (std::size_t j : indices_) flags[j] = 1;
        return flags;
    }

    friend bool operator==(const SamplingSet&, const SamplingSet&) = default;

private:
    std::size_t n_positions_;
    std::vector<std::size_t> indices_;
    std::uint64_t seed_;
};

/// A subsampled measurement: values are meaningful only on the sampling set.
/// Off-set positions conventionally hold 0, but nothing downstream relies on it.
struct MaskedMap {
    MapImage map;
    SamplingSet sampling;
    double noise_sigma = 0.0;

    MaskedMap(MapImage m, SamplingSet s, double sigma = 0.0)
        : map(std::move(m)), sampling(std::move(s)), noise_sigma(sigma) {
        if (sampling.n_positions() != map.positions())
            throw DomainError("sampling set size does not match map pixel count");
        if (!(noise_sigma >= 0.0)) throw DomainError("noise sigma must be non-negative");
    }
};

inline std::size_t sample_count(std::size_t n_positions, double ratio) {
    if (!(ratio > 0.0 && ratio <= 1.0)) throw DomainError("sampling ratio must lie in (0, 1]");
    return static_cast<std::size_t>(std::llround(ratio * static_cast<double>(n_positions)));
}

/// Draws round(ratio * n_positions) distinct positions uniformly without
/// replacement using a seeded partial Fisher-Yates shuffle.
inline SamplingSet generate_uniform_mask(std::size_t n_positions, double ratio, std::uint64_t seed) {
    if (n_positions == 0) throw DomainError("n_positions must be positive");
    const std::size_t m = sample_count(n_positions, ratio);
    if (m < 1) throw DomainError("sampling ratio selects no positions");

    std::vector<std::size_t> perm(n_positions);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    std::mt19937_64 rng(seed);
    for (std::size_t i = 0; i < m; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, n_positions - 1);
        std::swap(perm[i], perm[pick(rng)]);
    }
    perm.resize(m);
    return SamplingSet(n_positions, std::move(perm), seed);
}

/// The mask projector: keeps values on the sampling set, zeroes the rest.
inline MapImage apply_mask(const MapImage& map, const SamplingSet& sampling) {
    if (sampling.n_positions() != map.positions())
        throw DomainError("sampling set size does not match map pixel count");
    const std::size_t c = map.channels();
    std::vector<double> out(map.data().size(), 0.0);
    for (std::size_t j : sampling.indices()) {
        for (std::size_t ch = 0; ch < c; ++ch) out[j * c + ch] = map.data()[j * c + ch];
    }
    return MapImage(map.width(), map.height(), c, std::move(out), map.kind());
}

/// Simulates acquisition on the sampling set: each visited position-channel
/// receives additive Normal(0, noise_sigma^2) noise (drawn in ascending
/// position order, then channel order) and is clamped to [0, 1].
inline MaskedMap apply_acquisition(const MapImage& map, const SamplingSet& sampling,
                                   double noise_sigma, std::uint64_t seed) {
    if (!(noise_sigma >= 0.0)) throw DomainError("noise sigma must be non-negative");
    MapImage projected = apply_mask(map, sampling);
    if (noise_sigma == 0.0) return MaskedMap(std::move(projected), sampling, 0.0);

    const std::size_t c = map.channels();
    std::vector<double> out(projected.data().begin(), projected.data().end());
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, noise_sigma);
    for (std::size_t j : sampling.indices()) {
        for (std::size_t ch = 0; ch < c; ++ch) {
            double& v = out[j * c + ch];
            v = std::clamp(v + normal(rng), 0.0, 1.0);
        }
    }
    return MaskedMap(MapImage(map.width(), map.height(), c, std::move(out), map.kind()), sampling,
                     noise_sigma);
}

/// Scan time in seconds when only `ratio` of the positions are visited.
inline double acquisition_time_estimate(std::size_t n_positions, double ratio,
                                        double patterns_per_second) {
    if (!(patterns_per_second > 0.0)) throw DomainError("pattern rate must be positive");
    if (!(ratio > 0.0 && ratio <= 1.0)) throw DomainError("sampling ratio must lie in (0, 1]");
    return ratio * static_cast<double>(n_positions) / patterns_per_second;
}

// Mask file: first line "n_positions M seed", then one index per line.
inline void save_sampling_set(const SamplingSet& s, const std::filesystem::path& path) {
    detail::write_atomically(
        path,
        [&](std::ostream& out) {
            out << s.n_positions() << ' ' << s.size() << ' ' << s.seed() << '\n';
            for (std::size_t j : s.indices()) out << j << '\n';
        },
        false);
}

inline SamplingSet load_sampling_set(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError(path.string() + ": cannot open for reading");
    std::size_t n = 0, m = 0;
    std::uint64_t seed = 0;
    if (!(in >> n >> m >> seed)) throw FormatError(path.string() + ": malformed mask header");
    std::vector<std::size_t> indices;
    indices.reserve(m);
    std::size_t j = 0;
    while (in >> j) indices.push_back(j);
    if (!in.eof()) throw FormatError(path.string() + ": malformed mask index");
    if (indices.size() != m) throw FormatError(path.string() + ": index count does not match header");
    if (!std::is_sorted(indices.begin(), indices.end()))
        throw FormatError(path.string() + ": mask indices must be ascending");
    try {
        return SamplingSet(n, std::move(indices), seed);
    } catch (const DomainError& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

} // namespace ebsdcs

#endif
