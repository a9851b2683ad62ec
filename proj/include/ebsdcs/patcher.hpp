#ifndef EBSDCS_PATCHER_HPP
#define EBSDCS_PATCHER_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "ebsdcs/errors.hpp"
#include "ebsdcs/map_image.hpp"
#include "ebsdcs/sampler.hpp"

namespace ebsdcs {

/// Anchor offsets along one axis: 0, s, 2s, ... with the last anchor clamped
/// so that the final patch ends exactly at the border.
inline std::vector<std::size_t> patch_anchors(std::size_t extent, std::size_t patch_size,
                                              std::size_t stride) {
    if (patch_size == 0 || patch_size > extent) throw DomainError("patch size out of range");
    if (stride == 0 || stride > patch_size) throw DomainError("stride out of range");
    std::vector<std::size_t> anchors;
    const std::size_t last = extent - patch_size;
    for (std::size_t a = 0; a < last; a += stride) anchors.push_back(a);
    anchors.push_back(last);
    return anchors;
}

struct PatchGeometry {
    std::size_t patch_size = 8;
    std::size_t stride = 2;
    std::size_t image_width = 0;
    std::size_t image_height = 0;
    std::size_t channels = 1;

    static PatchGeometry make(std::size_t width, std::size_t height, std::size_t channels,
                              std::size_t patch_size, std::size_t stride) {
        if (patch_size == 0 || patch_size > std::min(width, height))
            throw DomainError("patch size must lie in [1, min(width, height)]");
        if (stride == 0 || stride > patch_size) throw DomainError("stride must lie in [1, patch size]");
        return PatchGeometry{patch_size, stride, width, height, channels};
    }

    std::vector<std::size_t> row_anchors() const { return patch_anchors(image_height, patch_size, stride); }
    std::vector<std::size_t> col_anchors() const { return patch_anchors(image_width, patch_size, stride); }
    std::size_t patch_count() const { return row_anchors().size() * col_anchors().size(); }
    std::size_t patch_dim() const noexcept { return patch_size * patch_size * channels; }

    friend bool operator==(const PatchGeometry&, const PatchGeometry&) = default;
};

/// N x P matrix of vectorized patches (row-major). Within a patch, element
/// `(r * B + c) * channels + ch` holds channel `ch` of the pixel at patch
/// row r, column c, so channels stay interleaved as in MapImage. Patches are
/// ordered by row anchor, then column anchor.
struct PatchSet {
    PatchGeometry geometry;
    std::size_t count = 0;
    std::size_t dim = 0;
    std::vector<double> values;
    std::vector<std::uint8_t> observed;

    std::span<const double> patch(std::size_t i) const { return {values.data() + i * dim, dim}; }
    std::span<const std::uint8_t> flags(std::size_t i) const { return {observed.data() + i * dim, dim}; }
};

namespace detail {

// Calls f(patch_index, element_index, pixel_offset_in_map_data) for every
// element of every patch, in patch order.
template <typename F>
void for_each_patch_element(const PatchGeometry& g, F&& f) {
    const auto rows = g.row_anchors();
    const auto cols = g.col_anchors();
    const std::size_t B = g.patch_size;
    const std::size_t C = g.channels;
    std::size_t i = 0;
    for (std::size_t ar : rows) {
        for (std::size_t ac : cols) {
            std::size_t e = 0;
            for (std::size_t r = 0; r < B; ++r) {
                for (std::size_t c = 0; c < B; ++c) {
                    const std::size_t base = ((ar + r) * g.image_width + (ac + c)) * C;
                    for (std::size_t ch = 0; ch < C; ++ch, ++e) f(i, e, base + ch);
                }
            }
            ++i;
        }
    }
}

} // namespace detail

inline PatchSet extract_patches(const MaskedMap& masked, std::size_t patch_size, std::size_t stride) {
    const MapImage& map = masked.map;
    PatchSet ps;
    ps.geometry = PatchGeometry::make(map.width(), map.height(), map.channels(), patch_size, stride);
    ps.count = ps.geometry.patch_count();
    ps.dim = ps.geometry.patch_dim();
    ps.values.resize(ps.count * ps.dim);
    ps.observed.resize(ps.count * ps.dim);

    const auto flags = masked.sampling.observed_flags();
    const auto data = map.data();
    const std::size_t C = map.channels();
    detail::for_each_patch_element(ps.geometry, [&](std::size_t i, std::size_t e, std::size_t off) {
        ps.values[i * ps.dim + e] = data[off];
        ps.observed[i * ps.dim + e] = flags[off / C];
    });
    return ps;
}

/// Number of patches covering each pixel (row-major, one entry per position).
inline std::vector<std::size_t> cover_counts(const PatchGeometry& g) {
    std::vector<std::size_t> counts(g.image_width * g.image_height, 0);
    const std::size_t C = g.channels;
    detail::for_each_patch_element(g, [&](std::size_t, std::size_t e, std::size_t off) {
        if (e % C == 0) ++counts[off / C];
    });
    return counts;
}

/// Averages overlapping patch estimates back onto the image grid. With
/// `keep_measured`, positions on the sampling set take the measured value.
inline MapImage reassemble(std::span<const double> patches, const PatchGeometry& geometry,
                           const MaskedMap& masked, bool keep_measured) {
    const MapImage& map = masked.map;
    if (geometry.image_width != map.width() || geometry.image_height != map.height() ||
        geometry.channels != map.channels())
        throw DomainError("patch geometry does not match the masked map");
    const std::size_t dim = geometry.patch_dim();
    if (patches.size() != geometry.patch_count() * dim)
        throw DomainError("patch matrix dimensions do not match geometry");

    std::vector<double> sum(map.data().size(), 0.0);
    std::vector<std::size_t> hits(map.data().size(), 0);
    detail::for_each_patch_element(geometry, [&](std::size_t i, std::size_t e, std::size_t off) {
        sum[off] += patches[i * dim + e];
        ++hits[off];
    });
    for (std::size_t k = 0; k < sum.size(); ++k) sum[k] /= static_cast<double>(hits[k]);

    if (keep_measured) {
        const std::size_t C = map.channels();
        for (std::size_t j : masked.sampling.indices()) {
            for (std::size_t ch = 0; ch < C; ++ch) sum[j * C + ch] = map.data()[j * C + ch];
        }
    }
    for (double& v : sum) {
        if (!std::isfinite(v)) throw DomainError("non-finite value in reassembled map");
        v = std::clamp(v, 0.0, 1.0);
    }
    return MapImage(map.width(), map.height(), map.channels(), std::move(sum), map.kind());
}

} // namespace ebsdcs

#endif
