#ifndef EBSDCS_MAP_IMAGE_HPP
#define EBSDCS_MAP_IMAGE_HPP

#include <cctype>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ebsdcs/errors.hpp"

namespace ebsdcs {

enum class MapKind { BandContrast, Ipf, Other };

inline std::string_view to_string(MapKind kind) {
    switch (kind) {
    case MapKind::BandContrast: return "band_contrast";
    case MapKind::Ipf: return "ipf";
    case MapKind::Other: return "other";
    }
    return "other";
}

inline MapKind parse_map_kind(std::string_view name) {
    if (name == "band_contrast" || name == "bc") return MapKind::BandContrast;
    if (name == "ipf") return MapKind::Ipf;
    if (name == "other") return MapKind::Other;
    throw DomainError("unknown map kind '" + std::string(name) + "'");
}

/// A post-indexing map over the probe-position grid.
///
/// Pixels are stored row-major with channels interleaved, i.e. the value of
/// channel `c` at column `x`, row `y` lives at `(y * width + x) * channels + c`.
/// This matches the PGM/PPM payload order. Every value lies in [0, 1].
class MapImage {
public:
    MapImage(std::size_t width, std::size_t height, std::size_t channels, std::vector<double> data,
             MapKind kind)
        : width_(width), height_(height), channels_(channels), kind_(kind), data_(std::move(data)) {
        if (width_ == 0 || height_ == 0) throw DomainError("map dimensions must be positive");
        if (channels_ != 1 && channels_ != 3) throw DomainError("map must have 1 or 3 channels");
        if (kind_ == MapKind::BandContrast && channels_ != 1)
            throw DomainError("band contrast maps have exactly one channel");
        if (kind_ == MapKind::Ipf && channels_ != 3)
            throw DomainError("IPF maps have exactly three channels");
        if (data_.size() != width_ * height_ * channels_)
            throw DomainError("map data length does not match width*height*channels");
        for (double v : data_) {
            if (!(v >= 0.0 && v <= 1.0)) throw DomainError("map value outside [0, 1]");
        }
    }

    // Uniform map filled with `value`.
    static MapImage filled(std::size_t width, std::size_t height, std::size_t channels, double value,
                           MapKind kind) {
        return MapImage(width, height, channels,
                        std::vector<double>(width * height * channels, value), kind);
    }

    std::size_t width() const noexcept { return width_; }
    std::size_t height() const noexcept { return height_; }
    std::size_t channels() const noexcept { return channels_; }
    std::size_t positions() const noexcept { return width_ * height_; }
    MapKind kind() const noexcept { return kind_; }
    std::span<const double> data() const noexcept { return data_; }

    double at(std::size_t x, std::size_t y, std::size_t c = 0) const {
        return data_[(y * width_ + x) * channels_ + c];
    }

    bool same_shape(const MapImage& other) const noexcept {
        return width_ == other.width_ && height_ == other.height_ && channels_ == other.channels_;
    }

    friend bool operator==(const MapImage&, const MapImage&) = default;

private:
    std::size_t width_;
    std::size_t height_;
    std::size_t channels_;
    MapKind kind_;
    std::vector<double> data_;
};

namespace detail {

inline MapKind default_kind(std::size_t channels) {
    return channels == 1 ? MapKind::BandContrast : MapKind::Ipf;
}

// Reads one whitespace-delimited PNM header token, skipping '#' comments.
inline std::string read_pnm_token(std::istream& in, const std::string& path) {
    std::string token;
    int ch = in.get();
    while (ch != EOF) {
        if (ch == '#') {
            while (ch != EOF && ch != '\n' && ch != '\r') ch = in.get();
        } else if (std::isspace(ch)) {
            ch = in.get();
        } else {
            break;
        }
    }
    while (ch != EOF && !std::isspace(ch) && ch != '#') {
        token.push_back(static_cast<char>(ch));
        ch = in.get();
    }
    if (token.empty()) throw FormatError(path + ": truncated PNM header");
    if (ch == '#') in.unget();
    return token;
}

inline std::size_t parse_header_number(const std::string& token, const std::string& path) {
    if (token.empty() || token.find_first_not_of("0123456789") != std::string::npos)
        throw FormatError(path + ": invalid PNM header field '" + token + "'");
    if (token.size() > 9) throw FormatError(path + ": PNM header field too large");
    return static_cast<std::size_t>(std::stoul(token));
}

struct RawPnm {
    std::size_t width = 0;
    std::size_t height = 0;
    std::size_t channels = 0;
    std::size_t maxval = 0;
    std::vector<std::uint16_t> samples;
};

inline RawPnm read_pnm(const std::filesystem::path& path) {
    const std::string name = path.string();
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError(name + ": cannot open for reading");

    RawPnm raw;
    const std::string magic = read_pnm_token(in, name);
    if (magic == "P5") {
        raw.channels = 1;
    } else if (magic == "P6") {
        raw.channels = 3;
    } else {
        throw FormatError(name + ": expected binary PGM (P5) or PPM (P6), got '" + magic + "'");
    }
    raw.width = parse_header_number(read_pnm_token(in, name), name);
    raw.height = parse_header_number(read_pnm_token(in, name), name);
    raw.maxval = parse_header_number(read_pnm_token(in, name), name);
    if (raw.width == 0 || raw.height == 0) throw FormatError(name + ": zero image dimension");
    if (raw.maxval == 0 || raw.maxval > 65535) throw FormatError(name + ": maxval out of range");

    const std::size_t count = raw.width * raw.height * raw.channels;
    const std::size_t bytes_per_sample = raw.maxval < 256 ? 1 : 2;
    std::vector<unsigned char> payload(count * bytes_per_sample);
    in.read(reinterpret_cast<char*>(payload.data()), static_cast<std::streamsize>(payload.size()));
    if (static_cast<std::size_t>(in.gcount()) != payload.size())
        throw IoError(name + ": truncated pixel payload");

    raw.samples.resize(count);
    for (std::size_t i = 0; i < count; ++i) {
        std::uint16_t v = bytes_per_sample == 1
                              ? payload[i]
                              : static_cast<std::uint16_t>((payload[2 * i] << 8) | payload[2 * i + 1]);
        if (v > raw.maxval) throw FormatError(name + ": sample exceeds maxval");
        raw.samples[i] = v;
    }
    return raw;
}

// Writes through a temporary sibling and renames, so a failed write never
// leaves a partial file at `path`.
template <typename Writer>
void write_atomically(const std::filesystem::path& path, Writer&& writer, bool binary = true) {
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, binary ? std::ios::binary | std::ios::trunc : std::ios::trunc);
        if (!out) throw IoError(path.string() + ": cannot open for writing");
        writer(out);
        out.flush();
        if (!out) {
            out.close();
            std::error_code ec;
            std::filesystem::remove(tmp, ec);
            throw IoError(path.string() + ": write failed");
        }
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        std::filesystem::remove(tmp, ec);
        throw IoError(path.string() + ": cannot move temporary file into place");
    }
}

inline unsigned char quantize8(double v) {
    return static_cast<unsigned char>(std::floor(v * 255.0 + 0.5));
}

} // namespace detail

/// Loads a binary PGM (P5, one channel) or PPM (P6, three channels) with any
/// maxval in [1, 65535]. Samples are divided by maxval. The kind defaults to
/// BandContrast for one channel and Ipf for three.
inline MapImage load_map(const std::filesystem::path& path,
                         std::optional<MapKind> kind = std::nullopt) {
    detail::RawPnm raw = detail::read_pnm(path);
    std::vector<double> data(raw.samples.size());
    const double scale = static_cast<double>(raw.maxval);
    for (std::size_t i = 0; i < data.size(); ++i) data[i] = raw.samples[i] / scale;
    return MapImage(raw.width, raw.height, raw.channels, std::move(data),
                    kind.value_or(detail::default_kind(raw.channels)));
}

/// Writes P5 (one channel) or P6 (three channels) with maxval 255. Each value
/// is quantized as floor(v * 255 + 0.5).
inline void save_map(const MapImage& map, const std::filesystem::path& path) {
    std::vector<unsigned char> bytes(map.data().size());
    for (std::size_t i = 0; i < bytes.size(); ++i) bytes[i] = detail::quantize8(map.data()[i]);
    detail::write_atomically(path, [&](std::ostream& out) {
        out << (map.channels() == 1 ? "P5" : "P6") << '\n'
            << map.width() << ' ' << map.height() << '\n'
            << 255 << '\n';
        out.write(reinterpret_cast<const char*>(bytes.data()),
                  static_cast<std::streamsize>(bytes.size()));
    });
}

/// Grain labels as a 16-bit P5 file (maxval 65535, big-endian samples).
inline void save_labels(std::span<const std::uint32_t> labels, std::size_t width, std::size_t height,
                        const std::filesystem::path& path) {
    if (labels.size() != width * height) throw DomainError("label map size mismatch");
    std::vector<unsigned char> bytes(labels.size() * 2);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] > 65535) throw DomainError("label does not fit a 16-bit PGM");
        bytes[2 * i] = static_cast<unsigned char>(labels[i] >> 8);
        bytes[2 * i + 1] = static_cast<unsigned char>(labels[i] & 0xff);
    }
    detail::write_atomically(path, [&](std::ostream& out) {
        out << "P5\n" << width << ' ' << height << "\n65535\n";
        out.write(reinterpret_cast<const char*>(bytes.data()),
                  static_cast<std::streamsize>(bytes.size()));
    });
}

inline std::vector<std::uint32_t> load_labels(const std::filesystem::path& path,
                                              std::size_t* width = nullptr,
                                              std::size_t* height = nullptr) {
    detail::RawPnm raw = detail::read_pnm(path);
    if (raw.channels != 1) throw FormatError(path.string() + ": label map must be P5");
    if (width) *width = raw.width;
    if (height) *height = raw.height;
    return {raw.samples.begin(), raw.samples.end()};
}

} // namespace ebsdcs

#endif
