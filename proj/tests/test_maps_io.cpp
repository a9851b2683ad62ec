#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>
#include <string>

#include "ebsdcs/map_image.hpp"
#include "ebsdcs/metrics_csv.hpp"
#include "support.hpp"

using namespace ebsdcs;
using testing_support::read_bytes;
using testing_support::TempDir;
using testing_support::write_bytes;

namespace {

std::string pnm(const std::string& magic, std::size_t w, std::size_t h, const std::string& payload,
                int maxval = 255) {
    return magic + "\n" + std::to_string(w) + " " + std::to_string(h) + "\n" + std::to_string(maxval) + "\n" +
           payload;
}

} // namespace

TEST(MapImage, RejectsOutOfRangeValues) {
    EXPECT_THROW(MapImage(1, 1, 1, {1.5}, MapKind::BandContrast), DomainError);
    EXPECT_THROW(MapImage(1, 1, 1, {-0.1}, MapKind::BandContrast), DomainError);
    EXPECT_THROW(MapImage(1, 1, 1, {std::nan("")}, MapKind::BandContrast), DomainError);
}

TEST(MapImage, RejectsShapeAndKindMismatch) {
    EXPECT_THROW(MapImage(2, 2, 1, {0, 0, 0}, MapKind::BandContrast), DomainError);
    EXPECT_THROW(MapImage(1, 1, 3, {0, 0, 0}, MapKind::BandContrast), DomainError);
    EXPECT_THROW(MapImage(1, 1, 1, {0}, MapKind::Ipf), DomainError);
    EXPECT_THROW(MapImage(1, 1, 2, {0, 0}, MapKind::Other), DomainError);
    EXPECT_THROW(MapImage(0, 1, 1, {}, MapKind::Other), DomainError);
    EXPECT_NO_THROW(MapImage(1, 1, 3, {0, 0.5, 1}, MapKind::Other));
}

TEST(LoadMap, ScalesEightBitGreyByMaxval) {
    TempDir tmp;
    write_bytes(tmp / "a.pgm", pnm("P5", 2, 2, std::string("\x00\xff\x80\x40", 4)));
    MapImage m = load_map(tmp / "a.pgm");
    EXPECT_EQ(m.kind(), MapKind::BandContrast);
    ASSERT_EQ(m.data().size(), 4u);
    EXPECT_EQ(m.data()[0], 0.0);
    EXPECT_EQ(m.data()[1], 1.0);
    EXPECT_EQ(m.data()[2], 128.0 / 255.0);
    EXPECT_EQ(m.data()[3], 64.0 / 255.0);
}

TEST(LoadMap, SaturatedColourGivesOnes) {
    TempDir tmp;
    write_bytes(tmp / "a.ppm", pnm("P6", 3, 1, std::string(9, '\xff')));
    MapImage m = load_map(tmp / "a.ppm");
    EXPECT_EQ(m.channels(), 3u);
    EXPECT_EQ(m.kind(), MapKind::Ipf);
    for (double v : m.data()) EXPECT_EQ(v, 1.0);
}

TEST(LoadMap, SixteenBitBigEndianAndComments) {
    TempDir tmp;
    write_bytes(tmp / "a.pgm", "P5 # grey\n# comment line\n2 1\n65535\n" + std::string("\xff\xff\x80\x00", 4));
    MapImage m = load_map(tmp / "a.pgm");
    EXPECT_EQ(m.data()[0], 1.0);
    EXPECT_EQ(m.data()[1], 32768.0 / 65535.0);
}

TEST(LoadMap, KindOverride) {
    TempDir tmp;
    write_bytes(tmp / "a.pgm", pnm("P5", 1, 1, std::string(1, '\x10')));
    EXPECT_EQ(load_map(tmp / "a.pgm", MapKind::Other).kind(), MapKind::Other);
    EXPECT_THROW(load_map(tmp / "a.pgm", MapKind::Ipf), DomainError);
}

TEST(LoadMap, MalformedHeaderIsFormatError) {
    TempDir tmp;
    write_bytes(tmp / "a", pnm("P2", 1, 1, "0"));
    EXPECT_THROW(load_map(tmp / "a"), FormatError);
    write_bytes(tmp / "b", "P5\nx 1\n255\n\x01");
    EXPECT_THROW(load_map(tmp / "b"), FormatError);
    write_bytes(tmp / "c", pnm("P5", 1, 1, std::string(1, '\x01'), 0));
    EXPECT_THROW(load_map(tmp / "c"), FormatError);
    write_bytes(tmp / "d", pnm("P5", 1, 1, std::string(2, '\x01'), 70000));
    EXPECT_THROW(load_map(tmp / "d"), FormatError);
    write_bytes(tmp / "e", "P5\n2");
    EXPECT_THROW(load_map(tmp / "e"), FormatError);
}

TEST(LoadMap, TruncatedPayloadIsIoError) {
    TempDir tmp;
    write_bytes(tmp / "a.pgm", pnm("P5", 2, 2, std::string(3, '\x01')));
    EXPECT_THROW(load_map(tmp / "a.pgm"), IoError);
    EXPECT_THROW(load_map(tmp / "missing.pgm"), IoError);
}

TEST(LoadMap, SampleAboveMaxvalRejected) {
    TempDir tmp;
    write_bytes(tmp / "a.pgm", pnm("P5", 1, 1, std::string(1, '\x20'), 16));
    EXPECT_ANY_THROW(load_map(tmp / "a.pgm"));
}

TEST(SaveMap, WritesExactBytes) {
    TempDir tmp;
    save_map(MapImage(1, 2, 1, {0.0, 1.0}, MapKind::BandContrast), tmp / "a.pgm");
    EXPECT_EQ(read_bytes(tmp / "a.pgm"), pnm("P5", 1, 2, std::string("\x00\xff", 2)));
}

TEST(SaveMap, HalfRoundsUp) {
    TempDir tmp;
    save_map(MapImage(1, 1, 1, {0.5}, MapKind::BandContrast), tmp / "a.pgm");
    const std::string bytes = read_bytes(tmp / "a.pgm");
    EXPECT_EQ(static_cast<unsigned char>(bytes.back()), 128);
}

TEST(SaveMap, ColourUsesP6) {
    TempDir tmp;
    save_map(MapImage(1, 1, 3, {0.0, 0.5, 1.0}, MapKind::Ipf), tmp / "a.ppm");
    EXPECT_EQ(read_bytes(tmp / "a.ppm"), pnm("P6", 1, 1, std::string("\x00\x80\xff", 3)));
}

TEST(SaveMap, UnwritablePathIsIoError) {
    TempDir tmp;
    const MapImage m(1, 1, 1, {0.0}, MapKind::BandContrast);
    EXPECT_THROW(save_map(m, tmp / "no" / "such" / "dir" / "a.pgm"), IoError);
}

TEST(SaveMap, LeavesNoTemporaryBehind) {
    TempDir tmp;
    save_map(MapImage(1, 1, 1, {0.0}, MapKind::BandContrast), tmp / "a.pgm");
    std::size_t n = 0;
    for ([[maybe_unused]] const auto& e : std::filesystem::directory_iterator(tmp.path())) ++n;
    EXPECT_EQ(n, 1u);
}

// Property: any valid 8-bit file survives load -> save byte-for-byte.
TEST(MapRoundTrip, EightBitFilesAreByteIdentical) {
    TempDir tmp;
    std::mt19937_64 rng(11);
    std::uniform_int_distribution<int> dim(1, 40), byte(0, 255), coin(0, 1);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t w = dim(rng), h = dim(rng);
        const bool colour = coin(rng);
        std::string payload(w * h * (colour ? 3 : 1), '\0');
        for (char& c : payload) c = static_cast<char>(byte(rng));
        const std::string file = pnm(colour ? "P6" : "P5", w, h, payload);
        write_bytes(tmp / "in", file);
        save_map(load_map(tmp / "in"), tmp / "out");
        ASSERT_EQ(read_bytes(tmp / "out"), file) << "trial " << trial;
    }
}

// Property: quantization moves no value by more than half a grey level.
TEST(MapRoundTrip, QuantizationErrorBounded) {
    TempDir tmp;
    std::mt19937_64 rng(12);
    for (int trial = 0; trial < 50; ++trial) {
        const MapImage m = testing_support::random_map(rng, 1 + trial % 17, 1 + trial % 13, trial % 2 ? 3 : 1);
        save_map(m, tmp / "m");
        const MapImage back = load_map(tmp / "m");
        ASSERT_TRUE(back.same_shape(m));
        for (std::size_t i = 0; i < m.data().size(); ++i)
            ASSERT_LE(std::abs(back.data()[i] - m.data()[i]), 1.0 / 510.0 + 1e-15);
    }
}

TEST(Labels, RoundTripSixteenBit) {
    TempDir tmp;
    const std::vector<std::uint32_t> labels{0, 1, 300, 65535, 7, 2};
    save_labels(labels, 3, 2, tmp / "l.pgm");
    std::size_t w = 0, h = 0;
    EXPECT_EQ(load_labels(tmp / "l.pgm", &w, &h), labels);
    EXPECT_EQ(w, 3u);
    EXPECT_EQ(h, 2u);
    const std::vector<std::uint32_t> too_big{65536};
    EXPECT_THROW(save_labels(too_big, 1, 1, tmp / "x.pgm"), DomainError);
}

TEST(MetricsCsv, SingleRecordFormat) {
    TempDir tmp;
    MetricsRecord r{0.1, MapKind::BandContrast, 7, 0.8, 25.0, 1.0, 44.4};
    write_metrics_csv({r}, tmp / "m.csv");
    EXPECT_EQ(read_bytes(tmp / "m.csv"),
              "sampling_ratio,map_kind,seed,ssim,psnr_db,wall_time_s,estimated_acquisition_s\n"
              "0.100000,band_contrast,7,0.800000,25.000000,1.000000,44.400000\n");
}

TEST(MetricsCsv, InfinityWrittenAsInf) {
    MetricsRecord r{1.0, MapKind::Ipf, 0, 1.0, std::numeric_limits<double>::infinity(), 0.0, 0.0};
    EXPECT_EQ(format_metrics_row(r), "1.000000,ipf,0,1.000000,inf,0.000000,0.000000");
}

TEST(MetricsCsv, EmptyListRejected) {
    TempDir tmp;
    EXPECT_THROW(write_metrics_csv({}, tmp / "m.csv"), DomainError);
    EXPECT_FALSE(std::filesystem::exists(tmp / "m.csv"));
}

TEST(MetricsCsv, UnwritablePathIsIoError) {
    TempDir tmp;
    EXPECT_THROW(write_metrics_csv({MetricsRecord{}}, tmp / "missing" / "m.csv"), IoError);
}

// Property: parse-back reproduces every field to 1e-6.
TEST(MetricsCsv, RoundTripWithinPrecision) {
    TempDir tmp;
    std::mt19937_64 rng(13);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<MetricsRecord> recs(1 + trial % 9);
        for (auto& r : recs) {
            r.sampling_ratio = 0.001 + 0.999 * u(rng);
            r.map_kind = u(rng) < 0.5 ? MapKind::BandContrast : MapKind::Ipf;
            r.seed = rng();
            r.ssim = 2.0 * u(rng) - 1.0;
            r.psnr_db = u(rng) < 0.1 ? std::numeric_limits<double>::infinity() : 60.0 * u(rng);
            r.wall_time_s = 100.0 * u(rng);
            r.estimated_acquisition_s = 500.0 * u(rng);
        }
        write_metrics_csv(recs, tmp / "m.csv");
        const auto back = read_metrics_csv(tmp / "m.csv");
        ASSERT_EQ(back.size(), recs.size());
        for (std::size_t i = 0; i < recs.size(); ++i) {
            EXPECT_NEAR(back[i].sampling_ratio, recs[i].sampling_ratio, 1e-6);
            EXPECT_EQ(back[i].map_kind, recs[i].map_kind);
            EXPECT_EQ(back[i].seed, recs[i].seed);
            EXPECT_NEAR(back[i].ssim, recs[i].ssim, 1e-6);
            if (std::isinf(recs[i].psnr_db))
                EXPECT_TRUE(std::isinf(back[i].psnr_db));
            else
                EXPECT_NEAR(back[i].psnr_db, recs[i].psnr_db, 1e-6);
            EXPECT_NEAR(back[i].wall_time_s, recs[i].wall_time_s, 1e-6);
            EXPECT_NEAR(back[i].estimated_acquisition_s, recs[i].estimated_acquisition_s, 1e-6);
        }
    }
}

TEST(MetricsCsv, RejectsForeignHeader) {
    TempDir tmp;
    write_bytes(tmp / "m.csv", "a,b\n1,2\n");
    EXPECT_THROW(read_metrics_csv(tmp / "m.csv"), FormatError);
}

TEST(MapKindNames, RoundTrip) {
    for (MapKind k : {MapKind::BandContrast, MapKind::Ipf, MapKind::Other}) EXPECT_EQ(parse_map_kind(to_string(k)), k);
    EXPECT_THROW(parse_map_kind("rgb"), DomainError);
}
