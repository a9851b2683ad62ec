#include <gtest/gtest.h>

#include <sstream>

#include "cli.hpp"
#include "support.hpp"

using namespace ebsdcs;
using testing_support::read_bytes;
using testing_support::TempDir;

namespace {

struct Outcome {
    int code;
    std::string out;
    std::string err;
};

Outcome run(std::vector<std::string> args) {
    args.insert(args.begin(), "ebsdcs");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
    return {code, out.str(), err.str()};
}

std::size_t entries(const std::filesystem::path& dir) {
    if (!std::filesystem::exists(dir)) return 0;
    std::size_t n = 0;
    for ([[maybe_unused]] const auto& e : std::filesystem::directory_iterator(dir)) ++n;
    return n;
}

// Small fast settings for the Gibbs sampler.
const std::vector<std::string> kQuick{"--atoms", "8", "--burn-in", "2", "--samples", "2"};

std::vector<std::string> cat(std::vector<std::string> a, const std::vector<std::string>& b) {
    a.insert(a.end(), b.begin(), b.end());
    return a;
}

} // namespace

TEST(Cli, MaskOnDefaultGridHas6554Indices) {
    TempDir tmp;
    const Outcome r = run({"--out-dir", tmp.path().string(), "--seed", "4", "mask", "--ratio", "0.1"});
    ASSERT_EQ(r.code, 0) << r.err;
    const SamplingSet s = load_sampling_set(tmp / "mask.txt");
    EXPECT_EQ(s.n_positions(), 65536u);
    EXPECT_EQ(s.size(), 6554u);
    EXPECT_EQ(s.seed(), 4u);
}

TEST(Cli, MissingInputExitsOneWithoutOutputs) {
    TempDir tmp;
    const auto out = tmp / "out";
    const Outcome r = run({"--out-dir", out.string(), "inpaint", "--input", (tmp / "nope.pgm").string(), "--ratio", "0.1"});
    EXPECT_EQ(r.code, 1);
    EXPECT_EQ(std::count(r.err.begin(), r.err.end(), '\n'), 1) << r.err;
    EXPECT_NE(r.err.find("nope.pgm"), std::string::npos);
    EXPECT_EQ(entries(out), 0u);
}

TEST(Cli, UsageErrorsExitTwo) {
    TempDir tmp;
    EXPECT_EQ(run({}).code, 2);
    EXPECT_EQ(run({"frobnicate"}).code, 2);
    EXPECT_EQ(run({"mask", "--ratio", "abc"}).code, 2);
    EXPECT_EQ(run({"mask", "--bogus"}).code, 2);
    EXPECT_EQ(run({"--out-dir", tmp.path().string(), "mask"}).code, 2);
    EXPECT_EQ(run({"inpaint", "--input", "x.pgm"}).code, 2);
    EXPECT_EQ(run({"inpaint", "--input", "x.pgm", "--ratio", "0.1", "--mask", "m.txt"}).code, 2);
    EXPECT_EQ(entries(tmp.path()), 0u);
}

TEST(Cli, DomainErrorsExitOne) {
    TempDir tmp;
    const Outcome r = run({"--out-dir", tmp.path().string(), "mask", "--ratio", "1.5"});
    EXPECT_EQ(r.code, 1);
    EXPECT_EQ(entries(tmp.path()), 0u);
}

TEST(Cli, HelpExitsZero) {
    const Outcome r = run({"--help"});
    EXPECT_EQ(r.code, 0);
    EXPECT_NE(r.out.find("inpaint"), std::string::npos);
}

TEST(Cli, FullSamplingInpaintThenMetricsReportsSsimOne) {
    TempDir tmp;
    const std::string dir = tmp.path().string();
    ASSERT_EQ(run({"--out-dir", dir, "--seed", "2", "phantom", "--width", "32", "--height", "32", "--grains", "6"}).code, 0);
    for (const char* f : {"band_contrast.pgm", "ipf.ppm", "labels.pgm"}) EXPECT_TRUE(std::filesystem::exists(tmp / f));

    const Outcome inp = run(cat({"--out-dir", dir + "/rec", "inpaint", "--input", dir + "/ipf.ppm", "--ratio", "1.0",
                             "--noise-sigma", "0"},
                            kQuick));
    ASSERT_EQ(inp.code, 0) << inp.err;
    for (const char* f : {"reconstruction.ppm", "mask.txt", "diagnostics.csv", "dictionary.bin", "dictionary.txt"})
        EXPECT_TRUE(std::filesystem::exists(tmp / "rec" / f)) << f;
    EXPECT_EQ(read_bytes(tmp / "rec" / "reconstruction.ppm"), read_bytes(tmp / "ipf.ppm"));
    EXPECT_EQ(read_bytes(tmp / "rec" / "dictionary.txt"), "192 8\n");

    const Outcome met = run({"--out-dir", dir + "/rec", "metrics", "--input", dir + "/rec/reconstruction.ppm", "--reference",
                         dir + "/ipf.ppm"});
    ASSERT_EQ(met.code, 0) << met.err;
    EXPECT_NE(met.out.find("SSIM = 1.000000"), std::string::npos) << met.out;
    EXPECT_NE(met.out.find("PSNR = inf dB"), std::string::npos) << met.out;
    const auto recs = read_metrics_csv(tmp / "rec" / "metrics.csv");
    ASSERT_EQ(recs.size(), 1u);
    EXPECT_EQ(recs[0].ssim, 1.0);
    EXPECT_EQ(recs[0].map_kind, MapKind::Ipf);
}

TEST(Cli, SubsampleThenInpaintWithMaskFile) {
    TempDir tmp;
    const std::string dir = tmp.path().string();
    ASSERT_EQ(run({"--out-dir", dir, "phantom", "--width", "32", "--height", "32", "--grains", "4"}).code, 0);
    ASSERT_EQ(run({"--out-dir", dir, "--seed", "3", "subsample", "--input", dir + "/band_contrast.pgm", "--ratio", "0.3"})
                  .code,
              0);
    const SamplingSet s = load_sampling_set(tmp / "mask.txt");
    EXPECT_EQ(s.size(), 307u);
    const MapImage sub = load_map(tmp / "subsampled.pgm");
    const auto flags = s.observed_flags();
    for (std::size_t j = 0; j < sub.positions(); ++j)
        if (!flags[j]) EXPECT_EQ(sub.data()[j], 0.0);

    const Outcome r = run(cat({"--out-dir", dir + "/rec", "inpaint", "--input", dir + "/subsampled.pgm", "--mask",
                           dir + "/mask.txt"},
                          kQuick));
    ASSERT_EQ(r.code, 0) << r.err;
    const MapImage rec = load_map(tmp / "rec" / "reconstruction.pgm");
    for (std::size_t j : s.indices()) EXPECT_EQ(rec.data()[j], sub.data()[j]);
}

TEST(Cli, MaskSizeMismatchIsRuntimeError) {
    TempDir tmp;
    const std::string dir = tmp.path().string();
    ASSERT_EQ(run({"--out-dir", dir, "phantom", "--width", "16", "--height", "16", "--grains", "3"}).code, 0);
    ASSERT_EQ(run({"--out-dir", dir + "/m", "mask", "--ratio", "0.5", "--width", "10", "--height", "10"}).code, 0);
    const Outcome r = run(cat({"--out-dir", dir + "/rec", "inpaint", "--input", dir + "/band_contrast.pgm", "--mask",
                           dir + "/m/mask.txt"},
                          kQuick));
    EXPECT_EQ(r.code, 1);
    EXPECT_EQ(entries(tmp / "rec"), 0u);
}

TEST(Cli, RerunIsByteIdentical) {
    TempDir tmp;
    const std::string dir = tmp.path().string();
    ASSERT_EQ(run({"--out-dir", dir, "--seed", "5", "phantom", "--width", "32", "--height", "32"}).code, 0);
    for (const char* sub : {"a", "b"}) {
        const Outcome r = run(cat({"--out-dir", dir + "/" + sub, "--seed", "6", "inpaint", "--input",
                               dir + "/band_contrast.pgm", "--ratio", "0.2"},
                              kQuick));
        ASSERT_EQ(r.code, 0) << r.err;
    }
    for (const char* f : {"reconstruction.pgm", "mask.txt", "diagnostics.csv", "dictionary.bin"})
        EXPECT_EQ(read_bytes(tmp / "a" / f), read_bytes(tmp / "b" / f)) << f;
}

TEST(Cli, JsonConfigAppliesAndFlagsOverride) {
    TempDir tmp;
    const std::string dir = tmp.path().string();
    testing_support::write_bytes(tmp / "cfg.json", R"({"ratio": 0.25, "width": 20, "height": 10, "seed": 9})");
    ASSERT_EQ(run({"--config", dir + "/cfg.json", "--out-dir", dir + "/a", "mask"}).code, 0);
    SamplingSet s = load_sampling_set(tmp / "a" / "mask.txt");
    EXPECT_EQ(s.n_positions(), 200u);
    EXPECT_EQ(s.size(), 50u);
    EXPECT_EQ(s.seed(), 9u);

    ASSERT_EQ(run({"--config", dir + "/cfg.json", "--out-dir", dir + "/b", "--seed", "1", "mask", "--ratio", "0.5"}).code,
              0);
    s = load_sampling_set(tmp / "b" / "mask.txt");
    EXPECT_EQ(s.size(), 100u);
    EXPECT_EQ(s.seed(), 1u);

    testing_support::write_bytes(tmp / "bad.json", R"({"ratioo": 0.25})");
    EXPECT_EQ(run({"--config", dir + "/bad.json", "--out-dir", dir + "/c", "mask"}).code, 2);
    testing_support::write_bytes(tmp / "broken.json", "{");
    EXPECT_EQ(run({"--config", dir + "/broken.json", "--out-dir", dir + "/c", "mask", "--ratio", "0.1"}).code, 1);
    EXPECT_EQ(entries(tmp / "c"), 0u);
}

TEST(Cli, SweepWritesCsvPlotsAndReport) {
    TempDir tmp;
    const std::string dir = tmp.path().string();
    testing_support::write_bytes(tmp / "cfg.json",
                                 R"({"ratios": [0.2, 0.4], "seeds": [1, 2], "width": 24, "height": 24, "grains": 4,
                                     "atoms": 8, "burn_in": 2, "samples": 2, "quiet": true})");
    const Outcome r = run({"--config", dir + "/cfg.json", "--out-dir", dir + "/sw", "sweep"});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto recs = read_metrics_csv(tmp / "sw" / "metrics.csv");
    EXPECT_EQ(recs.size(), 2u * 2u * 2u);
    for (const char* f : {"ssim.svg", "psnr.svg", "report.txt"}) EXPECT_TRUE(std::filesystem::exists(tmp / "sw" / f));
    const std::string report = read_bytes(tmp / "sw" / "report.txt");
    EXPECT_NE(report.find("patch geometry"), std::string::npos);
    EXPECT_NE(report.find("K = 8"), std::string::npos);
}

TEST(Cli, SweepRejectsBadRatiosAndFailedLegExitsOne) {
    TempDir tmp;
    const std::string dir = tmp.path().string();
    // 0.0005 * 576 rounds to zero positions, so the first leg fails.
    const Outcome r = run(cat({"--out-dir", dir, "sweep", "--quiet", "--ratios", "0.5", "0.0005", "--seeds", "1", "--kinds",
                           "band_contrast", "--width", "24", "--height", "24", "--grains", "4"},
                          kQuick));
    EXPECT_EQ(r.code, 1);  // ratios must ascend: rejected before any leg runs
    EXPECT_EQ(entries(tmp.path()), 0u);

    const Outcome r2 = run(cat({"--out-dir", dir, "sweep", "--quiet", "--ratios", "0.0005", "0.5", "--seeds", "1", "--kinds",
                            "band_contrast", "--width", "24", "--height", "24", "--grains", "4"},
                           kQuick));
    EXPECT_EQ(r2.code, 1);
    EXPECT_FALSE(std::filesystem::exists(tmp / "metrics.csv"));
}
