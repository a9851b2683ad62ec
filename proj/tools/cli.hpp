#ifndef EBSDCS_TOOLS_CLI_HPP
#define EBSDCS_TOOLS_CLI_HPP

// Command-line front end. Kept in a header so the test suite can drive the
// exact same code in-process.

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "ebsdcs/bpfa.hpp"
#include "ebsdcs/errors.hpp"
#include "ebsdcs/map_image.hpp"
#include "ebsdcs/metrics.hpp"
#include "ebsdcs/metrics_csv.hpp"
#include "ebsdcs/phantom.hpp"
#include "ebsdcs/pipeline.hpp"
#include "ebsdcs/sampler.hpp"

namespace ebsdcs::cli {

namespace fs = std::filesystem;

// Distinguishes bad invocations (exit 2) from runtime failures (exit 1).
class UsageError : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Options {
    std::uint64_t seed = 0;
    std::string out_dir = ".";
    std::string config;

    std::string input;
    std::string mask;
    std::string reference;
    std::optional<double> ratio;
    double noise_sigma = 0.0;
    std::optional<std::string> kind;

    std::size_t width = 256;
    std::size_t height = 256;
    PhantomSpec phantom;

    PatchParams patch;
    BpfaHyperParams bpfa;
    double rate = kDefaultPatternsPerSecond;

    std::vector<double> ratios{0.01, 0.05, 0.10, 0.15, 0.25};
    std::vector<std::uint64_t> seeds;
    std::size_t n_seeds = 5;
    std::vector<std::string> kinds{"band_contrast", "ipf"};
    unsigned jobs = 1;
    bool quiet = false;
};

inline std::string map_extension(const MapImage& m) { return m.channels() == 1 ? ".pgm" : ".ppm"; }

inline std::optional<MapKind> kind_override(const Options& o) {
    if (!o.kind) return std::nullopt;
    return parse_map_kind(*o.kind);
}

// Applies flat key/value pairs from a JSON file to every option of `app` or
// the active subcommand that was not given on the command line. Keys may use
// '_' or '-' between words.
inline void apply_json_config(CLI::App& app, CLI::App* sub, const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError(path + ": cannot open config file");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(path + ": " + e.what());
    }
    if (!j.is_object()) throw FormatError(path + ": config must be a flat JSON object");

    auto known_anywhere = [&](const std::string& name) {
        if (app.get_option_no_throw(name)) return true;
        for (const CLI::App* s : app.get_subcommands([](const CLI::App*) { return true; }))
            if (s->get_option_no_throw(name)) return true;
        return false;
    };
    auto scalar = [&](const std::string& key, const nlohmann::json& v) -> std::string {
        if (v.is_string()) return v.get<std::string>();
        if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
        if (v.is_number_unsigned()) return std::to_string(v.get<std::uint64_t>());
        if (v.is_number_integer()) return std::to_string(v.get<std::int64_t>());
        if (v.is_number_float()) {
            char buf[40];
            std::snprintf(buf, sizeof buf, "%.17g", v.get<double>());
            return buf;
        }
        throw FormatError(path + ": unsupported value for '" + key + "'");
    };

    for (const auto& [key, value] : j.items()) {
        std::string name = "--" + key;
        std::replace(name.begin() + 2, name.end(), '_', '-');
        if (name == "--config") continue;
        if (!known_anywhere(name)) throw UsageError(path + ": unknown config key '" + key + "'");
        CLI::Option* opt = sub ? sub->get_option_no_throw(name) : nullptr;
        if (!opt) opt = app.get_option_no_throw(name);
        if (!opt || opt->count() > 0) continue;
        if (value.is_array()) {
            for (const auto& item : value) opt->add_result(scalar(key, item));
        } else {
            opt->add_result(scalar(key, value));
        }
        try {
            opt->run_callback();
        } catch (const CLI::ParseError& e) {
            throw UsageError(path + ": " + key + ": " + e.what());
        }
    }
}

inline void add_patch_flags(CLI::App* c, Options& o) {
    c->add_option("--patch-size", o.patch.patch_size, "patch edge length B")->capture_default_str();
    c->add_option("--stride", o.patch.stride, "patch anchor stride")->capture_default_str();
    c->add_option("--keep-measured", o.patch.keep_measured,
                  "overwrite sampled positions with measured values (default: true iff noise-sigma = 0)");
}

inline void add_bpfa_flags(CLI::App* c, Options& o) {
    c->add_option("--atoms", o.bpfa.atoms, "dictionary size K")->capture_default_str();
    c->add_option("--a0", o.bpfa.a0)->capture_default_str();
    c->add_option("--b0", o.bpfa.b0)->capture_default_str();
    c->add_option("--c0", o.bpfa.c0)->capture_default_str();
    c->add_option("--d0", o.bpfa.d0)->capture_default_str();
    c->add_option("--e0", o.bpfa.e0)->capture_default_str();
    c->add_option("--f0", o.bpfa.f0)->capture_default_str();
    c->add_option("--burn-in", o.bpfa.burn_in, "Gibbs sweeps discarded")->capture_default_str();
    c->add_option("--samples", o.bpfa.samples, "Gibbs sweeps averaged")->capture_default_str();
}

inline void add_phantom_flags(CLI::App* c, Options& o) {
    c->add_option("--width", o.phantom.width)->capture_default_str();
    c->add_option("--height", o.phantom.height)->capture_default_str();
    c->add_option("--grains", o.phantom.n_grains)->capture_default_str();
    c->add_option("--boundary-width", o.phantom.boundary_width_px)->capture_default_str();
    c->add_option("--bc-low", o.phantom.bc_grain_low)->capture_default_str();
    c->add_option("--bc-high", o.phantom.bc_grain_high)->capture_default_str();
    c->add_option("--bc-boundary", o.phantom.bc_boundary_level)->capture_default_str();
}

// Loads --input and builds the sampling set from --mask or --ratio.
inline std::pair<MapImage, SamplingSet> load_input_and_mask(const Options& o) {
    MapImage map = load_map(o.input, kind_override(o));
    if (!o.mask.empty()) {
        SamplingSet s = load_sampling_set(o.mask);
        if (s.n_positions() != map.positions())
            throw DomainError(o.mask + ": mask has " + std::to_string(s.n_positions()) +
                              " positions but the map has " + std::to_string(map.positions()));
        return {std::move(map), std::move(s)};
    }
    SamplingSet s = generate_uniform_mask(map.positions(), *o.ratio, o.seed);
    return {std::move(map), std::move(s)};
}

inline void require_mask_or_ratio(const Options& o) {
    if (o.mask.empty() == !o.ratio.has_value()) throw UsageError("exactly one of --mask or --ratio is required");
}

inline void require(const std::string& value, const char* flag) {
    if (value.empty()) throw UsageError(std::string(flag) + " is required");
}

inline int cmd_phantom(const Options& o, std::ostream& out) {
    PhantomSpec spec = o.phantom;
    spec.seed = o.seed;
    Phantom ph = generate_phantom(spec);
    const fs::path dir(o.out_dir);
    fs::create_directories(dir);
    save_map(ph.band_contrast, dir / "band_contrast.pgm");
    save_map(ph.ipf, dir / "ipf.ppm");
    save_labels(ph.labels, spec.width, spec.height, dir / "labels.pgm");
    out << "wrote " << (dir / "band_contrast.pgm").string() << ", " << (dir / "ipf.ppm").string() << ", "
        << (dir / "labels.pgm").string() << '\n';
    return 0;
}

inline int cmd_mask(const Options& o, std::ostream& out) {
    if (!o.ratio) throw UsageError("--ratio is required");
    std::size_t n = o.width * o.height;
    if (!o.input.empty()) n = load_map(o.input, kind_override(o)).positions();
    SamplingSet s = generate_uniform_mask(n, *o.ratio, o.seed);
    const fs::path dir(o.out_dir);
    fs::create_directories(dir);
    save_sampling_set(s, dir / "mask.txt");
    out << "M = " << s.size() << " of " << s.n_positions() << " positions -> " << (dir / "mask.txt").string()
        << '\n';
    return 0;
}

inline int cmd_subsample(const Options& o, std::ostream& out) {
    require(o.input, "--input");
    require_mask_or_ratio(o);
    auto [map, s] = load_input_and_mask(o);
    MaskedMap masked = apply_acquisition(map, s, o.noise_sigma, noise_seed(o.seed));
    const fs::path dir(o.out_dir);
    fs::create_directories(dir);
    const fs::path img = dir / ("subsampled" + map_extension(masked.map));
    save_map(masked.map, img);
    save_sampling_set(masked.sampling, dir / "mask.txt");
    out << "wrote " << img.string() << " (" << masked.sampling.size() << " sampled positions)\n";
    return 0;
}

inline int cmd_inpaint(const Options& o, std::ostream& out) {
    require(o.input, "--input");
    require_mask_or_ratio(o);
    auto [map, s] = load_input_and_mask(o);
    MaskedMap masked = apply_acquisition(map, s, o.noise_sigma, noise_seed(o.seed));
    BpfaHyperParams hp = o.bpfa;
    hp.seed = o.seed;
    const auto t0 = std::chrono::steady_clock::now();
    InpaintResult res = inpaint(masked, o.patch, hp);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    const fs::path dir(o.out_dir);
    fs::create_directories(dir);
    const fs::path img = dir / ("reconstruction" + map_extension(res.map));
    save_map(res.map, img);
    save_sampling_set(masked.sampling, dir / "mask.txt");
    write_diagnostics_csv(res.diagnostics, dir / "diagnostics.csv");
    save_dictionary(res.state, dir / "dictionary.bin", dir / "dictionary.txt");
    out << "wrote " << img.string() << " after " << res.diagnostics.size() << " sweeps in " << secs << " s\n";
    return 0;
}

inline int cmd_metrics(const Options& o, std::ostream& out) {
    require(o.input, "--input");
    require(o.reference, "--reference");
    MapImage truth = load_map(o.reference, kind_override(o));
    MapImage recon = load_map(o.input, truth.kind());
    MetricsRecord rec;
    rec.sampling_ratio = o.ratio.value_or(1.0);
    rec.map_kind = truth.kind();
    rec.seed = o.seed;
    rec.ssim = ssim(recon, truth);
    rec.psnr_db = psnr(recon, truth);
    rec.estimated_acquisition_s = acquisition_time_estimate(truth.positions(), rec.sampling_ratio, o.rate);
    const fs::path dir(o.out_dir);
    fs::create_directories(dir);
    write_metrics_csv({rec}, dir / "metrics.csv");
    char buf[128];
    std::snprintf(buf, sizeof buf, "SSIM = %.6f\nPSNR = %s dB\n", rec.ssim,
                  std::isinf(rec.psnr_db) ? "inf" : std::to_string(rec.psnr_db).c_str());
    out << buf;
    return 0;
}

inline int cmd_sweep(const Options& o, std::ostream& out) {
    SweepConfig cfg;
    cfg.ratios = o.ratios;
    if (!o.seeds.empty()) {
        cfg.seeds = o.seeds;
    } else {
        cfg.seeds.clear();
        for (std::size_t i = 1; i <= o.n_seeds; ++i) cfg.seeds.push_back(o.seed + i);
    }
    cfg.kinds.clear();
    for (const auto& k : o.kinds) cfg.kinds.push_back(parse_map_kind(k));
    cfg.pipeline.patch = o.patch;
    cfg.pipeline.bpfa = o.bpfa;
    cfg.pipeline.noise_sigma = o.noise_sigma;
    cfg.pipeline.patterns_per_second = o.rate;
    cfg.phantom = o.phantom;
    cfg.phantom.seed = o.seed;
    cfg.jobs = o.jobs;
    cfg.validate();

    Phantom ph = generate_phantom(cfg.phantom);
    const fs::path dir(o.out_dir);
    fs::create_directories(dir);
    std::vector<MetricsRecord> records;
    try {
        records = run_sweep(cfg, ph.band_contrast, ph.ipf, [&](const MetricsRecord& r) {
            if (o.quiet) return;
            char buf[160];
            std::snprintf(buf, sizeof buf, "%-13s ratio %.2f seed %llu  SSIM %.4f  PSNR %.2f dB  %.1f s\n",
                          std::string(to_string(r.map_kind)).c_str(), r.sampling_ratio,
                          static_cast<unsigned long long>(r.seed), r.ssim, r.psnr_db, r.wall_time_s);
            out << buf << std::flush;
        });
    } catch (const SweepError& e) {
        if (!e.partial().empty()) write_metrics_csv(e.partial(), dir / "metrics.csv");
        throw;
    }
    write_metrics_csv(records, dir / "metrics.csv");
    const std::string ssim_svg = render_svg(records, Metric::Ssim);
    const std::string psnr_svg = render_svg(records, Metric::Psnr);
    const std::string report = render_report(cfg, records);
    detail::write_atomically(dir / "ssim.svg", [&](std::ostream& f) { f << ssim_svg; }, false);
    detail::write_atomically(dir / "psnr.svg", [&](std::ostream& f) { f << psnr_svg; }, false);
    detail::write_atomically(dir / "report.txt", [&](std::ostream& f) { f << report; }, false);
    out << report;
    return 0;
}

/// Runs the command line; returns the process exit code. Diagnostics go to
/// `err` as a single line.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    Options o;
    CLI::App app{"Subsampled EBSD map reconstruction by beta process factor analysis", "ebsdcs"};
    app.require_subcommand(1);
    app.add_option("--seed", o.seed, "seed for every random draw")->capture_default_str();
    app.add_option("--out-dir", o.out_dir, "output directory")->capture_default_str();
    app.add_option("--config", o.config, "flat JSON object of flag values; explicit flags win");

    auto* ph = app.add_subcommand("phantom", "generate a Voronoi grain phantom");
    add_phantom_flags(ph, o);

    auto* mk = app.add_subcommand("mask", "draw a uniform random sampling set");
    mk->add_option("--ratio", o.ratio, "sampling ratio in (0, 1]");
    mk->add_option("--input", o.input, "map whose size defines the positions");
    mk->add_option("--width", o.width)->capture_default_str();
    mk->add_option("--height", o.height)->capture_default_str();

    auto* ss = app.add_subcommand("subsample", "simulate a subsampled acquisition of a map");
    ss->add_option("--input", o.input, "map file (PGM/PPM)");
    ss->add_option("--mask", o.mask, "mask file");
    ss->add_option("--ratio", o.ratio, "draw a uniform mask with this ratio instead");
    ss->add_option("--noise-sigma", o.noise_sigma, "acquisition noise standard deviation")->capture_default_str();
    ss->add_option("--kind", o.kind, "band_contrast | ipf | other");

    auto* ip = app.add_subcommand("inpaint", "reconstruct a map from its sampled positions");
    ip->add_option("--input", o.input, "map file (PGM/PPM)");
    ip->add_option("--mask", o.mask, "mask file");
    ip->add_option("--ratio", o.ratio, "draw a uniform mask with this ratio instead");
    ip->add_option("--noise-sigma", o.noise_sigma, "acquisition noise standard deviation")->capture_default_str();
    ip->add_option("--kind", o.kind, "band_contrast | ipf | other");
    add_patch_flags(ip, o);
    add_bpfa_flags(ip, o);

    auto* me = app.add_subcommand("metrics", "SSIM and PSNR of a reconstruction against ground truth");
    me->add_option("--input", o.input, "reconstructed map");
    me->add_option("--reference", o.reference, "ground-truth map");
    me->add_option("--ratio", o.ratio, "sampling ratio recorded in metrics.csv (default 1)");
    me->add_option("--rate", o.rate, "patterns per second")->capture_default_str();
    me->add_option("--kind", o.kind, "band_contrast | ipf | other");

    auto* sw = app.add_subcommand("sweep", "ratio x seed x map-kind experiment on the phantom");
    sw->add_option("--ratios", o.ratios, "ascending sampling ratios")->capture_default_str();
    sw->add_option("--seeds", o.seeds, "leg seeds (default: seed+1 .. seed+n-seeds)");
    sw->add_option("--n-seeds", o.n_seeds)->capture_default_str();
    sw->add_option("--kinds", o.kinds, "band_contrast and/or ipf")->capture_default_str();
    sw->add_option("--rate", o.rate, "patterns per second")->capture_default_str();
    sw->add_option("--noise-sigma", o.noise_sigma)->capture_default_str();
    sw->add_option("--jobs", o.jobs, "parallel legs")->capture_default_str();
    sw->add_flag("--quiet", o.quiet, "no per-leg progress");
    add_phantom_flags(sw, o);
    add_patch_flags(sw, o);
    add_bpfa_flags(sw, o);

    try {
        app.parse(argc, argv);
        CLI::App* sub = app.get_subcommands().empty() ? nullptr : app.get_subcommands().front();
        if (!o.config.empty()) apply_json_config(app, sub, o.config);
        if (sub == ph) return cmd_phantom(o, out);
        if (sub == mk) return cmd_mask(o, out);
        if (sub == ss) return cmd_subsample(o, out);
        if (sub == ip) return cmd_inpaint(o, out);
        if (sub == me) return cmd_metrics(o, out);
        return cmd_sweep(o, out);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        err << "ebsdcs: " << e.what() << '\n';
        return 2;
    } catch (const UsageError& e) {
        err << "ebsdcs: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        err << "ebsdcs: " << e.what() << '\n';
        return 1;
    }
}

} // namespace ebsdcs::cli

#endif
