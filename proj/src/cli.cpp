#include "spf/cli.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>
#include <fmt/ostream.h>

#include <iostream>
#include <optional>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "spf/detect.hpp"
#include "spf/evaluate.hpp"
#include "spf/mrf_tree.hpp"
#include "spf/simulate.hpp"
#include "spf/text_io.hpp"
#include "spf/tracker.hpp"
#include "spf/view_bundle.hpp"
#include "spf/volume.hpp"

#ifndef SPF_VERSION
#define SPF_VERSION "0.0.0"
#endif

namespace spf::cli {
namespace {

namespace fs = std::filesystem;

// Output files must land in an existing directory.
const auto kWritable = CLI::Validator(
    [](std::string& p) -> std::string {
        const auto parent = fs::path(p).parent_path();
        if (!parent.empty() && !fs::is_directory(parent))
            return fmt::format("directory '{}' does not exist", parent.string());
        return {};
    },
    "WRITABLE");

struct ConvertArgs {
    std::string input_dir, pattern, dims, median, out;
    bool subtract_bg = false;
};

struct DetectArgs {
    std::string volume, out, tree_out, peak_window = "3,3,1";
    std::size_t frame = 0, min_cluster_size = 3;
    double lambda = 8.0, z_scale = 3.0;
    std::optional<double> min_intensity;
};

struct TrackArgs {
    std::string volume, centroids, tree, config, method = "spf", out;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> ref_frame;
    double z_scale = 3.0;
};

struct SimulateArgs {
    std::string config, init, out, truth, centroids_out, tree_out, dims;
    std::optional<std::size_t> scatter, frames;
    std::optional<std::uint64_t> seed;
};

struct EvaluateArgs {
    std::string result, truth, report, detected;
    double threshold = 4.5, z_scale = 3.0, match_radius = 5.0;
};

struct ExportArgs {
    std::string volume, result, out;
    std::optional<int> floor;
    std::string stride = "2,2,1";
    double z_scale = 3.0;
};

Dims4 parse_dims(const std::string& text) {
    std::vector<std::size_t> v;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            v.push_back(std::stoul(item));
        } catch (const std::exception&) {
            throw DataError(fmt::format("bad --dims '{}'", text));
        }
    }
    if (v.size() != 4) throw DataError(fmt::format("--dims expects T,Z,Y,X, got '{}'", text));
    return {v[0], v[1], v[2], v[3]};
}

int do_convert(const ConvertArgs& a, std::ostream& out) {
    auto vol = load_slices(a.input_dir, a.pattern, parse_dims(a.dims));
    if (a.subtract_bg) vol = subtract_background(vol);
    if (!a.median.empty()) vol = median_filter(vol, parse_long_triple(a.median));
    write_volume(vol, a.out);
    const auto& d = vol.dims();
    fmt::print(out, "wrote {} ({}x{}x{}x{}, {})\n", a.out, d.t, d.z, d.y, d.x, dtype_name(vol.dtype()));
    return kExitOk;
}

int do_detect(const DetectArgs& a, std::ostream& out) {
    auto vol = read_volume(a.volume);
    vol.set_z_scale(a.z_scale);
    if (a.frame >= vol.dims().t)
        throw DataError(fmt::format("--frame {} outside the volume's {} frames", a.frame, vol.dims().t));
    DetectConfig cfg;
    cfg.lambda = a.lambda;
    cfg.peak_window = parse_long_triple(a.peak_window);
    cfg.min_intensity = a.min_intensity;
    cfg.min_cluster_size = a.min_cluster_size;
    const auto cells = detect_cells(vol.frame(a.frame), vol.z_scale(), cfg);
    write_centroids(a.out, cells.centroids);
    if (!a.tree_out.empty() && !cells.centroids.empty()) write_tree(a.tree_out, build_cell_tree(cells.centroids));
    fmt::print(out, "detected {} cells\n", cells.k());
    return kExitOk;
}

int do_track(const TrackArgs& a, int threads, std::ostream& out) {
    TrackConfig cfg;
    if (!a.config.empty()) apply_track_config(read_key_values(a.config), cfg);
    if (a.seed) cfg.seed = *a.seed;
    if (a.ref_frame) cfg.ref_frame = *a.ref_frame;
    if (threads > 0) cfg.threads = threads;
    auto vol = read_volume(a.volume);
    vol.set_z_scale(a.z_scale);
    const auto centroids = read_centroids(a.centroids);
    if (centroids.empty()) throw DataError(fmt::format("'{}' holds no centroids", a.centroids));
    TrackResult result;
    if (a.method == "pf") {
        result = track_all_pf(vol, centroids, cfg);
    } else {
        const auto tree = a.tree.empty() ? build_cell_tree(centroids) : read_tree(a.tree, centroids);
        result = track_all(vol, tree, cfg);
    }
    write_result(a.out, result);
    if (result.uniform_fallbacks > 0)
        fmt::print(out, "warning: {} filter updates had no usable weights and resampled uniformly\n",
                   result.uniform_fallbacks);
    fmt::print(out, "tracked {} cells over {} frames ({})\n", result.cells, result.frames, result.method);
    return kExitOk;
}

int do_simulate(const SimulateArgs& a, std::ostream& out) {
    SimConfig cfg;
    if (!a.config.empty()) apply_sim_config(read_key_values(a.config), cfg);
    if (!a.dims.empty()) {
        const auto d = parse_dims(a.dims);
        cfg.frames = d.t;
        cfg.z = d.z;
        cfg.y = d.y;
        cfg.x = d.x;
    }
    if (a.frames) cfg.frames = *a.frames;
    if (a.seed) cfg.seed = *a.seed;
    const Positions init = a.scatter ? scatter_points(*a.scatter, cfg) : read_centroids(a.init);
    if (init.empty()) throw DataError("no initial positions to simulate");
    auto [vol, gt] = generate_dataset(cfg, init);
    write_volume(vol, a.out);
    write_truth(a.truth, gt);
    if (!a.centroids_out.empty()) write_centroids(a.centroids_out, init);
    if (!a.tree_out.empty()) write_tree(a.tree_out, gt.tree);
    fmt::print(out, "simulated {} cells over {} frames\n", gt.cells, gt.frames);
    return kExitOk;
}

int do_evaluate(const EvaluateArgs& a, std::ostream& out) {
    const auto result = read_result(a.result);
    const auto truth = read_truth(a.truth);
    if (result.frames != truth.frames || result.cells != truth.cells)
        throw DataError(fmt::format("result is {}x{} but truth is {}x{}", result.frames, result.cells, truth.frames,
                                    truth.cells));
    auto report = evaluate(to_index_space(result.estimates, result.z_scale),
                           to_index_space(truth.positions, truth.z_scale), truth.visible, truth.cells, a.threshold,
                           a.z_scale);
    if (!a.detected.empty()) {
        const auto detected = to_index_space(read_centroids(a.detected), a.z_scale);
        Positions annotated;
        for (std::size_t k = 0; k < truth.cells; ++k)
            if (truth.is_visible(0, k)) annotated.push_back(physical_to_index(truth.at(0, k), truth.z_scale));
        report.detection = detection_metrics(detected, annotated, a.match_radius);
    }
    fs::path tsv = a.report;
    tsv.replace_extension(".tsv");
    write_report(report, a.report, tsv);
    fmt::print(out, "failures/cell {:.4f}; report {} and {}\n", report.failure_mean, a.report, tsv.string());
    return kExitOk;
}

int do_export(const ExportArgs& a, std::ostream& out) {
    auto vol = read_volume(a.volume);
    vol.set_z_scale(a.z_scale);
    const auto result = read_result(a.result);
    ViewExportOptions opts;
    if (a.floor) {
        if (*a.floor < 0 || *a.floor > vol.max_value())
            throw DataError(fmt::format("--floor {} outside [0,{}]", *a.floor, vol.max_value()));
        opts.floor = static_cast<std::uint16_t>(*a.floor);
    }
    opts.stride = parse_long_triple(a.stride);
    export_view(vol, result, a.out, opts);
    fmt::print(out, "wrote viewer bundle to {}\n", a.out);
    return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Spatial particle filter cell tracker"};
    app.name("spf");
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string("spf ") + SPF_VERSION + " (" + __DATE__ + ", " +
                                          (std::string("C++ ") + std::to_string(__cplusplus)) + ")");
    int threads = 0;
    app.add_option("--threads", threads, "Worker threads (0 = all cores); output does not depend on it")
        ->check(CLI::NonNegativeNumber);

    ConvertArgs ca;
    auto* convert = app.add_subcommand("convert", "Assemble 2D slice images into a volume file");
    convert->add_option("--input-dir", ca.input_dir, "Directory holding the slices")->required()->check(CLI::ExistingDirectory);
    convert->add_option("--pattern", ca.pattern, "fmt pattern with {t} and {z}, e.g. img_t{t:03d}_z{z:02d}.pgm")->required();
    convert->add_option("--dims", ca.dims, "T,Z,Y,X")->required();
    convert->add_flag("--subtract-bg", ca.subtract_bg, "Subtract each slice's mean intensity");
    convert->add_option("--median", ca.median, "Median window wx,wy,wz (odd), e.g. 3,3,1");
    convert->add_option("--out", ca.out, "Output .spfv file")->required()->check(kWritable);

    DetectArgs da;
    auto* detect = app.add_subcommand("detect", "Detect cell centroids in one frame");
    detect->add_option("--volume", da.volume)->required()->check(CLI::ExistingFile);
    detect->add_option("--frame", da.frame, "Frame index")->capture_default_str();
    detect->add_option("--lambda", da.lambda, "DP-means cluster radius")->capture_default_str();
    detect->add_option("--min-intensity", da.min_intensity, "Peak intensity floor (default 10% of dtype max)");
    detect->add_option("--peak-window", da.peak_window, "Local-maximum window px,py,pz")->capture_default_str();
    detect->add_option("--min-cluster-size", da.min_cluster_size, "Smallest kept cluster")->capture_default_str();
    detect->add_option("--z-scale", da.z_scale, "Physical z step / xy pixel edge")->capture_default_str();
    detect->add_option("--out", da.out, "Centroids file (k x y z, physical)")->required()->check(kWritable);
    detect->add_option("--tree-out", da.tree_out, "Also write the spanning tree")->check(kWritable);

    TrackArgs ta;
    auto* track = app.add_subcommand("track", "Track cells through the volume");
    track->add_option("--volume", ta.volume)->required()->check(CLI::ExistingFile);
    track->add_option("--centroids", ta.centroids, "Initial centroids (k x y z)")->required()->check(CLI::ExistingFile);
    track->add_option("--tree", ta.tree, "Tree file; built from the centroids when absent")->check(CLI::ExistingFile);
    track->add_option("--config", ta.config,
                      "key = value file: particles(1000) alpha(0.6) sigma_step(0.6,0.6,0.03) "
                      "sigma_root(3,3,0.3) lambda_rej(4.5) window(4,3,2) sigma2(0.1*max^2) "
                      "max_reject(10) seed(1) ref_frame(0) threads(0)")
        ->check(CLI::ExistingFile);
    track->add_option("--method", ta.method, "spf or pf")->check(CLI::IsMember({"spf", "pf"}))->capture_default_str();
    track->add_option("--seed", ta.seed, "RNG seed (overrides the config)");
    track->add_option("--ref-frame", ta.ref_frame, "Frame anchoring the relative positions (overrides the config)");
    track->add_option("--z-scale", ta.z_scale, "Physical z step / xy pixel edge")->capture_default_str();
    track->add_option("--out", ta.out, "Result file")->required()->check(kWritable);

    SimulateArgs sa;
    auto* simulate = app.add_subcommand("simulate", "Generate a synthetic dataset with ground truth");
    simulate->add_option("--config", sa.config,
                         "key = value file: dims(500,20,256,512) frames z_scale(3) dtype(u8) alpha(0.6) "
                         "sigma_step(0.6,0.6,0.03) shape(9,6,3) intensity(200) p_drop(0.03) root_fixed(true) "
                         "seed(1) min_distance(12) margin(12) z_margin(6)")
        ->check(CLI::ExistingFile);
    auto* init_opt = simulate->add_option("--init", sa.init, "Initial centroids file")->check(CLI::ExistingFile);
    auto* scatter_opt = simulate->add_option("--scatter", sa.scatter, "Scatter K random initial positions");
    init_opt->excludes(scatter_opt);
    simulate->add_option("--T", sa.frames, "Number of frames");
    simulate->add_option("--dims", sa.dims, "T,Z,Y,X");
    simulate->add_option("--seed", sa.seed, "RNG seed");
    simulate->add_option("--out", sa.out, "Volume file")->required()->check(kWritable);
    simulate->add_option("--truth", sa.truth, "Ground-truth file")->required()->check(kWritable);
    simulate->add_option("--centroids-out", sa.centroids_out, "Write the initial positions as centroids")
        ->check(kWritable);
    simulate->add_option("--tree-out", sa.tree_out, "Write the generating tree")->check(kWritable);

    EvaluateArgs ea;
    auto* evaluate_cmd = app.add_subcommand("evaluate", "Score a result against ground truth");
    evaluate_cmd->add_option("--result", ea.result)->required()->check(CLI::ExistingFile);
    evaluate_cmd->add_option("--truth", ea.truth)->required()->check(CLI::ExistingFile);
    evaluate_cmd->add_option("--threshold", ea.threshold, "Failure distance")->capture_default_str();
    evaluate_cmd->add_option("--z-scale", ea.z_scale, "z expansion for distances")->capture_default_str();
    evaluate_cmd->add_option("--report", ea.report, "Text report; a .tsv twin is written alongside")
        ->required()
        ->check(kWritable);
    evaluate_cmd->add_option("--detected", ea.detected, "Centroids to score against frame-0 truth")
        ->check(CLI::ExistingFile);
    evaluate_cmd->add_option("--match-radius", ea.match_radius, "Detection match radius (voxels)")
        ->capture_default_str();

    ExportArgs xa;
    auto* export_cmd = app.add_subcommand("export-view", "Write a viewer bundle");
    export_cmd->add_option("--volume", xa.volume)->required()->check(CLI::ExistingFile);
    export_cmd->add_option("--result", xa.result)->required()->check(CLI::ExistingFile);
    export_cmd->add_option("--out", xa.out, "Bundle directory")->required()->check(kWritable);
    export_cmd->add_option("--floor", xa.floor, "Keep voxels strictly above this intensity (default 10% of max)");
    export_cmd->add_option("--stride", xa.stride, "Subsampling sx,sy,sz")->capture_default_str();
    export_cmd->add_option("--z-scale", xa.z_scale)->capture_default_str();

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        app.exit(e, err, err);
        fmt::print(err, "{}", app.help());
        return kExitUsage;
    }

#ifdef _OPENMP
    if (threads > 0) omp_set_num_threads(threads);
#endif

    try {
        if (*convert) return do_convert(ca, out);
        if (*detect) return do_detect(da, out);
        if (*track) return do_track(ta, threads, out);
        if (*simulate) {
            if (!sa.scatter && sa.init.empty()) {
                fmt::print(err, "simulate: one of --init or --scatter is required\n{}", simulate->help());
                return kExitUsage;
            }
            return do_simulate(sa, out);
        }
        if (*evaluate_cmd) return do_evaluate(ea, out);
        if (*export_cmd) return do_export(xa, out);
    } catch (const std::exception& e) {
        fmt::print(err, "error: {}\n", e.what());
        return kExitData;
    }
    return kExitUsage;
}

int run(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return run(args, std::cout, std::cerr);
}

}  // namespace spf::cli
