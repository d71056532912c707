// Headless acceptance suite. Prints one PASS/FAIL line per criterion and
// exits non-zero if any criterion fails.

#include <sys/resource.h>

#include <CLI11.hpp>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <functional>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include <fmt/core.h>

#include "oracles.hpp"
#include "spf/detect.hpp"
#include "spf/evaluate.hpp"
#include "spf/mrf_tree.hpp"
#include "spf/simulate.hpp"
#include "spf/tracker.hpp"
#include "test_util.hpp"

using namespace spf;
using spf::testing::Gen;

namespace {

struct Verdict {
    bool pass = false;
    std::string detail;
};

void progress(const std::string& msg) { fmt::print(stderr, "  .. {}\n", msg); }

double cpu_seconds() {
    rusage ru{};
    getrusage(RUSAGE_SELF, &ru);
    auto sec = [](const timeval& tv) { return double(tv.tv_sec) + double(tv.tv_usec) * 1e-6; };
    return sec(ru.ru_utime) + sec(ru.ru_stime);
}

double wall_seconds() {
    using clock = std::chrono::steady_clock;
    return std::chrono::duration<double>(clock::now().time_since_epoch()).count();
}

bool bitwise_equal(const TrackResult& a, const TrackResult& b) {
    if (a.estimates.size() != b.estimates.size() || a.status != b.status) return false;
    return std::memcmp(a.estimates.data(), b.estimates.data(), a.estimates.size() * sizeof(Vec3)) == 0;
}

// ---- criteria 1 and 2: full-scale SPF vs PF ---------------------------------

struct Trial {
    double spf_failures = 0, pf_failures = 0;
    double spf_stable_fraction = 0;  // frames after 10 with RMSE < 4.5
    long pf_first_over = -1;         // first frame with RMSE > 4.5, -1 if never
};

std::vector<Trial> run_full_scale_trials() {
    SimConfig sc;  // 512 x 256 x 20, T = 500
    sc.seed = 2024;
    const auto init = scatter_points(115, sc);
    progress("generating the 115-nucleus dataset");
    const auto [vol, gt] = generate_dataset(sc, init);

    std::vector<Trial> trials;
    for (std::uint64_t seed : {1, 2, 3}) {
        TrackConfig cfg;  // N = 1000
        cfg.seed = seed;
        Trial tr;

        auto w0 = wall_seconds();
        const auto spf = evaluate(track_all(vol, gt.tree, cfg), gt);
        const double spf_time = wall_seconds() - w0;
        w0 = wall_seconds();
        const auto pf = evaluate(track_all_pf(vol, init, cfg), gt);
        const double pf_time = wall_seconds() - w0;

        tr.spf_failures = spf.failure_mean;
        tr.pf_failures = pf.failure_mean;
        std::size_t stable = 0, counted = 0;
        for (std::size_t t = 11; t < spf.rmse_series.size(); ++t) {
            ++counted;
            stable += spf.rmse_series[t] < 4.5;
        }
        tr.spf_stable_fraction = counted ? double(stable) / double(counted) : 0.0;
        for (std::size_t t = 0; t < pf.rmse_series.size(); ++t)
            if (pf.rmse_series[t] > 4.5) {
                tr.pf_first_over = static_cast<long>(t);
                break;
            }
        progress(fmt::format("seed {}: spf {:.3f} failures/cell ({:.0f}s), pf {:.3f} ({:.0f}s), spf stable {:.3f}, "
                             "pf first over {}",
                             seed, tr.spf_failures, spf_time, tr.pf_failures, pf_time, tr.spf_stable_fraction,
                             tr.pf_first_over));
        trials.push_back(tr);
    }
    return trials;
}

Verdict criterion1(const std::vector<Trial>& trials) {
    double spf = 0, pf = 0;
    for (const auto& t : trials) {
        spf += t.spf_failures;
        pf += t.pf_failures;
    }
    spf /= double(trials.size());
    pf /= double(trials.size());
    const double ratio = spf > 0 ? pf / spf : std::numeric_limits<double>::infinity();
    return {spf <= 5 && pf >= 15 && ratio >= 5,
            fmt::format("mean failures/cell spf={:.3f} pf={:.3f} ratio={:.1f}", spf, pf, ratio)};
}

Verdict criterion2(const std::vector<Trial>& trials) {
    int good = 0;
    std::string detail;
    for (const auto& t : trials) {
        const bool ok = t.spf_stable_fraction >= 0.95 && t.pf_first_over >= 0 && t.pf_first_over < 250;
        good += ok;
        detail += fmt::format("[spf<4.5 {:.3f}, pf>4.5 at {}] ", t.spf_stable_fraction, t.pf_first_over);
    }
    return {good >= 2, fmt::format("{}/{} trials ok {}", good, trials.size(), detail)};
}

// ---- criterion 3: geometric decay of the relative positions ----------------

Verdict criterion3() {
    // Star around a root at the origin, arms of length 8 in the x-z plane,
    // perturbation along y. For alpha >= 0.5 both alpha * 8 and (1 - alpha) * 8
    // are exact and sum to 8, so the arms carry no round-off and the only
    // rounding left is relative to the decaying y deviation itself.
    const Positions ref{{0, 0, 0}, {8, 0, 0}, {-8, 0, 0}, {0, 0, 8}, {0, 0, -8}};
    const auto tree = build_cell_tree(ref);
    if (tree.root != 0) return {false, "unexpected root for the star layout"};
    const std::vector<double> kick{0.0, 2.5, -1.7, 0.9, 3.1};
    Positions start = ref;
    for (std::size_t k = 1; k < ref.size(); ++k) start[k].y() += kick[k];

    const std::size_t steps = 50;
    double worst = 0;
    for (double alpha : {0.6, 0.75, 0.9}) {
        const auto pos = propagate_relative(ref, start, tree, alpha, steps);
        const auto K = ref.size();
        for (std::size_t k = 1; k < K; ++k) {
            const auto p = *tree.parent[k];
            const Vec3 eta1 = ref[k] - ref[p];
            auto dev = [&](std::size_t s) { return (pos[s * K + k] - pos[s * K + p] - eta1).norm(); };
            for (std::size_t s = 1; s <= steps; ++s) {
                const double miss = std::abs(dev(s) / dev(s - 1) - alpha);
                worst = std::isfinite(miss) ? std::max(worst, miss) : std::numeric_limits<double>::infinity();
            }
        }
    }
    return {worst <= 1e-6, fmt::format("max |ratio - alpha| = {:.2e} over {} steps, alpha in {{0.6, 0.75, 0.9}}",
                                       worst, steps)};
}

// ---- criterion 4: detection against rendered truth -------------------------

Verdict criterion4() {
    bool pass = true;
    std::string detail;
    for (std::uint64_t seed : {5, 6, 7}) {
        SimConfig sc;
        sc.frames = 1;
        sc.seed = seed;
        const auto truth = scatter_points(115, sc);
        const auto frame = render_frame(truth, {}, sc);
        const auto found = detect_cells(frame, sc.z_scale);  // lambda 8
        const auto m = detection_metrics(to_index_space(found.centroids, sc.z_scale),
                                         to_index_space(truth, sc.z_scale), 5.0);
        pass = pass && m.tpr >= 0.95 && m.fdr <= 0.10;
        detail += fmt::format("[{} nuclei, {} found, tpr {:.3f} fdr {:.3f}] ", truth.size(), found.k(), m.tpr, m.fdr);
    }
    return {pass, detail};
}

// ---- criterion 5: oracle equivalences --------------------------------------

Verdict criterion5() {
    Gen g(505);
    std::size_t mst_ok = 0, med_ok = 0, match_ok = 0;
    for (int i = 0; i < 200; ++i) {
        const auto pts = g.points(static_cast<std::size_t>(g.integer(1, 7)), 30);
        std::vector<std::pair<std::size_t, std::size_t>> got;
        for (const auto& e : build_mst(pts)) got.emplace_back(e.a, e.b);
        std::sort(got.begin(), got.end());
        mst_ok += got == oracle::min_spanning_tree(pts);
    }
    for (int i = 0; i < 100; ++i) {
        Image3D img(3, 5, 5, DType::U8);
        for (auto& v : img.values) v = static_cast<std::uint16_t>(g.integer(0, 255));
        const std::array<long, 3> w{2 * g.integer(0, 2) + 1, 2 * g.integer(0, 2) + 1, 2 * g.integer(0, 1) + 1};
        med_ok += median_filter(img, w).values == oracle::median(img, w[0], w[1], w[2]).values;
    }
    for (int i = 0; i < 100; ++i) {
        const auto na = static_cast<std::size_t>(g.integer(0, 10));
        const auto nb = static_cast<std::size_t>(g.integer(0, 10 - static_cast<long>(na)));
        const auto a = g.points(na, 12), b = g.points(nb, 12);
        auto got = match_detections(a, b, 5.0);
        std::sort(got.begin(), got.end());
        match_ok += got == oracle::optimal_matching(a, b, 5.0);
    }
    return {mst_ok == 200 && med_ok == 100 && match_ok == 100,
            fmt::format("mst {}/200, median {}/100, matching {}/100", mst_ok, med_ok, match_ok)};
}

// ---- criterion 6: filter invariants ----------------------------------------

SimConfig small_sim(std::size_t frames, std::uint64_t seed) {
    SimConfig s;
    s.z = 12;
    s.y = 64;
    s.x = 96;
    s.frames = frames;
    s.seed = seed;
    return s;
}

Verdict criterion6() {
    std::vector<std::string> failed;
    auto sc = small_sim(40, 61);
    const auto init = scatter_points(8, sc);
    const auto [vol, gt] = generate_dataset(sc, init);

    // weights and ensemble size after every filtering step, both methods
    TrackConfig cfg;  // N = 1000
    cfg.seed = 17;
    double worst_norm = 0;
    bool sizes_ok = true;
    for (Method m : {Method::SPF, Method::PF}) {
        auto state = init_trackers(init, vol, cfg);
        for (std::size_t t = 1; t < sc.frames; ++t) {
            step_frame(state, vol, t, m == Method::SPF ? &gt.tree : nullptr, cfg, m);
            for (const auto& f : state) {
                sizes_ok = sizes_ok && f.size() == cfg.particles && f.weights.size() == cfg.particles &&
                           f.out_of_view.size() == cfg.particles;
                double s = 0;
                bool any_in = false;
                for (std::size_t i = 0; i < f.size(); ++i)
                    if (!f.out_of_view[i]) {
                        s += f.weights[i];
                        any_in = true;
                    }
                if (any_in) worst_norm = std::max(worst_norm, std::abs(s - 1.0));
            }
        }
    }
    if (worst_norm > 1e-9) failed.push_back("normalization");
    if (!sizes_ok) failed.push_back("ensemble size");

    // rejection acceptance at |d| = lambda
    auto rng = make_stream(606, 0, 0);
    const int draws = 100000;
    int accepted = 0;
    for (int i = 0; i < draws; ++i) accepted += accept_offset(Vec3(0, cfg.lambda_rej, 0), cfg.lambda_rej, rng);
    const double rate = double(accepted) / draws;
    if (std::abs(rate - (1 - std::exp(-1.0))) > 0.005) failed.push_back("acceptance rate");

    // one nucleus: SPF and PF coincide
    auto one_sc = small_sim(40, 62);
    const Positions one{{48, 32, 18}};
    const auto [one_vol, one_gt] = generate_dataset(one_sc, one);
    const bool single = bitwise_equal(track_all(one_vol, one_gt.tree, cfg), track_all_pf(one_vol, one, cfg));
    if (!single) failed.push_back("single-node equivalence");

    // fixed seed, different thread counts
    bool repro = true;
    for (Method m : {Method::SPF, Method::PF}) {
        auto run = [&](int threads) {
            auto c = cfg;
            c.threads = threads;
            return m == Method::SPF ? track_all(vol, gt.tree, c) : track_all_pf(vol, init, c);
        };
        const auto base = run(1);
        for (int threads : {1, 2, 4}) repro = repro && bitwise_equal(base, run(threads));
    }
    if (!repro) failed.push_back("reproducibility");

    std::string detail = fmt::format("max |sum w - 1| = {:.1e}, sizes {}, acceptance {:.4f}, single-node {}, "
                                     "threads 1/2/4 {}",
                                     worst_norm, sizes_ok ? "ok" : "bad", rate, single ? "identical" : "differ",
                                     repro ? "identical" : "differ");
    return {failed.empty(), detail};
}

// ---- criterion 7: tracking cost versus cell count --------------------------

Verdict criterion7() {
    std::vector<double> ks, cpu, wall;
    for (std::size_t K : {20, 40, 60, 80, 100}) {
        SimConfig sc;
        sc.seed = 700 + K;
        const auto init = scatter_points(K, sc);
        const auto [vol, gt] = generate_dataset(sc, init);
        TrackConfig cfg;
        cfg.seed = 7;
        const double c0 = cpu_seconds(), w0 = wall_seconds();
        const auto r = track_all(vol, gt.tree, cfg);
        if (r.frames != sc.frames) return {false, "tracker returned a short result"};
        ks.push_back(double(K));
        cpu.push_back(cpu_seconds() - c0);
        wall.push_back(wall_seconds() - w0);
        progress(fmt::format("K={}: cpu {:.1f}s wall {:.1f}s", K, cpu.back(), wall.back()));
    }
    const double n = double(ks.size());
    const double mx = std::accumulate(ks.begin(), ks.end(), 0.0) / n;
    const double my = std::accumulate(cpu.begin(), cpu.end(), 0.0) / n;
    double sxy = 0, sxx = 0, syy = 0;
    for (std::size_t i = 0; i < ks.size(); ++i) {
        sxy += (ks[i] - mx) * (cpu[i] - my);
        sxx += (ks[i] - mx) * (ks[i] - mx);
        syy += (cpu[i] - my) * (cpu[i] - my);
    }
    const double r2 = syy > 0 ? sxy * sxy / (sxx * syy) : 0.0;
    const bool fast = cpu.back() <= 300 && wall.back() <= 300;
    std::string times;
    for (std::size_t i = 0; i < ks.size(); ++i) times += fmt::format("{}:{:.1f}s ", ks[i], cpu[i]);
    return {r2 >= 0.95 && fast,
            fmt::format("cpu {}R^2={:.4f}, K=100 cpu {:.1f}s wall {:.1f}s", times, r2, cpu.back(), wall.back())};
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"acceptance suite"};
    std::vector<int> only;
    app.add_option("--only", only, "run only these criteria")->delimiter(',')->check(CLI::Range(1, 7));
    CLI11_PARSE(app, argc, argv);
    auto wanted = [&](int c) { return only.empty() || std::find(only.begin(), only.end(), c) != only.end(); };

    int failures = 0;
    auto report = [&](int c, const Verdict& v) {
        fmt::print("criterion {}: {}  {}\n", c, v.pass ? "PASS" : "FAIL", v.detail);
        std::fflush(stdout);
        failures += !v.pass;
    };

    const std::vector<std::pair<int, std::function<Verdict()>>> quick{
        {3, criterion3}, {4, criterion4}, {5, criterion5}, {6, criterion6}};
    std::vector<Trial> trials;
    if (wanted(1) || wanted(2)) trials = run_full_scale_trials();
    if (wanted(1)) report(1, criterion1(trials));
    if (wanted(2)) report(2, criterion2(trials));
    for (const auto& [c, fn] : quick)
        if (wanted(c)) report(c, fn());
    if (wanted(7)) report(7, criterion7());
    return failures == 0 ? 0 : 1;
}
