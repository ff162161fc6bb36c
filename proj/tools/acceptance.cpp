// Acceptance runner: one PASS/FAIL line per primary criterion. Exit status 0
// only when every selected criterion passes. Trained models are cached by
// configuration hash; a cached model's recorded training time is counted
// toward its criterion's runtime.

#include <CLI11.hpp>
#include <json.hpp>

#include <array>
#include <chrono>
#include <cstdio>
#include <iostream>
#include <map>
#include <random>

#include "cluster_oracle.hpp"
#include "grad_suite.hpp"
#include "grid_scenarios.hpp"
#include "metrics_oracle.hpp"
#include "ricc/checkpoint.hpp"
#include "ricc/pipeline.hpp"

using namespace ricc;
namespace fs = std::filesystem;

namespace {

// Pinned tolerances and budgets.
constexpr double kGradTolerance = 1e-3;
constexpr double kGradMaxSkipped = 0.02;
constexpr std::size_t kGradMaxParams = 2000;
constexpr double kGradBudget = 60;

constexpr std::size_t kWardInstances = 100;
constexpr std::size_t kWardMaxN = 64;
constexpr std::size_t kWardMaxD = 16;
constexpr double kWardHeightTolerance = 1e-9;
constexpr double kWardBudget = 60;

constexpr std::size_t kAmiMaxN = 8;
constexpr double kAmiTolerance = 1e-9;
constexpr std::size_t kAmiRandomPairs = 1000;
constexpr double kAmiBudget = 60;

constexpr double kCanonicalMaxStd = 0.05;
constexpr double kCanonicalNriFactor = 2.0;
constexpr std::size_t kCanonicalMinEpochs = 20;
constexpr std::size_t kCanonicalMinImages = 9600;
constexpr std::size_t kCanonicalProbe = 400;
constexpr double kCanonicalBudget = 3600;

constexpr std::size_t kMulticlusterPatches = 200;
constexpr double kMulticlusterMinAmi = 0.8;
constexpr double kMulticlusterBudget = 1800;

constexpr double kSpatialMinMargin = 0.15;
constexpr double kSpatialBudget = 1200;

constexpr std::size_t kPhysicalSeeds = 20;
constexpr std::size_t kPhysicalPatches = 12000;
constexpr std::size_t kPhysicalSide = 28;
constexpr double kPhysicalBudget = 300;

constexpr std::size_t kGridScenarios = 10;
constexpr double kGridBudget = 1;

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* pattern, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, pattern, v);
    return buf;
}

struct Line {
    std::string name;
    bool pass = false;
    std::string detail;
    double seconds = 0;
    double budget = 0;  // 0: no runtime bound
};

struct Context {
    fs::path source_dir;
    fs::path cache_dir;
    bool use_cache = true;
};

ExperimentConfig shipped_config(const Context& ctx, const std::string& name) {
    auto c = ExperimentConfig::load(ctx.source_dir / "configs" / (name + ".cfg"));
    if (c.mnist_dir.is_relative()) c.mnist_dir = ctx.source_dir / c.mnist_dir;
    return c;
}

struct CachedModel {
    Model model;
    std::string checkpoint_id;
    double train_seconds = 0;
    bool from_cache = false;
};

CachedModel trained_model(const Context& ctx, const ExperimentConfig& config) {
    const auto stem = ctx.cache_dir / (config.name + "-" + config.hash());
    const auto ckpt = fs::path(stem.string() + ".ckpt"), meta = fs::path(stem.string() + ".json");
    if (ctx.use_cache && fs::exists(ckpt) && fs::exists(meta)) {
        const auto j = nlohmann::json::parse(read_text(meta));
        return {load_checkpoint(ckpt, config.arch), file_digest(ckpt), j.at("train_seconds").get<double>(), true};
    }
    std::fprintf(stderr, "training %s (%zu epochs)\n", config.name.c_str(), config.epochs);
    const auto t0 = Clock::now();
    auto trained = train_experiment(config, [](const EpochStats& s) {
        std::fprintf(stderr, "  epoch %zu loss %.6f %.1fs\n", s.epoch, s.loss, s.seconds);
    });
    const double seconds = since(t0);
    fs::create_directories(ctx.cache_dir);
    save_checkpoint(trained.model, ckpt);
    write_text(meta, nlohmann::json{{"train_seconds", seconds}, {"config", config.to_ini()}}.dump(2) + "\n");
    return {std::move(trained.model), file_digest(ckpt), seconds, false};
}

std::string timing_note(const CachedModel& m) {
    return "trained " + fmt("%.0f", m.train_seconds) + " s" + (m.from_cache ? " (cached)" : "");
}

Line gradient_correctness() {
    const auto t0 = Clock::now();
    double worst = 0;
    std::size_t checked = 0, skipped = 0, cases = 0, failed = 0, params = 0;
    std::string first_failure;
    for (auto& c : ricc::testing::gradient_suite()) {
        std::size_t n = 0;
        for (const auto& t : c.inputs) n += t.numel();
        params = std::max(params, n);
        const auto r = ricc::testing::grad_check(c.f, c.inputs);
        ++cases;
        worst = std::max(worst, r.rel_error);
        checked += r.checked;
        skipped += r.skipped;
        if (!(r.rel_error < kGradTolerance) || r.skipped_fraction() > kGradMaxSkipped || n > kGradMaxParams) {
            ++failed;
            if (first_failure.empty()) first_failure = " first failure: " + c.name;
        }
    }
    return {"gradient_correctness", failed == 0,
            std::to_string(cases) + " cases, max rel error " + fmt("%.2e", worst) + " (< " + fmt("%.0e", kGradTolerance) +
                "), skipped " + std::to_string(skipped) + "/" + std::to_string(checked + skipped) +
                ", largest input " + std::to_string(params) + " values" + first_failure,
            since(t0), kGradBudget};
}

Line ward_oracle() {
    const auto t0 = Clock::now();
    std::mt19937_64 rng(7);
    std::size_t matched = 0;
    for (std::size_t i = 0; i < kWardInstances; ++i) {
        const std::size_t n = 2 + rng() % (kWardMaxN - 1), d = 1 + rng() % kWardMaxD;
        auto pts = ricc::testing::random_points(n, d, rng);
        // Every fifth instance has duplicated points and exact ties.
        if (i % 5 == 4)
            for (std::size_t j = 1; j < n; j += 3) pts[j] = pts[j - 1];
        if (ricc::testing::same_merges(ward_hac(pts), ricc::testing::naive_ward(pts), kWardHeightTolerance)) ++matched;
    }
    return {"ward_oracle", matched == kWardInstances,
            std::to_string(matched) + "/" + std::to_string(kWardInstances) + " instances match the direct oracle (n <= " +
                std::to_string(kWardMaxN) + ", d <= " + std::to_string(kWardMaxD) + ")",
            since(t0), kWardBudget};
}

Line ami_oracle() {
    using namespace ricc::testing;
    const auto t0 = Clock::now();
    double worst = 0;
    std::size_t pairs = 0;
    // Restricted growth strings use labels 0..n-1, so joint counts fit a
    // fixed table; the expected MI is enumerated once per size-profile pair.
    for (std::size_t n = 1; n <= kAmiMaxN; ++n) {
        const auto parts = all_partitions(n);
        std::vector<double> h;
        std::vector<std::size_t> prof_id;
        std::map<std::vector<std::size_t>, std::size_t> profiles;
        std::vector<std::size_t> representative;
        for (std::size_t i = 0; i < parts.size(); ++i) {
            h.push_back(direct_entropy(parts[i]));
            auto [it, added] = profiles.try_emplace(size_profile(parts[i]), profiles.size());
            if (added) representative.push_back(i);
            prof_id.push_back(it->second);
        }
        const std::size_t np = profiles.size();
        std::vector<double> emi(np * np);
        for (std::size_t a = 0; a < np; ++a)
            for (std::size_t b = 0; b < np; ++b)
                emi[a * np + b] = enumerated_emi(parts[representative[a]], parts[representative[b]]);

        const double dn = double(n);
        for (std::size_t i = 0; i < parts.size(); ++i) {
            std::array<double, kAmiMaxN> cu{};
            for (int x : parts[i]) cu[std::size_t(x)] += 1;
            for (std::size_t j = 0; j < parts.size(); ++j) {
                std::array<double, kAmiMaxN> cv{};
                std::array<double, kAmiMaxN * kAmiMaxN> joint{};
                for (std::size_t t = 0; t < n; ++t) {
                    cv[std::size_t(parts[j][t])] += 1;
                    joint[std::size_t(parts[i][t]) * kAmiMaxN + std::size_t(parts[j][t])] += 1;
                }
                double mi = 0;
                for (std::size_t a = 0; a < kAmiMaxN; ++a)
                    for (std::size_t b = 0; b < kAmiMaxN; ++b)
                        if (const double c = joint[a * kAmiMaxN + b]; c > 0) mi += c / dn * std::log(c * dn / (cu[a] * cv[b]));
                const double e = emi[prof_id[i] * np + prof_id[j]];
                const double denom = 0.5 * (h[i] + h[j]) - e;
                double expect = 0;
                if (std::abs(denom) < 1e-12) expect = std::abs(mi - e) < 1e-12 ? 1.0 : 0.0;
                else expect = (mi - e) / denom;
                worst = std::max(worst, std::abs(ami(parts[i], parts[j]) - expect));
                ++pairs;
            }
        }
    }

    std::mt19937_64 rng(11);
    std::size_t invariant = 0;
    for (std::size_t t = 0; t < kAmiRandomPairs; ++t) {
        const std::size_t n = 2 + rng() % 200;
        const int ku = 1 + int(rng() % 8), kv = 1 + int(rng() % 8);
        Labels u(n), v(n);
        for (auto& x : u) x = int(rng() % std::uint64_t(ku));
        for (auto& x : v) x = int(rng() % std::uint64_t(kv));
        const double base = ami(u, v);
        // Rename labels and reorder items jointly.
        std::vector<int> ren(8);
        std::iota(ren.begin(), ren.end(), 0);
        std::shuffle(ren.begin(), ren.end(), rng);
        std::vector<std::size_t> order(n);
        std::iota(order.begin(), order.end(), 0);
        std::shuffle(order.begin(), order.end(), rng);
        Labels pu(n), pv(n);
        for (std::size_t i = 0; i < n; ++i) {
            pu[i] = 100 + ren[std::size_t(u[order[i]])];
            pv[i] = v[order[i]];
        }
        const bool ok = std::abs(ami(u, u) - 1.0) <= kAmiTolerance && std::abs(ami(pu, pv) - base) <= kAmiTolerance &&
                        std::abs(ami(v, u) - base) <= kAmiTolerance;
        if (ok) ++invariant;
    }
    return {"ami_oracle", worst <= kAmiTolerance && invariant == kAmiRandomPairs,
            std::to_string(pairs) + " exhaustive pairs (n <= " + std::to_string(kAmiMaxN) + "), max |diff| " +
                fmt("%.2e", worst) + "; identity and permutation invariance " + std::to_string(invariant) + "/" +
                std::to_string(kAmiRandomPairs),
            since(t0), kAmiBudget};
}

Line mnist_canonical(const Context& ctx) {
    auto ri_cfg = shipped_config(ctx, "ri_mnist");
    auto nri_cfg = shipped_config(ctx, "nri_mnist");
    const bool setup_ok = ri_cfg.epochs >= kCanonicalMinEpochs && ri_cfg.data.count >= kCanonicalMinImages &&
                          ri_cfg.ri.lambda_inv == 10.0 && ri_cfg.ri.lambda_res == 10.0 &&
                          ri_cfg.probe_per_class * 10 == kCanonicalProbe && ri_cfg.replicas == 4;
    auto ri = trained_model(ctx, ri_cfg);
    auto nri = trained_model(ctx, nri_cfg);
    const auto t0 = Clock::now();
    const auto r_ri = run_protocol("test4.1", ri_cfg, ri.model, ri.checkpoint_id).report;
    const auto r_nri = run_protocol("test4.1", nri_cfg, nri.model, nri.checkpoint_id).report;
    const double s_ri = r_ri.summary_value("median_std"), s_nri = r_nri.summary_value("median_std");
    const bool pass = setup_ok && s_ri < kCanonicalMaxStd && s_nri >= kCanonicalNriFactor * s_ri;
    return {"mnist_canonical_orientation", pass,
            "RI median std " + fmt("%.4f", s_ri) + " (< " + fmt("%.2f", kCanonicalMaxStd) + "), NRI " + fmt("%.4f", s_nri) +
                " (>= " + fmt("%.0f", kCanonicalNriFactor) + "x RI), recon mse RI " +
                fmt("%.4f", r_ri.summary_value("reconstruction_mse")) + " NRI " +
                fmt("%.4f", r_nri.summary_value("reconstruction_mse")) + "; " + timing_note(ri) + ", NRI " +
                timing_note(nri) + (setup_ok ? "" : "; configuration below the required scale"),
            ri.train_seconds + nri.train_seconds + since(t0), kCanonicalBudget};
}

Line multicluster(const Context& ctx) {
    auto ri_cfg = shipped_config(ctx, "ri_synthetic");
    auto nri_cfg = shipped_config(ctx, "nri_synthetic");
    auto ri = trained_model(ctx, ri_cfg);
    auto nri = trained_model(ctx, nri_cfg);
    const auto t0 = Clock::now();
    const auto r_ri = run_protocol("test4.2", ri_cfg, ri.model, ri.checkpoint_id).report;
    const auto r_nri = run_protocol("test4.2", nri_cfg, nri.model, nri.checkpoint_id).report;
    const std::string at = "k=" + std::to_string(kMulticlusterPatches);
    const double a_ri = r_ri.result(at), a_nri = r_nri.result(at);
    const bool pass = ri_cfg.multicluster_patches == kMulticlusterPatches && a_ri >= kMulticlusterMinAmi && a_ri > a_nri;
    return {"multicluster_rotation_invariance", pass,
            "AMI at " + at + ": RI " + fmt("%.3f", a_ri) + " (>= " + fmt("%.1f", kMulticlusterMinAmi) + "), NRI " +
                fmt("%.3f", a_nri) + " (< RI); " + timing_note(ri) + ", NRI " + timing_note(nri),
            ri.train_seconds + nri.train_seconds + since(t0), kMulticlusterBudget};
}

Line spatial_information(const Context& ctx) {
    auto cfg = shipped_config(ctx, "ri_synthetic");
    auto ri = trained_model(ctx, cfg);
    const auto t0 = Clock::now();
    const auto smooth = run_protocol("test2.2", cfg, ri.model, ri.checkpoint_id).report;
    const auto scramble = run_protocol("test2.3", cfg, ri.model, ri.checkpoint_id).report;
    const double m1 = smooth.summary_value("control_margin"), m2 = scramble.summary_value("control_margin");
    const bool pass = m1 >= kSpatialMinMargin && m2 >= kSpatialMinMargin;
    return {"spatial_information", pass,
            "smoothing min AMI RI " + fmt("%.3f", smooth.summary_value("min_ami")) + " vs control " +
                fmt("%.3f", smooth.summary_value("control_min_ami")) + "; scrambling RI " +
                fmt("%.3f", scramble.summary_value("min_ami")) + " vs control " +
                fmt("%.3f", scramble.summary_value("control_min_ami")) + " (margins >= " + fmt("%.2f", kSpatialMinMargin) +
                "); " + timing_note(ri),
            ri.train_seconds + since(t0), kSpatialBudget};
}

Line physical_harness() {
    const auto t0 = Clock::now();
    std::size_t planted_pass = 0, null_fail = 0;
    double worst_planted = -1, best_null = 2;
    for (std::size_t seed = 0; seed < kPhysicalSeeds; ++seed) {
        DatasetSpec spec;
        spec.count = kPhysicalPatches;
        spec.side = kPhysicalSide;
        spec.seed = 500 + seed;
        const auto patches = gen_synthetic(spec);
        const auto assignment = regimes_of(patches);
        std::vector<NamedField> planted, null;
        std::mt19937_64 rng(seed);
        for (std::size_t j = 0; j < kFieldCount; ++j) {
            NamedField f{kFieldNames[j], {}};
            for (const auto& p : patches) f.values.push_back(p.fields[j]);
            NamedField g = f;
            std::shuffle(g.values.begin(), g.values.end(), rng);
            planted.push_back(std::move(f));
            null.push_back(std::move(g));
        }
        const auto rp = physical_reasonableness_test(assignment, planted);
        const auto rn = physical_reasonableness_test(assignment, null);
        planted_pass += rp.pass ? 1 : 0;
        null_fail += rn.pass ? 0 : 1;
        worst_planted = std::max(worst_planted, rp.summary_value("min_median"));
        best_null = std::min(best_null, rn.summary_value("min_median"));
    }
    return {"physical_reasonableness_harness", planted_pass == kPhysicalSeeds && null_fail == kPhysicalSeeds,
            "planted PASS " + std::to_string(planted_pass) + "/" + std::to_string(kPhysicalSeeds) + " (worst min median " +
                fmt("%.3f", worst_planted) + "), null FAIL " + std::to_string(null_fail) + "/" +
                std::to_string(kPhysicalSeeds) + " (lowest min median " + fmt("%.3f", best_null) + ")",
            since(t0), kPhysicalBudget};
}

Line grid_logic() {
    const auto t0 = Clock::now();
    const auto scenarios = ricc::testing::grid_scenarios();
    std::size_t matched = 0;
    std::string first;
    for (const auto& s : scenarios) {
        const auto why = ricc::testing::run_grid_scenario(s);
        if (why.empty()) ++matched;
        else if (first.empty()) first = "; " + s.name + ": " + why;
    }
    return {"grid_search_logic", scenarios.size() == kGridScenarios && matched == kGridScenarios,
            std::to_string(matched) + "/" + std::to_string(scenarios.size()) + " scripted traces reproduced exactly" + first,
            since(t0), kGridBudget};
}

// Every artifact of a small end-to-end run, keyed by name.
std::map<std::string, std::string> pipeline_outputs(const Context& ctx, const fs::path& dir) {
    std::map<std::string, std::string> out;
    auto run = [&](ExperimentConfig c, const std::vector<std::string>& protocols) {
        c.out_dir = dir / c.name;
        auto trained = train_experiment(c);
        const auto ckpt = c.out_dir / "model.ckpt";
        fs::create_directories(c.out_dir);
        save_checkpoint(trained.model, ckpt);
        out[c.name + "/model.ckpt"] = read_text(ckpt);
        auto model = load_checkpoint(ckpt, c.arch);
        for (const auto& p : protocols) {
            auto r = run_protocol(p, c, model, file_digest(ckpt));
            out[c.name + "/" + p + ".json"] = r.report.to_json().dump(2);
            for (const auto& [name, content] : r.artifacts) out[c.name + "/" + name] = content;
        }
        if (c.arch == ArchId::ri_ra) out[c.name + "/gridsearch.json"] = run_grid_search(c, 10.0, 0.01).to_json().dump(2);
    };

    auto syn = shipped_config(ctx, "ri_synthetic");
    syn.name = "determinism_synthetic";
    syn.data.count = 160;
    syn.epochs = 2;
    syn.holdout_count = 120;
    syn.multicluster_patches = 40;
    syn.cluster_counts = {10, 20, 40};
    syn.tsne_iterations = 200;
    syn.grid_epochs = 1;
    syn.grid_train_count = 80;
    syn.grid_holdout_count = 16;
    syn.grid_max_moves = 3;
    run(syn, {"test1", "test2.1", "test2.2", "test2.3", "test3", "test4.2"});

    auto mn = shipped_config(ctx, "nri_mnist");
    mn.name = "determinism_mnist";
    mn.data.count = 200;
    mn.epochs = 1;
    mn.probe_per_class = 5;
    mn.tsne_iterations = 200;
    mn.tsne_perplexity = 10;
    run(mn, {"test3", "test4.1"});
    return out;
}

Line determinism(const Context& ctx) {
    const auto t0 = Clock::now();
    const auto root = ctx.cache_dir / "determinism";
    fs::remove_all(root);
    const auto a = pipeline_outputs(ctx, root);
    fs::remove_all(root);
    const auto b = pipeline_outputs(ctx, root);
    std::size_t same = 0;
    std::string first;
    for (const auto& [name, content] : a) {
        auto it = b.find(name);
        if (it != b.end() && it->second == content) ++same;
        else if (first.empty()) first = "; first difference: " + name;
    }
    const bool pass = a.size() == b.size() && same == a.size() && !a.empty();
    return {"determinism", pass,
            std::to_string(same) + "/" + std::to_string(a.size()) + " outputs bitwise identical across two runs" + first,
            since(t0), 0};
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Acceptance criteria runner"};
    Context ctx;
    ctx.source_dir = RICC_SOURCE_DIR;
    ctx.cache_dir = fs::path(RICC_BINARY_DIR) / "acceptance_cache";
    std::vector<std::string> only;
    bool no_cache = false;
    app.add_option("--only", only, "Run only these criteria");
    app.add_option("--cache", ctx.cache_dir, "Directory for trained models");
    app.add_flag("--no-cache", no_cache, "Retrain every model");
    CLI11_PARSE(app, argc, argv);
    ctx.use_cache = !no_cache;
    tune_allocator();

    const std::vector<std::pair<std::string, std::function<Line()>>> criteria{
        {"gradient_correctness", gradient_correctness},
        {"ward_oracle", ward_oracle},
        {"ami_oracle", ami_oracle},
        {"mnist_canonical_orientation", [&] { return mnist_canonical(ctx); }},
        {"multicluster_rotation_invariance", [&] { return multicluster(ctx); }},
        {"spatial_information", [&] { return spatial_information(ctx); }},
        {"physical_reasonableness_harness", physical_harness},
        {"grid_search_logic", grid_logic},
        {"determinism", [&] { return determinism(ctx); }},
    };
    for (const auto& name : only)
        if (std::none_of(criteria.begin(), criteria.end(), [&](const auto& c) { return c.first == name; })) {
            std::cerr << "unknown criterion '" << name << "'\n";
            return 2;
        }

    std::size_t failed = 0, run = 0;
    for (const auto& [name, fn] : criteria) {
        if (!only.empty() && std::find(only.begin(), only.end(), name) == only.end()) continue;
        Line line;
        try {
            line = fn();
        } catch (const std::exception& e) {
            line = {name, false, std::string("error: ") + e.what(), 0, 0};
        }
        const bool in_time = line.budget <= 0 || line.seconds <= line.budget;
        const bool pass = line.pass && in_time;
        std::string timing = fmt("%.1f s", line.seconds);
        if (line.budget > 0) timing += " / budget " + fmt("%.0f s", line.budget);
        std::cout << (pass ? "PASS " : "FAIL ") << line.name << ": " << line.detail << " [" << timing << "]\n"
                  << std::flush;
        ++run;
        failed += pass ? 0 : 1;
    }
    std::cout << (run - failed) << "/" << run << " criteria passed\n";
    return failed == 0 ? 0 : 1;
}
