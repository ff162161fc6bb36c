#include <doctest.h>

#include <cmath>
#include <random>

#include "grid_scenarios.hpp"
#include "ricc/data.hpp"
#include "ricc/metrics.hpp"
#include "ricc/protocols.hpp"

using namespace ricc;

namespace {

std::vector<Image> synthetic_images(std::size_t n, std::uint64_t seed) {
    DatasetSpec spec;
    spec.count = n;
    spec.side = 32;
    spec.seed = seed;
    return images_of(gen_synthetic(spec));
}

// Value v inside the circle plus a faint diagonal ramp.
std::vector<Image> level_patches(std::size_t n) {
    std::vector<Image> out;
    for (std::size_t i = 0; i < n; ++i) {
        Image img(1, 16, 16);
        for (std::size_t y = 0; y < 16; ++y)
            for (std::size_t x = 0; x < 16; ++x) img.at(0, y, x) = float(0.1 + 0.05 * double(i) + 0.001 * double(x + y));
        out.push_back(circular_mask(img));
    }
    return out;
}

Points random_encoder(const std::vector<Image>& images) {
    std::mt19937_64 rng(images.size());
    std::normal_distribution<double> g;
    Points out(images.size(), std::vector<double>(4));
    for (auto& p : out)
        for (auto& v : p) v = g(rng);
    return out;
}

// Scripted grid-search responses keyed on lambda_inv.
struct Stub {
    std::function<double(double)> ratio;
    std::function<bool(double)> invariant;
    std::size_t calls = 0;

    GridTrainFn fn() {
        return [this](double li, double, double) {
            ++calls;
            if (li == 0.0) return GridEvaluation{2.0, 0.5};
            return GridEvaluation{2.0 * ratio(li), invariant(li) ? 0.01 : 0.2};
        };
    }
};

std::vector<double> lambdas(const GridSearchState& s) {
    std::vector<double> out;
    for (const auto& t : s.history) out.push_back(t.lambda_inv);
    return out;
}

std::vector<std::string> actions(const GridSearchState& s) {
    std::vector<std::string> out;
    for (const auto& t : s.history) out.push_back(t.action);
    return out;
}

}  // namespace

TEST_CASE("report serialization") {
    ProtocolReport r;
    r.protocol = "smoothing";
    r.results = {{"k=1", 1.0}, {"k=2", 0.5}};
    r.summary = {{"min_ami", 0.5}};
    r.pass = true;
    r.provenance = {"abc", 7, "ck1"};
    r.validate();
    auto back = ProtocolReport::from_json(r.to_json());
    CHECK(back.to_json() == r.to_json());
    CHECK(back.result("k=2") == 0.5);
    CHECK(back.summary_value("min_ami") == 0.5);
    CHECK_THROWS(back.result("k=3"));
    r.results.push_back({"k=3", std::nan("")});
    CHECK_THROWS_AS(r.validate(), std::domain_error);

    CHECK(csv_field("plain") == "plain");
    CHECK(csv_field("a,b") == "\"a,b\"");
    CHECK(csv_field("say \"hi\"") == "\"say \"\"hi\"\"\"");
    ProtocolReport other = back;
    other.results = {{"k=1", 1.0}, {"k=2", 0.25}};
    CHECK(table_iv_csv({{"RI", back}, {"N,RI", other}}) == "model,k=1,k=2\nRI,1,0.5\n\"N,RI\",1,0.25\n");
}

TEST_CASE("scrambling inside the circle") {
    Image img(2, 8, 8);
    for (std::size_t i = 0; i < img.data.size(); ++i) img.data[i] = float(i);
    auto s = scramble_in_circle(img, 3);
    CHECK(s != img);
    CHECK(s == scramble_in_circle(img, 3));
    auto weights = circle_mask_weights(8);
    std::vector<float> inside0, inside1, moved0;
    for (std::size_t p = 0; p < 64; ++p) {
        if (weights[p] == 0.0f) {
            CHECK(s.data[p] == img.data[p]);
            continue;
        }
        inside0.push_back(img.data[p]);
        moved0.push_back(s.data[p]);
        // Both channels move together.
        CHECK(s.data[64 + p] == s.data[p] + 64.0f);
    }
    std::sort(moved0.begin(), moved0.end());
    CHECK(moved0 == inside0);
}

TEST_CASE("smoothing and scrambling with a patch-mean encoder") {
    auto patches = synthetic_images(144, 5);
    SpatialTestOptions opt;
    auto smooth_report = smoothing_test(patch_mean_encoder, patches, opt);
    REQUIRE(smooth_report.results.size() == 9);
    CHECK(smooth_report.result("k=1") == 1.0);
    for (const auto& [k, v] : smooth_report.results) {
        CAPTURE(k);
        CHECK(v > 0.9);
    }
    CHECK_FALSE(smooth_report.pass);
    CHECK(smooth_report.summary_value("min_ami") > 0.9);

    auto scramble_report = scrambling_test(patch_mean_encoder, patches, opt);
    REQUIRE(scramble_report.results.size() == 9);
    CHECK(scramble_report.result("k=1") > 0.99);
    CHECK_FALSE(scramble_report.pass);

    // A random encoder disagrees with itself across conditions.
    Encoder noisy = [](const std::vector<Image>& imgs) {
        Points out;
        for (const auto& img : imgs) out.push_back({double(img.data[5 * 32 + 16]), double(img.data[20 * 32 + 9])});
        return out;
    };
    CHECK(scrambling_test(noisy, patches, opt).pass);

    std::vector<Image> flat(20, Image(6, 32, 32, 0.4f));
    CHECK_THROWS_AS(smoothing_test(patch_mean_encoder, flat, opt), DegenerateInput);
    CHECK_THROWS_AS(scrambling_test(patch_mean_encoder, flat, opt), DegenerateInput);
    opt.kernels = {};
    CHECK_THROWS(smoothing_test(patch_mean_encoder, patches, opt));
}

TEST_CASE("multi-cluster rotation test") {
    auto patches = level_patches(10);
    MulticlusterOptions opt;
    opt.cluster_counts = {2, 5, 10};
    auto r = multicluster_rotation_test(patch_mean_encoder, patches, opt);
    CHECK(r.result("k=10") == 1.0);
    CHECK(r.pass);
    CHECK(r.results.size() == 3);

    auto null_report = multicluster_rotation_test(random_encoder, patches, opt);
    CHECK(std::abs(null_report.result("k=10")) < 0.1);
    CHECK_FALSE(null_report.pass);

    opt.mode = MulticlusterMode::original_vs_rotated;
    CHECK(multicluster_rotation_test(patch_mean_encoder, patches, opt).result("k=10") == 1.0);

    opt.cluster_counts = {11};
    CHECK_THROWS(multicluster_rotation_test(patch_mean_encoder, patches, opt));
}

TEST_CASE("canonical orientation test") {
    // Off-centre blobs, like digits, change direction under rotation.
    std::vector<Image> probe;
    for (std::size_t i = 0; i < 12; ++i) {
        Image img(1, 32, 32);
        const double cy = 9.0 + double(i % 4), cx = 10.0 + double(i % 3);
        for (std::size_t y = 0; y < 32; ++y)
            for (std::size_t x = 0; x < 32; ++x)
                img.at(0, y, x) = float(std::exp(-((y - cy) * (y - cy) + (x - cx) * (x - cx)) / 8.0));
        probe.push_back(img);
    }
    Reconstructor identity = [](const std::vector<Image>& imgs) { return imgs; };
    auto id_report = mnist_canonical_test(identity, probe);
    CHECK(id_report.summary_value("median_std") > 0.01);
    CHECK_FALSE(id_report.pass);
    CHECK(id_report.results.size() == probe.size());
    CHECK(id_report.summary_value("reconstruction_mse") == 0.0);

    Reconstructor constant = [](const std::vector<Image>& imgs) {
        return std::vector<Image>(imgs.size(), Image(imgs[0].channels, imgs[0].height, imgs[0].width, 0.5f));
    };
    auto c_report = mnist_canonical_test(constant, probe);
    CHECK(c_report.summary_value("median_std") == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(c_report.pass);
    CHECK(c_report.summary_value("reconstruction_mse") > 0.0);

    auto again = mnist_canonical_test(identity, probe);
    CHECK(again.to_json() == id_report.to_json());
    CanonicalOptions other;
    other.seed = 1;
    CHECK(mnist_canonical_test(identity, probe, other).to_json() != id_report.to_json());
    other.replicas = 1;
    CHECK_THROWS(mnist_canonical_test(identity, probe, other));
}

TEST_CASE("physical reasonableness test") {
    std::mt19937_64 rng(4);
    std::normal_distribution<double> g;
    Labels labels;
    for (int c = 0; c < 6; ++c)
        for (int i = 0; i < 1000; ++i) labels.push_back(c);
    std::vector<NamedField> null_fields, planted;
    for (const auto& name : kFieldNames) {
        NamedField f{name, {}}, p{name, {}};
        for (int l : labels) {
            f.values.push_back(g(rng));
            p.values.push_back(double(l) + 0.1 * g(rng));
        }
        null_fields.push_back(f);
        planted.push_back(p);
    }
    auto null_report = physical_reasonableness_test(labels, null_fields);
    CHECK_FALSE(null_report.pass);
    for (const auto& [name, v] : null_report.results) CHECK(v > 0.6);
    auto planted_report = physical_reasonableness_test(labels, planted);
    CHECK(planted_report.pass);
    CHECK(planted_report.result("thickness") < 0.6);

    // One informative field is enough.
    auto mixed = null_fields;
    mixed[2] = planted[2];
    CHECK(physical_reasonableness_test(labels, mixed).pass);

    CHECK_THROWS(physical_reasonableness_test(Labels(5, 0), null_fields));
}

TEST_CASE("grid search follows the accept, double, halve, terminate loop") {
    SUBCASE("invariant from 0.4 after two doublings") {
        Stub s{[](double) { return 1.0; }, [](double l) { return l >= 0.4 - 1e-12; }};
        auto st = grid_search(s.fn(), 10.0, 0.01);
        CHECK(st.lambda_inv == doctest::Approx(0.4));
        CHECK(st.lambda_res == 10.0);
        CHECK(st.lr == 0.01);
        CHECK(st.baseline_res_loss == 2.0);
        CHECK(st.outcome == GridOutcome::invariant);
        CHECK(actions(st) == std::vector<std::string>{"double", "double", "terminate"});
        CHECK(s.calls == 4);
    }
    SUBCASE("ratio rejection halves and oscillation stops") {
        Stub s{[](double l) { return l > 0.3 ? 1.5 : 1.1; }, [](double) { return false; }};
        auto st = grid_search(s.fn(), 10.0, 0.01);
        CHECK(lambdas(st) == std::vector<double>{0.1, 0.2, 0.4, 0.2, 0.4});
        CHECK(actions(st) == std::vector<std::string>{"double", "double", "halve", "double", "halve"});
        CHECK(st.outcome == GridOutcome::oscillation);
        CHECK(st.lambda_inv == 0.2);
        CHECK_FALSE(st.history[2].ratio_ok);
        CHECK(st.history[2].ratio == 1.5);
        CHECK(s.calls == 4);
    }
    SUBCASE("ratio exactly at the limit is accepted") {
        Stub s{[](double) { return 1.2; }, [](double l) { return l > 0.15; }};
        auto st = grid_search(s.fn(), 1.0, 0.01);
        CHECK(st.lambda_inv == doctest::Approx(0.2));
    }
    SUBCASE("move limit") {
        Stub s{[](double) { return 1.0; }, [](double) { return false; }};
        auto st = grid_search(s.fn(), 10.0, 0.01);
        CHECK(st.outcome == GridOutcome::move_limit);
        REQUIRE(st.history.size() == 12);
        CHECK(st.history.back().lambda_inv == doctest::Approx(0.1 * 2048));
        CHECK(st.lambda_inv == st.history.back().lambda_inv);
        for (std::size_t i = 1; i < st.history.size(); ++i)
            CHECK(st.history[i].lambda_inv == 2.0 * st.history[i - 1].lambda_inv);
    }
    SUBCASE("no acceptable ratio") {
        Stub s{[](double) { return 3.0; }, [](double) { return true; }};
        auto st = grid_search(s.fn(), 10.0, 0.01);
        CHECK(st.outcome == GridOutcome::move_limit);
        CHECK(st.lambda_inv == 0.0);
        CHECK(st.history.back().lambda_inv == doctest::Approx(0.1 / 2048));
    }
    SUBCASE("divergence carries the trace") {
        GridTrainFn fn = [](double li, double, double) {
            if (li > 0.3) return GridEvaluation{std::nan(""), 0.1};
            return GridEvaluation{1.0, 0.3};
        };
        try {
            grid_search(fn, 10.0, 0.01);
            FAIL("expected an error");
        } catch (const GridSearchError& e) {
            CHECK(e.trace.size() == 2);
        }
        GridTrainFn throws = [](double li, double, double) -> GridEvaluation {
            if (li > 0) throw TrainingDiverged("nan", {});
            return {1.0, 0.3};
        };
        CHECK_THROWS_AS(grid_search(throws, 10.0, 0.01), GridSearchError);
        GridTrainFn bad_base = [](double, double, double) { return GridEvaluation{0.0, 0.3}; };
        CHECK_THROWS_AS(grid_search(bad_base, 10.0, 0.01), GridSearchError);
    }
    SUBCASE("trace serializes") {
        Stub s{[](double) { return 1.0; }, [](double l) { return l >= 0.4 - 1e-12; }};
        auto j = grid_search(s.fn(), 10.0, 0.01).to_json();
        CHECK(j.at("outcome") == "invariant");
        CHECK(j.at("history").size() == 3);
    }
}

TEST_CASE("grid search scripted scenarios") {
    const auto scenarios = ricc::testing::grid_scenarios();
    CHECK(scenarios.size() == 10);
    for (const auto& sc : scenarios) {
        CAPTURE(sc.name);
        CHECK(ricc::testing::run_grid_scenario(sc) == "");
    }
}

TEST_CASE("spatial coherence") {
    std::vector<GridCoord> coords;
    Labels checker, constant, halves;
    for (int r = 0; r < 6; ++r)
        for (int c = 0; c < 6; ++c) {
            coords.push_back({r, c});
            checker.push_back((r + c) % 2);
            constant.push_back(3);
            halves.push_back(c < 3 ? 0 : 1);
        }
    CHECK(spatial_coherence(checker, coords) == 0.0);
    CHECK(spatial_coherence(constant, coords) == 1.0);

    // Direct count: only columns 2 and 3 have one foreign neighbour each.
    double expect = 0;
    for (int r = 0; r < 6; ++r)
        for (int c = 0; c < 6; ++c) {
            int n = (r > 0) + (r < 5) + (c > 0) + (c < 5);
            int foreign = (c == 2 || c == 3) ? 1 : 0;
            expect += double(n - foreign) / double(n);
        }
    CHECK(spatial_coherence(halves, coords) == doctest::Approx(expect / 36.0));

    // Field means carry no regional signal.
    std::mt19937_64 rng(2);
    std::normal_distribution<double> g;
    Points means(36, std::vector<double>(4));
    for (auto& m : means)
        for (auto& v : m) v = g(rng);
    auto r = spatial_coherence_report(halves, means, coords);
    CHECK(r.pass);
    CHECK(r.result("latent") > r.result("field_mean") + 0.2);

    CHECK_THROWS(spatial_coherence(Labels{0}, {{0, 0}}));
    CHECK_THROWS(spatial_coherence(Labels{0, 1}, {{0, 0}}));
}
