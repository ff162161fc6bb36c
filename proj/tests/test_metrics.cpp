#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "ricc/metrics.hpp"
#include "metrics_oracle.hpp"

using namespace ricc;
using namespace ricc::testing;

namespace {

Labels random_labels(std::size_t n, int k, std::mt19937_64& rng) {
    std::uniform_int_distribution<int> d(0, k - 1);
    Labels l(n);
    for (auto& x : l) x = d(rng);
    return l;
}

}  // namespace

TEST_CASE("entropy") {
    CHECK(entropy({3, 3, 3}) == 0.0);
    CHECK(entropy({0, 0, 1, 1}) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    CHECK(entropy({0, 0, 0, 1}) == doctest::Approx(0.5623).epsilon(1e-4));
    CHECK(entropy({0, 0, 0, 1}) == doctest::Approx(-0.75 * std::log(0.75) - 0.25 * std::log(0.25)).epsilon(1e-12));
    CHECK(entropy({-4, 9, 9, -4}) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("mutual information") {
    Labels u{0, 0, 1, 1};
    CHECK(mutual_information(u, u) == doctest::Approx(entropy(u)).epsilon(1e-12));
    CHECK(std::abs(mutual_information(u, {0, 1, 0, 1})) < 1e-15);
    CHECK_THROWS(mutual_information(u, {0, 1}));

    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 20; ++trial) {
        auto a = random_labels(20, 4, rng);
        auto b = random_labels(20, 3, rng);
        double mi = mutual_information(a, b);
        CHECK(mi == doctest::Approx(direct_mi(a, b)).epsilon(1e-12));
        CHECK(mi >= 0.0);
        CHECK(mi <= std::min(entropy(a), entropy(b)) + 1e-12);
    }
}

TEST_CASE("adjusted mutual information") {
    CHECK(ami({0, 0, 1, 1}, {1, 1, 0, 0}) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(ami({0, 1, 2, 2, 1}, {0, 1, 2, 2, 1}) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(ami({0, 0, 0}, {5, 5, 5}) == 1.0);
    CHECK(ami({0, 1, 2}, {0, 1, 2}) == 1.0);
    CHECK(ami({0, 0, 0, 0}, {0, 1, 2, 3}) == 0.0);
    CHECK_THROWS(ami({0, 1}, {0}));

    Labels u{0, 0, 1, 1}, v{0, 0, 1, 2};
    double emi = enumerated_emi(u, v);
    CHECK(std::abs(expected_mutual_information(u, v) - emi) < 1e-9);
    CHECK(std::abs(ami(u, v) - oracle_ami(u, v, emi)) < 1e-9);

    std::mt19937_64 rng(4);
    for (int trial = 0; trial < 200; ++trial) {
        std::size_t n = 2 + rng() % 7;
        auto a = random_labels(n, 1 + int(rng() % 4), rng);
        auto b = random_labels(n, 1 + int(rng() % 4), rng);
        double e = enumerated_emi(a, b);
        CHECK(std::abs(expected_mutual_information(a, b) - e) < 1e-9);
        CHECK(std::abs(ami(a, b) - oracle_ami(a, b, e)) < 1e-9);
        CHECK(std::abs(ami(a, b) - ami(b, a)) < 1e-12);
    }

    // Label renaming leaves the score unchanged; random labelings score near 0.
    auto a = random_labels(300, 5, rng);
    auto b = random_labels(300, 6, rng);
    Labels renamed(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) renamed[i] = 10 - 3 * a[i];
    CHECK(std::abs(ami(renamed, b) - ami(a, b)) < 1e-12);
    CHECK(std::abs(ami(a, b)) < 0.05);
    CHECK(ami(a, renamed) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("cosine similarity") {
    std::vector<double> a{1, 1}, b{1, 0}, c{0, 3};
    CHECK(cosine_similarity(a, b) == doctest::Approx(0.70711).epsilon(1e-5));
    CHECK(cosine_similarity(a, a) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(cosine_similarity(b, c) == 0.0);
    std::vector<float> f{1, 2, 3};
    CHECK(cosine_similarity(f, f) == doctest::Approx(1.0).epsilon(1e-7));
    CHECK_THROWS(cosine_similarity(a, std::vector<double>{0, 0}));
    CHECK_THROWS(cosine_similarity(a, std::vector<double>{1, 2, 3}));
}

TEST_CASE("histograms and inter-cluster correlation") {
    auto h = shared_histograms({{0.0, 0.5, 1.0}, {0.25, 0.25}}, 4);
    REQUIRE(h.size() == 2);
    CHECK(h[0].bin_edges == std::vector<double>{0.0, 0.25, 0.5, 0.75, 1.0});
    CHECK(h[0].counts == std::vector<std::size_t>{1, 0, 1, 1});
    CHECK(h[1].counts == std::vector<std::size_t>{0, 2, 0, 0});
    CHECK(h[0].total() == 3);

    Histogram same{{0, 1, 2, 3}, {1, 4, 2}};
    Histogram scaled{{0, 1, 2, 3}, {2, 8, 4}};
    CHECK(median_intercluster_correlation({same, scaled, same}) == doctest::Approx(1.0).epsilon(1e-12));

    Histogram x{{0, 1, 2}, {1, 0}}, y{{0, 1, 2}, {0, 1}};
    CHECK(median_intercluster_correlation({x, y}) == doctest::Approx(-1.0).epsilon(1e-12));

    // Pairs: (x,y) = -1, (x,z) and (y,z) skipped since z is flat; median of one value.
    Histogram z{{0, 1, 2}, {3, 3}};
    CHECK(median_intercluster_correlation({x, y, z}) == doctest::Approx(-1.0).epsilon(1e-12));
    CHECK_THROWS(median_intercluster_correlation({z, z}));
    CHECK_THROWS(median_intercluster_correlation({x}));
    CHECK_THROWS(median_intercluster_correlation({x, same}));

    // Even count of pairs takes the mean of the middle two.
    Histogram p{{0, 1, 2, 3}, {3, 1, 0}}, q{{0, 1, 2, 3}, {0, 1, 3}}, r{{0, 1, 2, 3}, {1, 3, 1}};
    Histogram s{{0, 1, 2, 3}, {2, 0, 1}};
    // Sorted correlations: -0.9286, -0.8660, -0.3273, -0.1890, -0.1890, 0.6547.
    CHECK(median_intercluster_correlation({p, q, r, s}) ==
          doctest::Approx(0.5 * (-0.32732683535398854 - 0.18898223650461357)).epsilon(1e-12));

    CHECK_THROWS((Histogram{{0, 0, 1}, {1, 1}}.validate()));
    CHECK_THROWS((Histogram{{0, 1}, {1, 1}}.validate()));
}

TEST_CASE("t-SNE affinities") {
    std::mt19937_64 rng(8);
    std::normal_distribution<double> g;
    Points pts(30, std::vector<double>(5));
    for (auto& p : pts)
        for (auto& v : p) v = g(rng);
    auto p = tsne_conditional_affinities(pts, 10.0);
    for (std::size_t i = 0; i < 30; ++i) {
        double s = 0, h = 0;
        for (std::size_t j = 0; j < 30; ++j) {
            double v = p[i * 30 + j];
            s += v;
            if (v > 0) h -= v * std::log(v);
        }
        CHECK(p[i * 30 + i] == 0.0);
        CHECK(std::abs(s - 1.0) < 1e-9);
        CHECK(std::exp(h) == doctest::Approx(10.0).epsilon(1e-3));
    }
    Points dup(6, std::vector<double>{1.0, 2.0});
    CHECK_THROWS(tsne_conditional_affinities(dup, 3.0));
    CHECK_THROWS(tsne_conditional_affinities(pts, 30.0));
    CHECK_THROWS(tsne(Points(3, std::vector<double>{1.0})));
}

TEST_CASE("t-SNE separates blobs and lowers KL") {
    std::mt19937_64 rng(12);
    std::normal_distribution<double> g;
    Points pts;
    std::vector<int> blob;
    for (int b = 0; b < 2; ++b)
        for (int i = 0; i < 20; ++i) {
            std::vector<double> v(16);
            for (auto& x : v) x = g(rng) + (b == 0 ? 0.0 : 10.0);
            pts.push_back(v);
            blob.push_back(b);
        }
    TsneOptions opt;
    opt.perplexity = 10.0;
    opt.iterations = 500;
    opt.seed = 3;
    auto r = tsne(pts, opt);
    REQUIRE(r.embedding.size() == 40);
    for (double k : r.kl) CHECK(k >= 0.0);
    CHECK(r.kl.back() <= r.kl.front());

    std::size_t correct = 0;
    for (std::size_t i = 0; i < 40; ++i) {
        double best = 1e300;
        std::size_t nn = i;
        for (std::size_t j = 0; j < 40; ++j) {
            if (j == i) continue;
            double dx = r.embedding[i][0] - r.embedding[j][0], dy = r.embedding[i][1] - r.embedding[j][1];
            if (dx * dx + dy * dy < best) {
                best = dx * dx + dy * dy;
                nn = j;
            }
        }
        correct += blob[nn] == blob[i];
    }
    CHECK(double(correct) / 40.0 >= 0.95);

    // Same multiset of pairwise distances after shuffling the input.
    std::vector<std::size_t> perm(40);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    Points shuffled;
    for (auto i : perm) shuffled.push_back(pts[i]);
    auto s = tsne(shuffled, opt);
    auto dists = [](const Embedding2D& e) {
        std::vector<double> d;
        for (std::size_t i = 0; i < e.size(); ++i)
            for (std::size_t j = i + 1; j < e.size(); ++j) d.push_back(std::hypot(e[i][0] - e[j][0], e[i][1] - e[j][1]));
        std::sort(d.begin(), d.end());
        return d;
    };
    auto da = dists(r.embedding), db = dists(s.embedding);
    double worst = 0;
    for (std::size_t i = 0; i < da.size(); ++i) worst = std::max(worst, std::abs(da[i] - db[i]));
    CHECK(worst < 1e-6);

    auto again = tsne(pts, opt);
    CHECK(again.embedding == r.embedding);
}
