#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include <json.hpp>

#include "ricc/cluster.hpp"
#include "ricc/metrics.hpp"
#include "cluster_oracle.hpp"

using namespace ricc;
using ricc::testing::naive_ward;
using ricc::testing::random_points;
using ricc::testing::same_merges;

TEST_CASE("ward two points") {
    auto t = ward_hac({{0.0}, {2.0}});
    REQUIRE(t.merges.size() == 1);
    CHECK(t.merges[0] == Merge{0, 1, 2.0, 2});
}

TEST_CASE("ward four points on a line") {
    auto t = ward_hac({{0.0}, {0.1}, {2.0}, {2.1}});
    REQUIRE(t.merges.size() == 3);
    CHECK(t.merges[0].a == 0);
    CHECK(t.merges[0].b == 1);
    CHECK(t.merges[1].a == 2);
    CHECK(t.merges[1].b == 3);
    CHECK(t.merges[2].a == 4);
    CHECK(t.merges[2].b == 5);
    CHECK(t.merges[0].height == doctest::Approx(0.005));
    // Centroids 0.05 and 2.05, two points each.
    CHECK(t.merges[2].height == doctest::Approx(4.0));
    CHECK(t.merges[2].size == 4);
    CHECK(same_merges(t, naive_ward({{0.0}, {0.1}, {2.0}, {2.1}})));

    CHECK(t.cut(1) == Labels{0, 0, 0, 0});
    CHECK(t.cut(2) == Labels{0, 0, 1, 1});
    CHECK(t.cut(3) == Labels{0, 0, 1, 2});
    CHECK(t.cut(4) == Labels{0, 1, 2, 3});
    CHECK_THROWS(t.cut(0));
    CHECK_THROWS(t.cut(5));
}

TEST_CASE("ward matches the naive oracle") {
    std::mt19937_64 rng(31);
    auto pts = random_points(32, 8, rng);
    auto t = ward_hac(pts);
    CHECK(same_merges(t, naive_ward(pts)));
    for (std::size_t i = 1; i < t.merges.size(); ++i) CHECK(t.merges[i].height >= t.merges[i - 1].height);
    for (std::size_t k = 1; k <= 32; ++k) {
        auto l = t.cut(k);
        CHECK(std::size_t(*std::max_element(l.begin(), l.end()) + 1) == k);
    }
}

TEST_CASE("ward ties and duplicates") {
    // (0,1) and (1,2) tie exactly: the smaller pair of ids wins.
    auto t = ward_hac({{0.0}, {1.0}, {2.0}});
    CHECK(t.merges[0] == Merge{0, 1, 0.5, 2});
    auto u = ward_hac({{2.0}, {1.0}, {0.0}});
    CHECK(u.merges[0] == Merge{0, 1, 0.5, 2});

    Points pts{{1.0, 2.0}, {5.0, 1.0}, {1.0, 2.0}, {-3.0, 0.0}, {5.0, 1.0}};
    auto d = ward_hac(pts);
    CHECK(d.merges[0] == Merge{0, 2, 0.0, 2});
    CHECK(d.merges[1] == Merge{1, 4, 0.0, 2});
    CHECK(same_merges(d, naive_ward(pts)));
}

TEST_CASE("ward is invariant to input order") {
    std::mt19937_64 rng(5);
    auto pts = random_points(40, 6, rng);
    std::vector<std::size_t> perm(40);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    Points shuffled;
    for (auto p : perm) shuffled.push_back(pts[p]);
    auto a = ward_hac(pts);
    auto b = ward_hac(shuffled);
    for (std::size_t k = 1; k <= 40; ++k) {
        auto la = a.cut(k);
        auto lb = b.cut(k);
        Labels back(40);
        for (std::size_t i = 0; i < 40; ++i) back[perm[i]] = lb[i];
        CHECK(ami(la, back) == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("ward input errors") {
    CHECK_THROWS(ward_hac({{1.0}}));
    CHECK_THROWS(ward_hac({{1.0}, {1.0, 2.0}}));
    CHECK_THROWS(ward_hac({{1.0}, {std::numeric_limits<double>::quiet_NaN()}}));
    CHECK_THROWS(ward_hac({{1.0}, {std::numeric_limits<double>::infinity()}}));
    CHECK_THROWS(ward_hac({{}, {}}));
}

TEST_CASE("dendrogram export") {
    auto two = ward_hac({{0.0}, {2.0}});
    CHECK(two.to_json() == R"({"merges":[{"a":0,"b":1,"height":2.0,"size":2}],"n":2})");

    std::mt19937_64 rng(9);
    auto t = ward_hac(random_points(10, 3, rng));
    auto text = t.to_json();
    auto back = LinkageTree::from_json(text);
    CHECK(back == t);
    CHECK(back.to_json() == text);

    // Structural schema: n, and n-1 merges each with integer ids below
    // n + index, a finite non-negative height and a size matching its children.
    auto j = nlohmann::json::parse(text);
    REQUIRE(j.is_object());
    CHECK(j.size() == 2);
    REQUIRE(j["n"].is_number_unsigned());
    REQUIRE(j["merges"].is_array());
    CHECK(j["merges"].size() == 9);
    std::vector<std::size_t> sizes(19, 1);
    for (std::size_t m = 0; m < 9; ++m) {
        const auto& r = j["merges"][m];
        CHECK(r.size() == 4);
        REQUIRE(r["a"].is_number_unsigned());
        REQUIRE(r["b"].is_number_unsigned());
        REQUIRE(r["height"].is_number());
        REQUIRE(r["size"].is_number_unsigned());
        auto a = r["a"].get<std::size_t>(), b = r["b"].get<std::size_t>();
        CHECK(a < b);
        CHECK(b < 10 + m);
        CHECK(r["height"].get<double>() >= 0.0);
        sizes[10 + m] = sizes[a] + sizes[b];
        CHECK(r["size"].get<std::size_t>() == sizes[10 + m]);
    }

    CHECK_THROWS(LinkageTree::from_json(R"({"n":3,"merges":[{"a":0,"b":1,"height":1.0,"size":2}]})"));
    CHECK_THROWS(LinkageTree::from_json(
        R"({"n":3,"merges":[{"a":0,"b":1,"height":1.0,"size":2},{"a":0,"b":2,"height":2.0,"size":2}]})"));
    CHECK_THROWS(LinkageTree::from_json("not json"));

    auto order = t.leaf_order();
    auto sorted = order;
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t i = 0; i < 10; ++i) CHECK(sorted[i] == i);
}
