#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "ricc/transforms.hpp"

using namespace ricc;

namespace {

Image random_image(std::size_t c, std::size_t h, std::size_t w, std::uint32_t seed) {
    std::mt19937 rng(seed);
    std::uniform_real_distribution<float> u(0.0f, 1.0f);
    Image img(c, h, w);
    for (auto& v : img.data) v = u(rng);
    return img;
}

double max_abs_diff(const Image& a, const Image& b) {
    double m = 0;
    for (std::size_t i = 0; i < a.data.size(); ++i) m = std::max(m, double(std::abs(a.data[i] - b.data[i])));
    return m;
}

}  // namespace

TEST_CASE("rotation set") {
    auto r = uniform_rotations();
    REQUIRE(r.size() == 12);
    CHECK(r.angles.front() == 0.0);
    CHECK(r.angles.back() == 330.0);
    CHECK_NOTHROW(r.validate());
    CHECK_THROWS(RotationSet{{30.0, 60.0}}.validate());
    CHECK_THROWS(RotationSet{{0.0, 60.0, 30.0}}.validate());
    CHECK_THROWS(RotationSet{{0.0, 360.0}}.validate());
    CHECK_THROWS(RotationSet{{}}.validate());
}

TEST_CASE("rotate") {
    auto img = random_image(3, 8, 8, 1);
    CHECK(rotate(img, 0.0) == img);

    // 90 degrees is the transpose-and-flip permutation out[i][j] = in[j][W-1-i].
    auto r90 = rotate(img, 90.0);
    double diff = 0;
    for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t i = 0; i < 8; ++i)
            for (std::size_t j = 0; j < 8; ++j)
                diff = std::max(diff, double(std::abs(r90.at(c, i, j) - img.at(c, j, 7 - i))));
    CHECK(diff < 1e-6);

    auto masked = circular_mask(img);
    auto back = circular_mask(rotate(rotate(masked, 180.0), 180.0));
    CHECK(max_abs_diff(back, masked) < 1e-2);

    auto odd = random_image(2, 9, 9, 2);
    for (double angle : {17.0, 45.0, 123.4, 300.0}) {
        auto r = rotate(odd, angle);
        for (std::size_t c = 0; c < 2; ++c) CHECK(std::abs(r.at(c, 4, 4) - odd.at(c, 4, 4)) < 1e-6);
    }

    // Out-of-support pixels read the fill value.
    auto r45 = rotate(Image(1, 8, 8, 1.0f), 45.0, -1.0f);
    CHECK(r45.at(0, 0, 0) == -1.0f);

    CHECK_THROWS(rotate(Image(1, 4, 6), 30.0));
}

TEST_CASE("circular mask") {
    const std::size_t s = 32;
    auto img = Image(2, s, s, 1.0f);
    auto m = circular_mask(img);
    CHECK(m.at(0, 0, 0) == 0.0f);
    CHECK(m.at(1, s - 1, s - 1) == 0.0f);
    CHECK(m.at(0, s / 2, s / 2) == 1.0f);
    double zeros = 0;
    for (std::size_t i = 0; i < s * s; ++i) zeros += m.data[i] == 0.0f;
    double frac = zeros / double(s * s);
    CHECK(std::abs(frac - (1.0 - std::numbers::pi / 4.0)) < 2.0 / double(s));

    auto batch = to_batch({img, img});
    auto mb = circular_mask(batch);
    auto back = from_batch(mb);
    CHECK(back[1] == m);
}

TEST_CASE("smooth") {
    auto img = random_image(2, 6, 6, 3);
    CHECK(smooth(img, 1) == img);

    Image four(1, 2, 2);
    four.data = {1, 3, 5, 7};
    auto s4 = smooth(four, 2);
    for (float v : s4.data) CHECK(v == 4.0f);

    auto five = random_image(1, 5, 5, 4);
    auto s5 = smooth(five, 2);
    for (std::size_t i = 0; i < 5; ++i) {
        CHECK(s5.at(0, 4, i) == five.at(0, 4, i));
        CHECK(s5.at(0, i, 4) == five.at(0, i, 4));
    }
    CHECK(s5.at(0, 0, 0) == doctest::Approx((five.at(0, 0, 0) + five.at(0, 0, 1) + five.at(0, 1, 0) + five.at(0, 1, 1)) / 4));

    // Mean over covered tiles is preserved.
    auto big = random_image(3, 32, 32, 5);
    for (std::size_t k : {2u, 3u, 5u, 7u}) {
        auto sm = smooth(big, k);
        std::size_t cover = (32 / k) * k;
        for (std::size_t c = 0; c < 3; ++c) {
            double a = 0, b = 0;
            for (std::size_t y = 0; y < cover; ++y)
                for (std::size_t x = 0; x < cover; ++x) {
                    a += big.at(c, y, x);
                    b += sm.at(c, y, x);
                }
            CHECK(std::abs(a - b) / double(cover * cover) < 1e-6);
        }
    }
    CHECK_THROWS(smooth(img, 7));
    CHECK_THROWS(smooth(img, 0));
}

TEST_CASE("scramble") {
    auto img = random_image(3, 8, 8, 6);
    auto s = scramble(img, 11);
    for (std::size_t c = 0; c < 3; ++c) {
        std::vector<float> a(img.data.begin() + long(c * 64), img.data.begin() + long((c + 1) * 64));
        std::vector<float> b(s.data.begin() + long(c * 64), s.data.begin() + long((c + 1) * 64));
        std::sort(a.begin(), a.end());
        std::sort(b.begin(), b.end());
        CHECK(a == b);
    }
    // The same permutation is applied to every channel.
    auto perm = scramble_permutation(64, 11);
    for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t i = 0; i < 64; ++i) CHECK(s.data[c * 64 + i] == img.data[c * 64 + perm[i]]);

    CHECK(scramble(Image(2, 8, 8, 0.25f), 3) == Image(2, 8, 8, 0.25f));
    CHECK(scramble(img, 11) == s);
    CHECK(scramble_permutation(64, 12) != perm);
    CHECK(apply_permutation(s, invert_permutation(perm)) == img);
}

TEST_CASE("normalize01") {
    Image a(2, 1, 2);
    a.data = {2, 4, 3, 3};
    auto n = normalize01(a);
    CHECK(n.data == std::vector<float>{0, 1, 0, 0});

    auto r = random_image(3, 5, 5, 7);
    for (auto& v : r.data) v = v * 10 - 3;
    auto rn = normalize01(r);
    for (std::size_t c = 0; c < 3; ++c) {
        auto b = rn.data.begin() + long(c * 25);
        CHECK(*std::min_element(b, b + 25) == 0.0f);
        CHECK(*std::max_element(b, b + 25) == 1.0f);
    }

    Image bad(1, 1, 2);
    bad.data = {0.0f, std::nanf("")};
    CHECK_THROWS(normalize01(bad));

    std::vector<Image> set{a, a};
    set[1].data = {0, 8, 1, 5};
    auto g = set;
    normalize01(g, NormScope::global);
    CHECK(g[0].data[0] == 0.25f);
    CHECK(g[1].data[1] == 1.0f);
    CHECK(g[0].data[2] == 0.5f);
    auto p = set;
    normalize01(p, NormScope::patch);
    CHECK(p[0] == n);
}
