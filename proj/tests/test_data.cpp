#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include <zlib.h>

#include "ricc/data.hpp"

using namespace ricc;

namespace {

std::filesystem::path temp_dir() {
    auto d = std::filesystem::temp_directory_path() / "ricc_data_tests";
    std::filesystem::create_directories(d);
    return d;
}

void put_be32(std::vector<unsigned char>& b, std::uint32_t v) {
    for (int s = 24; s >= 0; s -= 8) b.push_back((v >> s) & 0xff);
}

void write_raw(const std::filesystem::path& p, const std::vector<unsigned char>& b) {
    std::ofstream out(p, std::ios::binary);
    out.write(reinterpret_cast<const char*>(b.data()), std::streamsize(b.size()));
}

void write_gz(const std::filesystem::path& p, const std::vector<unsigned char>& b) {
    gzFile f = gzopen(p.c_str(), "wb");
    gzwrite(f, b.data(), unsigned(b.size()));
    gzclose(f);
}

std::vector<unsigned char> idx_images(std::uint32_t n, std::uint32_t rows, std::uint32_t cols) {
    std::vector<unsigned char> b;
    put_be32(b, 0x803);
    put_be32(b, n);
    put_be32(b, rows);
    put_be32(b, cols);
    for (std::uint32_t i = 0; i < n * rows * cols; ++i) b.push_back((i * 37) & 0xff);
    return b;
}

std::vector<unsigned char> idx_labels(std::uint32_t n) {
    std::vector<unsigned char> b;
    put_be32(b, 0x801);
    put_be32(b, n);
    for (std::uint32_t i = 0; i < n; ++i) b.push_back(i % 10);
    return b;
}

}  // namespace

TEST_CASE("IDX reading") {
    auto d = temp_dir();
    auto bytes = idx_images(3, 2, 4);
    write_raw(d / "img.idx", bytes);
    write_gz(d / "img.idx.gz", bytes);
    auto raw = read_idx_images(d / "img.idx");
    auto gz = read_idx_images(d / "img.idx.gz");
    REQUIRE(raw.size() == 3);
    CHECK(raw[0].height == 2);
    CHECK(raw[0].width == 4);
    CHECK(raw[1].data[1] == float((9 * 37) & 0xff) / 255.0f);
    for (std::size_t i = 0; i < 3; ++i) CHECK(raw[i] == gz[i]);

    write_raw(d / "lab.idx", idx_labels(3));
    CHECK(read_idx_labels(d / "lab.idx") == std::vector<int>{0, 1, 2});

    auto bad = bytes;
    bad[3] = 0x01;
    write_raw(d / "bad.idx", bad);
    CHECK_THROWS_AS(read_idx_images(d / "bad.idx"), IdxBadMagic);
    CHECK_THROWS_AS(read_idx_labels(d / "img.idx"), IdxBadMagic);

    write_raw(d / "short.idx", std::vector<unsigned char>(bytes.begin(), bytes.end() - 1));
    CHECK_THROWS_AS(read_idx_images(d / "short.idx"), IdxTruncated);
    write_raw(d / "tiny.idx", std::vector<unsigned char>(bytes.begin(), bytes.begin() + 6));
    CHECK_THROWS_AS(read_idx_images(d / "tiny.idx"), IdxTruncated);
    CHECK_THROWS_AS(read_idx_images(d / "absent.idx"), DataError);

    auto m = d / "mismatch";
    std::filesystem::create_directories(m);
    write_raw(m / "train-images-idx3-ubyte", idx_images(3, 2, 2));
    write_gz(m / "train-labels-idx1-ubyte.gz", idx_labels(4));
    write_raw(m / "t10k-images-idx3-ubyte", idx_images(1, 2, 2));
    write_raw(m / "t10k-labels-idx1-ubyte", idx_labels(1));
    CHECK_THROWS_AS(load_mnist(m), IdxMismatch);
}

TEST_CASE("shipped MNIST subset") {
    auto mnist = load_mnist(std::filesystem::path(RICC_DATA_DIR) / "mnist");
    CHECK(mnist.train.images.size() == 9600);
    CHECK(mnist.test.images.size() == 400);
    float lo = 1, hi = 0;
    for (const auto& img : mnist.train.images)
        for (float v : img.data) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
    CHECK(lo >= 0.0f);
    CHECK(hi <= 1.0f);
    CHECK(hi > 0.99f);
    auto again = load_mnist(std::filesystem::path(RICC_DATA_DIR) / "mnist");
    CHECK(again.train.images[0] == mnist.train.images[0]);
    CHECK(again.test.labels == mnist.test.labels);

    auto probe = take_per_class(mnist.test, 40);
    CHECK(probe.images.size() == 400);
    CHECK(probe.labels[39] == 0);
    CHECK(probe.labels[40] == 1);

    auto padded = pad_to(mnist.train.images[0], 32);
    CHECK(padded.height == 32);
    CHECK(padded.at(0, 0, 0) == 0.0f);
    CHECK(padded.at(0, 2 + 14, 2 + 13) == mnist.train.images[0].at(0, 14, 13));

    if (const char* full = std::getenv("RICC_MNIST_DIR")) {
        auto all = load_mnist(full);
        CHECK(all.train.images.size() == 60000);
        CHECK(all.test.images.size() == 10000);
    }
}

TEST_CASE("synthetic generator") {
    DatasetSpec spec;
    spec.count = 1000;
    spec.seed = 17;
    auto a = gen_synthetic(spec);
    auto b = gen_synthetic(spec);
    REQUIRE(a.size() == 1000);
    bool same = true;
    for (std::size_t i = 0; i < a.size(); ++i)
        same = same && std::memcmp(a[i].image.data.data(), b[i].image.data.data(), a[i].image.data.size() * 4) == 0 &&
               a[i].fields == b[i].fields && a[i].regime == b[i].regime;
    CHECK(same);

    std::map<int, int> counts;
    for (const auto& p : a) {
        ++counts[p.regime];
        CHECK(p.image.channels == 6);
        CHECK(p.coverage == cloud_coverage(p.image));
        CHECK(std::all_of(p.image.data.begin(), p.image.data.end(), [](float v) { return v >= 0.0f && v <= 1.0f; }));
        for (double f : p.fields) CHECK(std::isfinite(f));
    }
    CHECK(counts.size() == 6);
    for (const auto& [r, c] : counts) CHECK(std::abs(c - 1000.0 / 6.0) <= 0.1 * 1000.0 / 6.0);

    // A prefix of a larger dataset is the smaller dataset.
    spec.count = 1200;
    auto c = gen_synthetic(spec);
    CHECK(c[999].image == a[999].image);
    spec.seed = 18;
    CHECK(gen_synthetic(spec)[0].image != a[0].image);

    spec.channels = 1;
    CHECK_THROWS(gen_synthetic(spec));
    spec.channels = 6;
    spec.side = 48;
    CHECK_THROWS(gen_synthetic(spec));
    spec.side = 64;
    spec.count = 3;
    CHECK(gen_synthetic(spec)[0].image.height == 64);
}

TEST_CASE("synthetic generator with given regimes") {
    DatasetSpec spec;
    spec.count = 40;
    spec.seed = 5;
    auto a = gen_synthetic(spec);
    auto b = gen_synthetic_regimes(spec, regimes_of(a));
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].image == b[i].image);
        CHECK(a[i].fields == b[i].fields);
    }
    std::vector<int> fixed(40, 2);
    for (const auto& p : gen_synthetic_regimes(spec, fixed)) CHECK(p.regime == 2);
    fixed[3] = 6;
    CHECK_THROWS(gen_synthetic_regimes(spec, fixed));
    fixed.pop_back();
    CHECK_THROWS(gen_synthetic_regimes(spec, fixed));
}

TEST_CASE("quality control") {
    SyntheticPatch low, full, nan_pixel;
    low.image = Image(6, 4, 4, 0.0f);
    low.coverage = 0.29;
    full.image = Image(6, 4, 4, 1.0f);
    full.coverage = 1.0;
    nan_pixel.image = Image(6, 4, 4, 1.0f);
    nan_pixel.image.data[5] = std::nanf("");
    nan_pixel.coverage = 1.0;
    auto kept = qc_filter({low, full, nan_pixel});
    REQUIRE(kept.size() == 1);
    CHECK(kept[0].coverage == 1.0);

    DatasetSpec spec;
    spec.count = 300;
    auto all = gen_synthetic(spec);
    auto once = qc_filter(all, spec.qc_threshold);
    auto twice = qc_filter(once, spec.qc_threshold);
    CHECK(once.size() <= all.size());
    CHECK(once.size() > all.size() / 2);
    CHECK(twice.size() == once.size());
    for (const auto& p : once) CHECK(p.coverage >= 0.30);
}

TEST_CASE("rotation-agnostic minibatch") {
    std::vector<Image> data;
    for (int i = 0; i < 20; ++i) data.push_back(Image(1, 8, 8, float(i)));
    auto mb = build_ra_minibatch(data, 8, 4, 5);
    CHECK(mb.batch.shape() == Shape{32, 1, 8, 8});
    CHECK(std::set<std::size_t>(mb.items.begin(), mb.items.end()).size() == 8);
    for (std::size_t i = 0; i < 32; ++i) {
        CHECK(mb.groups[i] == i / 4);
        CHECK(mb.angles[i] >= 0.0);
        CHECK(mb.angles[i] < 360.0);
        // Constant images stay constant inside the circle.
        CHECK(mb.batch[i * 64 + 3 * 8 + 4] == doctest::Approx(float(mb.items[i / 4])));
    }
    auto again = build_ra_minibatch(data, 8, 4, 5);
    CHECK(again.angles == mb.angles);
    CHECK(again.items == mb.items);
    CHECK(build_ra_minibatch(data, 8, 4, 6).angles != mb.angles);
    CHECK_THROWS(build_ra_minibatch(data, 8, 1, 5));
    CHECK_THROWS(build_ra_minibatch(data, 21, 2, 5));
}
