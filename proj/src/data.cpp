#include "ricc/data.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numbers>

#include <zlib.h>

namespace ricc {

namespace {

struct GzCloser {
    void operator()(gzFile_s* f) const { gzclose(f); }
};
using GzFile = std::unique_ptr<gzFile_s, GzCloser>;

GzFile open_gz(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw DataError("no such file: " + path.string());
    GzFile f(gzopen(path.c_str(), "rb"));
    if (!f) throw DataError("cannot open " + path.string());
    return f;
}

void read_exact(gzFile_s* f, void* dst, std::size_t n, const std::filesystem::path& path) {
    auto* p = static_cast<unsigned char*>(dst);
    while (n > 0) {
        unsigned chunk = unsigned(std::min<std::size_t>(n, 1u << 30));
        int got = gzread(f, p, chunk);
        if (got <= 0) throw IdxTruncated("unexpected end of " + path.string());
        p += got;
        n -= std::size_t(got);
    }
}

std::uint32_t read_be32(gzFile_s* f, const std::filesystem::path& path) {
    unsigned char b[4];
    read_exact(f, b, 4, path);
    return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) | (std::uint32_t(b[2]) << 8) | b[3];
}

void check_magic(std::uint32_t got, std::uint32_t want, const std::filesystem::path& path) {
    if (got != want) {
        char buf[64];
        std::snprintf(buf, sizeof buf, "magic 0x%08x, expected 0x%08x", got, want);
        throw IdxBadMagic(path.string() + ": " + buf);
    }
}

std::filesystem::path find_file(const std::filesystem::path& dir, const std::string& name) {
    for (auto candidate : {dir / name, dir / (name + ".gz")})
        if (std::filesystem::exists(candidate)) return candidate;
    throw DataError("missing " + name + "[.gz] in " + dir.string());
}

LabeledImages load_pair(const std::filesystem::path& dir, const std::string& prefix) {
    LabeledImages set;
    set.images = read_idx_images(find_file(dir, prefix + "-images-idx3-ubyte"));
    set.labels = read_idx_labels(find_file(dir, prefix + "-labels-idx1-ubyte"));
    if (set.images.size() != set.labels.size())
        throw IdxMismatch(prefix + ": " + std::to_string(set.images.size()) + " images but " +
                          std::to_string(set.labels.size()) + " labels");
    return set;
}

std::uint64_t splitmix(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

double unit_normal(std::uint64_t& state) {
    double u1 = unit_uniform(state), u2 = unit_uniform(state);
    u1 = std::max(u1, 0x1.0p-60);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// Fixed per-regime constants, independent of the dataset seed.
struct Regime {
    double wavenumber;   // cycles per patch of the main texture
    double cloud_level;  // threshold on the unit-variance base field
    std::array<double, 6> gain_f;
    std::array<double, 6> gain_g;
    std::array<double, 6> bias;
    std::array<double, kFieldCount> field_mean;
};

Regime make_regime(std::size_t r, std::size_t regimes) {
    Regime g{};
    g.wavenumber = 1.5 + 1.1 * double(r);
    g.cloud_level = -0.6 + 0.25 * double(r % 3);
    std::uint64_t s = mix_seed(0x5eed0f5e6e5ull, r);
    for (std::size_t c = 0; c < 6; ++c) {
        g.gain_f[c] = 1.0 + 2.0 * unit_uniform(s);
        g.gain_g[c] = 2.0 * unit_uniform(s) - 1.0;
        g.bias[c] = 1.6 * unit_uniform(s) - 0.8;
    }
    const std::size_t step[kFieldCount] = {1, 5, 1, 5};
    for (std::size_t j = 0; j < kFieldCount; ++j) g.field_mean[j] = double((step[j] * r + j) % regimes);
    return g;
}

// Sum of random plane waves with wavenumbers in [0.8, 1.2] x `k`, isotropic
// in distribution, unit variance.
std::vector<double> random_field(std::size_t side, double k, std::uint64_t& state) {
    constexpr int kModes = 16;
    std::vector<double> f(side * side, 0.0);
    const double amp = std::sqrt(2.0 / kModes);
    for (int m = 0; m < kModes; ++m) {
        double km = k * (0.8 + 0.4 * unit_uniform(state)) * 2.0 * std::numbers::pi / double(side);
        double th = 2.0 * std::numbers::pi * unit_uniform(state);
        double ph = 2.0 * std::numbers::pi * unit_uniform(state);
        double kx = km * std::cos(th), ky = km * std::sin(th);
        for (std::size_t y = 0; y < side; ++y)
            for (std::size_t x = 0; x < side; ++x) f[y * side + x] += amp * std::cos(kx * double(x) + ky * double(y) + ph);
    }
    return f;
}

}  // namespace

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t s = seed ^ (0xd1b54a32d192ed03ull * (stream + 1));
    splitmix(s);
    return splitmix(s);
}

double unit_uniform(std::uint64_t& state) { return double(splitmix(state) >> 11) * 0x1.0p-53; }

std::vector<Image> read_idx_images(const std::filesystem::path& path) {
    auto f = open_gz(path);
    check_magic(read_be32(f.get(), path), kIdxImageMagic, path);
    const std::uint32_t n = read_be32(f.get(), path), rows = read_be32(f.get(), path), cols = read_be32(f.get(), path);
    if (rows == 0 || cols == 0) throw DataError(path.string() + ": zero-sized images");
    std::vector<unsigned char> raw(std::size_t(n) * rows * cols);
    read_exact(f.get(), raw.data(), raw.size(), path);
    std::vector<Image> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        Image img(1, rows, cols);
        for (std::size_t p = 0; p < std::size_t(rows) * cols; ++p)
            img.data[p] = float(raw[i * rows * cols + p]) / 255.0f;
        out.push_back(std::move(img));
    }
    return out;
}

std::vector<int> read_idx_labels(const std::filesystem::path& path) {
    auto f = open_gz(path);
    check_magic(read_be32(f.get(), path), kIdxLabelMagic, path);
    const std::uint32_t n = read_be32(f.get(), path);
    std::vector<unsigned char> raw(n);
    read_exact(f.get(), raw.data(), raw.size(), path);
    return {raw.begin(), raw.end()};
}

MnistData load_mnist(const std::filesystem::path& dir) { return {load_pair(dir, "train"), load_pair(dir, "t10k")}; }

Image pad_to(const Image& img, std::size_t side) {
    if (img.height > side || img.width > side)
        throw std::invalid_argument("pad_to: image larger than " + std::to_string(side));
    Image out(img.channels, side, side);
    const std::size_t oy = (side - img.height) / 2, ox = (side - img.width) / 2;
    for (std::size_t c = 0; c < img.channels; ++c)
        for (std::size_t y = 0; y < img.height; ++y)
            for (std::size_t x = 0; x < img.width; ++x) out.at(c, y + oy, x + ox) = img.at(c, y, x);
    return out;
}

LabeledImages take_per_class(const LabeledImages& set, std::size_t per_class) {
    LabeledImages out;
    for (int cls = 0; cls < 10; ++cls) {
        std::size_t taken = 0;
        for (std::size_t i = 0; i < set.images.size() && taken < per_class; ++i)
            if (set.labels[i] == cls) {
                out.images.push_back(set.images[i]);
                out.labels.push_back(cls);
                ++taken;
            }
        if (taken < per_class)
            throw DataError("class " + std::to_string(cls) + " has only " + std::to_string(taken) + " images");
    }
    return out;
}

void DatasetSpec::validate() const {
    if (side != 28 && side != 32 && side != 64 && side != 128)
        throw std::invalid_argument("dataset side must be 28, 32, 64 or 128");
    if (channels != 1 && channels != 6) throw std::invalid_argument("dataset channels must be 1 or 6");
    if (kind == DatasetKind::synthetic && channels != 6)
        throw std::invalid_argument("synthetic patches have 6 channels");
    if (kind == DatasetKind::mnist && channels != 1) throw std::invalid_argument("MNIST has 1 channel");
    if (!(qc_threshold >= 0.0 && qc_threshold <= 1.0)) throw std::invalid_argument("qc threshold must be in [0, 1]");
}

double cloud_coverage(const Image& img) {
    const auto plane = img.height * img.width;
    std::size_t cloudy = 0;
    for (std::size_t p = 0; p < plane; ++p) cloudy += img.data[p] > kCloudThreshold;
    return double(cloudy) / double(plane);
}

namespace {

SyntheticPatch make_patch(const Regime& g, int regime, std::size_t side, std::uint64_t seed, std::size_t i) {
    std::uint64_t s = mix_seed(seed, i);
    auto f = random_field(side, g.wavenumber, s);
    auto h = random_field(side, 2.0 * g.wavenumber, s);
    const double level = g.cloud_level + 0.35 * unit_normal(s);
    const double contrast = 0.8 + 0.4 * unit_uniform(s);

    SyntheticPatch p;
    p.regime = regime;
    p.image = Image(6, side, side);
    const std::size_t plane = side * side;
    for (std::size_t q = 0; q < plane; ++q) {
        p.image.data[q] = float(sigmoid(4.0 * (f[q] - level)));
        for (std::size_t c = 1; c < 6; ++c)
            p.image.data[c * plane + q] = float(sigmoid(contrast * (g.gain_f[c] * f[q] + g.gain_g[c] * h[q]) + g.bias[c]));
    }
    p.coverage = cloud_coverage(p.image);
    for (std::size_t j = 0; j < kFieldCount; ++j) p.fields[j] = g.field_mean[j] + 0.35 * unit_normal(s);
    return p;
}

void check_synthetic(const DatasetSpec& spec, std::size_t regimes) {
    spec.validate();
    if (spec.kind != DatasetKind::synthetic) throw std::invalid_argument("gen_synthetic: spec is not synthetic");
    if (regimes == 0 || regimes > 64) throw std::invalid_argument("gen_synthetic: regimes must be in [1, 64]");
}

}  // namespace

std::vector<SyntheticPatch> gen_synthetic(const DatasetSpec& spec, std::size_t regimes) {
    check_synthetic(spec, regimes);
    std::vector<int> assigned(spec.count);
    for (std::size_t i = 0; i < spec.count; ++i) {
        // Regimes are a fresh permutation within every block of `regimes` items.
        std::uint64_t bs = mix_seed(spec.seed ^ 0xb10cull, i / regimes);
        std::vector<std::size_t> perm(regimes);
        for (std::size_t r = 0; r < regimes; ++r) perm[r] = r;
        for (std::size_t r = regimes; r > 1; --r) std::swap(perm[r - 1], perm[std::size_t(unit_uniform(bs) * double(r))]);
        assigned[i] = int(perm[i % regimes]);
    }
    return gen_synthetic_regimes(spec, assigned, regimes);
}

std::vector<SyntheticPatch> gen_synthetic_regimes(const DatasetSpec& spec, const std::vector<int>& assigned,
                                                  std::size_t regimes) {
    check_synthetic(spec, regimes);
    if (assigned.size() != spec.count) throw std::invalid_argument("gen_synthetic_regimes: one regime per patch");
    std::vector<Regime> table;
    for (std::size_t r = 0; r < regimes; ++r) table.push_back(make_regime(r, regimes));
    std::vector<SyntheticPatch> out(spec.count);
    for (std::size_t i = 0; i < spec.count; ++i) {
        if (assigned[i] < 0 || std::size_t(assigned[i]) >= regimes)
            throw std::invalid_argument("gen_synthetic_regimes: regime out of range");
        out[i] = make_patch(table[std::size_t(assigned[i])], assigned[i], spec.side, spec.seed, i);
    }
    return out;
}

std::vector<SyntheticPatch> qc_filter(const std::vector<SyntheticPatch>& patches, double threshold) {
    std::vector<SyntheticPatch> out;
    for (const auto& p : patches) {
        if (p.coverage < threshold) continue;
        bool finite = std::all_of(p.image.data.begin(), p.image.data.end(), [](float v) { return std::isfinite(v); });
        for (double v : p.fields) finite = finite && std::isfinite(v);
        if (finite) out.push_back(p);
    }
    return out;
}

std::vector<Image> images_of(const std::vector<SyntheticPatch>& patches) {
    std::vector<Image> out;
    out.reserve(patches.size());
    for (const auto& p : patches) out.push_back(p.image);
    return out;
}

std::vector<int> regimes_of(const std::vector<SyntheticPatch>& patches) {
    std::vector<int> out;
    out.reserve(patches.size());
    for (const auto& p : patches) out.push_back(p.regime);
    return out;
}

RaMinibatch build_ra_minibatch(const std::vector<Image>& dataset, std::size_t groups, std::size_t replicas,
                               std::uint64_t seed) {
    if (replicas < 2) throw std::invalid_argument("RA minibatch needs at least 2 replicas per group");
    if (groups == 0 || groups > dataset.size())
        throw std::invalid_argument("RA minibatch: cannot draw " + std::to_string(groups) + " distinct items from " +
                                    std::to_string(dataset.size()));
    std::uint64_t s = mix_seed(seed, 0x7a);
    // Partial Fisher-Yates over indices for G distinct items.
    std::vector<std::size_t> idx(dataset.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    RaMinibatch mb;
    for (std::size_t g = 0; g < groups; ++g) {
        std::size_t j = g + std::size_t(unit_uniform(s) * double(idx.size() - g));
        std::swap(idx[g], idx[j]);
        mb.items.push_back(idx[g]);
    }
    std::vector<Image> imgs;
    for (std::size_t g = 0; g < groups; ++g)
        for (std::size_t m = 0; m < replicas; ++m) {
            double angle = 360.0 * unit_uniform(s);
            imgs.push_back(circular_mask(rotate(dataset[mb.items[g]], angle)));
            mb.groups.push_back(g);
            mb.angles.push_back(angle);
        }
    mb.batch = to_batch(imgs);
    return mb;
}

}  // namespace ricc
