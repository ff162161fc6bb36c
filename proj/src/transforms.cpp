#include "ricc/transforms.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>

#include "ricc/ops.hpp"

namespace ricc {

void RotationSet::validate() const {
    if (angles.empty()) throw std::invalid_argument("rotation set is empty");
    if (angles.front() != 0.0) throw std::invalid_argument("rotation set must start at 0 degrees");
    for (std::size_t i = 0; i < angles.size(); ++i) {
        if (!(angles[i] >= 0.0 && angles[i] < 360.0))
            throw std::invalid_argument("rotation angle " + std::to_string(angles[i]) + " outside [0, 360)");
        if (i > 0 && !(angles[i] > angles[i - 1]))
            throw std::invalid_argument("rotation angles must be strictly increasing");
    }
}

RotationSet uniform_rotations(double step_deg) {
    if (!(step_deg > 0.0)) throw std::invalid_argument("rotation step must be positive");
    RotationSet r;
    for (int i = 0; double(i) * step_deg < 360.0 - 1e-9; ++i) r.angles.push_back(double(i) * step_deg);
    return r;
}

Tensor to_batch(const std::vector<Image>& images) {
    if (images.empty()) throw std::invalid_argument("to_batch: no images");
    const auto& f = images.front();
    std::vector<float> v;
    v.reserve(images.size() * f.data.size());
    for (const auto& img : images) {
        if (img.channels != f.channels || img.height != f.height || img.width != f.width)
            throw ShapeError("to_batch: images differ in shape");
        v.insert(v.end(), img.data.begin(), img.data.end());
    }
    return Tensor({images.size(), f.channels, f.height, f.width}, std::move(v));
}

std::vector<Image> from_batch(const Tensor& batch) {
    if (batch.rank() != 4) throw ShapeError("from_batch: expected [N,C,H,W], got " + shape_str(batch.shape()));
    std::vector<Image> out;
    const std::size_t per = batch.dim(1) * batch.dim(2) * batch.dim(3);
    auto d = batch.data();
    for (std::size_t n = 0; n < batch.dim(0); ++n) {
        Image img(batch.dim(1), batch.dim(2), batch.dim(3));
        std::copy_n(d.begin() + long(n * per), per, img.data.begin());
        out.push_back(std::move(img));
    }
    return out;
}

Image rotate(const Image& img, double angle_deg, float fill) {
    if (img.height != img.width) throw ShapeError("rotate: image must be square");
    NoGradGuard guard;
    return from_batch(rotate_batch(to_batch({img}), angle_deg, fill)).front();
}

Tensor rotate_each(const Tensor& batch, const std::vector<double>& angles, float fill) {
    if (batch.rank() != 4 || angles.size() != batch.dim(0))
        throw ShapeError("rotate_each: need one angle per sample");
    NoGradGuard guard;
    std::vector<Tensor> parts;
    parts.reserve(angles.size());
    for (std::size_t i = 0; i < angles.size(); ++i)
        parts.push_back(rotate_batch(slice_batch(batch, i, i + 1), angles[i], fill));
    return concat_batch(parts);
}

std::vector<float> circle_mask_weights(std::size_t side) {
    std::vector<float> m(side * side);
    const double c = (double(side) - 1.0) / 2.0, r = double(side) / 2.0;
    for (std::size_t y = 0; y < side; ++y)
        for (std::size_t x = 0; x < side; ++x) {
            double dy = double(y) - c, dx = double(x) - c;
            m[y * side + x] = dx * dx + dy * dy <= r * r ? 1.0f : 0.0f;
        }
    return m;
}

Image circular_mask(const Image& img) {
    if (img.height != img.width) throw ShapeError("circular_mask: image must be square");
    auto m = circle_mask_weights(img.height);
    Image out = img;
    for (std::size_t c = 0; c < img.channels; ++c)
        for (std::size_t i = 0; i < img.plane(); ++i) out.data[c * img.plane() + i] *= m[i];
    return out;
}

Tensor circular_mask(const Tensor& batch) {
    if (batch.rank() != 4 || batch.dim(2) != batch.dim(3))
        throw ShapeError("circular_mask: expected square [N,C,H,W], got " + shape_str(batch.shape()));
    auto m = circle_mask_weights(batch.dim(2));
    const std::size_t planes = batch.dim(0) * batch.dim(1), hw = m.size();
    std::vector<float> full(batch.numel());
    for (std::size_t p = 0; p < planes; ++p) std::copy(m.begin(), m.end(), full.begin() + long(p * hw));
    return mul(batch, Tensor(batch.shape(), std::move(full)));
}

Image smooth(const Image& img, std::size_t k) {
    if (k == 0) throw std::invalid_argument("smooth: kernel size must be >= 1");
    if (k > img.height || k > img.width)
        throw std::invalid_argument("smooth: kernel size " + std::to_string(k) + " exceeds the image side");
    Image out = img;
    const std::size_t ty = img.height / k, tx = img.width / k;
    for (std::size_t c = 0; c < img.channels; ++c)
        for (std::size_t by = 0; by < ty; ++by)
            for (std::size_t bx = 0; bx < tx; ++bx) {
                double s = 0;
                for (std::size_t y = by * k; y < (by + 1) * k; ++y)
                    for (std::size_t x = bx * k; x < (bx + 1) * k; ++x) s += img.at(c, y, x);
                const float mean = float(s / double(k * k));
                for (std::size_t y = by * k; y < (by + 1) * k; ++y)
                    for (std::size_t x = bx * k; x < (bx + 1) * k; ++x) out.at(c, y, x) = mean;
            }
    return out;
}

std::vector<std::size_t> scramble_permutation(std::size_t pixels, std::uint64_t seed) {
    std::vector<std::size_t> perm(pixels);
    std::iota(perm.begin(), perm.end(), std::size_t(0));
    // Fisher-Yates with a portable bounded draw.
    std::mt19937_64 rng(seed);
    for (std::size_t i = pixels; i > 1; --i) {
        std::size_t j = std::size_t(rng() % i);
        std::swap(perm[i - 1], perm[j]);
    }
    return perm;
}

std::vector<std::size_t> invert_permutation(const std::vector<std::size_t>& perm) {
    std::vector<std::size_t> inv(perm.size());
    for (std::size_t i = 0; i < perm.size(); ++i) inv.at(perm[i]) = i;
    return inv;
}

Image apply_permutation(const Image& img, const std::vector<std::size_t>& perm) {
    if (perm.size() != img.plane()) throw std::invalid_argument("apply_permutation: size mismatch");
    Image out = img;
    for (std::size_t c = 0; c < img.channels; ++c)
        for (std::size_t i = 0; i < perm.size(); ++i)
            out.data[c * img.plane() + i] = img.data[c * img.plane() + perm[i]];
    return out;
}

Image scramble(const Image& img, std::uint64_t seed) {
    return apply_permutation(img, scramble_permutation(img.plane(), seed));
}

namespace {

void check_finite(const Image& img) {
    for (float v : img.data)
        if (!std::isfinite(v)) throw std::invalid_argument("normalize01: non-finite pixel");
}

void rescale(Image& img, std::size_t c, float lo, float hi) {
    float* p = img.data.data() + c * img.plane();
    for (std::size_t i = 0; i < img.plane(); ++i) p[i] = hi > lo ? (p[i] - lo) / (hi - lo) : 0.0f;
}

}  // namespace

Image normalize01(const Image& img) {
    check_finite(img);
    Image out = img;
    for (std::size_t c = 0; c < img.channels; ++c) {
        const float* p = img.data.data() + c * img.plane();
        auto [lo, hi] = std::minmax_element(p, p + img.plane());
        rescale(out, c, *lo, *hi);
    }
    return out;
}

void normalize01(std::vector<Image>& images, NormScope scope) {
    if (scope == NormScope::patch) {
        for (auto& img : images) img = normalize01(img);
        return;
    }
    if (images.empty()) return;
    const std::size_t channels = images.front().channels;
    std::vector<float> lo(channels, std::numeric_limits<float>::infinity());
    std::vector<float> hi(channels, -std::numeric_limits<float>::infinity());
    for (const auto& img : images) {
        check_finite(img);
        if (img.channels != channels) throw ShapeError("normalize01: channel count differs between images");
        for (std::size_t c = 0; c < channels; ++c) {
            const float* p = img.data.data() + c * img.plane();
            auto [a, b] = std::minmax_element(p, p + img.plane());
            lo[c] = std::min(lo[c], *a);
            hi[c] = std::max(hi[c], *b);
        }
    }
    for (auto& img : images)
        for (std::size_t c = 0; c < channels; ++c) rescale(img, c, lo[c], hi[c]);
}

}  // namespace ricc
