#pragma once

// Image-space operators on single multi-channel images and on NCHW batches.

#include <cstdint>
#include <vector>

#include "ricc/tensor.hpp"

namespace ricc {

// Channel-major (C, H, W) image.
struct Image {
    std::size_t channels = 0;
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<float> data;

    Image() = default;
    Image(std::size_t c, std::size_t h, std::size_t w, float value = 0.0f)
        : channels(c), height(h), width(w), data(c * h * w, value) {}

    float& at(std::size_t c, std::size_t y, std::size_t x) { return data[(c * height + y) * width + x]; }
    float at(std::size_t c, std::size_t y, std::size_t x) const { return data[(c * height + y) * width + x]; }
    std::size_t plane() const { return height * width; }

    bool operator==(const Image&) const = default;
};

struct RotationSet {
    std::vector<double> angles;  // degrees, strictly increasing in [0, 360), contains 0

    void validate() const;
    std::size_t size() const { return angles.size(); }
};

// {0, step, 2*step, ...} below 360; the default step gives the 12 angles 0..330.
RotationSet uniform_rotations(double step_deg = 30.0);

// Bilinear rotation about the image center; out-of-support pixels read `fill`.
Image rotate(const Image& img, double angle_deg, float fill = 0.0f);

// Zeroes every pixel farther than side/2 from the image center.
Image circular_mask(const Image& img);
Tensor circular_mask(const Tensor& batch);
// 1 inside the inscribed circle, 0 outside, for a side x side grid.
std::vector<float> circle_mask_weights(std::size_t side);

// Replaces each complete, non-overlapping k x k tile by its per-channel mean.
// Rows and columns past the last complete tile keep their values.
Image smooth(const Image& img, std::size_t k);

// Pixel-coordinate permutation drawn from `seed`; perm[i] is the source of i.
std::vector<std::size_t> scramble_permutation(std::size_t pixels, std::uint64_t seed);
std::vector<std::size_t> invert_permutation(const std::vector<std::size_t>& perm);
Image apply_permutation(const Image& img, const std::vector<std::size_t>& perm);
// One permutation shared by all channels.
Image scramble(const Image& img, std::uint64_t seed);

enum class NormScope { patch, global };

// Per-channel (x - min) / (max - min); constant channels map to 0.
Image normalize01(const Image& img);
// Same with min/max pooled over all images (global scope) or per image.
void normalize01(std::vector<Image>& images, NormScope scope);

Tensor to_batch(const std::vector<Image>& images);
std::vector<Image> from_batch(const Tensor& batch);

// Rotates sample i by angles[i] (no gradient tracking).
Tensor rotate_each(const Tensor& batch, const std::vector<double>& angles, float fill = 0.0f);

}  // namespace ricc
