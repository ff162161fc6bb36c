#pragma once

// Encoder/decoder networks.
//
// RI_RA_ARCH: a stem convolution at 32x32 followed by five blocks of three
// 3x3 convolutions (16x16x32, 16x16x64, 8x8x128, 4x4x256, 2x2x512), batch
// norm on the last convolution of each block, leaky ReLU after every
// convolution, stride-2 convolutions where the resolution halves.
// NRI_ARCH: the same schedule with two convolutions per block, max-pool
// downsampling and additive skip connections.
// The decoder mirrors the encoder with transposed convolutions for upsampling
// and ends in a linear 3x3 convolution back to the input channels.

#include <cstdint>
#include <string>
#include <vector>

#include "ricc/ops.hpp"
#include "ricc/params.hpp"

namespace ricc {

enum class Downsample : std::uint8_t { stride_conv, max_pool };

struct BlockSpec {
    std::size_t resolution = 0;
    std::size_t filters = 0;
    std::size_t convs = 0;

    bool operator==(const BlockSpec&) const = default;
};

struct ArchDescriptor {
    ArchId id = ArchId::ri_ra;
    std::size_t input_side = 32;      // 32, 64 or 128; larger inputs are area-resized
    std::size_t input_channels = 1;
    std::size_t model_side = 32;
    std::size_t stem_filters = 1;
    std::vector<BlockSpec> blocks;
    Downsample downsample = Downsample::stride_conv;
    bool skip_connections = false;

    // Reference filter schedule divided by `width_divisor` (1 = full size).
    static ArchDescriptor ri_ra(std::size_t input_channels, std::size_t input_side = 32,
                                std::size_t width_divisor = 1);
    static ArchDescriptor nri(std::size_t input_channels, std::size_t input_side = 32,
                              std::size_t width_divisor = 1);

    void validate() const;
    Shape input_shape(std::size_t n) const;
    Shape latent_shape(std::size_t n) const;
    std::size_t latent_dim() const;

    std::string to_json() const;
    static ArchDescriptor from_json(const std::string& text);

    bool operator==(const ArchDescriptor&) const = default;
};

template <typename Real>
struct BasicModel {
    ArchDescriptor arch;
    BasicParamSet<Real> params;

    template <typename Other>
    BasicModel<Other> cast() const {
        return {arch, params.template cast<Other>()};
    }
};

using Model = BasicModel<float>;

// Kaiming-uniform weights for leaky-ReLU slope 0.3, zero biases, unit
// batch-norm scale. Deterministic in `seed`.
template <typename Real>
BasicModel<Real> init_model(const ArchDescriptor& arch, std::uint64_t seed);

template <typename Real>
BasicTensor<Real> encode(BasicModel<Real>& model, const BasicTensor<Real>& x, BnMode mode);

template <typename Real>
BasicTensor<Real> decode(BasicModel<Real>& model, const BasicTensor<Real>& z, BnMode mode);

template <typename Real>
BasicTensor<Real> reconstruct(BasicModel<Real>& model, const BasicTensor<Real>& x, BnMode mode) {
    return decode(model, encode(model, x, mode), mode);
}

}  // namespace ricc
