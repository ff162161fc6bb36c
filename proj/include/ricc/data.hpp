#pragma once

// Datasets: MNIST IDX files, the seeded synthetic cloud-patch generator,
// quality control and rotation-agnostic minibatches.

#include <array>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "ricc/tensor.hpp"
#include "ricc/transforms.hpp"

namespace ricc {

class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};
class IdxBadMagic : public DataError {
public:
    using DataError::DataError;
};
class IdxTruncated : public DataError {
public:
    using DataError::DataError;
};
class IdxMismatch : public DataError {
public:
    using DataError::DataError;
};

inline constexpr std::uint32_t kIdxImageMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelMagic = 0x00000801;

struct LabeledImages {
    std::vector<Image> images;
    std::vector<int> labels;
};

// Reads an IDX image or label file, gzip-compressed or not. Pixels are
// scaled to [0, 1].
std::vector<Image> read_idx_images(const std::filesystem::path& path);
std::vector<int> read_idx_labels(const std::filesystem::path& path);

struct MnistData {
    LabeledImages train;
    LabeledImages test;
};

// Expects the four standard file names, each optionally suffixed ".gz".
MnistData load_mnist(const std::filesystem::path& dir);

// Zero-pads every image symmetrically to `side`.
Image pad_to(const Image& img, std::size_t side);

// The first `per_class` images of each class 0..9, in class-major order.
LabeledImages take_per_class(const LabeledImages& set, std::size_t per_class);

enum class DatasetKind : std::uint8_t { mnist, synthetic };

struct DatasetSpec {
    DatasetKind kind = DatasetKind::synthetic;
    std::size_t count = 1000;
    std::size_t side = 32;
    std::size_t channels = 6;
    std::uint64_t seed = 0;
    double qc_threshold = 0.30;

    void validate() const;
};

inline constexpr std::size_t kFieldCount = 4;
inline constexpr std::array<const char*, kFieldCount> kFieldNames{"thickness", "phase", "top_pressure", "radius"};
inline constexpr std::size_t kDefaultRegimes = 6;
// A pixel is cloudy when channel 0 exceeds this value.
inline constexpr float kCloudThreshold = 0.5f;

struct SyntheticPatch {
    Image image;
    std::array<double, kFieldCount> fields{};
    double coverage = 0.0;
    int regime = 0;
};

// Each regime has its own texture scale, cloud fraction, channel response
// and field distributions. Patch i depends only on (seed, i).
std::vector<SyntheticPatch> gen_synthetic(const DatasetSpec& spec, std::size_t regimes = kDefaultRegimes);

// As gen_synthetic with the regime of every patch given; patch i depends
// only on (seed, i, regime).
std::vector<SyntheticPatch> gen_synthetic_regimes(const DatasetSpec& spec, const std::vector<int>& regimes,
                                                  std::size_t regime_count = kDefaultRegimes);

// Fraction of pixels whose channel 0 exceeds kCloudThreshold.
double cloud_coverage(const Image& img);

// Drops patches with coverage below `threshold` or any non-finite pixel.
std::vector<SyntheticPatch> qc_filter(const std::vector<SyntheticPatch>& patches, double threshold = 0.30);

std::vector<Image> images_of(const std::vector<SyntheticPatch>& patches);
std::vector<int> regimes_of(const std::vector<SyntheticPatch>& patches);

struct RaMinibatch {
    Tensor batch;                     // [G*M, C, H, W], group-major
    std::vector<std::size_t> items;   // dataset index of each group
    std::vector<std::size_t> groups;  // group id of every sample
    std::vector<double> angles;       // rotation of every sample, degrees
};

// G distinct items, M rotated copies each, angles uniform in [0, 360).
// Copies are masked to the inscribed circle.
RaMinibatch build_ra_minibatch(const std::vector<Image>& dataset, std::size_t groups, std::size_t replicas,
                               std::uint64_t seed);

// Deterministic per-stream seed derivation.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

// Uniform double in [0, 1) independent of the standard library's distributions.
double unit_uniform(std::uint64_t& state);

}  // namespace ricc
