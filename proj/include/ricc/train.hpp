#pragma once

// Minibatch SGD training for the three objectives, and batched inference.

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "ricc/cluster.hpp"
#include "ricc/losses.hpp"

namespace ricc {

enum class LossKind : std::uint8_t { ri, nri, ra };

std::string_view to_string(LossKind k);
LossKind loss_kind_from_string(std::string_view s);

struct EpochStats {
    std::size_t epoch = 0;
    std::size_t steps = 0;
    double loss = 0.0;    // mean per-pixel objective over the epoch
    double part_a = 0.0;  // ri: l_inv, nri: l1, ra: agnostic term (per pixel)
    double part_b = 0.0;  // ri: l_res, nri: l2, ra: bottleneck term (per pixel)
    double seconds = 0.0;
};

struct TrainConfig {
    LossKind loss = LossKind::ri;
    RiWeights ri;
    RaWeight ra;
    double lr = 0.01;
    std::size_t batch_size = 32;
    std::size_t epochs = 20;
    RotationSet rotations = uniform_rotations();
    // Non-identity rotations drawn per step for l_inv; 0 uses all of them.
    std::size_t inv_subsample = 3;
    std::size_t ra_groups = 8;
    std::size_t ra_replicas = 4;
    std::uint64_t seed = 0;
    std::function<void(const EpochStats&)> on_epoch;

    void validate() const;
};

class TrainingDiverged : public std::runtime_error {
public:
    TrainingDiverged(const std::string& what, std::vector<EpochStats> trace)
        : std::runtime_error(what), trace(std::move(trace)) {}
    std::vector<EpochStats> trace;
};

// Trains in place. Inputs are masked to the inscribed circle first. The
// objective is divided by the number of pixels in the batch. Throws
// TrainingDiverged on a non-finite loss.
std::vector<EpochStats> train(Model& model, const std::vector<Image>& data, const TrainConfig& config);

// Latent vectors in eval mode, one row per image.
Points encode_all(Model& model, const std::vector<Image>& images, std::size_t batch_size = 64);
std::vector<Image> reconstruct_all(Model& model, const std::vector<Image>& images, std::size_t batch_size = 64);

// Mean per-pixel restoration loss in eval mode.
double mean_restoration_loss(Model& model, const std::vector<Image>& images, const RotationSet& rotations,
                             std::size_t batch_size = 64);

// Keeps large activation buffers in the heap instead of fresh mappings.
void tune_allocator();

}  // namespace ricc
