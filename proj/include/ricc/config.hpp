#pragma once

// Experiment configuration: an INI file with typed sections. Every key has a
// default; unknown sections or keys are rejected.

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "ricc/data.hpp"
#include "ricc/models.hpp"
#include "ricc/protocols.hpp"
#include "ricc/train.hpp"

namespace ricc {

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct ExperimentConfig {
    // [experiment]
    std::string name = "experiment";
    std::uint64_t seed = 0;
    std::filesystem::path out_dir = "runs/experiment";

    // [data]
    DatasetSpec data;
    std::filesystem::path mnist_dir = "data/mnist";

    // [model]
    ArchId arch = ArchId::ri_ra;
    std::size_t width_divisor = 8;

    // [train]
    LossKind loss = LossKind::ri;
    RiWeights ri;
    RaWeight ra;
    double lr = 0.03;
    std::size_t batch_size = 16;
    std::size_t epochs = 20;
    double rotation_step = 30.0;
    std::size_t inv_subsample = 3;
    std::size_t ra_groups = 8;
    std::size_t ra_replicas = 4;

    // [evaluate]
    std::size_t clusters = 12;
    std::vector<std::size_t> kernels{1, 2, 3, 4, 5, 6, 7, 8, 9};
    std::size_t holdout_count = 500;  // synthetic holdout patches, before QC
    std::uint64_t holdout_seed = 1000;
    std::size_t multicluster_patches = 200;
    std::vector<std::size_t> cluster_counts{6, 12, 25, 50, 100, 200};
    bool multicluster_original_vs_rotated = false;
    std::size_t probe_per_class = 40;
    std::size_t replicas = 4;
    std::size_t histogram_bins = 50;
    double tsne_perplexity = 30.0;
    std::size_t tsne_iterations = 1000;
    Thresholds thresholds;

    // [gridsearch]
    double grid_lambda_res = 10.0;
    double grid_lr = 0.01;
    double grid_start = 0.1;
    std::size_t grid_max_moves = 12;
    std::size_t grid_epochs = 2;
    std::size_t grid_train_count = 1000;
    std::size_t grid_holdout_count = 100;

    void validate() const;

    // Canonical INI text with every key, in a fixed order.
    std::string to_ini() const;
    // FNV-1a of to_ini(), as 16 hex digits.
    std::string hash() const;

    TrainConfig train_config() const;
    ArchDescriptor arch_descriptor() const;
    std::uint64_t init_seed() const;
    std::uint64_t protocol_seed() const;

    static ExperimentConfig parse(const std::string& ini_text);
    static ExperimentConfig load(const std::filesystem::path& path);
};

}  // namespace ricc
