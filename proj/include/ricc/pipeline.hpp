#pragma once

// Experiment plumbing shared by the command-line tool and the acceptance
// runner: datasets from a configuration, training, and protocol runs.

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "ricc/config.hpp"

namespace ricc {

// MNIST: the first `count` training digits, zero-padded to the model side.
// Synthetic: `count` generated patches after quality control.
std::vector<Image> training_images(const ExperimentConfig& config);

struct EvaluationSet {
    std::vector<Image> images;
    Labels labels;                   // digit class or regime
    std::vector<NamedField> fields;  // synthetic only
};

// MNIST: `probe_per_class` test digits per class. Synthetic: `holdout_count`
// patches drawn with `holdout_seed`, after quality control.
EvaluationSet evaluation_set(const ExperimentConfig& config);

// A planted scene: a rows x cols grid of synthetic patches whose regimes form
// contiguous rectangular blocks.
struct Scene {
    std::vector<Image> images;
    std::vector<GridCoord> coords;
    Points field_means;
    Labels regimes;
};
Scene planted_scene(const ExperimentConfig& config, std::size_t rows = 12, std::size_t cols = 12);

// FNV-1a of the file bytes, as 16 hex digits.
std::string file_digest(const std::filesystem::path& path);

struct TrainedModel {
    Model model;
    std::vector<EpochStats> history;
};

TrainedModel train_experiment(const ExperimentConfig& config,
                              const std::function<void(const EpochStats&)>& on_epoch = {});

// The protocols runnable from a configuration and a trained model.
inline constexpr std::array<const char*, 7> kProtocolIds{"test1",   "test2.1", "test2.2", "test2.3",
                                                          "test3",   "test4.1", "test4.2"};

struct ProtocolRun {
    ProtocolReport report;
    // Extra files (name, content) such as CSV tables and SVG plots.
    std::vector<std::pair<std::string, std::string>> artifacts;
};

// Throws ConfigError for an unknown protocol or one that needs the other
// dataset kind.
ProtocolRun run_protocol(const std::string& protocol, const ExperimentConfig& config, Model& model,
                         const std::string& checkpoint_id);

// Trains on the first grid_train_count training images and evaluates on the
// next grid_holdout_count.
GridSearchState run_grid_search(const ExperimentConfig& config, double lambda_res, double lr);

// Writes text to a file, creating parent directories.
void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

}  // namespace ricc
