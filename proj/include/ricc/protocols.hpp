#pragma once

// Evaluation protocols for trained encoders and autoencoders, the lambda
// grid search, and report serialization.

#include <cstdint>
#include <functional>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "ricc/cluster.hpp"
#include "ricc/models.hpp"
#include "ricc/train.hpp"
#include "ricc/transforms.hpp"

namespace ricc {

// Pass thresholds. Desk-scale defaults, overridable from configuration.
struct Thresholds {
    double smoothing_max_ami = 0.65;
    double scrambling_max_ami = 0.65;
    double multicluster_min_ami = 0.8;
    double canonical_max_std = 0.05;
    double physical_max_median = 0.6;
    double invariance_max_std = 0.05;
    double restoration_ratio = 1.2;

    void validate() const;
};

struct Provenance {
    std::string config_hash;
    std::uint64_t seed = 0;
    std::string checkpoint_id;
};

struct ProtocolReport {
    std::string protocol;
    // Ordered (condition, value) pairs, e.g. ("k=3", 0.71).
    std::vector<std::pair<std::string, double>> results;
    // Named scalars that are not per-condition (threshold, summary statistic).
    std::vector<std::pair<std::string, double>> summary;
    bool pass = false;
    Provenance provenance;

    // Throws std::domain_error if any scalar is non-finite.
    void validate() const;
    double result(const std::string& condition) const;
    double summary_value(const std::string& name) const;
    nlohmann::json to_json() const;
    static ProtocolReport from_json(const nlohmann::json& j);
};

// Raised when a protocol input cannot produce a meaningful score.
class DegenerateInput : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

using Encoder = std::function<Points(const std::vector<Image>&)>;
using Reconstructor = std::function<std::vector<Image>(const std::vector<Image>&)>;

// Eval-mode latents of `model`; the model must outlive the encoder.
Encoder model_encoder(Model& model, std::size_t batch_size = 64);
Reconstructor model_reconstructor(Model& model, std::size_t batch_size = 64);
// Per-channel mean over the whole patch.
Points patch_mean_encoder(const std::vector<Image>& images);

// Ward clustering of the latents cut at k clusters. Throws DegenerateInput
// when all latents coincide.
Labels cluster_latents(const Points& latents, std::size_t k);

// Shuffles the pixels inside the inscribed circle with one permutation for
// all channels; pixels outside the circle are unchanged.
Image scramble_in_circle(const Image& img, std::uint64_t seed);

struct SpatialTestOptions {
    std::vector<std::size_t> kernels{1, 2, 3, 4, 5, 6, 7, 8, 9};
    std::size_t clusters = 12;
    std::uint64_t seed = 0;
};

// AMI between the clustering of the original patches and of the patches
// smoothed by each kernel. Passes when the minimum over k > 1 is at most the
// threshold.
ProtocolReport smoothing_test(const Encoder& encoder, const std::vector<Image>& patches,
                              const SpatialTestOptions& options = {}, const Thresholds& thresholds = {});

// As smoothing_test, with every smoothed patch also scrambled (a fresh
// permutation per patch); the minimum is over all kernels.
ProtocolReport scrambling_test(const Encoder& encoder, const std::vector<Image>& patches,
                               const SpatialTestOptions& options = {}, const Thresholds& thresholds = {});

enum class MulticlusterMode : std::uint8_t {
    ideal,                // against the grouping of each patch with its rotations
    original_vs_rotated,  // originals against each rotated subset, averaged
};

struct MulticlusterOptions {
    RotationSet rotations = uniform_rotations();
    std::vector<std::size_t> cluster_counts;  // empty: the patch count only
    MulticlusterMode mode = MulticlusterMode::ideal;
};

// Encodes every patch at every rotation and clusters them together. Passes
// when the AMI at k = patch count reaches the threshold.
ProtocolReport multicluster_rotation_test(const Encoder& encoder, const std::vector<Image>& patches,
                                          const MulticlusterOptions& options = {},
                                          const Thresholds& thresholds = {});

// Per image: the population standard deviation over the rotated copies of
// the cosine similarity between each copy's reconstruction and the
// reconstruction of the unrotated image. Angle 0 is skipped if present.
std::vector<double> rotation_consistency(const Reconstructor& reconstruct, const std::vector<Image>& images,
                                         const std::vector<std::vector<double>>& angles);

struct CanonicalOptions {
    std::size_t replicas = 4;
    std::uint64_t seed = 0;
};

// Rotates `replicas` copies of each probe image by uniform random angles and
// passes when the median rotation_consistency is below the threshold. The
// summary also carries the mean squared reconstruction error of the
// unrotated probe as a fidelity check.
ProtocolReport mnist_canonical_test(const Reconstructor& reconstruct, const std::vector<Image>& probe,
                                    const CanonicalOptions& options = {}, const Thresholds& thresholds = {});

struct NamedField {
    std::string name;
    std::vector<double> values;  // one per patch
};

// Per field: histograms per cluster over the pooled range, then the median
// inter-cluster correlation. Passes when any field's median is below the
// threshold.
ProtocolReport physical_reasonableness_test(const Labels& assignment, const std::vector<NamedField>& fields,
                                            std::size_t bins = 50, const Thresholds& thresholds = {});

struct GridEvaluation {
    double restoration_loss = 0.0;  // on the holdout set
    double invariance_std = 0.0;    // median rotation_consistency on the holdout set
};

using GridTrainFn = std::function<GridEvaluation(double lambda_inv, double lambda_res, double lr)>;

struct GridTrial {
    double lambda_inv = 0.0;
    double restoration_loss = 0.0;
    double ratio = 0.0;
    double invariance_std = 0.0;
    bool ratio_ok = false;
    bool invariant = false;
    std::string action;  // "double", "halve" or "terminate"
};

enum class GridOutcome : std::uint8_t { invariant, move_limit, oscillation };

struct GridSearchOptions {
    double start = 0.1;
    std::size_t max_moves = 12;
};

struct GridSearchState {
    double lambda_res = 0.0;
    double lambda_inv = 0.0;  // the terminating value, else the last value with an acceptable ratio (0 if none)
    double lr = 0.0;
    double baseline_res_loss = 0.0;
    std::vector<GridTrial> history;
    GridOutcome outcome = GridOutcome::move_limit;

    nlohmann::json to_json() const;
};

class GridSearchError : public std::runtime_error {
public:
    GridSearchError(const std::string& what, std::vector<GridTrial> trace)
        : std::runtime_error(what), trace(std::move(trace)) {}
    std::vector<GridTrial> trace;
};

// Baseline at lambda_inv = 0, then from options.start: halve when the
// restoration ratio exceeds the limit, terminate when invariant, otherwise
// double. Stops after max_moves halvings or doublings, or before a value
// would be evaluated a third time. Each value is trained once and reused on
// revisits. Throws GridSearchError on a diverged or non-finite evaluation.
GridSearchState grid_search(const GridTrainFn& train_fn, double lambda_res, double lr,
                            const GridSearchOptions& options = {}, const Thresholds& thresholds = {});

// Trains an RI model per call on `train_set` and evaluates it on `holdout`.
GridTrainFn make_grid_train_fn(const ArchDescriptor& arch, const std::vector<Image>& train_set,
                               const std::vector<Image>& holdout, TrainConfig base, std::uint64_t init_seed);

struct GridCoord {
    int row = 0;
    int col = 0;
};

// Mean over labelled cells of the fraction of 4-neighbours with the same
// label; cells without neighbours are skipped. Throws if none has one.
double spatial_coherence(const Labels& labels, const std::vector<GridCoord>& coords);

// Coherence of the latent assignment against Ward clustering (same cluster
// count) of the standardized per-patch field means. Passes when the latent
// coherence is at least the field-mean coherence.
ProtocolReport spatial_coherence_report(const Labels& latent_assignment, const Points& field_means,
                                        const std::vector<GridCoord>& coords);

// Rows are models, columns the conditions of the first report, in order.
std::string table_iv_csv(const std::vector<std::pair<std::string, ProtocolReport>>& rows);

// RFC 4180 field quoting.
std::string csv_field(const std::string& s);

}  // namespace ricc
