#include "ricc/pipeline.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "ricc/svg.hpp"

namespace ricc {

namespace {

void require_kind(const ExperimentConfig& config, DatasetKind kind, const std::string& protocol) {
    if (config.data.kind != kind)
        throw ConfigError(protocol + " needs " + (kind == DatasetKind::mnist ? "mnist" : "synthetic") + " data");
}

std::vector<Image> padded(const std::vector<Image>& images, std::size_t side) {
    std::vector<Image> out;
    out.reserve(images.size());
    for (const auto& img : images) out.push_back(img.height == side ? img : pad_to(img, side));
    return out;
}

std::size_t model_side(const ExperimentConfig& config) { return config.arch_descriptor().input_side; }

std::string fixed(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

// Fraction of each point's nearest neighbours in the embedding that share its label.
double neighbour_agreement(const Embedding2D& y, const Labels& labels, std::size_t k) {
    const std::size_t n = y.size();
    k = std::min(k, n - 1);
    double agree = 0.0;
    std::vector<std::pair<double, std::size_t>> d(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            const double dx = y[i][0] - y[j][0], dy = y[i][1] - y[j][1];
            d[j] = {j == i ? std::numeric_limits<double>::infinity() : dx * dx + dy * dy, j};
        }
        std::partial_sort(d.begin(), d.begin() + std::ptrdiff_t(k), d.end());
        for (std::size_t m = 0; m < k; ++m) agree += labels[d[m].second] == labels[i] ? 1.0 : 0.0;
    }
    return agree / double(n * k);
}

ProtocolRun spatial_run(const std::string& protocol, const ExperimentConfig& config, const Encoder& encoder) {
    require_kind(config, DatasetKind::synthetic, protocol);
    const auto set = evaluation_set(config);
    SpatialTestOptions options;
    options.kernels = config.kernels;
    options.clusters = config.clusters;
    options.seed = config.protocol_seed();
    const bool smoothing = protocol == "test2.2";
    auto run = [&](const Encoder& e) {
        return smoothing ? smoothing_test(e, set.images, options, config.thresholds)
                         : scrambling_test(e, set.images, options, config.thresholds);
    };
    ProtocolRun out{run(encoder), {}};
    const auto control = run(patch_mean_encoder);
    out.report.summary.emplace_back("control_min_ami", control.summary_value("min_ami"));
    out.report.summary.emplace_back("control_margin",
                                    control.summary_value("min_ami") - out.report.summary_value("min_ami"));
    out.artifacts.emplace_back(protocol + ".csv", table_iv_csv({{config.name, out.report}, {"patch_mean", control}}));
    return out;
}

}  // namespace

std::vector<Image> training_images(const ExperimentConfig& config) {
    config.validate();
    if (config.data.kind == DatasetKind::mnist) {
        auto mnist = load_mnist(config.mnist_dir);
        if (config.data.count > mnist.train.images.size())
            throw ConfigError("data count " + std::to_string(config.data.count) + " exceeds the " +
                              std::to_string(mnist.train.images.size()) + " MNIST training images");
        mnist.train.images.resize(config.data.count);
        return padded(mnist.train.images, model_side(config));
    }
    return images_of(qc_filter(gen_synthetic(config.data), config.data.qc_threshold));
}

EvaluationSet evaluation_set(const ExperimentConfig& config) {
    config.validate();
    EvaluationSet out;
    if (config.data.kind == DatasetKind::mnist) {
        auto probe = take_per_class(load_mnist(config.mnist_dir).test, config.probe_per_class);
        if (probe.images.size() != 10 * config.probe_per_class)
            throw ConfigError("MNIST test set has fewer than probe_per_class digits of some class");
        out.images = padded(probe.images, model_side(config));
        out.labels = probe.labels;
        return out;
    }
    DatasetSpec spec = config.data;
    spec.count = config.holdout_count;
    spec.seed = config.holdout_seed;
    const auto patches = qc_filter(gen_synthetic(spec), spec.qc_threshold);
    out.images = images_of(patches);
    out.labels = regimes_of(patches);
    for (std::size_t j = 0; j < kFieldCount; ++j) {
        NamedField f{kFieldNames[j], {}};
        for (const auto& p : patches) f.values.push_back(p.fields[j]);
        out.fields.push_back(std::move(f));
    }
    return out;
}

Scene planted_scene(const ExperimentConfig& config, std::size_t rows, std::size_t cols) {
    if (rows < 2 || cols < 3) throw std::invalid_argument("planted_scene: grid must be at least 2 x 3");
    DatasetSpec spec = config.data;
    spec.count = rows * cols;
    spec.seed = mix_seed(config.holdout_seed, 21);
    Scene scene;
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c) {
            scene.regimes.push_back(int((r * 2 / rows) * 3 + c * 3 / cols));
            scene.coords.push_back({int(r), int(c)});
        }
    const auto patches = gen_synthetic_regimes(spec, scene.regimes);
    scene.images = images_of(patches);
    for (const auto& p : patches) scene.field_means.emplace_back(p.fields.begin(), p.fields.end());
    return scene;
}

std::string file_digest(const std::filesystem::path& path) {
    const std::string bytes = read_text(path);
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

TrainedModel train_experiment(const ExperimentConfig& config, const std::function<void(const EpochStats&)>& on_epoch) {
    const auto images = training_images(config);
    TrainedModel out{init_model<float>(config.arch_descriptor(), config.init_seed()), {}};
    auto tc = config.train_config();
    tc.on_epoch = on_epoch;
    out.history = train(out.model, images, tc);
    return out;
}

ProtocolRun run_protocol(const std::string& protocol, const ExperimentConfig& config, Model& model,
                         const std::string& checkpoint_id) {
    config.validate();
    const Encoder encoder = model_encoder(model);
    const Reconstructor reconstruct = model_reconstructor(model);
    ProtocolRun out;

    if (protocol == "test1") {
        require_kind(config, DatasetKind::synthetic, protocol);
        const auto set = evaluation_set(config);
        const auto assignment = cluster_latents(encoder(set.images), config.clusters);
        out.report = physical_reasonableness_test(assignment, set.fields, config.histogram_bins, config.thresholds);
        out.report.summary.emplace_back("regime_ami", ami(set.labels, assignment));
        std::string csv = "index,regime,cluster\n";
        for (std::size_t i = 0; i < assignment.size(); ++i)
            csv += std::to_string(i) + "," + std::to_string(set.labels[i]) + "," + std::to_string(assignment[i]) + "\n";
        out.artifacts.emplace_back("test1_assignment.csv", csv);
    } else if (protocol == "test2.1") {
        require_kind(config, DatasetKind::synthetic, protocol);
        const auto scene = planted_scene(config);
        const auto labels = cluster_latents(encoder(scene.images), kDefaultRegimes);
        out.report = spatial_coherence_report(labels, scene.field_means, scene.coords);
        out.report.summary.emplace_back("regime_ami", ami(scene.regimes, labels));
        std::string csv = "row,col,regime,cluster\n";
        for (std::size_t i = 0; i < labels.size(); ++i)
            csv += std::to_string(scene.coords[i].row) + "," + std::to_string(scene.coords[i].col) + "," +
                   std::to_string(scene.regimes[i]) + "," + std::to_string(labels[i]) + "\n";
        out.artifacts.emplace_back("test2.1_scene.csv", csv);
    } else if (protocol == "test2.2" || protocol == "test2.3") {
        out = spatial_run(protocol, config, encoder);
    } else if (protocol == "test3") {
        const auto set = evaluation_set(config);
        TsneOptions options;
        options.perplexity = config.tsne_perplexity;
        options.iterations = config.tsne_iterations;
        options.seed = config.protocol_seed();
        const auto result = tsne(encoder(set.images), options);
        out.report.protocol = "tsne";
        out.report.results = {{"kl_final", result.kl.back()},
                              {"neighbour_label_agreement", neighbour_agreement(result.embedding, set.labels, 10)}};
        out.report.summary = {{"points", double(set.images.size())},
                              {"perplexity", config.tsne_perplexity},
                              {"iterations", double(config.tsne_iterations)}};
        // Descriptive only: there is no pass threshold for the embedding.
        out.report.pass = true;
        std::string csv = "index,label,x,y\n";
        for (std::size_t i = 0; i < set.labels.size(); ++i)
            csv += std::to_string(i) + "," + std::to_string(set.labels[i]) + "," + fixed(result.embedding[i][0]) +
                   "," + fixed(result.embedding[i][1]) + "\n";
        out.artifacts.emplace_back("test3_tsne.csv", csv);
        out.artifacts.emplace_back("test3_tsne.svg", svg_scatter(config.name + " latent t-SNE", result.embedding, set.labels));
    } else if (protocol == "test4.1") {
        require_kind(config, DatasetKind::mnist, protocol);
        CanonicalOptions options;
        options.replicas = config.replicas;
        options.seed = config.protocol_seed();
        out.report = mnist_canonical_test(reconstruct, evaluation_set(config).images, options, config.thresholds);
    } else if (protocol == "test4.2") {
        require_kind(config, DatasetKind::synthetic, protocol);
        auto images = evaluation_set(config).images;
        if (images.size() < config.multicluster_patches)
            throw ConfigError("only " + std::to_string(images.size()) + " holdout patches pass quality control, " +
                              std::to_string(config.multicluster_patches) + " needed");
        images.resize(config.multicluster_patches);
        MulticlusterOptions options;
        options.rotations = uniform_rotations(config.rotation_step);
        options.cluster_counts = config.cluster_counts;
        options.mode = config.multicluster_original_vs_rotated ? MulticlusterMode::original_vs_rotated
                                                               : MulticlusterMode::ideal;
        out.report = multicluster_rotation_test(encoder, images, options, config.thresholds);
        std::string csv = "k,ami\n";
        for (const auto& [name, v] : out.report.results) csv += name.substr(2) + "," + fixed(v) + "\n";
        out.artifacts.emplace_back("test4.2_ami.csv", csv);
    } else {
        throw ConfigError("unknown protocol '" + protocol + "'");
    }
    out.report.provenance = {config.hash(), config.seed, checkpoint_id};
    out.report.validate();
    return out;
}

GridSearchState run_grid_search(const ExperimentConfig& config, double lambda_res, double lr) {
    auto images = training_images(config);
    const std::size_t need = config.grid_train_count + config.grid_holdout_count;
    if (images.size() < need)
        throw ConfigError("grid search needs " + std::to_string(need) + " training images, only " +
                          std::to_string(images.size()) + " available");
    const std::vector<Image> train_set(images.begin(), images.begin() + std::ptrdiff_t(config.grid_train_count));
    const std::vector<Image> holdout(images.begin() + std::ptrdiff_t(config.grid_train_count),
                                     images.begin() + std::ptrdiff_t(need));
    auto base = config.train_config();
    base.loss = LossKind::ri;
    base.epochs = config.grid_epochs;
    const auto arch = ArchDescriptor::ri_ra(config.data.channels, model_side(config), config.width_divisor);
    const auto fn = make_grid_train_fn(arch, train_set, holdout, base, config.init_seed());
    GridSearchOptions options;
    options.start = config.grid_start;
    options.max_moves = config.grid_max_moves;
    return grid_search(fn, lambda_res, lr, options, config.thresholds);
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    out << text;
    if (!out) throw std::runtime_error("cannot write " + path.string());
}

std::string read_text(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace ricc
