#include "ricc/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

namespace ricc {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
    const std::string s = trim(text);
    T v{};
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size() || s.empty())
        throw ConfigError("config: '" + key + "' expects a number, got '" + text + "'");
    return v;
}

std::string number_text(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

std::vector<std::size_t> parse_list(const std::string& key, const std::string& text) {
    std::vector<std::size_t> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(parse_number<std::size_t>(key, item));
    return out;
}

std::string list_text(const std::vector<std::size_t>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
    return out;
}

bool parse_bool(const std::string& key, const std::string& text) {
    const std::string s = trim(text);
    if (s == "true" || s == "1" || s == "yes") return true;
    if (s == "false" || s == "0" || s == "no") return false;
    throw ConfigError("config: '" + key + "' expects true or false, got '" + text + "'");
}

struct Field {
    const char* section;
    const char* key;
    std::function<std::string()> get;
    std::function<void(const std::string& key, const std::string& value)> set;
};

template <typename T>
Field num(const char* section, const char* key, T& ref) {
    return {section, key,
            [&ref] {
                if constexpr (std::is_floating_point_v<T>) return number_text(ref);
                else return std::to_string(ref);
            },
            [&ref](const std::string& k, const std::string& v) { ref = parse_number<T>(k, v); }};
}

Field text(const char* section, const char* key, std::string& ref) {
    return {section, key, [&ref] { return ref; }, [&ref](const std::string&, const std::string& v) { ref = trim(v); }};
}

Field path(const char* section, const char* key, std::filesystem::path& ref) {
    return {section, key, [&ref] { return ref.generic_string(); },
            [&ref](const std::string&, const std::string& v) { ref = trim(v); }};
}

Field list(const char* section, const char* key, std::vector<std::size_t>& ref) {
    return {section, key, [&ref] { return list_text(ref); },
            [&ref](const std::string& k, const std::string& v) { ref = parse_list(k, v); }};
}

Field flag(const char* section, const char* key, bool& ref) {
    return {section, key, [&ref] { return std::string(ref ? "true" : "false"); },
            [&ref](const std::string& k, const std::string& v) { ref = parse_bool(k, v); }};
}

std::vector<Field> fields_of(ExperimentConfig& c) {
    auto& t = c.thresholds;
    return {
        text("experiment", "name", c.name),
        num("experiment", "seed", c.seed),
        path("experiment", "out", c.out_dir),

        {"data", "kind",
         [&c] { return std::string(c.data.kind == DatasetKind::mnist ? "mnist" : "synthetic"); },
         [&c](const std::string& k, const std::string& v) {
             const auto s = trim(v);
             if (s == "mnist") c.data.kind = DatasetKind::mnist;
             else if (s == "synthetic") c.data.kind = DatasetKind::synthetic;
             else throw ConfigError("config: '" + k + "' must be mnist or synthetic, got '" + v + "'");
         }},
        num("data", "count", c.data.count),
        num("data", "side", c.data.side),
        num("data", "channels", c.data.channels),
        num("data", "seed", c.data.seed),
        num("data", "qc_threshold", c.data.qc_threshold),
        path("data", "mnist_dir", c.mnist_dir),

        {"model", "arch", [&c] { return std::string(to_string(c.arch)); },
         [&c](const std::string& k, const std::string& v) {
             try {
                 c.arch = arch_id_from_string(trim(v));
             } catch (const std::exception& e) {
                 throw ConfigError("config: '" + k + "': " + e.what());
             }
         }},
        num("model", "width_divisor", c.width_divisor),

        {"train", "loss", [&c] { return std::string(to_string(c.loss)); },
         [&c](const std::string& k, const std::string& v) {
             try {
                 c.loss = loss_kind_from_string(trim(v));
             } catch (const std::exception& e) {
                 throw ConfigError("config: '" + k + "': " + e.what());
             }
         }},
        num("train", "lambda_inv", c.ri.lambda_inv),
        num("train", "lambda_res", c.ri.lambda_res),
        num("train", "lambda_ra", c.ra.lambda),
        num("train", "lr", c.lr),
        num("train", "batch_size", c.batch_size),
        num("train", "epochs", c.epochs),
        num("train", "rotation_step", c.rotation_step),
        num("train", "inv_subsample", c.inv_subsample),
        num("train", "ra_groups", c.ra_groups),
        num("train", "ra_replicas", c.ra_replicas),

        num("evaluate", "clusters", c.clusters),
        list("evaluate", "kernels", c.kernels),
        num("evaluate", "holdout_count", c.holdout_count),
        num("evaluate", "holdout_seed", c.holdout_seed),
        num("evaluate", "multicluster_patches", c.multicluster_patches),
        list("evaluate", "cluster_counts", c.cluster_counts),
        flag("evaluate", "multicluster_original_vs_rotated", c.multicluster_original_vs_rotated),
        num("evaluate", "probe_per_class", c.probe_per_class),
        num("evaluate", "replicas", c.replicas),
        num("evaluate", "histogram_bins", c.histogram_bins),
        num("evaluate", "tsne_perplexity", c.tsne_perplexity),
        num("evaluate", "tsne_iterations", c.tsne_iterations),
        num("evaluate", "smoothing_max_ami", t.smoothing_max_ami),
        num("evaluate", "scrambling_max_ami", t.scrambling_max_ami),
        num("evaluate", "multicluster_min_ami", t.multicluster_min_ami),
        num("evaluate", "canonical_max_std", t.canonical_max_std),
        num("evaluate", "physical_max_median", t.physical_max_median),
        num("evaluate", "invariance_max_std", t.invariance_max_std),
        num("evaluate", "restoration_ratio", t.restoration_ratio),

        num("gridsearch", "lambda_res", c.grid_lambda_res),
        num("gridsearch", "lr", c.grid_lr),
        num("gridsearch", "start", c.grid_start),
        num("gridsearch", "max_moves", c.grid_max_moves),
        num("gridsearch", "epochs", c.grid_epochs),
        num("gridsearch", "train_count", c.grid_train_count),
        num("gridsearch", "holdout_count", c.grid_holdout_count),
    };
}

std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

}  // namespace

void ExperimentConfig::validate() const {
    auto fail = [](const std::string& m) { throw ConfigError("config: " + m); };
    try {
        data.validate();
        thresholds.validate();
        train_config().validate();
        arch_descriptor();
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception& e) {
        fail(e.what());
    }
    for (double v : {thresholds.smoothing_max_ami, thresholds.scrambling_max_ami, thresholds.multicluster_min_ami})
        if (v < -1.0 || v > 1.0) fail("AMI thresholds must lie in [-1, 1]");
    if (name.empty()) fail("experiment name is empty");
    if (data.count < 2) fail("data count must be at least 2");
    if (epochs == 0) fail("epochs must be positive");
    if (width_divisor == 0) fail("width divisor must be positive");
    if (loss == LossKind::nri && arch != ArchId::nri) fail("the nri loss needs the NRI architecture");
    if (loss != LossKind::nri && arch != ArchId::ri_ra) fail("ri and ra losses need the RI_RA architecture");
    if (clusters < 2) fail("clusters must be at least 2");
    if (kernels.empty()) fail("kernels list is empty");
    for (auto k : kernels)
        if (k == 0 || k > data.side) fail("kernel sizes must be in [1, side]");
    if (multicluster_patches < 2) fail("multicluster_patches must be at least 2");
    for (auto k : cluster_counts)
        if (k == 0 || k > multicluster_patches) fail("cluster_counts must be in [1, multicluster_patches]");
    if (probe_per_class == 0) fail("probe_per_class must be positive");
    if (replicas < 2) fail("replicas must be at least 2");
    if (histogram_bins == 0) fail("histogram_bins must be positive");
    if (!(tsne_perplexity > 0)) fail("tsne_perplexity must be positive");
    if (!(grid_lambda_res > 0) || !(grid_lr > 0) || !(grid_start > 0)) fail("grid search values must be positive");
    if (grid_epochs == 0 || grid_train_count < 2 || grid_holdout_count == 0) fail("grid search budget is empty");
}

std::string ExperimentConfig::to_ini() const {
    auto& self = const_cast<ExperimentConfig&>(*this);
    std::string out, section;
    for (const auto& f : fields_of(self)) {
        if (section != f.section) {
            out += (section.empty() ? "[" : "\n[") + std::string(f.section) + "]\n";
            section = f.section;
        }
        out += std::string(f.key) + " = " + f.get() + "\n";
    }
    return out;
}

std::string ExperimentConfig::hash() const {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(to_ini())));
    return buf;
}

TrainConfig ExperimentConfig::train_config() const {
    TrainConfig t;
    t.loss = loss;
    t.ri = ri;
    t.ra = ra;
    t.lr = lr;
    t.batch_size = batch_size;
    t.epochs = epochs;
    t.rotations = uniform_rotations(rotation_step);
    t.inv_subsample = inv_subsample;
    t.ra_groups = ra_groups;
    t.ra_replicas = ra_replicas;
    t.seed = mix_seed(seed, 2);
    return t;
}

ArchDescriptor ExperimentConfig::arch_descriptor() const {
    const std::size_t side = data.side == 28 ? 32 : data.side;
    return arch == ArchId::nri ? ArchDescriptor::nri(data.channels, side, width_divisor)
                               : ArchDescriptor::ri_ra(data.channels, side, width_divisor);
}

std::uint64_t ExperimentConfig::init_seed() const { return mix_seed(seed, 1); }

std::uint64_t ExperimentConfig::protocol_seed() const { return mix_seed(seed, 3); }

ExperimentConfig ExperimentConfig::parse(const std::string& ini_text) {
    boost::property_tree::ptree tree;
    std::istringstream in(ini_text);
    try {
        boost::property_tree::ini_parser::read_ini(in, tree);
    } catch (const boost::property_tree::ini_parser_error& e) {
        throw ConfigError("config: " + std::string(e.what()));
    }
    ExperimentConfig c;
    auto fields = fields_of(c);
    for (const auto& [section, body] : tree) {
        if (body.empty() && !body.data().empty())
            throw ConfigError("config: key '" + section + "' outside any section");
        bool known_section = false;
        for (const auto& f : fields) known_section = known_section || section == f.section;
        if (!known_section) throw ConfigError("config: unknown section [" + section + "]");
        for (const auto& [key, value] : body) {
            const std::string full = section + "." + key;
            auto it = std::find_if(fields.begin(), fields.end(),
                                   [&](const Field& f) { return section == f.section && key == f.key; });
            if (it == fields.end()) throw ConfigError("config: unknown key '" + full + "'");
            it->set(full, value.data());
        }
    }
    c.validate();
    return c;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot open " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse(ss.str());
}

}  // namespace ricc
