// Command-line front end: train, encode, cluster, evaluate, gridsearch and
// report. Exit codes: 0 success, 1 a protocol failed its threshold, 2 usage,
// configuration or runtime error.

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <optional>

#include "ricc/checkpoint.hpp"
#include "ricc/pipeline.hpp"
#include "ricc/svg.hpp"

using namespace ricc;
namespace fs = std::filesystem;

namespace {

constexpr int kExitFail = 1;
constexpr int kExitError = 2;

struct Common {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out;
    std::string checkpoint;
};

void add_common(CLI::App* cmd, Common& c, bool with_checkpoint) {
    cmd->add_option("--config", c.config, "Experiment configuration file")->check(CLI::ExistingFile);
    cmd->add_option("--seed", c.seed, "Override the master seed");
    cmd->add_option("--out", c.out, "Override the output directory");
    if (with_checkpoint)
        cmd->add_option("--checkpoint", c.checkpoint, "Checkpoint file (default: <out>/model.ckpt)");
}

ExperimentConfig load_config(const Common& c) {
    ExperimentConfig config = c.config.empty() ? ExperimentConfig{} : ExperimentConfig::load(c.config);
    if (c.seed) config.seed = *c.seed;
    if (!c.out.empty()) config.out_dir = c.out;
    config.validate();
    return config;
}

fs::path checkpoint_path(const Common& c, const ExperimentConfig& config) {
    return c.checkpoint.empty() ? config.out_dir / "model.ckpt" : fs::path(c.checkpoint);
}

std::string number(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

int cmd_train(const Common& c) {
    const auto config = load_config(c);
    std::cerr << "training " << config.name << " (" << to_string(config.loss) << ") config " << config.hash() << "\n";
    std::string log = "epoch,steps,loss,part_a,part_b,seconds\n";
    auto trained = train_experiment(config, [&](const EpochStats& s) {
        std::fprintf(stderr, "epoch %zu loss %.6f a %.6f b %.6f %.1fs\n", s.epoch, s.loss, s.part_a, s.part_b,
                     s.seconds);
        log += std::to_string(s.epoch) + "," + std::to_string(s.steps) + "," + number(s.loss) + "," +
               number(s.part_a) + "," + number(s.part_b) + "," + number(s.seconds) + "\n";
    });
    const auto path = checkpoint_path(c, config);
    fs::create_directories(path.parent_path().empty() ? fs::path(".") : path.parent_path());
    save_checkpoint(trained.model, path);
    write_text(config.out_dir / "config.ini", config.to_ini());
    write_text(config.out_dir / "train_log.csv", log);
    std::cout << "checkpoint " << path.string() << " id " << file_digest(path) << "\n";
    return 0;
}

Points encode_evaluation_set(const Common& c, const ExperimentConfig& config, Labels& labels) {
    auto model = load_checkpoint(checkpoint_path(c, config), config.arch);
    auto set = evaluation_set(config);
    labels = set.labels;
    return encode_all(model, set.images);
}

int cmd_encode(const Common& c) {
    const auto config = load_config(c);
    Labels labels;
    const auto z = encode_evaluation_set(c, config, labels);
    std::string csv = "index,label";
    for (std::size_t j = 0; j < (z.empty() ? 0 : z[0].size()); ++j) csv += ",z" + std::to_string(j);
    csv += "\n";
    for (std::size_t i = 0; i < z.size(); ++i) {
        csv += std::to_string(i) + "," + std::to_string(labels[i]);
        for (double v : z[i]) csv += "," + number(v);
        csv += "\n";
    }
    const auto path = config.out_dir / "latents.csv";
    write_text(path, csv);
    std::cout << "wrote " << z.size() << " latents to " << path.string() << "\n";
    return 0;
}

int cmd_cluster(const Common& c, std::size_t k) {
    const auto config = load_config(c);
    Labels labels;
    const auto z = encode_evaluation_set(c, config, labels);
    if (k == 0 || k > z.size()) throw ConfigError("--k must be in [1, " + std::to_string(z.size()) + "]");
    const auto tree = ward_hac(z);
    const auto assignment = tree.cut(k);
    std::string csv = "index,cluster\n";
    for (std::size_t i = 0; i < assignment.size(); ++i)
        csv += std::to_string(i) + "," + std::to_string(assignment[i]) + "\n";
    write_text(config.out_dir / "assignment.csv", csv);
    write_text(config.out_dir / "linkage.json", tree.to_json());
    std::cout << "wrote " << assignment.size() << " assignments (k=" << k << ") to "
              << (config.out_dir / "assignment.csv").string() << "\n";
    return 0;
}

int cmd_evaluate(const Common& c, const std::string& protocol) {
    const auto config = load_config(c);
    const auto path = checkpoint_path(c, config);
    auto model = load_checkpoint(path, config.arch);
    const auto run = run_protocol(protocol, config, model, file_digest(path));
    const auto dir = config.out_dir / "reports";
    write_text(dir / (protocol + ".json"), run.report.to_json().dump(2) + "\n");
    for (const auto& [name, content] : run.artifacts) write_text(dir / name, content);
    std::cout << protocol << " (" << run.report.protocol << "): " << (run.report.pass ? "PASS" : "FAIL");
    for (const auto& [name, v] : run.report.summary) std::cout << " " << name << "=" << number(v);
    std::cout << "\n";
    return run.report.pass ? 0 : kExitFail;
}

int cmd_gridsearch(const Common& c, std::optional<double> lambda_res, std::optional<double> lr) {
    const auto config = load_config(c);
    const double lres = lambda_res.value_or(config.grid_lambda_res), rate = lr.value_or(config.grid_lr);
    try {
        const auto state = run_grid_search(config, lres, rate);
        write_text(config.out_dir / "gridsearch.json", state.to_json().dump(2) + "\n");
        for (const auto& t : state.history)
            std::cout << "lambda_inv " << number(t.lambda_inv) << " ratio " << number(t.ratio) << " std "
                      << number(t.invariance_std) << " -> " << t.action << "\n";
        std::cout << "lambda_inv " << number(state.lambda_inv) << " lambda_res " << number(state.lambda_res) << "\n";
        return 0;
    } catch (const GridSearchError& e) {
        GridSearchState partial;
        partial.lambda_res = lres;
        partial.lr = rate;
        partial.history = e.trace;
        write_text(config.out_dir / "gridsearch_error.json", partial.to_json().dump(2) + "\n");
        throw;
    }
}

std::string run_name(const fs::path& run) {
    const auto ini = run / "config.ini";
    return fs::exists(ini) ? ExperimentConfig::parse(read_text(ini)).name : run.filename().string();
}

int cmd_report(const std::vector<std::string>& runs, const std::string& out_dir) {
    if (runs.empty()) throw ConfigError("report needs at least one --run directory");
    const fs::path out = out_dir.empty() ? fs::path("report") : fs::path(out_dir);
    std::size_t written = 0;

    for (const std::string protocol : {"test2.2", "test2.3"}) {
        std::vector<std::pair<std::string, ProtocolReport>> rows;
        for (const auto& run : runs) {
            const auto path = fs::path(run) / "reports" / (protocol + ".json");
            if (fs::exists(path))
                rows.emplace_back(run_name(run), ProtocolReport::from_json(nlohmann::json::parse(read_text(path))));
        }
        if (rows.empty()) continue;
        write_text(out / (protocol + "_table.csv"), table_iv_csv(rows));
        std::vector<std::string> row_names, cols;
        std::vector<double> values;
        for (const auto& [name, value] : rows.front().second.results) cols.push_back(name);
        for (const auto& [model, report] : rows) {
            row_names.push_back(model);
            for (const auto& col : cols) {
                double v = std::numeric_limits<double>::quiet_NaN();
                for (const auto& [name, value] : report.results)
                    if (name == col) v = value;
                values.push_back(v);
            }
        }
        const std::string title = protocol == "test2.2" ? "Smoothing AMI by kernel size" : "Scrambling AMI by kernel size";
        write_text(out / (protocol + "_table.svg"), svg_heatmap(title, row_names, cols, values));
        written += 2;
    }

    std::vector<Series> curves;
    for (const auto& run : runs) {
        const auto path = fs::path(run) / "reports" / "test4.2.json";
        if (!fs::exists(path)) continue;
        const auto report = ProtocolReport::from_json(nlohmann::json::parse(read_text(path)));
        Series s{run_name(run), {}};
        for (const auto& [name, v] : report.results) s.points.emplace_back(std::stod(name.substr(2)), v);
        curves.push_back(std::move(s));
    }
    if (!curves.empty()) {
        write_text(out / "test4.2_ami.svg",
                   svg_line_plot("AMI of rotated copies against patch identity", "number of clusters", "AMI", curves, true));
        ++written;
    }
    if (written == 0) throw ConfigError("no test2.2, test2.3 or test4.2 reports found under the given runs");
    std::cout << "wrote " << written << " files to " << out.string() << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Rotation-invariant autoencoder clustering toolkit"};
    app.require_subcommand(1);

    Common common;
    std::size_t k = 0;
    std::string protocol;
    std::optional<double> lambda_res, lr;
    std::vector<std::string> runs;
    std::string report_out;

    auto* train_cmd = app.add_subcommand("train", "Train a model and write <out>/model.ckpt");
    add_common(train_cmd, common, true);
    auto* encode_cmd = app.add_subcommand("encode", "Write latents of the evaluation set");
    add_common(encode_cmd, common, true);
    auto* cluster_cmd = app.add_subcommand("cluster", "Ward clustering of the evaluation-set latents");
    add_common(cluster_cmd, common, true);
    cluster_cmd->add_option("--k", k, "Number of clusters")->required();
    auto* evaluate_cmd = app.add_subcommand("evaluate", "Run one evaluation protocol");
    add_common(evaluate_cmd, common, true);
    evaluate_cmd->add_option("protocol", protocol, "Protocol id")
        ->required()
        ->check(CLI::IsMember(std::vector<std::string>(kProtocolIds.begin(), kProtocolIds.end())));
    auto* grid_cmd = app.add_subcommand("gridsearch", "Search lambda_inv for a fixed lambda_res and lr");
    add_common(grid_cmd, common, false);
    grid_cmd->add_option("--lambda-res", lambda_res, "Restoration weight (default from config)");
    grid_cmd->add_option("--lr", lr, "Learning rate (default from config)");
    auto* report_cmd = app.add_subcommand("report", "Render SVG tables and curves from run directories");
    report_cmd->add_option("--run", runs, "Run directory holding reports/ (repeatable)")->required();
    report_cmd->add_option("--out", report_out, "Output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n\n" << app.help();
        return kExitError;
    }

    try {
        tune_allocator();
        if (*train_cmd) return cmd_train(common);
        if (*encode_cmd) return cmd_encode(common);
        if (*cluster_cmd) return cmd_cluster(common, k);
        if (*evaluate_cmd) return cmd_evaluate(common, protocol);
        if (*grid_cmd) return cmd_gridsearch(common, lambda_res, lr);
        if (*report_cmd) return cmd_report(runs, report_out);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitError;
    }
    return kExitError;
}
