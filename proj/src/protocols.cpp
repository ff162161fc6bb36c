#include "ricc/protocols.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>
#include <numeric>
#include <set>

#include "ricc/data.hpp"
#include "ricc/metrics.hpp"

namespace ricc {

namespace {

std::string k_label(std::size_t k) { return "k=" + std::to_string(k); }

std::string format_number(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

double median(std::vector<double> v) {
    if (v.empty()) throw std::invalid_argument("median of an empty sequence");
    std::sort(v.begin(), v.end());
    const std::size_t m = v.size() / 2;
    return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

double population_std(const std::vector<double>& v) {
    const double mean = std::accumulate(v.begin(), v.end(), 0.0) / double(v.size());
    double s = 0;
    for (double x : v) s += (x - mean) * (x - mean);
    return std::sqrt(s / double(v.size()));
}

const std::vector<float>& mask_for(std::size_t side) {
    static thread_local std::map<std::size_t, std::vector<float>> cache;
    auto it = cache.find(side);
    if (it == cache.end()) it = cache.emplace(side, circle_mask_weights(side)).first;
    return it->second;
}

void require_square(const Image& img, const char* who) {
    if (img.height != img.width || img.height == 0)
        throw std::invalid_argument(std::string(who) + ": images must be square and non-empty");
}

void require_patches(const std::vector<Image>& patches, std::size_t clusters, const char* who) {
    if (patches.size() < std::max<std::size_t>(clusters, 2))
        throw std::invalid_argument(std::string(who) + ": " + std::to_string(patches.size()) +
                                    " patches cannot form " + std::to_string(clusters) + " clusters");
    for (const auto& p : patches) require_square(p, who);
}

std::vector<std::pair<std::string, double>> to_pairs(const nlohmann::json& arr) {
    std::vector<std::pair<std::string, double>> out;
    for (const auto& e : arr) out.emplace_back(e.at("name").get<std::string>(), e.at("value").get<double>());
    return out;
}

nlohmann::json from_pairs(const std::vector<std::pair<std::string, double>>& v) {
    auto arr = nlohmann::json::array();
    for (const auto& [name, value] : v) arr.push_back({{"name", name}, {"value", value}});
    return arr;
}

double lookup(const std::vector<std::pair<std::string, double>>& v, const std::string& name, const char* what) {
    for (const auto& [n, x] : v)
        if (n == name) return x;
    throw std::out_of_range(std::string("report has no ") + what + " '" + name + "'");
}

std::string outcome_name(GridOutcome o) {
    switch (o) {
        case GridOutcome::invariant: return "invariant";
        case GridOutcome::move_limit: return "move_limit";
        case GridOutcome::oscillation: return "oscillation";
    }
    return "?";
}

nlohmann::json trial_json(const GridTrial& t) {
    return {{"lambda_inv", t.lambda_inv}, {"restoration_loss", t.restoration_loss}, {"ratio", t.ratio},
            {"invariance_std", t.invariance_std}, {"ratio_ok", t.ratio_ok}, {"invariant", t.invariant},
            {"action", t.action}};
}

// Clusters transformed copies of the patches and compares each against the
// reference clustering.
ProtocolReport spatial_test(const char* name, const Encoder& encoder, const std::vector<Image>& patches,
                            const SpatialTestOptions& options, double threshold, bool scrambled) {
    require_patches(patches, options.clusters, name);
    if (options.kernels.empty()) throw std::invalid_argument(std::string(name) + ": no kernel sizes");
    const auto reference = cluster_latents(encoder(patches), options.clusters);

    ProtocolReport report;
    report.protocol = name;
    report.provenance.seed = options.seed;
    double min_ami = 1.0;
    bool counted = false;
    for (std::size_t k : options.kernels) {
        std::vector<Image> transformed;
        transformed.reserve(patches.size());
        for (std::size_t i = 0; i < patches.size(); ++i) {
            auto img = smooth(patches[i], k);
            if (scrambled) img = scramble_in_circle(img, mix_seed(mix_seed(options.seed, k), i));
            transformed.push_back(std::move(img));
        }
        const double score = ami(reference, cluster_latents(encoder(transformed), options.clusters));
        report.results.emplace_back(k_label(k), score);
        if (scrambled || k > 1) {
            min_ami = counted ? std::min(min_ami, score) : score;
            counted = true;
        }
    }
    if (!counted) throw std::invalid_argument(std::string(name) + ": needs a kernel size above 1");
    report.summary = {{"min_ami", min_ami}, {"threshold", threshold}, {"clusters", double(options.clusters)}};
    report.pass = min_ami <= threshold;
    report.validate();
    return report;
}

}  // namespace

void Thresholds::validate() const {
    for (double v : {smoothing_max_ami, scrambling_max_ami, multicluster_min_ami, canonical_max_std,
                     physical_max_median, invariance_max_std})
        if (!std::isfinite(v)) throw std::invalid_argument("thresholds must be finite");
    if (!(restoration_ratio >= 1.0) || !std::isfinite(restoration_ratio))
        throw std::invalid_argument("restoration ratio limit must be at least 1");
    if (!(canonical_max_std > 0) || !(invariance_max_std > 0))
        throw std::invalid_argument("standard deviation thresholds must be positive");
}

void ProtocolReport::validate() const {
    for (const auto* list : {&results, &summary})
        for (const auto& [name, v] : *list)
            if (!std::isfinite(v))
                throw std::domain_error("report '" + protocol + "': non-finite value for '" + name + "'");
}

double ProtocolReport::result(const std::string& condition) const { return lookup(results, condition, "condition"); }

double ProtocolReport::summary_value(const std::string& name) const { return lookup(summary, name, "summary value"); }

nlohmann::json ProtocolReport::to_json() const {
    return {{"protocol", protocol},
            {"results", from_pairs(results)},
            {"summary", from_pairs(summary)},
            {"pass", pass},
            {"provenance",
             {{"config_hash", provenance.config_hash},
              {"seed", provenance.seed},
              {"checkpoint_id", provenance.checkpoint_id}}}};
}

ProtocolReport ProtocolReport::from_json(const nlohmann::json& j) {
    ProtocolReport r;
    r.protocol = j.at("protocol").get<std::string>();
    r.results = to_pairs(j.at("results"));
    r.summary = to_pairs(j.at("summary"));
    r.pass = j.at("pass").get<bool>();
    const auto& p = j.at("provenance");
    r.provenance.config_hash = p.at("config_hash").get<std::string>();
    r.provenance.seed = p.at("seed").get<std::uint64_t>();
    r.provenance.checkpoint_id = p.at("checkpoint_id").get<std::string>();
    r.validate();
    return r;
}

Encoder model_encoder(Model& model, std::size_t batch_size) {
    return [&model, batch_size](const std::vector<Image>& images) { return encode_all(model, images, batch_size); };
}

Reconstructor model_reconstructor(Model& model, std::size_t batch_size) {
    return [&model, batch_size](const std::vector<Image>& images) {
        return reconstruct_all(model, images, batch_size);
    };
}

Points patch_mean_encoder(const std::vector<Image>& images) {
    Points out;
    out.reserve(images.size());
    for (const auto& img : images) {
        std::vector<double> z(img.channels, 0.0);
        for (std::size_t c = 0; c < img.channels; ++c) {
            const float* plane = img.data.data() + c * img.plane();
            z[c] = std::accumulate(plane, plane + img.plane(), 0.0) / double(img.plane());
        }
        out.push_back(std::move(z));
    }
    return out;
}

Labels cluster_latents(const Points& latents, std::size_t k) {
    if (k == 0 || latents.size() < std::max<std::size_t>(k, 2))
        throw std::invalid_argument("cluster_latents: " + std::to_string(latents.size()) +
                                    " points cannot form " + std::to_string(k) + " clusters");
    if (std::all_of(latents.begin(), latents.end(), [&](const auto& p) { return p == latents[0]; }))
        throw DegenerateInput("cluster_latents: all latent vectors coincide");
    return ward_hac(latents).cut(k);
}

Image scramble_in_circle(const Image& img, std::uint64_t seed) {
    require_square(img, "scramble_in_circle");
    const auto& w = mask_for(img.height);
    std::vector<std::size_t> inside;
    for (std::size_t p = 0; p < w.size(); ++p)
        if (w[p] != 0.0f) inside.push_back(p);
    const auto perm = scramble_permutation(inside.size(), seed);
    Image out = img;
    for (std::size_t c = 0; c < img.channels; ++c) {
        const float* src = img.data.data() + c * img.plane();
        float* dst = out.data.data() + c * img.plane();
        for (std::size_t i = 0; i < inside.size(); ++i) dst[inside[i]] = src[inside[perm[i]]];
    }
    return out;
}

ProtocolReport smoothing_test(const Encoder& encoder, const std::vector<Image>& patches,
                              const SpatialTestOptions& options, const Thresholds& thresholds) {
    return spatial_test("smoothing", encoder, patches, options, thresholds.smoothing_max_ami, false);
}

ProtocolReport scrambling_test(const Encoder& encoder, const std::vector<Image>& patches,
                               const SpatialTestOptions& options, const Thresholds& thresholds) {
    return spatial_test("scrambling", encoder, patches, options, thresholds.scrambling_max_ami, true);
}

ProtocolReport multicluster_rotation_test(const Encoder& encoder, const std::vector<Image>& patches,
                                          const MulticlusterOptions& options, const Thresholds& thresholds) {
    options.rotations.validate();
    const std::size_t n = patches.size(), r = options.rotations.size();
    require_patches(patches, 2, "multicluster_rotation_test");
    auto counts = options.cluster_counts;
    if (std::find(counts.begin(), counts.end(), n) == counts.end()) counts.push_back(n);
    for (std::size_t k : counts)
        if (k == 0 || k > n)
            throw std::invalid_argument("multicluster_rotation_test: cluster count " + std::to_string(k) +
                                        " outside [1, " + std::to_string(n) + "]");

    std::vector<Image> copies;
    copies.reserve(n * r);
    Labels ideal;
    for (std::size_t i = 0; i < n; ++i)
        for (double a : options.rotations.angles) {
            copies.push_back(circular_mask(a == 0.0 ? patches[i] : rotate(patches[i], a)));
            ideal.push_back(int(i));
        }
    const auto latents = encoder(copies);
    if (latents.size() != copies.size()) throw std::runtime_error("multicluster_rotation_test: encoder size mismatch");
    if (std::all_of(latents.begin(), latents.end(), [&](const auto& p) { return p == latents[0]; }))
        throw DegenerateInput("multicluster_rotation_test: all latent vectors coincide");
    const auto tree = ward_hac(latents);

    ProtocolReport report;
    report.protocol = options.mode == MulticlusterMode::ideal ? "multicluster" : "multicluster_original_vs_rotated";
    for (std::size_t k : counts) {
        const auto labels = tree.cut(k);
        double score = 0;
        if (options.mode == MulticlusterMode::ideal) {
            score = ami(ideal, labels);
        } else {
            Labels original(n);
            for (std::size_t i = 0; i < n; ++i) original[i] = labels[i * r];
            for (std::size_t j = 1; j < r; ++j) {
                Labels rotated(n);
                for (std::size_t i = 0; i < n; ++i) rotated[i] = labels[i * r + j];
                score += ami(original, rotated);
            }
            score /= double(r - 1);
        }
        report.results.emplace_back(k_label(k), score);
    }
    const double at_n = report.result(k_label(n));
    report.summary = {{"ami_at_patch_count", at_n}, {"threshold", thresholds.multicluster_min_ami}};
    report.pass = at_n >= thresholds.multicluster_min_ami;
    report.validate();
    return report;
}

std::vector<double> rotation_consistency(const Reconstructor& reconstruct, const std::vector<Image>& images,
                                         const std::vector<std::vector<double>>& angles) {
    if (images.size() != angles.size())
        throw std::invalid_argument("rotation_consistency: one angle list per image required");
    std::vector<Image> batch;
    std::vector<std::size_t> first(images.size() + 1, 0);
    for (std::size_t i = 0; i < images.size(); ++i) {
        require_square(images[i], "rotation_consistency");
        first[i] = batch.size();
        batch.push_back(circular_mask(images[i]));
        for (double a : angles[i])
            if (a != 0.0) batch.push_back(circular_mask(rotate(images[i], a)));
        if (batch.size() - first[i] < 2)
            throw std::invalid_argument("rotation_consistency: each image needs a non-zero angle");
    }
    first[images.size()] = batch.size();
    auto recon = reconstruct(batch);
    if (recon.size() != batch.size()) throw std::runtime_error("rotation_consistency: reconstructor size mismatch");
    for (auto& img : recon) img = circular_mask(img);

    std::vector<double> out;
    out.reserve(images.size());
    for (std::size_t i = 0; i < images.size(); ++i) {
        std::vector<double> sims;
        for (std::size_t j = first[i] + 1; j < first[i + 1]; ++j)
            sims.push_back(cosine_similarity(std::span<const float>(recon[first[i]].data),
                                             std::span<const float>(recon[j].data)));
        out.push_back(population_std(sims));
    }
    return out;
}

ProtocolReport mnist_canonical_test(const Reconstructor& reconstruct, const std::vector<Image>& probe,
                                    const CanonicalOptions& options, const Thresholds& thresholds) {
    if (probe.empty()) throw std::invalid_argument("mnist_canonical_test: empty probe set");
    if (options.replicas < 2) throw std::invalid_argument("mnist_canonical_test: needs at least 2 replicas");
    std::vector<std::vector<double>> angles(probe.size());
    for (std::size_t i = 0; i < probe.size(); ++i) {
        std::uint64_t state = mix_seed(options.seed, i);
        for (std::size_t r = 0; r < options.replicas; ++r) {
            double a = 0;
            while (a == 0.0) a = 360.0 * unit_uniform(state);
            angles[i].push_back(a);
        }
    }
    const auto stds = rotation_consistency(reconstruct, probe, angles);

    std::vector<Image> masked;
    for (const auto& img : probe) masked.push_back(circular_mask(img));
    auto recon = reconstruct(masked);
    double se = 0, count = 0;
    for (std::size_t i = 0; i < masked.size(); ++i) {
        auto r = circular_mask(recon.at(i));
        for (std::size_t p = 0; p < r.data.size(); ++p) {
            const double d = double(r.data[p]) - double(masked[i].data[p]);
            se += d * d;
        }
        count += double(r.data.size());
    }

    ProtocolReport report;
    report.protocol = "canonical_orientation";
    report.provenance.seed = options.seed;
    for (std::size_t i = 0; i < stds.size(); ++i) report.results.emplace_back("image=" + std::to_string(i), stds[i]);
    const double med = median(stds);
    report.summary = {{"median_std", med},
                      {"threshold", thresholds.canonical_max_std},
                      {"reconstruction_mse", se / count},
                      {"replicas", double(options.replicas)}};
    report.pass = med < thresholds.canonical_max_std;
    report.validate();
    return report;
}

ProtocolReport physical_reasonableness_test(const Labels& assignment, const std::vector<NamedField>& fields,
                                            std::size_t bins, const Thresholds& thresholds) {
    if (fields.empty()) throw std::invalid_argument("physical_reasonableness_test: no fields");
    std::map<int, std::vector<std::size_t>> members;
    for (std::size_t i = 0; i < assignment.size(); ++i) members[assignment[i]].push_back(i);
    if (members.size() < 2) throw std::invalid_argument("physical_reasonableness_test: needs at least 2 clusters");

    ProtocolReport report;
    report.protocol = "physical_reasonableness";
    double best = 0;
    for (std::size_t f = 0; f < fields.size(); ++f) {
        const auto& field = fields[f];
        if (field.values.size() != assignment.size())
            throw std::invalid_argument("physical_reasonableness_test: field '" + field.name + "' has " +
                                        std::to_string(field.values.size()) + " values for " +
                                        std::to_string(assignment.size()) + " patches");
        std::vector<std::vector<double>> groups;
        for (const auto& [label, idx] : members) {
            std::vector<double> g;
            g.reserve(idx.size());
            for (auto i : idx) g.push_back(field.values[i]);
            groups.push_back(std::move(g));
        }
        const double m = median_intercluster_correlation(shared_histograms(groups, bins));
        report.results.emplace_back(field.name, m);
        best = f == 0 ? m : std::min(best, m);
    }
    report.summary = {{"min_median", best}, {"threshold", thresholds.physical_max_median},
                      {"clusters", double(members.size())}};
    report.pass = best < thresholds.physical_max_median;
    report.validate();
    return report;
}

nlohmann::json GridSearchState::to_json() const {
    auto hist = nlohmann::json::array();
    for (const auto& t : history) hist.push_back(trial_json(t));
    return {{"lambda_res", lambda_res},
            {"lambda_inv", lambda_inv},
            {"lr", lr},
            {"baseline_res_loss", baseline_res_loss},
            {"outcome", outcome_name(outcome)},
            {"history", hist}};
}

GridSearchState grid_search(const GridTrainFn& train_fn, double lambda_res, double lr,
                            const GridSearchOptions& options, const Thresholds& thresholds) {
    thresholds.validate();
    if (!(options.start > 0)) throw std::invalid_argument("grid_search: start value must be positive");
    GridSearchState st;
    st.lambda_res = lambda_res;
    st.lr = lr;

    auto evaluate = [&](double li) {
        GridEvaluation e;
        try {
            e = train_fn(li, lambda_res, lr);
        } catch (const TrainingDiverged& err) {
            throw GridSearchError("grid_search: training diverged at lambda_inv " + format_number(li) + ": " +
                                      err.what(),
                                  st.history);
        }
        if (!std::isfinite(e.restoration_loss) || !std::isfinite(e.invariance_std))
            throw GridSearchError("grid_search: non-finite evaluation at lambda_inv " + format_number(li),
                                  st.history);
        return e;
    };

    st.baseline_res_loss = evaluate(0.0).restoration_loss;
    if (!(st.baseline_res_loss > 0))
        throw GridSearchError("grid_search: baseline restoration loss must be positive", st.history);

    std::map<double, GridEvaluation> cache;
    std::map<double, int> visits;
    double li = options.start;
    std::size_t moves = 0;
    st.outcome = GridOutcome::move_limit;
    while (true) {
        if (++visits[li] > 2) {
            st.outcome = GridOutcome::oscillation;
            break;
        }
        auto it = cache.find(li);
        if (it == cache.end()) it = cache.emplace(li, evaluate(li)).first;
        GridTrial t;
        t.lambda_inv = li;
        t.restoration_loss = it->second.restoration_loss;
        t.invariance_std = it->second.invariance_std;
        t.ratio = t.restoration_loss / st.baseline_res_loss;
        t.ratio_ok = t.ratio <= thresholds.restoration_ratio;
        t.invariant = t.invariance_std < thresholds.invariance_max_std;
        if (t.ratio_ok) st.lambda_inv = li;
        if (!t.ratio_ok) t.action = "halve";
        else if (t.invariant) t.action = "terminate";
        else t.action = "double";
        st.history.push_back(t);
        if (t.action == "terminate") {
            st.outcome = GridOutcome::invariant;
            break;
        }
        li = t.action == "halve" ? li / 2 : li * 2;
        if (++moves >= options.max_moves) break;
    }
    return st;
}

GridTrainFn make_grid_train_fn(const ArchDescriptor& arch, const std::vector<Image>& train_set,
                               const std::vector<Image>& holdout, TrainConfig base, std::uint64_t init_seed) {
    return [arch, &train_set, &holdout, base, init_seed](double lambda_inv, double lambda_res, double lr) {
        auto cfg = base;
        cfg.loss = LossKind::ri;
        cfg.ri = {lambda_inv, lambda_res};
        cfg.lr = lr;
        auto model = init_model<float>(arch, init_seed);
        train(model, train_set, cfg);
        GridEvaluation e;
        e.restoration_loss = mean_restoration_loss(model, holdout, cfg.rotations);
        std::vector<std::vector<double>> angles(holdout.size(), cfg.rotations.angles);
        e.invariance_std = median(rotation_consistency(model_reconstructor(model), holdout, angles));
        return e;
    };
}

double spatial_coherence(const Labels& labels, const std::vector<GridCoord>& coords) {
    if (labels.size() != coords.size())
        throw std::invalid_argument("spatial_coherence: " + std::to_string(labels.size()) + " labels for " +
                                    std::to_string(coords.size()) + " cells");
    std::map<std::pair<int, int>, int> grid;
    for (std::size_t i = 0; i < labels.size(); ++i)
        if (!grid.emplace(std::pair{coords[i].row, coords[i].col}, labels[i]).second)
            throw std::invalid_argument("spatial_coherence: duplicate cell coordinates");
    double total = 0;
    std::size_t cells = 0;
    for (const auto& [rc, label] : grid) {
        int same = 0, seen = 0;
        for (auto [dr, dc] : {std::pair{-1, 0}, {1, 0}, {0, -1}, {0, 1}}) {
            auto it = grid.find({rc.first + dr, rc.second + dc});
            if (it == grid.end()) continue;
            ++seen;
            same += it->second == label;
        }
        if (seen == 0) continue;
        total += double(same) / double(seen);
        ++cells;
    }
    if (cells == 0) throw std::invalid_argument("spatial_coherence: no cell has a neighbour");
    return total / double(cells);
}

ProtocolReport spatial_coherence_report(const Labels& latent_assignment, const Points& field_means,
                                        const std::vector<GridCoord>& coords) {
    if (field_means.size() != latent_assignment.size())
        throw std::invalid_argument("spatial_coherence_report: field means and assignment sizes differ");
    const std::size_t k = std::set<int>(latent_assignment.begin(), latent_assignment.end()).size();
    Points z = field_means;
    const std::size_t d = z.empty() ? 0 : z[0].size();
    for (std::size_t j = 0; j < d; ++j) {
        double mean = 0, sq = 0;
        for (const auto& p : z) mean += p.at(j);
        mean /= double(z.size());
        for (const auto& p : z) sq += (p[j] - mean) * (p[j] - mean);
        const double sd = std::sqrt(sq / double(z.size()));
        for (auto& p : z) p[j] = sd > 0 ? (p[j] - mean) / sd : 0.0;
    }
    const auto field_labels = cluster_latents(z, k);

    ProtocolReport report;
    report.protocol = "spatial_coherence";
    const double latent = spatial_coherence(latent_assignment, coords);
    const double field = spatial_coherence(field_labels, coords);
    report.results = {{"latent", latent}, {"field_mean", field}};
    report.summary = {{"clusters", double(k)}};
    report.pass = latent >= field;
    report.validate();
    return report;
}

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

std::string table_iv_csv(const std::vector<std::pair<std::string, ProtocolReport>>& rows) {
    if (rows.empty()) throw std::invalid_argument("table_iv_csv: no rows");
    const auto& head = rows[0].second.results;
    std::string out = "model";
    for (const auto& [cond, v] : head) out += "," + csv_field(cond);
    out += "\n";
    for (const auto& [model, report] : rows) {
        if (report.results.size() != head.size())
            throw std::invalid_argument("table_iv_csv: row '" + model + "' has different conditions");
        out += csv_field(model);
        for (std::size_t i = 0; i < head.size(); ++i) {
            if (report.results[i].first != head[i].first)
                throw std::invalid_argument("table_iv_csv: row '" + model + "' has different conditions");
            out += "," + format_number(report.results[i].second);
        }
        out += "\n";
    }
    return out;
}

}  // namespace ricc
