#include "ricc/cluster.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include <json.hpp>

namespace ricc {

namespace {

// Condensed upper-triangle storage for slot pairs i < j.
class PairMatrix {
public:
    explicit PairMatrix(std::size_t n) : n_(n), v_(n * (n - 1) / 2) {}
    double& at(std::size_t i, std::size_t j) {
        if (i > j) std::swap(i, j);
        return v_[i * n_ - i * (i + 1) / 2 + (j - i - 1)];
    }

private:
    std::size_t n_;
    std::vector<double> v_;
};

struct Candidate {
    double cost = std::numeric_limits<double>::infinity();
    std::size_t lo = 0;  // cluster ids, lo < hi
    std::size_t hi = 0;

    bool better_than(const Candidate& o) const {
        if (cost != o.cost) return cost < o.cost;
        if (lo != o.lo) return lo < o.lo;
        return hi < o.hi;
    }
};

}  // namespace

void LinkageTree::validate() const {
    if (n < 1) throw std::invalid_argument("linkage tree: no leaves");
    if (merges.size() != n - 1)
        throw std::invalid_argument("linkage tree: expected " + std::to_string(n - 1) + " merges, got " +
                                    std::to_string(merges.size()));
    std::vector<std::size_t> size(2 * n - 1, 1);
    std::vector<bool> used(2 * n - 1, false);
    for (std::size_t t = 0; t < merges.size(); ++t) {
        const auto& m = merges[t];
        if (m.a >= m.b || m.b >= n + t)
            throw std::invalid_argument("linkage tree: merge " + std::to_string(t) + " has invalid children");
        if (used[m.a] || used[m.b])
            throw std::invalid_argument("linkage tree: merge " + std::to_string(t) + " reuses a child");
        if (!std::isfinite(m.height) || m.height < 0)
            throw std::invalid_argument("linkage tree: merge " + std::to_string(t) + " has invalid height");
        used[m.a] = used[m.b] = true;
        size[n + t] = size[m.a] + size[m.b];
        if (m.size != size[n + t])
            throw std::invalid_argument("linkage tree: merge " + std::to_string(t) + " has wrong size");
    }
}

Labels LinkageTree::cut(std::size_t k) const {
    if (k < 1 || k > n) throw std::out_of_range("cut: k must be in [1, " + std::to_string(n) + "]");
    std::vector<std::size_t> parent(2 * n - 1);
    for (std::size_t i = 0; i < parent.size(); ++i) parent[i] = i;
    for (std::size_t t = 0; t + k < n; ++t) parent[merges[t].a] = parent[merges[t].b] = n + t;
    auto root = [&](std::size_t i) {
        while (parent[i] != i) i = parent[i];
        return i;
    };
    std::vector<int> label_of(2 * n - 1, -1);
    Labels labels(n);
    int next = 0;
    for (std::size_t i = 0; i < n; ++i) {
        auto r = root(i);
        if (label_of[r] < 0) label_of[r] = next++;
        labels[i] = label_of[r];
    }
    return labels;
}

std::vector<std::size_t> LinkageTree::leaf_order() const {
    std::vector<std::size_t> order;
    if (n == 0) return order;
    std::vector<std::size_t> stack{2 * n - 2};
    while (!stack.empty()) {
        auto id = stack.back();
        stack.pop_back();
        if (id < n) {
            order.push_back(id);
            continue;
        }
        const auto& m = merges[id - n];
        stack.push_back(m.b);
        stack.push_back(m.a);
    }
    return order;
}

std::string LinkageTree::to_json() const {
    nlohmann::json j;
    j["n"] = n;
    j["merges"] = nlohmann::json::array();
    for (const auto& m : merges)
        j["merges"].push_back({{"a", m.a}, {"b", m.b}, {"height", m.height}, {"size", m.size}});
    return j.dump();
}

LinkageTree LinkageTree::from_json(const std::string& text) {
    LinkageTree t;
    try {
        auto j = nlohmann::json::parse(text);
        t.n = j.at("n").get<std::size_t>();
        for (const auto& m : j.at("merges"))
            t.merges.push_back({m.at("a").get<std::size_t>(), m.at("b").get<std::size_t>(),
                                m.at("height").get<double>(), m.at("size").get<std::size_t>()});
    } catch (const nlohmann::json::exception& e) {
        throw std::invalid_argument(std::string("dendrogram: ") + e.what());
    }
    t.validate();
    return t;
}

LinkageTree ward_hac(const Points& points) {
    const std::size_t n = points.size();
    if (n < 2) throw std::invalid_argument("ward_hac: need at least 2 points");
    const std::size_t d = points[0].size();
    if (d == 0) throw std::invalid_argument("ward_hac: points have no coordinates");
    for (std::size_t i = 0; i < n; ++i) {
        if (points[i].size() != d)
            throw std::invalid_argument("ward_hac: point " + std::to_string(i) + " has dimension " +
                                        std::to_string(points[i].size()) + ", expected " + std::to_string(d));
        for (double v : points[i])
            if (!std::isfinite(v)) throw std::invalid_argument("ward_hac: point " + std::to_string(i) + " is not finite");
    }

    // Slot i holds cluster id[i]; the merged cluster reuses the lower slot.
    PairMatrix cost(n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            double s = 0;
            for (std::size_t k = 0; k < d; ++k) {
                double diff = points[i][k] - points[j][k];
                s += diff * diff;
            }
            cost.at(i, j) = 0.5 * s;
        }
    std::vector<std::size_t> id(n), size(n, 1);
    std::vector<bool> active(n, true);
    for (std::size_t i = 0; i < n; ++i) id[i] = i;

    // Best partner of every active slot.
    std::vector<Candidate> best(n);
    std::vector<std::size_t> partner(n, 0);
    auto refresh = [&](std::size_t i) {
        Candidate c;
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i || !active[j]) continue;
            Candidate o{cost.at(i, j), std::min(id[i], id[j]), std::max(id[i], id[j])};
            if (o.better_than(c)) {
                c = o;
                partner[i] = j;
            }
        }
        best[i] = c;
    };
    for (std::size_t i = 0; i < n; ++i) refresh(i);

    LinkageTree tree{n, {}};
    tree.merges.reserve(n - 1);
    for (std::size_t t = 0; t + 1 < n; ++t) {
        std::size_t si = n;
        for (std::size_t i = 0; i < n; ++i)
            if (active[i] && (si == n || best[i].better_than(best[si]))) si = i;
        std::size_t sj = partner[si];
        const double h = best[si].cost;
        if (sj < si) std::swap(si, sj);
        tree.merges.push_back({std::min(id[si], id[sj]), std::max(id[si], id[sj]), h, size[si] + size[sj]});

        // Lance-Williams update for Ward merge costs.
        const double ni = double(size[si]), nj = double(size[sj]);
        for (std::size_t k = 0; k < n; ++k) {
            if (!active[k] || k == si || k == sj) continue;
            const double nk = double(size[k]);
            cost.at(si, k) = std::max(
                0.0, ((ni + nk) * cost.at(si, k) + (nj + nk) * cost.at(sj, k) - nk * h) / (ni + nj + nk));
        }
        active[sj] = false;
        id[si] = n + t;
        size[si] += size[sj];

        for (std::size_t k = 0; k < n; ++k) {
            if (!active[k]) continue;
            if (k == si || partner[k] == si || partner[k] == sj) {
                refresh(k);
                continue;
            }
            Candidate o{cost.at(si, k), std::min(id[si], id[k]), std::max(id[si], id[k])};
            if (o.better_than(best[k])) {
                best[k] = o;
                partner[k] = si;
            }
        }
    }
    return tree;
}

}  // namespace ricc
