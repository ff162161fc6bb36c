#include "ricc/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>

namespace ricc {

namespace {

// Dense relabeling 0..k-1 in order of first appearance.
std::vector<std::size_t> dense(const Labels& u, std::size_t& k) {
    std::map<int, std::size_t> ids;
    std::vector<std::size_t> out(u.size());
    for (std::size_t i = 0; i < u.size(); ++i) out[i] = ids.try_emplace(u[i], ids.size()).first->second;
    k = ids.size();
    return out;
}

std::vector<double> counts_of(const Labels& u) {
    std::size_t k = 0;
    auto d = dense(u, k);
    std::vector<double> c(k, 0.0);
    for (auto x : d) c[x] += 1;
    return c;
}

void check_lengths(const Labels& u, const Labels& v) {
    if (u.size() != v.size())
        throw std::invalid_argument("labelings have different lengths: " + std::to_string(u.size()) + " vs " +
                                    std::to_string(v.size()));
}

double entropy_of_counts(const std::vector<double>& c, double n) {
    double h = 0;
    for (double m : c)
        if (m > 0) h -= (m / n) * std::log(m / n);
    return h;
}

template <typename T>
double cosine_impl(std::span<const T> a, std::span<const T> b) {
    if (a.size() != b.size())
        throw std::invalid_argument("cosine_similarity: lengths " + std::to_string(a.size()) + " and " +
                                    std::to_string(b.size()) + " differ");
    double ab = 0, aa = 0, bb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ab += double(a[i]) * double(b[i]);
        aa += double(a[i]) * double(a[i]);
        bb += double(b[i]) * double(b[i]);
    }
    if (aa == 0 || bb == 0) throw std::domain_error("cosine_similarity: zero vector");
    return ab / (std::sqrt(aa) * std::sqrt(bb));
}

double pearson(const std::vector<double>& x, const std::vector<double>& y, bool& constant) {
    const double n = double(x.size());
    double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
    double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
    double sxy = 0, sxx = 0, syy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    constant = sxx == 0 || syy == 0;
    return constant ? 0.0 : sxy / std::sqrt(sxx * syy);
}

double portable_uniform(std::mt19937_64& rng) { return (double(rng() >> 11) + 0.5) * 0x1.0p-53; }

double portable_normal(std::mt19937_64& rng) {
    double u1 = portable_uniform(rng), u2 = portable_uniform(rng);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::acos(-1.0) * u2);
}

std::vector<double> squared_distances(const Points& pts) {
    const std::size_t n = pts.size();
    std::vector<double> d(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            double s = 0;
            for (std::size_t k = 0; k < pts[i].size(); ++k) {
                double diff = pts[i][k] - pts[j][k];
                s += diff * diff;
            }
            d[i * n + j] = d[j * n + i] = s;
        }
    return d;
}

void check_points(const Points& pts, std::size_t min_n, const char* who) {
    if (pts.size() < min_n)
        throw std::invalid_argument(std::string(who) + ": need at least " + std::to_string(min_n) + " points");
    for (const auto& p : pts) {
        if (p.size() != pts[0].size() || p.empty())
            throw std::invalid_argument(std::string(who) + ": inconsistent dimensionality");
        for (double v : p)
            if (!std::isfinite(v)) throw std::invalid_argument(std::string(who) + ": non-finite coordinate");
    }
}

std::vector<double> conditional_affinities(const std::vector<double>& d2, std::size_t n, double perplexity) {
    if (!(perplexity > 0) || perplexity >= double(n))
        throw std::invalid_argument("t-SNE: perplexity must be in (0, n)");
    const double target = std::log(perplexity);
    constexpr int kMaxSteps = 64;
    constexpr double kTolerance = 1e-5;
    std::vector<double> p(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const double* row = &d2[i * n];
        double dmin = std::numeric_limits<double>::infinity(), dsum = 0;
        for (std::size_t j = 0; j < n; ++j)
            if (j != i) {
                dmin = std::min(dmin, row[j]);
                dsum += row[j];
            }
        double mean = dsum / double(n - 1) - dmin;
        double beta = mean > 0 ? 1.0 / mean : 1.0;
        double lo = 0, hi = std::numeric_limits<double>::infinity();
        bool converged = false;
        for (int step = 0; step < kMaxSteps; ++step) {
            double z = 0, dz = 0;
            for (std::size_t j = 0; j < n; ++j) {
                if (j == i) continue;
                double e = std::exp(-beta * (row[j] - dmin));
                p[i * n + j] = e;
                z += e;
                dz += e * (row[j] - dmin);
            }
            double h = std::log(z) + beta * dz / z;
            for (std::size_t j = 0; j < n; ++j) p[i * n + j] /= z;
            if (std::abs(h - target) < kTolerance) {
                converged = true;
                break;
            }
            if (h > target) {
                lo = beta;
                beta = std::isinf(hi) ? beta * 2 : 0.5 * (beta + hi);
            } else {
                hi = beta;
                beta = 0.5 * (beta + lo);
            }
        }
        if (!converged)
            throw std::runtime_error("t-SNE: bandwidth search for point " + std::to_string(i) + " did not converge in " +
                                     std::to_string(kMaxSteps) + " steps (duplicate points?)");
    }
    return p;
}

// -alpha * sum p log w + log Z over ordered pairs; equals KL(P||Q) minus the
// entropy of P when alpha = 1.
double objective(const std::vector<double>& p, const std::vector<std::array<double, 2>>& y, double alpha) {
    const std::size_t n = y.size();
    double z = 0, cross = 0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            double dx = y[i][0] - y[j][0], dy = y[i][1] - y[j][1];
            double w = 1.0 / (1.0 + dx * dx + dy * dy);
            z += 2 * w;
            cross += 2 * p[i * n + j] * std::log(w);
        }
    return -alpha * cross + std::log(z);
}

void gradient(const std::vector<double>& p, const std::vector<std::array<double, 2>>& y, double alpha,
              std::vector<std::array<double, 2>>& g) {
    const std::size_t n = y.size();
    std::vector<double> w(n * n, 0.0);
    double z = 0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            double dx = y[i][0] - y[j][0], dy = y[i][1] - y[j][1];
            double v = 1.0 / (1.0 + dx * dx + dy * dy);
            w[i * n + j] = w[j * n + i] = v;
            z += 2 * v;
        }
    for (std::size_t i = 0; i < n; ++i) {
        double gx = 0, gy = 0;
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            double wij = w[i * n + j];
            double f = (alpha * p[i * n + j] - wij / z) * wij;
            gx += f * (y[i][0] - y[j][0]);
            gy += f * (y[i][1] - y[j][1]);
        }
        g[i] = {4 * gx, 4 * gy};
    }
}

// Joint counts of two labelings, with dense label ids in first-seen order.
struct Contingency {
    std::size_t ku = 0, kv = 0;
    std::vector<double> table, ca, cb;

    bool same_partition() const {
        if (ku != kv) return false;
        std::size_t nonzero = 0;
        for (double x : table) nonzero += x > 0 ? 1 : 0;
        return nonzero == ku;
    }
};

Contingency contingency(const Labels& u, const Labels& v) {
    Contingency t;
    const auto a = dense(u, t.ku);
    const auto b = dense(v, t.kv);
    t.table.assign(t.ku * t.kv, 0.0);
    t.ca.assign(t.ku, 0.0);
    t.cb.assign(t.kv, 0.0);
    for (std::size_t i = 0; i < a.size(); ++i) {
        t.table[a[i] * t.kv + b[i]] += 1;
        t.ca[a[i]] += 1;
        t.cb[b[i]] += 1;
    }
    return t;
}

double mi_of(const Contingency& t) {
    double n = 0;
    for (double c : t.ca) n += c;
    double mi = 0;
    for (std::size_t i = 0; i < t.ku; ++i)
        for (std::size_t j = 0; j < t.kv; ++j) {
            double nij = t.table[i * t.kv + j];
            if (nij > 0) mi += (nij / n) * std::log(n * nij / (t.ca[i] * t.cb[j]));
        }
    return std::max(0.0, mi);
}

// Expected MI under the permutation model with fixed marginals.
double emi_of(const std::vector<double>& a, const std::vector<double>& b, std::size_t n) {
    std::vector<double> lf(n + 1, 0.0);  // log factorials
    for (std::size_t k = 2; k <= n; ++k) lf[k] = lf[k - 1] + std::log(double(k));
    const double N = double(n);
    double emi = 0;
    for (double ai : a)
        for (double bj : b) {
            const auto ia = std::size_t(ai), ib = std::size_t(bj);
            const std::size_t lo = std::max<std::ptrdiff_t>(1, std::ptrdiff_t(ia + ib) - std::ptrdiff_t(n));
            const std::size_t hi = std::min(ia, ib);
            const double base = lf[ia] + lf[ib] + lf[n - ia] + lf[n - ib] - lf[n];
            for (std::size_t nij = lo; nij <= hi; ++nij) {
                double logp = base - lf[nij] - lf[ia - nij] - lf[ib - nij] - lf[n - ia - ib + nij];
                double x = double(nij);
                emi += (x / N) * std::log(N * x / (ai * bj)) * std::exp(logp);
            }
        }
    return emi;
}

}  // namespace

double entropy(const Labels& u) {
    if (u.empty()) return 0.0;
    return entropy_of_counts(counts_of(u), double(u.size()));
}

double mutual_information(const Labels& u, const Labels& v) {
    check_lengths(u, v);
    if (u.empty()) return 0.0;
    return mi_of(contingency(u, v));
}

double expected_mutual_information(const Labels& u, const Labels& v) {
    check_lengths(u, v);
    if (u.empty()) return 0.0;
    return emi_of(counts_of(u), counts_of(v), u.size());
}

double ami(const Labels& u, const Labels& v) {
    check_lengths(u, v);
    if (u.empty()) return 1.0;
    const auto t = contingency(u, v);
    if (t.same_partition()) return 1.0;
    const double n = double(u.size());
    const double mi = mi_of(t);
    const double emi = emi_of(t.ca, t.cb, u.size());
    const double avg = 0.5 * (entropy_of_counts(t.ca, n) + entropy_of_counts(t.cb, n));
    const double denom = avg - emi;
    constexpr double kTiny = 1e-12;
    if (std::abs(denom) < kTiny) return std::abs(mi - emi) < kTiny ? 1.0 : 0.0;
    return (mi - emi) / denom;
}

double cosine_similarity(std::span<const double> a, std::span<const double> b) { return cosine_impl(a, b); }
double cosine_similarity(std::span<const float> a, std::span<const float> b) { return cosine_impl(a, b); }

void Histogram::validate() const {
    if (bin_edges.size() < 2) throw std::invalid_argument("histogram: need at least one bin");
    if (counts.size() + 1 != bin_edges.size())
        throw std::invalid_argument("histogram: " + std::to_string(counts.size()) + " counts for " +
                                    std::to_string(bin_edges.size()) + " edges");
    for (std::size_t i = 1; i < bin_edges.size(); ++i)
        if (!(bin_edges[i] > bin_edges[i - 1])) throw std::invalid_argument("histogram: edges not strictly increasing");
}

std::size_t Histogram::total() const { return std::accumulate(counts.begin(), counts.end(), std::size_t{0}); }

std::vector<Histogram> shared_histograms(const std::vector<std::vector<double>>& groups, std::size_t bins) {
    if (bins == 0) throw std::invalid_argument("shared_histograms: zero bins");
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (const auto& g : groups)
        for (double v : g) {
            if (!std::isfinite(v)) throw std::invalid_argument("shared_histograms: non-finite value");
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
    if (!std::isfinite(lo)) throw std::invalid_argument("shared_histograms: no values");
    if (hi == lo) hi = lo + 1.0;
    std::vector<double> edges(bins + 1);
    for (std::size_t b = 0; b <= bins; ++b) edges[b] = lo + (hi - lo) * double(b) / double(bins);
    edges.back() = hi;
    std::vector<Histogram> out;
    for (const auto& g : groups) {
        Histogram h{edges, std::vector<std::size_t>(bins, 0)};
        for (double v : g) {
            auto b = std::size_t((v - lo) / (hi - lo) * double(bins));
            ++h.counts[std::min(b, bins - 1)];
        }
        out.push_back(std::move(h));
    }
    return out;
}

double median_intercluster_correlation(const std::vector<Histogram>& clusters) {
    if (clusters.size() < 2) throw std::invalid_argument("median_intercluster_correlation: need at least 2 clusters");
    std::vector<std::vector<double>> freq;
    for (const auto& h : clusters) {
        h.validate();
        if (h.bin_edges != clusters[0].bin_edges)
            throw std::invalid_argument("median_intercluster_correlation: histograms do not share bin edges");
        double t = double(h.total());
        std::vector<double> f(h.counts.size(), 0.0);
        if (t > 0)
            for (std::size_t b = 0; b < f.size(); ++b) f[b] = double(h.counts[b]) / t;
        freq.push_back(std::move(f));
    }
    std::vector<double> r;
    for (std::size_t i = 0; i < freq.size(); ++i)
        for (std::size_t j = i + 1; j < freq.size(); ++j) {
            bool constant = false;
            double c = pearson(freq[i], freq[j], constant);
            if (!constant) r.push_back(c);
        }
    if (r.empty()) throw std::domain_error("median_intercluster_correlation: every pair involves a constant histogram");
    std::sort(r.begin(), r.end());
    const std::size_t m = r.size();
    return m % 2 == 1 ? r[m / 2] : 0.5 * (r[m / 2 - 1] + r[m / 2]);
}

std::vector<double> tsne_conditional_affinities(const Points& points, double perplexity) {
    check_points(points, 2, "t-SNE");
    return conditional_affinities(squared_distances(points), points.size(), perplexity);
}

TsneResult tsne(const Points& points, const TsneOptions& options) {
    check_points(points, 4, "t-SNE");
    const std::size_t n = points.size();
    if (options.iterations == 0 || !(options.learning_rate > 0))
        throw std::invalid_argument("t-SNE: iterations and learning rate must be positive");

    // Work in a canonical (lexicographic) order so the result does not depend
    // on the input order.
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return points[a] < points[b]; });
    Points sorted;
    sorted.reserve(n);
    for (auto i : order) sorted.push_back(points[i]);

    auto cond = conditional_affinities(squared_distances(sorted), n, options.perplexity);
    std::vector<double> p(n * n, 0.0);
    double p_entropy = 0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            if (i == j) continue;
            double v = (cond[i * n + j] + cond[j * n + i]) / (2.0 * double(n));
            p[i * n + j] = std::max(v, 1e-300);
            p_entropy += p[i * n + j] * std::log(p[i * n + j]);
        }

    std::mt19937_64 rng(options.seed);
    std::vector<std::array<double, 2>> y(n), v(n, {0.0, 0.0}), g(n), cand(n);
    for (auto& yi : y) yi = {1e-4 * portable_normal(rng), 1e-4 * portable_normal(rng)};

    constexpr std::size_t kExaggerationIters = 100;
    constexpr std::size_t kMomentumSwitch = 250;
    constexpr double kExaggeration = 4.0;
    constexpr int kMaxHalvings = 40;

    TsneResult result;
    result.kl.push_back(p_entropy + objective(p, y, 1.0));
    double lr = options.learning_rate;
    for (std::size_t it = 0; it < options.iterations; ++it) {
        const double alpha = it < kExaggerationIters ? kExaggeration : 1.0;
        const double momentum = it < kMomentumSwitch ? 0.5 : 0.8;
        gradient(p, y, alpha, g);
        const double current = objective(p, y, alpha);
        bool accepted = false;
        for (int h = 0; h <= kMaxHalvings && !accepted; ++h) {
            for (std::size_t i = 0; i < n; ++i)
                for (int k = 0; k < 2; ++k) cand[i][k] = y[i][k] + momentum * v[i][k] - lr * g[i][k];
            if (objective(p, cand, alpha) <= current) {
                accepted = true;
                for (std::size_t i = 0; i < n; ++i)
                    for (int k = 0; k < 2; ++k) v[i][k] = cand[i][k] - y[i][k];
                y.swap(cand);
            } else {
                lr *= 0.5;
                v.assign(n, {0.0, 0.0});
            }
        }
        if (accepted) lr = std::min(options.learning_rate, lr * 1.2);
        result.kl.push_back(std::max(0.0, p_entropy + objective(p, y, 1.0)));
    }

    result.embedding.resize(n);
    for (std::size_t r = 0; r < n; ++r) result.embedding[order[r]] = y[r];
    return result;
}

}  // namespace ricc
