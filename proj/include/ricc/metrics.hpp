#pragma once

// Clustering agreement and similarity measures, and an exact t-SNE.
// Entropies use natural logarithms.

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "ricc/cluster.hpp"

namespace ricc {

double entropy(const Labels& u);
double mutual_information(const Labels& u, const Labels& v);

// Expected mutual information of two labelings with the given cluster sizes
// under random permutation (hypergeometric model).
double expected_mutual_information(const Labels& u, const Labels& v);

// (MI - E[MI]) / (mean(H(u), H(v)) - E[MI]); exactly 1 for labelings that
// induce the same partition. When the denominator vanishes
// the result is 1 if MI, E[MI] and the mean entropy coincide, otherwise 0.
double ami(const Labels& u, const Labels& v);

double cosine_similarity(std::span<const double> a, std::span<const double> b);
double cosine_similarity(std::span<const float> a, std::span<const float> b);

struct Histogram {
    std::vector<double> bin_edges;  // bins + 1, strictly increasing
    std::vector<std::size_t> counts;

    void validate() const;
    std::size_t total() const;
};

// Histograms of every group over `bins` equal-width bins spanning the pooled
// range of all groups.
std::vector<Histogram> shared_histograms(const std::vector<std::vector<double>>& groups, std::size_t bins = 50);

// Pearson correlation of the normalized bin frequencies of every unordered
// pair; pairs with a constant histogram are skipped. Median over the rest.
double median_intercluster_correlation(const std::vector<Histogram>& clusters);

using Embedding2D = std::vector<std::array<double, 2>>;

struct TsneOptions {
    double perplexity = 30.0;
    std::size_t iterations = 1000;
    double learning_rate = 200.0;
    std::uint64_t seed = 0;
};

struct TsneResult {
    Embedding2D embedding;
    std::vector<double> kl;  // KL(P||Q) after initialization and after each iteration
};

// Row-normalized conditional affinities p_{j|i} (n x n, row-major) with each
// row's bandwidth found by bisection to match the perplexity.
std::vector<double> tsne_conditional_affinities(const Points& points, double perplexity);

TsneResult tsne(const Points& points, const TsneOptions& options = {});

}  // namespace ricc
