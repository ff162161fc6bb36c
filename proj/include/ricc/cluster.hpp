#pragma once

// Agglomerative clustering with Ward linkage.
//
// Leaves are numbered 0..n-1; merge t creates cluster n+t. The height of a
// merge is the Ward increase |A||B|/(|A|+|B|) * ||c_A - c_B||^2, i.e. the
// growth of the within-cluster sum of squares.

#include <cstddef>
#include <string>
#include <vector>

namespace ricc {

using Points = std::vector<std::vector<double>>;
using Labels = std::vector<int>;

struct Merge {
    std::size_t a = 0;  // a < b
    std::size_t b = 0;
    double height = 0.0;
    std::size_t size = 0;

    bool operator==(const Merge&) const = default;
};

struct LinkageTree {
    std::size_t n = 0;
    std::vector<Merge> merges;

    void validate() const;

    // Undoes the last k-1 merges; labels follow the order in which clusters
    // first appear when scanning leaves 0..n-1.
    Labels cut(std::size_t k) const;

    // Leaves in dendrogram drawing order.
    std::vector<std::size_t> leaf_order() const;

    std::string to_json() const;
    static LinkageTree from_json(const std::string& text);

    bool operator==(const LinkageTree&) const = default;
};

// Greedy merging by smallest Ward increase; ties go to the smallest (a, b)
// pair of cluster ids.
LinkageTree ward_hac(const Points& points);

}  // namespace ricc
