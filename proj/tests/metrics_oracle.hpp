#pragma once

// Reference AMI: expected mutual information by enumerating every distinct
// arrangement of the second labeling's multiset, each equally likely under a
// uniform random permutation.

#include <algorithm>
#include <cmath>
#include <map>
#include <vector>

#include "ricc/metrics.hpp"

namespace ricc::testing {

inline double direct_mi(const Labels& u, const Labels& v) {
    const double n = double(u.size());
    std::map<int, double> pu, pv;
    std::map<std::pair<int, int>, double> puv;
    for (std::size_t i = 0; i < u.size(); ++i) {
        pu[u[i]] += 1 / n;
        pv[v[i]] += 1 / n;
        puv[{u[i], v[i]}] += 1 / n;
    }
    double mi = 0;
    for (const auto& [k, p] : puv) mi += p * std::log(p / (pu[k.first] * pv[k.second]));
    return mi;
}

inline double direct_entropy(const Labels& u) {
    std::map<int, double> c;
    for (int x : u) c[x] += 1;
    double h = 0;
    for (const auto& [k, m] : c) {
        double p = m / double(u.size());
        h -= p * std::log(p);
    }
    return h;
}

inline double enumerated_emi(const Labels& u, Labels v) {
    std::sort(v.begin(), v.end());
    double total = 0;
    std::size_t count = 0;
    do {
        total += direct_mi(u, v);
        ++count;
    } while (std::next_permutation(v.begin(), v.end()));
    return total / double(count);
}

inline double oracle_ami(const Labels& u, const Labels& v, double emi) {
    double mi = direct_mi(u, v);
    double avg = 0.5 * (direct_entropy(u) + direct_entropy(v));
    double denom = avg - emi;
    if (std::abs(denom) < 1e-12) return std::abs(mi - emi) < 1e-12 ? 1.0 : 0.0;
    return (mi - emi) / denom;
}

// Every labeling of n items up to renaming (restricted growth strings).
inline std::vector<Labels> all_partitions(std::size_t n) {
    std::vector<Labels> out;
    Labels cur(n, 0);
    auto rec = [&](auto&& self, std::size_t i, int mx) -> void {
        if (i == n) {
            out.push_back(cur);
            return;
        }
        for (int x = 0; x <= mx + 1; ++x) {
            cur[i] = x;
            self(self, i + 1, std::max(mx, x));
        }
    };
    if (n == 0) return out;
    cur[0] = 0;
    rec(rec, 1, 0);
    return out;
}

// Sorted cluster sizes, the only thing E[MI] depends on.
inline std::vector<std::size_t> size_profile(const Labels& u) {
    std::map<int, std::size_t> c;
    for (int x : u) ++c[x];
    std::vector<std::size_t> s;
    for (const auto& [k, m] : c) s.push_back(m);
    std::sort(s.begin(), s.end());
    return s;
}

}  // namespace ricc::testing
