#include "qbv/stats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace qbv {

std::vector<double> midranks(const std::vector<double>& x) {
    const size_t n = x.size();
    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](size_t a, size_t b) { return x[a] < x[b]; });
    std::vector<double> ranks(n);
    size_t i = 0;
    while (i < n) {
        size_t j = i;
        while (j + 1 < n && x[order[j + 1]] == x[order[i]]) ++j;
        const double r = (double(i + 1) + double(j + 1)) / 2.0;
        for (size_t k = i; k <= j; ++k) ranks[order[k]] = r;
        i = j + 1;
    }
    return ranks;
}

double spearman_rho(const std::vector<double>& x,
                    const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 2)
        throw std::invalid_argument("spearman_rho: need equal lengths >= 2");
    const auto rx = midranks(x);
    const auto ry = midranks(y);
    const size_t n = x.size();
    double mx = 0, my = 0;
    for (size_t i = 0; i < n; ++i) {
        mx += rx[i];
        my += ry[i];
    }
    mx /= n;
    my /= n;
    double sxy = 0, sxx = 0, syy = 0;
    for (size_t i = 0; i < n; ++i) {
        sxy += (rx[i] - mx) * (ry[i] - my);
        sxx += (rx[i] - mx) * (rx[i] - mx);
        syy += (ry[i] - my) * (ry[i] - my);
    }
    if (sxx == 0 || syy == 0)
        throw std::runtime_error("spearman_rho: zero rank variance");
    return sxy / std::sqrt(sxx * syy);
}

double kendalls_w(const std::vector<std::vector<double>>& ratings) {
    const size_t m = ratings.size();
    if (m < 2) throw std::invalid_argument("kendalls_w: need >= 2 raters");
    const size_t n = ratings[0].size();
    if (n < 2) throw std::invalid_argument("kendalls_w: need >= 2 items");

    std::vector<double> rank_sum(n, 0.0);
    double tie_correction = 0;  // sum over raters of sum(t^3 - t)
    for (const auto& rater : ratings) {
        if (rater.size() != n)
            throw std::invalid_argument("kendalls_w: ragged ratings");
        const auto ranks = midranks(rater);
        for (size_t i = 0; i < n; ++i) rank_sum[i] += ranks[i];
        // per-rater tie groups
        std::vector<double> sorted = rater;
        std::sort(sorted.begin(), sorted.end());
        size_t i = 0;
        while (i < n) {
            size_t j = i;
            while (j + 1 < n && sorted[j + 1] == sorted[i]) ++j;
            const double t = double(j - i + 1);
            tie_correction += t * t * t - t;
            i = j + 1;
        }
    }
    const double mean = double(m) * (n + 1) / 2.0;
    double s = 0;
    for (double r : rank_sum) s += (r - mean) * (r - mean);
    const double denom =
        double(m) * m * (double(n) * n * n - n) - double(m) * tie_correction;
    if (denom <= 0)
        throw std::runtime_error("kendalls_w: degenerate all-tied input");
    return 12.0 * s / denom;
}

std::vector<ListenerScreen> screen_listeners(
    const std::map<std::string, std::vector<std::pair<std::vector<double>,
                                                      std::vector<double>>>>&
        duplicate_pairs) {
    std::vector<ListenerScreen> out;
    for (const auto& [listener, pairs] : duplicate_pairs) {
        ListenerScreen s;
        s.listener_id = listener;
        for (const auto& [a, b] : pairs) {
            double rho;
            try {
                rho = spearman_rho(a, b);
            } catch (const std::exception&) {
                rho = 0.0;  // degenerate page: counts as non-replicating
            }
            s.rho.push_back(rho);
            if (rho >= 0.5) s.reliable = true;
        }
        if (pairs.empty()) s.reliable = false;
        out.push_back(std::move(s));
    }
    return out;
}

}  // namespace qbv
