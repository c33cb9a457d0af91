#pragma once

#include <map>
#include <string>
#include <vector>

namespace qbv {

/// Mid-ranks (average ranks for ties), 1-based.
std::vector<double> midranks(const std::vector<double>& x);

/// Spearman rank correlation: Pearson correlation of mid-ranks.
/// Throws when either sequence has zero rank variance.
double spearman_rho(const std::vector<double>& x, const std::vector<double>& y);

/// Kendall's coefficient of concordance with the per-rater tie
/// correction; ratings[r] holds rater r's scores for the n items.
double kendalls_w(const std::vector<std::vector<double>>& ratings);

struct ListenerScreen {
    std::string listener_id;
    std::vector<double> rho;  // one per duplicate page pair
    bool reliable = false;
};

/// A listener is retained when at least one duplicate-page pair has
/// spearman rho >= 0.5. Pairs are (ratings on a page, ratings on its
/// duplicate), one vector pair per duplicate.
std::vector<ListenerScreen> screen_listeners(
    const std::map<std::string, std::vector<std::pair<std::vector<double>,
                                                      std::vector<double>>>>&
        duplicate_pairs);

}  // namespace qbv
