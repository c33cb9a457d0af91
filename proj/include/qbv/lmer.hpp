#pragma once

#include <Eigen/Dense>
#include <map>
#include <string>
#include <vector>

#include "qbv/query.hpp"

namespace qbv {

/// One listener response.
struct RatingRecord {
    std::string listener_id;
    std::string test_page;
    std::string imitation_id;
    std::string candidate_id;
    double rating = 0;  // in [0, 1]
    bool is_duplicate_page = false;
};

// Ratings CSV: listener_id,test_page,imitation_id,candidate_id,rating,
// is_duplicate (0/1).
std::vector<RatingRecord> load_ratings_csv(const std::string& path);
void save_ratings_csv(const std::string& path,
                      const std::vector<RatingRecord>& records);

/// Fitted rating ~ distance mixed model: per-sound intercepts and
/// slopes, a per-listener random intercept and a residual term.
struct LmerFit {
    std::vector<std::string> sound_ids;            // fixed-effect order
    std::map<std::string, std::string> sound_class;
    Eigen::VectorXd intercepts;                    // nu_j
    Eigen::VectorXd slopes;                        // beta_1j
    Eigen::MatrixXd cov;  // fixed-effect covariance, [nu..., beta...] order
    double sigma_gamma2 = 0;  // random-intercept variance
    double sigma_eps2 = 0;    // residual variance
    double theta = 0;         // sigma_gamma / sigma_eps at the optimum
    double loglik = 0;
    double aic = 0;
    int n_params = 0;  // 2 * n_sounds + 2
    int n_records = 0;
    // (theta, profiled deviance) at every point the optimizer visited
    std::vector<std::pair<double, double>> deviance_trace;

    int n_sounds() const { return int(sound_ids.size()); }
    double slope_se(int j) const {
        return std::sqrt(cov(n_sounds() + j, n_sounds() + j));
    }
};

/// Maximum-likelihood fit of the per-sound cell-means model with a
/// random listener intercept, by 1-D profiled deviance over
/// log(sigma_gamma/sigma_eps) in [-14, 7] (plus the theta = 0 boundary).
LmerFit fit_lmer(const std::vector<RatingRecord>& records,
                 const DistanceTable& distances);

struct SlopeCi {
    std::string sound_id;
    double slope, lower, upper;
    bool significant() const { return upper < 0; }
};

/// beta +- 1.959964 * se per sound (95% normal quantile).
std::vector<SlopeCi> wald_ci(const LmerFit& fit, double level = 0.95);

/// Percentage of sounds whose upper CI lies below 0.
double accuracy(const std::vector<SlopeCi>& cis);

/// AIC = -2 loglik + 2 p.
double aic(const LmerFit& fit);

/// CSV rows sound_id,class,slope,lower,upper,significant; sorted by
/// class then slope.
void slope_report(const std::string& path, const LmerFit& fit,
                  const std::vector<SlopeCi>& cis);

}  // namespace qbv
