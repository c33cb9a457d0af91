#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <fstream>
#include <numbers>
#include <random>

#include "qbv/csv.hpp"
#include "qbv/lmer.hpp"
#include "qbv/rng.hpp"
#include "test_util.hpp"

using namespace qbv;

namespace {

struct Sim {
    std::vector<RatingRecord> records;
    DistanceTable distances;
    Eigen::VectorXd true_intercepts, true_slopes;
    double true_sigma_gamma = 0, true_sigma_eps = 0;
};

/// Balanced design: every listener rates every (imitation, sound) pair.
/// When `center_noise` is set, the listener effect is dropped and the
/// residuals are centered within each listener.
Sim simulate(int n_sounds, int n_listeners, int n_imitations, double sg,
             double se, uint64_t seed, bool center_noise = false) {
    Sim sim;
    auto eng = make_engine(seed, 0);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::normal_distribution<double> gauss(0.0, 1.0);

    sim.true_intercepts.resize(n_sounds);
    sim.true_slopes.resize(n_sounds);
    std::vector<std::vector<double>> x(n_sounds,
                                       std::vector<double>(n_imitations));
    for (int j = 0; j < n_sounds; ++j) {
        sim.true_intercepts(j) = 0.5 + 0.3 * unif(eng);
        sim.true_slopes(j) = -0.6 + 0.2 * unif(eng);
        for (int i = 0; i < n_imitations; ++i) {
            x[j][i] = unif(eng);
            DistanceRow row;
            row.imitation_id = "im" + std::to_string(i);
            row.candidate_id = "snd" + std::to_string(j);
            row.class_label = j % 2 ? "kick" : "snare";
            row.extractor_id = "mfcc";
            row.distance = x[j][i];
            row.normalized = x[j][i];
            sim.distances.push_back(row);
        }
    }
    sim.true_sigma_gamma = center_noise ? 0.0 : sg;
    sim.true_sigma_eps = se;

    for (int k = 0; k < n_listeners; ++k) {
        const double gamma = center_noise ? 0.0 : sg * gauss(eng);
        std::vector<double> eps;
        for (int j = 0; j < n_sounds; ++j)
            for (int i = 0; i < n_imitations; ++i) eps.push_back(se * gauss(eng));
        if (center_noise) {
            double mean = 0;
            for (double e : eps) mean += e;
            mean /= double(eps.size());
            for (double& e : eps) e -= mean;
        }
        size_t r = 0;
        for (int j = 0; j < n_sounds; ++j)
            for (int i = 0; i < n_imitations; ++i) {
                RatingRecord rec;
                rec.listener_id = "L" + std::to_string(k);
                rec.test_page = "p" + std::to_string(i);
                rec.imitation_id = "im" + std::to_string(i);
                rec.candidate_id = "snd" + std::to_string(j);
                rec.rating = sim.true_intercepts(j) +
                             sim.true_slopes(j) * x[j][i] + gamma + eps[r++];
                sim.records.push_back(std::move(rec));
            }
    }
    return sim;
}

}  // namespace

TEST_CASE("ratings csv round trip and validation") {
    auto dir = testutil::temp_dir("lmer_csv");
    std::vector<RatingRecord> recs = {
        {"L0", "p1", "im0", "snd0", 0.75, false},
        {"L0", "p1", "im0", "snd1", 0.25, true},
    };
    const std::string path = (dir / "r.csv").string();
    save_ratings_csv(path, recs);
    auto back = load_ratings_csv(path);
    REQUIRE(back.size() == 2);
    CHECK(back[0].listener_id == "L0");
    CHECK(back[0].rating == 0.75);
    CHECK(!back[0].is_duplicate_page);
    CHECK(back[1].is_duplicate_page);

    std::ofstream f(path, std::ios::app);
    f << "L0,p1,im0,snd0,0.5,0\n";  // same (listener, page, candidate)
    f.close();
    CHECK_THROWS_WITH_AS(load_ratings_csv(path),
                         doctest::Contains("duplicate"), std::runtime_error);

    const std::string bad = (dir / "bad.csv").string();
    std::ofstream g(bad);
    g << "listener_id,test_page,imitation_id,candidate_id,rating,is_duplicate\n"
      << "L0,p1,im0,snd0,1.5,0\n";
    g.close();
    CHECK_THROWS_WITH_AS(load_ratings_csv(bad), doctest::Contains("[0,1]"),
                         std::runtime_error);
}

TEST_CASE("fit matches a dense-covariance GLS oracle") {
    Sim sim = simulate(4, 6, 5, 0.15, 0.08, 301);
    LmerFit fit = fit_lmer(sim.records, sim.distances);
    const int n = int(sim.records.size());
    const int nj = fit.n_sounds();
    const int p = 2 * nj;

    // Rebuild the design in the fit's own column order.
    std::map<std::string, int> sidx, lidx;
    for (int j = 0; j < nj; ++j) sidx[fit.sound_ids[j]] = j;
    for (const auto& r : sim.records) lidx.emplace(r.listener_id, 0);
    int k = 0;
    for (auto& [id, idx] : lidx) idx = k++;
    std::map<std::pair<std::string, std::string>, double> dist;
    for (const auto& r : sim.distances)
        dist[{r.imitation_id, r.candidate_id}] = r.normalized;

    Eigen::MatrixXd x = Eigen::MatrixXd::Zero(n, p);
    Eigen::VectorXd y(n);
    Eigen::MatrixXd z = Eigen::MatrixXd::Zero(n, int(lidx.size()));
    for (int i = 0; i < n; ++i) {
        const auto& r = sim.records[i];
        const int j = sidx[r.candidate_id];
        x(i, j) = 1.0;
        x(i, nj + j) = dist[{r.imitation_id, r.candidate_id}];
        y(i) = r.rating;
        z(i, lidx[r.listener_id]) = 1.0;
    }

    // Dense GLS at the fitted variance ratio.
    const double th2 = fit.theta * fit.theta;
    Eigen::MatrixXd v0 = Eigen::MatrixXd::Identity(n, n) +
                         th2 * z * z.transpose();
    Eigen::LLT<Eigen::MatrixXd> llt(v0);
    Eigen::MatrixXd vix = llt.solve(x);
    Eigen::VectorXd viy = llt.solve(y);
    Eigen::MatrixXd a = x.transpose() * vix;
    Eigen::VectorXd beta = a.ldlt().solve(x.transpose() * viy);
    Eigen::VectorXd resid = y - x * beta;
    const double rss = resid.dot(llt.solve(resid));
    const double sigma2 = rss / n;
    double logdet = 0;
    const Eigen::MatrixXd l = llt.matrixL();
    for (int i = 0; i < n; ++i) logdet += 2 * std::log(l(i, i));
    const double minus2ll =
        n * std::log(2 * std::numbers::pi * sigma2) + logdet + n;

    CHECK(std::abs(fit.loglik - (-0.5 * minus2ll)) < 1e-6);
    CHECK(std::abs(fit.sigma_eps2 - sigma2) < 1e-8);
    CHECK(std::abs(fit.aic - (minus2ll + 2 * (2 * nj + 2))) < 1e-6);
    for (int j = 0; j < nj; ++j) {
        CHECK(std::abs(fit.intercepts(j) - beta(j)) < 1e-7);
        CHECK(std::abs(fit.slopes(j) - beta(nj + j)) < 1e-7);
    }
    Eigen::MatrixXd cov = sigma2 * a.ldlt().solve(
                                       Eigen::MatrixXd::Identity(p, p));
    for (int i = 0; i < p; ++i)
        for (int j = 0; j < p; ++j)
            CHECK(std::abs(fit.cov(i, j) - cov(i, j)) < 1e-8);

    // the fitted theta must be at least as good as every visited one
    const double fitted_dev = -2.0 * fit.loglik;
    for (const auto& [theta, devv] : fit.deviance_trace)
        CHECK(fitted_dev <= devv + 1e-9);
}

TEST_CASE("with listener-centered noise the fit collapses to OLS exactly") {
    Sim sim = simulate(3, 5, 6, 0.0, 0.05, 302, /*center_noise=*/true);
    LmerFit fit = fit_lmer(sim.records, sim.distances);
    CHECK(fit.theta == 0.0);
    CHECK(fit.sigma_gamma2 == 0.0);

    // OLS oracle
    const int n = int(sim.records.size());
    const int nj = fit.n_sounds();
    std::map<std::string, int> sidx;
    for (int j = 0; j < nj; ++j) sidx[fit.sound_ids[j]] = j;
    std::map<std::pair<std::string, std::string>, double> dist;
    for (const auto& r : sim.distances)
        dist[{r.imitation_id, r.candidate_id}] = r.normalized;
    Eigen::MatrixXd x = Eigen::MatrixXd::Zero(n, 2 * nj);
    Eigen::VectorXd y(n);
    for (int i = 0; i < n; ++i) {
        const auto& r = sim.records[i];
        const int j = sidx[r.candidate_id];
        x(i, j) = 1.0;
        x(i, nj + j) = dist[{r.imitation_id, r.candidate_id}];
        y(i) = r.rating;
    }
    Eigen::VectorXd beta = (x.transpose() * x).ldlt().solve(x.transpose() * y);
    const double rss = (y - x * beta).squaredNorm();
    const double sigma2 = rss / n;
    const double ll = -0.5 * (n * std::log(2 * std::numbers::pi * sigma2) + n);

    CHECK(std::abs(fit.loglik - ll) < 1e-6);
    for (int j = 0; j < nj; ++j) {
        CHECK(std::abs(fit.intercepts(j) - beta(j)) < 1e-8);
        CHECK(std::abs(fit.slopes(j) - beta(nj + j)) < 1e-8);
    }
}

TEST_CASE("simulation parameters are recovered") {
    Sim sim = simulate(5, 24, 8, 0.12, 0.05, 303);
    LmerFit fit = fit_lmer(sim.records, sim.distances);
    CHECK(fit.sigma_gamma2 > 0.0);
    CHECK(std::sqrt(fit.sigma_gamma2) == doctest::Approx(0.12).epsilon(0.5));
    CHECK(std::sqrt(fit.sigma_eps2) == doctest::Approx(0.05).epsilon(0.25));
    for (int j = 0; j < fit.n_sounds(); ++j) {
        // order is by sorted candidate id (snd0..snd4): same as simulated
        CHECK(std::abs(fit.slopes(j) - sim.true_slopes(j)) < 0.1);
        CHECK(std::abs(fit.intercepts(j) - sim.true_intercepts(j)) < 0.1);
    }
    CHECK(fit.n_params == 2 * 5 + 2);
    CHECK(fit.n_records == int(sim.records.size()));
}

TEST_CASE("fit is invariant to record order") {
    Sim sim = simulate(3, 6, 4, 0.1, 0.06, 304);
    LmerFit a = fit_lmer(sim.records, sim.distances);
    auto shuffled = sim.records;
    auto eng = make_engine(305, 0);
    std::shuffle(shuffled.begin(), shuffled.end(), eng);
    LmerFit b = fit_lmer(shuffled, sim.distances);
    CHECK(std::abs(a.loglik - b.loglik) < 1e-8);
    for (int j = 0; j < a.n_sounds(); ++j)
        CHECK(a.slopes(j) == doctest::Approx(b.slopes(j)).epsilon(1e-10));
}

TEST_CASE("wald intervals, accuracy and the slope report") {
    Sim sim = simulate(4, 20, 8, 0.1, 0.04, 306);
    LmerFit fit = fit_lmer(sim.records, sim.distances);
    auto cis = wald_ci(fit);
    REQUIRE(int(cis.size()) == fit.n_sounds());
    for (int j = 0; j < fit.n_sounds(); ++j) {
        CHECK(cis[j].slope == fit.slopes(j));
        CHECK(cis[j].upper - cis[j].lower ==
              doctest::Approx(2 * 1.959964 * fit.slope_se(j)));
        CHECK(cis[j].significant() == (cis[j].upper < 0));
    }
    CHECK_THROWS_AS(wald_ci(fit, 0.9), std::invalid_argument);

    int sig = 0;
    for (const auto& c : cis) sig += c.significant();
    CHECK(accuracy(cis) == doctest::Approx(100.0 * sig / cis.size()));
    // strong simulated slopes with 20 listeners: all significant
    CHECK(accuracy(cis) == doctest::Approx(100.0));

    auto dir = testutil::temp_dir("lmer_report");
    const std::string path = (dir / "slopes.csv").string();
    slope_report(path, fit, cis);
    std::ifstream f(path);
    std::string header;
    std::getline(f, header);
    CHECK(header == "sound_id,class,slope,lower,upper,significant");
    std::string prev_class;
    std::string line;
    int rows = 0;
    while (std::getline(f, line)) {
        auto fields = csv::split(line);
        REQUIRE(fields.size() == 6);
        CHECK(fields[1] >= prev_class);  // sorted by class
        prev_class = fields[1];
        ++rows;
    }
    CHECK(rows == fit.n_sounds());
}

TEST_CASE("hand-computed accuracy percentage") {
    std::vector<SlopeCi> cis(30);
    for (int i = 0; i < 30; ++i) {
        cis[i].slope = -0.5;
        cis[i].lower = -1.0;
        cis[i].upper = i < 25 ? -0.1 : 0.1;
    }
    CHECK(accuracy(cis) == doctest::Approx(2500.0 / 30.0));
}

TEST_CASE("degenerate inputs are rejected with clear messages") {
    Sim sim = simulate(3, 5, 4, 0.1, 0.05, 307);

    // fewer than two listeners
    std::vector<RatingRecord> one;
    for (const auto& r : sim.records)
        if (r.listener_id == "L0") one.push_back(r);
    CHECK_THROWS_WITH_AS(fit_lmer(one, sim.distances),
                         doctest::Contains("at least 2 listeners"),
                         std::runtime_error);

    // a rated pair without a distance
    auto recs = sim.records;
    recs[0].imitation_id = "im_unknown";
    CHECK_THROWS_WITH_AS(fit_lmer(recs, sim.distances),
                         doctest::Contains("no distance for pair"),
                         std::runtime_error);

    // all-equal distances for one sound makes the design rank-deficient
    auto dists = sim.distances;
    for (auto& r : dists)
        if (r.candidate_id == "snd0") r.normalized = 0.5;
    CHECK_THROWS_WITH_AS(fit_lmer(sim.records, dists),
                         doctest::Contains("all-equal distances"),
                         std::runtime_error);

    CHECK_THROWS_AS(fit_lmer({}, sim.distances), std::invalid_argument);
}
