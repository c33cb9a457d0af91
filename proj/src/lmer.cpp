#include "qbv/lmer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <set>
#include <stdexcept>

#include "qbv/csv.hpp"

namespace qbv {

std::vector<RatingRecord> load_ratings_csv(const std::string& path) {
    auto rows = csv::read(
        path, "listener_id,test_page,imitation_id,candidate_id,rating,"
              "is_duplicate");
    std::vector<RatingRecord> out;
    std::set<std::tuple<std::string, std::string, std::string>> seen;
    for (size_t r = 0; r < rows.size(); ++r) {
        const auto& f = rows[r];
        if (f.size() != 6)
            throw std::runtime_error("ratings: bad row " + std::to_string(r + 2) +
                                     " in " + path);
        RatingRecord rec{f[0], f[1], f[2], f[3], std::stod(f[4]), f[5] == "1"};
        if (!(rec.rating >= 0.0 && rec.rating <= 1.0))
            throw std::runtime_error("ratings: rating out of [0,1] at row " +
                                     std::to_string(r + 2));
        if (!seen.insert({rec.listener_id, rec.test_page, rec.candidate_id})
                 .second)
            throw std::runtime_error(
                "ratings: duplicate (listener,page,candidate) at row " +
                std::to_string(r + 2));
        out.push_back(std::move(rec));
    }
    return out;
}

void save_ratings_csv(const std::string& path,
                      const std::vector<RatingRecord>& records) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("ratings: cannot write " + path);
    f << "listener_id,test_page,imitation_id,candidate_id,rating,is_duplicate\n";
    f.precision(17);
    for (const auto& r : records)
        f << r.listener_id << ',' << r.test_page << ',' << r.imitation_id << ','
          << r.candidate_id << ',' << r.rating << ','
          << (r.is_duplicate_page ? 1 : 0) << '\n';
}

namespace {

struct Design {
    Eigen::MatrixXd x;       // n x 2J, [sound indicators | indicator*dist]
    Eigen::VectorXd y;       // ratings
    std::vector<int> group;  // listener index per record
    std::vector<long> group_size;
    std::vector<std::string> sound_ids;
    std::map<std::string, std::string> sound_class;
};

Design build_design(const std::vector<RatingRecord>& records,
                    const DistanceTable& distances) {
    if (records.empty()) throw std::invalid_argument("fit_lmer: no records");

    std::map<std::pair<std::string, std::string>, const DistanceRow*> dist;
    for (const auto& r : distances)
        dist[{r.imitation_id, r.candidate_id}] = &r;

    std::map<std::string, int> sound_index, listener_index;
    for (const auto& rec : records) {
        sound_index.emplace(rec.candidate_id, 0);
        listener_index.emplace(rec.listener_id, 0);
    }
    if (listener_index.size() < 2)
        throw std::runtime_error("fit_lmer: need at least 2 listeners");

    Design d;
    int j = 0;
    for (auto& [id, idx] : sound_index) {
        idx = j++;
        d.sound_ids.push_back(id);
    }
    int k = 0;
    for (auto& [id, idx] : listener_index) idx = k++;

    const int n = int(records.size());
    const int nj = int(sound_index.size());
    d.x = Eigen::MatrixXd::Zero(n, 2 * nj);
    d.y.resize(n);
    d.group.resize(n);
    d.group_size.assign(listener_index.size(), 0);

    std::vector<int> sound_count(nj, 0);
    std::vector<std::set<double>> sound_dists(nj);
    for (int i = 0; i < n; ++i) {
        const auto& rec = records[i];
        auto it = dist.find({rec.imitation_id, rec.candidate_id});
        if (it == dist.end())
            throw std::runtime_error("fit_lmer: no distance for pair (" +
                                     rec.imitation_id + ", " +
                                     rec.candidate_id + ")");
        const int sj = sound_index[rec.candidate_id];
        d.x(i, sj) = 1.0;
        d.x(i, nj + sj) = it->second->normalized;
        d.y(i) = rec.rating;
        d.group[i] = listener_index[rec.listener_id];
        ++d.group_size[d.group[i]];
        ++sound_count[sj];
        sound_dists[sj].insert(it->second->normalized);
        d.sound_class[rec.candidate_id] = it->second->class_label;
    }
    for (int s = 0; s < nj; ++s) {
        if (sound_count[s] < 2)
            throw std::runtime_error("fit_lmer: sound " + d.sound_ids[s] +
                                     " has fewer than 2 ratings");
        if (sound_dists[s].size() < 2)
            throw std::runtime_error(
                "fit_lmer: rank-deficient design, sound " + d.sound_ids[s] +
                " has all-equal distances");
    }
    return d;
}

// Profiled -2 log-likelihood pieces at a fixed variance ratio theta.
struct ProfileEval {
    double deviance;
    Eigen::VectorXd beta;
    Eigen::MatrixXd a_inv;  // (X' V0^-1 X)^-1
    double sigma_eps2;
};

// V0 = I + theta^2 Z Z'; the Woodbury identity reduces every term to
// per-listener column sums since Z'Z is diagonal.
ProfileEval profile(const Design& d, double theta, bool want_cov) {
    const int n = int(d.y.size());
    const int p = int(d.x.cols());
    const int q = int(d.group_size.size());
    const double th2 = theta * theta;

    Eigen::MatrixXd s = Eigen::MatrixXd::Zero(p, q);  // per-listener X sums
    Eigen::VectorXd t = Eigen::VectorXd::Zero(q);     // per-listener y sums
    for (int i = 0; i < n; ++i) {
        s.col(d.group[i]) += d.x.row(i).transpose();
        t(d.group[i]) += d.y(i);
    }

    Eigen::MatrixXd a = d.x.transpose() * d.x;
    Eigen::VectorXd b = d.x.transpose() * d.y;
    double yvy = d.y.squaredNorm();
    double logdet = 0;
    for (int k = 0; k < q; ++k) {
        const double nk = double(d.group_size[k]);
        const double ck = th2 / (1.0 + th2 * nk);
        a.noalias() -= ck * s.col(k) * s.col(k).transpose();
        b.noalias() -= ck * t(k) * s.col(k);
        yvy -= ck * t(k) * t(k);
        logdet += std::log1p(th2 * nk);
    }

    Eigen::LDLT<Eigen::MatrixXd> ldlt(a);
    if (ldlt.info() != Eigen::Success)
        throw std::runtime_error("fit_lmer: singular penalized system");
    ProfileEval ev;
    ev.beta = ldlt.solve(b);
    const double rss = std::max(yvy - ev.beta.dot(b), 1e-300);
    ev.sigma_eps2 = rss / n;
    ev.deviance = n * std::log(2 * std::numbers::pi * ev.sigma_eps2) + logdet +
                  n;
    if (want_cov)
        ev.a_inv = ldlt.solve(Eigen::MatrixXd::Identity(p, p));
    return ev;
}

}  // namespace

LmerFit fit_lmer(const std::vector<RatingRecord>& records,
                 const DistanceTable& distances) {
    Design d = build_design(records, distances);

    LmerFit fit;
    auto dev = [&](double theta) {
        const double v = profile(d, theta, false).deviance;
        fit.deviance_trace.emplace_back(theta, v);
        return v;
    };

    // coarse log grid including the boundary
    double best_theta = 0;
    double best_dev = dev(0.0);
    constexpr double kLogLo = -14.0, kLogHi = 7.0;
    constexpr int kGrid = 64;
    std::vector<double> grid_log(kGrid);
    for (int i = 0; i < kGrid; ++i) {
        grid_log[i] = kLogLo + (kLogHi - kLogLo) * i / (kGrid - 1);
        const double v = dev(std::exp(grid_log[i]));
        if (v < best_dev) {
            best_dev = v;
            best_theta = std::exp(grid_log[i]);
        }
    }

    if (best_theta > 0) {
        // golden-section refinement on log theta around the grid winner
        const double step = (kLogHi - kLogLo) / (kGrid - 1);
        double lo = std::log(best_theta) - step;
        double hi = std::log(best_theta) + step;
        const double gr = (std::sqrt(5.0) - 1.0) / 2.0;
        double c = hi - gr * (hi - lo);
        double e = lo + gr * (hi - lo);
        double fc = dev(std::exp(c));
        double fe = dev(std::exp(e));
        for (int it = 0; it < 80 && hi - lo > 1e-11; ++it) {
            if (fc < fe) {
                hi = e;
                e = c;
                fe = fc;
                c = hi - gr * (hi - lo);
                fc = dev(std::exp(c));
            } else {
                lo = c;
                c = e;
                fc = fe;
                e = lo + gr * (hi - lo);
                fe = dev(std::exp(e));
            }
        }
        const double refined = std::exp((lo + hi) / 2);
        if (dev(refined) <= best_dev) best_theta = refined;
        // keep the boundary if it is still at least as good
        if (profile(d, 0.0, false).deviance <=
            profile(d, best_theta, false).deviance)
            best_theta = 0.0;
    }

    ProfileEval ev = profile(d, best_theta, true);
    const int nj = int(d.sound_ids.size());
    fit.sound_ids = std::move(d.sound_ids);
    fit.sound_class = std::move(d.sound_class);
    fit.intercepts = ev.beta.head(nj);
    fit.slopes = ev.beta.tail(nj);
    fit.cov = ev.sigma_eps2 * ev.a_inv;
    fit.sigma_eps2 = ev.sigma_eps2;
    fit.theta = best_theta;
    fit.sigma_gamma2 = best_theta * best_theta * ev.sigma_eps2;
    fit.loglik = -0.5 * ev.deviance;
    fit.n_params = 2 * nj + 2;
    fit.n_records = int(records.size());
    fit.aic = -2.0 * fit.loglik + 2.0 * fit.n_params;
    return fit;
}

std::vector<SlopeCi> wald_ci(const LmerFit& fit, double level) {
    if (level != 0.95)
        throw std::invalid_argument("wald_ci: only the 0.95 level is pinned");
    constexpr double z = 1.959964;
    std::vector<SlopeCi> out;
    for (int j = 0; j < fit.n_sounds(); ++j) {
        const double se = fit.slope_se(j);
        out.push_back({fit.sound_ids[j], fit.slopes(j), fit.slopes(j) - z * se,
                       fit.slopes(j) + z * se});
    }
    return out;
}

double accuracy(const std::vector<SlopeCi>& cis) {
    if (cis.empty()) return 0;
    int sig = 0;
    for (const auto& ci : cis)
        if (ci.significant()) ++sig;
    return 100.0 * sig / double(cis.size());
}

double aic(const LmerFit& fit) { return fit.aic; }

void slope_report(const std::string& path, const LmerFit& fit,
                  const std::vector<SlopeCi>& cis) {
    std::vector<SlopeCi> sorted = cis;
    auto cls = [&](const SlopeCi& c) {
        auto it = fit.sound_class.find(c.sound_id);
        return it == fit.sound_class.end() ? std::string() : it->second;
    };
    std::sort(sorted.begin(), sorted.end(),
              [&](const SlopeCi& a, const SlopeCi& b) {
                  const auto ca = cls(a), cb = cls(b);
                  return ca != cb ? ca < cb : a.slope < b.slope;
              });
    std::ofstream f(path);
    if (!f) throw std::runtime_error("slope_report: cannot write " + path);
    f << "sound_id,class,slope,lower,upper,significant\n";
    f.precision(17);
    for (const auto& c : sorted)
        f << c.sound_id << ',' << cls(c) << ',' << c.slope << ',' << c.lower
          << ',' << c.upper << ',' << (c.significant() ? 1 : 0) << '\n';
}

}  // namespace qbv
