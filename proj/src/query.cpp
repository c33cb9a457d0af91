#include "qbv/query.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "qbv/csv.hpp"

namespace qbv {

double euclidean(const FeatureVector& a, const FeatureVector& b) {
    if (a.extractor_id != b.extractor_id)
        throw std::invalid_argument("euclidean: extractor mismatch (" +
                                    a.extractor_id + " vs " + b.extractor_id +
                                    ")");
    if (a.dim() != b.dim())
        throw std::invalid_argument("euclidean: length mismatch");
    double acc = 0;
    for (size_t i = 0; i < a.dim(); ++i) {
        const double d = a.values[i] - b.values[i];
        acc += d * d;
    }
    return std::sqrt(acc);
}

DistanceTable normalize_distances(DistanceTable table) {
    if (table.empty())
        throw std::invalid_argument("normalize_distances: empty table");
    double lo = table[0].distance, hi = table[0].distance;
    for (const auto& r : table) {
        lo = std::min(lo, r.distance);
        hi = std::max(hi, r.distance);
    }
    const double range = hi - lo;
    for (auto& r : table)
        r.normalized = range > 0 ? (r.distance - lo) / range : 0.0;
    return table;
}

namespace {

template <typename DistFn>
DistanceTable pair_within_class(const std::vector<CorpusEntry>& manifest,
                                DistFn&& dist) {
    DistanceTable table;
    for (const auto& imit : manifest) {
        if (imit.kind != EntryKind::imitation) continue;
        int candidates = 0;
        for (const auto& cand : manifest) {
            if (cand.kind != EntryKind::sample ||
                cand.class_label != imit.class_label)
                continue;
            DistanceRow row;
            row.imitation_id = imit.id;
            row.candidate_id = cand.id;
            row.class_label = imit.class_label;
            row.distance = dist(imit.id, cand.id);
            table.push_back(std::move(row));
            ++candidates;
        }
        if (candidates == 0)
            throw std::runtime_error(
                "within_class_table: no sample sounds in class '" +
                imit.class_label + "' for imitation " + imit.id);
    }
    return table;
}

}  // namespace

DistanceTable within_class_table(
    const std::map<std::string, FeatureVector>& features,
    const std::vector<CorpusEntry>& manifest) {
    auto get = [&](const std::string& id) -> const FeatureVector& {
        auto it = features.find(id);
        if (it == features.end())
            throw std::runtime_error("within_class_table: missing feature for " +
                                     id);
        return it->second;
    };
    std::string extractor;
    auto table = pair_within_class(manifest, [&](const std::string& a,
                                                 const std::string& b) {
        const auto& fa = get(a);
        extractor = fa.extractor_id;
        return euclidean(fa, get(b));
    });
    for (auto& r : table) r.extractor_id = extractor;
    return table;
}

DistanceTable within_class_table_pk08(
    const std::map<std::string, Barkgram>& barkgrams,
    const std::vector<CorpusEntry>& manifest) {
    auto get = [&](const std::string& id) -> const Barkgram& {
        auto it = barkgrams.find(id);
        if (it == barkgrams.end())
            throw std::runtime_error(
                "within_class_table: missing barkgram for " + id);
        return it->second;
    };
    auto table = pair_within_class(
        manifest, [&](const std::string& a, const std::string& b) {
            return pk08_distance(get(a), get(b));
        });
    for (auto& r : table) r.extractor_id = "pk08";
    return table;
}

std::vector<std::pair<std::string, double>> rank_query(
    const FeatureVector& query,
    const std::map<std::string, FeatureVector>& library) {
    if (library.empty()) throw std::invalid_argument("rank_query: empty library");
    std::vector<std::pair<std::string, double>> ranked;
    ranked.reserve(library.size());
    for (const auto& [id, fv] : library)
        ranked.emplace_back(id, euclidean(query, fv));
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        return a.second != b.second ? a.second < b.second : a.first < b.first;
    });
    return ranked;
}

void save_distance_csv(const std::string& path, const DistanceTable& table) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("distances: cannot write " + path);
    f << "imitation_id,candidate_id,class_label,extractor_id,distance,"
         "normalized\n";
    f.precision(17);
    for (const auto& r : table)
        f << r.imitation_id << ',' << r.candidate_id << ',' << r.class_label
          << ',' << r.extractor_id << ',' << r.distance << ',' << r.normalized
          << '\n';
}

DistanceTable load_distance_csv(const std::string& path) {
    auto rows = csv::read(
        path,
        "imitation_id,candidate_id,class_label,extractor_id,distance,"
        "normalized");
    DistanceTable table;
    for (const auto& f : rows) {
        if (f.size() != 6)
            throw std::runtime_error("distances: bad row in " + path);
        table.push_back({f[0], f[1], f[2], f[3], std::stod(f[4]),
                         std::stod(f[5])});
    }
    return table;
}

}  // namespace qbv
