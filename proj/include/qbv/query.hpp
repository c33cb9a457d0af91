#pragma once

#include <map>
#include <string>
#include <vector>

#include "qbv/barkgram.hpp"
#include "qbv/features.hpp"
#include "qbv/manifest.hpp"

namespace qbv {

/// One imitation/candidate pair with its raw and min-max-normalized
/// distance.
struct DistanceRow {
    std::string imitation_id;
    std::string candidate_id;
    std::string class_label;
    std::string extractor_id;
    double distance = 0;
    double normalized = 0;
};

using DistanceTable = std::vector<DistanceRow>;

/// Plain Euclidean distance; lengths and extractor tags must match.
double euclidean(const FeatureVector& a, const FeatureVector& b);

/// Min-max normalization over the whole table (one feature set); if all
/// distances are equal every normalized value becomes 0.
DistanceTable normalize_distances(DistanceTable table);

/// One row per (imitation, same-class sample) pair, raw distances from
/// stored feature vectors. Throws when a manifest id has no feature or an
/// imitation's class has no samples.
DistanceTable within_class_table(
    const std::map<std::string, FeatureVector>& features,
    const std::vector<CorpusEntry>& manifest);

/// Same pairing, distances via pk08_distance on 72-band barkgrams.
DistanceTable within_class_table_pk08(
    const std::map<std::string, Barkgram>& barkgrams,
    const std::vector<CorpusEntry>& manifest);

/// All library entries ordered by ascending distance to the query
/// feature vector, ties broken by id.
std::vector<std::pair<std::string, double>> rank_query(
    const FeatureVector& query,
    const std::map<std::string, FeatureVector>& library);

// Distance table CSV:
// imitation_id,candidate_id,class_label,extractor_id,distance,normalized.
void save_distance_csv(const std::string& path, const DistanceTable& table);
DistanceTable load_distance_csv(const std::string& path);

}  // namespace qbv
