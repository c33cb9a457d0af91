#pragma once

#include <map>
#include <string>
#include <vector>

#include "qbv/audio.hpp"
#include "qbv/barkgram.hpp"

namespace qbv {

/// Flat numeric vector from any extractor (mfcc = 78, temp = 5,
/// cae-k = Table-driven bottleneck size).
struct FeatureVector {
    std::string extractor_id;
    std::vector<double> values;

    size_t dim() const { return values.size(); }
};

/// Euclidean distance between vectorised 72-band barkgrams, the shorter
/// zero-padded on the right to the longer's frame count.
double pk08_distance(const Barkgram& a, const Barkgram& b);

/// 78 MFCC statistics: mean then variance of 13 cepstra (coefficients
/// 1..13), their deltas and delta-deltas.
FeatureVector mfcc_features(const AudioClip& clip);

/// Per-frame 39-dimensional MFCC+delta+delta-delta matrix (exposed for
/// tests; rows are frames).
std::vector<std::vector<double>> mfcc_frame_matrix(const AudioClip& clip);

/// Five temporal descriptors: LAT, TC, LAT/TC, TCF, trimmed duration.
FeatureVector temporal_features(const AudioClip& clip);

// Feature CSV: header id,extractor_id,dim,v0..v{dim-1}; one row per clip.
void save_features_csv(const std::string& path,
                       const std::map<std::string, FeatureVector>& by_id);
std::map<std::string, FeatureVector> load_features_csv(
    const std::string& path);

}  // namespace qbv
