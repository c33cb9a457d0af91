#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "qbv/cae.hpp"
#include "qbv/lmer.hpp"
#include "qbv/manifest.hpp"
#include "qbv/query.hpp"

namespace qbv {

/// Everything one end-to-end run needs; parsed from a flat key=value
/// config file with [paths] / [features] / [training] sections.
struct RunConfig {
    std::string manifest_path;
    std::string ratings_path;
    std::string out_dir = "out";
    std::vector<std::string> feature_sets;  // pk08 | mfcc | temp | cae-1..11
    uint64_t seed = 0;
    int batch_size = 128;
    double learning_rate = 1e-3;
    int patience = 10;
    int max_epochs = 1000;
    double split_fraction = 0.7;
};

RunConfig load_config(const std::string& path);
bool is_valid_feature_set(const std::string& name);

/// Validate the corpus and cache 72- and 128-band barkgrams under
/// out_dir/bark72 and out_dir/bark128.
void cmd_ingest(const RunConfig& config);

/// Train the variant-k auto-encoder on the corpus barkgrams (70:30
/// stratified split) and write out_dir/cae-k.ckpt. Returns the history.
std::vector<EpochStats> cmd_train(const RunConfig& config, int variant);

/// Write one feature CSV per requested extractor (features_<set>.csv);
/// pk08 is barkgram-based, so it materializes the bark72 cache instead.
void cmd_extract(const RunConfig& config);

/// Write normalized within-class distance tables (distances_<set>.csv).
void cmd_distances(const RunConfig& config);

struct EvalResult {
    std::string extractor_id;
    double aic = 0;
    double accuracy = 0;
    int n_significant = 0;
    int n_sounds = 0;
};

/// Fit the mixed model per feature set; write results.csv and
/// slopes_<set>.csv. Nothing is written unless every fit succeeds.
std::vector<EvalResult> cmd_evaluate(const RunConfig& config);

/// Ranked ascending-distance list of library entries for an ad-hoc query
/// clip. Lines are "rank,id,distance".
std::vector<std::pair<std::string, double>> cmd_query(
    const RunConfig& config, const std::string& audio_path,
    const std::string& extractor);

/// Human-readable summary of results.csv on stdout.
void cmd_report(const RunConfig& config);

}  // namespace qbv
