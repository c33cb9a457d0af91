#include "qbv/pipeline.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <regex>
#include <sstream>
#include <stdexcept>

#include "qbv/audio.hpp"
#include "qbv/barkgram.hpp"
#include "qbv/csv.hpp"
#include "qbv/features.hpp"

namespace fs = std::filesystem;

namespace qbv {

bool is_valid_feature_set(const std::string& name) {
    if (name == "pk08" || name == "mfcc" || name == "temp") return true;
    static const std::regex cae("cae-([1-9]|1[01])");
    return std::regex_match(name, cae);
}

namespace {

int cae_variant(const std::string& name) {
    return std::stoi(name.substr(4));
}

std::string resolve(const std::string& base_file, const std::string& path) {
    fs::path p(path);
    if (p.is_absolute()) return path;
    return (fs::path(base_file).parent_path() / p).string();
}

std::map<std::string, AudioClip> load_corpus_audio(
    const std::vector<CorpusEntry>& manifest, const std::string& manifest_path) {
    std::map<std::string, AudioClip> clips;
    for (const auto& e : manifest)
        clips.emplace(e.id, load_wav(resolve(manifest_path, e.path)));
    return clips;
}

Barkgram input_barkgram(const AudioClip& clip) {
    return normalize_unit(fix_frames(compute_barkgram(clip, 128), 128));
}

std::string feature_file(const RunConfig& c, const std::string& set) {
    return (fs::path(c.out_dir) / ("features_" + set + ".csv")).string();
}
std::string distance_file(const RunConfig& c, const std::string& set) {
    return (fs::path(c.out_dir) / ("distances_" + set + ".csv")).string();
}
std::string checkpoint_file(const RunConfig& c, int variant) {
    return (fs::path(c.out_dir) / ("cae-" + std::to_string(variant) + ".ckpt"))
        .string();
}

void check_feature_sets(const RunConfig& config) {
    for (const auto& set : config.feature_sets)
        if (!is_valid_feature_set(set))
            throw std::runtime_error("unknown feature set '" + set + "'");
}

std::map<std::string, FeatureVector> extract_set(
    const RunConfig& config, const std::string& set,
    const std::vector<CorpusEntry>& manifest,
    const std::map<std::string, AudioClip>& clips) {
    std::map<std::string, FeatureVector> features;
    if (set == "mfcc") {
        for (const auto& e : manifest)
            features.emplace(e.id, mfcc_features(clips.at(e.id)));
    } else if (set == "temp") {
        for (const auto& e : manifest)
            features.emplace(e.id, temporal_features(clips.at(e.id)));
    } else {
        const int variant = cae_variant(set);
        const std::string ckpt = checkpoint_file(config, variant);
        if (!fs::exists(ckpt))
            throw std::runtime_error("missing checkpoint " + ckpt +
                                     " (run train-cae first)");
        CaeModel<float> model = load_checkpoint(ckpt);
        for (const auto& e : manifest)
            features.emplace(e.id,
                             encode_features(model, input_barkgram(clips.at(e.id))));
    }
    return features;
}

DistanceTable compute_distances(const RunConfig& config, const std::string& set,
                                const std::vector<CorpusEntry>& manifest,
                                const std::map<std::string, AudioClip>& clips) {
    DistanceTable table;
    if (set == "pk08") {
        std::map<std::string, Barkgram> bgs;
        for (const auto& e : manifest)
            bgs.emplace(e.id, compute_barkgram(clips.at(e.id), 72));
        table = within_class_table_pk08(bgs, manifest);
    } else {
        const std::string file = feature_file(config, set);
        std::map<std::string, FeatureVector> features =
            fs::exists(file) ? load_features_csv(file)
                             : extract_set(config, set, manifest, clips);
        table = within_class_table(features, manifest);
    }
    return normalize_distances(std::move(table));
}

}  // namespace

RunConfig load_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("config: cannot open " + path);
    RunConfig c;
    std::string line, section;
    int line_no = 0;
    while (std::getline(f, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        if (line.front() == '[' && line.back() == ']') {
            section = line.substr(1, line.size() - 2);
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error("config: bad line " +
                                     std::to_string(line_no) + " in " + path);
        const std::string key = section + "." + line.substr(0, eq);
        const std::string value = line.substr(eq + 1);
        if (key == "paths.manifest")
            c.manifest_path = resolve(path, value);
        else if (key == "paths.ratings")
            c.ratings_path = resolve(path, value);
        else if (key == "paths.out")
            c.out_dir = resolve(path, value);
        else if (key == "features.sets") {
            std::istringstream ss(value);
            std::string set;
            while (std::getline(ss, set, ',')) c.feature_sets.push_back(set);
        } else if (key == "training.seed")
            c.seed = std::stoull(value);
        else if (key == "training.batch_size")
            c.batch_size = std::stoi(value);
        else if (key == "training.learning_rate")
            c.learning_rate = std::stod(value);
        else if (key == "training.patience")
            c.patience = std::stoi(value);
        else if (key == "training.max_epochs")
            c.max_epochs = std::stoi(value);
        else if (key == "training.split_fraction")
            c.split_fraction = std::stod(value);
        else
            throw std::runtime_error("config: unknown key '" + key + "' in " +
                                     path);
    }
    if (const char* env_out = std::getenv("QBV_OUT_DIR"))
        c.out_dir = env_out;
    check_feature_sets(c);
    return c;
}

void cmd_ingest(const RunConfig& config) {
    const auto manifest = load_manifest(config.manifest_path);
    const auto clips = load_corpus_audio(manifest, config.manifest_path);
    fs::create_directories(fs::path(config.out_dir) / "bark72");
    fs::create_directories(fs::path(config.out_dir) / "bark128");
    for (const auto& e : manifest) {
        save_barkgram_bin(
            (fs::path(config.out_dir) / "bark72" / (e.id + ".bkg")).string(),
            compute_barkgram(clips.at(e.id), 72));
        save_barkgram_bin(
            (fs::path(config.out_dir) / "bark128" / (e.id + ".bkg")).string(),
            input_barkgram(clips.at(e.id)));
    }
}

std::vector<EpochStats> cmd_train(const RunConfig& config, int variant) {
    const auto manifest = load_manifest(config.manifest_path);
    const auto clips = load_corpus_audio(manifest, config.manifest_path);
    auto [train_entries, val_entries] =
        split_train_val(manifest, config.split_fraction, config.seed);

    auto to_items = [&](const std::vector<CorpusEntry>& entries) {
        std::vector<TrainItem> items;
        for (const auto& e : entries) {
            const Barkgram bg = input_barkgram(clips.at(e.id));
            TrainItem item;
            item.kind = e.kind;
            item.values.assign(bg.values.begin(), bg.values.end());
            items.push_back(std::move(item));
        }
        return items;
    };

    CaeModel<float> model(build_cae(variant), config.seed);
    TrainConfig tc;
    tc.seed = config.seed;
    tc.batch_size = config.batch_size;
    tc.learning_rate = config.learning_rate;
    tc.patience = config.patience;
    tc.max_epochs = config.max_epochs;
    auto history = train_cae(model, to_items(train_entries),
                             to_items(val_entries), tc);
    fs::create_directories(config.out_dir);
    save_checkpoint(checkpoint_file(config, variant), model);
    return history;
}

void cmd_extract(const RunConfig& config) {
    check_feature_sets(config);
    const auto manifest = load_manifest(config.manifest_path);
    const auto clips = load_corpus_audio(manifest, config.manifest_path);
    fs::create_directories(config.out_dir);
    for (const auto& set : config.feature_sets) {
        if (set == "pk08") {
            fs::create_directories(fs::path(config.out_dir) / "bark72");
            for (const auto& e : manifest)
                save_barkgram_bin(
                    (fs::path(config.out_dir) / "bark72" / (e.id + ".bkg"))
                        .string(),
                    compute_barkgram(clips.at(e.id), 72));
            continue;
        }
        save_features_csv(feature_file(config, set),
                          extract_set(config, set, manifest, clips));
    }
}

void cmd_distances(const RunConfig& config) {
    check_feature_sets(config);
    const auto manifest = load_manifest(config.manifest_path);
    const auto clips = load_corpus_audio(manifest, config.manifest_path);
    fs::create_directories(config.out_dir);
    for (const auto& set : config.feature_sets)
        save_distance_csv(distance_file(config, set),
                          compute_distances(config, set, manifest, clips));
}

std::vector<EvalResult> cmd_evaluate(const RunConfig& config) {
    check_feature_sets(config);
    if (!fs::exists(config.ratings_path))
        throw std::runtime_error("evaluate: missing ratings file " +
                                 config.ratings_path);
    const auto ratings_all = load_ratings_csv(config.ratings_path);
    std::vector<RatingRecord> ratings;
    for (const auto& r : ratings_all)
        if (!r.is_duplicate_page) ratings.push_back(r);

    const auto manifest = load_manifest(config.manifest_path);
    const auto clips = load_corpus_audio(manifest, config.manifest_path);

    // fit everything first so a failure leaves no partial results file
    std::vector<EvalResult> results;
    std::vector<std::pair<LmerFit, std::vector<SlopeCi>>> fits;
    for (const auto& set : config.feature_sets) {
        DistanceTable table;
        const std::string dfile = distance_file(config, set);
        table = fs::exists(dfile)
                    ? load_distance_csv(dfile)
                    : compute_distances(config, set, manifest, clips);
        LmerFit fit = fit_lmer(ratings, table);
        auto cis = wald_ci(fit);
        EvalResult res;
        res.extractor_id = set;
        res.aic = fit.aic;
        res.accuracy = accuracy(cis);
        res.n_sounds = fit.n_sounds();
        for (const auto& ci : cis)
            if (ci.significant()) ++res.n_significant;
        results.push_back(res);
        fits.emplace_back(std::move(fit), std::move(cis));
    }

    fs::create_directories(config.out_dir);
    std::ofstream rf(fs::path(config.out_dir) / "results.csv");
    rf << "extractor_id,aic,accuracy,n_significant,n_sounds\n";
    rf.precision(17);
    for (size_t i = 0; i < results.size(); ++i) {
        const auto& r = results[i];
        rf << r.extractor_id << ',' << r.aic << ',' << r.accuracy << ','
           << r.n_significant << ',' << r.n_sounds << '\n';
        slope_report((fs::path(config.out_dir) /
                      ("slopes_" + r.extractor_id + ".csv"))
                         .string(),
                     fits[i].first, fits[i].second);
    }
    return results;
}

std::vector<std::pair<std::string, double>> cmd_query(
    const RunConfig& config, const std::string& audio_path,
    const std::string& extractor) {
    if (!is_valid_feature_set(extractor) || extractor == "pk08")
        throw std::runtime_error("query: unsupported extractor '" + extractor +
                                 "'");
    const auto library = load_features_csv(feature_file(config, extractor));
    const AudioClip clip = load_wav(audio_path);
    FeatureVector query;
    if (extractor == "mfcc")
        query = mfcc_features(clip);
    else if (extractor == "temp")
        query = temporal_features(clip);
    else {
        CaeModel<float> model =
            load_checkpoint(checkpoint_file(config, cae_variant(extractor)));
        query = encode_features(model, input_barkgram(clip));
    }
    return rank_query(query, library);
}

void cmd_report(const RunConfig& config) {
    auto rows = csv::read(
        (fs::path(config.out_dir) / "results.csv").string(),
        "extractor_id,aic,accuracy,n_significant,n_sounds");
    std::cout << "feature set      AIC        accuracy  significant\n";
    for (const auto& r : rows) {
        std::ostringstream line;
        line.setf(std::ios::left);
        line.width(16);
        line << r[0];
        std::cout << line.str() << ' ' << std::stod(r[1]) << "  "
                  << std::stod(r[2]) << "%  " << r[3] << '/' << r[4] << '\n';
    }
}

}  // namespace qbv
