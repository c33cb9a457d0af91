// Command-line front end for the query-by-vocalisation toolkit.
#include <CLI11.hpp>
#include <iostream>

#include "qbv/pipeline.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Query-by-vocalisation feature engine and evaluation toolkit"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_override;
    std::string features_override;
    uint64_t seed = 0;
    bool seed_set = false;
    int variant = 3;
    std::string audio_path, extractor;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--config", config_path, "run config file")
            ->required();
        cmd->add_option("--out", out_override, "output directory override");
        cmd->add_option("--seed", seed, "seed override")
            ->each([&](const std::string&) { seed_set = true; });
        cmd->add_option("--features", features_override,
                        "comma-separated feature sets override");
    };

    CLI::App* ingest = app.add_subcommand("ingest", "validate corpus, cache barkgrams");
    add_common(ingest);
    CLI::App* extract = app.add_subcommand("extract", "write feature CSVs");
    add_common(extract);
    CLI::App* train = app.add_subcommand("train-cae", "train one auto-encoder variant");
    add_common(train);
    train->add_option("--variant", variant, "variant 1..11")->required();
    CLI::App* distances = app.add_subcommand("distances", "write within-class distance tables");
    add_common(distances);
    CLI::App* evaluate = app.add_subcommand("evaluate", "fit the rating model per feature set");
    add_common(evaluate);
    CLI::App* query = app.add_subcommand("query", "ranked retrieval for one audio file");
    add_common(query);
    query->add_option("--audio", audio_path, "query WAV file")->required();
    query->add_option("--extractor", extractor, "feature set to use")->required();
    CLI::App* report = app.add_subcommand("report", "print the results table");
    add_common(report);

    CLI11_PARSE(app, argc, argv);

    try {
        qbv::RunConfig config = qbv::load_config(config_path);
        if (!out_override.empty()) config.out_dir = out_override;
        if (seed_set) config.seed = seed;
        if (!features_override.empty()) {
            config.feature_sets.clear();
            std::string set;
            std::istringstream ss(features_override);
            while (std::getline(ss, set, ','))
                config.feature_sets.push_back(set);
        }

        if (ingest->parsed()) {
            qbv::cmd_ingest(config);
        } else if (extract->parsed()) {
            qbv::cmd_extract(config);
        } else if (train->parsed()) {
            auto history = qbv::cmd_train(config, variant);
            for (const auto& e : history)
                std::cout << "epoch " << e.epoch << " train_mse " << e.train_mse
                          << " val_mse " << e.val_mse << '\n';
        } else if (distances->parsed()) {
            qbv::cmd_distances(config);
        } else if (evaluate->parsed()) {
            for (const auto& r : qbv::cmd_evaluate(config))
                std::cout << r.extractor_id << " aic " << r.aic << " accuracy "
                          << r.accuracy << "% (" << r.n_significant << '/'
                          << r.n_sounds << ")\n";
        } else if (query->parsed()) {
            int rank = 1;
            for (const auto& [id, dist] : qbv::cmd_query(config, audio_path, extractor))
                std::cout << rank++ << ',' << id << ',' << dist << '\n';
        } else if (report->parsed()) {
            qbv::cmd_report(config);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
