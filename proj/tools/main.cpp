// Command line front end. Talks to the pipeline exclusively through the
// C interface in msnn.h; flag values are merged over an optional --config
// file and handed to the library as JSON.

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include <msnn.h>

namespace {

struct CliError {
    int code;
    std::string message;
};

struct Common {
    std::string out;
    std::string config_path;
    std::uint64_t seed = 0;
    CLI::Option* config_opt = nullptr;
    CLI::Option* seed_opt = nullptr;
};

void add_common(CLI::App* cmd, Common& c) {
    cmd->add_option("--out", c.out, "output directory")->required();
    c.config_opt = cmd->add_option("--config", c.config_path, "JSON config file");
    c.seed_opt = cmd->add_option("--seed", c.seed, "RNG seed");
}

nlohmann::json base_config(const Common& c) {
    nlohmann::json j = nlohmann::json::object();
    if (c.config_opt->count()) {
        std::ifstream in(c.config_path, std::ios::binary);
        if (!in) throw CliError{2, "cannot read config file " + c.config_path};
        try {
            j = nlohmann::json::parse(in);
        } catch (const std::exception& e) {
            throw CliError{2, "config file " + c.config_path + ": " + e.what()};
        }
        if (!j.is_object()) throw CliError{2, "config file must hold a JSON object"};
    }
    if (c.seed_opt->count()) j["seed"] = c.seed;
    return j;
}

void check(msnn_status status) {
    if (status != MSNN_OK) throw CliError{static_cast<int>(status), msnn_last_error()};
}

void print_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) return;
    std::string line;
    while (std::getline(in, line)) std::printf("%s\n", line.c_str());
}

using CohortPtr = std::unique_ptr<msnn_cohort, decltype(&msnn_cohort_close)>;
using ExperimentPtr = std::unique_ptr<msnn_experiment, decltype(&msnn_experiment_close)>;

CohortPtr open_cohort(const std::string& dir) {
    msnn_cohort* cohort = nullptr;
    check(msnn_cohort_open(dir.c_str(), &cohort));
    return CohortPtr(cohort, &msnn_cohort_close);
}

int run(int argc, char** argv) {
    CLI::App app{"siamese pipeline for cognitive decline prediction"};
    app.require_subcommand(1);
    app.set_version_flag("--version", msnn_version());

    Common gen_c, label_c, train_c, sweep_c, report_c;

    auto* gen = app.add_subcommand("gen", "synthesize a cohort with volumes");
    add_common(gen, gen_c);
    std::string gen_preset;
    gen->add_option("--preset", gen_preset, "cohort scale: tiny | paper");

    auto* label = app.add_subcommand("label", "cluster MMSE trajectories into labels");
    add_common(label, label_c);

    auto* train = app.add_subcommand("train", "cross-validated training");
    add_common(train, train_c);
    std::string model, train_preset;
    std::uint64_t epochs = 0, folds = 0, batch_size = 0;
    double lr = 0.0;
    auto* model_opt = train->add_option("--model", model, "clin | multi | multim | mlp");
    auto* epochs_opt = train->add_option("--epochs", epochs, "training epochs (75)");
    auto* folds_opt = train->add_option("--folds", folds, "cross-validation folds (4)");
    auto* lr_opt = train->add_option("--lr", lr, "learning rate");
    auto* batch_opt = train->add_option("--batch-size", batch_size, "batch size");
    auto* preset_opt = train->add_option("--preset", train_preset, "tiny | paper");

    auto* sweep = app.add_subcommand("sweep-na", "re-evaluate frozen models under missingness");
    add_common(sweep, sweep_c);
    std::vector<double> fractions = {0.0, 0.125, 0.25, 0.375};
    sweep->add_option("--na", fractions, "comma separated NA fractions")->delimiter(',');

    auto* report = app.add_subcommand("report", "merge experiments into one report");
    std::vector<std::string> experiment_dirs;
    add_common(report, report_c);
    report->add_option("dirs", experiment_dirs, "experiment directories")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 2;
    }

    if (gen->parsed()) {
        nlohmann::json j = base_config(gen_c);
        if (!gen_preset.empty()) j["preset"] = gen_preset;
        check(msnn_generate(gen_c.out.c_str(), j.dump().c_str()));
        std::printf("cohort written under %s\n", gen_c.out.c_str());
    } else if (label->parsed()) {
        size_t n_stable = 0, n_decline = 0;
        check(msnn_label(label_c.out.c_str(), &n_stable, &n_decline));
        std::printf("labeled %zu stable / %zu decline\n", n_stable, n_decline);
    } else if (train->parsed()) {
        nlohmann::json j = base_config(train_c);
        if (model_opt->count()) j["model"] = model;
        if (preset_opt->count()) j["preset"] = train_preset;
        if (epochs_opt->count()) j["epochs"] = epochs;
        if (folds_opt->count()) j["folds"] = folds;
        if (lr_opt->count()) j["lr"] = lr;
        if (batch_opt->count()) j["batch_size"] = batch_size;
        CohortPtr cohort = open_cohort(train_c.out);
        msnn_experiment* raw = nullptr;
        check(msnn_train(cohort.get(), j.dump().c_str(), train_c.out.c_str(), &raw));
        ExperimentPtr experiment(raw, &msnn_experiment_close);
        check(msnn_experiment_write(experiment.get()));
        print_file(train_c.out + "/metrics.csv");
    } else if (sweep->parsed()) {
        CohortPtr cohort = open_cohort(sweep_c.out);
        msnn_experiment* raw = nullptr;
        check(msnn_experiment_open(sweep_c.out.c_str(), cohort.get(), &raw));
        ExperimentPtr experiment(raw, &msnn_experiment_close);
        check(msnn_sweep_na(experiment.get(), cohort.get(), fractions.data(),
                            fractions.size()));
        check(msnn_experiment_write(experiment.get()));
        print_file(sweep_c.out + "/metrics.csv");
    } else if (report->parsed()) {
        std::vector<const char*> dirs;
        dirs.reserve(experiment_dirs.size());
        for (const std::string& d : experiment_dirs) dirs.push_back(d.c_str());
        check(msnn_report(dirs.data(), dirs.size(), report_c.out.c_str()));
        std::printf("report written under %s\n", report_c.out.c_str());
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const CliError& e) {
        std::fprintf(stderr, "error: %s\n", e.message.c_str());
        return e.code;
    }
}
