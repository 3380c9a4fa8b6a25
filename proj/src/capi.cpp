#include "msnn.h"

#include <exception>
#include <string>
#include <vector>

#include "msnn/error.hpp"
#include "msnn/harness.hpp"

struct msnn_cohort {
    msnn::CohortData data;
};

struct msnn_experiment {
    msnn::Experiment exp;
};

namespace {

thread_local std::string g_last_error;

msnn_status status_for(msnn::ErrorCode code) {
    switch (code) {
        case msnn::ErrorCode::config:
            return MSNN_ERR_CONFIG;
        case msnn::ErrorCode::data:
        case msnn::ErrorCode::shape:
        case msnn::ErrorCode::io:
            return MSNN_ERR_DATA;
        default:
            return MSNN_ERR_INTERNAL;
    }
}

template <typename Fn>
msnn_status guarded(Fn&& fn) noexcept {
    try {
        fn();
        return MSNN_OK;
    } catch (const msnn::Error& e) {
        g_last_error = e.what();
        return status_for(e.code());
    } catch (const std::exception& e) {
        g_last_error = e.what();
        return MSNN_ERR_INTERNAL;
    } catch (...) {
        g_last_error = "unknown failure";
        return MSNN_ERR_INTERNAL;
    }
}

msnn_status null_arg(const char* what) {
    g_last_error = std::string(what) + " must not be null";
    return MSNN_ERR_CONFIG;
}

}  // namespace

extern "C" {

const char* msnn_version(void) { return "0.1.0"; }

const char* msnn_last_error(void) { return g_last_error.c_str(); }

msnn_status msnn_generate(const char* out_dir, const char* config_json) {
    if (!out_dir) return null_arg("out_dir");
    return guarded([&] {
        msnn::GenConfig cfg = config_json ? msnn::gen_config_from_json(config_json)
                                          : msnn::GenConfig::for_preset("tiny");
        cfg.out = out_dir;
        msnn::run_gen(cfg);
    });
}

msnn_status msnn_label(const char* out_dir, size_t* n_stable, size_t* n_decline) {
    if (!out_dir) return null_arg("out_dir");
    return guarded([&] {
        msnn::LabelingResult result = msnn::run_label(out_dir);
        if (n_stable) *n_stable = result.n_stable;
        if (n_decline) *n_decline = result.n_decline;
    });
}

msnn_status msnn_cohort_open(const char* dir, msnn_cohort** out) {
    if (!dir) return null_arg("dir");
    if (!out) return null_arg("out");
    *out = nullptr;
    return guarded([&] { *out = new msnn_cohort{msnn::load_cohort(dir)}; });
}

void msnn_cohort_close(msnn_cohort* cohort) { delete cohort; }

msnn_status msnn_train(const msnn_cohort* cohort, const char* config_json,
                       const char* out_dir, msnn_experiment** out) {
    if (!cohort) return null_arg("cohort");
    if (!out_dir) return null_arg("out_dir");
    if (!out) return null_arg("out");
    *out = nullptr;
    return guarded([&] {
        msnn::RunConfig cfg = config_json ? msnn::run_config_from_json(config_json)
                                          : msnn::RunConfig::for_preset("tiny");
        cfg.out = out_dir;
        *out = new msnn_experiment{msnn::run_train(cfg, cohort->data)};
    });
}

msnn_status msnn_experiment_open(const char* out_dir, const msnn_cohort* cohort,
                                 msnn_experiment** out) {
    if (!out_dir) return null_arg("out_dir");
    if (!cohort) return null_arg("cohort");
    if (!out) return null_arg("out");
    *out = nullptr;
    return guarded([&] {
        *out = new msnn_experiment{msnn::load_experiment(out_dir, cohort->data)};
    });
}

void msnn_experiment_close(msnn_experiment* experiment) { delete experiment; }

msnn_status msnn_sweep_na(msnn_experiment* experiment, const msnn_cohort* cohort,
                          const double* fractions, size_t n_fractions) {
    if (!experiment) return null_arg("experiment");
    if (!cohort) return null_arg("cohort");
    if (!fractions && n_fractions > 0) return null_arg("fractions");
    return guarded([&] {
        std::vector<double> levels(fractions, fractions + n_fractions);
        msnn::run_na_sweep(experiment->exp, cohort->data, levels);
    });
}

msnn_status msnn_experiment_write(const msnn_experiment* experiment) {
    if (!experiment) return null_arg("experiment");
    return guarded([&] { msnn::write_experiment_outputs(experiment->exp); });
}

msnn_status msnn_report(const char* const* experiment_dirs, size_t n_dirs,
                        const char* out_dir) {
    if (!experiment_dirs) return null_arg("experiment_dirs");
    if (!out_dir) return null_arg("out_dir");
    return guarded([&] {
        std::vector<std::filesystem::path> dirs;
        dirs.reserve(n_dirs);
        for (size_t i = 0; i < n_dirs; ++i) {
            if (!experiment_dirs[i])
                throw msnn::config_error("experiment_dirs entries must not be null");
            dirs.emplace_back(experiment_dirs[i]);
        }
        msnn::run_report(dirs, out_dir);
    });
}

}  // extern "C"
