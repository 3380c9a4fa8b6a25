#include <filesystem>
#include <string>

#include <doctest.h>

#include <msnn.h>

namespace fs = std::filesystem;

namespace {
fs::path scratch(const std::string& name) {
    return fs::temp_directory_path() / name;
}
}  // namespace

TEST_CASE("version string") {
    CHECK(std::string(msnn_version()) == "0.1.0");
}

TEST_CASE("null arguments come back as config errors") {
    CHECK(msnn_generate(nullptr, nullptr) == MSNN_ERR_CONFIG);
    CHECK(std::string(msnn_last_error()).find("null") != std::string::npos);

    msnn_cohort* cohort = nullptr;
    CHECK(msnn_cohort_open(nullptr, &cohort) == MSNN_ERR_CONFIG);
    CHECK(msnn_cohort_open("somewhere", nullptr) == MSNN_ERR_CONFIG);
    CHECK(msnn_label(nullptr, nullptr, nullptr) == MSNN_ERR_CONFIG);

    msnn_experiment* exp = nullptr;
    CHECK(msnn_train(nullptr, nullptr, "out", &exp) == MSNN_ERR_CONFIG);
    CHECK(msnn_sweep_na(nullptr, nullptr, nullptr, 0) == MSNN_ERR_CONFIG);
    CHECK(msnn_experiment_write(nullptr) == MSNN_ERR_CONFIG);
    CHECK(msnn_report(nullptr, 0, "out") == MSNN_ERR_CONFIG);
}

TEST_CASE("full pipeline through the C interface") {
    fs::path dir = scratch("msnn_capi_pipe");
    fs::remove_all(dir);
    REQUIRE(msnn_generate(dir.c_str(), R"({"n_stable":8,"n_decline":8,"seed":3})") ==
            MSNN_OK);
    CHECK(fs::exists(dir / "cohort.csv"));

    size_t n_stable = 0, n_decline = 0;
    REQUIRE(msnn_label(dir.c_str(), &n_stable, &n_decline) == MSNN_OK);
    CHECK(n_stable + n_decline == 16);

    msnn_cohort* cohort = nullptr;
    REQUIRE(msnn_cohort_open(dir.c_str(), &cohort) == MSNN_OK);

    msnn_experiment* exp = nullptr;
    REQUIRE(msnn_train(cohort, R"({"model":"clin","epochs":2,"seed":3})", dir.c_str(),
                       &exp) == MSNN_OK);
    REQUIRE(msnn_experiment_write(exp) == MSNN_OK);
    CHECK(fs::exists(dir / "metrics.csv"));
    CHECK(fs::exists(dir / "checkpoints" / "clin_fold0.msnn"));

    double fractions[2] = {0.0, 0.25};
    REQUIRE(msnn_sweep_na(exp, cohort, fractions, 2) == MSNN_OK);
    REQUIRE(msnn_experiment_write(exp) == MSNN_OK);
    CHECK(fs::exists(dir / "roc_clin_0.25.csv"));
    msnn_experiment_close(exp);

    msnn_experiment* reopened = nullptr;
    REQUIRE(msnn_experiment_open(dir.c_str(), cohort, &reopened) == MSNN_OK);
    double zero = 0.0;
    REQUIRE(msnn_sweep_na(reopened, cohort, &zero, 1) == MSNN_OK);
    msnn_experiment_close(reopened);

    fs::path rep = scratch("msnn_capi_rep");
    fs::remove_all(rep);
    std::string dir_str = dir.string();
    const char* dirs[1] = {dir_str.c_str()};
    REQUIRE(msnn_report(dirs, 1, rep.c_str()) == MSNN_OK);
    CHECK(fs::exists(rep / "roc.svg"));

    msnn_cohort_close(cohort);
}

TEST_CASE("failures map onto the status taxonomy") {
    fs::path dir = scratch("msnn_capi_bad");
    fs::remove_all(dir);

    CHECK(msnn_generate(dir.c_str(), "not json") == MSNN_ERR_CONFIG);
    CHECK(std::string(msnn_last_error()).find("gen config") != std::string::npos);

    msnn_cohort* cohort = nullptr;
    CHECK(msnn_cohort_open(scratch("msnn_capi_void").c_str(), &cohort) == MSNN_ERR_DATA);
    CHECK(cohort == nullptr);

    REQUIRE(msnn_generate(dir.c_str(), R"({"n_stable":4,"n_decline":4,"seed":1})") ==
            MSNN_OK);
    REQUIRE(msnn_cohort_open(dir.c_str(), &cohort) == MSNN_OK);

    msnn_experiment* exp = nullptr;
    CHECK(msnn_train(cohort, R"({"model":"resnet"})", dir.c_str(), &exp) ==
          MSNN_ERR_CONFIG);
    CHECK(exp == nullptr);

    // cohort never labeled: training has no targets
    CHECK(msnn_train(cohort, R"({"model":"clin","epochs":1})", dir.c_str(), &exp) ==
          MSNN_ERR_DATA);
    CHECK(std::string(msnn_last_error()).find("unlabeled") != std::string::npos);

    msnn_experiment* ghost = nullptr;
    CHECK(msnn_experiment_open(dir.c_str(), cohort, &ghost) == MSNN_ERR_DATA);

    msnn_cohort_close(cohort);
}
