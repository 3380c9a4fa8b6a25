#include "msnn/cohort.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>

#include "msnn/error.hpp"

namespace msnn {

namespace {

// generator model for one time-varying score: base ~ N(base_mean, base_sd)
// per subject, value = base + coeff * latent + N(0, noise_sd), clamped
struct ScoreGen {
    double base_mean, base_sd, coeff, noise_sd, lo, hi;
};

constexpr std::array<ScoreGen, 8> kScoreGens = {{
    {12.0, 2.0, -8.0, 1.2, 0.0, 23.0},    // LDELTOTAL
    {6.0, 1.2, -4.0, 0.8, 0.0, 14.0},     // RAVLT_learning
    {40.0, 6.0, -20.0, 3.5, 0.0, 75.0},   // RAVLT_immediate
    {1.5, 1.0, 8.0, 0.7, 0.0, 18.0},      // CDRSB
    {2.0, 1.8, 14.0, 1.2, 0.0, 30.0},     // FAQ
    {90.0, 22.0, 130.0, 14.0, 20.0, 300.0},  // TRABSCOR
    {4.0, 1.5, 5.0, 0.9, 0.0, 15.0},      // RAVLT_forgetting
    {45.0, 8.0, -18.0, 4.5, 0.0, 90.0},   // DIGITSCOR
}};

constexpr std::array<int, 4> kVisitMonths = {0, 6, 12, 24};
constexpr double kScoreNaRate = 0.02;
// |slope| tops out at 0.35/month, so 24 months at max slope saturates latent
constexpr double kLatentScale = 0.35 * 24.0;

double round2(double v) { return std::round(v * 100.0) / 100.0; }
double round1(double v) { return std::round(v * 10.0) / 10.0; }

std::string format_double(double v, int decimals) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.*f", decimals, v);
    return buf;
}

double sq_dist4(const std::array<double, 4>& a, const std::array<double, 4>& b) {
    double s = 0.0;
    for (int i = 0; i < 4; ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return s;
}

}  // namespace

const char* label_name(Label label) {
    return label == Label::stable ? "Stable" : "Decline";
}

GeneratedCohort generate_cohort(std::size_t n_stable, std::size_t n_decline,
                                double separation, Rng& rng) {
    if (n_stable < 1 || n_decline < 1)
        throw config_error("generate_cohort: both class counts must be >= 1");
    if (!(separation > 0.0) || separation > 1.0)
        throw config_error("generate_cohort: separation must be in (0,1]");

    GeneratedCohort cohort;
    const std::size_t total = n_stable + n_decline;
    cohort.subjects.reserve(total);
    cohort.generator_class.reserve(total);

    for (std::size_t index = 0; index < total; ++index) {
        const bool declining = index >= n_stable;
        Rng sub = rng.child("subject", index);

        Subject s;
        char idbuf[32];
        std::snprintf(idbuf, sizeof(idbuf), "S%04zu", index + 1);
        s.id = idbuf;
        s.age = round1(std::clamp(sub.normal(73.0, 6.0), 55.0, 90.0));
        s.gender = sub.bernoulli(0.5) ? 1 : 0;
        const double u = sub.uniform();
        s.apoe4 = u < 0.55 ? 0 : (u < 0.88 ? 1 : 2);

        const double base_mmse = 27.0 + static_cast<double>(sub.integer(4));
        const double slope =
            declining ? -sub.uniform(0.15, 0.35) * separation : 0.0;

        std::array<double, 8> score_base{};
        for (std::size_t k = 0; k < 8; ++k)
            score_base[k] = sub.normal(kScoreGens[k].base_mean, kScoreGens[k].base_sd);

        for (int month : kVisitMonths) {
            const double latent = std::min(1.0, -slope * month / kLatentScale);
            Visit v;
            v.months_from_baseline = month;
            const double mmse_value = base_mmse + slope * month + sub.normal(0.0, 0.7);
            v.mmse = static_cast<int>(std::clamp(std::round(mmse_value), 0.0, 30.0));
            for (std::size_t k = 0; k < 8; ++k) {
                const auto& gen = kScoreGens[k];
                const double value = std::clamp(
                    score_base[k] + gen.coeff * latent + sub.normal(0.0, gen.noise_sd),
                    gen.lo, gen.hi);
                const bool missing = sub.bernoulli(kScoreNaRate);
                if (!missing) v.scores[k] = round2(value);
            }
            if (month <= 12) {
                char refbuf[32];
                std::snprintf(refbuf, sizeof(refbuf), "%s_m%02d.rvol", s.id.c_str(), month);
                v.volume_ref = refbuf;
                cohort.volumes.push_back(
                    {v.volume_ref, latent, sub.child("volume", static_cast<std::uint64_t>(month)).seed()});
            }
            s.visits.push_back(std::move(v));
        }
        cohort.subjects.push_back(std::move(s));
        cohort.generator_class.push_back(declining ? 1 : 0);
    }
    return cohort;
}

const Visit* baseline_visit(const Subject& s) {
    for (const auto& v : s.visits)
        if (v.months_from_baseline == 0 && !v.volume_ref.empty()) return &v;
    return nullptr;
}

const Visit* followup_visit(const Subject& s) {
    const Visit* m06 = nullptr;
    for (const auto& v : s.visits) {
        if (v.volume_ref.empty()) continue;
        if (v.months_from_baseline == 12) return &v;
        if (v.months_from_baseline == 6) m06 = &v;
    }
    return m06;
}

std::vector<Subject> eligibility_filter(const std::vector<Subject>& subjects) {
    std::vector<Subject> kept;
    for (const auto& s : subjects) {
        int min_month = std::numeric_limits<int>::max(), max_month = 0, n_mmse = 0;
        for (const auto& v : s.visits) {
            if (!v.mmse) continue;
            ++n_mmse;
            min_month = std::min(min_month, v.months_from_baseline);
            max_month = std::max(max_month, v.months_from_baseline);
        }
        if (n_mmse < 3 || max_month - min_month <= 12) continue;
        if (!baseline_visit(s) || !followup_visit(s)) continue;
        kept.push_back(s);
    }
    return kept;
}

std::array<double, 4> resample_mmse_trajectory(const Subject& s) {
    std::vector<std::pair<int, double>> points;
    for (const auto& v : s.visits)
        if (v.mmse) points.emplace_back(v.months_from_baseline, static_cast<double>(*v.mmse));
    if (points.empty())
        throw data_error("subject " + s.id + " has no MMSE values to resample");
    std::sort(points.begin(), points.end());

    std::array<double, 4> out{};
    for (std::size_t t = 0; t < kVisitMonths.size(); ++t) {
        const double m = kVisitMonths[t];
        if (m <= points.front().first) {
            out[t] = points.front().second;
        } else if (m >= points.back().first) {
            out[t] = points.back().second;
        } else {
            for (std::size_t i = 1; i < points.size(); ++i) {
                if (points[i].first >= m) {
                    const auto& [m0, v0] = points[i - 1];
                    const auto& [m1, v1] = points[i];
                    out[t] = m1 == m0 ? v0 : v0 + (v1 - v0) * (m - m0) / (m1 - m0);
                    break;
                }
            }
        }
    }
    return out;
}

namespace {

struct WardCluster {
    std::vector<std::size_t> members;
    std::array<double, 4> centroid{};
};

// Agglomerative Ward clustering of 4-point trajectories, cut at 2 clusters.
// Merge cost is the ESS increase n_i n_j / (n_i + n_j) * ||c_i - c_j||^2.
std::pair<WardCluster, WardCluster> ward_two_clusters(
    const std::vector<std::array<double, 4>>& points) {
    std::vector<WardCluster> clusters(points.size());
    for (std::size_t i = 0; i < points.size(); ++i) {
        clusters[i].members = {i};
        clusters[i].centroid = points[i];
    }
    while (clusters.size() > 2) {
        double best = std::numeric_limits<double>::infinity();
        std::size_t bi = 0, bj = 1;
        for (std::size_t i = 0; i < clusters.size(); ++i)
            for (std::size_t j = i + 1; j < clusters.size(); ++j) {
                const double ni = static_cast<double>(clusters[i].members.size());
                const double nj = static_cast<double>(clusters[j].members.size());
                const double cost =
                    ni * nj / (ni + nj) * sq_dist4(clusters[i].centroid, clusters[j].centroid);
                if (cost < best) {
                    best = cost;
                    bi = i;
                    bj = j;
                }
            }
        auto& a = clusters[bi];
        auto& b = clusters[bj];
        const double na = static_cast<double>(a.members.size());
        const double nb = static_cast<double>(b.members.size());
        for (int d = 0; d < 4; ++d)
            a.centroid[d] = (a.centroid[d] * na + b.centroid[d] * nb) / (na + nb);
        a.members.insert(a.members.end(), b.members.begin(), b.members.end());
        clusters.erase(clusters.begin() + static_cast<std::ptrdiff_t>(bj));
    }
    return {clusters[0], clusters[1]};
}

double mean_end_minus_start(const WardCluster& c,
                            const std::vector<std::array<double, 4>>& points) {
    double sum = 0.0;
    for (std::size_t idx : c.members) sum += points[idx][3] - points[idx][0];
    return sum / static_cast<double>(c.members.size());
}

}  // namespace

LabelingResult label_subjects(std::vector<Subject>& subjects) {
    if (subjects.size() < 2)
        throw data_error("labeling needs at least 2 subjects");
    std::vector<std::array<double, 4>> points;
    points.reserve(subjects.size());
    for (const auto& s : subjects) points.push_back(resample_mmse_trajectory(s));

    auto [a, b] = ward_two_clusters(points);
    const double change_a = mean_end_minus_start(a, points);
    const double change_b = mean_end_minus_start(b, points);
    if (change_a == change_b)
        throw data_error("labeling: clusters tie on mean MMSE change, cohort degenerate");

    const WardCluster& decline = change_a < change_b ? a : b;
    const WardCluster& stable = change_a < change_b ? b : a;

    for (auto& s : subjects) s.label = Label::stable;
    for (std::size_t idx : decline.members) subjects[idx].label = Label::decline;

    LabelingResult result;
    result.stable_centroid = stable.centroid;
    result.decline_centroid = decline.centroid;
    result.n_stable = stable.members.size();
    result.n_decline = decline.members.size();
    return result;
}

Label assign_by_centroid(const Subject& s, const LabelingResult& labeling) {
    const auto traj = resample_mmse_trajectory(s);
    const double to_stable = sq_dist4(traj, labeling.stable_centroid);
    const double to_decline = sq_dist4(traj, labeling.decline_centroid);
    return to_decline < to_stable ? Label::decline : Label::stable;
}

FeatureTable build_candidate_table(const std::vector<Subject>& subjects, Rng& rng) {
    FeatureTable table;
    table.columns = {"AGE",      "GENDER",           "LDELTOTAL",
                     "RAVLT_learning", "RAVLT_immediate", "APOE4",
                     "CDRSB",    "FAQ",              "TRABSCOR",
                     "RAVLT_forgetting", "DIGITSCOR",      "ADAS13",
                     "RAVLT_perc_forgetting", "ABETA", "TAU", "PTAU"};
    // indices of the 8 scores within the column list, in kScoreNames order
    constexpr std::array<std::size_t, 8> score_col = {2, 3, 4, 6, 7, 8, 9, 10};

    for (std::size_t si = 0; si < subjects.size(); ++si) {
        const auto& s = subjects[si];
        Rng sub = rng.child("candidate_row", si);
        for (const auto& v : s.visits) {
            std::vector<std::optional<double>> row(table.columns.size());
            row[0] = s.age;
            row[1] = static_cast<double>(s.gender);
            row[5] = static_cast<double>(s.apoe4);
            for (std::size_t k = 0; k < 8; ++k) row[score_col[k]] = v.scores[k];

            // redundant companions: near-affine copies with extra missingness
            const auto& cdrsb = v.scores[3];
            const bool adas_na = sub.bernoulli(0.08);
            const double adas_noise = sub.normal(0.0, 0.8);
            if (cdrsb && !adas_na) row[11] = round2(10.0 + 2.2 * *cdrsb + adas_noise);
            const auto& forgetting = v.scores[6];
            const bool perc_na = sub.bernoulli(0.08);
            const double perc_noise = sub.normal(0.0, 1.5);
            if (forgetting && !perc_na) row[12] = round2(6.5 * *forgetting + perc_noise);

            // sparse CSF biomarkers: mostly missing, uncorrelated
            if (!sub.bernoulli(0.7)) row[13] = round2(sub.normal(800.0, 300.0));
            if (!sub.bernoulli(0.7)) row[14] = round2(sub.normal(300.0, 100.0));
            if (!sub.bernoulli(0.7)) row[15] = round2(sub.normal(30.0, 10.0));

            table.rows.push_back(std::move(row));
        }
    }
    return table;
}

double pearson(const std::vector<std::optional<double>>& a,
               const std::vector<std::optional<double>>& b) {
    if (a.size() != b.size()) throw data_error("pearson: column lengths differ");
    double sx = 0, sy = 0, n = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (!a[i] || !b[i]) continue;
        sx += *a[i];
        sy += *b[i];
        n += 1.0;
    }
    if (n < 2.0) return 0.0;
    const double mx = sx / n, my = sy / n;
    double cov = 0, vx = 0, vy = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (!a[i] || !b[i]) continue;
        cov += (*a[i] - mx) * (*b[i] - my);
        vx += (*a[i] - mx) * (*a[i] - mx);
        vy += (*b[i] - my) * (*b[i] - my);
    }
    if (vx == 0.0 || vy == 0.0) return 0.0;
    return cov / std::sqrt(vx * vy);
}

FeatureSelection select_features(const FeatureTable& table, double corr_threshold,
                                 double na_threshold) {
    const std::size_t ncol = table.columns.size();
    if (ncol < 2) throw config_error("select_features needs at least 2 variables");

    std::vector<std::vector<std::optional<double>>> cols(ncol);
    for (const auto& row : table.rows) {
        if (row.size() != ncol) throw data_error("feature table row width mismatch");
        for (std::size_t c = 0; c < ncol; ++c) cols[c].push_back(row[c]);
    }

    FeatureSelection sel;
    std::vector<std::size_t> na_count(ncol, 0);
    for (std::size_t c = 0; c < ncol; ++c) {
        double first = 0.0;
        bool seen = false, varies = false;
        for (const auto& v : cols[c]) {
            if (!v) {
                ++na_count[c];
                continue;
            }
            if (!seen) {
                first = *v;
                seen = true;
            } else if (*v != first) {
                varies = true;
            }
        }
        if (!varies) sel.zero_variance.push_back(table.columns[c]);
    }

    struct CorrPair {
        double abs_r;
        std::size_t i, j;
    };
    std::vector<CorrPair> hot;
    for (std::size_t i = 0; i < ncol; ++i)
        for (std::size_t j = i + 1; j < ncol; ++j) {
            const double r = pearson(cols[i], cols[j]);
            if (std::fabs(r) > corr_threshold) hot.push_back({std::fabs(r), i, j});
        }
    std::sort(hot.begin(), hot.end(), [](const CorrPair& a, const CorrPair& b) {
        if (a.abs_r != b.abs_r) return a.abs_r > b.abs_r;
        return std::tie(a.i, a.j) < std::tie(b.i, b.j);
    });

    std::vector<bool> alive(ncol, true);
    for (const auto& p : hot) {
        if (!alive[p.i] || !alive[p.j]) continue;
        // drop the member with more missing values; ties drop the later column
        const std::size_t victim =
            na_count[p.j] >= na_count[p.i] ? p.j : p.i;
        alive[victim] = false;
        sel.dropped_correlated.push_back(table.columns[victim]);
    }

    const double nrows = static_cast<double>(table.rows.size());
    for (std::size_t c = 0; c < ncol; ++c) {
        if (!alive[c]) continue;
        if (nrows > 0 && static_cast<double>(na_count[c]) / nrows > na_threshold) {
            alive[c] = false;
            sel.dropped_na.push_back(table.columns[c]);
        }
    }
    for (std::size_t c = 0; c < ncol; ++c)
        if (alive[c]) sel.selected.push_back(table.columns[c]);
    return sel;
}

NormalizationStats compute_normalization(const std::vector<Subject>& train_subjects) {
    if (train_subjects.empty())
        throw data_error("normalization needs at least one training subject");
    NormalizationStats stats;

    std::array<std::vector<double>, 8> samples;
    std::vector<double> ages;
    for (const auto& s : train_subjects) {
        ages.push_back(s.age);
        for (const Visit* v : {baseline_visit(s), followup_visit(s)}) {
            if (!v) continue;
            for (std::size_t k = 0; k < 8; ++k)
                if (v->scores[k]) samples[k].push_back(*v->scores[k]);
        }
    }

    auto mean_std = [&stats](const std::vector<double>& xs, const std::string& name)
        -> std::pair<double, double> {
        if (xs.empty()) {
            stats.warnings.push_back(name + ": no training values, using mean 0 std 1");
            return {0.0, 1.0};
        }
        const double mean =
            std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
        double var = 0.0;
        for (double x : xs) var += (x - mean) * (x - mean);
        var = xs.size() > 1 ? var / static_cast<double>(xs.size() - 1) : 0.0;
        double sd = std::sqrt(var);
        if (sd == 0.0) {
            stats.warnings.push_back(name + ": zero variance in training fold, using std 1");
            sd = 1.0;
        }
        return {mean, sd};
    };

    for (std::size_t k = 0; k < 8; ++k)
        std::tie(stats.score_mean[k], stats.score_std[k]) =
            mean_std(samples[k], kScoreNames[k]);
    std::tie(stats.age_mean, stats.age_std) = mean_std(ages, "AGE");
    return stats;
}

ClinicalVector encode_clinical(const Subject& s, const Visit& visit,
                               const NormalizationStats& stats) {
    ClinicalVector out;
    for (std::size_t k = 0; k < 8; ++k) {
        if (visit.scores[k]) {
            out.scores[k] = (*visit.scores[k] - stats.score_mean[k]) / stats.score_std[k];
        } else {
            out.scores[k] = 0.0;
            out.na[k] = 1;
        }
    }
    out.statics[0] = (s.age - stats.age_mean) / stats.age_std;
    out.statics[1] = static_cast<double>(s.gender);
    out.statics[2] = static_cast<double>(s.apoe4) * 0.5;
    return out;
}

CohortSplit stratified_split(const std::vector<Subject>& subjects, std::size_t n_test,
                             std::size_t n_folds, Rng& rng) {
    if (n_folds < 2) throw config_error("stratified_split needs at least 2 folds");
    if (n_test >= subjects.size())
        throw config_error("test size " + std::to_string(n_test) +
                           " must be smaller than the cohort (" +
                           std::to_string(subjects.size()) + ")");

    std::array<std::vector<std::string>, 2> by_class;
    for (const auto& s : subjects) {
        if (!s.label) throw data_error("subject " + s.id + " is unlabeled; run labeling first");
        by_class[static_cast<std::size_t>(*s.label)].push_back(s.id);
    }
    if (by_class[0].empty() || by_class[1].empty())
        throw data_error("stratified_split needs both classes present");

    const double total = static_cast<double>(subjects.size());
    std::array<std::size_t, 2> quota{};
    std::array<double, 2> remainder{};
    std::size_t assigned = 0;
    for (std::size_t c = 0; c < 2; ++c) {
        const double exact =
            static_cast<double>(n_test) * static_cast<double>(by_class[c].size()) / total;
        quota[c] = static_cast<std::size_t>(exact);
        remainder[c] = exact - static_cast<double>(quota[c]);
        assigned += quota[c];
    }
    // largest-remainder rounding; ties resolve toward the class listed first
    while (assigned < n_test) {
        const std::size_t c = remainder[0] >= remainder[1] ? 0 : 1;
        ++quota[c];
        remainder[c] = -1.0;
        ++assigned;
    }

    for (std::size_t c = 0; c < 2; ++c) {
        if (quota[c] == 0 || by_class[c].size() - quota[c] < n_folds)
            throw data_error(std::string("class ") +
                             label_name(static_cast<Label>(c)) +
                             " is too small to stratify");
    }

    CohortSplit split;
    split.train_folds.assign(n_folds, {});
    std::size_t offset = 0;
    for (std::size_t c = 0; c < 2; ++c) {
        auto ids = by_class[c];
        rng.shuffle(ids.begin(), ids.end());
        for (std::size_t i = 0; i < quota[c]; ++i) split.test.push_back(ids[i]);
        const std::size_t rest = ids.size() - quota[c];
        for (std::size_t i = 0; i < rest; ++i)
            split.train_folds[(offset + i) % n_folds].push_back(ids[quota[c] + i]);
        offset = (offset + rest) % n_folds;
    }
    return split;
}

void write_cohort_csv(const std::vector<Subject>& subjects,
                      const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw io_error("cannot create cohort file " + path.string());
    out << "subject_id,label,months_from_bl,MMSE,AGE,GENDER,APOE4";
    for (const char* name : kScoreNames) out << ',' << name;
    out << ",volume_ref\n";
    for (const auto& s : subjects) {
        for (const auto& v : s.visits) {
            out << s.id << ',' << (s.label ? label_name(*s.label) : "") << ','
                << v.months_from_baseline << ',';
            if (v.mmse) out << *v.mmse;
            out << ',' << format_double(s.age, 1) << ',' << s.gender << ',' << s.apoe4;
            for (const auto& score : v.scores) {
                out << ',';
                if (score) out << format_double(*score, 2);
            }
            out << ',' << v.volume_ref << '\n';
        }
    }
    if (!out) throw io_error("short write on cohort file " + path.string());
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream stream(line);
    while (std::getline(stream, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    return cells;
}

double parse_double(const std::string& cell, const std::string& what, std::size_t lineno) {
    try {
        std::size_t used = 0;
        const double v = std::stod(cell, &used);
        if (used != cell.size()) throw std::invalid_argument(cell);
        return v;
    } catch (const std::exception&) {
        throw data_error("cohort csv line " + std::to_string(lineno) + ": bad " + what +
                         " value '" + cell + "'");
    }
}

long parse_int(const std::string& cell, const std::string& what, std::size_t lineno) {
    try {
        std::size_t used = 0;
        const long v = std::stol(cell, &used);
        if (used != cell.size()) throw std::invalid_argument(cell);
        return v;
    } catch (const std::exception&) {
        throw data_error("cohort csv line " + std::to_string(lineno) + ": bad " + what +
                         " value '" + cell + "'");
    }
}

}  // namespace

std::vector<Subject> read_cohort_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot open cohort file " + path.string());
    std::string line;
    if (!std::getline(in, line))
        throw data_error("cohort file is empty: " + path.string());

    std::vector<Subject> subjects;
    std::map<std::string, std::size_t> index_of;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        const auto cells = split_csv_line(line);
        if (cells.size() != 16)
            throw data_error("cohort csv line " + std::to_string(lineno) + ": expected 16 cells, got " +
                             std::to_string(cells.size()));

        const std::string& id = cells[0];
        if (id.empty())
            throw data_error("cohort csv line " + std::to_string(lineno) + ": empty subject id");

        auto [it, inserted] = index_of.try_emplace(id, subjects.size());
        if (inserted) {
            Subject s;
            s.id = id;
            s.age = parse_double(cells[4], "AGE", lineno);
            const long gender = parse_int(cells[5], "GENDER", lineno);
            if (gender != 0 && gender != 1)
                throw data_error("cohort csv line " + std::to_string(lineno) + ": GENDER must be 0/1");
            s.gender = static_cast<int>(gender);
            const long apoe4 = parse_int(cells[6], "APOE4", lineno);
            if (apoe4 < 0 || apoe4 > 2)
                throw data_error("cohort csv line " + std::to_string(lineno) + ": APOE4 must be 0..2");
            s.apoe4 = static_cast<int>(apoe4);
            if (!cells[1].empty()) {
                if (cells[1] == "Stable")
                    s.label = Label::stable;
                else if (cells[1] == "Decline")
                    s.label = Label::decline;
                else
                    throw data_error("cohort csv line " + std::to_string(lineno) + ": bad label '" +
                                     cells[1] + "'");
            }
            subjects.push_back(std::move(s));
        }
        Subject& s = subjects[it->second];

        Visit v;
        const long months = parse_int(cells[2], "months_from_bl", lineno);
        if (months < 0)
            throw data_error("cohort csv line " + std::to_string(lineno) + ": negative month");
        v.months_from_baseline = static_cast<int>(months);
        if (!s.visits.empty() && s.visits.back().months_from_baseline >= v.months_from_baseline)
            throw data_error("cohort csv line " + std::to_string(lineno) +
                             ": months not strictly increasing for subject " + id);
        if (!cells[3].empty()) {
            const long mmse = parse_int(cells[3], "MMSE", lineno);
            if (mmse < 0 || mmse > 30)
                throw data_error("cohort csv line " + std::to_string(lineno) + ": MMSE out of 0..30");
            v.mmse = static_cast<int>(mmse);
        }
        for (std::size_t k = 0; k < 8; ++k)
            if (!cells[7 + k].empty())
                v.scores[k] = parse_double(cells[7 + k], kScoreNames[k], lineno);
        v.volume_ref = cells[15];
        s.visits.push_back(std::move(v));
    }
    if (subjects.empty()) throw data_error("cohort file has no rows: " + path.string());
    return subjects;
}

}  // namespace msnn
