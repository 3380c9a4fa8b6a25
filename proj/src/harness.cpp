#include "msnn/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include <json.hpp>

#include "msnn/error.hpp"
#include "msnn/optimizer.hpp"

namespace msnn {

namespace {

using nlohmann::json;

std::string fmt_metric(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

std::string fmt_fraction(double f) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%g", f);
    return buf;
}

std::string fingerprint_hex(std::uint64_t fp) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fp));
    return buf;
}

std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error("cannot open " + path.string());
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw io_error("cannot open " + path.string() + " for writing");
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!out) throw io_error("short write: " + path.string());
}

json parse_json(const std::string& text, const std::string& what) {
    try {
        return json::parse(text);
    } catch (const std::exception& e) {
        throw data_error(what + ": " + e.what());
    }
}

json augment_spec_to_json(const AugmentSpec& s) {
    return json{{"max_rotation_deg", s.max_rotation_deg},
                {"blur_sigma_max", s.blur_sigma_max},
                {"contrast_low", s.contrast_low},
                {"contrast_high", s.contrast_high},
                {"contrast_jitter", s.contrast_jitter},
                {"rotate", s.rotate},
                {"blur", s.blur},
                {"contrast", s.contrast}};
}

AugmentSpec augment_spec_from_json(const json& j, AugmentSpec s) {
    s.max_rotation_deg = j.value("max_rotation_deg", s.max_rotation_deg);
    s.blur_sigma_max = j.value("blur_sigma_max", s.blur_sigma_max);
    s.contrast_low = j.value("contrast_low", s.contrast_low);
    s.contrast_high = j.value("contrast_high", s.contrast_high);
    s.contrast_jitter = j.value("contrast_jitter", s.contrast_jitter);
    s.rotate = j.value("rotate", s.rotate);
    s.blur = j.value("blur", s.blur);
    s.contrast = j.value("contrast", s.contrast);
    return s;
}

json run_config_to_json_obj(const RunConfig& cfg) {
    return json{{"model", model_kind_name(model_kind_for(cfg.variant))},
                {"train_na_mask", cfg.variant == VariantKind::multim},
                {"epochs", cfg.epochs},
                {"folds", cfg.folds},
                {"seed", cfg.seed},
                {"lr", cfg.lr},
                {"batch_size", cfg.batch_size},
                {"preset", cfg.preset},
                {"model_spec", json::parse(model_spec_to_json(cfg.model_spec))},
                {"na_policy",
                 json{{"train_subject_prob", cfg.train_policy.train_subject_prob},
                      {"train_erase_per_visit", cfg.train_policy.train_erase_per_visit}}},
                {"test_fraction", cfg.test_fraction},
                {"downscale_factor", cfg.downscale_factor},
                {"augment", cfg.augment},
                {"augment_spec", augment_spec_to_json(cfg.augment_spec)}};
}

RunConfig run_config_from_json_obj(const json& j) {
    RunConfig cfg =
        j.contains("preset") ? RunConfig::for_preset(j.at("preset").get<std::string>())
                             : RunConfig();
    std::string model = j.value("model", std::string(model_kind_name(model_kind_for(cfg.variant))));
    bool mask = j.value("train_na_mask", cfg.variant == VariantKind::multim);
    if (model == "multim") {
        if (j.contains("train_na_mask") && !j.at("train_na_mask").get<bool>())
            throw config_error("model multim implies train_na_mask");
        model = "multi";
        mask = true;
    }
    ModelKind mk = model_kind_from_name(model);
    if (mask && mk != ModelKind::multi)
        throw config_error("train_na_mask applies only to the multimodal model");
    cfg.variant = mask ? VariantKind::multim
                       : (mk == ModelKind::multi ? VariantKind::multi
                          : mk == ModelKind::clin ? VariantKind::clin
                                                  : VariantKind::mlp);
    cfg.epochs = j.value("epochs", cfg.epochs);
    cfg.folds = j.value("folds", cfg.folds);
    cfg.seed = j.value("seed", cfg.seed);
    cfg.lr = j.value("lr", cfg.lr);
    cfg.batch_size = j.value("batch_size", cfg.batch_size);
    if (j.contains("model_spec"))
        cfg.model_spec = model_spec_from_json(j.at("model_spec").dump());
    if (j.contains("na_policy")) {
        const json& p = j.at("na_policy");
        cfg.train_policy.train_subject_prob =
            p.value("train_subject_prob", cfg.train_policy.train_subject_prob);
        cfg.train_policy.train_erase_per_visit =
            p.value("train_erase_per_visit", cfg.train_policy.train_erase_per_visit);
    }
    cfg.test_fraction = j.value("test_fraction", cfg.test_fraction);
    cfg.downscale_factor = j.value("downscale_factor", cfg.downscale_factor);
    cfg.augment = j.value("augment", cfg.augment);
    if (j.contains("augment_spec"))
        cfg.augment_spec = augment_spec_from_json(j.at("augment_spec"), cfg.augment_spec);
    cfg.validate();
    return cfg;
}

Tensorf to_tensor(const Volume& v) {
    return Tensorf({1, v.dims[2], v.dims[1], v.dims[0]}, v.voxels);
}

std::string checkpoint_name(VariantKind v, std::size_t fold) {
    return std::string(variant_name(v)) + "_fold" + std::to_string(fold) + ".msnn";
}

std::string roc_csv_name(const std::string& model, double na) {
    return "roc_" + model + "_" + fmt_fraction(na) + ".csv";
}

// Labeled/filtered cohort resolved against the CV split.
struct Prepared {
    std::vector<Subject> subjects;
    std::unordered_map<std::string, const Subject*> by_id;
    std::unordered_map<std::string, Volume> volumes;  // downscaled, normalized
};

const Subject& resolve(const Prepared& prep, const std::string& id) {
    auto it = prep.by_id.find(id);
    if (it == prep.by_id.end())
        throw data_error("cohort does not contain subject " + id + " named by the split");
    return *it->second;
}

void load_volumes_for(Prepared& prep, const RunConfig& cfg,
                      const std::filesystem::path& volume_dir) {
    for (const Subject& s : prep.subjects) {
        for (const Visit* v : {baseline_visit(s), followup_visit(s)}) {
            if (v == nullptr || v->volume_ref.empty())
                throw data_error("subject " + s.id + " passed filtering without a visit pair");
            if (prep.volumes.count(v->volume_ref)) continue;
            Volume vol = read_volume(volume_dir / (v->volume_ref + ".rvol"));
            vol = downscale(vol, cfg.downscale_factor);
            vol = normalize_intensity(vol);
            const auto& want = cfg.model_spec.volume_dims;
            if (vol.dims[0] != want[0] || vol.dims[1] != want[1] || vol.dims[2] != want[2])
                throw data_error("volume " + v->volume_ref + " downscales to " +
                                 std::to_string(vol.dims[0]) + "x" + std::to_string(vol.dims[1]) +
                                 "x" + std::to_string(vol.dims[2]) +
                                 " but the model expects " + std::to_string(want[0]) + "x" +
                                 std::to_string(want[1]) + "x" + std::to_string(want[2]));
            prep.volumes.emplace(v->volume_ref, std::move(vol));
        }
    }
}

Prepared prepare(const RunConfig& cfg, const CohortData& cohort) {
    for (const Subject& s : cohort.subjects)
        if (!s.label)
            throw data_error("unlabeled cohort: subject " + s.id + " (run the label stage first)");
    Prepared prep;
    prep.subjects = eligibility_filter(cohort.subjects);
    if (prep.subjects.empty()) throw data_error("no subjects survive the eligibility filter");
    for (const Subject& s : prep.subjects) prep.by_id.emplace(s.id, &s);
    if (variant_uses_volumes(cfg.variant)) load_volumes_for(prep, cfg, cohort.volume_dir);
    return prep;
}

SubjectPair make_clin_pair(const Subject& s, const NormalizationStats& stats) {
    const Visit* bl = baseline_visit(s);
    const Visit* fu = followup_visit(s);
    if (bl == nullptr || fu == nullptr)
        throw data_error("subject " + s.id + " lacks the visit pair required for training");
    SubjectPair p;
    p.subject_id = s.id;
    p.label = static_cast<int>(*s.label);
    p.baseline_clin = encode_clinical(s, *bl, stats);
    p.followup_clin = encode_clinical(s, *fu, stats);
    return p;
}

void attach_volumes(SubjectPair& pair, const Subject& s, const Prepared& prep) {
    pair.baseline_volume = to_tensor(prep.volumes.at(baseline_visit(s)->volume_ref));
    pair.followup_volume = to_tensor(prep.volumes.at(followup_visit(s)->volume_ref));
}

void attach_augmented(SubjectPair& pair, const Subject& s, const Prepared& prep,
                      const AugmentSpec& spec, Rng& rng) {
    pair.baseline_volume = to_tensor(augment(prep.volumes.at(baseline_visit(s)->volume_ref),
                                             spec, rng));
    pair.followup_volume = to_tensor(augment(prep.volumes.at(followup_visit(s)->volume_ref),
                                             spec, rng));
}

Model build_variant(const RunConfig& cfg, Rng& rng) {
    switch (model_kind_for(cfg.variant)) {
        case ModelKind::multi: return Model::build_multisiam(cfg.model_spec, rng);
        case ModelKind::clin: return Model::build_clinsiam(cfg.model_spec, rng);
        default: return Model::build_mlp_baseline(cfg.model_spec, rng);
    }
}

double validation_auc(const Model& model, const std::vector<SubjectPair>& val) {
    ScoredSet s;
    for (const SubjectPair& p : val) {
        s.scores.push_back(model.predict(p));
        s.labels.push_back(p.label);
    }
    return roc_auc(s).auc;
}

FoldOutcome train_fold(const RunConfig& cfg, std::size_t fold_index,
                       const std::vector<const Subject*>& train_subjects,
                       const std::vector<const Subject*>& val_subjects, const Prepared& prep,
                       const std::unordered_set<std::string>& test_ids) {
    const bool with_volumes = variant_uses_volumes(cfg.variant);
    Rng fold_rng = Rng(cfg.seed).child("fold", fold_index);

    std::vector<Subject> stat_subjects;
    for (const Subject* s : train_subjects) stat_subjects.push_back(*s);
    NormalizationStats stats = compute_normalization(stat_subjects);

    std::vector<SubjectPair> master;
    for (const Subject* s : train_subjects) master.push_back(make_clin_pair(*s, stats));

    std::vector<SubjectPair> val;
    for (const Subject* s : val_subjects) {
        SubjectPair p = make_clin_pair(*s, stats);
        if (with_volumes) attach_volumes(p, *s, prep);
        val.push_back(std::move(p));
    }

    Rng init_rng = fold_rng.child("init");
    Model model = build_variant(cfg, init_rng);
    Optimizer<float> opt(Optimizer<float>::Kind::adam, static_cast<float>(cfg.lr));

    NAPolicy mask_policy = cfg.train_policy;
    mask_policy.mode = NAPolicy::Mode::train_random;
    if (cfg.variant == VariantKind::multim) validate(mask_policy);

    double best_auc = -1.0;
    std::size_t best_epoch = 0;
    std::vector<std::vector<float>> best_values;

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        Rng epoch_rng = fold_rng.child("epoch", epoch);
        std::vector<SubjectPair> pool;
        if (cfg.variant == VariantKind::multim) {
            Rng mask_rng = epoch_rng.child("na");
            pool = train_na_mask(master, mask_policy, mask_rng);
        } else {
            pool = master;
        }

        std::vector<std::size_t> order(pool.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        epoch_rng.shuffle(order.begin(), order.end());

        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            std::size_t stop = std::min(order.size(), start + cfg.batch_size);
            float seed = 1.0f / static_cast<float>(stop - start);
            for (std::size_t i = start; i < stop; ++i) {
                SubjectPair sample = pool[order[i]];
                if (test_ids.count(sample.subject_id))
                    throw Error(ErrorCode::internal,
                                "test subject " + sample.subject_id + " reached a training batch");
                if (with_volumes) {
                    const Subject& subj = resolve(prep, sample.subject_id);
                    if (cfg.augment)
                        attach_augmented(sample, subj, prep, cfg.augment_spec, epoch_rng);
                    else
                        attach_volumes(sample, subj, prep);
                }
                auto f = model.forward_loss(sample, Mode::train, epoch_rng);
                f.graph.backward(f.loss, seed);
            }
            opt.step(model.params().stores());
        }

        double auc = validation_auc(model, val);
        if (auc > best_auc) {
            best_auc = auc;
            best_epoch = epoch;
            best_values.clear();
            for (const auto& store : model.params().stores())
                best_values.push_back(store->value.values);
        }
    }

    const auto& stores = model.params().stores();
    for (std::size_t i = 0; i < stores.size(); ++i)
        stores[i]->value.values = best_values[i];

    FoldOutcome out{std::move(model), std::move(stats), best_auc, best_epoch};
    return out;
}

Evaluation evaluate_test(const RunConfig& cfg, const std::vector<FoldOutcome>& folds,
                         const std::vector<const Subject*>& test_subjects, const Prepared& prep,
                         double fraction, const Rng& sweep_rng) {
    const bool with_volumes = variant_uses_volumes(cfg.variant);
    ScoredSet ensemble;
    std::vector<ScoredSet> per_fold(folds.size());

    for (const Subject* s : test_subjects) {
        Rng subj_rng = sweep_rng.child(s->id);
        double mean = 0.0;
        for (std::size_t k = 0; k < folds.size(); ++k) {
            SubjectPair pair = make_clin_pair(*s, folds[k].stats);
            if (fraction > 0.0) {
                // Mask positions must match across folds, and the subject
                // stream is fraction-independent so the erase sets nest as
                // the fraction grows: every fold and fraction replays the
                // same per-subject stream.
                Rng mask_rng = subj_rng;
                auto injected =
                    inject_test_na(pair.baseline_clin, pair.followup_clin, fraction, mask_rng);
                pair.baseline_clin = injected.first;
                pair.followup_clin = injected.second;
            }
            if (with_volumes) attach_volumes(pair, *s, prep);
            double p = folds[k].model.predict(pair);
            per_fold[k].scores.push_back(p);
            per_fold[k].labels.push_back(pair.label);
            mean += p;
        }
        ensemble.scores.push_back(mean / static_cast<double>(folds.size()));
        ensemble.labels.push_back(static_cast<int>(*s->label));
    }

    Evaluation ev;
    ev.report.model_name = variant_name(cfg.variant);
    ev.report.na_fraction = fraction;
    ev.report.confusion = classification_metrics(ensemble);
    ev.report.roc = roc_auc(ensemble);
    for (const ScoredSet& s : per_fold) ev.fold_aucs.push_back(roc_auc(s).auc);
    return ev;
}

void write_split_json(const std::filesystem::path& path, const CohortSplit& split) {
    json j;
    j["folds"] = split.train_folds;
    j["test"] = split.test;
    write_text_file(path, j.dump(2) + "\n");
}

CohortSplit read_split_json(const std::filesystem::path& path) {
    json j = parse_json(read_text_file(path), "split file " + path.string());
    CohortSplit split;
    try {
        split.train_folds = j.at("folds").get<std::vector<std::vector<std::string>>>();
        split.test = j.at("test").get<std::vector<std::string>>();
    } catch (const std::exception& e) {
        throw data_error("split file " + path.string() + ": " + e.what());
    }
    return split;
}

std::string metrics_csv(const Experiment& exp) {
    std::string text = "model,na_fraction,accuracy,precision,recall,f1,auc\n";
    for (const Evaluation& ev : exp.evaluations) {
        const ConfusionMetrics& c = ev.report.confusion;
        text += ev.report.model_name + "," + fmt_fraction(ev.report.na_fraction) + "," +
                fmt_metric(c.accuracy) + "," + fmt_metric(c.precision) + "," +
                fmt_metric(c.recall) + "," + fmt_metric(c.f1) + "," +
                fmt_metric(ev.report.roc.auc) + "\n";
    }
    return text;
}

std::string roc_csv(const RocCurve& roc) {
    std::string text = "fpr,tpr\n";
    for (const RocPoint& p : roc.points)
        text += fmt_metric(p.fpr) + "," + fmt_metric(p.tpr) + "\n";
    return text;
}

std::vector<RocPoint> read_roc_csv(const std::filesystem::path& path) {
    std::istringstream in(read_text_file(path));
    std::vector<RocPoint> points;
    std::string line;
    std::getline(in, line);  // header
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        RocPoint p;
        if (std::sscanf(line.c_str(), "%lf,%lf", &p.fpr, &p.tpr) != 2)
            throw data_error("roc file " + path.string() + ": bad row \"" + line + "\"");
        points.push_back(p);
    }
    return points;
}

json experiment_to_json(const Experiment& exp) {
    json folds = json::array();
    for (const FoldOutcome& f : exp.folds)
        folds.push_back(json{{"best_epoch", f.best_epoch}, {"val_auc", f.val_auc}});
    json evals = json::array();
    for (const Evaluation& ev : exp.evaluations) {
        const ConfusionMetrics& c = ev.report.confusion;
        evals.push_back(json{{"na", ev.report.na_fraction},
                             {"accuracy", c.accuracy},
                             {"precision", c.precision},
                             {"recall", c.recall},
                             {"f1", c.f1},
                             {"auc", ev.report.roc.auc},
                             {"degenerate", c.degenerate},
                             {"fold_aucs", ev.fold_aucs}});
    }
    return json{{"config", run_config_to_json_obj(exp.config)},
                {"cohort_fingerprint", fingerprint_hex(exp.cohort_fingerprint)},
                {"folds", folds},
                {"evaluations", evals}};
}

std::string svg_palette(std::size_t i) {
    static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c",
                                   "#9467bd", "#ff7f0e", "#8c564b"};
    return colors[i % 6];
}

std::string render_roc_svg(
    const std::vector<std::pair<std::string, std::vector<RocPoint>>>& curves) {
    const double left = 70, top = 30, plot_w = 420, plot_h = 420;
    auto px = [&](double fpr) { return left + fpr * plot_w; };
    auto py = [&](double tpr) { return top + (1.0 - tpr) * plot_h; };
    auto num = [](double v) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.1f", v);
        return std::string(buf);
    };

    std::string s;
    s += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"560\" height=\"520\" "
         "viewBox=\"0 0 560 520\">\n";
    s += "<rect x=\"0\" y=\"0\" width=\"560\" height=\"520\" fill=\"#ffffff\"/>\n";
    s += "<line x1=\"" + num(left) + "\" y1=\"" + num(top) + "\" x2=\"" + num(left) +
         "\" y2=\"" + num(top + plot_h) + "\" stroke=\"#000000\"/>\n";
    s += "<line x1=\"" + num(left) + "\" y1=\"" + num(top + plot_h) + "\" x2=\"" +
         num(left + plot_w) + "\" y2=\"" + num(top + plot_h) + "\" stroke=\"#000000\"/>\n";
    for (int t = 0; t <= 4; ++t) {
        double v = t / 4.0;
        s += "<line x1=\"" + num(px(v)) + "\" y1=\"" + num(top + plot_h) + "\" x2=\"" +
             num(px(v)) + "\" y2=\"" + num(top + plot_h + 6) + "\" stroke=\"#000000\"/>\n";
        s += "<text x=\"" + num(px(v)) + "\" y=\"" + num(top + plot_h + 22) +
             "\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\">" +
             fmt_fraction(v) + "</text>\n";
        s += "<line x1=\"" + num(left - 6) + "\" y1=\"" + num(py(v)) + "\" x2=\"" + num(left) +
             "\" y2=\"" + num(py(v)) + "\" stroke=\"#000000\"/>\n";
        s += "<text x=\"" + num(left - 10) + "\" y=\"" + num(py(v) + 4) +
             "\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"end\">" +
             fmt_fraction(v) + "</text>\n";
    }
    s += "<text x=\"" + num(left + plot_w / 2) + "\" y=\"" + num(top + plot_h + 45) +
         "\" font-family=\"sans-serif\" font-size=\"14\" text-anchor=\"middle\">"
         "False positive rate</text>\n";
    s += "<text x=\"20\" y=\"" + num(top + plot_h / 2) +
         "\" font-family=\"sans-serif\" font-size=\"14\" text-anchor=\"middle\" "
         "transform=\"rotate(-90 20 " + num(top + plot_h / 2) + ")\">"
         "True positive rate</text>\n";
    s += "<line x1=\"" + num(px(0)) + "\" y1=\"" + num(py(0)) + "\" x2=\"" + num(px(1)) +
         "\" y2=\"" + num(py(1)) + "\" stroke=\"#999999\" stroke-dasharray=\"6 4\"/>\n";
    for (std::size_t i = 0; i < curves.size(); ++i) {
        std::string color = svg_palette(i);
        std::string points;
        for (const RocPoint& p : curves[i].second) {
            if (!points.empty()) points += " ";
            points += num(px(p.fpr)) + "," + num(py(p.tpr));
        }
        s += "<polyline fill=\"none\" stroke=\"" + color + "\" stroke-width=\"1.5\" points=\"" +
             points + "\"/>\n";
        double ly = top + 16 + 18 * static_cast<double>(i);
        s += "<line x1=\"" + num(left + 14) + "\" y1=\"" + num(ly - 4) + "\" x2=\"" +
             num(left + 44) + "\" y2=\"" + num(ly - 4) + "\" stroke=\"" + color +
             "\" stroke-width=\"1.5\"/>\n";
        s += "<text x=\"" + num(left + 50) + "\" y=\"" + num(ly) +
             "\" font-family=\"sans-serif\" font-size=\"13\">" + curves[i].first + "</text>\n";
    }
    s += "</svg>\n";
    return s;
}

}  // namespace

const char* variant_name(VariantKind v) {
    switch (v) {
        case VariantKind::clin: return "clin";
        case VariantKind::multi: return "multi";
        case VariantKind::multim: return "multim";
        case VariantKind::mlp: return "mlp";
    }
    return "?";
}

VariantKind variant_from_name(const std::string& name) {
    if (name == "clin") return VariantKind::clin;
    if (name == "multi") return VariantKind::multi;
    if (name == "multim") return VariantKind::multim;
    if (name == "mlp") return VariantKind::mlp;
    throw config_error("unknown model variant: " + name);
}

ModelKind model_kind_for(VariantKind v) {
    switch (v) {
        case VariantKind::clin: return ModelKind::clin;
        case VariantKind::multi:
        case VariantKind::multim: return ModelKind::multi;
        case VariantKind::mlp: return ModelKind::mlp;
    }
    return ModelKind::clin;
}

bool variant_uses_volumes(VariantKind v) {
    return v == VariantKind::multi || v == VariantKind::multim;
}

RunConfig RunConfig::for_preset(const std::string& preset) {
    RunConfig cfg;
    cfg.preset = preset;
    if (preset == "tiny") {
        cfg.model_spec = ModelSpec::tiny();
    } else if (preset == "paper") {
        cfg.model_spec = ModelSpec::paper_default();
    } else {
        throw config_error("unknown preset: " + preset + " (expected tiny or paper)");
    }
    return cfg;
}

void RunConfig::validate() const {
    if (epochs < 1) throw config_error("epochs must be >= 1");
    if (folds < 2) throw config_error("folds must be >= 2");
    if (!(lr > 0.0) || !std::isfinite(lr)) throw config_error("learning rate must be positive");
    if (batch_size < 1) throw config_error("batch size must be >= 1");
    if (!(test_fraction > 0.0 && test_fraction < 1.0))
        throw config_error("test fraction must lie in (0, 1)");
    if (downscale_factor < 1) throw config_error("downscale factor must be >= 1");
    if (preset != "tiny" && preset != "paper")
        throw config_error("unknown preset: " + preset + " (expected tiny or paper)");
    model_spec.validate();
}

std::string run_config_to_json(const RunConfig& config) {
    return run_config_to_json_obj(config).dump(2);
}

RunConfig run_config_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const std::exception& e) {
        throw config_error(std::string("config: ") + e.what());
    }
    try {
        return run_config_from_json_obj(j);
    } catch (const Error&) {
        throw;
    } catch (const std::exception& e) {
        throw config_error(std::string("config: ") + e.what());
    }
}

GenConfig GenConfig::for_preset(const std::string& preset) {
    GenConfig cfg;
    if (preset == "tiny") return cfg;
    if (preset == "paper") {
        cfg.n_stable = 191;
        cfg.n_decline = 186;
        cfg.acquisition_dims = {204, 216, 150};
        return cfg;
    }
    throw config_error("unknown preset: " + preset + " (expected tiny or paper)");
}

std::string gen_config_to_json(const GenConfig& config) {
    nlohmann::json j;
    j["n_stable"] = config.n_stable;
    j["n_decline"] = config.n_decline;
    j["separation"] = config.separation;
    j["acquisition_dims"] = config.acquisition_dims;
    j["seed"] = config.seed;
    return j.dump(2);
}

GenConfig gen_config_from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const std::exception& e) {
        throw config_error(std::string("gen config: ") + e.what());
    }
    try {
        GenConfig cfg = GenConfig::for_preset(j.value("preset", "tiny"));
        cfg.n_stable = j.value("n_stable", cfg.n_stable);
        cfg.n_decline = j.value("n_decline", cfg.n_decline);
        cfg.separation = j.value("separation", cfg.separation);
        if (j.contains("acquisition_dims")) {
            auto dims = j.at("acquisition_dims").get<std::vector<std::uint32_t>>();
            if (dims.size() != 3)
                throw config_error("gen config: acquisition_dims needs three entries");
            std::copy(dims.begin(), dims.end(), cfg.acquisition_dims.begin());
        }
        cfg.seed = j.value("seed", cfg.seed);
        if (cfg.n_stable + cfg.n_decline < 2)
            throw config_error("gen config: cohort needs at least two subjects");
        if (cfg.separation <= 0.0 || !std::isfinite(cfg.separation))
            throw config_error("gen config: separation must be positive");
        for (std::uint32_t d : cfg.acquisition_dims)
            if (d == 0) throw config_error("gen config: acquisition_dims must be positive");
        return cfg;
    } catch (const Error&) {
        throw;
    } catch (const std::exception& e) {
        throw config_error(std::string("gen config: ") + e.what());
    }
}

void run_gen(const GenConfig& config) {
    if (config.out.empty()) throw config_error("gen: output directory not set");
    std::filesystem::create_directories(config.out / "volumes");

    Rng rng(config.seed);
    GeneratedCohort cohort =
        generate_cohort(config.n_stable, config.n_decline, config.separation, rng);
    write_cohort_csv(cohort.subjects, config.out / "cohort.csv");

    std::string truth = "subject_id,generator_class\n";
    for (std::size_t i = 0; i < cohort.subjects.size(); ++i)
        truth += cohort.subjects[i].id + "," + std::to_string(cohort.generator_class[i]) + "\n";
    write_text_file(config.out / "generator_truth.csv", truth);

    for (const VolumePlan& plan : cohort.volumes) {
        Rng vol_rng(plan.seed);
        Volume v = render_synthetic_brain(plan.atrophy, config.acquisition_dims[0],
                                          config.acquisition_dims[1], config.acquisition_dims[2],
                                          vol_rng);
        write_volume(v, config.out / "volumes" / (plan.ref + ".rvol"));
    }
}

LabelingResult run_label(const std::filesystem::path& out_dir) {
    auto csv = out_dir / "cohort.csv";
    std::vector<Subject> subjects = read_cohort_csv(csv);
    LabelingResult result = label_subjects(subjects);
    write_cohort_csv(subjects, csv);
    return result;
}

CohortData load_cohort(const std::filesystem::path& out_dir) {
    auto csv = out_dir / "cohort.csv";
    CohortData data;
    data.fingerprint = hash_string(read_text_file(csv));
    data.subjects = read_cohort_csv(csv);
    data.volume_dir = out_dir / "volumes";
    return data;
}

Experiment run_train(const RunConfig& config, const CohortData& cohort) {
    config.validate();
    if (config.out.empty()) throw config_error("train: output directory not set");
    Prepared prep = prepare(config, cohort);

    std::size_t n = prep.subjects.size();
    auto n_test = static_cast<std::size_t>(std::llround(config.test_fraction *
                                                        static_cast<double>(n)));
    if (n_test == 0 || n_test >= n)
        throw data_error("cohort of " + std::to_string(n) +
                         " leaves no usable train/test partition");
    if (n - n_test < config.folds)
        throw data_error("cohort too small for " + std::to_string(config.folds) + " folds");

    Rng split_rng = Rng(config.seed).child("split");
    CohortSplit split = stratified_split(prep.subjects, n_test, config.folds, split_rng);

    std::unordered_set<std::string> test_ids(split.test.begin(), split.test.end());
    std::vector<const Subject*> test_subjects;
    for (const std::string& id : split.test) test_subjects.push_back(&resolve(prep, id));

    std::vector<std::vector<const Subject*>> fold_members(config.folds);
    for (std::size_t k = 0; k < config.folds; ++k)
        for (const std::string& id : split.train_folds[k])
            fold_members[k].push_back(&resolve(prep, id));

    // Folds share nothing: each worker owns its model, rng streams and stats.
    std::vector<std::optional<FoldOutcome>> slots(config.folds);
    std::vector<std::exception_ptr> errors(config.folds);
    std::vector<std::thread> workers;
    for (std::size_t k = 0; k < config.folds; ++k) {
        workers.emplace_back([&, k] {
            try {
                std::vector<const Subject*> train_set;
                for (std::size_t j = 0; j < config.folds; ++j) {
                    if (j == k) continue;
                    train_set.insert(train_set.end(), fold_members[j].begin(),
                                     fold_members[j].end());
                }
                slots[k] = train_fold(config, k, train_set, fold_members[k], prep, test_ids);
            } catch (...) {
                errors[k] = std::current_exception();
            }
        });
    }
    for (auto& w : workers) w.join();
    for (std::size_t k = 0; k < config.folds; ++k)
        if (errors[k]) std::rethrow_exception(errors[k]);

    Experiment exp;
    exp.config = config;
    exp.split = std::move(split);
    for (auto& slot : slots) exp.folds.push_back(std::move(*slot));
    exp.cohort_fingerprint = cohort.fingerprint;

    std::filesystem::create_directories(config.out / "checkpoints");
    write_split_json(config.out / "split.json", exp.split);
    for (std::size_t k = 0; k < exp.folds.size(); ++k)
        save_checkpoint(exp.folds[k].model,
                        config.out / "checkpoints" / checkpoint_name(config.variant, k));

    exp.na_levels = {0.0};
    exp.evaluations.push_back(evaluate_test(config, exp.folds, test_subjects, prep, 0.0,
                                            Rng(config.seed).child("sweep")));
    return exp;
}

void run_na_sweep(Experiment& experiment, const CohortData& cohort,
                  const std::vector<double>& fractions) {
    if (fractions.empty()) throw config_error("sweep: no fractions given");
    for (double f : fractions)
        if (!(f >= 0.0 && f <= 1.0))
            throw config_error("sweep: fraction " + std::to_string(f) + " outside [0, 1]");
    if (experiment.cohort_fingerprint != cohort.fingerprint)
        throw data_error("sweep: cohort changed since the experiment was trained");

    Prepared prep = prepare(experiment.config, cohort);
    std::vector<const Subject*> test_subjects;
    for (const std::string& id : experiment.split.test)
        test_subjects.push_back(&resolve(prep, id));

    experiment.na_levels.clear();
    experiment.evaluations.clear();
    const Rng sweep_rng = Rng(experiment.config.seed).child("sweep");
    for (double f : fractions) {
        experiment.na_levels.push_back(f);
        experiment.evaluations.push_back(
            evaluate_test(experiment.config, experiment.folds, test_subjects, prep, f, sweep_rng));
    }
}

Experiment load_experiment(const std::filesystem::path& out_dir, const CohortData& cohort) {
    json j = parse_json(read_text_file(out_dir / "experiment.json"),
                        "experiment file " + (out_dir / "experiment.json").string());
    Experiment exp;
    try {
        exp.config = run_config_from_json_obj(j.at("config"));
        exp.cohort_fingerprint =
            std::stoull(j.at("cohort_fingerprint").get<std::string>(), nullptr, 16);
    } catch (const Error&) {
        throw;
    } catch (const std::exception& e) {
        throw data_error("experiment file " + out_dir.string() + ": " + e.what());
    }
    exp.config.out = out_dir;
    if (exp.cohort_fingerprint != cohort.fingerprint)
        throw data_error("cohort.csv changed since the experiment in " + out_dir.string() +
                         " was trained");
    exp.split = read_split_json(out_dir / "split.json");
    if (exp.split.train_folds.size() != exp.config.folds)
        throw data_error("split.json fold count does not match the experiment config");

    Prepared prep;
    for (const Subject& s : cohort.subjects)
        if (!s.label) throw data_error("unlabeled cohort: subject " + s.id);
    prep.subjects = eligibility_filter(cohort.subjects);
    for (const Subject& s : prep.subjects) prep.by_id.emplace(s.id, &s);

    json folds_meta = j.value("folds", json::array());
    for (std::size_t k = 0; k < exp.config.folds; ++k) {
        Model model = load_checkpoint(out_dir / "checkpoints" /
                                      checkpoint_name(exp.config.variant, k));
        if (model.kind() != model_kind_for(exp.config.variant))
            throw data_error("checkpoint for fold " + std::to_string(k) +
                             " holds a different model kind than the experiment config");
        std::vector<Subject> train_set;
        for (std::size_t m = 0; m < exp.config.folds; ++m) {
            if (m == k) continue;
            for (const std::string& id : exp.split.train_folds[m])
                train_set.push_back(resolve(prep, id));
        }
        FoldOutcome outcome{std::move(model), compute_normalization(train_set), 0.0, 0};
        if (k < folds_meta.size()) {
            outcome.val_auc = folds_meta[k].value("val_auc", 0.0);
            outcome.best_epoch = folds_meta[k].value("best_epoch", std::size_t{0});
        }
        exp.folds.push_back(std::move(outcome));
    }
    return exp;
}

void write_experiment_outputs(const Experiment& experiment) {
    const auto& out = experiment.config.out;
    if (out.empty()) throw config_error("experiment output directory not set");
    std::filesystem::create_directories(out);
    write_text_file(out / "metrics.csv", metrics_csv(experiment));
    for (const Evaluation& ev : experiment.evaluations)
        write_text_file(out / roc_csv_name(ev.report.model_name, ev.report.na_fraction),
                        roc_csv(ev.report.roc));
    write_text_file(out / "experiment.json", experiment_to_json(experiment).dump(2) + "\n");
}

void run_report(const std::vector<std::filesystem::path>& experiment_dirs,
                const std::filesystem::path& out_dir) {
    if (experiment_dirs.empty()) throw config_error("report: no experiment directories given");

    struct Entry {
        std::filesystem::path dir;
        std::string model;
        std::string fingerprint;
        json evaluations;
    };
    std::vector<Entry> entries;
    for (const auto& dir : experiment_dirs) {
        json j = parse_json(read_text_file(dir / "experiment.json"),
                            "experiment file " + (dir / "experiment.json").string());
        Entry e;
        e.dir = dir;
        try {
            const json& cfg = j.at("config");
            std::string model = cfg.at("model").get<std::string>();
            e.model = cfg.value("train_na_mask", false) ? "multim" : model;
            e.fingerprint = j.at("cohort_fingerprint").get<std::string>();
            e.evaluations = j.value("evaluations", json::array());
        } catch (const std::exception& ex) {
            throw data_error("experiment file " + dir.string() + ": " + ex.what());
        }
        entries.push_back(std::move(e));
    }
    for (const Entry& e : entries)
        if (e.fingerprint != entries.front().fingerprint)
            throw data_error("experiments in " + entries.front().dir.string() + " and " +
                             e.dir.string() + " were trained on different cohorts");

    std::filesystem::create_directories(out_dir);

    std::string combined = "model,na_fraction,accuracy,precision,recall,f1,auc\n";
    for (const Entry& e : entries) {
        for (const json& ev : e.evaluations) {
            combined += e.model + "," + fmt_fraction(ev.at("na").get<double>()) + "," +
                        fmt_metric(ev.at("accuracy").get<double>()) + "," +
                        fmt_metric(ev.at("precision").get<double>()) + "," +
                        fmt_metric(ev.at("recall").get<double>()) + "," +
                        fmt_metric(ev.at("f1").get<double>()) + "," +
                        fmt_metric(ev.at("auc").get<double>()) + "\n";
        }
    }
    write_text_file(out_dir / "metrics.csv", combined);

    if (entries.size() >= 2) {
        std::string kw = "model_a,model_b,na_fraction,h,p\n";
        for (std::size_t a = 0; a < entries.size(); ++a) {
            for (std::size_t b = a + 1; b < entries.size(); ++b) {
                for (const json& ea : entries[a].evaluations) {
                    double na = ea.at("na").get<double>();
                    const json* eb = nullptr;
                    for (const json& cand : entries[b].evaluations)
                        if (cand.at("na").get<double>() == na) eb = &cand;
                    if (eb == nullptr) continue;
                    auto ga = ea.at("fold_aucs").get<std::vector<double>>();
                    auto gb = eb->at("fold_aucs").get<std::vector<double>>();
                    double h = 0.0, p = 1.0;
                    try {
                        KruskalWallisResult r = kruskal_wallis({ga, gb});
                        h = r.h;
                        p = r.p;
                    } catch (const Error&) {
                        // every observation tied across both groups: no rank
                        // information, report no evidence of a difference
                    }
                    kw += entries[a].model + "," + entries[b].model + "," + fmt_fraction(na) +
                          "," + fmt_metric(h) + "," + fmt_metric(p) + "\n";
                }
            }
        }
        write_text_file(out_dir / "kw.csv", kw);
    }

    std::vector<std::pair<std::string, std::vector<RocPoint>>> curves;
    for (const Entry& e : entries)
        curves.emplace_back(e.model, read_roc_csv(e.dir / roc_csv_name(e.model, 0.0)));
    write_text_file(out_dir / "roc.svg", render_roc_svg(curves));
}

}  // namespace msnn
