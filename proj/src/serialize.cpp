#include "pdwols/serialize.hpp"

#include "pdwols/csv.hpp"
#include "pdwols/errors.hpp"
#include "pdwols/toml_subset.hpp"

#include <fstream>

namespace pdwols {

namespace {

ordered_json vec_to_json(const Eigen::VectorXd& v) {
    ordered_json arr = ordered_json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v(i));
    return arr;
}

Eigen::VectorXd vec_from_json(const ordered_json& arr) {
    Eigen::VectorXd v(static_cast<Eigen::Index>(arr.size()));
    for (std::size_t i = 0; i < arr.size(); ++i) v(static_cast<Eigen::Index>(i)) = arr[i].get<double>();
    return v;
}

ordered_json labels_of(const std::vector<Term>& terms) {
    ordered_json arr = ordered_json::array();
    for (const Term& t : terms) arr.push_back(t.label());
    return arr;
}

std::vector<Term> terms_from_json(const ordered_json& arr) {
    std::vector<std::string> labels;
    for (const auto& item : arr) labels.push_back(item.get<std::string>());
    return parse_terms(labels);
}

ordered_json coef_table(const LinearModelCoefs& coefs, const std::vector<Term>& main_terms,
                        const std::vector<Term>& blip_terms) {
    ordered_json j;
    j["intercept"] = coefs.intercept;
    j["treatment"] = coefs.psi0;
    ordered_json main = ordered_json::array();
    for (std::size_t k = 0; k < main_terms.size(); ++k)
        main.push_back({{"term", main_terms[k].label()},
                        {"estimate", coefs.beta(static_cast<Eigen::Index>(k))}});
    j["main"] = main;
    ordered_json inter = ordered_json::array();
    for (std::size_t k = 0; k < blip_terms.size(); ++k)
        inter.push_back({{"term", "A:" + blip_terms[k].label()},
                         {"estimate", coefs.psi(static_cast<Eigen::Index>(k))}});
    j["interaction"] = inter;
    return j;
}

}  // namespace

ordered_json cv_result_to_json(const CvResult& cv) {
    ordered_json j;
    j["lambda_min"] = cv.lambda_min;
    j["lambda_min_index"] = cv.lambda_min_index;
    j["lambdas"] = vec_to_json(cv.lambdas);
    j["cv_mean"] = vec_to_json(cv.cv_mean);
    j["cv_se"] = vec_to_json(cv.cv_se);
    return j;
}

ordered_json stage_fit_to_json(const StageFit& fit) {
    const std::vector<Term>& main_terms = fit.model.tf.terms;
    const std::vector<Term>& blip_terms = fit.model.blip.terms;
    ordered_json j;
    j["mode"] = fit.fit.mode == PenaltyMode::heredity ? "heredity" : "plain";
    j["lambda"] = fit.lambda;
    j["refitted"] = fit.refitted;
    j["coefficients"] = coef_table(fit.reported, main_terms, blip_terms);
    if (fit.refitted) j["penalized_coefficients"] = coef_table(fit.penalized, main_terms, blip_terms);
    ordered_json factors;
    factors["psi0"] = fit.factors.psi0;
    factors["main"] = vec_to_json(fit.factors.main);
    factors["interaction"] = vec_to_json(fit.factors.interaction);
    j["penalty_factors"] = factors;
    ordered_json solver;
    solver["psi0"] = fit.fit.psi0;
    solver["beta"] = vec_to_json(fit.fit.beta);
    if (fit.fit.mode == PenaltyMode::heredity) solver["tau"] = vec_to_json(fit.fit.tau);
    solver["psi"] = vec_to_json(fit.fit.psi);
    solver["objective"] = fit.fit.objective;
    solver["iterations"] = fit.fit.iterations;
    solver["converged"] = fit.fit.converged;
    solver["kkt_violation"] = fit.fit.kkt_violation;
    j["solver"] = solver;
    ordered_json scaling;
    scaling["standardized"] = fit.fit.scaling.standardized;
    scaling["y_mean"] = fit.fit.scaling.y_mean;
    scaling["a_mean"] = fit.fit.scaling.a_mean;
    scaling["a_scale"] = fit.fit.scaling.a_scale;
    scaling["main_means"] = vec_to_json(fit.fit.scaling.main_means);
    scaling["main_scales"] = vec_to_json(fit.fit.scaling.main_scales);
    scaling["inter_means"] = vec_to_json(fit.fit.scaling.inter_means);
    scaling["inter_scales"] = vec_to_json(fit.fit.scaling.inter_scales);
    j["scaling"] = scaling;
    j["weights"] = {{"source", weight_source_name(fit.weights.source)},
                    {"sum", fit.weights.w.sum()}};
    if (fit.propensity) {
        ordered_json prop;
        prop["coefficients"] = vec_to_json(fit.propensity->coefficients);
        prop["terms"] = labels_of(fit.propensity->terms);
        prop["converged"] = fit.propensity->converged;
        prop["separation"] = fit.propensity->separation;
        prop["iterations"] = fit.propensity->iterations;
        j["propensity"] = prop;
    }
    if (!fit.refit_dropped.empty()) j["refit_dropped"] = fit.refit_dropped;
    if (fit.cv) j["cv"] = cv_result_to_json(*fit.cv);
    return j;
}

ordered_json regime_to_json(const Regime& regime) {
    ordered_json j;
    ordered_json stages = ordered_json::array();
    for (std::size_t k = 0; k < regime.stages.size(); ++k) {
        const StageModel& s = regime.stages[k];
        ordered_json stage;
        stage["stage"] = k + 1;
        stage["blip"] = {{"psi0", s.blip.psi0},
                         {"terms", labels_of(s.blip.terms)},
                         {"psi", vec_to_json(s.blip.psi)}};
        stage["treatment_free"] = {{"intercept", s.tf.intercept},
                                   {"terms", labels_of(s.tf.terms)},
                                   {"beta", vec_to_json(s.tf.beta)}};
        stages.push_back(stage);
    }
    j["stages"] = stages;
    j["estimator"] = {{"method", regime.estimator_tag.method},
                      {"refit", regime.estimator_tag.refit},
                      {"adaptive", regime.estimator_tag.adaptive},
                      {"alpha", regime.estimator_tag.alpha},
                      {"stage_lambdas", regime.estimator_tag.stage_lambdas}};
    return j;
}

Regime regime_from_json(const ordered_json& j) {
    Regime regime;
    for (const auto& stage : j.at("stages")) {
        StageModel s;
        const auto& blip = stage.at("blip");
        s.blip.psi0 = blip.at("psi0").get<double>();
        s.blip.terms = terms_from_json(blip.at("terms"));
        s.blip.psi = vec_from_json(blip.at("psi"));
        if (s.blip.psi.size() != static_cast<Eigen::Index>(s.blip.terms.size()))
            throw ParseError("regime: blip coefficient count does not match terms");
        const auto& tf = stage.at("treatment_free");
        s.tf.intercept = tf.at("intercept").get<double>();
        s.tf.terms = terms_from_json(tf.at("terms"));
        s.tf.beta = vec_from_json(tf.at("beta"));
        regime.stages.push_back(std::move(s));
    }
    if (j.contains("estimator")) {
        const auto& e = j.at("estimator");
        regime.estimator_tag.method = e.value("method", std::string("unknown"));
        regime.estimator_tag.refit = e.value("refit", false);
        regime.estimator_tag.adaptive = e.value("adaptive", false);
        regime.estimator_tag.alpha = e.value("alpha", 0.5);
        if (e.contains("stage_lambdas"))
            for (const auto& v : e.at("stage_lambdas"))
                regime.estimator_tag.stage_lambdas.push_back(v.get<double>());
    }
    if (regime.stages.empty()) throw ParseError("regime: no stages");
    return regime;
}

ordered_json scenario_config_to_json(const ScenarioConfig& config) {
    ordered_json j;
    j["generator"] = generator_name(config.generator);
    if (config.generator == GeneratorKind::one_stage) j["scenario"] = config.scenario;
    j["n"] = config.n;
    j["p"] = config.p;
    j["reps"] = config.reps;
    j["n_test"] = config.n_test;
    j["base_seed"] = config.base_seed;
    ordered_json methods = ordered_json::array();
    for (const auto& m : config.methods) methods.push_back(m.label());
    j["methods"] = methods;
    j["alpha"] = config.alpha;
    j["adaptive"] = config.adaptive;
    j["cv_folds"] = config.cv_folds;
    j["n_lambda"] = config.n_lambda;
    // jobs is an execution detail: reports stay identical across job counts
    return j;
}

ScenarioConfig scenario_config_from_json(const ordered_json& j) {
    ScenarioConfig config;
    config.generator = generator_from_name(j.at("generator").get<std::string>());
    switch (config.generator) {
        case GeneratorKind::one_stage: config.n = 500; config.p = 10; break;
        case GeneratorKind::high_dim: config.n = 200; config.p = 400; break;
        case GeneratorKind::two_stage_s1: config.n = 1000; config.p = 10; break;
    }
    if (j.contains("scenario")) config.scenario = j.at("scenario").get<int>();
    if (j.contains("n")) config.n = j.at("n").get<int>();
    if (j.contains("p")) config.p = j.at("p").get<int>();
    if (config.generator == GeneratorKind::two_stage_s1 && config.p != 10)
        throw ConfigError("two_stage_s1 generator is fixed at p = 10");
    if (j.contains("reps")) config.reps = j.at("reps").get<int>();
    if (j.contains("n_test")) config.n_test = j.at("n_test").get<int>();
    if (j.contains("base_seed")) config.base_seed = j.at("base_seed").get<std::uint64_t>();
    if (j.contains("methods")) {
        for (const auto& m : j.at("methods"))
            config.methods.push_back(method_variant_from_label(m.get<std::string>()));
    } else {
        config.methods = {MethodVariant{Method::pdwols, false}, MethodVariant{Method::pdwols, true},
                          MethodVariant{Method::qlasso, false}, MethodVariant{Method::qlasso, true}};
    }
    if (j.contains("alpha")) config.alpha = j.at("alpha").get<double>();
    if (j.contains("adaptive")) config.adaptive = j.at("adaptive").get<bool>();
    if (j.contains("cv_folds")) config.cv_folds = j.at("cv_folds").get<int>();
    if (j.contains("n_lambda")) config.n_lambda = j.at("n_lambda").get<int>();
    if (j.contains("jobs")) config.jobs = j.at("jobs").get<int>();
    config.validate();
    return config;
}

AnalysisSpec analysis_spec_from_json(const ordered_json& j) {
    AnalysisSpec spec;
    if (!j.contains("treatment_free") || !j.contains("blip"))
        throw ConfigError("model spec: needs 'treatment_free' and 'blip' term lists");
    spec.model.treatment_free_terms = terms_from_json(j.at("treatment_free"));
    spec.model.blip_terms = terms_from_json(j.at("blip"));
    if (j.contains("penalize_psi0")) spec.model.penalize_psi0 = j.at("penalize_psi0").get<bool>();
    if (j.contains("propensity")) spec.propensity_terms = terms_from_json(j.at("propensity"));
    return spec;
}

ordered_json load_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open file '" + path + "'");
    try {
        return ordered_json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError("file '" + path + "': " + e.what());
    }
}

ordered_json load_config_file(const std::string& path) {
    if (path.size() > 5 && path.substr(path.size() - 5) == ".json") return load_json_file(path);
    if (path.size() > 5 && path.substr(path.size() - 5) == ".toml") return load_toml_file(path);
    // sniff: JSON starts with '{'
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open file '" + path + "'");
    char c = 0;
    in >> c;
    if (c == '{') return load_json_file(path);
    return load_toml_file(path);
}

void write_json_file(const std::string& path, const ordered_json& j) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write file '" + path + "'");
    out << j.dump(2) << "\n";
}

std::uint64_t fnv1a64_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open file '" + path + "'");
    std::uint64_t h = 1469598103934665603ULL;
    char buf[4096];
    while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
        for (std::streamsize i = 0; i < in.gcount(); ++i) {
            h ^= static_cast<unsigned char>(buf[i]);
            h *= 1099511628211ULL;
        }
        if (!in) break;
    }
    return h;
}

ordered_json metrics_report_to_json(const MetricsReport& report) {
    ordered_json j;
    j["config"] = scenario_config_to_json(report.config);
    ordered_json methods = ordered_json::array();
    for (const MethodReport& mr : report.methods) {
        ordered_json m;
        m["method"] = mr.label;
        ordered_json stages = ordered_json::array();
        for (std::size_t k = 0; k < mr.selection_rate.size(); ++k) {
            ordered_json stage;
            stage["stage"] = k + 1;
            ordered_json rates;
            for (const std::string& term : mr.blip_terms[k]) {
                auto it = mr.selection_rate[k].find(term);
                rates[term] = it == mr.selection_rate[k].end() ? 0.0 : it->second;
            }
            stage["selection_rate"] = rates;
            stage["error_rate"] = mr.stage_error_rate[k];
            stages.push_back(stage);
        }
        m["stages"] = stages;
        m["fp_rate"] = mr.fp_rate;
        m["fn_rate"] = mr.fn_rate;
        m["total_error_rate"] = mr.total_error_rate;
        m["value"] = mr.value;
        m["n_failed"] = mr.n_failed;
        if (mr.n_failed > 0) {
            ordered_json failures = ordered_json::array();
            for (const auto& rec : mr.reps)
                if (!rec.ok) failures.push_back({{"rep", rec.rep}, {"error", rec.error}});
            m["failures"] = failures;
        }
        methods.push_back(m);
    }
    j["methods"] = methods;
    return j;
}

void write_report_csvs(const MetricsReport& report, const std::string& out_dir) {
    {  // one row per replicate x method
        std::vector<std::string> header = {"method", "rep", "seed", "ok", "total_error", "value"};
        int max_stages = 0;
        for (const auto& mr : report.methods)
            max_stages = std::max(max_stages, static_cast<int>(mr.blip_terms.size()));
        for (int k = 1; k <= max_stages; ++k) header.push_back("error_stage" + std::to_string(k));
        std::vector<std::vector<std::string>> rows;
        for (const auto& mr : report.methods) {
            for (const auto& rec : mr.reps) {
                std::vector<std::string> row = {mr.label, std::to_string(rec.rep),
                                                std::to_string(rec.seed), rec.ok ? "1" : "0",
                                                format_double(rec.total_error), format_double(rec.value)};
                for (int k = 0; k < max_stages; ++k)
                    row.push_back(rec.ok && k < static_cast<int>(rec.stage_error.size())
                                      ? format_double(rec.stage_error[static_cast<std::size_t>(k)])
                                      : "");
                rows.push_back(std::move(row));
            }
        }
        write_csv(out_dir + "/replicates.csv", header, rows);
    }
    {  // one row per term x method
        std::vector<std::string> header = {"method", "stage", "term", "selection_rate"};
        std::vector<std::vector<std::string>> rows;
        for (const auto& mr : report.methods)
            for (std::size_t k = 0; k < mr.selection_rate.size(); ++k)
                for (const std::string& term : mr.blip_terms[k]) {
                    auto it = mr.selection_rate[k].find(term);
                    double rate = it == mr.selection_rate[k].end() ? 0.0 : it->second;
                    rows.push_back({mr.label, std::to_string(k + 1), term, format_double(rate)});
                }
        write_csv(out_dir + "/selection.csv", header, rows);
    }
    {  // long format blip estimates: the data behind the estimate distributions
        std::vector<std::string> header = {"method", "rep", "stage", "term", "estimate", "selected"};
        std::vector<std::vector<std::string>> rows;
        for (const auto& mr : report.methods)
            for (const auto& rec : mr.reps) {
                if (!rec.ok) continue;
                for (std::size_t k = 0; k < rec.psi.size(); ++k) {
                    rows.push_back({mr.label, std::to_string(rec.rep), std::to_string(k + 1), "A",
                                    format_double(rec.psi0[k]), "1"});
                    for (std::size_t t = 0; t < rec.psi[k].size(); ++t)
                        rows.push_back({mr.label, std::to_string(rec.rep), std::to_string(k + 1),
                                        mr.blip_terms[k][t], format_double(rec.psi[k][t]),
                                        rec.selected[k][t] ? "1" : "0"});
                }
            }
        write_csv(out_dir + "/blips.csv", header, rows);
    }
}

}  // namespace pdwols
