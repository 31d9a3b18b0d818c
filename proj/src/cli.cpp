#include "pdwols/cli.hpp"

#include "pdwols/csv.hpp"
#include "pdwols/errors.hpp"
#include "pdwols/serialize.hpp"
#include "pdwols/version.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <sstream>

namespace pdwols {

namespace {

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

std::string hex64(std::uint64_t v) {
    std::ostringstream os;
    os << std::hex << v;
    return os.str();
}

struct Manifest {
    std::string command;
    std::vector<std::string> argv;
    ordered_json config = ordered_json::object();
    std::vector<std::string> inputs;
    std::vector<std::string> outputs;
    Clock::time_point started = Clock::now();

    void write(const std::string& out_dir) const {
        ordered_json j;
        j["command"] = command;
        j["argv"] = argv;
        j["version"] = kVersion;
        j["config"] = config;
        ordered_json ins = ordered_json::array();
        for (const auto& path : inputs)
            ins.push_back({{"path", path}, {"fnv1a64", hex64(fnv1a64_file(path))}});
        j["inputs"] = ins;
        j["outputs"] = outputs;
        j["duration_ms"] = std::chrono::duration_cast<std::chrono::milliseconds>(
                               Clock::now() - started).count();
        write_json_file(out_dir + "/manifest.json", j);
    }
};

void ensure_out_dir(const std::string& out_dir) {
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw ConfigError("cannot create output directory '" + out_dir + "'");
}

struct CommonFitFlags {
    std::string mode = "pdwols";
    std::string weights = "estimate";
    double alpha = 0.5;
    double lambda = -1.0;  // < 0: cross-validate
    int cv_folds = 4;
    int n_lambda = 100;
    bool one_se = false;
    bool adaptive = false;
    bool refit = false;
    std::uint64_t seed = 0;

    void add_to(CLI::App* cmd) {
        cmd->add_option("--mode", mode, "Estimator: pdwols (heredity) or qlasso (plain lasso)")
            ->check(CLI::IsMember({"pdwols", "qlasso"}));
        cmd->add_option("--weights", weights,
                        "Balancing weights: estimate, ones, null, or file:<path>");
        cmd->add_option("--alpha", alpha, "Main/interaction penalty split, in (0,1)");
        cmd->add_option("--lambda", lambda, "Fixed penalty level (skips cross-validation)");
        cmd->add_option("--cv", cv_folds, "Cross-validation folds");
        cmd->add_option("--n-lambda", n_lambda, "Lambda grid size");
        cmd->add_flag("--one-se", one_se, "Pick the largest lambda within one SE of the minimum");
        cmd->add_flag("--adaptive", adaptive, "Adaptive (pilot-based) penalty factors");
        cmd->add_flag("--refit", refit, "Unpenalized refit on the selected support");
        cmd->add_option("--seed", seed, "Seed for fold assignment");
    }

    FitOptions to_options(const AnalysisSpec& spec, const std::string& data_dir) const {
        FitOptions opts;
        opts.method = mode == "pdwols" ? Method::pdwols : Method::qlasso;
        opts.refit = refit;
        opts.adaptive = adaptive;
        opts.alpha = alpha;
        if (lambda >= 0) opts.lambda = lambda;
        opts.cv_folds = cv_folds;
        opts.n_lambda = n_lambda;
        opts.one_se = one_se;
        opts.seed = seed;
        opts.propensity_terms = spec.propensity_terms;
        if (weights == "estimate") {
            opts.weights = WeightChoice::estimate;
        } else if (weights == "ones") {
            opts.weights = WeightChoice::all_ones;
        } else if (weights == "null") {
            opts.weights = WeightChoice::null_model;
        } else if (weights.rfind("file:", 0) == 0) {
            opts.weights = WeightChoice::user_supplied;
            std::string path = weights.substr(5);
            if (!path.empty() && path[0] != '/' && !data_dir.empty()) path = data_dir + "/" + path;
            CsvTable t = read_csv(path);
            int wc = t.col("w");
            if (wc < 0) throw ConfigError("weights file '" + path + "': missing column 'w'");
            opts.user_weights.resize(static_cast<Eigen::Index>(t.n_rows()));
            for (std::size_t i = 0; i < t.n_rows(); ++i)
                opts.user_weights(static_cast<Eigen::Index>(i)) = parse_double(
                    t.rows[i][static_cast<std::size_t>(wc)],
                    "weights file row " + std::to_string(i + 2));
        } else {
            throw ConfigError("unknown --weights choice '" + weights + "'");
        }
        return opts;
    }

    ordered_json echo() const {
        ordered_json j;
        j["mode"] = mode;
        j["weights"] = weights;
        j["alpha"] = alpha;
        if (lambda >= 0) j["lambda"] = lambda;
        j["cv_folds"] = cv_folds;
        j["n_lambda"] = n_lambda;
        j["one_se"] = one_se;
        j["adaptive"] = adaptive;
        j["refit"] = refit;
        j["seed"] = seed;
        return j;
    }
};

std::vector<AnalysisSpec> load_specs(const std::string& path, int n_stages) {
    ordered_json j = load_json_file(path);
    std::vector<AnalysisSpec> specs;
    if (j.is_array()) {
        for (const auto& item : j) specs.push_back(analysis_spec_from_json(item));
    } else {
        specs.push_back(analysis_spec_from_json(j));
    }
    if (static_cast<int>(specs.size()) == 1 && n_stages > 1)
        specs.resize(static_cast<std::size_t>(n_stages), specs[0]);
    if (static_cast<int>(specs.size()) != n_stages)
        throw ConfigError("spec file '" + path + "': " + std::to_string(specs.size()) +
                          " model specs for " + std::to_string(n_stages) + " stages");
    return specs;
}

void write_coefficient_csv(const std::string& path, const StageFit& fit) {
    std::vector<std::string> header = {"term", "estimate", "selected"};
    std::vector<std::vector<std::string>> rows;
    rows.push_back({"(intercept)", format_double(fit.reported.intercept), "1"});
    rows.push_back({"A", format_double(fit.reported.psi0), fit.support.psi0 ? "1" : "0"});
    for (std::size_t j = 0; j < fit.model.tf.terms.size(); ++j) {
        bool sel = std::find(fit.support.main.begin(), fit.support.main.end(), static_cast<int>(j)) !=
                   fit.support.main.end();
        rows.push_back({fit.model.tf.terms[j].label(),
                        format_double(fit.reported.beta(static_cast<Eigen::Index>(j))), sel ? "1" : "0"});
    }
    for (std::size_t l = 0; l < fit.model.blip.terms.size(); ++l) {
        bool sel = std::find(fit.support.inter.begin(), fit.support.inter.end(), static_cast<int>(l)) !=
                   fit.support.inter.end();
        rows.push_back({"A:" + fit.model.blip.terms[l].label(),
                        format_double(fit.reported.psi(static_cast<Eigen::Index>(l))), sel ? "1" : "0"});
    }
    write_csv(path, header, rows);
}

void write_cv_csv(const std::string& path, const CvResult& cv) {
    std::vector<std::string> header = {"lambda", "cv_mean", "cv_se"};
    std::vector<std::vector<std::string>> rows;
    for (Eigen::Index i = 0; i < cv.lambdas.size(); ++i)
        rows.push_back({format_double(cv.lambdas(i)), format_double(cv.cv_mean(i)),
                        format_double(cv.cv_se(i))});
    write_csv(path, header, rows);
}

// covariate-only reader used by `decide`: y/a/stage/id columns are ignored
StageDataset read_covariates_csv(const std::string& path) {
    CsvTable table = read_csv(path);
    StageDataset data;
    std::vector<int> cols;
    for (std::size_t j = 0; j < table.header.size(); ++j) {
        const std::string& name = table.header[j];
        if (name == "y" || name == "a" || name == "stage" || name == "id") continue;
        cols.push_back(static_cast<int>(j));
        data.column_names.push_back(name);
    }
    const Eigen::Index n = static_cast<Eigen::Index>(table.n_rows());
    if (n == 0) throw ParseError("file '" + path + "': no data rows");
    data.X.resize(n, static_cast<Eigen::Index>(cols.size()));
    data.a = Eigen::VectorXd::Zero(n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (std::size_t k = 0; k < cols.size(); ++k)
            data.X(i, static_cast<Eigen::Index>(k)) = parse_double(
                table.rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(cols[k])],
                "file '" + path + "' row " + std::to_string(i + 2) + " column '" +
                    data.column_names[k] + "'");
    return data;
}

void write_decisions_csv(const std::string& path, const Regime& regime,
                         const std::vector<StageDataset>& stages) {
    std::vector<std::string> header = {"patient"};
    for (std::size_t k = 1; k <= regime.stages.size(); ++k) {
        header.push_back("blip_stage" + std::to_string(k));
        header.push_back("action_stage" + std::to_string(k));
    }
    const Eigen::Index n = stages[0].n();
    std::vector<Eigen::VectorXd> contrasts, actions;
    for (std::size_t k = 0; k < regime.stages.size(); ++k) {
        contrasts.push_back(
            regime.stages[k].blip.contrast(stages[k].X, stages[k].column_names));
        actions.push_back((contrasts.back().array() > 0.0).cast<double>());
    }
    std::vector<std::vector<std::string>> rows;
    for (Eigen::Index i = 0; i < n; ++i) {
        std::vector<std::string> row = {std::to_string(i + 1)};
        for (std::size_t k = 0; k < regime.stages.size(); ++k) {
            row.push_back(format_double(contrasts[k](i)));
            row.push_back(actions[k](i) > 0 ? "1" : "0");
        }
        rows.push_back(std::move(row));
    }
    write_csv(path, header, rows);
}

std::string dir_of(const std::string& path) {
    fs::path p(path);
    return p.has_parent_path() ? p.parent_path().string() : std::string();
}

int default_jobs() {
    if (const char* env = std::getenv("PDWOLS_JOBS")) {
        int j = std::atoi(env);
        if (j >= 1) return j;
    }
    return 1;
}

// --- commands ---------------------------------------------------------------

int cmd_fit(const std::string& data_path, const std::string& spec_path, const std::string& out_dir,
            const CommonFitFlags& flags, Manifest& manifest) {
    StageDataset data = read_stage_csv(data_path, true);
    if (!data.treatment_note.empty()) std::cerr << "note: " << data.treatment_note << "\n";
    AnalysisSpec spec = load_specs(spec_path, 1)[0];
    FitOptions opts = flags.to_options(spec, dir_of(data_path));
    StageFit fit = fit_stage(data, spec.model, opts);

    ensure_out_dir(out_dir);
    write_json_file(out_dir + "/fit.json", stage_fit_to_json(fit));
    write_coefficient_csv(out_dir + "/coefficients.csv", fit);
    manifest.outputs = {"fit.json", "coefficients.csv"};
    if (fit.cv) {
        write_cv_csv(out_dir + "/cv.csv", *fit.cv);
        manifest.outputs.push_back("cv.csv");
    }
    manifest.config = flags.echo();
    manifest.config["data"] = data_path;
    manifest.config["spec"] = spec_path;
    manifest.inputs = {data_path, spec_path};
    manifest.write(out_dir);
    std::cout << "fit: lambda " << fit.lambda << ", "
              << fit.support.inter.size() << " interaction(s) selected, wrote " << out_dir << "\n";
    return 0;
}

int cmd_dtr(const std::vector<std::string>& data_paths, const std::string& long_path,
            const std::string& spec_path, const std::string& out_dir, const CommonFitFlags& flags,
            int augment_d, std::uint64_t noise_seed, Manifest& manifest) {
    TrialData trial;
    std::vector<std::string> inputs;
    if (!long_path.empty()) {
        trial = read_trial_long_csv(long_path);
        inputs.push_back(long_path);
    } else {
        if (data_paths.empty()) throw ConfigError("dtr: no data files given");
        trial = read_trial_csv(data_paths);
        inputs = data_paths;
    }
    for (const auto& stage : trial.stages)
        if (!stage.treatment_note.empty()) std::cerr << "note: " << stage.treatment_note << "\n";
    if (augment_d > 0) trial = augment_noise(trial, augment_d, noise_seed);

    std::vector<AnalysisSpec> specs = load_specs(spec_path, trial.n_stages());
    inputs.push_back(spec_path);
    FitOptions opts = flags.to_options(specs[0], long_path.empty() ? dir_of(data_paths[0]) : dir_of(long_path));
    opts.propensity_terms = specs[0].propensity_terms;
    std::vector<ModelSpec> model_specs;
    for (const auto& s : specs) model_specs.push_back(s.model);
    BackwardFitResult result = backward_fit(trial, model_specs, opts);

    ensure_out_dir(out_dir);
    write_json_file(out_dir + "/regime.json", regime_to_json(result.regime));
    manifest.outputs = {"regime.json", "decisions.csv"};
    std::vector<StageDataset> stage_data(trial.stages.begin(), trial.stages.end());
    write_decisions_csv(out_dir + "/decisions.csv", result.regime, stage_data);
    for (int k = 0; k < trial.n_stages(); ++k) {
        std::string name = "stage" + std::to_string(k + 1) + "_fit.json";
        write_json_file(out_dir + "/" + name,
                        stage_fit_to_json(result.stage_fits[static_cast<std::size_t>(k)]));
        manifest.outputs.push_back(name);
    }
    manifest.config = flags.echo();
    manifest.config["spec"] = spec_path;
    if (augment_d > 0) {
        manifest.config["augment_noise"] = augment_d;
        manifest.config["noise_seed"] = noise_seed;
    }
    manifest.inputs = inputs;
    manifest.write(out_dir);
    std::cout << "dtr: " << trial.n_stages() << " stage(s), wrote " << out_dir << "\n";
    return 0;
}

int cmd_simulate(const std::string& config_path, const std::string& out_dir, int jobs,
                 Manifest& manifest) {
    ordered_json cfg_json = load_config_file(config_path);
    ScenarioConfig config = scenario_config_from_json(cfg_json);
    if (jobs > 0) config.jobs = jobs;
    MetricsReport report = run_experiment(config);

    ensure_out_dir(out_dir);
    write_json_file(out_dir + "/report.json", metrics_report_to_json(report));
    write_report_csvs(report, out_dir);
    manifest.outputs = {"report.json", "replicates.csv", "selection.csv", "blips.csv"};
    manifest.config = scenario_config_to_json(config);
    manifest.config["jobs"] = config.jobs;
    manifest.inputs = {config_path};
    manifest.write(out_dir);

    int failed = 0;
    for (const auto& m : report.methods) failed += m.n_failed;
    std::cout << "simulate: " << config.reps << " replicate(s) x " << report.methods.size()
              << " method(s)";
    if (failed > 0) std::cout << ", " << failed << " failed run(s) recorded";
    std::cout << ", wrote " << out_dir << "\n";
    return 0;
}

int cmd_cv_curve(const std::string& data_path, const std::string& spec_path,
                 const std::string& out_dir, const CommonFitFlags& flags, Manifest& manifest) {
    StageDataset data = read_stage_csv(data_path, true);
    AnalysisSpec spec = load_specs(spec_path, 1)[0];
    CommonFitFlags cv_flags = flags;
    cv_flags.lambda = -1.0;  // always cross-validate here
    FitOptions opts = cv_flags.to_options(spec, dir_of(data_path));
    StageFit fit = fit_stage(data, spec.model, opts);
    if (!fit.cv) throw ConfigError("cv-curve: cross-validation did not run");

    ensure_out_dir(out_dir);
    write_json_file(out_dir + "/cv.json", cv_result_to_json(*fit.cv));
    write_cv_csv(out_dir + "/cv.csv", *fit.cv);
    manifest.outputs = {"cv.json", "cv.csv"};
    manifest.config = cv_flags.echo();
    manifest.config["data"] = data_path;
    manifest.config["spec"] = spec_path;
    manifest.inputs = {data_path, spec_path};
    manifest.write(out_dir);
    std::cout << "cv-curve: lambda_min " << fit.cv->lambda_min << ", wrote " << out_dir << "\n";
    return 0;
}

int cmd_decide(const std::string& regime_path, const std::vector<std::string>& data_paths,
               const std::string& out_dir, Manifest& manifest) {
    Regime regime = regime_from_json(load_json_file(regime_path));
    if (data_paths.size() != regime.stages.size())
        throw ConfigError("decide: regime has " + std::to_string(regime.stages.size()) +
                          " stage(s) but " + std::to_string(data_paths.size()) +
                          " data file(s) were given");
    std::vector<StageDataset> stages;
    for (const auto& path : data_paths) stages.push_back(read_covariates_csv(path));
    for (std::size_t k = 1; k < stages.size(); ++k)
        if (stages[k].n() != stages[0].n())
            throw ConfigError("decide: stage files have different row counts");

    ensure_out_dir(out_dir);
    write_decisions_csv(out_dir + "/decisions.csv", regime, stages);
    manifest.outputs = {"decisions.csv"};
    manifest.inputs = data_paths;
    manifest.inputs.insert(manifest.inputs.begin(), regime_path);
    manifest.config["regime"] = regime_path;
    manifest.write(out_dir);
    std::cout << "decide: " << stages[0].n() << " patient(s), wrote " << out_dir << "\n";
    return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
    CLI::App app{"Penalized dynamic weighted least squares for treatment-regime estimation"};
    app.require_subcommand(1);

    // fit
    auto* fit = app.add_subcommand("fit", "Fit a single decision stage");
    std::string fit_data, fit_spec, fit_out = "pdwols_fit";
    CommonFitFlags fit_flags;
    fit->add_option("--data", fit_data, "Stage CSV (columns y, a, covariates)")->required();
    fit->add_option("--spec", fit_spec, "Model spec JSON")->required();
    fit->add_option("--out", fit_out, "Output directory");
    fit_flags.add_to(fit);

    // dtr
    auto* dtr = app.add_subcommand("dtr", "Backward-recursive multi-stage estimation");
    std::vector<std::string> dtr_data;
    std::string dtr_long, dtr_spec, dtr_out = "pdwols_dtr";
    int dtr_noise = 0;
    std::uint64_t dtr_noise_seed = 0;
    CommonFitFlags dtr_flags;
    dtr->add_option("--data", dtr_data, "Stage CSVs in stage order (outcome on the last)");
    dtr->add_option("--long", dtr_long, "Single long-format CSV with a 'stage' column");
    dtr->add_option("--spec", dtr_spec, "Model spec JSON (object or per-stage array)")->required();
    dtr->add_option("--out", dtr_out, "Output directory");
    dtr->add_option("--augment-noise", dtr_noise, "Add d synthetic noise covariates per stage");
    dtr->add_option("--noise-seed", dtr_noise_seed, "Seed for noise augmentation");
    dtr_flags.add_to(dtr);

    // simulate
    auto* sim = app.add_subcommand("simulate", "Run a replicated experiment");
    std::string sim_config, sim_out = "pdwols_sim";
    int sim_jobs = 0;
    sim->add_option("-c,--config", sim_config, "Scenario config (TOML or JSON)")->required();
    sim->add_option("--out", sim_out, "Output directory");
    sim->add_option("--jobs", sim_jobs, "Worker threads over replicates (default PDWOLS_JOBS or 1)");

    // cv-curve
    auto* cvc = app.add_subcommand("cv-curve", "Cross-validation curve for one stage");
    std::string cvc_data, cvc_spec, cvc_out = "pdwols_cv";
    CommonFitFlags cvc_flags;
    cvc->add_option("--data", cvc_data, "Stage CSV")->required();
    cvc->add_option("--spec", cvc_spec, "Model spec JSON")->required();
    cvc->add_option("--out", cvc_out, "Output directory");
    cvc_flags.add_to(cvc);

    // decide
    auto* dec = app.add_subcommand("decide", "Apply a saved regime to new patients");
    std::string dec_regime, dec_out = "pdwols_decide";
    std::vector<std::string> dec_data;
    dec->add_option("--regime", dec_regime, "Regime JSON from fit/dtr")->required();
    dec->add_option("--data", dec_data, "Per-stage covariate CSVs")->required();
    dec->add_option("--out", dec_out, "Output directory");

    std::vector<const char*> argv;
    argv.push_back("pdwols");
    for (const auto& a : args) argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 4;
    }

    Manifest manifest;
    manifest.argv = args;
    try {
        if (fit->parsed()) {
            manifest.command = "fit";
            return cmd_fit(fit_data, fit_spec, fit_out, fit_flags, manifest);
        }
        if (dtr->parsed()) {
            manifest.command = "dtr";
            return cmd_dtr(dtr_data, dtr_long, dtr_spec, dtr_out, dtr_flags, dtr_noise,
                           dtr_noise_seed, manifest);
        }
        if (sim->parsed()) {
            manifest.command = "simulate";
            int jobs = sim_jobs > 0 ? sim_jobs : default_jobs();
            return cmd_simulate(sim_config, sim_out, jobs, manifest);
        }
        if (cvc->parsed()) {
            manifest.command = "cv-curve";
            return cmd_cv_curve(cvc_data, cvc_spec, cvc_out, cvc_flags, manifest);
        }
        if (dec->parsed()) {
            manifest.command = "decide";
            return cmd_decide(dec_regime, dec_data, dec_out, manifest);
        }
    } catch (const ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const NumericError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
    return 4;
}

}  // namespace pdwols
