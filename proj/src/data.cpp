#include "pdwols/data.hpp"

#include "pdwols/csv.hpp"
#include "pdwols/errors.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

namespace pdwols {

void StageDataset::validate() const {
    const Eigen::Index rows = a.size();
    if (X.rows() != rows) throw ConfigError("stage data: covariate rows do not match treatment length");
    if (y.size() != 0 && y.size() != rows)
        throw ConfigError("stage data: outcome length does not match treatment length");
    if (static_cast<Eigen::Index>(column_names.size()) != X.cols())
        throw ConfigError("stage data: column name count does not match covariate count");
    std::set<std::string> seen;
    for (const auto& name : column_names)
        if (!seen.insert(name).second) throw ConfigError("stage data: duplicate column name '" + name + "'");
    for (Eigen::Index i = 0; i < rows; ++i)
        if (a(i) != 0.0 && a(i) != 1.0)
            throw ConfigError("stage data: treatment must be coded 0/1 (row " + std::to_string(i + 1) + ")");
    if (!X.allFinite() || !a.allFinite() || (y.size() > 0 && !y.allFinite()))
        throw ConfigError("stage data: non-finite value present");
}

void TrialData::validate() const {
    if (stages.empty()) throw ConfigError("trial data: no stages");
    for (int k = 0; k < n_stages(); ++k) {
        stages[k].validate();
        if (stages[k].n() != stages[0].n())
            throw ConfigError("trial data: stage " + std::to_string(k + 1) + " row count differs from stage 1");
    }
    if (stages.back().y.size() == 0) throw ConfigError("trial data: final stage has no outcome column");
}

DesignBlocks build_design(const StageDataset& data, const ModelSpec& spec) {
    data.validate();
    DesignBlocks blocks;
    blocks.Avec = data.a;
    blocks.Xmain = term_matrix(spec.treatment_free_terms, data.X, data.column_names);
    blocks.main_names.reserve(spec.treatment_free_terms.size());
    for (const auto& t : spec.treatment_free_terms) blocks.main_names.push_back(t.label());

    Eigen::MatrixXd blip_cols = term_matrix(spec.blip_terms, data.X, data.column_names);
    blocks.XA.resize(data.n(), blip_cols.cols());
    blocks.inter_names.reserve(spec.blip_terms.size());
    blocks.inter_main_index.reserve(spec.blip_terms.size());
    for (Eigen::Index l = 0; l < blip_cols.cols(); ++l) {
        blocks.XA.col(l) = data.a.array() * blip_cols.col(l).array();
        const std::string& label = spec.blip_terms[static_cast<std::size_t>(l)].label();
        blocks.inter_names.push_back("A:" + label);
        auto it = std::find(blocks.main_names.begin(), blocks.main_names.end(), label);
        blocks.inter_main_index.push_back(
            it == blocks.main_names.end() ? -1 : static_cast<int>(it - blocks.main_names.begin()));
    }
    std::set<std::string> seen(blocks.main_names.begin(), blocks.main_names.end());
    if (seen.size() != blocks.main_names.size())
        throw ConfigError("model spec: duplicate treatment-free term");
    std::set<std::string> seen_inter(blocks.inter_names.begin(), blocks.inter_names.end());
    if (seen_inter.size() != blocks.inter_names.size())
        throw ConfigError("model spec: duplicate blip term");
    return blocks;
}

namespace {

double weighted_mean(const Eigen::VectorXd& v, const Eigen::VectorXd& w, double denom) {
    return v.dot(w) / denom;
}

}  // namespace

std::pair<DesignBlocks, Eigen::VectorXd> weighted_center(const DesignBlocks& blocks,
                                                         const Eigen::VectorXd& y,
                                                         const Eigen::VectorXd& w,
                                                         CenterDenominator denom_kind) {
    if (blocks.standardized) throw ConfigError("weighted_center: blocks are already standardized");
    if (w.size() != blocks.n() || y.size() != blocks.n())
        throw ConfigError("weighted_center: length mismatch");
    if ((w.array() < 0).any()) throw ConfigError("weighted_center: negative weight");
    const double sw = w.sum();
    if (sw <= 0) throw ConfigError("weighted_center: all weights are zero");
    const double denom = denom_kind == CenterDenominator::sum_weights
                             ? sw
                             : static_cast<double>(blocks.n());

    // re-centering composes: shifts accumulate into the stored means
    DesignBlocks out = blocks;
    bool again = blocks.centered;
    out.centered = true;
    out.center_denominator = denom_kind;
    if (!again) {
        out.main_means = Eigen::VectorXd::Zero(blocks.n_main());
        out.inter_means = Eigen::VectorXd::Zero(blocks.n_inter());
        out.a_mean = 0.0;
        out.y_mean = 0.0;
    }
    for (Eigen::Index j = 0; j < blocks.n_main(); ++j) {
        double m = weighted_mean(blocks.Xmain.col(j), w, denom);
        out.main_means(j) += m;
        out.Xmain.col(j).array() -= m;
    }
    {
        double m = weighted_mean(blocks.Avec, w, denom);
        out.a_mean += m;
        out.Avec.array() -= m;
    }
    for (Eigen::Index l = 0; l < blocks.n_inter(); ++l) {
        double m = weighted_mean(blocks.XA.col(l), w, denom);
        out.inter_means(l) += m;
        out.XA.col(l).array() -= m;
    }
    double my = weighted_mean(y, w, denom);
    out.y_mean += my;
    Eigen::VectorXd yc = y.array() - my;
    return {std::move(out), std::move(yc)};
}

DesignBlocks standardize(const DesignBlocks& blocks, const Eigen::VectorXd& w, bool enable) {
    if (!blocks.centered) throw ConfigError("standardize: blocks must be centered first");
    DesignBlocks out = blocks;
    out.main_scales = Eigen::VectorXd::Ones(blocks.n_main());
    out.inter_scales = Eigen::VectorXd::Ones(blocks.n_inter());
    out.a_scale = 1.0;
    if (!enable) return out;

    const double sw = w.sum();
    auto scale_of = [&](const Eigen::VectorXd& col) {
        return std::sqrt(col.array().square().matrix().dot(w) / sw);
    };
    constexpr double kDegenerate = 1e-12;

    out.standardized = true;
    for (Eigen::Index j = 0; j < blocks.n_main(); ++j) {
        double s = scale_of(blocks.Xmain.col(j));
        if (s < kDegenerate) {
            out.degenerate_main.push_back(static_cast<int>(j));
        } else {
            out.main_scales(j) = s;
            out.Xmain.col(j) /= s;
        }
    }
    {
        double s = scale_of(blocks.Avec);
        if (s < kDegenerate) out.a_degenerate = true;
        else { out.a_scale = s; out.Avec /= s; }
    }
    for (Eigen::Index l = 0; l < blocks.n_inter(); ++l) {
        double s = scale_of(blocks.XA.col(l));
        if (s < kDegenerate) {
            out.degenerate_inter.push_back(static_cast<int>(l));
        } else {
            out.inter_scales(l) = s;
            out.XA.col(l) /= s;
        }
    }
    return out;
}

DesignBlocks subset_rows(const DesignBlocks& blocks, const std::vector<int>& rows) {
    DesignBlocks out = blocks;
    const Eigen::Index n = static_cast<Eigen::Index>(rows.size());
    out.Xmain.resize(n, blocks.n_main());
    out.XA.resize(n, blocks.n_inter());
    out.Avec.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        out.Xmain.row(i) = blocks.Xmain.row(rows[static_cast<std::size_t>(i)]);
        out.XA.row(i) = blocks.XA.row(rows[static_cast<std::size_t>(i)]);
        out.Avec(i) = blocks.Avec(rows[static_cast<std::size_t>(i)]);
    }
    return out;
}

Eigen::VectorXd subset(const Eigen::VectorXd& v, const std::vector<int>& rows) {
    Eigen::VectorXd out(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) out(static_cast<Eigen::Index>(i)) = v(rows[i]);
    return out;
}

namespace {

// Treatment ingestion: values must form at most two levels; non-{0,1} levels
// are mapped ascending -> {0,1} with a note recorded on the dataset.
void ingest_treatment(StageDataset& data, std::vector<double>& raw, const std::string& path) {
    std::set<double> levels(raw.begin(), raw.end());
    if (levels.size() > 2)
        throw ConfigError("file '" + path + "': treatment column has " +
                          std::to_string(levels.size()) + " distinct values, expected 2");
    if (levels.size() <= 1)
        throw ConfigError("file '" + path + "': treatment column is constant");
    bool already = levels.count(0.0) && levels.count(1.0);
    data.a.resize(static_cast<Eigen::Index>(raw.size()));
    if (already) {
        for (std::size_t i = 0; i < raw.size(); ++i) data.a(static_cast<Eigen::Index>(i)) = raw[i];
        return;
    }
    double lo = *levels.begin();
    double hi = *levels.rbegin();
    for (std::size_t i = 0; i < raw.size(); ++i)
        data.a(static_cast<Eigen::Index>(i)) = raw[i] == hi ? 1.0 : 0.0;
    data.treatment_note = "treatment levels {" + format_double(lo) + "," + format_double(hi) +
                          "} mapped to {0,1}";
}

StageDataset table_to_stage(const CsvTable& table, const std::vector<std::size_t>& row_ids,
                            bool expect_outcome, const std::string& path) {
    int ycol = table.col("y");
    int acol = table.col("a");
    if (acol < 0) throw ParseError("file '" + path + "': missing treatment column 'a'");
    if (expect_outcome && ycol < 0) throw ParseError("file '" + path + "': missing outcome column 'y'");

    StageDataset data;
    std::vector<int> covariate_cols;
    for (std::size_t j = 0; j < table.header.size(); ++j) {
        const std::string& name = table.header[j];
        if (name == "y" || name == "a" || name == "stage" || name == "id") continue;
        covariate_cols.push_back(static_cast<int>(j));
        data.column_names.push_back(name);
    }
    const Eigen::Index n = static_cast<Eigen::Index>(row_ids.size());
    data.X.resize(n, static_cast<Eigen::Index>(covariate_cols.size()));
    if (expect_outcome) data.y.resize(n);
    std::vector<double> raw_a(row_ids.size());
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& row = table.rows[row_ids[static_cast<std::size_t>(i)]];
        std::string where = "file '" + path + "' row " + std::to_string(row_ids[static_cast<std::size_t>(i)] + 2);
        raw_a[static_cast<std::size_t>(i)] = parse_double(row[static_cast<std::size_t>(acol)], where + " column 'a'");
        if (expect_outcome)
            data.y(i) = parse_double(row[static_cast<std::size_t>(ycol)], where + " column 'y'");
        for (std::size_t k = 0; k < covariate_cols.size(); ++k)
            data.X(i, static_cast<Eigen::Index>(k)) = parse_double(
                row[static_cast<std::size_t>(covariate_cols[k])], where + " column '" + data.column_names[k] + "'");
    }
    ingest_treatment(data, raw_a, path);
    data.validate();
    return data;
}

}  // namespace

StageDataset read_stage_csv(const std::string& path, bool expect_outcome) {
    CsvTable table = read_csv(path);
    std::vector<std::size_t> all(table.n_rows());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    if (all.empty()) throw ParseError("file '" + path + "': no data rows");
    return table_to_stage(table, all, expect_outcome, path);
}

TrialData read_trial_csv(const std::vector<std::string>& stage_paths) {
    if (stage_paths.empty()) throw ConfigError("no stage files given");
    TrialData trial;
    for (std::size_t k = 0; k < stage_paths.size(); ++k)
        trial.stages.push_back(read_stage_csv(stage_paths[k], k + 1 == stage_paths.size()));
    trial.validate();
    return trial;
}

TrialData read_trial_long_csv(const std::string& path) {
    CsvTable table = read_csv(path);
    int scol = table.col("stage");
    if (scol < 0) throw ParseError("file '" + path + "': missing 'stage' column");
    std::map<int, std::vector<std::size_t>> by_stage;
    for (std::size_t i = 0; i < table.n_rows(); ++i) {
        double s = parse_double(table.rows[i][static_cast<std::size_t>(scol)],
                                "file '" + path + "' row " + std::to_string(i + 2) + " column 'stage'");
        by_stage[static_cast<int>(s)].push_back(i);
    }
    if (by_stage.empty()) throw ParseError("file '" + path + "': no data rows");
    int expected = 1;
    TrialData trial;
    for (const auto& [stage, rows] : by_stage) {
        if (stage != expected)
            throw ParseError("file '" + path + "': stages must be numbered 1..K, found " + std::to_string(stage));
        bool final_stage = (static_cast<std::size_t>(expected) == by_stage.size());
        trial.stages.push_back(table_to_stage(table, rows, final_stage, path));
        ++expected;
    }
    trial.validate();
    return trial;
}

void write_stage_csv(const std::string& path, const StageDataset& data, bool include_outcome) {
    std::vector<std::string> header;
    if (include_outcome && data.y.size() > 0) header.push_back("y");
    header.push_back("a");
    for (const auto& name : data.column_names) header.push_back(name);
    std::vector<std::vector<std::string>> rows;
    rows.reserve(static_cast<std::size_t>(data.n()));
    for (Eigen::Index i = 0; i < data.n(); ++i) {
        std::vector<std::string> row;
        if (include_outcome && data.y.size() > 0) row.push_back(format_double(data.y(i)));
        row.push_back(format_double(data.a(i)));
        for (Eigen::Index j = 0; j < data.X.cols(); ++j) row.push_back(format_double(data.X(i, j)));
        rows.push_back(std::move(row));
    }
    write_csv(path, header, rows);
}

}  // namespace pdwols
