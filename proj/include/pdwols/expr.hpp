#pragma once

#include <Eigen/Core>

#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

namespace pdwols {

namespace detail {
struct ExprNode;
}

// A model term is an arithmetic expression over named data columns, e.g.
// "x1", "exp(x1)", "log(abs(x2))", "0.5*x1 + x2^2".
// Supported functions: exp, log, abs, sqrt, expit.
class Term {
  public:
    static Term parse(const std::string& text);

    const std::string& label() const { return label_; }
    const std::vector<std::string>& columns() const { return columns_; }

    // Vectorized evaluation over the columns of X named by `names`.
    // Throws ConfigError for unknown columns, NumericError for non-finite output.
    Eigen::VectorXd eval(const Eigen::MatrixXd& X, const std::vector<std::string>& names) const;

    double eval_row(const Eigen::RowVectorXd& row, const std::vector<std::string>& names) const;

    bool operator==(const Term& other) const { return label_ == other.label_; }

  private:
    std::shared_ptr<const detail::ExprNode> root_;
    std::string label_;
    std::vector<std::string> columns_;
};

std::vector<Term> parse_terms(const std::vector<std::string>& texts);

// n x k matrix of term values; one column per term.
Eigen::MatrixXd term_matrix(const std::vector<Term>& terms, const Eigen::MatrixXd& X,
                            const std::vector<std::string>& names);

double expit(double x);

}  // namespace pdwols
