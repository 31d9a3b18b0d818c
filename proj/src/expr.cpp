#include "pdwols/expr.hpp"

#include "pdwols/errors.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <set>

namespace pdwols {

double expit(double x) { return 1.0 / (1.0 + std::exp(-x)); }

namespace detail {

enum class NodeKind { number, column, negate, binary, call };

struct ExprNode {
    NodeKind kind;
    double number = 0.0;
    std::string name;  // column name or function name
    char op = 0;       // one of + - * / ^
    std::shared_ptr<const ExprNode> lhs, rhs, arg;
};

using NodePtr = std::shared_ptr<const ExprNode>;

class Parser {
  public:
    explicit Parser(const std::string& text) : text_(text) {}

    NodePtr parse() {
        NodePtr e = sum();
        skip_ws();
        if (pos_ != text_.size())
            throw ParseError("term '" + text_ + "': unexpected character at position " +
                             std::to_string(pos_));
        return e;
    }

  private:
    NodePtr sum() {
        NodePtr lhs = product();
        while (true) {
            skip_ws();
            if (peek() == '+' || peek() == '-') {
                char op = take();
                NodePtr rhs = product();
                lhs = make_binary(op, lhs, rhs);
            } else {
                return lhs;
            }
        }
    }

    NodePtr product() {
        NodePtr lhs = unary();
        while (true) {
            skip_ws();
            if (peek() == '*' || peek() == '/') {
                char op = take();
                NodePtr rhs = unary();
                lhs = make_binary(op, lhs, rhs);
            } else {
                return lhs;
            }
        }
    }

    NodePtr unary() {
        skip_ws();
        if (peek() == '-') {
            take();
            auto node = std::make_shared<ExprNode>();
            node->kind = NodeKind::negate;
            node->arg = unary();
            return node;
        }
        return power();
    }

    NodePtr power() {
        NodePtr base = primary();
        skip_ws();
        if (peek() == '^') {
            take();
            NodePtr exponent = unary();  // right-associative
            return make_binary('^', base, exponent);
        }
        return base;
    }

    NodePtr primary() {
        skip_ws();
        char c = peek();
        if (c == '(') {
            take();
            NodePtr e = sum();
            expect(')');
            return e;
        }
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return number();
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') return identifier();
        throw ParseError("term '" + text_ + "': expected value at position " +
                         std::to_string(pos_));
    }

    NodePtr number() {
        std::size_t start = pos_;
        while (pos_ < text_.size() &&
               (std::isdigit(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '.' ||
                text_[pos_] == 'e' || text_[pos_] == 'E' ||
                ((text_[pos_] == '+' || text_[pos_] == '-') && pos_ > start &&
                 (text_[pos_ - 1] == 'e' || text_[pos_ - 1] == 'E'))))
            ++pos_;
        auto node = std::make_shared<ExprNode>();
        node->kind = NodeKind::number;
        try {
            node->number = std::stod(text_.substr(start, pos_ - start));
        } catch (const std::exception&) {
            throw ParseError("term '" + text_ + "': bad number at position " +
                             std::to_string(start));
        }
        return node;
    }

    NodePtr identifier() {
        std::size_t start = pos_;
        while (pos_ < text_.size() && (std::isalnum(static_cast<unsigned char>(text_[pos_])) ||
                                       text_[pos_] == '_' || text_[pos_] == '.'))
            ++pos_;
        std::string name = text_.substr(start, pos_ - start);
        skip_ws();
        if (peek() == '(') {
            static const std::set<std::string> functions = {"exp", "log", "abs", "sqrt", "expit"};
            if (!functions.count(name))
                throw ParseError("term '" + text_ + "': unknown function '" + name + "'");
            take();
            auto node = std::make_shared<ExprNode>();
            node->kind = NodeKind::call;
            node->name = name;
            node->arg = sum();
            expect(')');
            return node;
        }
        auto node = std::make_shared<ExprNode>();
        node->kind = NodeKind::column;
        node->name = name;
        return node;
    }

    static NodePtr make_binary(char op, NodePtr lhs, NodePtr rhs) {
        auto node = std::make_shared<ExprNode>();
        node->kind = NodeKind::binary;
        node->op = op;
        node->lhs = std::move(lhs);
        node->rhs = std::move(rhs);
        return node;
    }

    void skip_ws() {
        while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
    }
    char peek() const { return pos_ < text_.size() ? text_[pos_] : '\0'; }
    char take() { return text_[pos_++]; }
    void expect(char c) {
        skip_ws();
        if (peek() != c)
            throw ParseError("term '" + text_ + "': expected '" + std::string(1, c) +
                             "' at position " + std::to_string(pos_));
        take();
    }

    const std::string& text_;
    std::size_t pos_ = 0;
};

void collect_columns(const NodePtr& node, std::set<std::string>& out) {
    if (!node) return;
    if (node->kind == NodeKind::column) out.insert(node->name);
    collect_columns(node->lhs, out);
    collect_columns(node->rhs, out);
    collect_columns(node->arg, out);
}

Eigen::ArrayXd eval_node(const ExprNode& node, const Eigen::MatrixXd& X,
                         const std::unordered_map<std::string, int>& index, const std::string& label) {
    switch (node.kind) {
        case NodeKind::number:
            return Eigen::ArrayXd::Constant(X.rows(), node.number);
        case NodeKind::column: {
            auto it = index.find(node.name);
            if (it == index.end())
                throw ConfigError("term '" + label + "': unknown column '" + node.name + "'");
            return X.col(it->second).array();
        }
        case NodeKind::negate:
            return -eval_node(*node.arg, X, index, label);
        case NodeKind::binary: {
            Eigen::ArrayXd l = eval_node(*node.lhs, X, index, label);
            Eigen::ArrayXd r = eval_node(*node.rhs, X, index, label);
            switch (node.op) {
                case '+': return l + r;
                case '-': return l - r;
                case '*': return l * r;
                case '/': return l / r;
                case '^': return l.binaryExpr(r, [](double a, double b) { return std::pow(a, b); });
            }
            throw ParseError("term '" + label + "': bad operator");
        }
        case NodeKind::call: {
            Eigen::ArrayXd v = eval_node(*node.arg, X, index, label);
            if (node.name == "exp") return v.exp();
            if (node.name == "log") return v.log();
            if (node.name == "abs") return v.abs();
            if (node.name == "sqrt") return v.sqrt();
            if (node.name == "expit") return v.unaryExpr([](double x) { return expit(x); });
            throw ParseError("term '" + label + "': unknown function '" + node.name + "'");
        }
    }
    throw ParseError("term '" + label + "': bad node");
}

}  // namespace detail

Term Term::parse(const std::string& text) {
    std::string trimmed;
    trimmed.reserve(text.size());
    for (char c : text)
        if (!std::isspace(static_cast<unsigned char>(c))) trimmed.push_back(c);
    if (trimmed.empty()) throw ParseError("empty model term");
    Term t;
    t.root_ = detail::Parser(trimmed).parse();
    t.label_ = trimmed;
    std::set<std::string> cols;
    detail::collect_columns(t.root_, cols);
    t.columns_.assign(cols.begin(), cols.end());
    return t;
}

Eigen::VectorXd Term::eval(const Eigen::MatrixXd& X, const std::vector<std::string>& names) const {
    std::unordered_map<std::string, int> index;
    for (std::size_t j = 0; j < names.size(); ++j) index.emplace(names[j], static_cast<int>(j));
    Eigen::VectorXd v = detail::eval_node(*root_, X, index, label_).matrix();
    if (!v.allFinite())
        throw NumericError("term '" + label_ + "' produced a non-finite value on the data");
    return v;
}

double Term::eval_row(const Eigen::RowVectorXd& row, const std::vector<std::string>& names) const {
    Eigen::MatrixXd X = row;
    return eval(X, names)(0);
}

std::vector<Term> parse_terms(const std::vector<std::string>& texts) {
    std::vector<Term> out;
    out.reserve(texts.size());
    for (const auto& t : texts) out.push_back(Term::parse(t));
    return out;
}

Eigen::MatrixXd term_matrix(const std::vector<Term>& terms, const Eigen::MatrixXd& X,
                            const std::vector<std::string>& names) {
    Eigen::MatrixXd out(X.rows(), static_cast<Eigen::Index>(terms.size()));
    for (std::size_t k = 0; k < terms.size(); ++k) out.col(static_cast<Eigen::Index>(k)) = terms[k].eval(X, names);
    return out;
}

}  // namespace pdwols
