#include "pdwols/toml_subset.hpp"

#include "pdwols/errors.hpp"

#include <cctype>
#include <fstream>
#include <sstream>

namespace pdwols {

namespace {

using ordered_json = nlohmann::ordered_json;

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r");
    std::size_t b = s.find_last_not_of(" \t\r");
    return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
}

ordered_json parse_scalar(const std::string& token, const std::string& where) {
    if (token.empty()) throw ParseError(where + ": empty value");
    if (token.front() == '"') {
        if (token.size() < 2 || token.back() != '"')
            throw ParseError(where + ": unterminated string");
        return token.substr(1, token.size() - 2);
    }
    if (token == "true") return true;
    if (token == "false") return false;
    try {
        if (token.find_first_of(".eE") == std::string::npos &&
            token.find("inf") == std::string::npos && token.find("nan") == std::string::npos) {
            std::size_t pos = 0;
            long long v = std::stoll(token, &pos);
            if (pos == token.size()) return v;
        }
        std::size_t pos = 0;
        double v = std::stod(token, &pos);
        if (pos == token.size()) return v;
    } catch (const std::exception&) {
    }
    throw ParseError(where + ": cannot parse value '" + token + "'");
}

ordered_json parse_value(const std::string& text, const std::string& where) {
    std::string v = trim(text);
    if (!v.empty() && v.front() == '[') {
        if (v.back() != ']') throw ParseError(where + ": unterminated array");
        ordered_json arr = ordered_json::array();
        std::string inner = v.substr(1, v.size() - 2);
        std::string token;
        bool in_string = false;
        for (char c : inner) {
            if (c == '"') in_string = !in_string;
            if (c == ',' && !in_string) {
                std::string t = trim(token);
                if (!t.empty()) arr.push_back(parse_scalar(t, where));
                token.clear();
            } else {
                token.push_back(c);
            }
        }
        std::string t = trim(token);
        if (!t.empty()) arr.push_back(parse_scalar(t, where));
        return arr;
    }
    return parse_scalar(v, where);
}

// strips a trailing comment that is not inside a string
std::string strip_comment(const std::string& line) {
    bool in_string = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        if (line[i] == '"') in_string = !in_string;
        if (line[i] == '#' && !in_string) return line.substr(0, i);
    }
    return line;
}

}  // namespace

ordered_json parse_toml_subset(const std::string& text, const std::string& origin) {
    ordered_json root = ordered_json::object();
    ordered_json* current = &root;
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::string where = origin + " line " + std::to_string(lineno);
        std::string body = trim(strip_comment(line));
        if (body.empty()) continue;
        if (body.front() == '[') {
            if (body.back() != ']') throw ParseError(where + ": unterminated table header");
            std::string name = trim(body.substr(1, body.size() - 2));
            if (name.empty()) throw ParseError(where + ": empty table name");
            current = &root[name];
            if (!current->is_object()) *current = ordered_json::object();
            continue;
        }
        std::size_t eq = body.find('=');
        if (eq == std::string::npos) throw ParseError(where + ": expected key = value");
        std::string key = trim(body.substr(0, eq));
        if (key.empty()) throw ParseError(where + ": empty key");
        if (!key.empty() && key.front() == '"' && key.back() == '"') key = key.substr(1, key.size() - 2);
        (*current)[key] = parse_value(body.substr(eq + 1), where);
    }
    return root;
}

ordered_json load_toml_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open file '" + path + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_toml_subset(buf.str(), "file '" + path + "'");
}

}  // namespace pdwols
