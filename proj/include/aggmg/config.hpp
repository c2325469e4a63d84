#pragma once

// Sectioned key = value configuration text.
//
//   # comment
//   seed = 3
//   [problem]
//   kind = "poisson_ldg"
//   boundary = ["dirichlet", "neumann"]
//
// Values are JSON scalars or arrays (strings quoted); `inf` / `-inf` are
// accepted for reals. Keys before the first header go in section "".

#include <cctype>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>

#include "json.hpp"

#include "linalg.hpp"

namespace aggmg {

struct ConfigError : Error {
    using Error::Error;
};

namespace detail {

inline std::string trim(const std::string& s)
{
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

/// Cuts a trailing '#' comment, ignoring '#' inside double quotes.
inline std::string strip_comment(const std::string& s)
{
    bool quoted = false;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s[i] == '"' && (i == 0 || s[i - 1] != '\\')) quoted = !quoted;
        if (s[i] == '#' && !quoted) return s.substr(0, i);
    }
    return s;
}

inline bool valid_key(const std::string& k)
{
    if (k.empty()) return false;
    for (char c : k)
        if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_')) return false;
    return true;
}

/// Replaces bare inf tokens (outside strings) by sentinel strings.
inline std::string mark_infinities(const std::string& v)
{
    std::string out;
    bool quoted = false;
    for (std::size_t i = 0; i < v.size();) {
        if (v[i] == '"' && (i == 0 || v[i - 1] != '\\')) quoted = !quoted;
        auto word_at = [&](const char* w) {
            const std::size_t n = std::char_traits<char>::length(w);
            if (v.compare(i, n, w) != 0) return false;
            const bool left = i == 0 || !std::isalnum(static_cast<unsigned char>(v[i - 1]));
            const bool right = i + n >= v.size() || !std::isalnum(static_cast<unsigned char>(v[i + n]));
            return left && right;
        };
        if (!quoted && word_at("-inf")) {
            out += "\"\\u0001-inf\"";
            i += 4;
        } else if (!quoted && word_at("inf")) {
            out += "\"\\u0001inf\"";
            i += 3;
        } else {
            out += v[i++];
        }
    }
    return out;
}

inline void restore_infinities(nlohmann::ordered_json& j)
{
    if (j.is_string()) {
        const auto& s = j.get_ref<const std::string&>();
        if (s == "\x01inf") j = std::numeric_limits<double>::infinity();
        else if (s == "\x01-inf") j = -std::numeric_limits<double>::infinity();
    } else if (j.is_array()) {
        for (auto& e : j) restore_infinities(e);
    }
}

} // namespace detail

/// Parses configuration text into {section: {key: value}} preserving order.
inline nlohmann::ordered_json parse_config(std::istream& in)
{
    nlohmann::ordered_json root = nlohmann::ordered_json::object();
    root[""] = nlohmann::ordered_json::object();
    std::string section;
    std::string raw;
    std::size_t line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        const std::string where = "config line " + std::to_string(line_no) + ": ";
        const std::string line = detail::trim(detail::strip_comment(raw));
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') throw ConfigError(where + "unterminated section header");
            section = detail::trim(line.substr(1, line.size() - 2));
            if (!detail::valid_key(section)) throw ConfigError(where + "bad section name '" + section + "'");
            if (root.contains(section)) throw ConfigError(where + "duplicate section [" + section + "]");
            root[section] = nlohmann::ordered_json::object();
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError(where + "expected key = value");
        const std::string key = detail::trim(line.substr(0, eq));
        const std::string text = detail::trim(line.substr(eq + 1));
        if (!detail::valid_key(key)) throw ConfigError(where + "bad key '" + key + "'");
        if (text.empty()) throw ConfigError(where + "missing value for '" + key + "'");
        auto& sec = root[section];
        if (sec.contains(key)) throw ConfigError(where + "duplicate key '" + key + "'");
        nlohmann::ordered_json value;
        try {
            value = nlohmann::ordered_json::parse(detail::mark_infinities(text));
        } catch (const nlohmann::json::parse_error&) {
            throw ConfigError(where + "cannot parse value '" + text + "' (strings must be quoted)");
        }
        if (value.is_object() || value.is_null()) throw ConfigError(where + "unsupported value for '" + key + "'");
        detail::restore_infinities(value);
        sec[key] = std::move(value);
    }
    return root;
}

inline nlohmann::ordered_json parse_config_text(const std::string& text)
{
    std::istringstream in(text);
    return parse_config(in);
}

inline nlohmann::ordered_json load_config(const std::string& path)
{
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config " + path);
    return parse_config(in);
}

} // namespace aggmg
