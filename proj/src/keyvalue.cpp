#include "sccoex/keyvalue.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "sccoex/error.hpp"

namespace sccoex {

namespace {

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

template <class T>
bool parse_number(const std::string& s, T& out) {
    const auto* end = s.data() + s.size();
    const auto [p, ec] = std::from_chars(s.data(), end, out);
    return ec == std::errc{} && p == end;
}

}  // namespace

KeyValueConfig KeyValueConfig::parse(std::string_view text) {
    KeyValueConfig cfg;
    std::size_t lineno = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        auto nl = text.find('\n', pos);
        if (nl == std::string_view::npos) nl = text.size();
        auto line = text.substr(pos, nl - pos);
        pos = nl + 1;
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string_view::npos) {
            line = line.substr(0, hash);
        }
        const auto body = trim(line);
        if (body.empty()) continue;
        const auto eq = body.find('=');
        if (eq == std::string::npos) throw InputError("expected 'key = value'", lineno);
        auto key = trim(std::string_view(body).substr(0, eq));
        auto value = trim(std::string_view(body).substr(eq + 1));
        if (key.empty()) throw InputError("empty key", lineno);
        if (cfg.entries_.count(key)) throw InputError("duplicate key '" + key + "'", lineno);
        cfg.entries_.emplace(std::move(key), Entry{std::move(value), lineno});
    }
    return cfg;
}

KeyValueConfig KeyValueConfig::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open config '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse(ss.str());
}

void KeyValueConfig::set(const std::string& key, std::string value) {
    entries_[key] = Entry{std::move(value), 0};
}

void KeyValueConfig::reject_unknown(const std::set<std::string>& known) const {
    for (const auto& [key, entry] : entries_) {
        if (!known.count(key)) {
            if (entry.line) throw InputError("unknown config key '" + key + "'", entry.line);
            throw InputError("unknown config key '" + key + "'");
        }
    }
}

std::optional<std::string> KeyValueConfig::get(const std::string& key) const {
    const auto it = entries_.find(key);
    if (it == entries_.end()) return std::nullopt;
    return it->second.value;
}

void KeyValueConfig::bad_value(const std::string& key, const char* expected) const {
    const auto& e = entries_.at(key);
    const std::string msg = "config key '" + key + "': expected " + expected + ", got '" + e.value + "'";
    if (e.line) throw InputError(msg, e.line);
    throw InputError(msg);
}

std::string KeyValueConfig::get_string(const std::string& key, const std::string& fallback) const {
    return get(key).value_or(fallback);
}

double KeyValueConfig::get_double(const std::string& key, double fallback) const {
    const auto v = get(key);
    if (!v) return fallback;
    double out = 0.0;
    if (!parse_number(*v, out)) bad_value(key, "a number");
    return out;
}

std::int64_t KeyValueConfig::get_int(const std::string& key, std::int64_t fallback) const {
    const auto v = get(key);
    if (!v) return fallback;
    std::int64_t out = 0;
    if (!parse_number(*v, out)) bad_value(key, "an integer");
    return out;
}

std::uint64_t KeyValueConfig::get_uint(const std::string& key, std::uint64_t fallback) const {
    const auto v = get(key);
    if (!v) return fallback;
    std::uint64_t out = 0;
    if (!parse_number(*v, out)) bad_value(key, "a non-negative integer");
    return out;
}

std::vector<double> KeyValueConfig::get_doubles(const std::string& key) const {
    std::vector<double> out;
    const auto v = get(key);
    if (!v || v->empty()) return out;
    std::size_t pos = 0;
    while (pos <= v->size()) {
        auto comma = v->find(',', pos);
        if (comma == std::string::npos) comma = v->size();
        const auto item = trim(std::string_view(*v).substr(pos, comma - pos));
        double x = 0.0;
        if (!parse_number(item, x)) bad_value(key, "a comma-separated list of numbers");
        out.push_back(x);
        pos = comma + 1;
    }
    return out;
}

}  // namespace sccoex
