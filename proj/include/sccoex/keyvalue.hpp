#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace sccoex {

/// Plain-text `key = value` file. '#' starts a comment; blank lines are
/// ignored; a key may appear only once.
class KeyValueConfig {
public:
    struct Entry {
        std::string value;
        std::size_t line = 0;  ///< 0 for values set programmatically
    };

    static KeyValueConfig parse(std::string_view text);
    static KeyValueConfig load(const std::filesystem::path& path);

    void set(const std::string& key, std::string value);
    bool has(const std::string& key) const { return entries_.count(key) != 0; }

    /// Throws InputError naming the first key outside `known`.
    void reject_unknown(const std::set<std::string>& known) const;

    std::optional<std::string> get(const std::string& key) const;
    std::string get_string(const std::string& key, const std::string& fallback) const;
    double get_double(const std::string& key, double fallback) const;
    std::int64_t get_int(const std::string& key, std::int64_t fallback) const;
    std::uint64_t get_uint(const std::string& key, std::uint64_t fallback) const;
    std::vector<double> get_doubles(const std::string& key) const;  ///< comma-separated

    const std::map<std::string, Entry>& entries() const noexcept { return entries_; }

private:
    [[noreturn]] void bad_value(const std::string& key, const char* expected) const;
    std::map<std::string, Entry> entries_;
};

}  // namespace sccoex
