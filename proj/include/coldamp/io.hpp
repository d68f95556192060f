#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "coldamp/model.hpp"

namespace coldamp {

class ConfigError : public Error {
public:
    using Error::Error;
};

/// Flat key = value file with [section] headers and '#' comments.
class ConfigFile {
public:
    struct Entry {
        std::string value;
        int line = 0;
    };

    static ConfigFile parse(const std::string& text, const std::string& origin = "<config>");
    static ConfigFile load(const std::string& path);

    bool has(const std::string& section, const std::string& key) const;
    bool has_section(const std::string& section) const;
    std::optional<Entry> entry(const std::string& section, const std::string& key) const;

    double get_double(const std::string& section, const std::string& key) const;
    double get_double(const std::string& section, const std::string& key, double fallback) const;
    long long get_int(const std::string& section, const std::string& key, long long fallback) const;
    bool get_bool(const std::string& section, const std::string& key, bool fallback) const;
    std::string get_string(const std::string& section, const std::string& key,
                           const std::string& fallback) const;
    std::vector<double> get_list(const std::string& section, const std::string& key) const;
    std::vector<std::string> get_string_list(const std::string& section,
                                             const std::string& key) const;

    /// Throws ConfigError naming every key (with its line) absent from `schema`.
    void require_known(const std::map<std::string, std::set<std::string>>& schema) const;

    const std::string& origin() const { return origin_; }

private:
    std::string origin_;
    std::map<std::string, std::map<std::string, Entry>> data_;
    std::string where(const std::string& section, const std::string& key) const;
};

/// Round-trip decimal representation (17 significant digits).
std::string format_double(double v);

/// CSV with a leading '# ...' comment line and a header row.
struct Table {
    std::string comment;
    std::vector<std::string> columns;
    std::vector<std::vector<double>> rows;

    std::string to_csv() const;
    static Table from_csv(const std::string& text);
    static Table load(const std::string& path);
    std::size_t column(const std::string& name) const;  // throws if absent
};

/// Spectrum table with columns frequency_hz, psd_quanta.
Table spectrum_table(const Spectrum& s, const std::string& comment);
Spectrum spectrum_from_table(const Table& t, Frame frame = Frame::ThermometryRotatingFrame);

/// JSON sidecar for a spectrum: frame, parameter hash, floor, sample count.
std::string spectrum_json(const Spectrum& s, const std::string& params_hash, double floor);

std::string sha256_hex(const std::string& bytes);
std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& bytes);

}  // namespace coldamp
