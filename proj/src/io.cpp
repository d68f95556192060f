#include "coldamp/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <openssl/evp.h>

#include "json.hpp"

namespace coldamp {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream is(s);
    while (std::getline(is, cur, sep)) out.push_back(trim(cur));
    return out;
}

double parse_number(const std::string& s, const std::string& where) {
    double v = 0.0;
    const char* b = s.data();
    const char* e = s.data() + s.size();
    if (!s.empty() && *b == '+') ++b;
    const auto r = std::from_chars(b, e, v);
    if (r.ec != std::errc() || r.ptr != e)
        throw ConfigError(where + ": expected a number, got '" + s + "'");
    return v;
}

}  // namespace

ConfigFile ConfigFile::parse(const std::string& text, const std::string& origin) {
    ConfigFile cfg;
    cfg.origin_ = origin;
    std::istringstream is(text);
    std::string line, section;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw ConfigError(origin + ":" + std::to_string(lineno) + ": malformed section header");
            section = trim(line.substr(1, line.size() - 2));
            cfg.data_[section];
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected 'key = value'");
        if (section.empty())
            throw ConfigError(origin + ":" + std::to_string(lineno) + ": key outside any [section]");
        const std::string key = trim(line.substr(0, eq));
        const std::string val = trim(line.substr(eq + 1));
        if (key.empty())
            throw ConfigError(origin + ":" + std::to_string(lineno) + ": empty key");
        auto& sec = cfg.data_[section];
        if (sec.count(key))
            throw ConfigError(origin + ":" + std::to_string(lineno) + ": duplicate key '" + key +
                              "' in [" + section + "] (first at line " +
                              std::to_string(sec[key].line) + ")");
        sec[key] = Entry{val, lineno};
    }
    return cfg;
}

ConfigFile ConfigFile::load(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open config file '" + path + "'");
    std::stringstream ss;
    ss << f.rdbuf();
    return parse(ss.str(), path);
}

bool ConfigFile::has(const std::string& s, const std::string& k) const {
    const auto it = data_.find(s);
    return it != data_.end() && it->second.count(k);
}

bool ConfigFile::has_section(const std::string& s) const { return data_.count(s) > 0; }

std::optional<ConfigFile::Entry> ConfigFile::entry(const std::string& s, const std::string& k) const {
    if (!has(s, k)) return std::nullopt;
    return data_.at(s).at(k);
}

std::string ConfigFile::where(const std::string& s, const std::string& k) const {
    const auto e = entry(s, k);
    return origin_ + ":" + (e ? std::to_string(e->line) : std::string("?")) + ": [" + s + "] " + k;
}

double ConfigFile::get_double(const std::string& s, const std::string& k) const {
    const auto e = entry(s, k);
    if (!e) throw ConfigError(origin_ + ": missing required key [" + s + "] " + k);
    return parse_number(e->value, where(s, k));
}

double ConfigFile::get_double(const std::string& s, const std::string& k, double fallback) const {
    return has(s, k) ? get_double(s, k) : fallback;
}

long long ConfigFile::get_int(const std::string& s, const std::string& k, long long fallback) const {
    if (!has(s, k)) return fallback;
    const double v = get_double(s, k);
    if (v != std::floor(v)) throw ConfigError(where(s, k) + ": expected an integer");
    return static_cast<long long>(v);
}

bool ConfigFile::get_bool(const std::string& s, const std::string& k, bool fallback) const {
    const auto e = entry(s, k);
    if (!e) return fallback;
    std::string v = e->value;
    std::transform(v.begin(), v.end(), v.begin(), ::tolower);
    if (v == "true" || v == "yes" || v == "1" || v == "on") return true;
    if (v == "false" || v == "no" || v == "0" || v == "off") return false;
    throw ConfigError(where(s, k) + ": expected a boolean, got '" + e->value + "'");
}

std::string ConfigFile::get_string(const std::string& s, const std::string& k,
                                   const std::string& fallback) const {
    const auto e = entry(s, k);
    return e ? e->value : fallback;
}

std::vector<double> ConfigFile::get_list(const std::string& s, const std::string& k) const {
    std::vector<double> out;
    const auto e = entry(s, k);
    if (!e) return out;
    for (const auto& item : split(e->value, ',')) {
        if (item.empty()) continue;
        out.push_back(parse_number(item, where(s, k)));
    }
    return out;
}

std::vector<std::string> ConfigFile::get_string_list(const std::string& s,
                                                     const std::string& k) const {
    std::vector<std::string> out;
    const auto e = entry(s, k);
    if (!e) return out;
    for (const auto& item : split(e->value, ','))
        if (!item.empty()) out.push_back(item);
    return out;
}

void ConfigFile::require_known(const std::map<std::string, std::set<std::string>>& schema) const {
    std::ostringstream bad;
    int count = 0;
    for (const auto& [sec, keys] : data_) {
        const auto it = schema.find(sec);
        if (it == schema.end()) {
            bad << (count++ ? "; " : "") << "unknown section [" << sec << "]";
            continue;
        }
        for (const auto& [key, e] : keys) {
            if (!it->second.count(key))
                bad << (count++ ? "; " : "") << "line " << e.line << ": unknown key '" << key
                    << "' in [" << sec << "]";
        }
    }
    if (count) throw ConfigError(origin_ + ": " + bad.str());
}

std::string format_double(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
}

std::string Table::to_csv() const {
    std::ostringstream os;
    if (!comment.empty()) os << "# " << comment << "\n";
    for (std::size_t j = 0; j < columns.size(); ++j) os << (j ? "," : "") << columns[j];
    os << "\n";
    for (const auto& r : rows) {
        for (std::size_t j = 0; j < r.size(); ++j) os << (j ? "," : "") << format_double(r[j]);
        os << "\n";
    }
    return os.str();
}

Table Table::from_csv(const std::string& text) {
    Table t;
    std::istringstream is(text);
    std::string line;
    bool header = false;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '#') {
            if (t.comment.empty()) t.comment = trim(line.substr(1));
            continue;
        }
        const auto cells = split(line, ',');
        if (!header) {
            t.columns = cells;
            header = true;
            continue;
        }
        if (cells.size() != t.columns.size())
            throw ConfigError("csv line " + std::to_string(lineno) + ": expected " +
                              std::to_string(t.columns.size()) + " fields");
        std::vector<double> row;
        for (const auto& c : cells) {
            if (c == "nan") row.push_back(std::nan(""));
            else row.push_back(parse_number(c, "csv line " + std::to_string(lineno)));
        }
        t.rows.push_back(std::move(row));
    }
    if (!header) throw ConfigError("csv has no header row");
    return t;
}

Table Table::load(const std::string& path) { return from_csv(read_file(path)); }

std::size_t Table::column(const std::string& name) const {
    const auto it = std::find(columns.begin(), columns.end(), name);
    if (it == columns.end()) throw ConfigError("csv lacks column '" + name + "'");
    return static_cast<std::size_t>(it - columns.begin());
}

Table spectrum_table(const Spectrum& s, const std::string& comment) {
    Table t;
    t.comment = comment;
    t.columns = {"frequency_hz", "psd_quanta"};
    t.rows.reserve(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) t.rows.push_back({to_hz(s.frequencies[i]), s.psd[i]});
    return t;
}

Spectrum spectrum_from_table(const Table& t, Frame frame) {
    const std::size_t cf = t.column("frequency_hz"), cp = t.column("psd_quanta");
    Spectrum s;
    s.frame = frame;
    for (const auto& r : t.rows) {
        s.frequencies.push_back(from_hz(r[cf]));
        s.psd.push_back(r[cp]);
    }
    s.check();
    return s;
}

std::string spectrum_json(const Spectrum& s, const std::string& params_hash, double floor) {
    nlohmann::ordered_json j;
    j["schema"] = "coldamp/spectrum/v1";
    j["frame"] = to_string(s.frame);
    j["params_sha256"] = params_hash;
    j["floor_quanta"] = floor;
    j["points"] = s.size();
    if (s.size()) {
        j["frequency_min_hz"] = to_hz(s.frequencies.front());
        j["frequency_max_hz"] = to_hz(s.frequencies.back());
    }
    return j.dump(2) + "\n";
}

std::string sha256_hex(const std::string& bytes) {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_MD_CTX* ctx = EVP_MD_CTX_new();
    if (!ctx || EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) != 1 ||
        EVP_DigestUpdate(ctx, bytes.data(), bytes.size()) != 1 ||
        EVP_DigestFinal_ex(ctx, md, &len) != 1) {
        EVP_MD_CTX_free(ctx);
        throw Error("sha256 computation failed");
    }
    EVP_MD_CTX_free(ctx);
    std::ostringstream os;
    for (unsigned int i = 0; i < len; ++i)
        os << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
    return os.str();
}

std::string read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ConfigError("cannot read '" + path + "'");
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

void write_file(const std::string& path, const std::string& bytes) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw Error("cannot write '" + path + "'");
    f << bytes;
    if (!f) throw Error("write failed for '" + path + "'");
}

}  // namespace coldamp
