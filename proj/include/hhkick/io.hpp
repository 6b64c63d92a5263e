#pragma once

// File plumbing for the CLI: RFC-4180 CSV output with a commented metadata
// header, a flat sectioned key-value config reader, and a stable config hash
// so every artifact can name the exact settings that produced it.

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace hhkick {

// Bad user input (config file, flag values, directory state). The CLI maps
// this to exit code 2, NumericalError to exit code 3.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Shortest decimal digits that round-trip a double.
inline std::string fmt_double(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    double back = 0.0;
    std::sscanf(buf, "%lg", &back);
    if (back == x) {
        char shorter[32];
        for (int prec = 1; prec < 17; ++prec) {
            std::snprintf(shorter, sizeof shorter, "%.*g", prec, x);
            std::sscanf(shorter, "%lg", &back);
            if (back == x) return shorter;
        }
    }
    return buf;
}

inline std::string csv_field(std::string_view s) {
    if (s.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(s);
    std::string out;
    out.reserve(s.size() + 2);
    out += '"';
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    out += '"';
    return out;
}

// CSV writer: '#'-prefixed metadata lines, then a header row, then data.
class CsvWriter {
  public:
    CsvWriter(const std::string& path, const std::vector<std::string>& metadata,
              const std::vector<std::string>& columns)
        : out_(path, std::ios::binary) {
        if (!out_) throw ConfigError("cannot open for writing: " + path);
        for (const auto& m : metadata) out_ << "# " << m << "\r\n";
        write_row(columns);
    }

    void write_row(const std::vector<std::string>& fields) {
        for (std::size_t i = 0; i < fields.size(); ++i) {
            if (i) out_ << ',';
            out_ << csv_field(fields[i]);
        }
        out_ << "\r\n";
    }

  private:
    std::ofstream out_;
};

// FNV-1a, for naming configurations.
inline std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

inline std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

namespace detail {

inline std::string trim(std::string_view s) {
    const auto a = s.find_first_not_of(" \t\r\n");
    if (a == std::string_view::npos) return {};
    const auto b = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(a, b - a + 1));
}

}  // namespace detail

// Flat key-value file with [section] headers; '#' or ';' starts a comment.
// Keys are returned as "section.key" ("" section for keys above the first
// header, returned bare).
inline std::map<std::string, std::string> parse_kv_config(std::istream& in,
                                                          const std::string& origin) {
    std::map<std::string, std::string> kv;
    std::string line, section;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto cut = line.find_first_of("#;");
        const std::string body = detail::trim(line.substr(0, cut));
        if (body.empty()) continue;
        if (body.front() == '[') {
            if (body.back() != ']')
                throw ConfigError(origin + ":" + std::to_string(lineno) +
                                  ": unterminated section header");
            section = detail::trim(body.substr(1, body.size() - 2));
            if (section.empty())
                throw ConfigError(origin + ":" + std::to_string(lineno) + ": empty section name");
            continue;
        }
        const auto eq = body.find('=');
        if (eq == std::string::npos)
            throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected key = value");
        const std::string key = detail::trim(body.substr(0, eq));
        const std::string val = detail::trim(body.substr(eq + 1));
        if (key.empty())
            throw ConfigError(origin + ":" + std::to_string(lineno) + ": empty key");
        const std::string full = section.empty() ? key : section + "." + key;
        if (kv.count(full))
            throw ConfigError(origin + ":" + std::to_string(lineno) + ": duplicate key " + full);
        kv[full] = val;
    }
    return kv;
}

}  // namespace hhkick
