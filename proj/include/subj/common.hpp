#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace subj {

using json = nlohmann::json;
namespace fs = std::filesystem;

class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Bad input supplied by a caller (arguments, request bodies, configuration).
class ValidationError : public Error {
  public:
    using Error::Error;
};

/// A record file could not be read or parsed; carries the 1-based line.
class ParseError : public Error {
  public:
    ParseError(const std::string& file, std::size_t line, const std::string& what)
        : Error(file + ":" + std::to_string(line) + ": " + what), file_(file), line_(line)
    {}
    const std::string& file() const noexcept { return file_; }
    std::size_t line() const noexcept { return line_; }

  private:
    std::string file_;
    std::size_t line_;
};

/// A record names an id that does not resolve.
class ReferenceError : public Error {
  public:
    ReferenceError(const std::string& what, std::string id)
        : Error(what + ": '" + id + "'"), id_(std::move(id))
    {}
    const std::string& id() const noexcept { return id_; }

  private:
    std::string id_;
};

class NotFoundError : public Error {
  public:
    using Error::Error;
};

class DuplicateError : public Error {
  public:
    using Error::Error;
};

// ---------------------------------------------------------------------------
// Line-delimited JSON records

inline std::vector<json> read_jsonl(const fs::path& path)
{
    std::ifstream in(path);
    if (!in) {
        throw Error("cannot open " + path.string());
    }
    std::vector<json> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) {
            continue;
        }
        try {
            out.push_back(json::parse(line));
        } catch (const json::exception& e) {
            throw ParseError(path.string(), lineno, e.what());
        }
        if (!out.back().is_object()) {
            throw ParseError(path.string(), lineno, "record is not an object");
        }
    }
    return out;
}

/// Calls fn(record, lineno) for every record; rethrows field errors with the line number.
template <typename Fn>
void for_each_record(const fs::path& path, Fn&& fn)
{
    std::ifstream in(path);
    if (!in) {
        throw Error("cannot open " + path.string());
    }
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) {
            continue;
        }
        json rec;
        try {
            rec = json::parse(line);
        } catch (const json::exception& e) {
            throw ParseError(path.string(), lineno, e.what());
        }
        if (!rec.is_object()) {
            throw ParseError(path.string(), lineno, "record is not an object");
        }
        try {
            fn(rec, lineno);
        } catch (const json::exception& e) {
            throw ParseError(path.string(), lineno, e.what());
        }
    }
}

inline void write_jsonl(const fs::path& path, const std::vector<json>& records)
{
    if (path.has_parent_path()) {
        fs::create_directories(path.parent_path());
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw Error("cannot write " + path.string());
    }
    for (const auto& r : records) {
        out << r.dump() << '\n';
    }
}

inline void append_jsonl(const fs::path& path, const json& record)
{
    if (path.has_parent_path()) {
        fs::create_directories(path.parent_path());
    }
    std::ofstream out(path, std::ios::binary | std::ios::app);
    if (!out) {
        throw Error("cannot write " + path.string());
    }
    out << record.dump() << '\n';
    out.flush();
}

inline std::vector<std::string> read_lines(const fs::path& path)
{
    std::ifstream in(path);
    if (!in) {
        throw Error("cannot open " + path.string());
    }
    std::vector<std::string> out;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        auto b = line.find_first_not_of(" \t");
        if (b == std::string::npos || line[b] == '#') {
            continue;
        }
        auto e = line.find_last_not_of(" \t");
        out.push_back(line.substr(b, e - b + 1));
    }
    return out;
}

inline void write_lines(const fs::path& path, const std::vector<std::string>& lines)
{
    if (path.has_parent_path()) {
        fs::create_directories(path.parent_path());
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw Error("cannot write " + path.string());
    }
    for (const auto& l : lines) {
        out << l << '\n';
    }
}

inline std::string read_file(const fs::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error("cannot open " + path.string());
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_file(const fs::path& path, std::string_view data)
{
    if (path.has_parent_path()) {
        fs::create_directories(path.parent_path());
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw Error("cannot write " + path.string());
    }
    out.write(data.data(), static_cast<std::streamsize>(data.size()));
}

// ---------------------------------------------------------------------------
// UTF-8

namespace utf8 {

/// Decodes one code point starting at s[i]; advances i. Invalid bytes decode as themselves.
inline char32_t next(std::string_view s, std::size_t& i)
{
    auto c = static_cast<unsigned char>(s[i]);
    std::size_t len = c < 0x80 ? 1 : (c >> 5) == 0x6 ? 2 : (c >> 4) == 0xe ? 3 : (c >> 3) == 0x1e ? 4 : 1;
    if (i + len > s.size()) {
        len = 1;
    }
    char32_t cp = len == 1 ? c : len == 2 ? (c & 0x1f) : len == 3 ? (c & 0x0f) : (c & 0x07);
    for (std::size_t k = 1; k < len; ++k) {
        cp = (cp << 6) | (static_cast<unsigned char>(s[i + k]) & 0x3f);
    }
    i += len;
    return cp;
}

inline std::vector<std::string> code_points(std::string_view s)
{
    std::vector<std::string> out;
    std::size_t i = 0;
    while (i < s.size()) {
        std::size_t start = i;
        next(s, i);
        out.emplace_back(s.substr(start, i - start));
    }
    return out;
}

}  // namespace utf8

inline std::string trim(std::string_view s)
{
    auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) {
        return {};
    }
    auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

// ---------------------------------------------------------------------------
// Hashing and seeded randomness

inline std::uint64_t fnv1a(std::string_view s, std::uint64_t h = 1469598103934665603ULL)
{
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

inline std::uint64_t mix64(std::uint64_t x)
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Seeded generator whose draws are fully specified (std distributions are not
/// portable across standard libraries, raw mt19937_64 output is).
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    /// Uniform in [0, 1).
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n).
    std::size_t index(std::size_t n)
    {
        if (n == 0) {
            throw std::invalid_argument("Rng::index on empty range");
        }
        return static_cast<std::size_t>(uniform() * static_cast<double>(n));
    }

    bool bernoulli(double p) { return uniform() < p; }

    template <typename T>
    const T& pick(const std::vector<T>& v)
    {
        return v[index(v.size())];
    }

    template <typename T>
    void shuffle(std::vector<T>& v)
    {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::swap(v[i - 1], v[index(i)]);
        }
    }

  private:
    std::mt19937_64 engine_;
};

/// Stable uniform in [0,1) derived from a seed and a key; no generator state.
inline double hashed_uniform(std::uint64_t seed, std::string_view key)
{
    return static_cast<double>(mix64(fnv1a(key, mix64(seed))) >> 11) * 0x1.0p-53;
}

// ---------------------------------------------------------------------------

/// Fixed-precision decimal rendering for reports, independent of locale.
inline std::string fmt_real(double v, int digits = 6)
{
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
    std::string s(buf);
    if (s == "-0." + std::string(static_cast<std::size_t>(digits), '0')) {
        s.erase(0, 1);
    }
    return s;
}

inline std::vector<std::string> split_list(std::string_view s, char sep = ',')
{
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == sep) {
            if (!cur.empty()) {
                out.push_back(cur);
            }
            cur.clear();
        } else if (c != ' ') {
            cur.push_back(c);
        }
    }
    if (!cur.empty()) {
        out.push_back(cur);
    }
    return out;
}

}  // namespace subj
