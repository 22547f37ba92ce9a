#pragma once

#include <bsgen/error.hpp>
#include <bsgen/popsim.hpp>

#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace bsgen {

/// Experiment configuration. Flat `key = value` text, one entry per line,
/// `#` starts a comment. Keys:
///
///   N, mu, s, T, seed, snapshot_dt, simplify_interval   model
///   sample_size    n, individuals sampled at T a_N
///   t              the backward window is [0, (t + 1) a_N]
///   times          comma list of offsets u; partitions at a_N (1 + u)
///   reps, workers, out, bootstrap
///   delta, epsilon constants entering b
struct ExperimentConfig {
    ModelParams model;
    int sample_size = 4;
    double t = 1.0;
    std::vector<double> times{0.25, 0.5, 1.0};
    std::size_t reps = 1;
    unsigned workers = 1;
    std::string out = "out";
    std::size_t bootstrap = 1000;
    double delta = 0.01;
    double epsilon = 0.1;
};

using KeyValues = std::map<std::string, std::string>;

inline const std::vector<std::string>& config_keys() {
    static const std::vector<std::string> keys{"N",    "mu",    "s",    "T",         "seed",  "snapshot_dt",
                                               "simplify_interval", "sample_size", "t",     "times",
                                               "reps", "workers", "out", "bootstrap", "delta", "epsilon"};
    return keys;
}

inline const std::vector<std::string>& model_keys() {
    static const std::vector<std::string> keys{"N", "mu", "s", "T", "seed", "snapshot_dt", "simplify_interval"};
    return keys;
}

namespace detail {

inline std::string trim(std::string_view s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string_view::npos)
        return {};
    const auto b = s.find_last_not_of(" \t\r");
    return std::string(s.substr(a, b - a + 1));
}

inline std::string join_errors(const std::vector<std::string>& errs) {
    std::string msg;
    for (const auto& e : errs)
        msg += (msg.empty() ? "" : "\n") + e;
    return msg;
}

template <typename T>
bool parse_number(const std::string& text, T& out) {
    const char* end = text.data() + text.size();
    auto [p, ec] = std::from_chars(text.data(), end, out);
    return ec == std::errc() && p == end;
}

inline std::string format_double(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

} // namespace detail

/// Splits the text into key/value pairs. Syntax problems (missing '=',
/// empty key, duplicates) are collected into `errors`.
inline KeyValues parse_key_values(std::string_view text, std::vector<std::string>& errors) {
    KeyValues kv;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        auto nl = text.find('\n', pos);
        if (nl == std::string_view::npos)
            nl = text.size();
        ++line_no;
        std::string_view line = text.substr(pos, nl - pos);
        pos = nl + 1;
        if (auto hash = line.find('#'); hash != std::string_view::npos)
            line = line.substr(0, hash);
        const auto body = detail::trim(line);
        if (body.empty())
            continue;
        const auto eq = body.find('=');
        if (eq == std::string::npos) {
            errors.push_back("line " + std::to_string(line_no) + ": expected 'key = value'");
            continue;
        }
        const auto key = detail::trim(std::string_view(body).substr(0, eq));
        const auto value = detail::trim(std::string_view(body).substr(eq + 1));
        if (key.empty()) {
            errors.push_back("line " + std::to_string(line_no) + ": empty key");
            continue;
        }
        if (!kv.emplace(key, value).second)
            errors.push_back(key + ": given more than once (line " + std::to_string(line_no) + ")");
    }
    return kv;
}

inline std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw ConfigError("cannot open config file '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

/// Builds a config from key/value pairs, filling defaults. Every violation is
/// collected; a non-empty list comes back as one ConfigError with one line
/// per problem. `allowed` restricts the accepted keys (empty: all keys).
/// With `experiment` false only the model constraints apply.
inline ExperimentConfig config_from_values(const KeyValues& kv, std::vector<std::string> errors = {},
                                           const std::vector<std::string>& allowed = config_keys(),
                                           bool experiment = true) {
    ExperimentConfig c;
    for (const auto& [k, v] : kv) {
        bool known = false;
        for (const auto& a : allowed)
            known = known || a == k;
        if (!known)
            errors.push_back("unknown key '" + k + "'");
    }
    auto get = [&](const char* key, auto& field, const char* what) {
        auto it = kv.find(key);
        if (it == kv.end())
            return false;
        if (!detail::parse_number(it->second, field)) {
            errors.push_back(std::string(key) + ": '" + it->second + "' is not " + what);
            return false;
        }
        return true;
    };
    std::int64_t N = c.model.N;
    get("N", N, "an integer");
    c.model.N = N;
    get("mu", c.model.mu, "a number");
    get("s", c.model.s, "a number");
    get("T", c.model.T, "a number");
    get("seed", c.model.seed, "an unsigned 64-bit integer");
    get("snapshot_dt", c.model.snapshot_dt, "a number");
    get("simplify_interval", c.model.simplify_interval, "an integer");
    get("sample_size", c.sample_size, "an integer");
    get("t", c.t, "a number");
    get("reps", c.reps, "a non-negative integer");
    get("workers", c.workers, "a non-negative integer");
    get("bootstrap", c.bootstrap, "a non-negative integer");
    get("delta", c.delta, "a number");
    get("epsilon", c.epsilon, "a number");
    if (auto it = kv.find("out"); it != kv.end()) {
        if (it->second.empty())
            errors.push_back("out: must not be empty");
        c.out = it->second;
    }
    if (auto it = kv.find("times"); it != kv.end()) {
        c.times.clear();
        std::string_view rest = it->second;
        while (true) {
            const auto comma = rest.find(',');
            const auto item = detail::trim(rest.substr(0, comma));
            double u = 0;
            if (!detail::parse_number(item, u))
                errors.push_back("times: '" + item + "' is not a number");
            else
                c.times.push_back(u);
            if (comma == std::string_view::npos)
                break;
            rest = rest.substr(comma + 1);
        }
    }

    const auto& m = c.model;
    auto num = [](double x) { return detail::format_double(x); };
    if (m.N < 2 || m.N > std::numeric_limits<std::int32_t>::max())
        errors.push_back("N: must lie in [2, 2^31 - 1] (got " + std::to_string(m.N) + ")");
    if (!(m.mu > 0.0))
        errors.push_back("mu: must be positive (got " + num(m.mu) + ")");
    if (!(m.s > 0.0) || !(m.s < 1.0))
        errors.push_back("s: must lie in (0, 1) (got " + num(m.s) + ")");
    if (m.mu > 0.0 && m.s > 0.0 && !(m.mu < m.s))
        errors.push_back("mu, s: require mu < s (got mu = " + num(m.mu) + ", s = " + num(m.s) + ")");
    if (!(m.T > 0.0) || !std::isfinite(m.T))
        errors.push_back("T: must be positive (got " + num(m.T) + ")");
    if (m.snapshot_dt < 0.0)
        errors.push_back("snapshot_dt: must be non-negative (0 picks a_N / 50)");
    if (m.simplify_interval < 0)
        errors.push_back("simplify_interval: must be non-negative (0 means N)");
    if (experiment) {
        if (c.sample_size < 1 || c.sample_size > m.N)
            errors.push_back("sample_size: must lie in [1, N] (got " + std::to_string(c.sample_size) + ")");
        if (!(c.t > 0.0))
            errors.push_back("t: must be positive (got " + num(c.t) + ")");
        if (!(m.T > c.t + 2.0))
            errors.push_back("T, t: the sampling time must satisfy T > t + 2 (got T = " + num(m.T) + ", t = " + num(c.t) +
                             ")");
        if (c.times.empty())
            errors.push_back("times: at least one offset is required");
        for (std::size_t i = 0; i < c.times.size(); ++i) {
            const double u = c.times[i];
            if (!(u >= 0.0) || !(u <= c.t))
                errors.push_back("times: offset " + num(u) + " puts the backward time 1 + u outside [1, t + 1]");
            if (i > 0 && !(u > c.times[i - 1]))
                errors.push_back("times: offsets must be strictly increasing");
        }
        if (c.reps < 1)
            errors.push_back("reps: must be at least 1");
        if (c.workers < 1)
            errors.push_back("workers: must be at least 1");
        if (c.bootstrap < 10)
            errors.push_back("bootstrap: must be at least 10");
        if (!(c.delta > 0.0 && c.delta < 1.0))
            errors.push_back("delta: must lie in (0, 1)");
        if (!(c.epsilon > 0.0 && c.epsilon < 1.0))
            errors.push_back("epsilon: must lie in (0, 1)");
    }
    if (!errors.empty())
        throw ConfigError(detail::join_errors(errors));
    return c;
}

inline ExperimentConfig parse_config(std::string_view text) {
    std::vector<std::string> errors;
    const auto kv = parse_key_values(text, errors);
    return config_from_values(kv, std::move(errors));
}

/// Reads and checks an experiment config file.
inline ExperimentConfig validate_config(const std::string& path) { return parse_config(read_text_file(path)); }

/// Model-only config (the `simulate` command): accepts just the model keys.
inline ModelParams parse_model_config(std::string_view text) {
    std::vector<std::string> errors;
    const auto kv = parse_key_values(text, errors);
    return config_from_values(kv, std::move(errors), model_keys(), false).model;
}

/// Normalized echo: every key in fixed order, defaults filled, doubles
/// printed round-trip exact.
inline KeyValues config_values(const ExperimentConfig& c) {
    using detail::format_double;
    KeyValues kv;
    kv["N"] = std::to_string(c.model.N);
    kv["mu"] = format_double(c.model.mu);
    kv["s"] = format_double(c.model.s);
    kv["T"] = format_double(c.model.T);
    kv["seed"] = std::to_string(c.model.seed);
    kv["snapshot_dt"] = format_double(c.model.snapshot_dt);
    kv["simplify_interval"] = std::to_string(c.model.simplify_interval);
    kv["sample_size"] = std::to_string(c.sample_size);
    kv["t"] = format_double(c.t);
    std::string times;
    for (double u : c.times)
        times += (times.empty() ? "" : ",") + format_double(u);
    kv["times"] = times;
    kv["reps"] = std::to_string(c.reps);
    kv["workers"] = std::to_string(c.workers);
    kv["out"] = c.out;
    kv["bootstrap"] = std::to_string(c.bootstrap);
    kv["delta"] = format_double(c.delta);
    kv["epsilon"] = format_double(c.epsilon);
    return kv;
}

inline std::string normalized_text(const ExperimentConfig& c) {
    const auto kv = config_values(c);
    std::string out;
    for (const auto& k : config_keys())
        out += k + " = " + kv.at(k) + "\n";
    return out;
}

/// FNV-1a 64 of the normalized text, without `out` and `workers`, which do
/// not affect results.
inline std::string config_hash(const ExperimentConfig& c) {
    auto copy = c;
    copy.out = "";
    copy.workers = 1;
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : normalized_text(copy)) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

} // namespace bsgen
