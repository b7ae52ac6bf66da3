#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>
#include <string>

#include "icofact/accel.hpp"
#include "icofact/errors.hpp"
#include "icofact/pipeline.hpp"
#include "icofact/schemes.hpp"

namespace icofact {
namespace {

std::string lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
    return out;
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

template <typename T>
T parse_number(std::string_view key, std::string_view value) {
    value = trim(value);
    T out{};
    auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
    if (ec != std::errc{} || ptr != value.data() + value.size()) {
        throw ConfigError("invalid value '" + std::string(value) + "' for key " + std::string(key));
    }
    return out;
}

}  // namespace

SchemeKind parse_scheme(std::string_view s) {
    const std::string v = lower(trim(s));
    if (v == "dl") return SchemeKind::DL;
    if (v == "pnnmf") return SchemeKind::PNNMF;
    if (v == "spnnmf") return SchemeKind::SPNNMF;
    if (v == "ppnmf") return SchemeKind::PPNMF;
    throw ConfigError("unknown scheme '" + std::string(s) + "' (expected dl|pnnmf|spnnmf|ppnmf)");
}

std::string_view to_string(ExtrapolationKind k) {
    switch (k) {
        case ExtrapolationKind::None: return "none";
        case ExtrapolationKind::Standard: return "standard";
        case ExtrapolationKind::LogBounded: return "log";
    }
    return "?";
}

ExtrapolationKind parse_extrapolation(std::string_view s) {
    const std::string v = lower(trim(s));
    if (v == "none") return ExtrapolationKind::None;
    if (v == "standard") return ExtrapolationKind::Standard;
    if (v == "log") return ExtrapolationKind::LogBounded;
    throw ConfigError("unknown extrapolation '" + std::string(s) + "' (expected none|standard|log)");
}

void SchemeConfig::validate() const {
    auto need = [](bool ok, const std::string& what) {
        if (!ok) throw ConfigError(what);
    };
    need(n_d >= 1, "nd must be >= 1");
    need(multistart_count >= 1, "multistarts must be >= 1");
    need(multistart_iters >= 1, "iters must be >= 1");
    need(refine_rounds >= 0, "refine-rounds must be >= 0");
    need(faces_per_round >= 1, "faces-per-round must be >= 1");
    need(iters_per_round >= 1, "iters-per-round must be >= 1");
    need(!lambda || *lambda >= 0, "lambda must be >= 0");
    need(!warmup || *warmup >= 0, "warmup must be >= 0");
    need(data_level >= 0 && data_level <= IcosphereHierarchy::kDefaultLevelCap,
         "level must be in [0, " + std::to_string(IcosphereHierarchy::kDefaultLevelCap) + "]");
    need(sigma0 > 0, "sigma0 must be > 0");
    need(tau > 0, "tau must be > 0");
    need(!(extrapolation == ExtrapolationKind::LogBounded && kind == SchemeKind::DL),
         "log extrapolation is undefined for DL (signed factors)");
}

void set_config_key(SchemeConfig& cfg, std::string_view raw_key, std::string_view value) {
    std::string key = lower(trim(raw_key));
    std::replace(key.begin(), key.end(), '_', '-');
    value = trim(value);
    if (key == "scheme") {
        cfg.kind = parse_scheme(value);
    } else if (key == "lambda") {
        cfg.lambda = parse_number<double>(key, value);
    } else if (key == "extrapolation") {
        cfg.extrapolation = parse_extrapolation(value);
    } else if (key == "warmup") {
        cfg.warmup = parse_number<int>(key, value);
    } else if (key == "nd" || key == "n-d") {
        cfg.n_d = parse_number<int>(key, value);
    } else if (key == "multistarts" || key == "multistart-count") {
        cfg.multistart_count = parse_number<int>(key, value);
    } else if (key == "iters" || key == "multistart-iters") {
        cfg.multistart_iters = parse_number<int>(key, value);
    } else if (key == "refine-rounds") {
        cfg.refine_rounds = parse_number<int>(key, value);
    } else if (key == "faces-per-round") {
        cfg.faces_per_round = parse_number<int>(key, value);
    } else if (key == "iters-per-round") {
        cfg.iters_per_round = parse_number<int>(key, value);
    } else if (key == "seed") {
        cfg.seed = parse_number<std::uint64_t>(key, value);
    } else if (key == "level" || key == "data-level") {
        cfg.data_level = parse_number<int>(key, value);
    } else if (key == "sigma0") {
        cfg.sigma0 = parse_number<double>(key, value);
    } else if (key == "tau") {
        cfg.tau = parse_number<double>(key, value);
    } else {
        throw ConfigError("unknown config key '" + std::string(raw_key) + "'");
    }
}

SchemeConfig parse_config(std::string_view text, SchemeConfig base) {
    std::istringstream in{std::string(text)};
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        std::string_view v = line;
        if (const auto hash = v.find('#'); hash != std::string_view::npos) v = v.substr(0, hash);
        v = trim(v);
        if (v.empty()) continue;
        const auto eq = v.find('=');
        if (eq == std::string_view::npos) {
            throw ConfigError("config line " + std::to_string(lineno) + ": expected key=value");
        }
        set_config_key(base, v.substr(0, eq), v.substr(eq + 1));
    }
    return base;
}

SchemeConfig load_config(const std::filesystem::path& path, SchemeConfig base) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str(), std::move(base));
}

}  // namespace icofact
