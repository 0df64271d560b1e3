#pragma once

// JSON and CSV serialization. Every number goes through one formatter so that
// identical runs produce byte-identical files.

#include "chaoslab/chaos_algebra.hpp"
#include "chaoslab/errors.hpp"
#include "chaoslab/fgn_model.hpp"
#include "chaoslab/metrics.hpp"
#include "chaoslab/sampler.hpp"
#include "chaoslab/second_chaos.hpp"

#include "json.hpp"

#include <cmath>
#include <charconv>
#include <fstream>
#include <ostream>
#include <string>

namespace chaoslab {

using Json = nlohmann::ordered_json;

inline constexpr const char* kSchema = "chaoslab/1";

/// Shortest round-trip decimal form, with nan/inf spelled out.
inline std::string format_number(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

/// JSON has no nan/inf: those become null.
inline Json json_number(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

inline Json to_json(const McEstimate& e) {
    return {{"mean", json_number(e.mean)},
            {"se", json_number(e.std_error)},
            {"samples", e.samples_used},
            {"tail_flag", e.tail_flag}};
}

inline Json to_json(const SecondChaosSpectrum& s) {
    Json j{{"schema", kSchema}};
    if (s.source) {
        j["h"] = s.source->h();
        j["n"] = s.source->n;
    }
    j["vn"] = json_number(s.vn);
    j["lambdas"] = s.lambdas;
    return j;
}

inline SecondChaosSpectrum spectrum_from_json(const Json& j) {
    auto s = SecondChaosSpectrum::from_lambdas(j.at("lambdas").get<std::vector<double>>());
    if (j.contains("h") && j.contains("n")) s.source = FgnSpec::of(j["h"].get<double>(), j["n"].get<std::size_t>());
    if (j.contains("vn") && j["vn"].is_number()) s.vn = j["vn"].get<double>();
    return s;
}

inline Json to_json(const DensityGrid& g) {
    Json j{{"schema", kSchema}, {"x0", g.x0}, {"dx", g.dx}};
    j["left_support_edge"] = g.left_support_edge ? Json(*g.left_support_edge) : Json(nullptr);
    j["edge_exponent"] = g.edge_exponent ? Json(*g.edge_exponent) : Json(nullptr);
    j["mass_defect"] = g.mass_defect;
    j["clamped_mass"] = g.clamped_mass;
    j["p"] = g.p;
    j["dp"] = g.dp;
    return j;
}

inline DensityGrid density_from_json(const Json& j) {
    DensityGrid g;
    g.x0 = j.at("x0").get<double>();
    g.dx = j.at("dx").get<double>();
    g.p = j.at("p").get<std::vector<double>>();
    g.dp = j.at("dp").get<std::vector<double>>();
    if (g.p.size() != g.dp.size()) throw DimensionMismatch("density grid: p and dp differ in length");
    if (j.contains("left_support_edge") && j["left_support_edge"].is_number())
        g.left_support_edge = j["left_support_edge"].get<double>();
    if (j.contains("edge_exponent") && j["edge_exponent"].is_number())
        g.edge_exponent = j["edge_exponent"].get<double>();
    g.mass_defect = j.value("mass_defect", 0.0);
    g.clamped_mass = j.value("clamped_mass", 0.0);
    return g;
}

inline void write_density_csv(std::ostream& os, const DensityGrid& g) {
    os << "x,p,dp\n";
    for (std::size_t j = 0; j < g.size(); ++j)
        os << format_number(g.x(j)) << ',' << format_number(g.p[j]) << ',' << format_number(g.dp[j]) << '\n';
}

inline Json fisher_json(const FisherExcess& f) { return f.is_finite() ? Json(f.value()) : Json("divergent"); }

inline Json to_json(const DistanceReport& r) {
    Json j{{"schema", kSchema}};
    if (r.provenance) {
        j["h"] = r.provenance->h();
        j["n"] = r.provenance->n;
    }
    j["tv"] = r.tv;
    j["sup"] = r.sup;
    j["entropy"] = r.entropy;
    j["fisher_excess"] = fisher_json(r.fisher);
    Json lr = Json::object();
    for (const auto& [p, v] : r.l_r) lr[format_number(p)] = v;
    j["l_r"] = lr;
    j["stein_bound"] = r.stein_bound ? Json(*r.stein_bound) : Json(nullptr);
    j["kappa3"] = r.kappa3;
    j["kappa4"] = r.kappa4;
    j["error_budget"] = {{"tv", r.error_budget}, {"mass_defect", r.mass_defect}};
    const auto chain = check_chain(r);
    j["chain"] = {{"pinsker", chain.pinsker}, {"log_sobolev", chain.log_sobolev}, {"shimizu", chain.shimizu}};
    return j;
}

inline std::string distance_csv_header() { return "h,n,kappa3,kappa4,tv,sup,entropy,fisher_excess,stein_bound,error_budget"; }

inline std::string distance_csv_row(const DistanceReport& r) {
    std::string s;
    s += r.provenance ? format_number(r.provenance->h()) : "";
    s += ',';
    s += r.provenance ? std::to_string(r.provenance->n) : "";
    for (double v : {r.kappa3, r.kappa4, r.tv, r.sup, r.entropy}) s += ',' + format_number(v);
    s += ',' + (r.fisher.is_finite() ? format_number(r.fisher.value()) : std::string("divergent"));
    s += ',' + (r.stein_bound ? format_number(*r.stein_bound) : std::string());
    s += ',' + format_number(r.error_budget);
    return s;
}

/// One Monte Carlo estimate row {h, n, p, mean, se, samples, tail_flag, seed}.
inline Json mc_row(const FgnSpec& spec, double p, const McEstimate& e, std::uint64_t seed) {
    return {{"h", spec.h()},
            {"n", spec.n},
            {"p", p},
            {"mean", json_number(e.mean)},
            {"se", json_number(e.std_error)},
            {"samples", e.samples_used},
            {"tail_flag", e.tail_flag},
            {"seed", seed}};
}

/// Sorted-index coefficient list of a symmetric kernel.
inline Json to_json(const SymmetricTensor& f) {
    Json entries = Json::array();
    for (std::size_t r = 0; r < f.size(); ++r) {
        if (f.coefficient(r) == 0.0) continue;
        const auto idx = f.index(r);
        entries.push_back({{"index", std::vector<int>(idx.begin(), idx.end())}, {"value", f.coefficient(r)}});
    }
    return {{"schema", kSchema}, {"order", f.order()}, {"dim", f.dim()}, {"entries", entries}};
}

inline SymmetricTensor tensor_from_json(const Json& j) {
    SymmetricTensor f(j.at("order").get<int>(), j.at("dim").get<int>());
    for (const auto& e : j.at("entries")) f.set(e.at("index").get<std::vector<int>>(), e.at("value").get<double>());
    return f;
}

inline void write_text(const std::string& path, const std::string& text) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw InvalidArgument("cannot open " + path + " for writing");
    os << text;
    if (!os) throw InvalidArgument("write failed: " + path);
}

inline std::string dump(const Json& j) { return j.dump(2) + "\n"; }

}  // namespace chaoslab
