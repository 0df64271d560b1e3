// chaoslab: rate tables, verification suites and density exports for the
// quadratic variation of fractional Gaussian noise.

#include "chaoslab/experiments.hpp"

#include "CLI11.hpp"

#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

namespace {

using namespace chaoslab;

constexpr int kExitOk = 0;
constexpr int kExitCheckFailed = 1;
constexpr int kExitUsage = 2;
constexpr int kExitNumerical = 3;

Json read_json_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw InvalidArgument("cannot open " + path);
    try {
        return Json::parse(is);
    } catch (const nlohmann::json::exception& e) {
        throw InvalidArgument(path + ": " + e.what());
    }
}

/// Fills options that were not given on the command line from a JSON object.
template <class T>
void from_config(const Json& cfg, const char* key, const CLI::Option* opt, T& target) {
    if (opt->count() == 0 && cfg.contains(key)) target = cfg.at(key).get<T>();
}

void emit(const std::string& path, const std::string& text) {
    if (path.empty() || path == "-") {
        std::cout << text;
    } else {
        write_text(path, text);
    }
}

bool ends_with(const std::string& s, const std::string& suffix) {
    return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

struct RatesArgs {
    std::vector<double> hurst = ExperimentMatrix::default_matrix().hurst;
    std::size_t n_min = 64;
    std::size_t n_max = 4096;
    std::uint64_t seed = McConfig{}.seed;
    std::size_t samples = McConfig{}.samples;
    bool no_mc = false;
    std::size_t threads = 1;
    std::string out = "-";
    std::string format;
};

int run_rates(const RatesArgs& a) {
    if (a.n_min < 64) throw InvalidArgument("--n-min must be >= 64");
    ExperimentMatrix m{a.hurst, ExperimentMatrix::geometric(a.n_min, a.n_max)};
    std::optional<McConfig> mc;
    if (!a.no_mc) {
        McConfig cfg;
        cfg.samples = a.samples;
        cfg.seed = a.seed;
        cfg.validate();
        mc = cfg;
    }
    SpectrumCache cache;
    const auto table = rate_table(m, mc, cache, {}, a.threads);

    std::string format = a.format;
    if (format.empty()) format = ends_with(a.out, ".json") ? "json" : "csv";
    if (format == "json") {
        Json j = to_json(table);
        j["seed"] = a.seed;
        j["samples"] = mc ? Json(a.samples) : Json(nullptr);
        Json fits = Json::object();
        for (double h : m.hurst) {
            Json per = Json::object();
            for (const char* col : {"kappa4", "fisher_excess", "tv"}) {
                try {
                    per[col] = to_json(fit_slope(table, col, h));
                } catch (const InsufficientData& e) {
                    per[col] = {{"error", e.what()}};
                }
            }
            fits[format_number(h)] = per;
        }
        j["slopes"] = fits;
        emit(a.out, dump(j));
    } else {
        emit(a.out, rate_table_csv(table));
    }
    const bool any_failure =
        std::any_of(table.rows.begin(), table.rows.end(), [](const RateRow& r) {
            return std::any_of(r.notes.begin(), r.notes.end(),
                               [](const std::string& s) { return s.rfind("warning", 0) != 0; });
        });
    return any_failure ? kExitNumerical : kExitOk;
}

struct VerifyArgs {
    std::string suite;
    std::string matrix = "default";
    std::uint64_t seed = McConfig{}.seed;
    std::size_t samples = McConfig{}.samples;
    std::vector<double> powers{2.0, 4.0, 6.0};
    std::string out = "-";
};

int run_verify(const VerifyArgs& a) {
    const bool custom = a.matrix != "default";
    const ExperimentMatrix m = custom ? ExperimentMatrix::from_json(read_json_file(a.matrix))
                                      : ExperimentMatrix::default_matrix();
    McConfig cfg;
    cfg.samples = a.samples;
    cfg.seed = a.seed;
    cfg.validate();

    SuiteReport rep;
    if (a.suite == "inequalities") {
        SpectrumCache cache;
        rep = verify_inequalities(m, cache);
    } else if (a.suite == "debruijn") {
        rep = verify_debruijn(custom ? m : ExperimentMatrix{{0.5, 0.7}, {16, 64, 256}});
    } else if (a.suite == "carbery-wright") {
        rep = verify_carbery_wright(m, cfg);
    } else if (a.suite == "negmoments") {
        rep = verify_negmoments(custom ? m : ExperimentMatrix{{0.3, 0.6}, m.ns}, a.powers, cfg);
    } else if (a.suite == "algebra") {
        rep = verify_algebra(a.seed);
    } else {
        throw InvalidArgument("unknown suite " + a.suite);
    }
    emit(a.out, dump(rep.to_json()));
    return rep.passed() ? kExitOk : kExitCheckFailed;
}

struct DensityArgs {
    double hurst = 0.5;
    std::size_t n = 64;
    std::size_t points = GridOptions{}.points;
    double half_width = GridOptions{}.half_width;
    bool no_refine = false;
    std::string out;
    std::string report = "-";
};

int run_density(const DensityArgs& a) {
    const auto spec = FgnSpec::of(a.hurst, a.n);
    GridOptions opts;
    opts.points = a.points;
    opts.half_width = a.half_width;
    opts.auto_refine = !a.no_refine;
    const auto s = spectrum(spec);
    const auto g = density(s, opts);
    if (ends_with(a.out, ".json")) {
        Json j = to_json(g);
        j["h"] = a.hurst;
        j["n"] = a.n;
        write_text(a.out, dump(j));
    } else {
        std::ostringstream os;
        write_density_csv(os, g);
        write_text(a.out, os.str());
    }
    auto r = distance_report(g);
    const auto k = cumulants(s, 4);
    r.kappa3 = k[3];
    r.kappa4 = k[4];
    r.provenance = spec;
    emit(a.report, dump(to_json(r)));
    return kExitOk;
}

struct NegMomentArgs {
    double hurst = 0.5;
    std::size_t n = 64;
    std::vector<double> powers{2.0};
    std::size_t samples = McConfig{}.samples;
    std::uint64_t seed = McConfig{}.seed;
    std::string out = "-";
};

int run_negmoments(const NegMomentArgs& a) {
    const auto spec = FgnSpec::of(a.hurst, a.n);
    McConfig cfg;
    cfg.samples = a.samples;
    cfg.seed = a.seed;
    cfg.validate();
    const auto est = neg_moments(sample_DF_norm_sq(spec, cfg), a.powers, cfg.batch);
    Json rows = Json::array();
    for (std::size_t i = 0; i < est.size(); ++i) rows.push_back(mc_row(spec, a.powers[i], est[i], a.seed));
    emit(a.out, dump({{"schema", kSchema}, {"rows", rows}}));
    for (const auto& e : est)
        if (e.tail_flag) std::cerr << "warning: estimate dominated by <0.1% of samples\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"chaoslab: second-chaos normal approximation experiments for fGn quadratic variation"};
    app.require_subcommand(1);
    std::string config_path;
    app.add_option("--config", config_path, "JSON file supplying defaults; flags override")->check(CLI::ExistingFile);

    RatesArgs ra;
    auto* rates = app.add_subcommand("rates", "rate table over an (h, n) matrix");
    auto* o_h = rates->add_option("--hurst", ra.hurst, "Hurst indices")->delimiter(',');
    auto* o_nmin = rates->add_option("--n-min", ra.n_min, "smallest n (>= 64)");
    auto* o_nmax = rates->add_option("--n-max", ra.n_max, "largest n; n doubles from n-min");
    auto* o_seed = rates->add_option("--seed", ra.seed, "Monte Carlo seed");
    auto* o_samples = rates->add_option("--samples", ra.samples, "Monte Carlo samples per point");
    rates->add_flag("--no-mc", ra.no_mc, "skip the Monte Carlo Stein bound");
    rates->add_option("--threads", ra.threads, "worker threads (output does not depend on this)")
        ->check(CLI::PositiveNumber);
    rates->add_option("--out", ra.out, "output path, - for stdout");
    rates->add_option("--format", ra.format, "csv or json")->check(CLI::IsMember({"csv", "json"}));

    VerifyArgs va;
    auto* verify = app.add_subcommand("verify", "run a verification suite");
    verify->add_option("--suite", va.suite, "inequalities, debruijn, carbery-wright, negmoments or algebra")
        ->required()
        ->check(CLI::IsMember({"inequalities", "debruijn", "carbery-wright", "negmoments", "algebra"}));
    verify->add_option("--matrix", va.matrix, "default or a JSON file {hurst, n | n_min, n_max}");
    auto* v_seed = verify->add_option("--seed", va.seed, "Monte Carlo seed");
    auto* v_samples = verify->add_option("--samples", va.samples, "Monte Carlo samples per point");
    verify->add_option("--power", va.powers, "negative-moment powers")->delimiter(',');
    verify->add_option("--out", va.out, "report path, - for stdout");

    DensityArgs da;
    auto* dens = app.add_subcommand("density", "density grid and distance report for one (h, n)");
    dens->add_option("--hurst", da.hurst, "Hurst index")->required();
    dens->add_option("--n", da.n, "number of increments")->required();
    dens->add_option("--points", da.points, "grid points (power of two >= 4096)");
    dens->add_option("--half-width", da.half_width, "grid half width");
    dens->add_flag("--no-refine", da.no_refine, "fail instead of enlarging a coarse grid");
    dens->add_option("--out", da.out, "density file (.csv or .json)")->required();
    dens->add_option("--report", da.report, "distance report path, - for stdout");

    NegMomentArgs na;
    auto* neg = app.add_subcommand("negmoments", "Monte Carlo E||DF_n||^-p");
    neg->add_option("--hurst", na.hurst, "Hurst index")->required();
    neg->add_option("--n", na.n, "number of increments")->required();
    neg->add_option("--power", na.powers, "powers p in [0, 8]")->delimiter(',')->required();
    auto* n_samples = neg->add_option("--samples", na.samples, "Monte Carlo samples");
    auto* n_seed = neg->add_option("--seed", na.seed, "Monte Carlo seed");
    neg->add_option("--out", na.out, "output path, - for stdout");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (!config_path.empty()) {
            const Json cfg = read_json_file(config_path);
            from_config(cfg, "hurst", o_h, ra.hurst);
            from_config(cfg, "n_min", o_nmin, ra.n_min);
            from_config(cfg, "n_max", o_nmax, ra.n_max);
            from_config(cfg, "seed", o_seed, ra.seed);
            from_config(cfg, "samples", o_samples, ra.samples);
            from_config(cfg, "seed", v_seed, va.seed);
            from_config(cfg, "samples", v_samples, va.samples);
            from_config(cfg, "seed", n_seed, na.seed);
            from_config(cfg, "samples", n_samples, na.samples);
        }
        if (*rates) return run_rates(ra);
        if (*verify) return run_verify(va);
        if (*dens) return run_density(da);
        if (*neg) return run_negmoments(na);
    } catch (const InvalidArgument& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const nlohmann::json::exception& e) {
        std::cerr << "error: bad config: " << e.what() << '\n';
        return kExitUsage;
    } catch (const Error& e) {
        std::cerr << "numerical failure: " << e.what() << '\n';
        return kExitNumerical;
    }
    return kExitUsage;
}
