#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "proxlangevin/diagnostics.hpp"
#include "proxlangevin/errors.hpp"
#include "proxlangevin/model.hpp"
#include "proxlangevin/parallel.hpp"
#include "proxlangevin/pgm.hpp"
#include "proxlangevin/problems.hpp"
#include "proxlangevin/rng.hpp"
#include "proxlangevin/samplers.hpp"
#include "proxlangevin/theory.hpp"

namespace proxlangevin {
namespace experiments {

using nlohmann::json;

class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Flat "section.key" -> string configuration. Values come from an INI-style
// file plus command-line overrides; overrides win.
struct ExperimentConfig {
    std::map<std::string, std::string> values;

    bool has(const std::string& key) const { return values.count(key) > 0; }
    void set(const std::string& key, const std::string& value) { values[key] = value; }

    std::string get_string(const std::string& key, const std::string& fallback) const {
        auto it = values.find(key);
        return it == values.end() ? fallback : it->second;
    }

    double get_double(const std::string& key, double fallback) const {
        auto it = values.find(key);
        if (it == values.end()) return fallback;
        try {
            std::size_t pos = 0;
            const double v = std::stod(it->second, &pos);
            if (pos != it->second.size()) throw std::invalid_argument("trailing");
            return v;
        } catch (const std::exception&) {
            throw ConfigError("config: '" + key + "' is not a number: " + it->second);
        }
    }

    std::int64_t get_int(const std::string& key, std::int64_t fallback) const {
        auto it = values.find(key);
        if (it == values.end()) return fallback;
        try {
            std::size_t pos = 0;
            const std::int64_t v = std::stoll(it->second, &pos);
            if (pos != it->second.size()) throw std::invalid_argument("trailing");
            return v;
        } catch (const std::exception&) {
            throw ConfigError("config: '" + key + "' is not an integer: " + it->second);
        }
    }

    bool get_bool(const std::string& key, bool fallback) const {
        auto it = values.find(key);
        if (it == values.end()) return fallback;
        const std::string& v = it->second;
        if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
        if (v == "false" || v == "0" || v == "no" || v == "off") return false;
        throw ConfigError("config: '" + key + "' is not a boolean: " + v);
    }

    std::vector<double> get_list(const std::string& key,
                                 const std::string& fallback_csv) const {
        const std::string raw = get_string(key, fallback_csv);
        std::vector<double> out;
        std::stringstream ss(raw);
        std::string item;
        while (std::getline(ss, item, ',')) {
            if (item.empty()) continue;
            try {
                out.push_back(std::stod(item));
            } catch (const std::exception&) {
                throw ConfigError("config: bad list element in '" + key + "': " + item);
            }
        }
        if (out.empty()) throw ConfigError("config: empty list for '" + key + "'");
        return out;
    }
};

inline std::string trim(const std::string& s) {
    const auto begin = s.find_first_not_of(" \t\r\n");
    if (begin == std::string::npos) return "";
    const auto end = s.find_last_not_of(" \t\r\n");
    return s.substr(begin, end - begin + 1);
}

// Line-oriented "key = value" file with [section] headers; '#' comments.
inline ExperimentConfig load_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot open " + path);
    ExperimentConfig cfg;
    std::string line, section;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[' && line.back() == ']') {
            section = trim(line.substr(1, line.size() - 2));
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config: line " + std::to_string(lineno) + " has no '='");
        std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty()) throw ConfigError("config: empty key at line " + std::to_string(lineno));
        if (!section.empty() && key.find('.') == std::string::npos)
            key = section + "." + key;
        cfg.set(key, value);
    }
    return cfg;
}

// Short flag names accepted by the CLI, mapped to their config keys.
inline std::string canonical_key(const std::string& flag) {
    static const std::map<std::string, std::string> aliases = {
        {"theta", "sampler.theta"},
        {"delta", "sampler.delta"},
        {"n-iters", "sampler.n_iters"},
        {"n_iters", "sampler.n_iters"},
        {"burn-in", "sampler.burn_in"},
        {"burn_in", "sampler.burn_in"},
        {"thinning", "sampler.thinning"},
        {"inner-tol", "sampler.inner_tol"},
        {"inner_tol", "sampler.inner_tol"},
        {"inner-max-iters", "sampler.inner_max_iters"},
        {"inner_max_iters", "sampler.inner_max_iters"},
        {"inner-solver", "sampler.inner_solver"},
        {"inner_solver", "sampler.inner_solver"},
        {"reflected", "sampler.reflected"},
        {"seed", "sampler.seed"},
        {"out", "output.dir"},
        {"kind", "problem.kind"},
        {"noise", "problem.noise"},
    };
    auto it = aliases.find(flag);
    return it == aliases.end() ? flag : it->second;
}

inline SamplerConfig sampler_from_config(const ExperimentConfig& cfg) {
    SamplerConfig sc;
    sc.theta = cfg.get_double("sampler.theta", 0.5);
    sc.delta = cfg.get_double("sampler.delta", 0.0);
    sc.n_iters = cfg.get_int("sampler.n_iters", 100000);
    sc.inner_tol = cfg.get_double("sampler.inner_tol", 1e-4);
    sc.inner_max_iters = static_cast<int>(cfg.get_int("sampler.inner_max_iters", 200));
    sc.seed = static_cast<std::uint64_t>(cfg.get_int("sampler.seed", 0));
    sc.thinning = cfg.get_int("sampler.thinning", 1);
    sc.burn_in = cfg.get_int("sampler.burn_in", -1);
    sc.reflected = cfg.get_bool("sampler.reflected", false);
    const std::string solver = cfg.get_string("sampler.inner_solver", "bb");
    if (solver == "bb" || solver == "barzilai-borwein") {
        sc.inner_solver = InnerSolver::barzilai_borwein;
    } else if (solver == "lbfgs") {
        sc.inner_solver = InnerSolver::lbfgs;
    } else {
        throw ConfigError("config: unknown inner solver: " + solver);
    }
    return sc;
}

inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

// One output directory per run: config snapshot, CSVs, PGMs, summary.json.
class RunWriter {
public:
    explicit RunWriter(const std::string& dir) : dir_(dir) {
        std::error_code ec;
        std::filesystem::create_directories(dir_, ec);
        if (ec) throw ConfigError("output: cannot create directory " + dir);
    }

    const std::filesystem::path& dir() const { return dir_; }

    std::string path(const std::string& name) const { return (dir_ / name).string(); }

    void write_config_snapshot(const ExperimentConfig& cfg) const {
        std::ofstream out(dir_ / "config.txt");
        for (const auto& [key, value] : cfg.values) out << key << " = " << value << "\n";
    }

    std::ofstream csv(const std::string& name, const std::string& header) const {
        std::ofstream out(dir_ / name);
        if (!out) throw ConfigError("output: cannot open " + name);
        out << header << "\n";
        return out;
    }

    void write_summary(const json& summary) const {
        std::ofstream out(dir_ / "summary.json");
        out << summary.dump(2) << "\n";
    }

private:
    std::filesystem::path dir_;
};

inline std::int64_t thin_stride(std::int64_t n, std::int64_t max_points) {
    return std::max<std::int64_t>(1, n / std::max<std::int64_t>(1, max_points));
}

// ---------------------------------------------------------------------------
// theory-table: closed-form (kappa, eps) -> (delta, n) table for the three
// schemes on the geometric-sigma Gaussian family.
// ---------------------------------------------------------------------------

namespace detail {

inline theory::GaussianSpec geometric_spec(double kappa, Eigen::Index d) {
    theory::GaussianSpec spec;
    spec.sigmas.resize(d);
    const double s_min = 1.0 / std::sqrt(kappa);
    for (Eigen::Index i = 0; i < d; ++i) {
        const double t = d == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(d - 1);
        spec.sigmas[i] = std::pow(s_min, t);  // geometric from 1 down to 1/sqrt(kappa)
    }
    spec.x0 = Vector::Constant(d, 1.0 / std::sqrt(static_cast<double>(d)));
    return spec;
}

// Smallest n with W2(pi, Q_n) <= eps (closed form), by doubling + bisection.
inline std::int64_t smallest_n_reaching(const theory::GaussianSpec& spec, double theta,
                                        double delta, double eps,
                                        std::int64_t n_cap = (1LL << 40)) {
    if (theory::w2_gaussian(spec, theta, delta, 0) <= eps) return 0;
    std::int64_t hi = 1;
    while (theory::w2_gaussian(spec, theta, delta, hi) > eps) {
        hi *= 2;
        if (hi > n_cap) return -1;  // unreachable at this step size
    }
    std::int64_t lo = hi / 2;
    while (lo + 1 < hi) {
        const std::int64_t mid = lo + (hi - lo) / 2;
        (theory::w2_gaussian(spec, theta, delta, mid) <= eps ? hi : lo) = mid;
    }
    return hi;
}

struct TheoryRow {
    double theta, kappa, eps, delta;
    std::int64_t n;
    bool feasible;
    std::string regime;  // "optimal", "bias", "stability"
};

inline TheoryRow theory_row(double theta, double kappa, double eps, Eigen::Index d) {
    const theory::GaussianSpec spec = geometric_spec(kappa, d);
    const double w2_0 = spec.w2_from_start();
    TheoryRow row{theta, kappa, eps, 0.0, 0, true, "optimal"};
    if (theta == 0.5 || theta == 1.0) {
        const theory::StepPlan plan = theory::n_steps_gaussian(spec, theta, eps, w2_0);
        row.delta = plan.delta;
        row.n = plan.n;
        if (theta == 1.0) row.regime = "bias";
        return row;
    }
    // theta = 0: largest delta with C < 1 and bias <= eps/2, then the smallest
    // n with W2 <= eps from the exact formula. The stability edge delta = 2/L
    // is approached up to a 0.9 safety factor so the n search stays finite.
    const double delta_max = 0.9 * 2.0 / spec.L();
    if (theory::w2_gaussian_stationary(spec, 0.0, delta_max) <= 0.5 * eps) {
        row.delta = delta_max;
        row.regime = "stability";
    } else {
        double lo = 0.0, hi = delta_max;
        for (int it = 0; it < 200; ++it) {
            const double mid = 0.5 * (lo + hi);
            (theory::w2_gaussian_stationary(spec, 0.0, mid) <= 0.5 * eps ? lo : hi) = mid;
        }
        row.delta = lo;
        row.regime = "bias";
    }
    if (!(row.delta > 0.0)) {
        row.feasible = false;
        return row;
    }
    row.n = smallest_n_reaching(spec, 0.0, row.delta, eps);
    if (row.n < 0) {
        row.feasible = false;
        row.n = 0;
    }
    return row;
}

inline double loglog_slope(const std::vector<double>& xs, const std::vector<double>& ys) {
    const auto n = static_cast<double>(xs.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double lx = std::log(xs[i]), ly = std::log(ys[i]);
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
    }
    return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

}  // namespace detail

inline int cmd_theory_table(const ExperimentConfig& cfg) {
    const RunWriter out(cfg.get_string("output.dir", "runs/theory_table"));
    out.write_config_snapshot(cfg);
    const auto kappas = cfg.get_list("problem.kappas", "100,1000,10000,100000,1000000");
    const auto eps_list = cfg.get_list("problem.eps", "0.1,0.01,0.001");
    const auto d = static_cast<Eigen::Index>(cfg.get_int("problem.dim", 100));
    if (d <= 0) throw ConfigError("theory-table: problem.dim must be positive");

    auto table = out.csv("theory_table.csv", "theta,kappa,eps,delta,n,feasible,regime");
    std::vector<detail::TheoryRow> rows;
    for (const double theta : {0.0, 0.5, 1.0})
        for (const double kappa : kappas)
            for (const double eps : eps_list) {
                if (!(kappa >= 1.0)) throw ConfigError("theory-table: kappa must be >= 1");
                rows.push_back(detail::theory_row(theta, kappa, eps, d));
                const auto& r = rows.back();
                table << format_double(r.theta) << "," << format_double(r.kappa) << ","
                      << format_double(r.eps) << "," << format_double(r.delta) << "," << r.n
                      << "," << (r.feasible ? 1 : 0) << "," << r.regime << "\n";
            }

    // log n ~ log kappa slopes per (theta, eps), over feasible rows with n > 0
    json slopes = json::array();
    for (const double theta : {0.0, 0.5, 1.0})
        for (const double eps : eps_list) {
            std::vector<double> xs, ys;
            for (const auto& r : rows)
                if (r.theta == theta && r.eps == eps && r.feasible && r.n > 0) {
                    xs.push_back(r.kappa);
                    ys.push_back(static_cast<double>(r.n));
                }
            if (xs.size() >= 2)
                slopes.push_back({{"theta", theta},
                                  {"eps", eps},
                                  {"slope", detail::loglog_slope(xs, ys)},
                                  {"points", xs.size()}});
        }
    json summary;
    summary["experiment"] = "theory_table";
    summary["dim"] = d;
    summary["slopes"] = slopes;
    out.write_summary(summary);
    return 0;
}

// ---------------------------------------------------------------------------
// gmm: exact/IMLA/ILA/ULA comparison on the mixture-prior denoising posterior
// ---------------------------------------------------------------------------

inline int cmd_gmm(const ExperimentConfig& cfg) {
    const RunWriter out(cfg.get_string("output.dir", "runs/gmm"));
    out.write_config_snapshot(cfg);
    SamplerConfig base = sampler_from_config(cfg);
    if (base.n_iters < 0) throw ConfigError("gmm: sampler.n_iters must be >= 0");
    if (base.n_iters == 0) {
        // degenerate run: emit valid empty-stats files
        out.csv("w2.csv", "sampler,rep,pixel,w2");
        out.csv("trace.csv", "sampler,index,logpi");
        out.csv("logpi_hist.csv", "sampler,bin_lo,bin_hi,count");
        json summary;
        summary["experiment"] = "gmm";
        summary["n_iters"] = 0;
        summary["note"] = "degenerate run: no samples drawn";
        out.write_summary(summary);
        return 0;
    }

    GmmModel model;
    model.m0 = cfg.get_double("problem.m0", 0.0);
    model.m1 = cfg.get_double("problem.m1", 0.0);
    model.s0sq = cfg.get_double("problem.s0sq", 0.0025);
    model.s1sq = cfg.get_double("problem.s1sq", 0.0809);
    model.noise_var = cfg.get_double("problem.noise_var", 0.0016);
    model.w_tilde = cfg.get_double("problem.w_tilde", 0.9);
    const auto n_pixels = static_cast<Eigen::Index>(cfg.get_int("problem.pixels", 16));
    const auto reps = cfg.get_int("problem.reps", 10);
    if (n_pixels <= 0 || reps <= 0) throw ConfigError("gmm: pixels and reps must be positive");

    const std::string y_mode = cfg.get_string("problem.y_mode", "ramp");
    if (y_mode == "ramp") {
        model.y = gmm_ramp_observation(n_pixels, cfg.get_double("problem.y_lo", 0.4),
                                       cfg.get_double("problem.y_hi", 0.95));
    } else if (y_mode == "prior") {
        Rng y_rng(derive_seed(base.seed, 101));
        model.y = gmm_synthetic_observation(model, n_pixels, y_rng);
    } else {
        throw ConfigError("gmm: problem.y_mode must be ramp or prior");
    }
    const GmmPosterior posterior(model);
    const TargetModel target = posterior.target();
    // delta* needs m > 0; outside the strongly log-concave regime fall back
    // to a stable step of the same scale
    const double delta_star =
        target.m > 0.0 ? theory::delta_star(target.m, target.L, 0.5) : 2.0 / target.L;
    const double delta_ula = 1.0 / target.L;

    struct SamplerSpec {
        std::string name;
        double theta, delta;
        bool exact;
    };
    const std::vector<SamplerSpec> samplers = {{"exact", 0.0, 0.0, true},
                                               {"imla", 0.5, delta_star, false},
                                               {"ila", 1.0, delta_star, false},
                                               {"ula", 0.0, delta_ula, false}};

    struct RepResult {
        std::vector<std::vector<double>> w2;  // [sampler][pixel]
        std::vector<double> logpi0;           // rep 0 kept log pi values per sampler
    };
    std::vector<RepResult> results(reps);

    const std::int64_t n_kept = base.n_iters / base.thinning;
    parallel_for(reps, [&](std::int64_t rep) {
        RepResult& res = results[rep];
        res.w2.resize(samplers.size());
        for (std::size_t s = 0; s < samplers.size(); ++s) {
            const auto& sp = samplers[s];
            Matrix samples;
            std::vector<double> logpi;
            if (sp.exact) {
                Rng rng(derive_seed(base.seed, 1000 + rep * 16 + static_cast<std::int64_t>(s)));
                samples.resize(n_kept, n_pixels);
                logpi.reserve(n_kept);
                for (std::int64_t i = 0; i < n_kept; ++i) {
                    const Vector draw = posterior.exact_sample(rng);
                    samples.row(i) = draw;
                    logpi.push_back(posterior.logpdf(draw));
                }
            } else {
                SamplerConfig sc = base;
                sc.theta = sp.theta;
                sc.delta = sp.delta;
                sc.seed = derive_seed(base.seed, 1000 + rep * 16 + static_cast<std::int64_t>(s));
                const ChainOutput chain = run_chain(target, sc, model.y);
                samples = chain.samples;
                logpi = chain.logpi_trace;
            }
            res.w2[s].resize(n_pixels);
            for (Eigen::Index px = 0; px < n_pixels; ++px) {
                std::vector<double> col(samples.rows());
                for (Eigen::Index i = 0; i < samples.rows(); ++i) col[i] = samples(i, px);
                res.w2[s][px] = w2_1d_empirical(
                    std::move(col), [&](double p) { return posterior.pixel_quantile(px, p); });
            }
            if (rep == 0) res.logpi0.insert(res.logpi0.end(), logpi.begin(), logpi.end());
            if (rep == 0 && s + 1 < samplers.size())
                res.logpi0.push_back(std::numeric_limits<double>::quiet_NaN());  // separator
        }
    });

    auto w2_csv = out.csv("w2.csv", "sampler,rep,pixel,w2");
    std::map<std::string, std::vector<double>> all_w2;
    for (std::int64_t rep = 0; rep < reps; ++rep)
        for (std::size_t s = 0; s < samplers.size(); ++s)
            for (Eigen::Index px = 0; px < n_pixels; ++px) {
                const double w2 = results[rep].w2[s][px];
                w2_csv << samplers[s].name << "," << rep << "," << px << ","
                       << format_double(w2) << "\n";
                all_w2[samplers[s].name].push_back(w2);
            }

    auto median = [](std::vector<double> v) {
        std::sort(v.begin(), v.end());
        const std::size_t n = v.size();
        return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
    };

    json summary;
    summary["experiment"] = "gmm";
    summary["pixels"] = n_pixels;
    summary["reps"] = reps;
    summary["n_iters"] = base.n_iters;
    summary["delta_star"] = delta_star;
    summary["delta_ula"] = delta_ula;
    summary["m"] = target.m;
    summary["L"] = target.L;
    json med;
    for (const auto& [name, values] : all_w2) med[name] = median(values);
    summary["median_w2"] = med;
    summary["imla_over_exact"] = med["imla"].get<double>() / med["exact"].get<double>();
    summary["ula_over_imla"] = med["ula"].get<double>() / med["imla"].get<double>();
    // summed-over-pixels analogue: per pixel the median across repetitions,
    // summing W2 values (not squares)
    json summed;
    for (std::size_t s = 0; s < samplers.size(); ++s) {
        double total = 0.0;
        for (Eigen::Index px = 0; px < n_pixels; ++px) {
            std::vector<double> rep_values(reps);
            for (std::int64_t rep = 0; rep < reps; ++rep)
                rep_values[rep] = results[rep].w2[s][px];
            total += median(rep_values);
        }
        summed[samplers[s].name] = total;
    }
    summary["summed_w2"] = summed;

    // rep-0 log pi traces and histograms, thinned for plotting
    auto trace = out.csv("trace.csv", "sampler,index,logpi");
    auto hist_csv = out.csv("logpi_hist.csv", "sampler,bin_lo,bin_hi,count");
    {
        std::vector<std::vector<double>> split(samplers.size());
        std::size_t s = 0;
        for (const double v : results[0].logpi0) {
            if (std::isnan(v)) {
                ++s;
                continue;
            }
            if (s < split.size()) split[s].push_back(v);
        }
        for (std::size_t si = 0; si < samplers.size(); ++si) {
            const auto& vals = split[si];
            if (vals.empty()) continue;
            const std::int64_t stride = thin_stride(static_cast<std::int64_t>(vals.size()), 2000);
            for (std::size_t i = 0; i < vals.size(); i += stride)
                trace << samplers[si].name << "," << i << "," << format_double(vals[i]) << "\n";
            const Histogram h = histogram(vals, 80);
            for (std::size_t b = 0; b + 1 < h.edges.size(); ++b)
                hist_csv << samplers[si].name << "," << format_double(h.edges[b]) << ","
                         << format_double(h.edges[b + 1]) << "," << h.counts[b] << "\n";
        }
    }
    out.write_summary(summary);
    return 0;
}

// ---------------------------------------------------------------------------
// onedim: MYULA / IMLA / ILA on the four 1D test distributions
// ---------------------------------------------------------------------------

inline int cmd_onedim(const ExperimentConfig& cfg) {
    const RunWriter out(cfg.get_string("output.dir", "runs/onedim"));
    out.write_config_snapshot(cfg);
    SamplerConfig base = sampler_from_config(cfg);
    if (base.n_iters <= 0) base.n_iters = 1000000;

    const std::string kind_str = cfg.get_string("problem.kind", "all");
    std::vector<OneDimKind> kinds;
    if (kind_str == "all") {
        kinds = {OneDimKind::laplace, OneDimKind::uniform, OneDimKind::quartic,
                 OneDimKind::cauchy};
    } else {
        kinds = {onedim_kind_from_name(kind_str)};
    }

    auto sd_csv = out.csv("sd.csv", "kind,sampler,sd_estimate,sd_exact,rel_error");
    auto hist_csv = out.csv("hist.csv", "kind,sampler,bin_lo,bin_hi,count,density");
    auto trace_csv = out.csv("trace.csv", "kind,sampler,iteration,x");
    json summary;
    summary["experiment"] = "onedim";
    json per_kind = json::object();

    for (const OneDimKind kind : kinds) {
        const TargetModel target = onedim_target(kind);
        const double default_delta = kind == OneDimKind::uniform ? 1e-4 : 0.05;
        const double delta = cfg.has("sampler.delta") ? base.delta : default_delta;
        const double lambda = cfg.get_double("problem.myula_lambda", delta);
        Vector x0(1);
        x0[0] = kind == OneDimKind::uniform ? 0.5 : 0.0;

        const SmoothedTarget smoothed{target, zero_model(1), lambda};
        const TargetModel myula_target = smoothed.combined();

        struct Run {
            std::string name;
            double theta;
            const TargetModel* model;
        };
        const std::vector<Run> runs = {{"myula", 0.0, &myula_target},
                                       {"imla", 0.5, &target},
                                       {"ila", 1.0, &target}};
        json kind_summary;
        kind_summary["delta"] = delta;
        kind_summary["myula_lambda"] = lambda;
        for (std::size_t r = 0; r < runs.size(); ++r) {
            SamplerConfig sc = base;
            sc.theta = runs[r].theta;
            sc.delta = delta;
            sc.record_logpi = false;
            sc.seed = derive_seed(base.seed, 7000 + 8 * static_cast<int>(kind) + r);
            const ChainOutput chain = run_chain(*runs[r].model, sc, x0);
            const double sd = std::sqrt(chain.running_var[0]);
            kind_summary[runs[r].name + "_sd"] = sd;

            if (kind != OneDimKind::cauchy) {
                const double exact = onedim_exact_sd(kind);
                sd_csv << onedim_name(kind) << "," << runs[r].name << "," << format_double(sd)
                       << "," << format_double(exact) << ","
                       << format_double(std::abs(sd - exact) / exact) << "\n";
            }
            std::vector<double> xs(chain.samples.rows());
            for (Eigen::Index i = 0; i < chain.samples.rows(); ++i) xs[i] = chain.samples(i, 0);
            const Histogram h = histogram(xs, static_cast<int>(cfg.get_int("problem.bins", 0)));
            const double total = static_cast<double>(xs.size());
            for (std::size_t b = 0; b + 1 < h.edges.size(); ++b) {
                const double width = h.edges[b + 1] - h.edges[b];
                hist_csv << onedim_name(kind) << "," << runs[r].name << ","
                         << format_double(h.edges[b]) << "," << format_double(h.edges[b + 1])
                         << "," << h.counts[b] << ","
                         << format_double(h.counts[b] / (total * width)) << "\n";
            }
            const std::int64_t stride = thin_stride(static_cast<std::int64_t>(xs.size()), 2000);
            for (std::size_t i = 0; i < xs.size(); i += stride)
                trace_csv << onedim_name(kind) << "," << runs[r].name << "," << i << ","
                          << format_double(xs[i]) << "\n";
        }
        if (kind == OneDimKind::cauchy)
            kind_summary["note"] = "moments are undefined for the Cauchy target; SD omitted";
        else
            kind_summary["sd_exact"] = onedim_exact_sd(kind);
        per_kind[onedim_name(kind)] = kind_summary;
    }
    summary["kinds"] = per_kind;
    out.write_summary(summary);
    return 0;
}

// ---------------------------------------------------------------------------
// deconv: reflected MYULA / IMLA on TV-regularised deconvolution
// ---------------------------------------------------------------------------

namespace detail {

struct DeconvChainResult {
    Matrix mean;
    Matrix sd;
    std::vector<std::pair<std::int64_t, double>> psnr_series;
    std::vector<double> logpi;
    Matrix samples;  // thinned, for ACF
    double min_coordinate = kInf;
    std::int64_t flagged = 0;
};

// Stationarity of the log pi trace: the second-half mean must sit within
// 2 combined standard errors of the third-quarter mean.
inline bool logpi_stationary(const std::vector<double>& trace, double* z_out = nullptr) {
    const std::size_t n = trace.size();
    if (n < 16) return false;
    const auto seg_stats = [&](std::size_t lo, std::size_t hi, double& mean, double& se) {
        std::vector<double> seg(trace.begin() + lo, trace.begin() + hi);
        mean = 0.0;
        for (double v : seg) mean += v;
        mean /= static_cast<double>(seg.size());
        double var = 0.0;
        for (double v : seg) var += (v - mean) * (v - mean);
        var /= static_cast<double>(seg.size());
        double n_eff = static_cast<double>(seg.size());
        try {
            n_eff = std::max(2.0, ess(seg));
        } catch (const std::exception&) {
        }
        se = std::sqrt(var / n_eff);
    };
    double m_half, se_half, m_q3, se_q3;
    seg_stats(n / 2, n, m_half, se_half);
    seg_stats(n / 2, (3 * n) / 4, m_q3, se_q3);
    const double se = std::sqrt(se_half * se_half + se_q3 * se_q3);
    const double z = se > 0.0 ? std::abs(m_half - m_q3) / se : 0.0;
    if (z_out) *z_out = z;
    return z <= 2.0;
}

}  // namespace detail

inline int cmd_deconv(const ExperimentConfig& cfg) {
    const RunWriter out(cfg.get_string("output.dir", "runs/deconv"));
    out.write_config_snapshot(cfg);
    SamplerConfig base = sampler_from_config(cfg);

    DeconvModel model;
    const auto size = static_cast<Eigen::Index>(cfg.get_int("problem.size", 64));
    model.rows = size;
    model.cols = size;
    model.kernel = box_kernel(static_cast<int>(cfg.get_int("problem.kernel_size", 5)));
    const std::string noise = cfg.get_string("problem.noise", "poisson");

    Matrix truth;
    const std::string image_path = cfg.get_string("problem.image", "");
    if (!image_path.empty()) {
        int maxval = 255;
        truth = read_pgm(image_path, &maxval);
        truth /= static_cast<double>(maxval);
        model.rows = truth.rows();
        model.cols = truth.cols();
    } else {
        truth = make_phantom(model.rows, model.cols);
    }

    if (noise == "poisson") {
        model.noise = NoiseKind::poisson;
        const double miv = cfg.get_double("problem.miv", 10.0);
        truth *= miv / truth.mean();
        model.beta = cfg.get_double("problem.beta_frac", 0.01) * miv;
    } else if (noise == "gaussian") {
        model.noise = NoiseKind::gaussian;
        const double sd = cfg.get_double("problem.noise_sd", 0.05);
        model.noise_var = sd * sd;
    } else {
        throw ConfigError("deconv: problem.noise must be gaussian or poisson");
    }

    Rng obs_rng(derive_seed(base.seed, 0xD474));
    model.y = deconv_observe(model, truth, obs_rng);
    const double l_fy = deconv_likelihood_lipschitz(model);
    model.my_lambda = cfg.get_double("problem.my_lambda", 1.0 / l_fy);
    model.tv_weight = cfg.get_double("problem.tv_weight", 1.0);
    model.tv_dual_iters = static_cast<int>(cfg.get_int("problem.tv_dual_iters", 150));
    const TargetModel target = deconv_target(model);

    const double peak = truth.maxCoeff();
    const double psnr_y = psnr(truth, model.y, peak);

    struct Plan {
        std::string name;
        double theta, delta;
        std::int64_t n_iters;
    };
    const double delta_myula = cfg.get_double("problem.myula_delta", 1.0 / target.L);
    const double delta_imla =
        base.delta > 0.0 ? base.delta : cfg.get_double("problem.imla_delta", 1.16e-3);
    const std::int64_t imla_iters = base.n_iters > 0 ? base.n_iters : 1500;
    const std::int64_t myula_iters = cfg.get_int("problem.myula_iters", 4 * imla_iters);
    const std::vector<Plan> plans = {{"rmyula", 0.0, delta_myula, myula_iters},
                                     {"rimla", 0.5, delta_imla, imla_iters}};

    std::vector<detail::DeconvChainResult> results(plans.size());
    parallel_for(static_cast<std::int64_t>(plans.size()), [&](std::int64_t pi) {
        const Plan& plan = plans[pi];
        detail::DeconvChainResult& res = results[pi];
        SamplerConfig sc = base;
        sc.theta = plan.theta;
        sc.delta = plan.delta;
        sc.n_iters = plan.n_iters;
        sc.reflected = true;
        sc.seed = derive_seed(base.seed, 500 + pi);
        sc.record_logpi = true;
        sc.thinning = std::max<std::int64_t>(1, plan.n_iters / 400);
        sc.store_samples = true;

        Vector mean_acc = Vector::Zero(target.dim);
        Vector m2_acc = Vector::Zero(target.dim);
        std::int64_t count = 0;
        const std::int64_t psnr_every =
            std::max<std::int64_t>(1, plan.n_iters / sc.thinning / 100);
        ChainCallbacks callbacks;
        callbacks.on_sample = [&](std::int64_t iter, const Vector& x) {
            ++count;
            const Vector d1 = x - mean_acc;
            mean_acc += d1 / static_cast<double>(count);
            m2_acc.array() += d1.array() * (x - mean_acc).array();
            res.min_coordinate = std::min(res.min_coordinate, x.minCoeff());
            if (count % psnr_every == 0) {
                const Matrix mean_img = vector_to_image(mean_acc, model.rows, model.cols);
                res.psnr_series.emplace_back(iter, psnr(truth, mean_img, peak));
            }
        };
        const ChainOutput chain = run_chain(target, sc, image_to_vector(model.y), callbacks);
        res.mean = vector_to_image(mean_acc, model.rows, model.cols);
        const Vector var = count > 0 ? (m2_acc / static_cast<double>(count)).eval()
                                     : Vector::Zero(target.dim).eval();
        res.sd = vector_to_image(var.array().sqrt().matrix(), model.rows, model.cols);
        res.logpi = chain.logpi_trace;
        res.samples = chain.samples;
        res.flagged = chain.flagged_steps;
    });

    write_pgm(out.path("truth.pgm"), truth, 0.0, peak);
    write_pgm(out.path("observation.pgm"), model.y, 0.0, std::max(peak, model.y.maxCoeff()));
    auto psnr_csv = out.csv("psnr.csv", "sampler,iteration,psnr_db");
    auto logpi_csv = out.csv("logpi.csv", "sampler,index,logpi");
    auto density_csv = out.csv("logpi_density.csv", "sampler,logpi,density");
    auto acf_csv = out.csv("acf.csv", "sampler,component,lag,rho");
    json summary;
    summary["experiment"] = "deconv";
    summary["noise"] = noise;
    summary["psnr_observation"] = psnr_y;
    summary["L_fy"] = l_fy;
    summary["my_lambda"] = model.my_lambda;
    summary["tv_weight"] = model.tv_weight;

    const bool sd_log_scale = cfg.get_bool("problem.sd_log_scale", true);
    for (std::size_t pi = 0; pi < plans.size(); ++pi) {
        const auto& plan = plans[pi];
        auto& res = results[pi];
        write_pgm(out.path("mean_" + plan.name + ".pgm"), res.mean, 0.0, peak);
        Matrix sd_img = res.sd;
        if (sd_log_scale)
            sd_img = (sd_img.array() + 1e-12).log10();
        write_pgm(out.path("sd_" + plan.name + ".pgm"), sd_img, sd_img.minCoeff(),
                  sd_img.maxCoeff() + 1e-12);
        for (const auto& [iter, value] : res.psnr_series)
            psnr_csv << plan.name << "," << iter << "," << format_double(value) << "\n";
        const std::int64_t stride =
            thin_stride(static_cast<std::int64_t>(res.logpi.size()), 2000);
        for (std::size_t i = 0; i < res.logpi.size(); i += stride)
            logpi_csv << plan.name << "," << i << "," << format_double(res.logpi[i]) << "\n";
        if (res.logpi.size() >= 16) {
            // density of log pi at stationarity (second half of the trace)
            const std::vector<double> tail(res.logpi.begin() + res.logpi.size() / 2,
                                           res.logpi.end());
            const DensityEstimate kde = gaussian_kde(tail, 160);
            for (std::size_t g = 0; g < kde.x.size(); ++g)
                density_csv << plan.name << "," << format_double(kde.x[g]) << ","
                            << format_double(kde.density[g]) << "\n";
        }

        if (res.samples.rows() >= 8) {
            const SlowFastComponents comps = slow_fast_components(res.samples);
            const int max_lag =
                static_cast<int>(std::min<std::int64_t>(res.samples.rows() - 1, 50));
            const auto rho_slow = acf(comps.slow, max_lag);
            const auto rho_fast = acf(comps.fast, max_lag);
            for (int k = 0; k <= max_lag; ++k) {
                acf_csv << plan.name << ",slow," << k << "," << format_double(rho_slow[k])
                        << "\n";
                acf_csv << plan.name << ",fast," << k << "," << format_double(rho_fast[k])
                        << "\n";
            }
        }
        double z = 0.0;
        const bool stationary = detail::logpi_stationary(res.logpi, &z);
        json entry;
        entry["theta"] = plan.theta;
        entry["delta"] = plan.delta;
        entry["n_iters"] = plan.n_iters;
        entry["psnr_mean"] = psnr(truth, res.mean, peak);
        entry["min_coordinate"] = res.min_coordinate;
        entry["in_nonnegative_orthant"] = res.min_coordinate >= 0.0;
        entry["logpi_stationary"] = stationary;
        entry["logpi_z_score"] = z;
        entry["flagged_inner_solves"] = res.flagged;
        summary[plan.name] = entry;
    }
    out.write_summary(summary);
    return 0;
}

// ---------------------------------------------------------------------------
// sample: one chain on a named target, samples + stats dumped to CSV
// ---------------------------------------------------------------------------

inline int cmd_sample(const ExperimentConfig& cfg) {
    const RunWriter out(cfg.get_string("output.dir", "runs/sample"));
    out.write_config_snapshot(cfg);
    SamplerConfig sc = sampler_from_config(cfg);
    if (sc.n_iters <= 0) throw ConfigError("sample: sampler.n_iters must be positive");
    if (!(sc.delta > 0.0)) throw ConfigError("sample: sampler.delta must be positive");

    const std::string kind = cfg.get_string("problem.target", "gauss");
    TargetModel target;
    Vector x0;
    if (kind == "gauss") {
        const auto sigmas_list = cfg.get_list("problem.sigmas", "1");
        Vector sigmas(sigmas_list.size());
        for (std::size_t i = 0; i < sigmas_list.size(); ++i) sigmas[i] = sigmas_list[i];
        target = gaussian_model(sigmas);
        x0 = Vector::Constant(sigmas.size(), cfg.get_double("problem.x0", 0.0));
    } else {
        target = onedim_target(onedim_kind_from_name(kind));
        x0 = Vector::Constant(1, cfg.get_double("problem.x0", 0.0));
    }

    const ChainOutput chain = run_chain(target, sc, x0);
    auto samples_csv = out.csv("samples.csv", [&] {
        std::string header = "iteration";
        for (Eigen::Index j = 0; j < std::min<Eigen::Index>(chain.samples.cols(), 8); ++j)
            header += ",x" + std::to_string(j);
        return header;
    }());
    const std::int64_t stride = thin_stride(chain.samples.rows(), 100000);
    for (Eigen::Index i = 0; i < chain.samples.rows(); i += stride) {
        samples_csv << i;
        for (Eigen::Index j = 0; j < std::min<Eigen::Index>(chain.samples.cols(), 8); ++j)
            samples_csv << "," << format_double(chain.samples(i, j));
        samples_csv << "\n";
    }
    json summary;
    summary["experiment"] = "sample";
    summary["target"] = kind;
    summary["n_kept"] = chain.n_kept;
    summary["flagged_inner_solves"] = chain.flagged_steps;
    json mean = json::array(), variance = json::array();
    for (Eigen::Index j = 0; j < chain.running_mean.size(); ++j) {
        mean.push_back(chain.running_mean[j]);
        variance.push_back(chain.running_var[j]);
    }
    summary["mean"] = mean;
    summary["variance"] = variance;
    out.write_summary(summary);
    return 0;
}

// Dispatch + exit-code mapping: 0 success, 2 config error, 3 numerical failure.
inline int run_experiment(const std::string& command, const ExperimentConfig& cfg,
                          std::string* error_out = nullptr) {
    try {
        if (command == "theory-table") return cmd_theory_table(cfg);
        if (command == "gmm") return cmd_gmm(cfg);
        if (command == "onedim") return cmd_onedim(cfg);
        if (command == "deconv") return cmd_deconv(cfg);
        if (command == "sample") return cmd_sample(cfg);
        if (error_out) *error_out = "unknown command: " + command;
        return 2;
    } catch (const ConfigError& e) {
        if (error_out) *error_out = e.what();
        return 2;
    } catch (const InvalidParameterError& e) {
        if (error_out) *error_out = e.what();
        return 2;
    } catch (const UnsupportedModelError& e) {
        if (error_out) *error_out = e.what();
        return 2;
    } catch (const std::exception& e) {
        if (error_out) *error_out = e.what();
        return 3;
    }
}

}  // namespace experiments
}  // namespace proxlangevin
