#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "proxlangevin/experiments.hpp"

namespace px = proxlangevin::experiments;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path temp_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / "proxlangevin_cli" / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

json load_summary(const fs::path& dir) {
    const std::string text = slurp(dir / "summary.json");
    EXPECT_FALSE(text.empty());
    return json::parse(text);
}

int run_tool(const std::string& args) {
    const std::string cmd = std::string(PROX_LANGEVIN_TOOL_PATH) + " " + args + " 2>/dev/null";
    const int status = std::system(cmd.c_str());
    return WEXITSTATUS(status);
}

TEST(Config, ParsesSectionsAndComments) {
    const fs::path dir = temp_dir("config");
    const fs::path file = dir / "run.cfg";
    std::ofstream(file) << "# comment\n"
                        << "[sampler]\n"
                        << "theta = 0.5\n"
                        << "delta = 0.25  # inline comment\n"
                        << "[problem]\n"
                        << "kind = laplace\n"
                        << "output.dir = somewhere\n";
    const auto cfg = px::load_config_file(file.string());
    EXPECT_EQ(cfg.get_double("sampler.theta", 0.0), 0.5);
    EXPECT_EQ(cfg.get_double("sampler.delta", 0.0), 0.25);
    EXPECT_EQ(cfg.get_string("problem.kind", ""), "laplace");
    // dotted keys bypass the section prefix
    EXPECT_EQ(cfg.get_string("output.dir", ""), "somewhere");
}

TEST(Config, MalformedLineThrows) {
    const fs::path dir = temp_dir("badconfig");
    const fs::path file = dir / "run.cfg";
    std::ofstream(file) << "just a line without equals\n";
    EXPECT_THROW(px::load_config_file(file.string()), px::ConfigError);
    EXPECT_THROW(px::load_config_file((dir / "missing.cfg").string()), px::ConfigError);
}

TEST(Config, TypedAccessorsValidate) {
    px::ExperimentConfig cfg;
    cfg.set("a", "1.5");
    cfg.set("b", "notanumber");
    cfg.set("c", "true");
    cfg.set("d", "17");
    cfg.set("list", "1,2,3");
    EXPECT_EQ(cfg.get_double("a", 0.0), 1.5);
    EXPECT_THROW(cfg.get_double("b", 0.0), px::ConfigError);
    EXPECT_TRUE(cfg.get_bool("c", false));
    EXPECT_EQ(cfg.get_int("d", 0), 17);
    EXPECT_EQ(cfg.get_list("list", "").size(), 3u);
    EXPECT_EQ(cfg.get_double("absent", 2.5), 2.5);
}

TEST(Config, CanonicalAliases) {
    EXPECT_EQ(px::canonical_key("theta"), "sampler.theta");
    EXPECT_EQ(px::canonical_key("n-iters"), "sampler.n_iters");
    EXPECT_EQ(px::canonical_key("out"), "output.dir");
    EXPECT_EQ(px::canonical_key("sampler.delta"), "sampler.delta");
}

TEST(TheoryTable, EmitsTableAndSlopes) {
    const fs::path dir = temp_dir("theory");
    px::ExperimentConfig cfg;
    cfg.set("output.dir", dir.string());
    cfg.set("problem.kappas", "100,1000,10000");
    cfg.set("problem.eps", "0.1,0.01");
    cfg.set("problem.dim", "20");
    EXPECT_EQ(px::cmd_theory_table(cfg), 0);

    const std::string table = slurp(dir / "theory_table.csv");
    EXPECT_TRUE(table.rfind("theta,kappa,eps,delta,n,feasible,regime", 0) == 0);
    // 3 thetas x 3 kappas x 2 eps = 18 data rows
    EXPECT_EQ(std::count(table.begin(), table.end(), '\n'), 19);

    const json summary = load_summary(dir);
    ASSERT_TRUE(summary.contains("slopes"));
    bool found_midpoint = false;
    for (const auto& s : summary["slopes"]) {
        if (s["theta"].get<double>() == 0.5 && s["eps"].get<double>() == 0.01) {
            found_midpoint = true;
            EXPECT_NEAR(s["slope"].get<double>(), 0.5, 0.05);
        }
    }
    EXPECT_TRUE(found_midpoint);
}

TEST(TheoryTable, ExplicitSchemeHitsStabilityLimitAtLargeKappa) {
    // with kappa large the explicit scheme's step is pinned by the stability
    // edge 2/L = 2/kappa (up to the 0.9 safety factor), not by the bias
    const auto row = px::detail::theory_row(0.0, 1e6, 0.1, 100);
    EXPECT_EQ(row.regime, "stability");
    EXPECT_TRUE(row.feasible);
    EXPECT_NEAR(row.delta, 0.9 * 2.0 / 1e6, 1e-18);
}

TEST(TheoryTable, IsotropicCaseIsTrivial) {
    // kappa = 1: every scheme gets delta on the 2 sigma^2 scale and small n
    const auto row = px::detail::theory_row(0.5, 1.0, 0.1, 100);
    EXPECT_DOUBLE_EQ(row.delta, 2.0);  // 2 sigma_min sigma_max with sigma = 1
    EXPECT_GT(row.n, 0);
    EXPECT_LE(row.n, 5);
}

TEST(SampleCommand, BitForBitReproducible) {
    px::ExperimentConfig cfg;
    cfg.set("problem.target", "gauss");
    cfg.set("problem.sigmas", "1,0.5");
    cfg.set("sampler.theta", "0.5");
    cfg.set("sampler.delta", "0.8");
    cfg.set("sampler.n_iters", "2000");
    cfg.set("sampler.seed", "99");
    const fs::path dir_a = temp_dir("sample_a");
    const fs::path dir_b = temp_dir("sample_b");
    cfg.set("output.dir", dir_a.string());
    EXPECT_EQ(px::cmd_sample(cfg), 0);
    cfg.set("output.dir", dir_b.string());
    EXPECT_EQ(px::cmd_sample(cfg), 0);
    EXPECT_EQ(slurp(dir_a / "samples.csv"), slurp(dir_b / "samples.csv"));
    EXPECT_EQ(slurp(dir_a / "summary.json"), slurp(dir_b / "summary.json"));

    const fs::path dir_c = temp_dir("sample_c");
    cfg.set("sampler.seed", "100");
    cfg.set("output.dir", dir_c.string());
    EXPECT_EQ(px::cmd_sample(cfg), 0);
    EXPECT_NE(slurp(dir_a / "samples.csv"), slurp(dir_c / "samples.csv"));
}

TEST(SampleCommand, SummarySchema) {
    px::ExperimentConfig cfg;
    cfg.set("problem.target", "laplace");
    cfg.set("sampler.delta", "0.05");
    cfg.set("sampler.n_iters", "5000");
    const fs::path dir = temp_dir("sample_schema");
    cfg.set("output.dir", dir.string());
    EXPECT_EQ(px::cmd_sample(cfg), 0);
    const json summary = load_summary(dir);
    for (const char* key : {"experiment", "target", "n_kept", "mean", "variance",
                            "flagged_inner_solves"})
        EXPECT_TRUE(summary.contains(key)) << key;
    EXPECT_TRUE(fs::exists(dir / "config.txt"));
}

TEST(OnedimCommand, EmitsSdTableAndHistograms) {
    px::ExperimentConfig cfg;
    cfg.set("problem.kind", "laplace");
    cfg.set("sampler.n_iters", "20000");
    const fs::path dir = temp_dir("onedim");
    cfg.set("output.dir", dir.string());
    EXPECT_EQ(px::cmd_onedim(cfg), 0);
    const std::string sd = slurp(dir / "sd.csv");
    EXPECT_TRUE(sd.rfind("kind,sampler,sd_estimate,sd_exact,rel_error", 0) == 0);
    EXPECT_NE(sd.find("laplace,imla,"), std::string::npos);
    EXPECT_NE(sd.find("laplace,myula,"), std::string::npos);
    EXPECT_NE(sd.find("laplace,ila,"), std::string::npos);
    const json summary = load_summary(dir);
    EXPECT_TRUE(summary["kinds"].contains("laplace"));
    EXPECT_TRUE(summary["kinds"]["laplace"].contains("imla_sd"));
}

TEST(OnedimCommand, CauchySdOmittedWithNote) {
    px::ExperimentConfig cfg;
    cfg.set("problem.kind", "cauchy");
    cfg.set("sampler.n_iters", "5000");
    const fs::path dir = temp_dir("onedim_cauchy");
    cfg.set("output.dir", dir.string());
    EXPECT_EQ(px::cmd_onedim(cfg), 0);
    const std::string sd = slurp(dir / "sd.csv");
    EXPECT_EQ(sd.find("cauchy"), std::string::npos);  // no SD rows for cauchy
    const json summary = load_summary(dir);
    EXPECT_TRUE(summary["kinds"]["cauchy"].contains("note"));
    // histogram data still produced
    EXPECT_NE(slurp(dir / "hist.csv").find("cauchy"), std::string::npos);
}

TEST(GmmCommand, SummaryHasMediansAndRatios) {
    px::ExperimentConfig cfg;
    cfg.set("problem.pixels", "4");
    cfg.set("problem.reps", "2");
    cfg.set("sampler.n_iters", "4000");
    const fs::path dir = temp_dir("gmm");
    cfg.set("output.dir", dir.string());
    EXPECT_EQ(px::cmd_gmm(cfg), 0);
    const json summary = load_summary(dir);
    for (const char* key : {"median_w2", "imla_over_exact", "ula_over_imla", "delta_star"})
        EXPECT_TRUE(summary.contains(key)) << key;
    for (const char* name : {"exact", "imla", "ila", "ula"}) {
        EXPECT_TRUE(summary["median_w2"].contains(name)) << name;
        EXPECT_GT(summary["median_w2"][name].get<double>(), 0.0);
    }
    const std::string w2 = slurp(dir / "w2.csv");
    EXPECT_TRUE(w2.rfind("sampler,rep,pixel,w2", 0) == 0);
    // 4 samplers x 2 reps x 4 pixels data rows
    EXPECT_EQ(std::count(w2.begin(), w2.end(), '\n'), 1 + 4 * 2 * 4);
}

TEST(DeconvCommand, EmitsImagesSeriesAndChecks) {
    px::ExperimentConfig cfg;
    cfg.set("problem.noise", "poisson");
    cfg.set("problem.size", "16");
    cfg.set("sampler.n_iters", "80");
    cfg.set("problem.myula_iters", "160");
    cfg.set("problem.tv_dual_iters", "60");
    const fs::path dir = temp_dir("deconv");
    cfg.set("output.dir", dir.string());
    EXPECT_EQ(px::cmd_deconv(cfg), 0);
    for (const char* name : {"truth.pgm", "observation.pgm", "mean_rimla.pgm",
                             "mean_rmyula.pgm", "sd_rimla.pgm", "psnr.csv", "logpi.csv",
                             "logpi_density.csv", "acf.csv"})
        EXPECT_TRUE(fs::exists(dir / name)) << name;
    const json summary = load_summary(dir);
    ASSERT_TRUE(summary.contains("rimla"));
    EXPECT_TRUE(summary["rimla"]["in_nonnegative_orthant"].get<bool>());
    EXPECT_TRUE(summary.contains("psnr_observation"));
    const std::string psnr = slurp(dir / "psnr.csv");
    EXPECT_TRUE(psnr.rfind("sampler,iteration,psnr_db", 0) == 0);
}

TEST(DeconvCommand, RimlaReachesRmyulaPsnrFiveTimesFaster) {
    // desk-scale analogue of the speed comparison: the reflected implicit
    // midpoint chain at its large step reaches the PSNR that reflected MYULA
    // needs 10x the iterations for, within a fifth of that budget
    namespace pl = proxlangevin;
    pl::DeconvModel model;
    model.rows = 32;
    model.cols = 32;
    model.kernel = pl::box_kernel(5);
    model.noise = pl::NoiseKind::poisson;
    pl::Matrix truth = pl::make_phantom(32, 32);
    truth *= 10.0 / truth.mean();
    model.beta = 0.1;
    pl::Rng obs_rng(pl::derive_seed(7, 0xD474));
    model.y = pl::deconv_observe(model, truth, obs_rng);
    model.my_lambda = 1.0 / pl::deconv_likelihood_lipschitz(model);
    model.tv_weight = 2.0;
    model.tv_dual_iters = 150;
    const pl::TargetModel target = pl::deconv_target(model);
    const double peak = truth.maxCoeff();

    auto run = [&](double theta, double delta, std::int64_t n, std::uint64_t seed) {
        pl::SamplerConfig sc;
        sc.theta = theta;
        sc.delta = delta;
        sc.n_iters = n;
        sc.burn_in = 0;
        sc.seed = seed;
        sc.reflected = true;
        sc.record_logpi = false;
        sc.store_samples = false;
        pl::Vector mean = pl::Vector::Zero(target.dim);
        std::int64_t count = 0;
        std::vector<double> series;
        pl::ChainCallbacks cb;
        cb.on_sample = [&](std::int64_t, const pl::Vector& x) {
            ++count;
            mean += (x - mean) / static_cast<double>(count);
            series.push_back(pl::psnr(truth, pl::vector_to_image(mean, 32, 32), peak));
        };
        pl::run_chain(target, sc, pl::image_to_vector(model.y), cb);
        return series;
    };

    const std::int64_t myula_iters = 3000;
    const auto myula = run(0.0, 1.0 / target.L, myula_iters, 21);
    const auto rimla = run(0.5, 1.16e-3, myula_iters / 5, 22);
    const double reference = myula.back();
    std::int64_t reached = -1;
    for (std::size_t i = 0; i < rimla.size(); ++i)
        if (rimla[i] >= reference) {
            reached = static_cast<std::int64_t>(i) + 1;
            break;
        }
    EXPECT_GT(reached, 0) << "R-IMLA never reached " << reference << " dB";
    EXPECT_LE(reached, myula_iters / 5);
}

TEST(GmmCommand, DegenerateRunEmitsEmptyStats) {
    px::ExperimentConfig cfg;
    cfg.set("sampler.n_iters", "0");
    const fs::path dir = temp_dir("gmm_empty");
    cfg.set("output.dir", dir.string());
    EXPECT_EQ(px::cmd_gmm(cfg), 0);
    EXPECT_EQ(slurp(dir / "w2.csv"), "sampler,rep,pixel,w2\n");
    const json summary = load_summary(dir);
    EXPECT_EQ(summary["n_iters"].get<int>(), 0);
}

TEST(RunExperiment, UnknownCommandIsConfigError) {
    px::ExperimentConfig cfg;
    std::string error;
    EXPECT_EQ(px::run_experiment("frobnicate", cfg, &error), 2);
    EXPECT_FALSE(error.empty());
}

TEST(RunExperiment, BadParameterIsConfigError) {
    px::ExperimentConfig cfg;
    cfg.set("problem.kind", "nosuchdistribution");
    cfg.set("output.dir", temp_dir("bad_onedim").string());
    std::string error;
    EXPECT_EQ(px::run_experiment("onedim", cfg, &error), 2);
}

TEST(Tool, ExitCodes) {
    // no subcommand -> CLI11 usage error
    EXPECT_NE(run_tool(""), 0);
    // config file missing -> 2
    EXPECT_EQ(run_tool("sample --config /nonexistent.cfg"), 2);
    // dangling --key without value -> 2
    EXPECT_EQ(run_tool("sample --problem.target"), 2);
    // valid tiny run -> 0
    const fs::path dir = temp_dir("tool_ok");
    EXPECT_EQ(run_tool("sample --out " + dir.string() +
                       " --problem.target gauss --delta 0.5 --n-iters 100 --seed 7"),
              0);
    EXPECT_TRUE(fs::exists(dir / "summary.json"));
    // explicit Euler far beyond the stability limit diverges -> 3
    const fs::path dir2 = temp_dir("tool_blowup");
    EXPECT_EQ(run_tool("sample --out " + dir2.string() +
                       " --problem.target gauss --theta 0 --delta 1e8 --n-iters 500"),
              3);
}

TEST(Tool, FlagsOverrideConfigFile) {
    const fs::path dir = temp_dir("tool_override");
    const fs::path file = dir / "run.cfg";
    std::ofstream(file) << "[sampler]\ndelta = 0.1\nn_iters = 50\n"
                        << "[problem]\ntarget = gauss\n";
    const fs::path out = dir / "out";
    EXPECT_EQ(run_tool("sample --config " + file.string() + " --out " + out.string() +
                       " --delta 0.25"),
              0);
    const std::string snapshot = slurp(out / "config.txt");
    EXPECT_NE(snapshot.find("sampler.delta = 0.25"), std::string::npos);
}

}  // namespace
