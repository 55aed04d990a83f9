// Batch front-end: gen | solve | bench | sweep.
//
// Defaults are fixed (seed 1729, never wall-clock), so bare invocations are
// reproducible. An optional --config file.json supplies defaults; explicit
// flags win over the file, the file wins over built-ins.
//
// Exit codes: 0 success, 1 configuration error, 2 runtime error.

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

#include "mch/dca.hpp"
#include "mch/io.hpp"
#include "mch/snmf.hpp"

namespace {

constexpr std::uint64_t kDefaultSeed = 1729;

struct Options {
    std::string configPath;
    // gen
    std::size_t n = 500, m = 500, k = 10;
    double mu = 0.0;
    std::string outPath;
    // solve
    std::string xPath, yPath;
    std::string mode = "approx";
    std::string ensemble = "uniformNonneg";
    std::size_t p = 0, s = 4000;
    std::size_t nX = 4096, nY = 4096;
    double eps = 0.1, delta = 0.05;
    std::size_t threads = 1;
    std::string format = "json";
    std::uint64_t seed = kDefaultSeed;
    // sweep grids
    std::vector<std::size_t> sGrid;
    std::vector<double> muGrid;
    std::vector<std::uint64_t> seeds;
};

std::string fmt(double v) { return mch::detail::formatDouble(v); }

void applyConfigFile(Options& opt, const CLI::App& sub) {
    if (opt.configPath.empty()) return;
    std::ifstream in(opt.configPath);
    if (!in) throw CLI::ValidationError("--config", "cannot open '" + opt.configPath + "'");
    nlohmann::json j;
    in >> j;
    auto setIf = [&](const char* key, auto& target) {
        const CLI::Option* o = sub.get_option_no_throw(std::string("--") + key);
        if (j.contains(key) && (o == nullptr || o->count() == 0)) {
            target = j.at(key).get<std::decay_t<decltype(target)>>();
        }
    };
    setIf("n", opt.n);
    setIf("m", opt.m);
    setIf("k", opt.k);
    setIf("mu", opt.mu);
    setIf("p", opt.p);
    setIf("s", opt.s);
    setIf("nx", opt.nX);
    setIf("ny", opt.nY);
    setIf("eps", opt.eps);
    setIf("delta", opt.delta);
    setIf("seed", opt.seed);
    setIf("threads", opt.threads);
    setIf("mode", opt.mode);
    setIf("ensemble", opt.ensemble);
    setIf("format", opt.format);
    setIf("out", opt.outPath);
}

mch::SampledMatrix loadMatrix(const std::string& path) {
    if (path.size() >= 4 && path.substr(path.size() - 4) == ".mtx") return mch::loadMatrixMarket(path);
    return mch::loadCsv(path);
}

nlohmann::json configEcho(const Options& opt) {
    nlohmann::json j;
    j["mode"] = opt.mode;
    j["ensemble"] = opt.ensemble;
    j["k"] = opt.k;
    j["p"] = opt.p;
    j["s"] = opt.s;
    j["nx"] = opt.nX;
    j["ny"] = opt.nY;
    j["eps"] = opt.eps;
    j["delta"] = opt.delta;
    j["seed"] = opt.seed;
    // threads is deliberately omitted: results are worker-count independent
    // and the output contract is byte-identity across worker counts.
    return j;
}

void writeOut(const std::string& text, const std::string& path) {
    if (path.empty()) {
        std::cout << text;
        return;
    }
    std::ofstream out(path);
    if (!out) throw mch::Error("cannot open '" + path + "' for writing");
    out << text;
}

int runGen(const Options& opt) {
    const mch::SnmfInstance inst = mch::generateSynthetic(opt.n, opt.m, opt.k, opt.mu, opt.seed);
    const std::filesystem::path dir = opt.outPath.empty() ? "." : opt.outPath;
    std::filesystem::create_directories(dir);
    mch::saveCsv(inst.x, (dir / "X.csv").string());
    nlohmann::json meta;
    meta["n"] = opt.n;
    meta["m"] = opt.m;
    meta["k"] = opt.k;
    meta["mu"] = opt.mu;
    meta["seed"] = opt.seed;
    meta["anchors"] = inst.trueAnchors;
    std::ofstream out(dir / "anchors.json");
    out << meta.dump(2) << "\n";
    std::cout << "wrote " << (dir / "X.csv").string() << " and " << (dir / "anchors.json").string() << "\n";
    return 0;
}

int runSolve(const Options& opt) {
    const mch::SampledMatrix xStore = loadMatrix(opt.xPath);
    const Eigen::MatrixXd x = mch::toDense(xStore);
    Eigen::MatrixXd y;
    const bool haveY = !opt.yPath.empty();
    if (haveY) y = mch::toDense(loadMatrix(opt.yPath));

    mch::SolveConfig cfg;
    cfg.k = opt.k;
    cfg.p = opt.p;
    cfg.mode = mch::modeFromString(opt.mode);
    cfg.ensemble = mch::ensembleFromString(opt.ensemble);
    cfg.sketch.s = opt.s;
    cfg.sketch.keepC = false;
    cfg.estimator.eps = opt.eps;
    cfg.estimator.delta = opt.delta;
    cfg.postSelect.nX = opt.nX;
    cfg.postSelect.nY = opt.nY;
    cfg.masterSeed = opt.seed;
    cfg.threads = opt.threads;

    const mch::AnchorSet anchors = haveY ? mch::solve(x, y, cfg) : mch::solve(x, x, cfg);

    if (opt.format == "csv") {
        std::string text = "index,ghat\n";
        for (std::size_t i : anchors.indices) {
            text += std::to_string(i) + "," + fmt(anchors.gHat(static_cast<Eigen::Index>(i))) + "\n";
        }
        writeOut(text, opt.outPath);
    } else {
        nlohmann::json j;
        j["config"] = configEcho(opt);
        j["anchors"] = anchors.indices;
        nlohmann::json ghat = nlohmann::json::object();
        for (Eigen::Index i = 0; i < anchors.gHat.size(); ++i) {
            if (anchors.gHat(i) > 0.0) ghat[std::to_string(i)] = anchors.gHat(i);
        }
        j["ghat"] = ghat;
        j["degenerate_subproblems"] = anchors.degenerateCount;
        writeOut(j.dump(2) + "\n", opt.outPath);
    }
    return 0;
}

std::string recordsToCsv(const std::vector<mch::BenchRecord>& records) {
    std::string text = "n,m,k,mu,p,s,mode,seed,rho,recon_err,wall_ms\n";
    for (const mch::BenchRecord& r : records) {
        const mch::BenchConfig& c = r.config;
        text += std::to_string(c.n) + "," + std::to_string(c.m) + "," + std::to_string(c.k) + "," +
                fmt(c.mu) + "," + std::to_string(c.p) + "," + std::to_string(c.s) + "," +
                mch::toString(c.mode) + "," + std::to_string(c.seed) + "," + fmt(r.rho) + "," +
                fmt(r.reconErr) + "," + fmt(r.wallMs) + "\n";
    }
    return text;
}

nlohmann::json recordToJson(const mch::BenchRecord& r) {
    nlohmann::json j;
    j["n"] = r.config.n;
    j["m"] = r.config.m;
    j["k"] = r.config.k;
    j["mu"] = r.config.mu;
    j["p"] = r.config.p;
    j["s"] = r.config.s;
    j["mode"] = mch::toString(r.config.mode);
    j["seed"] = r.config.seed;
    j["rho"] = r.rho;
    j["recon_err"] = r.reconErr;
    j["wall_ms"] = r.wallMs;
    j["anchors"] = r.anchors.indices;
    j["true_anchors"] = r.trueAnchors;
    j["degenerate_subproblems"] = r.anchors.degenerateCount;
    return j;
}

mch::BenchConfig benchConfigFrom(const Options& opt) {
    mch::BenchConfig cfg;
    cfg.n = opt.n;
    cfg.m = opt.m;
    cfg.k = opt.k;
    cfg.mu = opt.mu;
    cfg.p = opt.p == 0 ? 100 : opt.p;
    cfg.s = opt.s;
    cfg.mode = mch::modeFromString(opt.mode);
    cfg.ensemble = mch::ensembleFromString(opt.ensemble);
    cfg.seed = opt.seed;
    cfg.nX = opt.nX;
    cfg.nY = opt.nY;
    cfg.estimator.eps = opt.eps;
    cfg.estimator.delta = opt.delta;
    cfg.threads = opt.threads;
    return cfg;
}

int runBenchCmd(const Options& opt) {
    const mch::BenchRecord rec = mch::runBench(benchConfigFrom(opt));
    if (opt.format == "json") {
        nlohmann::json j = recordToJson(rec);
        j["config"] = configEcho(opt);
        writeOut(j.dump(2) + "\n", opt.outPath);
    } else {
        writeOut(recordsToCsv({rec}), opt.outPath);
    }
    return 0;
}

int runSweep(const Options& opt) {
    mch::BenchConfig base = benchConfigFrom(opt);
    std::vector<std::size_t> sGrid = opt.sGrid.empty() ? std::vector<std::size_t>{opt.s} : opt.sGrid;
    std::vector<double> muGrid = opt.muGrid.empty() ? std::vector<double>{opt.mu} : opt.muGrid;
    std::vector<std::uint64_t> seeds = opt.seeds.empty() ? std::vector<std::uint64_t>{opt.seed} : opt.seeds;
    const mch::SweepResult result = mch::sweep(base, sGrid, muGrid, seeds);
    for (const mch::SweepCellError& f : result.failures) {
        std::cerr << "cell s=" << f.config.s << " mu=" << fmt(f.config.mu) << " seed=" << f.config.seed
                  << " failed: " << f.message << "\n";
    }
    if (opt.format == "json") {
        nlohmann::json arr = nlohmann::json::array();
        for (const mch::BenchRecord& r : result.records) arr.push_back(recordToJson(r));
        nlohmann::json j;
        j["config"] = configEcho(opt);
        j["records"] = arr;
        writeOut(j.dump(2) + "\n", opt.outPath);
    } else {
        writeOut(recordsToCsv(result.records), opt.outPath);
    }
    return result.failures.empty() ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Sublinear minimum conical hull solver and SNMF benchmark"};
    app.require_subcommand(1);
    Options opt;

    app.add_option("--config", opt.configPath, "JSON config file; explicit flags take precedence");

    auto addCommon = [&](CLI::App* cmd) {
        cmd->add_option("--config", opt.configPath, "JSON config file; explicit flags take precedence");
        cmd->add_option("--seed", opt.seed, "master seed (default 1729, fixed, not wall-clock)");
        cmd->add_option("--out", opt.outPath, "output path (default stdout; gen: output directory)");
    };
    auto addSolveFlags = [&](CLI::App* cmd) {
        cmd->add_option("--k", opt.k, "number of anchors");
        cmd->add_option("--p", opt.p, "number of projections (0 = ceil(k log2 k) * 10)");
        cmd->add_option("--s", opt.s, "sketch sample count (approx mode)");
        cmd->add_option("--mode", opt.mode, "exact | approx")->check(CLI::IsMember({"exact", "approx"}));
        cmd->add_option("--ensemble", opt.ensemble, "gaussian | unitBasis | dataRow | uniformNonneg")
            ->check(CLI::IsMember({"gaussian", "unitBasis", "dataRow", "uniformNonneg"}));
        cmd->add_option("--nx", opt.nX, "post-selection draws from the X distribution");
        cmd->add_option("--ny", opt.nY, "post-selection draws from the Y distribution");
        cmd->add_option("--eps", opt.eps, "inner-product estimator precision");
        cmd->add_option("--delta", opt.delta, "inner-product estimator failure probability");
        cmd->add_option("--threads", opt.threads, "worker count (results are thread-count independent)");
        cmd->add_option("--format", opt.format, "csv | json")->check(CLI::IsMember({"csv", "json"}));
    };

    CLI::App* gen = app.add_subcommand("gen", "write a synthetic SNMF instance (X.csv + anchors.json)");
    gen->add_option("--n", opt.n, "rows");
    gen->add_option("--m", opt.m, "columns");
    gen->add_option("--k", opt.k, "number of anchors");
    gen->add_option("--mu", opt.mu, "noise variance");
    addCommon(gen);

    CLI::App* solveCmd = app.add_subcommand("solve", "find anchors of a stored matrix");
    solveCmd->add_option("--x", opt.xPath, "matrix X (.csv triplets or .mtx)")->required();
    solveCmd->add_option("--y", opt.yPath, "matrix Y (defaults to X)");
    addSolveFlags(solveCmd);
    addCommon(solveCmd);

    CLI::App* benchCmd = app.add_subcommand("bench", "generate one instance, solve it, report metrics");
    benchCmd->add_option("--n", opt.n, "rows");
    benchCmd->add_option("--m", opt.m, "columns");
    benchCmd->add_option("--mu", opt.mu, "noise variance");
    addSolveFlags(benchCmd);
    addCommon(benchCmd);

    CLI::App* sweepCmd = app.add_subcommand("sweep", "grid of bench cells (s x mu x seeds)");
    sweepCmd->add_option("--n", opt.n, "rows");
    sweepCmd->add_option("--m", opt.m, "columns");
    sweepCmd->add_option("--s-grid", opt.sGrid, "sketch sizes")->delimiter(',');
    sweepCmd->add_option("--mu-grid", opt.muGrid, "noise variances")->delimiter(',');
    sweepCmd->add_option("--seeds", opt.seeds, "seed list")->delimiter(',');
    addSolveFlags(sweepCmd);
    addCommon(sweepCmd);

    try {
        app.parse(argc, argv);
        applyConfigFile(opt, *app.get_subcommands().front());
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }

    try {
        if (gen->parsed()) return runGen(opt);
        if (solveCmd->parsed()) return runSolve(opt);
        if (benchCmd->parsed()) return runBenchCmd(opt);
        if (sweepCmd->parsed()) return runSweep(opt);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 1;
}
