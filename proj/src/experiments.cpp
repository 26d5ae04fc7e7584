#include "nesc/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace nesc {

namespace {

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> parts;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, sep)) parts.push_back(trim(item));
    if (!s.empty() && s.back() == sep) parts.push_back("");
    return parts;
}

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string fmt_vec(const Vec& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) s += ",";
        s += fmt(v[i]);
    }
    return s;
}

void write_manifest(const std::string& path,
                    std::vector<std::pair<std::string, std::string>> entries) {
    std::sort(entries.begin(), entries.end());
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot open '" + path + "' for writing");
    for (const auto& [k, v] : entries) f << k << " = " << v << "\n";
}

// Broadcast a scalar or per-agent list to exactly n entries.
Vec broadcast(const Vec& v, std::size_t n, const std::string& what) {
    if (v.size() == n) return v;
    if (v.size() == 1) return Vec(n, v[0]);
    throw std::invalid_argument("config key '" + what + "' needs 1 or " + std::to_string(n) +
                                " values, got " + std::to_string(v.size()));
}

}  // namespace

// ---------------------------------------------------------------- Config

Config Config::from_string(const std::string& text) {
    Config c;
    std::stringstream ss(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(ss, line)) {
        ++lineno;
        std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        std::size_t eq = t.find('=');
        if (eq == std::string::npos)
            throw std::invalid_argument("config line " + std::to_string(lineno) +
                                        ": expected 'key = value', got '" + t + "'");
        std::string key = trim(t.substr(0, eq));
        std::string val = trim(t.substr(eq + 1));
        if (key.empty())
            throw std::invalid_argument("config line " + std::to_string(lineno) + ": empty key");
        c.kv_[key] = val;
    }
    return c;
}

Config Config::from_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::invalid_argument("cannot read config file '" + path + "'");
    std::stringstream ss;
    ss << f.rdbuf();
    return from_string(ss.str());
}

void Config::set(const std::string& key, const std::string& value) { kv_[key] = value; }

bool Config::has(const std::string& key) const { return kv_.count(key) != 0; }

std::string Config::get_string(const std::string& key, const std::string& fallback) const {
    auto it = kv_.find(key);
    if (it == kv_.end()) return fallback;
    used_.insert(key);
    return it->second;
}

double Config::get_double(const std::string& key, double fallback) const {
    auto it = kv_.find(key);
    if (it == kv_.end()) return fallback;
    used_.insert(key);
    const char* s = it->second.c_str();
    char* end = nullptr;
    double v = std::strtod(s, &end);
    if (end == s || *end != '\0')
        throw std::invalid_argument("config key '" + key + "': expected a number, got '" +
                                    it->second + "'");
    return v;
}

std::uint64_t Config::get_u64(const std::string& key, std::uint64_t fallback) const {
    auto it = kv_.find(key);
    if (it == kv_.end()) return fallback;
    used_.insert(key);
    const char* s = it->second.c_str();
    char* end = nullptr;
    unsigned long long v = std::strtoull(s, &end, 10);
    // strtoull accepts a leading '-' and wraps, so screen it out explicitly.
    if (end == s || *end != '\0' || it->second.find('-') != std::string::npos)
        throw std::invalid_argument("config key '" + key + "': expected an unsigned integer, got '" +
                                    it->second + "'");
    return v;
}

std::size_t Config::get_size(const std::string& key, std::size_t fallback) const {
    return static_cast<std::size_t>(get_u64(key, fallback));
}

Vec Config::get_vec(const std::string& key, const Vec& fallback) const {
    auto it = kv_.find(key);
    if (it == kv_.end()) return fallback;
    used_.insert(key);
    Vec v;
    for (const auto& part : split(it->second, ',')) {
        const char* s = part.c_str();
        char* end = nullptr;
        double x = std::strtod(s, &end);
        if (end == s || *end != '\0')
            throw std::invalid_argument("config key '" + key + "': expected numbers, got '" +
                                        it->second + "'");
        v.push_back(x);
    }
    if (v.empty())
        throw std::invalid_argument("config key '" + key + "': empty list");
    return v;
}

std::vector<std::string> Config::unused_keys() const {
    std::vector<std::string> out;
    for (const auto& [k, v] : kv_)
        if (!used_.count(k)) out.push_back(k);
    return out;
}

// ------------------------------------------------------------- observers

namespace {

std::vector<Observer> game_observers(const GameSpec& g, const System& sys) {
    std::size_t off = sys.u_offset;
    std::size_t m = g.dim();
    std::vector<Observer> obs;
    obs.push_back({"ne_residual", [g, off, m](double, const Vec& x) {
                       Vec u(x.begin() + off, x.begin() + off + m);
                       return g.ne_residual(u);
                   }});
    return obs;
}

Vec channel_after(const Trajectory& traj, std::size_t ch, double t_from) {
    Vec out;
    for (std::size_t k = 0; k < traj.times.size(); ++k)
        if (traj.times[k] >= t_from - 1e-9) out.push_back(traj.channels[ch][k]);
    return out;
}

// Default master seed for the bilinear experiment, selected with
// tools/preset_search so each controller's kappa draw lands in a frequency
// window validated at both dither amplitudes (0.1 and 0.05).
constexpr std::uint64_t kBilinearSeed = 919888;
constexpr std::uint64_t kFixedDemandSeed = 7;

}  // namespace

// ---------------------------------------------------------- run_bilinear

BilinearResult run_bilinear(const Config& cfg, const std::string& out_dir) {
    std::filesystem::create_directories(out_dir);
    GameSpec g = builtin_bilinear(cfg.get_double("game.u1_star", 2.0),
                                  cfg.get_double("game.u2_star", -3.0));
    Vec u0 = cfg.get_vec("run.initial", {2.8, -2.4});
    g.check_action(u0);

    Vec gamma = broadcast(cfg.get_vec("esc.gamma", {0.1}), 2, "esc.gamma");
    Vec eps = broadcast(cfg.get_vec("esc.epsilon", {1.0}), 2, "esc.epsilon");
    Vec amp = broadcast(cfg.get_vec("esc.amplitude", {0.1}), 2, "esc.amplitude");

    SolverConfig sc;
    sc.method = cfg.get_string("sim.method", "rk4");
    sc.step = cfg.get_double("sim.step", 0.01);
    sc.horizon = cfg.get_double("sim.horizon", 2000.0);
    sc.record_every = cfg.get_size("sim.record_every", 100);
    sc.seed = cfg.get_u64("sim.seed", kBilinearSeed);

    std::string list = cfg.get_string("run.controllers",
                                      "nesc,baseline-unfiltered,baseline-filtered");

    BilinearResult res;
    res.seed = sc.seed;
    res.initial_residual = g.ne_residual(u0);

    std::vector<std::pair<std::string, std::string>> man;
    man.emplace_back("experiment", "bilinear");
    man.emplace_back("game.u1_star", fmt(g.known_ne[0]));
    man.emplace_back("game.u2_star", fmt(g.known_ne[1]));
    man.emplace_back("run.initial", fmt_vec(u0));
    man.emplace_back("esc.gamma", fmt_vec(gamma));
    man.emplace_back("esc.epsilon", fmt_vec(eps));
    man.emplace_back("esc.amplitude", fmt_vec(amp));
    man.emplace_back("sim.method", sc.method);
    man.emplace_back("sim.step", fmt(sc.step));
    man.emplace_back("sim.horizon", fmt(sc.horizon));
    man.emplace_back("sim.record_every", std::to_string(sc.record_every));
    man.emplace_back("sim.seed", std::to_string(sc.seed));

    std::ofstream summary(out_dir + "/summary.txt");
    if (!summary) throw std::runtime_error("cannot write to '" + out_dir + "'");
    summary << "initial_residual = " << fmt(res.initial_residual) << "\n";

    for (const std::string& name : split(list, ',')) {
        Controller c = controller_from_name(name);
        // Stream index is the controller's canonical slot, so a subset run
        // draws the same frequencies as the full run.
        auto stream = static_cast<std::uint64_t>(c);

        EscParams p;
        p.gamma = gamma;
        p.epsilon = eps;
        p.amplitude = amp;
        std::string kkey = "esc.kappa." + name;
        std::string kspec = cfg.get_string(kkey, "random");
        if (kspec == "random") {
            Rng r(derive_seed(sc.seed, stream));
            p.kappa = draw_kappa(r, 2);
        } else {
            p.kappa = cfg.get_vec(kkey, {});
        }

        System sys = make_system(c, g, p);
        Vec x0 = assemble_initial(c, g, p, u0);
        Trajectory traj = integrate(sys, x0, sc, game_observers(g, sys));

        std::string base = name;
        std::replace(base.begin(), base.end(), '-', '_');
        write_csv(out_dir + "/" + base + ".csv", traj);

        ControllerRun run;
        run.controller = name;
        run.kappa = p.kappa;
        run.diverged = traj.diverged;
        run.final_residual = traj.channels[0].back();
        run.peak_residual =
            *std::max_element(traj.channels[0].begin(), traj.channels[0].end());
        Vec tail = channel_after(traj, 0, sc.horizon / 2.0);
        if (tail.empty()) tail = traj.channels[0];
        run.tail_min = *std::min_element(tail.begin(), tail.end());
        run.tail_max = *std::max_element(tail.begin(), tail.end());
        run.tail_mean = mean(tail);
        res.runs.push_back(run);

        man.emplace_back("kappa." + name, fmt_vec(p.kappa));
        summary << "controller = " << name << "  kappa = " << fmt_vec(p.kappa)
                << "  final_residual = " << fmt(run.final_residual)
                << "  peak_residual = " << fmt(run.peak_residual)
                << "  tail_min = " << fmt(run.tail_min)
                << "  tail_max = " << fmt(run.tail_max)
                << "  tail_mean = " << fmt(run.tail_mean)
                << "  diverged = " << (run.diverged ? 1 : 0) << "\n";
    }

    auto leftovers = cfg.unused_keys();
    if (!leftovers.empty())
        throw std::invalid_argument("unknown config key '" + leftovers.front() + "'");
    write_manifest(out_dir + "/manifest.txt", man);
    return res;
}

// ------------------------------------------------------ run_fixed_demand

namespace {

struct FdSetup {
    GameSpec game;
    EscParams params;
    SolverConfig solver;
    Vec u0;
    Vec capacity;
    double demand = 0.0;
    double sigma = 0.0;
    double tail_seconds = 250.0;
    std::uint64_t seed = 0;
    std::size_t n_producers = 0;
};

FdSetup fd_setup(const Config& cfg, double default_horizon) {
    FdSetup s;
    FixedDemandParams fp;
    fp.capacity = cfg.get_vec("game.capacity", {172.0, 47.0, 66.0});
    fp.demand = cfg.get_double("game.demand", 350.0);
    s.game = builtin_fixed_demand(fp);
    s.capacity = fp.capacity;
    s.demand = fp.demand;
    s.n_producers = fp.capacity.size();
    std::size_t n = s.n_producers + 1;

    s.params.gamma = broadcast(cfg.get_vec("esc.gamma", {0.02}), n, "esc.gamma");
    s.params.epsilon = broadcast(cfg.get_vec("esc.epsilon", {1.0 / 3.0}), n, "esc.epsilon");
    s.params.amplitude = broadcast(cfg.get_vec("esc.amplitude", {20.0}), n, "esc.amplitude");
    s.params.kappa = cfg.get_vec("esc.kappa", {0.1778, 0.1238, 0.1824});
    s.params.oracle.assign(n, 0);
    s.params.oracle[n - 1] = 1;  // the regulator runs on its model

    s.solver.method = cfg.get_string("sim.method", "rk4");
    s.solver.step = cfg.get_double("sim.step", 0.01);
    s.solver.horizon = cfg.get_double("sim.horizon", default_horizon);
    s.solver.record_every = cfg.get_size("sim.record_every", 100);
    s.seed = cfg.get_u64("sim.seed", kFixedDemandSeed);
    s.solver.seed = s.seed;

    s.u0 = cfg.get_vec("run.initial", Vec(n, 0.0));
    s.game.check_action(s.u0);
    s.sigma = cfg.get_double("noise.sigma", 0.0);
    if (s.sigma < 0.0) throw std::invalid_argument("noise.sigma must be non-negative");
    s.tail_seconds = cfg.get_double("run.tail_seconds", 250.0);
    return s;
}

std::vector<Observer> fd_observers(const GameSpec& g, const System& sys, double demand,
                                   std::size_t n_prod) {
    std::size_t off = sys.u_offset;
    std::size_t m = g.dim();
    std::vector<Observer> obs;
    obs.push_back({"price", [off, n_prod](double, const Vec& x) { return x[off + n_prod]; }});
    obs.push_back({"mismatch", [off, n_prod, demand](double, const Vec& x) {
                       double s = 0.0;
                       for (std::size_t i = 0; i < n_prod; ++i) s += x[off + i];
                       return s - demand;
                   }});
    obs.push_back({"ne_residual", [g, off, m](double, const Vec& x) {
                       Vec u(x.begin() + off, x.begin() + off + m);
                       return g.ne_residual(u);
                   }});
    return obs;
}

void fd_manifest_entries(const FdSetup& s, std::vector<std::pair<std::string, std::string>>& man) {
    man.emplace_back("game.capacity", fmt_vec(s.capacity));
    man.emplace_back("game.demand", fmt(s.demand));
    man.emplace_back("esc.gamma", fmt_vec(s.params.gamma));
    man.emplace_back("esc.epsilon", fmt_vec(s.params.epsilon));
    man.emplace_back("esc.amplitude", fmt_vec(s.params.amplitude));
    man.emplace_back("esc.kappa", fmt_vec(s.params.kappa));
    man.emplace_back("sim.method", s.solver.method);
    man.emplace_back("sim.step", fmt(s.solver.step));
    man.emplace_back("sim.horizon", fmt(s.solver.horizon));
    man.emplace_back("sim.record_every", std::to_string(s.solver.record_every));
    man.emplace_back("sim.seed", std::to_string(s.seed));
    man.emplace_back("run.initial", fmt_vec(s.u0));
    man.emplace_back("run.tail_seconds", fmt(s.tail_seconds));
}

}  // namespace

FixedDemandResult run_fixed_demand(const Config& cfg, const std::string& out_dir) {
    std::filesystem::create_directories(out_dir);
    FdSetup s = fd_setup(cfg, 1500.0);
    auto leftovers = cfg.unused_keys();
    if (!leftovers.empty())
        throw std::invalid_argument("unknown config key '" + leftovers.front() + "'");

    CostEval cost = noisy_cost_channel(s.game, s.sigma, derive_seed(s.seed, 0));
    System sys = make_system(Controller::nesc, s.game, s.params, cost);
    Vec x0 = assemble_initial(Controller::nesc, s.game, s.params, s.u0);
    Trajectory traj = integrate(sys, x0, s.solver,
                                fd_observers(s.game, sys, s.demand, s.n_producers));

    double lam_star = s.game.known_ne.back();
    FixedDemandResult res;
    res.sigma = s.sigma;
    res.price_star = lam_star;
    res.diverged = traj.diverged;
    res.final_price = traj.channels[0].back();
    res.final_residual = traj.channels[2].back();
    double t_from = s.solver.horizon - s.tail_seconds;
    Vec price_tail = channel_after(traj, 0, t_from);
    Vec mis_tail = channel_after(traj, 1, t_from);
    if (price_tail.empty()) {  // guard tripped before the tail window opened
        price_tail = traj.channels[0];
        mis_tail = traj.channels[1];
    }
    res.tail_price_mean = mean(price_tail);
    res.tail_price_max_err = 0.0;
    for (double v : price_tail)
        res.tail_price_max_err = std::max(res.tail_price_max_err, std::abs(v - lam_star));
    res.tail_mismatch_max = 0.0;
    for (double v : mis_tail)
        res.tail_mismatch_max = std::max(res.tail_mismatch_max, std::abs(v));

    write_csv(out_dir + "/fixed_demand.csv", traj);
    std::vector<std::pair<std::string, std::string>> man;
    man.emplace_back("experiment", "fixed-demand");
    man.emplace_back("noise.sigma", fmt(s.sigma));
    fd_manifest_entries(s, man);
    write_manifest(out_dir + "/manifest.txt", man);

    std::ofstream summary(out_dir + "/summary.txt");
    summary << "price_star = " << fmt(lam_star) << "\n"
            << "final_price = " << fmt(res.final_price) << "\n"
            << "tail_price_mean = " << fmt(res.tail_price_mean) << "\n"
            << "tail_price_max_err = " << fmt(res.tail_price_max_err) << "\n"
            << "tail_mismatch_max = " << fmt(res.tail_mismatch_max) << "\n"
            << "final_residual = " << fmt(res.final_residual) << "\n"
            << "diverged = " << (res.diverged ? 1 : 0) << "\n";
    return res;
}

// ------------------------------------------------------- run_noise_study

NoiseStudyResult run_noise_study(const Config& cfg, const std::string& out_dir) {
    std::filesystem::create_directories(out_dir);
    FdSetup s = fd_setup(cfg, 3000.0);
    Vec sigmas = cfg.get_vec("noise.sigmas", {0.0, 250.0, 600.0});
    std::size_t runs = cfg.get_size("noise.runs", 200);
    double sample_period = cfg.get_double("noise.sample_period", 1.0);
    double bin_width = cfg.get_double("noise.bin_width", 0.05);
    std::size_t threads = cfg.get_size("noise.threads", std::thread::hardware_concurrency());
    auto leftovers = cfg.unused_keys();
    if (!leftovers.empty())
        throw std::invalid_argument("unknown config key '" + leftovers.front() + "'");
    if (runs < 2) throw std::invalid_argument("noise.runs must be at least 2");
    if (threads == 0) threads = 1;
    threads = std::min(threads, runs);

    NoiseStudyResult res;
    res.price_star = s.game.known_ne.back();
    res.runs_per_sigma = runs;

    std::vector<std::pair<std::string, std::string>> man;
    man.emplace_back("experiment", "noise-study");
    man.emplace_back("noise.sigmas", fmt_vec(sigmas));
    man.emplace_back("noise.runs", std::to_string(runs));
    man.emplace_back("noise.sample_period", fmt(sample_period));
    man.emplace_back("noise.bin_width", fmt(bin_width));
    fd_manifest_entries(s, man);
    write_manifest(out_dir + "/manifest.txt", man);

    Vec pooled_all;
    std::ofstream summary(out_dir + "/noise_summary.txt");
    if (!summary) throw std::runtime_error("cannot write to '" + out_dir + "'");

    for (std::size_t si = 0; si < sigmas.size(); ++si) {
        double sigma = sigmas[si];
        if (sigma < 0.0) throw std::invalid_argument("noise.sigmas must be non-negative");

        // Per-run seeds depend only on the run index, and the tails are
        // stitched together in index order, so the pooled sample is
        // bit-identical for any thread count.
        std::vector<Vec> tails(runs);
        std::atomic<std::size_t> next{0};
        std::atomic<std::size_t> completed{0};
        std::atomic<bool> failed{false};
        std::mutex err_mutex;
        std::exception_ptr err;

        auto worker = [&]() {
            for (;;) {
                std::size_t r = next.fetch_add(1);
                if (r >= runs || failed.load()) return;
                try {
                    std::uint64_t run_seed = derive_seed(s.seed, si * runs + r);
                    CostEval cost = noisy_cost_channel(s.game, sigma, run_seed);
                    System sys = make_system(Controller::nesc, s.game, s.params, cost);
                    Vec x0 = assemble_initial(Controller::nesc, s.game, s.params, s.u0);
                    Trajectory traj = integrate(sys, x0, s.solver,
                                                fd_observers(s.game, sys, s.demand,
                                                             s.n_producers));
                    if (traj.diverged)
                        throw DivergenceError("noise study: run " + std::to_string(r) +
                                              " at sigma " + fmt(sigma) + " diverged");
                    tails[r] = tail_samples(traj, 0, s.tail_seconds, sample_period);
                } catch (...) {
                    std::lock_guard<std::mutex> lk(err_mutex);
                    if (!err) err = std::current_exception();
                    failed.store(true);
                    return;
                }
                std::size_t done = completed.fetch_add(1) + 1;
                if (done % 50 == 0 || done == runs)
                    std::fprintf(stderr, "noise-study: sigma %g, %zu/%zu runs\n", sigma, done,
                                 runs);
            }
        };
        if (threads == 1) {
            worker();
        } else {
            std::vector<std::thread> pool;
            pool.reserve(threads);
            for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
            for (auto& th : pool) th.join();
        }
        if (err) std::rethrow_exception(err);

        Vec pooled;
        for (const Vec& tail : tails) pooled.insert(pooled.end(), tail.begin(), tail.end());
        NoiseLevelStats lv;
        lv.sigma = sigma;
        lv.runs = runs;
        lv.samples = pooled.size();
        lv.pooled_mean = mean(pooled);
        lv.pooled_std = stddev(pooled);
        lv.histogram = price_histogram(pooled, bin_width);

        char fname[64];
        std::snprintf(fname, sizeof fname, "histogram_sigma%g.csv", sigma);
        std::ofstream hf(out_dir + "/" + fname);
        hf << "bin_lo,count\n";
        for (std::size_t b = 0; b < lv.histogram.counts.size(); ++b)
            hf << fmt(lv.histogram.bin_lo[b]) << "," << lv.histogram.counts[b] << "\n";

        summary << "sigma = " << fmt(sigma) << "  runs = " << runs
                << "  samples = " << lv.samples
                << "  pooled_mean = " << fmt(lv.pooled_mean)
                << "  pooled_std = " << fmt(lv.pooled_std) << "\n";

        pooled_all.insert(pooled_all.end(), pooled.begin(), pooled.end());
        res.levels.push_back(std::move(lv));
    }

    res.pooled_all_mean = mean(pooled_all);
    res.pooled_all_std = stddev(pooled_all);
    double n_runs = static_cast<double>(runs);
    summary << "pooled_all_mean = " << fmt(res.pooled_all_mean)
            << "  pooled_all_std = " << fmt(res.pooled_all_std)
            << "  price_star = " << fmt(res.price_star)
            << "  clt_bound_3std_over_sqrt_runs = "
            << fmt(3.0 * res.pooled_all_std / std::sqrt(n_runs)) << "\n";
    return res;
}

// ---------------------------------------------------- run_counterexample

CounterexampleResult run_counterexample(const Config& cfg, const std::string& out_dir) {
    std::filesystem::create_directories(out_dir);
    CounterexampleResult res;
    res.normal = cfg.get_vec("ce.normal", {-1.0, -0.2});
    res.offset = cfg.get_double("ce.offset", 0.0);
    res.state = cfg.get_vec("ce.state", {0.0, 1.0});
    auto leftovers = cfg.unused_keys();
    if (!leftovers.empty())
        throw std::invalid_argument("unknown config key '" + leftovers.front() + "'");

    GameSpec g = builtin_bilinear(0.0, 0.0);  // F(u) = (u2, -u1), NE at the origin
    if (res.state.size() != 2 || res.normal.size() != 2)
        throw std::invalid_argument("counterexample is two-dimensional");
    EscParams p = EscParams::uniform(2, 1.0, 1.0, 1.0);
    HalfspaceSet hs{res.normal, res.offset};
    if (dot(res.normal, res.state) > res.offset + 1e-12)
        throw std::invalid_argument("counterexample state must be feasible");

    Vec x = res.state;
    x.insert(x.end(), res.state.begin(), res.state.end());  // z = u
    Vec dx;
    projected_gr_rhs(g, p, [hs](const Vec& v) { return hs.project(v); }, x, dx);
    res.rate_constrained = lyapunov_flow_rate(g, p, x, g.known_ne, dx);
    res.rate_unconstrained = lyapunov_rate(g, p, x, g.known_ne);

    Vec origin(4, 0.0);
    projected_gr_rhs(g, p, [hs](const Vec& v) { return hs.project(v); }, origin, dx);
    res.rate_at_origin = lyapunov_flow_rate(g, p, origin, g.known_ne, dx);

    std::vector<std::pair<std::string, std::string>> man;
    man.emplace_back("experiment", "counterexample");
    man.emplace_back("ce.normal", fmt_vec(res.normal));
    man.emplace_back("ce.offset", fmt(res.offset));
    man.emplace_back("ce.state", fmt_vec(res.state));
    write_manifest(out_dir + "/manifest.txt", man);

    std::ofstream rep(out_dir + "/report.txt");
    rep << "game: bilinear with NE at the origin, F(u) = (u2, -u1)\n"
        << "constraint set: {x : <" << fmt_vec(res.normal) << ", x> <= " << fmt(res.offset)
        << "}\n"
        << "state: z = u = (" << fmt_vec(res.state) << ")\n"
        << "projected-flow lyapunov rate:    " << fmt(res.rate_constrained) << "\n"
        << "unconstrained lyapunov rate:     " << fmt(res.rate_unconstrained) << "\n"
        << "projected rate at the NE:        " << fmt(res.rate_at_origin) << "\n";

    if (!(res.rate_constrained > 0.0))
        throw std::runtime_error("counterexample construction failed: projected rate " +
                                 fmt(res.rate_constrained) + " is not positive");
    if (res.rate_unconstrained > 1e-12)
        throw std::runtime_error("counterexample control failed: unconstrained rate " +
                                 fmt(res.rate_unconstrained) + " is positive");
    if (std::abs(res.rate_at_origin) > 1e-12)
        throw std::runtime_error("counterexample control failed: rate at the NE is " +
                                 fmt(res.rate_at_origin));
    return res;
}

// --------------------------------------------------------- run_validate

Inject inject_from_name(const std::string& name) {
    if (name.empty() || name == "none") return Inject::none;
    if (name == "ftilde-sign-flip") return Inject::ftilde_sign_flip;
    if (name == "non-monotone-game") return Inject::non_monotone_game;
    throw std::invalid_argument("unknown injection '" + name +
                                "' (available: none, ftilde-sign-flip, non-monotone-game)");
}

namespace {

GameSpec anti_monotone_game() {
    GameSpec g;
    g.name = "anti-monotone";
    g.dims = {1, 1};
    g.costs.push_back([](const Vec& u) { return -0.5 * u[0] * u[0]; });
    g.costs.push_back([](const Vec& u) { return -0.5 * u[1] * u[1]; });
    g.pseudograd = [](const Vec& u, Vec& f) {
        f[0] = -u[0];
        f[1] = -u[1];
    };
    return g;
}

GameSpec scalar_game(const char* name, std::function<double(double)> J,
                     std::function<double(double)> dJ) {
    GameSpec g;
    g.name = name;
    g.dims = {1};
    g.costs.push_back([J](const Vec& u) { return J(u[0]); });
    g.pseudograd = [dJ](const Vec& u, Vec& f) { f[0] = dJ(u[0]); };
    return g;
}

GameSpec negate_costs(GameSpec g) {
    for (auto& c : g.costs) {
        auto orig = c;
        c = [orig](const Vec& u) { return -orig(u); };
    }
    return g;
}

double max_rel_grad_err(const GameSpec& g, std::size_t points, Rng& rng) {
    double worst = 0.0;
    Vec u(g.dim());
    for (std::size_t k = 0; k < points; ++k) {
        for (auto& v : u) v = rng.uniform(-10.0, 10.0);
        Vec fd = finite_diff_pseudogradient(g, u);
        Vec an = g.pseudogradient(u);
        for (std::size_t j = 0; j < u.size(); ++j) {
            double scale = std::max(1.0, std::abs(an[j]));
            worst = std::max(worst, std::abs(fd[j] - an[j]) / scale);
        }
    }
    return worst;
}

}  // namespace

ValidateResult run_validate(const Config& cfg, const std::string& out_dir, Inject inject) {
    std::filesystem::create_directories(out_dir);
    std::size_t points = cfg.get_size("validate.points", 100);
    std::size_t pairs = cfg.get_size("validate.pairs", 1000);
    std::size_t quad = cfg.get_size("validate.quadrature", 4096);
    std::uint64_t seed = cfg.get_u64("sim.seed", 2024);
    auto leftovers = cfg.unused_keys();
    if (!leftovers.empty())
        throw std::invalid_argument("unknown config key '" + leftovers.front() + "'");

    ValidateResult res;
    auto add = [&res](const std::string& name, bool pass, const std::string& detail) {
        res.checks.push_back({name, pass, detail});
    };

    GameSpec bil = builtin_bilinear();
    GameSpec fd = builtin_fixed_demand();
    GameSpec probe_bil = inject == Inject::non_monotone_game ? anti_monotone_game() : bil;
    GameSpec probe_fd = inject == Inject::non_monotone_game ? anti_monotone_game() : fd;

    {  // finite differences vs analytic pseudogradients
        Rng rng(derive_seed(seed, 1));
        double e1 = max_rel_grad_err(bil, points, rng);
        double e2 = max_rel_grad_err(fd, points, rng);
        add("gradient-check-bilinear", e1 <= 1e-6, "max rel err " + fmt(e1));
        add("gradient-check-fixed-demand", e2 <= 1e-6, "max rel err " + fmt(e2));
    }
    {  // monotonicity probes
        Rng rng(derive_seed(seed, 2));
        double m1 = monotonicity_probe(probe_bil, pairs, -10.0, 10.0, rng);
        double m2 = monotonicity_probe(probe_fd, pairs, -10.0, 10.0, rng);
        add("monotonicity-bilinear", m1 >= -1e-9, "min pairing " + fmt(m1));
        add("monotonicity-fixed-demand", m2 >= -1e-9, "min pairing " + fmt(m2));
    }
    {  // bilinear pseudogradient is exactly skew
        Rng rng(derive_seed(seed, 3));
        double worst = 0.0;
        Vec u(2), v(2);
        for (std::size_t k = 0; k < pairs; ++k) {
            for (auto& x : u) x = rng.uniform(-10.0, 10.0);
            for (auto& x : v) x = rng.uniform(-10.0, 10.0);
            Vec fu = bil.pseudogradient(u);
            Vec fv = bil.pseudogradient(v);
            double s = 0.0;
            for (std::size_t j = 0; j < 2; ++j) s += (fu[j] - fv[j]) * (u[j] - v[j]);
            worst = std::max(worst, std::abs(s));
        }
        add("skew-bilinear", worst <= 1e-9, "max |pairing| " + fmt(worst));
    }
    {  // the probe must catch a genuinely non-monotone field
        Rng rng(derive_seed(seed, 4));
        double m = monotonicity_probe(anti_monotone_game(), pairs, -10.0, 10.0, rng);
        add("monotonicity-negative-control", m < -1e-6, "min pairing " + fmt(m));
    }
    {  // dither averaging: exact for quadratics, O(a^2) for the quartic
        GameSpec quad_game = scalar_game("quadratic", [](double u) { return u * u; },
                                         [](double u) { return 2.0 * u; });
        GameSpec quart_game = scalar_game("quartic", [](double u) { return u * u * u * u; },
                                          [](double u) { return 4.0 * u * u * u; });
        if (inject == Inject::ftilde_sign_flip) {
            quad_game = negate_costs(quad_game);
            quart_game = negate_costs(quart_game);
        }
        EscParams p = EscParams::uniform(1, 1.0, 1.0, 0.1);
        p.kappa = {0.5};
        Vec u{1.0};
        double equad = dither_average_error(quad_game, p, u, quad)[0];
        add("dither-average-quadratic", equad <= 1e-8, "error " + fmt(equad));
        double ea = dither_average_error(quart_game, p, u, quad)[0];
        EscParams ph = p;
        ph.amplitude = {0.05};
        double eh = dither_average_error(quart_game, ph, u, quad)[0];
        double ratio = ea / eh;
        add("dither-average-quartic-ratio", ratio >= 3.5 && ratio <= 4.5,
            "err(a)/err(a/2) = " + fmt(ratio));
    }
    {  // oscillator pairs stay on the unit circle over 1e5 RK4 steps
        Vec kappa{0.3, 0.7};
        Rhs rhs = [&kappa](double, const Vec& mu, Vec& dmu) { oscillator_rhs(kappa, mu, dmu); };
        SolverConfig sc;
        sc.step = 1e-3;
        sc.horizon = 100.0;
        sc.record_every = 100000;
        Trajectory traj = integrate(rhs, Vec{1.0, 0.0, 1.0, 0.0}, sc);
        const Vec& xf = traj.final_state();
        double drift = 0.0;
        for (std::size_t j = 0; j < 2; ++j) {
            double n = std::hypot(xf[2 * j], xf[2 * j + 1]);
            drift = std::max(drift, std::abs(n - 1.0));
        }
        add("oscillator-norm-drift", drift <= 1e-6, "drift " + fmt(drift));
    }
    {  // RK4 global error scales as h^4 on x' = -x
        auto err_at = [](double h) {
            SolverConfig sc;
            sc.step = h;
            sc.horizon = 1.0;
            sc.record_every = 1000000;
            Rhs rhs = [](double, const Vec& x, Vec& dx) {
                dx.resize(1);
                dx[0] = -x[0];
            };
            Trajectory t = integrate(rhs, Vec{1.0}, sc);
            return std::abs(t.final_state()[0] - std::exp(-1.0));
        };
        double r1 = err_at(0.02) / err_at(0.01);
        double r2 = err_at(0.01) / err_at(0.005);
        bool ok = r1 >= 8.0 && r1 <= 32.0 && r2 >= 8.0 && r2 <= 32.0;
        add("rk4-order", ok, "halving ratios " + fmt(r1) + ", " + fmt(r2));
    }
    {  // V non-increasing along the reduced flow, closed form non-positive
        EscParams p = EscParams::uniform(2, 1.0, 1.0, 1.0);
        System sys = make_system(Controller::gr_flow, bil, p);
        SolverConfig sc;
        sc.step = 0.01;
        sc.horizon = 500.0;
        sc.record_every = 10;
        Vec x0{0.0, 0.0, 5.0, 5.0};
        Trajectory traj = integrate(sys, x0, sc);
        bool mono = true;
        double vprev = lyapunov_value(bil, p, traj.states[0], bil.known_ne);
        double worst_rate = -1e300;
        for (std::size_t k = 1; k < traj.states.size(); ++k) {
            double v = lyapunov_value(bil, p, traj.states[k], bil.known_ne);
            if (v > vprev + 1e-9) mono = false;
            vprev = v;
            worst_rate = std::max(worst_rate, lyapunov_rate(bil, p, traj.states[k], bil.known_ne));
        }
        add("lyapunov-decrease-gr-flow", mono && worst_rate <= 1e-12,
            "max closed-form rate " + fmt(worst_rate));
    }
    {  // projected flow with a huge box reduces to the unconstrained flow
        BoxSet box{Vec(2, -1e12), Vec(2, 1e12)};
        EscParams p = EscParams::uniform(2, 1.0, 1.0, 1.0);
        Rng rng(derive_seed(seed, 5));
        double worst = 0.0;
        for (int k = 0; k < 20; ++k) {
            Vec x(4);
            for (auto& v : x) v = rng.uniform(-5.0, 5.0);
            Vec d1, d2;
            projected_gr_rhs(bil, p, [box](const Vec& v) { return box.project(v); }, x, d1);
            gr_flow_rhs(bil, p, x, d2);
            for (std::size_t j = 0; j < 4; ++j)
                worst = std::max(worst, std::abs(d1[j] - d2[j]));
        }
        add("projected-box-equivalence", worst <= 1e-12, "max rhs diff " + fmt(worst));
    }
    {  // reduced-flow equilibria are exactly z = u with F(u) = 0
        EscParams p = EscParams::uniform(2, 1.0, 1.0, 1.0);
        Vec xeq{bil.known_ne[0], bil.known_ne[1], bil.known_ne[0], bil.known_ne[1]};
        Vec d;
        gr_flow_rhs(bil, p, xeq, d);
        double at_eq = norm_inf(d);
        Rng rng(derive_seed(seed, 6));
        double min_off = 1e300;
        for (int k = 0; k < 10; ++k) {
            Vec x(4);
            for (auto& v : x) v = rng.uniform(1.0, 5.0);
            x[2] += 1.0;  // force z != u
            gr_flow_rhs(bil, p, x, d);
            min_off = std::min(min_off, norm_inf(d));
        }
        add("gr-flow-equilibria", at_eq <= 1e-12 && min_off > 1e-6,
            "|rhs| at NE " + fmt(at_eq) + ", min off-NE " + fmt(min_off));
    }
    {  // noisy channel statistics and sigma = 0 exactness
        GameSpec zero = scalar_game("zero", [](double) { return 0.0; },
                                    [](double) { return 0.0; });
        CostEval noisy = noisy_cost_channel(zero, 1.0, derive_seed(seed, 7));
        Vec draws(100000);
        Vec u{0.0};
        for (auto& d : draws) d = noisy(0, u);
        double m = mean(draws), sd = stddev(draws);
        CostEval clean = noisy_cost_channel(bil, 0.0, derive_seed(seed, 8));
        Rng rng(derive_seed(seed, 9));
        bool exact = true;
        for (int k = 0; k < 10; ++k) {
            Vec v{rng.uniform(-5.0, 5.0), rng.uniform(-5.0, 5.0)};
            if (clean(0, v) != bil.evaluate_cost(0, v)) exact = false;
        }
        add("noise-channel-stats",
            std::abs(m) <= 0.02 && sd >= 0.98 && sd <= 1.02 && exact,
            "mean " + fmt(m) + ", std " + fmt(sd) + ", sigma=0 exact " + (exact ? "yes" : "no"));
    }
    {  // baselines keep orbiting the NE instead of converging
        struct Case {
            Controller c;
            Vec u0;
            Vec kappa;
            const char* name;
        };
        Case cases[] = {
            {Controller::baseline_unfiltered, {2.5, -2.5}, {0.80, 0.50}, "baseline-orbit-unfiltered"},
            {Controller::baseline_filtered, {4.0, -1.0}, {0.60, 0.90}, "baseline-orbit-filtered"},
        };
        for (const auto& cs : cases) {
            EscParams p = EscParams::uniform(2, 0.1, 1.0, 0.1);
            p.kappa = cs.kappa;
            System sys = make_system(cs.c, bil, p);
            SolverConfig sc;
            sc.step = 0.01;
            sc.horizon = 2000.0;
            sc.record_every = 100;
            Vec x0 = assemble_initial(cs.c, bil, p, cs.u0);
            Trajectory traj = integrate(sys, x0, sc, game_observers(bil, sys));
            double r0 = bil.ne_residual(cs.u0);
            Vec tail = channel_after(traj, 0, sc.horizon / 2.0);
            double lo = *std::min_element(tail.begin(), tail.end());
            double hi = *std::max_element(tail.begin(), tail.end());
            bool ok = !traj.diverged && lo >= 0.5 * r0 && hi <= 2.0 * r0;
            add(cs.name, ok, "tail residual in [" + fmt(lo) + ", " + fmt(hi) +
                                 "], band [" + fmt(0.5 * r0) + ", " + fmt(2.0 * r0) + "]");
        }
    }

    res.all_pass = std::all_of(res.checks.begin(), res.checks.end(),
                               [](const ValidateCheck& c) { return c.pass; });

    std::ofstream rep(out_dir + "/validate.txt");
    for (const auto& c : res.checks)
        rep << (c.pass ? "PASS" : "FAIL") << "  " << c.name << "  (" << c.detail << ")\n";
    rep << (res.all_pass ? "ALL CHECKS PASSED" : "CHECKS FAILED") << "\n";

    std::vector<std::pair<std::string, std::string>> man;
    man.emplace_back("experiment", "validate");
    man.emplace_back("validate.points", std::to_string(points));
    man.emplace_back("validate.pairs", std::to_string(pairs));
    man.emplace_back("validate.quadrature", std::to_string(quad));
    man.emplace_back("sim.seed", std::to_string(seed));
    const char* inj = inject == Inject::none ? "none"
                      : inject == Inject::ftilde_sign_flip ? "ftilde-sign-flip"
                                                           : "non-monotone-game";
    man.emplace_back("inject", inj);
    write_manifest(out_dir + "/manifest.txt", man);
    return res;
}

}  // namespace nesc
