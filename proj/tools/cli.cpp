// autobahn: run scenarios, verification suites and trace diffs against the simulator.
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>
#include <atomic>

#include "CLI11.hpp"
#include "autobahn/harness.hpp"

namespace fs = std::filesystem;
using namespace autobahn;
using nlohmann::json;

namespace {

enum Exit { kOk = 0, kViolation = 1, kUsage = 2 };

int log_level() {
    const char* v = std::getenv("AUTOBAHN_LOG");
    if (!v) return 1;
    std::string s(v);
    if (s == "quiet" || s == "error") return 0;
    if (s == "debug") return 3;
    if (s == "info") return 2;
    return 1;
}

void log(int level, const std::string& msg) {
    if (level <= log_level()) std::cerr << msg << '\n';
}

bool parse_bool(const std::string& s) {
    if (s == "true" || s == "1" || s == "on" || s == "yes") return true;
    if (s == "false" || s == "0" || s == "off" || s == "no") return false;
    throw ScenarioError("--flag", "expected boolean, got '" + s + "'");
}

std::pair<uint64_t, uint64_t> parse_range(const std::string& s) {
    auto dots = s.find("..");
    if (dots == std::string::npos) throw ScenarioError("--seeds", "expected A..B");
    uint64_t a = std::stoull(s.substr(0, dots)), b = std::stoull(s.substr(dots + 2));
    if (b < a) throw ScenarioError("--seeds", "empty range");
    return {a, b};
}

void write_file(const fs::path& p, const std::string& content) {
    std::ofstream out(p);
    if (!out) throw std::runtime_error("cannot write " + p.string());
    out << content;
}

std::string metrics_json(const RunResult& r) {
    json rows = json::array();
    double md = double(r.scenario.delay.base);
    for (const auto& t : r.txs) {
        if (t.final_all < 0) continue;
        Time l = t.final_all - t.inject;
        rows.push_back({{"tx_id", t.id},
                        {"inject_time", to_units(t.inject)},
                        {"finalize_time", to_units(t.final_all)},
                        {"latency_units", to_units(l)},
                        {"latency_md", double(l) / md}});
    }
    return rows.dump(1) + "\n";
}

struct RunArgs {
    std::string scenario, seeds, out = "out", format = "csv", mode, fast_path, optimistic_tips;
    std::optional<uint64_t> seed, k;
    std::optional<double> timer;
    std::vector<std::string> checks{"safety", "conservation"};
    bool trace = true;
    unsigned threads = 0;
};

int cmd_run(const RunArgs& a) {
    Scenario base = load_scenario_file(a.scenario);
    auto& cc = base.replica.consensus;
    if (!a.mode.empty()) {
        if (a.mode == "parallel") cc.mode = Mode::Parallel;
        else if (a.mode == "sequential") cc.mode = Mode::Sequential;
        else throw ScenarioError("--mode", "expected sequential|parallel");
    }
    if (a.k) {
        if (*a.k == 0) throw ScenarioError("--k", "must be >= 1");
        cc.k = uint32_t(*a.k);
    }
    if (!a.fast_path.empty()) cc.fast_path = parse_bool(a.fast_path);
    if (!a.optimistic_tips.empty()) cc.optimistic_tips = parse_bool(a.optimistic_tips);
    if (a.timer) {
        if (*a.timer <= 0) throw ScenarioError("--timer", "must be > 0");
        cc.view_timer = units(*a.timer);
    }
    for (const auto& c : a.checks)
        if (c != "safety" && c != "conservation" && c != "liveness") throw ScenarioError("--check", "unknown checker " + c);
    validate_scenario(base);

    std::vector<uint64_t> seeds;
    if (!a.seeds.empty()) {
        auto [lo, hi] = parse_range(a.seeds);
        for (uint64_t s = lo; s <= hi; ++s) seeds.push_back(s);
    } else {
        seeds.push_back(a.seed ? *a.seed : base.seed);
    }
    bool sweep = seeds.size() > 1;
    fs::create_directories(a.out);

    auto enabled = [&](const char* c) { return std::find(a.checks.begin(), a.checks.end(), c) != a.checks.end(); };
    std::vector<json> summaries(seeds.size());
    std::vector<int> passed(seeds.size(), 0);
    auto run_one = [&](size_t i) {
        Scenario s = base;
        s.seed = seeds[i];
        fs::path dir = sweep ? fs::path(a.out) / ("seed-" + std::to_string(s.seed)) : fs::path(a.out);
        fs::create_directories(dir);
        std::ofstream trace;
        RunOptions opt;
        if (a.trace) {
            trace.open(dir / "trace.ndjson");
            opt.trace = &trace;
        }
        auto res = run_scenario(s, opt);
        bool ok = (!enabled("safety") || res.violations.empty()) && (!enabled("conservation") || res.conservation.ok) &&
                  (!enabled("liveness") || res.liveness.ok);
        auto sum = res.summary();
        sum["checks_passed"] = ok;
        if (a.format == "json") write_file(dir / "metrics.json", metrics_json(res));
        else write_file(dir / "metrics.csv", res.metrics_csv());
        write_file(dir / "summary.json", sum.dump(2) + "\n");
        summaries[i] = sum;
        passed[i] = ok;
    };
    // Sweeps run seeds on worker threads; output is merged in seed order.
    unsigned threads = a.threads ? a.threads : std::max(1u, std::thread::hardware_concurrency());
    if (sweep && threads > 1) {
        std::atomic<size_t> next{0};
        std::vector<std::thread> pool;
        for (unsigned t = 0; t < std::min<size_t>(threads, seeds.size()); ++t)
            pool.emplace_back([&] {
                for (size_t i = next++; i < seeds.size(); i = next++) run_one(i);
            });
        for (auto& t : pool) t.join();
    } else {
        for (size_t i = 0; i < seeds.size(); ++i) run_one(i);
    }

    int failures = 0;
    for (size_t i = 0; i < seeds.size(); ++i) {
        failures += !passed[i];
        log(2, "seed " + std::to_string(seeds[i]) + (passed[i] ? " ok" : " FAILED"));
        if (!passed[i])
            for (const auto& v : summaries[i]["violations"]) log(0, "seed " + std::to_string(seeds[i]) + ": " + v.get<std::string>());
    }
    if (sweep) {
        json agg;
        agg["seeds"] = seeds.size();
        agg["failures"] = failures;
        agg["runs"] = summaries;
        write_file(fs::path(a.out) / "aggregate.json", agg.dump(2) + "\n");
        if (a.format == "csv") {
            std::ostringstream csv;
            csv << "seed,ok,injected,finalized,p50_md,p99_md\n";
            for (const auto& s : summaries)
                csv << s["seed"] << ',' << s["checks_passed"] << ',' << s["txs"]["injected"] << ','
                    << s["txs"]["finalized"] << ',' << s["latency_md"]["p50"] << ',' << s["latency_md"]["p99"] << '\n';
            std::cout << csv.str();
        } else {
            std::cout << agg.dump(2) << '\n';
        }
    } else {
        const auto& s = summaries[0];
        if (a.format == "json")
            std::cout << s.dump(2) << '\n';
        else
            std::cout << "seed,ok,injected,finalized,p50_md,p99_md\n"
                      << s["seed"] << ',' << s["checks_passed"] << ',' << s["txs"]["injected"] << ','
                      << s["txs"]["finalized"] << ',' << s["latency_md"]["p50"] << ',' << s["latency_md"]["p99"] << '\n';
    }
    return failures ? kViolation : kOk;
}

struct VerifyArgs {
    std::string suite = "all", mutate = "none", out = "verify-failures", format = "json";
    uint64_t seeds = 100;
    uint64_t fuzz = 200;
    unsigned threads = 0;
};

int cmd_verify(const VerifyArgs& a) {
    Mutation m = Mutation::None;
    if (a.mutate == "double_vote") m = Mutation::DoubleVote;
    else if (a.mutate == "winner_rule") m = Mutation::WinnerRule;
    else if (a.mutate != "none") throw ScenarioError("--mutate", "expected none|double_vote|winner_rule");

    std::vector<SuiteReport> reports;
    bool all = a.suite == "all";
    if (all || a.suite == "safety") reports.push_back(verify_safety(a.seeds, m, a.threads));
    if (all || a.suite == "liveness") reports.push_back(verify_liveness(std::max<uint64_t>(1, a.seeds / 5), m, a.threads));
    if (all || a.suite == "seamless") reports.push_back(verify_seamless(m));
    if (all || a.suite == "viewchange") reports.push_back(verify_viewchange(a.fuzz, m));
    if (reports.empty()) throw ScenarioError("suite", "expected safety|liveness|seamless|viewchange|all");

    bool ok = true;
    json out = json::array();
    for (const auto& r : reports) {
        ok = ok && r.ok();
        out.push_back({{"suite", r.suite}, {"runs", r.runs}, {"failures", r.failures}, {"details", r.details}});
        if (!r.ok() && !r.counterexamples.empty()) {
            fs::create_directories(a.out);
            for (const auto& s : r.counterexamples) {
                fs::path p = fs::path(a.out) / (s.name + ".json");
                write_file(p, scenario_to_json(s).dump(2) + "\n");
                log(0, r.suite + ": counterexample saved to " + p.string());
            }
        }
    }
    if (a.format == "csv") {
        std::cout << "suite,runs,failures\n";
        for (const auto& r : reports) std::cout << r.suite << ',' << r.runs << ',' << r.failures << '\n';
    } else {
        std::cout << out.dump(2) << '\n';
    }
    return ok ? kOk : kViolation;
}

// Reads NDJSON; any unparsable or unterminated line counts as a truncated file.
bool read_trace(const std::string& path, std::vector<std::string>& lines, std::string& err) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        err = "cannot open " + path;
        return false;
    }
    std::string all((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (!all.empty() && all.back() != '\n') {
        err = path + ": truncated (missing final newline)";
        return false;
    }
    std::istringstream ss(all);
    std::string line;
    while (std::getline(ss, line)) {
        if (!json::accept(line)) {
            err = path + ": line " + std::to_string(lines.size() + 1) + " is not a JSON record";
            return false;
        }
        lines.push_back(line);
    }
    return true;
}

int cmd_trace_diff(const std::string& a, const std::string& b, const std::string& format) {
    std::vector<std::string> la, lb;
    std::string err;
    if (!read_trace(a, la, err) || !read_trace(b, lb, err)) {
        log(0, err);
        return kUsage;
    }
    size_t common = std::min(la.size(), lb.size());
    for (size_t i = 0; i < common; ++i) {
        if (la[i] == lb[i]) continue;
        json ja = json::parse(la[i]), jb = json::parse(lb[i]);
        json diff = {{"identical", false}, {"line", i + 1}, {"a", ja}, {"b", jb}, {"semantic_equal", ja == jb}};
        std::cout << (format == "csv" ? "identical,line\nfalse," + std::to_string(i + 1) : diff.dump(2)) << '\n';
        return kViolation;
    }
    if (la.size() != lb.size()) {
        json diff = {{"identical", false}, {"line", common + 1}, {"a_lines", la.size()}, {"b_lines", lb.size()}};
        std::cout << (format == "csv" ? "identical,line\nfalse," + std::to_string(common + 1) : diff.dump(2)) << '\n';
        return kViolation;
    }
    std::cout << (format == "csv" ? "identical,line\ntrue," : json{{"identical", true}, {"lines", la.size()}}.dump(2))
              << '\n';
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Autobahn simulator: scenarios, verification suites, trace diffs"};
    app.require_subcommand(1);

    RunArgs run;
    auto* r = app.add_subcommand("run", "run a scenario for one seed or a seed range");
    r->add_option("--scenario", run.scenario, "scenario JSON file")->required();
    auto* seed_opt = r->add_option("--seed", run.seed, "single seed (default: the scenario's)");
    r->add_option("--seeds", run.seeds, "seed range A..B")->excludes(seed_opt);
    r->add_option("--out", run.out, "output directory");
    r->add_option("--mode", run.mode, "sequential|parallel");
    r->add_option("--k", run.k, "parallel slot bound");
    r->add_option("--fast-path", run.fast_path, "true|false");
    r->add_option("--optimistic-tips", run.optimistic_tips, "true|false");
    r->add_option("--timer", run.timer, "view timer in units of delta");
    r->add_option("--format", run.format, "csv|json")->check(CLI::IsMember({"csv", "json"}));
    r->add_option("--check", run.checks, "checkers to enforce: safety, conservation, liveness")->delimiter(',');
    r->add_flag("!--no-trace", run.trace, "skip trace.ndjson");
    r->add_option("--threads", run.threads, "sweep worker threads (0: all cores)");

    VerifyArgs ver;
    auto* v = app.add_subcommand("verify", "run randomized verification suites");
    v->add_option("suite", ver.suite, "safety|liveness|seamless|viewchange|all");
    v->add_option("--seeds", ver.seeds, "seeds per replica count");
    v->add_option("--fuzz", ver.fuzz, "view-change fuzz runs");
    v->add_option("--mutate", ver.mutate, "none|double_vote|winner_rule");
    v->add_option("--out", ver.out, "where failing scenarios are saved");
    v->add_option("--format", ver.format, "csv|json")->check(CLI::IsMember({"csv", "json"}));
    v->add_option("--threads", ver.threads, "worker threads (0: all cores)");

    std::string ta, tb, tformat = "json";
    auto* d = app.add_subcommand("trace-diff", "compare two traces; exit 0 iff identical");
    d->add_option("a", ta)->required();
    d->add_option("b", tb)->required();
    d->add_option("--format", tformat, "csv|json")->check(CLI::IsMember({"csv", "json"}));

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? kOk : kUsage;
    }
    try {
        if (*r) return cmd_run(run);
        if (*v) return cmd_verify(ver);
        if (*d) return cmd_trace_diff(ta, tb, tformat);
    } catch (const ScenarioError& e) {
        log(0, std::string("config error at ") + e.what());
        return kUsage;
    } catch (const std::exception& e) {
        log(0, std::string("error: ") + e.what());
        return kUsage;
    }
    return kUsage;
}
