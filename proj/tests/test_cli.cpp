#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "mmsched/cli.hpp"
#include "mmsched/csv.hpp"
#include "mmsched/error.hpp"

using namespace mmsched;
using namespace mmsched::cli;
namespace fs = std::filesystem;

namespace {

RunConfig parse(const std::string& text) {
    std::istringstream in(text);
    return parse_config(in, "cfg", fs::current_path());
}

// Message of the ConfigError raised by parsing `text`.
std::string parse_error(const std::string& text) {
    try {
        (void)parse(text);
    } catch (const ConfigError& e) {
        return e.what();
    }
    return "";
}

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() / ("mmsched_cli_" + std::to_string(std::rand()) + "_" +
                                            std::to_string(reinterpret_cast<std::uintptr_t>(this)));
        fs::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path, ec);
    }
};

void write_file(const fs::path& p, const std::string& text) {
    std::ofstream out(p);
    out << text;
}

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

int run_tool(const std::string& args) {
    const std::string cmd = std::string(MMSCHED_TOOL) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

const std::string kSmall = R"(
seed = 4
horizon_slots = 3000
[arrivals]
batch_prob = 0.9
batch_mean = 20
batch_std = 1
[service]
mm_rate_per_slot = 6
rf_rate_per_slot = 3
timeout_slots = 2
[buffers]
mm_packets = 100
[policy]
kind = threshold
h = 5
)";

}  // namespace

TEST_CASE("ini parsing: sections, comments, top-level keys") {
    std::istringstream in("a = 1 # trailing\n; comment\n\n[s]\nb = x y\n");
    const auto doc = IniDocument::parse(in, "f");
    CHECK(doc.take("", "a")->value == "1");
    CHECK(doc.take("s", "b")->value == "x y");
    CHECK(doc.take("s", "b")->line == 5);
    CHECK(doc.section_line("s") == 4);
    CHECK_FALSE(doc.take("s", "zz"));
}

TEST_CASE("ini parsing errors carry the line") {
    CHECK(parse_error("seed = 1\n[arrivals]\nbatch_prob 0.5\n") == "cfg:3: expected 'key = value'");
    CHECK(parse_error("[policy]\nh = 3\nh = 4\n") == "cfg:3: duplicate key 'h'");
    CHECK(parse_error("[policy]\n\nbogus = 1\n") == "cfg:3: unknown key 'bogus' in [policy]");
    CHECK(parse_error("[nope]\n") == "cfg:1: unknown section [nope]");
    CHECK(parse_error("[policy\n") == "cfg:1: unterminated section header");
    CHECK(parse_error("[policy]\nh = -2\n") == "cfg:2: h: must be non-negative");
    CHECK(parse_error("[arrivals]\nbatch_mean = abc\n") == "cfg:2: batch_mean: not a number: 'abc'");
    CHECK(parse_error("[policy]\nkind = magic\n").rfind("cfg:2: kind:", 0) == 0);
}

TEST_CASE("config defaults and overrides") {
    const auto c = parse(kSmall);
    CHECK(c.sim.seed == 4);
    CHECK(c.sim.horizon == 3000);
    CHECK(c.sim.service.mm_rate == 6.0);
    CHECK(c.sim.buffers.mm == 100);
    CHECK(c.sim.policy.h == 5);
    CHECK(c.channel.onoff.on.mean_slots == 20.0);
    CHECK_FALSE(c.sweep);
    CHECK(c.out_dir == "out");
}

TEST_CASE("module validation failures point at the offending key") {
    const std::string bad = "[service]\nrf_rate_per_slot = 3\nmm_rate_per_slot = 2\n";
    CHECK(parse_error(bad) == "cfg:3: service.mm_rate must exceed service.rf_rate");
    CHECK(parse_error("[policy]\nh = 50\n[buffers]\nmm_packets = 10\n") ==
          "cfg:2: policy.h must not exceed the mmWave buffer capacity");
    CHECK(parse_error("[analysis]\nq_max_packets = 4\nsigma = 0.5\n").rfind("cfg:", 0) == 0);
    CHECK(parse_error("[channel]\nlink_csv = /definitely/missing.csv\n").rfind("cfg:2: link_csv: file not found", 0) == 0);
}

TEST_CASE("number lists and ranges") {
    CHECK(parse_number_list("1, 2.5,4") == std::vector<double>{1.0, 2.5, 4.0});
    CHECK(parse_number_list("0:4") == std::vector<double>{0, 1, 2, 3, 4});
    CHECK(parse_number_list("0:1:0.25") == std::vector<double>{0, 0.25, 0.5, 0.75, 1.0});
    CHECK_THROWS_AS(static_cast<void>(parse_number_list("3:1")), ConfigError);
    CHECK_THROWS_AS(static_cast<void>(parse_number_list("1,x")), ConfigError);
    CHECK_THROWS_AS(static_cast<void>(parse_number_list("0:1:0")), ConfigError);
}

TEST_CASE("sweep parameters") {
    auto c = parse(kSmall);
    apply_sweep_param(c, "h", 7);
    CHECK(c.sim.policy.h == 7);
    apply_sweep_param(c, "lambda", 9);
    CHECK(c.sim.arrivals.rate() == doctest::Approx(9.0));
    apply_sweep_param(c, "tau", 10);
    CHECK(c.sim.policy.tau_mm == 10);
    apply_sweep_param(c, "c", 2.5);
    CHECK(c.sim.reward.c == 2.5);
    CHECK(c.sim.policy.online.c == 2.5);
    CHECK_THROWS_AS(apply_sweep_param(c, "mu", 1), ConfigError);
    CHECK_THROWS_AS(apply_sweep_param(c, "lambda", 50), ConfigError);
    CHECK(parse_error(kSmall + "[sweep]\nparam = mu\nvalues = 1\n") ==
          "cfg:18: unknown sweep parameter 'mu' (expected h, p, c, r, tau or lambda)");
    CHECK(parse_error(kSmall + "[sweep]\nparam = h\nvalues = 0:200\n").rfind("cfg:19: values:", 0) == 0);
}

TEST_CASE("sweep results do not depend on the worker count") {
    auto c = parse(kSmall + "[sweep]\nparam = h\nvalues = 6, 0, 3\nseeds = 2, 1\n");
    const auto one = run_sweep(c, *c.sweep, 1);
    const auto three = run_sweep(c, *c.sweep, 3);
    REQUIRE(one.size() == 6);
    std::ostringstream a, b;
    write_sweep_csv(a, one);
    write_sweep_csv(b, three);
    CHECK(a.str() == b.str());
    // ascending (value, seed)
    CHECK(one[0].value == 0.0);
    CHECK(one[0].seed == 1);
    CHECK(one[1].seed == 2);
    CHECK(one[5].value == 6.0);
    // common random numbers: each row equals a direct run with that seed
    RunConfig direct = c;
    apply_sweep_param(direct, "h", 3);
    const auto r = simulate_once(direct, 2);
    CHECK(one[3].reward == r.reward);
    CHECK(one[3].alpha == r.alpha);
}

TEST_CASE("round trip: sweep CSV") {
    std::vector<SweepRow> rows{{"p", 0.1, 3, 1.0 / 3.0, 0.2, -0.5, 1e-17, 12345.678, 0.75, 0.0},
                               {"p", 0.9, 4, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0}};
    std::stringstream s;
    write_sweep_csv(s, rows);
    const auto back = read_sweep_csv(s);
    REQUIRE(back.size() == 2);
    CHECK(back[0].param == "p");
    CHECK(back[0].alpha == rows[0].alpha);
    CHECK(back[0].avg_wait_mm == rows[0].avg_wait_mm);
    CHECK(back[1].seed == 4);
    std::stringstream bad("param,value\n");
    CHECK_THROWS_AS(static_cast<void>(read_sweep_csv(bad)), InputError);
}

TEST_CASE("round trip: threshold curve CSV keeps nan and inf") {
    analysis::ThresholdCurve curve;
    curve.points.push_back({0, 0.0, 0.0, 0.0, std::nan(""), std::nan(""), 0.0});
    curve.points.push_back({1, 0.3, 0.2, 0.1, 1.5, 3.0, 0.1});
    curve.points.push_back({2, 0.4, 0.2, 0.2, INFINITY, INFINITY, -0.1});
    std::stringstream s;
    write_curve_csv(s, curve);
    const auto back = read_curve_csv(s);
    REQUIRE(back.size() == 3);
    CHECK(std::isnan(back[0].psi));
    CHECK(back[1].e_beta == 0.3);
    CHECK(std::isinf(back[2].phi));
    CHECK(back[2].objective == -0.1);
}

TEST_CASE("staged outputs vanish on failure and appear on commit") {
    TempDir tmp;
    const auto dir = tmp.path / "fresh";
    {
        StagedOutputs out(dir);
        out.open("a.csv") << "x\n";
        CHECK(fs::exists(dir));
    }
    CHECK_FALSE(fs::exists(dir));
    {
        StagedOutputs out(dir);
        out.open("a.csv") << "x\n";
        out.open("b.csv") << "y\n";
        const auto files = out.commit();
        CHECK(files.size() == 2);
    }
    CHECK(read_file(dir / "a.csv") == "x\n");
    std::size_t n = 0;
    for ([[maybe_unused]] const auto& e : fs::directory_iterator(dir)) ++n;
    CHECK(n == 2);
}

TEST_CASE("trace import examples") {
    TempDir tmp;
    write_file(tmp.path / "three.csv", "slot,strength_db\n0,-50\n1,-70\n2,-55\n");
    std::ostringstream log;
    cmd_trace_import(tmp.path / "three.csv", -60.0, tmp.path / "o1", log);
    const auto link = channel::read_link_csv((tmp.path / "o1" / "link.csv").string());
    CHECK(link.size() == 3);
    CHECK(link.slots() == std::vector<std::uint8_t>{1, 0, 1});
    CHECK(log.str().find("ON runs 2") != std::string::npos);

    write_file(tmp.path / "empty.csv", "slot,strength_db\n");
    CHECK_THROWS_AS(cmd_trace_import(tmp.path / "empty.csv", -60.0, tmp.path / "o2", log), InputError);
    CHECK_FALSE(fs::exists(tmp.path / "o2"));

    write_file(tmp.path / "bad.csv", "slot,strength_db\n0,-50\n1,-70\n2,oops\n");
    try {
        cmd_trace_import(tmp.path / "bad.csv", -60.0, tmp.path / "o3", log);
        FAIL("expected an error");
    } catch (const InputError& e) {
        CHECK(std::string(e.what()).find("row 4") != std::string::npos);
    }
}

TEST_CASE("trace import of a LOS / blockage / reflection trace") {
    // LOS at -45 dB, human blockage dipping to -75, a weaker reflection around -62.
    TempDir tmp;
    std::ostringstream csv;
    csv << "slot,strength_db\n";
    std::vector<double> strength;
    for (int t = 0; t < 300; ++t) {
        double s = -45.0 + 2.0 * std::sin(t * 0.3);
        if (t >= 100 && t < 160) s = -75.0 + 3.0 * std::cos(t * 0.7);
        if (t >= 200) s = -62.0 + 4.0 * std::sin(t * 0.9);
        strength.push_back(s);
        csv << t << ',' << format_double(s) << '\n';
    }
    write_file(tmp.path / "sig.csv", csv.str());
    std::ostringstream log;
    cmd_trace_import(tmp.path / "sig.csv", -60.0, tmp.path / "o", log);
    const auto link = channel::read_link_csv((tmp.path / "o" / "link.csv").string());
    REQUIRE(link.size() == strength.size());
    for (std::size_t t = 0; t < strength.size(); ++t) CHECK(link.on(t) == (strength[t] >= -60.0));
}

TEST_CASE("tool: simulate writes a parseable report, deterministically") {
    TempDir tmp;
    write_file(tmp.path / "c.ini", kSmall);
    const auto cfg = (tmp.path / "c.ini").string();
    REQUIRE(run_tool("simulate --config " + cfg + " --out " + (tmp.path / "a").string() + " --timeseries") == 0);
    REQUIRE(run_tool("simulate --config " + cfg + " --out " + (tmp.path / "b").string() + " --timeseries") == 0);
    const auto report = read_file(tmp.path / "a" / "report.jsonl");
    CHECK(report == read_file(tmp.path / "b" / "report.jsonl"));
    CHECK(read_file(tmp.path / "a" / "series.csv") == read_file(tmp.path / "b" / "series.csv"));
    const auto j = nlohmann::json::parse(report);
    CHECK(j["policy"] == "threshold");
    CHECK(j["horizon"] == 3000);
    CHECK(j["alpha"].get<double>() + j["rf_throughput"].get<double>() == doctest::Approx(j["throughput"].get<double>()));
    // the series CSV parses back with the shared reader
    std::ifstream series(tmp.path / "a" / "series.csv");
    csv::expect_header(series, "slot,Qs,Qmm,Qrf,L,alpha,beta,gamma,Tout");
    std::size_t rows = 0;
    csv::for_each_row(series, 9, [&](const std::vector<std::string>& f, std::size_t row) {
        CHECK(csv::parse_int(f[0], row) == static_cast<std::int64_t>(rows));
        ++rows;
    });
    CHECK(rows == 3000);
    // a different seed changes the report
    REQUIRE(run_tool("simulate --config " + cfg + " --seed 99 --out " + (tmp.path / "c").string()) == 0);
    CHECK(read_file(tmp.path / "c" / "report.jsonl") != report);
}

TEST_CASE("tool: probabilistic p = 0.5 on the batch setup reruns bit-exactly") {
    TempDir tmp;
    std::string text = read_file(fs::path(MMSCHED_CONFIGS) / "batch.ini");
    text.replace(text.find("kind = threshold"), 16, "kind = probabilistic\np = 0.5");
    text.replace(text.find("h = 12"), 6, "h = 0");
    write_file(tmp.path / "p.ini", text);
    const auto cfg = (tmp.path / "p.ini").string();
    REQUIRE(run_tool("simulate --config " + cfg + " --out " + (tmp.path / "a").string()) == 0);
    REQUIRE(run_tool("simulate --config " + cfg + " --out " + (tmp.path / "b").string()) == 0);
    const auto a = nlohmann::json::parse(read_file(tmp.path / "a" / "report.jsonl"));
    const auto b = nlohmann::json::parse(read_file(tmp.path / "b" / "report.jsonl"));
    CHECK(a["policy"] == "probabilistic");
    CHECK(a["reward"].get<double>() == b["reward"].get<double>());
}

TEST_CASE("tool: invalid config fails without partial output") {
    TempDir tmp;
    write_file(tmp.path / "bad.ini", "[service]\nmm_rate_per_slot = 1\nrf_rate_per_slot = 3\n");
    CHECK(run_tool("simulate --config " + (tmp.path / "bad.ini").string() + " --out " + (tmp.path / "o").string()) ==
          1);
    CHECK_FALSE(fs::exists(tmp.path / "o"));
    CHECK(run_tool("sweep --config " + (tmp.path / "bad.ini").string() + " --out " + (tmp.path / "o").string()) != 0);
    CHECK_FALSE(fs::exists(tmp.path / "o"));
    // sweep without a [sweep] section
    write_file(tmp.path / "nosweep.ini", kSmall);
    CHECK(run_tool("sweep --config " + (tmp.path / "nosweep.ini").string() + " --out " + (tmp.path / "o").string()) ==
          1);
    CHECK_FALSE(fs::exists(tmp.path / "o"));
    // a run error after validation (unreadable trace contents) also leaves nothing
    write_file(tmp.path / "link.csv", "slot,state\n0,1\n1,7\n");
    write_file(tmp.path / "trace.ini", kSmall + "[channel]\nlink_csv = link.csv\n");
    CHECK(run_tool("simulate --config " + (tmp.path / "trace.ini").string() + " --out " + (tmp.path / "o").string()) ==
          1);
    CHECK_FALSE(fs::exists(tmp.path / "o"));
    CHECK(run_tool("simulate") != 0);
    CHECK(run_tool("frobnicate") != 0);
}

TEST_CASE("tool: sweep, solve and beamform outputs re-parse") {
    TempDir tmp;
    write_file(tmp.path / "s.ini", kSmall + "[sweep]\nparam = h\nvalues = 0:4:2\nseeds = 1,2\n");
    REQUIRE(run_tool("sweep --jobs 2 --config " + (tmp.path / "s.ini").string() + " --out " +
                     (tmp.path / "sw").string()) == 0);
    std::ifstream sw(tmp.path / "sw" / "sweep.csv");
    const auto rows = read_sweep_csv(sw);
    CHECK(rows.size() == 6);
    CHECK(rows[0].reward == 0.0);

    const fs::path configs(MMSCHED_CONFIGS);
    REQUIRE(run_tool("solve --config " + (configs / "chain.ini").string() + " --out " + (tmp.path / "so").string()) ==
            0);
    std::ifstream curve_in(tmp.path / "so" / "curve.csv");
    const auto curve = read_curve_csv(curve_in);
    CHECK(curve.size() == 9);
    CHECK(curve[0].e_beta == 0.0);
    CHECK(curve[0].e_alpha == 0.0);
    const auto summary = nlohmann::json::parse(read_file(tmp.path / "so" / "solve.json"));
    std::size_t best = 0;
    for (std::size_t h = 1; h < curve.size(); ++h)
        if (curve[h].objective > curve[best].objective) best = h;
    CHECK(summary["h_star"].get<std::size_t>() == best);

    REQUIRE(run_tool("beamform --config " + (configs / "scene.ini").string() + " --out " +
                     (tmp.path / "bf").string()) == 0);
    std::ifstream spec_in(tmp.path / "bf" / "spectrum.csv");
    const auto spec = read_spectrum_csv(spec_in);
    CHECK(spec.values.size() == 181);
    const auto bf = nlohmann::json::parse(read_file(tmp.path / "bf" / "beamform.json"));
    CHECK(bf["a_rf"].get<double>() == spec.peak_angle());
    CHECK(bf["probes"].get<int>() <= 3);
    CHECK(bf["mode"] == "dual");
}

TEST_CASE("tool: solve rejects W > r") {
    TempDir tmp;
    write_file(tmp.path / "w.ini", "[reward]\nr = 1\nw = 2\n[analysis]\nq_max_packets = 4\nsigma = 0.1\n");
    CHECK(run_tool("solve --config " + (tmp.path / "w.ini").string() + " --out " + (tmp.path / "o").string()) == 1);
    CHECK_FALSE(fs::exists(tmp.path / "o"));
}

TEST_CASE("tool: trace-import round trip through simulate") {
    TempDir tmp;
    write_file(tmp.path / "sig.csv", "slot,strength_db\n0,-50\n1,-70\n2,-55\n3,-52\n");
    REQUIRE(run_tool("trace-import " + (tmp.path / "sig.csv").string() + " --cutoff-db -60 --out " +
                     (tmp.path / "t").string()) == 0);
    write_file(tmp.path / "c.ini", kSmall + "[channel]\nlink_csv = t/link.csv\n");
    REQUIRE(run_tool("simulate --config " + (tmp.path / "c.ini").string() + " --out " + (tmp.path / "o").string()) ==
            0);
    const auto j = nlohmann::json::parse(read_file(tmp.path / "o" / "report.jsonl"));
    CHECK(j["horizon"] == 3000);
    CHECK(run_tool("trace-import " + (tmp.path / "missing.csv").string() + " --cutoff-db -60") != 0);
}

TEST_CASE("probabilistic p sweep on the batch setup has an interior maximum") {
    std::ifstream in(fs::path(MMSCHED_CONFIGS) / "batch.ini");
    auto c = parse_config(in, "batch.ini", MMSCHED_CONFIGS);
    c.sim.policy.kind = policies::PolicyKind::probabilistic;
    c.sim.horizon = 5000;
    SweepConfig sw{"p", parse_number_list("0:1:0.1"), {1, 2, 3}, 0};
    const auto rows = run_sweep(c, sw, 0);
    std::vector<double> mean(11, 0.0);
    for (const auto& r : rows) mean[static_cast<std::size_t>(std::lround(r.value * 10))] += r.reward / 3.0;
    const auto peak = static_cast<std::size_t>(std::max_element(mean.begin(), mean.end()) - mean.begin());
    CHECK(peak > 0);
    CHECK(peak < 10);
    for (std::size_t i = 0; i < peak; ++i) CHECK(mean[i] < mean[i + 1]);
    for (std::size_t i = peak; i + 1 < mean.size(); ++i) CHECK(mean[i] > mean[i + 1]);
}
