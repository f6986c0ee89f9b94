#include "mmsched/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <regex>
#include <sstream>

#include "mmsched/csv.hpp"
#include "mmsched/error.hpp"

namespace mmsched::cli {

namespace fs = std::filesystem;

IniDocument IniDocument::parse(std::istream& in, std::string source) {
    IniDocument doc;
    doc.source_ = std::move(source);
    doc.sections_[""];
    std::string section;
    std::string raw;
    std::size_t line = 0;
    while (std::getline(in, raw)) {
        ++line;
        const auto cut = raw.find_first_of("#;");
        const std::string text = csv::trim(cut == std::string::npos ? raw : raw.substr(0, cut));
        if (text.empty()) continue;
        if (text.front() == '[') {
            if (text.back() != ']') throw doc.error(line, "unterminated section header");
            section = csv::trim(text.substr(1, text.size() - 2));
            if (section.empty()) throw doc.error(line, "empty section name");
            if (doc.section_lines_.count(section)) throw doc.error(line, "duplicate section [" + section + "]");
            doc.section_lines_[section] = line;
            doc.sections_[section];
            continue;
        }
        const auto eq = text.find('=');
        if (eq == std::string::npos) throw doc.error(line, "expected 'key = value'");
        const std::string key = csv::trim(text.substr(0, eq));
        const std::string value = csv::trim(text.substr(eq + 1));
        if (key.empty()) throw doc.error(line, "missing key");
        auto& keys = doc.sections_[section];
        if (keys.count(key)) throw doc.error(line, "duplicate key '" + key + "'");
        keys[key] = {value, line};
    }
    return doc;
}

std::optional<IniDocument::Entry> IniDocument::take(const std::string& section, const std::string& key) const {
    const auto s = sections_.find(section);
    if (s == sections_.end()) return std::nullopt;
    const auto k = s->second.find(key);
    if (k == s->second.end()) return std::nullopt;
    used_.insert({section, key});
    return k->second;
}

std::size_t IniDocument::section_line(const std::string& section) const {
    const auto it = section_lines_.find(section);
    return it == section_lines_.end() ? 0 : it->second;
}

void IniDocument::reject_unused(const std::set<std::string>& known_sections) const {
    for (const auto& [name, keys] : sections_) {
        if (!name.empty() && !known_sections.count(name)) throw error(section_line(name), "unknown section [" + name + "]");
        for (const auto& [key, entry] : keys)
            if (!used_.count({name, key}))
                throw error(entry.line, "unknown key '" + key + "'" + (name.empty() ? "" : " in [" + name + "]"));
    }
}

ConfigError IniDocument::error(std::size_t line, const std::string& message) const {
    return ConfigError(source_ + ":" + std::to_string(line) + ": " + message);
}

std::vector<double> parse_number_list(const std::string& text) {
    auto number = [](const std::string& s) {
        const std::string t = csv::trim(s);
        char* end = nullptr;
        const double v = t.empty() ? 0.0 : std::strtod(t.c_str(), &end);
        if (t.empty() || end != t.c_str() + t.size() || !std::isfinite(v))
            throw ConfigError("not a number: '" + t + "'");
        return v;
    };
    std::vector<double> out;
    if (text.find(':') != std::string::npos) {
        std::vector<std::string> parts;
        std::stringstream ss(text);
        for (std::string p; std::getline(ss, p, ':');) parts.push_back(p);
        if (parts.size() < 2 || parts.size() > 3) throw ConfigError("range must be start:stop[:step]");
        const double lo = number(parts[0]), hi = number(parts[1]);
        const double step = parts.size() == 3 ? number(parts[2]) : 1.0;
        if (!(step > 0.0)) throw ConfigError("range step must be positive");
        if (hi < lo) throw ConfigError("range stop is below its start");
        const auto n = static_cast<std::size_t>(std::floor((hi - lo) / step + 1e-9));
        if (n > 1000000) throw ConfigError("range has too many points");
        for (std::size_t i = 0; i <= n; ++i) out.push_back(lo + step * static_cast<double>(i));
        return out;
    }
    for (const auto& f : csv::split(text)) out.push_back(number(f));
    if (out.empty()) throw ConfigError("empty list");
    return out;
}

namespace {

// Typed reads anchored to the key's line.
class Reader {
public:
    Reader(const IniDocument& doc, fs::path base) : doc_(doc), base_(std::move(base)) {}

    template <class Fn>
    void with(const std::string& section, const std::string& key, Fn&& fn) const {
        const auto e = doc_.take(section, key);
        if (!e) return;
        try {
            fn(e->value);
        } catch (const Error& err) {
            throw doc_.error(e->line, key + ": " + err.what());
        } catch (const std::exception& err) {
            throw doc_.error(e->line, key + ": " + err.what());
        }
    }

    void real(const std::string& s, const std::string& k, double& out) const {
        with(s, k, [&](const std::string& v) { out = to_double(v); });
    }
    void count(const std::string& s, const std::string& k, std::size_t& out) const {
        with(s, k, [&](const std::string& v) {
            const auto x = to_int(v);
            if (x < 0) throw ConfigError("must be non-negative");
            out = static_cast<std::size_t>(x);
        });
    }
    void integer(const std::string& s, const std::string& k, std::int64_t& out) const {
        with(s, k, [&](const std::string& v) { out = to_int(v); });
    }
    void flag(const std::string& s, const std::string& k, bool& out) const {
        with(s, k, [&](const std::string& v) {
            if (v == "true" || v == "1" || v == "yes") out = true;
            else if (v == "false" || v == "0" || v == "no") out = false;
            else throw ConfigError("expected true or false, got '" + v + "'");
        });
    }
    void path(const std::string& s, const std::string& k, std::optional<fs::path>& out, bool must_exist) const {
        with(s, k, [&](const std::string& v) {
            if (v.empty()) throw ConfigError("empty path");
            fs::path p(v);
            if (p.is_relative()) p = base_ / p;
            if (must_exist && !fs::exists(p)) throw ConfigError("file not found: " + p.string());
            out = p;
        });
    }

    static double to_double(const std::string& v) {
        char* end = nullptr;
        const double x = v.empty() ? 0.0 : std::strtod(v.c_str(), &end);
        if (v.empty() || end != v.c_str() + v.size()) throw ConfigError("not a number: '" + v + "'");
        return x;
    }
    static std::int64_t to_int(const std::string& v) {
        try {
            return csv::parse_int(v, 0);
        } catch (const InputError&) {
            throw ConfigError("not an integer: '" + v + "'");
        }
    }

private:
    const IniDocument& doc_;
    fs::path base_;
};

// Turns a module validation failure into a line-anchored config error. Module
// messages name fields as "section.key"; the matching config key may carry a
// unit suffix (mm_rate -> mm_rate_per_slot).
template <class Fn>
void anchored(const IniDocument& doc, const std::string& fallback_section, Fn&& fn) {
    try {
        fn();
    } catch (const Error& e) {
        const std::string msg = e.what();
        std::size_t line = doc.section_line(fallback_section);
        std::smatch m;
        static const std::regex field(R"(([a-z_]+)\.([a-z_]+))");
        if (std::regex_search(msg, m, field)) {
            const std::string section = m[1].str() == "run" ? "" : m[1].str();
            const std::string key = m[2].str();
            line = doc.section_line(section);
            for (const char* suffix : {"", "_slots", "_per_slot", "_packets"})
                if (auto entry = doc.take(section, key + suffix)) {
                    line = entry->line;
                    break;
                }
        }
        throw doc.error(line, msg);
    }
}

}  // namespace

const std::vector<std::string>& sweep_params() {
    static const std::vector<std::string> names{"h", "p", "c", "r", "tau", "lambda"};
    return names;
}

void apply_sweep_param(RunConfig& config, const std::string& name, double value) {
    auto& sim = config.sim;
    if (name == "h") {
        if (!(value >= 0.0) || value != std::floor(value)) throw ConfigError("h must be a non-negative integer");
        sim.policy.h = static_cast<std::size_t>(value);
    } else if (name == "p") {
        if (!(value >= 0.0 && value <= 1.0)) throw ConfigError("p must lie in [0, 1]");
        sim.policy.p = value;
    } else if (name == "c") {
        sim.reward.c = value;
        sim.policy.online.c = value;
    } else if (name == "r") {
        sim.reward.r = value;
        sim.policy.online.r = value;
    } else if (name == "tau") {
        if (!(value >= 0.0) || value != std::floor(value)) throw ConfigError("tau must be a non-negative integer");
        sim.policy.tau_mm = sim.policy.tau_rf = static_cast<std::int64_t>(value);
    } else if (name == "lambda") {
        const double prob = value / sim.arrivals.batch_mean;
        if (!(prob >= 0.0 && prob <= 1.0))
            throw ConfigError("lambda must lie in [0, batch_mean] (it sets batch_prob = lambda / batch_mean)");
        sim.arrivals.batch_prob = prob;
    } else {
        throw ConfigError("unknown sweep parameter '" + name + "' (expected h, p, c, r, tau or lambda)");
    }
}

RunConfig parse_config(std::istream& in, const std::string& source, const fs::path& base_dir) {
    const IniDocument doc = IniDocument::parse(in, source);
    const Reader rd(doc, base_dir);
    RunConfig cfg;
    cfg.source = source;
    auto& sim = cfg.sim;

    std::int64_t seed = static_cast<std::int64_t>(sim.seed);
    rd.integer("", "seed", seed);
    if (seed < 0) throw doc.error(doc.take("", "seed")->line, "seed must be non-negative");
    sim.seed = static_cast<std::uint64_t>(seed);
    rd.integer("", "horizon_slots", sim.horizon);

    rd.real("arrivals", "batch_prob", sim.arrivals.batch_prob);
    rd.real("arrivals", "batch_mean", sim.arrivals.batch_mean);
    rd.real("arrivals", "batch_std", sim.arrivals.batch_std);

    auto& sv = sim.service;
    rd.real("service", "mm_rate_per_slot", sv.mm_rate);
    rd.real("service", "rf_rate_per_slot", sv.rf_rate);
    rd.real("service", "mm_service_prob", sv.mm_service_prob);
    rd.count("service", "renege_link_rate_per_slot", sv.renege_link_rate);
    rd.with("service", "renege", [&](const std::string& v) { sv.renege = engine::parse_renege_mode(v); });
    rd.with("service", "clock", [&](const std::string& v) { sv.clock = engine::parse_hol_clock(v); });
    rd.real("service", "timeout_slots", sv.timeout_slots);
    rd.real("service", "initial_timeout_slots", sv.initial_timeout_slots);
    rd.real("service", "sigma", sv.sigma);

    rd.count("buffers", "scheduler_packets", sim.buffers.scheduler);
    rd.count("buffers", "mm_packets", sim.buffers.mm);
    rd.count("buffers", "rf_packets", sim.buffers.rf);

    rd.real("reward", "r", sim.reward.r);
    rd.real("reward", "c", sim.reward.c);
    rd.real("reward", "w", sim.reward.w);

    auto& pol = sim.policy;
    rd.with("policy", "kind", [&](const std::string& v) { pol.kind = policies::parse_policy_kind(v); });
    rd.count("policy", "h", pol.h);
    rd.real("policy", "p", pol.p);
    rd.integer("policy", "tau_mm_slots", pol.tau_mm);
    rd.integer("policy", "tau_rf_slots", pol.tau_rf);
    pol.online.r = sim.reward.r;
    pol.online.c = sim.reward.c;
    pol.online.w = sim.reward.w;
    pol.online.k_max = sim.buffers.mm;
    rd.count("policy", "k_max_packets", pol.online.k_max);
    rd.count("policy", "h_min", pol.online.h_min);
    rd.integer("policy", "epoch_slots", pol.online.epoch);
    rd.integer("policy", "reset_period_slots", pol.online.reset_period);
    rd.flag("policy", "reset_enabled", pol.online.reset_enabled);

    auto& ch = cfg.channel;
    rd.real("channel", "mean_on_slots", ch.onoff.on.mean_slots);
    rd.real("channel", "mean_off_slots", ch.onoff.off.mean_slots);
    rd.real("channel", "on_shape", ch.onoff.on.shape);
    rd.real("channel", "off_shape", ch.onoff.off.shape);
    rd.real("channel", "off_probability", ch.onoff.off_probability);
    rd.path("channel", "link_csv", ch.link_csv, true);
    rd.path("channel", "signal_csv", ch.signal_csv, true);
    rd.real("channel", "cutoff_db", ch.cutoff_db);
    if (ch.link_csv && ch.signal_csv)
        throw doc.error(doc.section_line("channel"), "give at most one of link_csv and signal_csv");

    auto& an = cfg.analysis;
    rd.count("analysis", "q_max_packets", an.model.q_max);
    rd.count("analysis", "t_out_slots", an.model.t_out);
    rd.real("analysis", "lambda", an.model.lambda);
    rd.real("analysis", "mu", an.model.mu);
    rd.real("analysis", "sigma", an.model.sigma);
    an.model.h = an.model.q_max;
    rd.count("analysis", "state_cap", an.model.state_cap);
    rd.with("analysis", "h_max", [&](const std::string& v) {
        const auto x = Reader::to_int(v);
        if (x < 0) throw ConfigError("must be non-negative");
        an.h_max = static_cast<std::size_t>(x);
    });
    rd.real("analysis", "mean_on_slots", an.on.mean_slots);
    rd.real("analysis", "mean_off_slots", an.off.mean_slots);
    rd.real("analysis", "on_shape", an.on.shape);
    rd.real("analysis", "off_shape", an.off.shape);
    rd.real("analysis", "truncation_quantile", an.quantile);

    auto& sc = cfg.scene;
    std::vector<double> aoa, aod, power, phase;
    auto list = [&](const std::string& key, std::vector<double>& out) {
        rd.with("beamform", key, [&](const std::string& v) { out = parse_number_list(v); });
    };
    list("path_aoa_deg", aoa);
    list("path_aod_deg", aod);
    list("path_power", power);
    list("path_phase_rad", phase);
    if (aoa.empty()) {
        aoa = {20.0};
    }
    for (auto* v : {&aod, &power, &phase})
        if (!v->empty() && v->size() != aoa.size())
            throw doc.error(doc.section_line("beamform"), "path lists must all have as many entries as path_aoa_deg");
    for (std::size_t i = 0; i < aoa.size(); ++i)
        sc.paths.push_back({aoa[i], aod.empty() ? 0.0 : aod[i], power.empty() ? 1.0 : power[i],
                            phase.empty() ? 0.0 : phase[i]});
    rd.real("beamform", "snr_db", sc.snr_db);
    rd.count("beamform", "snapshots", sc.n_snapshots);
    rd.count("beamform", "rf_elements", sc.rf.n_elements);
    rd.real("beamform", "rf_spacing_wavelengths", sc.rf.spacing);
    rd.real("beamform", "rf_carrier_ghz", sc.rf.carrier_ghz);
    rd.count("beamform", "mm_rx_elements", sc.mm_rx.n_elements);
    rd.count("beamform", "mm_tx_elements", sc.mm_tx.n_elements);
    rd.real("beamform", "mm_spacing_wavelengths", sc.mm_rx.spacing);
    sc.mm_tx.spacing = sc.mm_rx.spacing;
    rd.real("beamform", "mm_carrier_ghz", sc.mm_rx.carrier_ghz);
    sc.mm_tx.carrier_ghz = sc.mm_rx.carrier_ghz;
    rd.with("beamform", "true_aoa_deg", [&](const std::string& v) { sc.true_aoa_deg = Reader::to_double(v); });
    auto& bf = cfg.beamform;
    rd.real("beamform", "grid_step_deg", bf.rf_grid.step_deg);
    rd.real("beamform", "mm_step_deg", bf.mm_step_deg);
    rd.real("beamform", "window_half_width_deg", bf.window_half_width_deg);
    rd.count("beamform", "sources", bf.n_sources);
    rd.real("beamform", "papr_threshold_db", bf.thresholds.papr_db);
    rd.real("beamform", "cv_threshold", bf.thresholds.cv);
    rd.count("beamform", "perturbations", bf.n_perturbations);
    rd.real("beamform", "perturb_radius_wavelengths", bf.perturb_radius);
    rd.flag("beamform", "baseline_sweep", bf.baseline_sweep);

    if (doc.has_section("sweep")) {
        SweepConfig sw;
        const auto param = doc.take("sweep", "param");
        if (!param) throw doc.error(doc.section_line("sweep"), "[sweep] needs a 'param' key");
        sw.param = param->value;
        sw.line = param->line;
        if (std::find(sweep_params().begin(), sweep_params().end(), sw.param) == sweep_params().end())
            throw doc.error(sw.line, "unknown sweep parameter '" + sw.param + "' (expected h, p, c, r, tau or lambda)");
        const auto values = doc.take("sweep", "values");
        if (!values) throw doc.error(doc.section_line("sweep"), "[sweep] needs a 'values' key");
        rd.with("sweep", "values", [&](const std::string& v) { sw.values = parse_number_list(v); });
        rd.with("sweep", "seeds", [&](const std::string& v) {
            for (double s : parse_number_list(v)) {
                if (s < 0 || s != std::floor(s)) throw ConfigError("seeds must be non-negative integers");
                sw.seeds.push_back(static_cast<std::uint64_t>(s));
            }
        });
        // Every point must be a valid configuration.
        for (double v : sw.values) {
            RunConfig probe = cfg;
            try {
                apply_sweep_param(probe, sw.param, v);
                probe.sim.validate();
            } catch (const Error& e) {
                throw doc.error(values->line, "values: " + std::string(e.what()));
            }
        }
        cfg.sweep = sw;
    }

    std::optional<fs::path> out;
    rd.path("output", "dir", out, false);
    if (out) cfg.out_dir = *out;
    rd.flag("output", "timeseries", cfg.timeseries);

    doc.reject_unused({"arrivals", "service", "buffers", "reward", "policy", "channel", "analysis", "beamform", "sweep",
                       "output"});

    anchored(doc, "", [&] { sim.validate(); });
    anchored(doc, "channel", [&] { ch.onoff.validate(); });
    anchored(doc, "analysis", [&] {
        an.model.validate();
        if (an.h_max && *an.h_max > an.model.q_max) throw ParameterError("analysis.h_max must not exceed q_max");
        if (!(an.quantile > 0.0 && an.quantile < 1.0)) throw ParameterError("analysis.truncation_quantile must lie in (0, 1)");
        if (!(an.on.mean_slots > 0.0) || !(an.off.mean_slots > 0.0))
            throw ParameterError("analysis.mean_on_slots and mean_off_slots must be positive");
    });
    anchored(doc, "beamform", [&] {
        sc.validate();
        bf.validate();
        if (bf.n_sources >= sc.rf.n_elements) throw ParameterError("beamform.sources must be below rf_elements");
    });
    return cfg;
}

RunConfig load_config(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError(path.string() + ": cannot open config file");
    return parse_config(in, path.string(), path.parent_path());
}

}  // namespace mmsched::cli
