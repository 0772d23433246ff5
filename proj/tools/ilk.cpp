// ilk command line: fuzz campaigns, violation reproduction, scenario corpus.
//
// Exit codes: 0 = clean, 1 = violations found / reproduced, 2 = usage or
// config error.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include "ilk/ilk.hpp"

namespace {

std::string read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

void print_diags(const std::string& what, const std::vector<ilk::Diagnostic>& diags) {
    for (const auto& d : diags) std::cerr << what << ":" << d.line << ": " << d.message << "\n";
}

int cmd_fuzz(const std::string& template_path, const std::string& config_path,
             uint32_t programs, uint32_t inputs, uint32_t variants, uint64_t seed,
             bool stop_on_first, const std::string& out_dir, bool quiet) {
    auto tpl = ilk::parse_template(read_file(template_path));
    if (!tpl.ok()) {
        print_diags(template_path, tpl.diags);
        return 2;
    }
    auto cfg = ilk::parse_config(read_file(config_path));
    if (!cfg.ok()) {
        print_diags(config_path, cfg.diags);
        return 2;
    }
    auto diags = ilk::validate(*tpl.value, *cfg.value);
    if (!diags.empty()) {
        print_diags(template_path, diags);
        return 2;
    }

    ilk::CampaignSpec spec;
    spec.tpl = std::move(*tpl.value);
    spec.cfg = std::move(*cfg.value);
    spec.n_programs = programs;
    spec.n_input_classes = inputs;
    spec.n_variants = variants;
    spec.master_seed = seed;
    spec.stop_on_first = stop_on_first;
    spec.out_dir = out_dir;
    spec.log = quiet ? nullptr : &std::cout;

    ilk::CampaignResult r = ilk::run_campaign(spec);
    std::cout << "programs: " << r.programs_executed << "\n"
              << "discarded: " << r.discarded << "\n"
              << "measurements: " << r.measurements << "\n"
              << "violations: " << r.violations.size() << "\n";
    if (r.wall_seconds > 0)
        std::cout << "measurements/second: "
                  << static_cast<uint64_t>(static_cast<double>(r.measurements) / r.wall_seconds)
                  << "\n";
    for (const auto& v : r.violations)
        std::cout << "violation: program " << v.program_index << " inputs "
                  << v.violation.input_a << " " << v.violation.input_b
                  << (spec.out_dir.empty() ? "" : " -> " + ilk::violation_filename(v)) << "\n";
    return r.violations.empty() ? 0 : 1;
}

int cmd_reproduce(const std::string& report_path, const std::vector<std::string>& disable) {
    ilk::PersistedViolation pv = ilk::parse_report_text(read_file(report_path));
    for (const auto& name : disable) {
        if (name == "meltdown_us") pv.knobs.bugs.meltdown_us = false;
        else if (name == "foreshadow_p") pv.knobs.bugs.foreshadow_p = false;
        else if (name == "mds_assist") pv.knobs.bugs.mds_assist = false;
        else if (name == "dss_divider") pv.knobs.bugs.dss_divider = false;
        else if (name == "rsrr_priv") pv.knobs.bugs.rsrr_priv = false;
        else if (name == "smsw_umip_analog") pv.knobs.bugs.smsw_umip_analog = false;
        else if (name == "all") pv.knobs.bugs = ilk::BugToggles{};
        else {
            std::cerr << "unknown bug toggle '" << name << "'\n";
            return 2;
        }
    }
    switch (ilk::reproduce(pv, &std::cout)) {
        case ilk::ReproVerdict::Persists:
            std::cout << "violation persists\n";
            return 1;
        case ilk::ReproVerdict::NotReproduced:
            std::cout << "violation not reproduced\n";
            return 0;
        case ilk::ReproVerdict::ClassMismatch:
            std::cout << "violation not reproduced (class mismatch)\n";
            return 0;
    }
    return 2;
}

int cmd_corpus(const std::string& action, const std::string& dir) {
    if (action == "list") {
        for (const auto& e : ilk::scenario_corpus())
            std::cout << e.name << "  -  " << e.description << "\n";
        return 0;
    }
    namespace fs = std::filesystem;
    for (const auto& e : ilk::scenario_corpus()) {
        fs::path d = fs::path(dir) / e.name;
        fs::create_directories(d);
        std::ofstream(d / "template.t", std::ios::binary) << e.template_text;
        std::ofstream(d / "config.yaml", std::ios::binary) << e.config_text;
    }
    std::cout << "wrote " << ilk::scenario_corpus().size() << " scenarios to " << dir << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"ilk - relational testing of isolation boundaries on a simulated CPU"};
    app.require_subcommand(1);

    std::string template_path, config_path, out_dir, report_path, corpus_dir;
    uint32_t programs = 1000, inputs = 10, variants = 5;
    uint64_t seed = 1;
    bool stop_on_first = false, quiet = false;
    std::vector<std::string> disable;

    auto* fuzz = app.add_subcommand("fuzz", "run a fuzzing campaign");
    fuzz->add_option("--template", template_path, "test case template file")->required();
    fuzz->add_option("--config", config_path, "campaign configuration file")->required();
    fuzz->add_option("--programs", programs, "number of programs to generate");
    fuzz->add_option("--inputs", inputs, "input classes per program");
    fuzz->add_option("--variants", variants, "input variants per class");
    fuzz->add_option("--seed", seed, "master seed");
    fuzz->add_flag("--stop-on-first", stop_on_first, "stop at the first persisting violation");
    fuzz->add_option("--out", out_dir, "output directory for reports");
    fuzz->add_flag("--quiet", quiet, "suppress progress lines");

    auto* rep = app.add_subcommand("reproduce", "re-check a stored violation report");
    rep->add_option("report", report_path, "violation report file")->required();
    rep->add_option("--disable", disable, "disable a bug toggle (name or 'all')");

    auto* corpus = app.add_subcommand("corpus", "list or emit the scenario corpus");
    std::string action;
    corpus->add_option("action", action, "list | emit")->required()
        ->check(CLI::IsMember({"list", "emit"}));
    corpus->add_option("dir", corpus_dir, "output directory for 'emit'");

    CLI11_PARSE(app, argc, argv);

    try {
        if (fuzz->parsed())
            return cmd_fuzz(template_path, config_path, programs, inputs, variants, seed,
                            stop_on_first, out_dir, quiet);
        if (rep->parsed()) return cmd_reproduce(report_path, disable);
        if (corpus->parsed()) {
            if (action == "emit" && corpus_dir.empty()) {
                std::cerr << "corpus emit requires a directory\n";
                return 2;
            }
            return cmd_corpus(action, corpus_dir);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 2;
}
