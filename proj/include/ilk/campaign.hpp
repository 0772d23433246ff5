#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <string>
#include <vector>

#include "ilk/analyzer.hpp"
#include "ilk/config.hpp"
#include "ilk/corpus.hpp"
#include "ilk/executor.hpp"
#include "ilk/model.hpp"
#include "ilk/package.hpp"
#include "ilk/report.hpp"

namespace ilk {

// The MRT loop over many programs: generate -> package -> model every input
// -> group -> measure on the simulator -> check isolation -> persist.

struct CampaignSpec {
    Template tpl;
    CampaignConfig cfg;
    uint32_t n_programs = 1000;
    uint32_t n_input_classes = 10;
    uint32_t n_variants = 5;
    uint64_t master_seed = 1;
    bool stop_on_first = false;
    std::string out_dir;        // empty: nothing persisted
    std::ostream* log = nullptr;  // progress lines, one per 100 programs
};

struct CampaignResult {
    uint64_t programs_executed = 0;
    uint64_t measurements = 0;  // simulator runs, as accounted by the ladder
    uint64_t model_runs = 0;
    uint32_t discarded = 0;  // test cases dropped (budget exceeded etc.)
    uint32_t pairs_checked = 0;
    uint32_t pairs_escalated = 0;
    std::vector<PersistedViolation> violations;
    double wall_seconds = 0.0;  // reporting only, never serialized
};

inline uint64_t program_seed(uint64_t master_seed, uint32_t index) {
    return derive_seed(master_seed, 0x7000000000000000ull | index);
}

/// Deterministic campaign summary (no timing), suitable for byte comparison.
inline std::string campaign_summary(const CampaignSpec& spec, const CampaignResult& r) {
    std::string s = "ILKCAMPAIGN 1\n";
    char buf[64];
    std::snprintf(buf, sizeof(buf), "0x%016llx",
                  static_cast<unsigned long long>(spec.master_seed));
    s += "master_seed: " + std::string(buf) + "\n";
    s += "programs_requested: " + std::to_string(spec.n_programs) + "\n";
    s += "input_classes: " + std::to_string(spec.n_input_classes) + "\n";
    s += "input_variants: " + std::to_string(spec.n_variants) + "\n";
    s += "programs_executed: " + std::to_string(r.programs_executed) + "\n";
    s += "discarded: " + std::to_string(r.discarded) + "\n";
    s += "measurements: " + std::to_string(r.measurements) + "\n";
    s += "model_runs: " + std::to_string(r.model_runs) + "\n";
    s += "pairs_checked: " + std::to_string(r.pairs_checked) + "\n";
    s += "pairs_escalated: " + std::to_string(r.pairs_escalated) + "\n";
    s += "violations: " + std::to_string(r.violations.size()) + "\n";
    for (const auto& v : r.violations)
        s += "violation: program " + std::to_string(v.program_index) + " inputs " +
             std::to_string(v.violation.input_a) + " " + std::to_string(v.violation.input_b) +
             "\n";
    return s;
}

inline std::string violation_filename(const PersistedViolation& v) {
    return "violation-" + std::to_string(v.program_index) + "-" +
           std::to_string(v.violation.input_a) + "-" + std::to_string(v.violation.input_b) +
           ".txt";
}

/// Run one full campaign. Deterministic given (spec, binary): every report
/// and the summary are pure functions of the spec.
inline CampaignResult run_campaign(const CampaignSpec& spec) {
    const auto t0 = std::chrono::steady_clock::now();
    CampaignResult result;
    const SamplingPlan plan{spec.cfg.analyzer.sample_schedule};
    const double threshold = spec.cfg.analyzer.chi2_threshold;
    const ModelOptions mopt{spec.cfg.executor.instruction_budget,
                            spec.cfg.executor.priv_read_disable};
    const int obs = spec.cfg.observer_index();

    if (!spec.out_dir.empty()) std::filesystem::create_directories(spec.out_dir);

    for (uint32_t idx = 0; idx < spec.n_programs; ++idx) {
        const uint64_t pseed = program_seed(spec.master_seed, idx);
        Program prog = expand_random_instructions(spec.tpl, spec.cfg, pseed);
        if (spec.cfg.cross_actor_access_pass)
            prog = cross_actor_access_pass(std::move(prog), spec.cfg, pseed);
        auto inputs = generate_inputs(spec.cfg, spec.n_input_classes, spec.n_variants,
                                      derive_seed(pseed, 0x696e7075));
        TestCasePackage pkg = build_package(prog, spec.cfg, inputs);
        ++result.programs_executed;

        std::vector<uint64_t> chashes, ohashes;
        chashes.reserve(pkg.inputs.size());
        bool dropped = false;
        for (const auto& input : pkg.inputs) {
            ContractTrace t = run_model(pkg, input, mopt);
            ++result.model_runs;
            if (t.discarded) {
                dropped = true;
                break;
            }
            chashes.push_back(contract_hash(t));
            ohashes.push_back(observer_data_hash(input, obs));
        }
        if (dropped) {
            ++result.discarded;
            continue;
        }

        auto classes = group_inputs(chashes, ohashes);
        const uint64_t nseed = derive_seed(pseed, 0x6e6f6973);
        ExecutionContext ctx(pkg, spec.cfg.executor, nseed);
        IsolationCheckStats stats;
        auto reports = check_isolation(
            classes,
            [&](uint32_t input_id, uint32_t n) { return ctx.measure_sample(pkg.inputs[input_id], n); },
            plan, threshold, &stats);
        result.measurements += stats.measurements;
        result.pairs_checked += stats.pairs_checked;
        result.pairs_escalated += stats.pairs_escalated;
        result.discarded += stats.classes_aborted;

        for (auto& rep : reports) {
            rep.program_index = idx;
            rep.program_seed = pseed;
            PersistedViolation pv;
            pv.violation = rep;
            pv.program_index = idx;
            pv.program_seed = pseed;
            pv.noise_seed = nseed;
            pv.knobs = spec.cfg.executor;
            pv.chi2_threshold = threshold;
            pv.plan = plan;
            pv.assembly = disassemble(prog);
            pv.package_bytes = serialize_package(pkg);
            if (!spec.out_dir.empty()) {
                std::ofstream f(std::filesystem::path(spec.out_dir) / violation_filename(pv),
                                std::ios::binary);
                f << write_report_text(pv);
            }
            result.violations.push_back(std::move(pv));
        }

        if (spec.log && (idx + 1) % 100 == 0)
            *spec.log << "[ilk] programs " << (idx + 1) << "/" << spec.n_programs
                      << " measurements " << result.measurements << " violations "
                      << result.violations.size() << "\n";
        if (spec.stop_on_first && !result.violations.empty()) break;
    }

    result.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (!spec.out_dir.empty()) {
        std::ofstream f(std::filesystem::path(spec.out_dir) / "campaign.txt", std::ios::binary);
        f << campaign_summary(spec, result);
    }
    return result;
}

// ---- reproduction ----

enum class ReproVerdict { Persists, NotReproduced, ClassMismatch };

/// Reload a violation report, re-run the model, the measurement ladder and
/// the analysis, and decide whether the violation persists.
inline ReproVerdict reproduce(const PersistedViolation& pv, std::ostream* log = nullptr) {
    TestCasePackage pkg = load_package(pv.package_bytes);
    const ModelOptions mopt{pv.knobs.instruction_budget, pv.knobs.priv_read_disable};
    const uint32_t a = pv.violation.input_a, b = pv.violation.input_b;
    if (a >= pkg.inputs.size() || b >= pkg.inputs.size())
        throw std::runtime_error("report input ids out of range");

    ContractTrace ta = run_model(pkg, pkg.inputs[a], mopt);
    ContractTrace tb = run_model(pkg, pkg.inputs[b], mopt);
    const int obs = pkg.observer_index();
    if (contract_hash(ta) != contract_hash(tb) ||
        observer_data_hash(pkg.inputs[a], obs) != observer_data_hash(pkg.inputs[b], obs)) {
        if (log) *log << "inputs no longer share an equivalence class\n";
        return ReproVerdict::ClassMismatch;
    }

    ExecutionContext ctx(pkg, pv.knobs, pv.noise_seed);
    EquivalenceClass cls{{a, b}, contract_hash(ta), observer_data_hash(pkg.inputs[a], obs)};
    IsolationCheckStats stats;
    auto reports = check_isolation(
        {cls},
        [&](uint32_t input_id, uint32_t n) { return ctx.measure_sample(pkg.inputs[input_id], n); },
        pv.plan, pv.chi2_threshold, &stats);
    if (log) {
        for (const auto& r : reports)
            for (const auto& st : r.stages)
                *log << "stage " << st.sample_size << " chi2 " << st.chi2 << "\n";
    }
    return reports.empty() ? ReproVerdict::NotReproduced : ReproVerdict::Persists;
}

}  // namespace ilk
