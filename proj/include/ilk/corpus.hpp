#pragma once

#include <cstdio>
#include <string>
#include <vector>

namespace ilk {

// Shipped scenario corpus: the four boundary templates (K2U, H2V, V2V with
// the six-hop chain, U2U), one MEM config per page-bit error row, the
// COMP divider and REG privileged-read configs, mitigation-insertion
// variants, KPTI analogs, and clean (leak-free) soundness configs.

struct ScenarioEntry {
    std::string name;
    std::string description;
    std::string template_text;
    std::string config_text;
};

namespace corpus_detail {

// Fixed victim activity at class-stable addresses: caches two data lines,
// leaves an input-dependent value in the store buffer and in the divider.
// Template-literal lines are never touched by the instrumentation passes.
inline std::string victim_preamble() {
    return "  LOAD r0, [r6+0]\n"
           "  STORE r1, [r6+64]\n"
           "  OR r3, 1\n"
           "  DIV r2, r3\n";
}

inline std::string k2u_template(const std::string& mitigation,
                                const std::string& handler_extra) {
    return ".section .main\n"
           ".start:\n"
           "  .macro.set_k2u_target.attacker:\n"
           "  .macro.set_u2k_target.finish:\n" +
           victim_preamble() +
           "  .macro.random_instructions.6:\n" +
           mitigation +
           "  .macro.switch_k2u:\n"
           ".finish:\n"
           "  .macro.fault_handler:\n" +
           handler_extra +
           "\n"
           ".section .user\n"
           ".attacker:\n"
           "  .macro.measurement_start:\n"
           "  .macro.random_instructions.24:\n"
           "  .macro.measurement_end:\n"
           "  .macro.switch_u2k:\n";
}

inline std::string h2v_template(const std::string& mitigation) {
    return ".section .main\n"
           ".start:\n"
           "  .macro.set_h2g_target.attacker:\n"
           "  .macro.set_g2h_target.finish:\n" +
           victim_preamble() +
           "  .macro.random_instructions.6:\n" +
           mitigation +
           "  .macro.switch_h2g:\n"
           ".finish:\n"
           "  .macro.fault_handler:\n"
           "\n"
           ".section .guest\n"
           ".attacker:\n"
           "  .macro.measurement_start:\n"
           "  .macro.random_instructions.24:\n"
           "  .macro.measurement_end:\n"
           "  .macro.switch_g2h:\n";
}

// Host -> VM2 -> Host -> VM1 -> Host -> VM2, measurement spans the chain.
inline std::string v2v_template() {
    return ".section .main\n"
           ".start:\n"
           "  .macro.set_g2h_target.ret1:\n"
           "  .macro.set_h2g_target.vm2_measure:\n"
           "  .macro.switch_h2g:\n"
           ".ret1:\n"
           "  .macro.set_g2h_target.ret2:\n"
           "  .macro.set_h2g_target.vm1_code:\n"
           "  .macro.switch_h2g:\n"
           ".ret2:\n"
           "  .macro.set_g2h_target.finish:\n"
           "  .macro.set_h2g_target.vm2_attack:\n"
           "  .macro.switch_h2g:\n"
           ".finish:\n"
           "  .macro.fault_handler:\n"
           "\n"
           ".section .vm1\n"
           ".vm1_code:\n" +
           victim_preamble() +
           "  .macro.random_instructions.6:\n"
           "  .macro.switch_g2h:\n"
           "\n"
           ".section .vm2\n"
           ".vm2_measure:\n"
           "  .macro.measurement_start:\n"
           "  .macro.switch_g2h:\n"
           ".vm2_attack:\n"
           "  .macro.random_instructions.24:\n"
           "  .macro.measurement_end:\n"
           "  .macro.switch_g2h:\n";
}

inline std::string u2u_template() {
    return ".section .main\n"
           ".start:\n"
           "  .macro.set_u2k_target.ret1:\n"
           "  .macro.set_k2u_target.victim_code:\n"
           "  .macro.random_instructions.4:\n"
           "  .macro.switch_k2u:\n"
           ".ret1:\n"
           "  .macro.set_u2k_target.finish:\n"
           "  .macro.set_k2u_target.attacker:\n"
           "  .macro.switch_k2u:\n"
           ".finish:\n"
           "  .macro.fault_handler:\n"
           "\n"
           ".section .user1\n"
           ".victim_code:\n" +
           victim_preamble() +
           "  .macro.random_instructions.6:\n"
           "  .macro.switch_u2k:\n"
           "\n"
           ".section .user2\n"
           ".attacker:\n"
           "  .macro.measurement_start:\n"
           "  .macro.random_instructions.24:\n"
           "  .macro.measurement_end:\n"
           "  .macro.switch_u2k:\n";
}

struct ConfigOpts {
    std::string boundary = "k2u";     // k2u | h2v | v2v | u2u
    std::string observer_props;       // extra data_properties lines (6-space indent)
    std::string bugs;                 // "    name: true" lines
    bool aliasing = false;
    bool cross_pass = false;
    bool div_unmask = false;
    std::string kernel_isolation;     // empty = none
    double noise = 0.0;
    bool rdpriv = false;
    std::string allowlist;            // override pool, "- OP" lines
};

inline std::string corpus_config(const ConfigOpts& o) {
    std::string s = "actors:\n";
    auto actor = [&](const std::string& name, const std::string& mode, const std::string& priv,
                     bool observer) {
        s += "- " + name + ":\n";
        s += "  - mode: \"" + mode + "\"\n";
        s += "  - privilege_level: \"" + priv + "\"\n";
        if (observer) {
            s += "  - observer: true\n";
            if (!o.observer_props.empty()) {
                s += "  - data_properties:\n";
                s += o.observer_props;
            }
        }
    };
    if (o.boundary == "k2u") {
        actor("main", "host", "kernel", false);
        actor("user", "host", "user", true);
    } else if (o.boundary == "h2v") {
        actor("main", "host", "kernel", false);
        actor("guest", "guest", "kernel", true);
    } else if (o.boundary == "v2v") {
        actor("main", "host", "kernel", false);
        actor("vm1", "guest", "kernel", false);
        actor("vm2", "guest", "kernel", true);
    } else {  // u2u
        actor("main", "host", "kernel", false);
        actor("user1", "host", "user", false);
        actor("user2", "host", "user", true);
    }
    s += "instruction_allowlist:\n";
    if (!o.allowlist.empty()) {
        s += o.allowlist;
    } else {
        static const char* pool[] = {"ADD", "SUB", "AND", "OR",   "XOR", "SHL",   "SHR",
                                     "CMP", "CMOV", "MUL", "DIV", "LOAD", "STORE", "NOP"};
        for (const char* p : pool) s += std::string("- ") + p + "\n";
    }
    if (o.rdpriv) s += "- RDPRIV\n";
    s += "contract_observation_clause: load+store+pc\n";
    s += "contract_execution_clause:\n- noninterference\n";
    s += "enable_prefetchers: false\n";
    if (o.cross_pass) s += "cross_actor_access_pass: true\n";
    if (o.div_unmask) s += "disable_observer_div_mask: true\n";
    s += "executor:\n";
    if (!o.bugs.empty()) s += "  bugs:\n" + o.bugs;
    if (o.aliasing) s += "  memory_aliasing: true\n";
    if (!o.kernel_isolation.empty()) s += "  kernel_isolation: \"" + o.kernel_isolation + "\"\n";
    char noise[48];
    std::snprintf(noise, sizeof(noise), "  noise_probability: %g\n", o.noise);
    s += noise;
    s += "analyzer:\n  chi2_threshold: 8.0\n  sample_schedule:\n  - 15\n  - 40\n  - 160\n  - 320\n";
    return s;
}

}  // namespace corpus_detail

inline const std::vector<ScenarioEntry>& scenario_corpus() {
    using namespace corpus_detail;
    static const std::vector<ScenarioEntry> entries = [] {
        std::vector<ScenarioEntry> v;
        auto add = [&](std::string name, std::string desc, std::string tpl, ConfigOpts o) {
            v.push_back({std::move(name), std::move(desc), std::move(tpl), corpus_config(o)});
        };
        const std::string none;
        const std::string verw = "  .macro.flush_buffers:\n";
        const std::string wbinvd = "  .macro.full_cache_flush:\n";
        const std::string l1d = "  .macro.flush_l1d:\n";
        const std::string ddiv = "  .macro.dummy_div:\n";

        // MEM: one configuration per page-bit error row
        add("mem-u-bit", "K2U, user access to kernel memory (#PF U-bit)",
            k2u_template(none, none),
            {.boundary = "k2u", .bugs = "    meltdown_us: true\n", .aliasing = true,
             .cross_pass = true});
        add("mem-a-bit", "K2U, observer accessed bit clear (assist)", k2u_template(none, none),
            {.boundary = "k2u", .observer_props = "    - accessed: false\n",
             .bugs = "    mds_assist: true\n", .aliasing = true});
        add("mem-d-bit", "K2U, observer dirty bit clear (assist)", k2u_template(none, none),
            {.boundary = "k2u", .observer_props = "    - dirty: false\n",
             .bugs = "    mds_assist: true\n", .aliasing = true});
        add("mem-p-bit", "H2V, observer present bit clear (#PF)", h2v_template(none),
            {.boundary = "h2v", .observer_props = "    - present: false\n",
             .bugs = "    foreshadow_p: true\n", .aliasing = true});
        add("mem-r-bit", "K2U, observer reserved bit set (#PF)", k2u_template(none, none),
            {.boundary = "k2u", .observer_props = "    - reserved: true\n",
             .bugs = "    mds_assist: true\n", .aliasing = true});
        add("mem-w-bit", "V2V, observer writable bit clear (#PF)", v2v_template(),
            {.boundary = "v2v", .observer_props = "    - writable: false\n",
             .bugs = "    mds_assist: true\n", .aliasing = true});
        add("mem-npt-a-bit", "V2V, observer nested accessed bit clear (assist)", v2v_template(),
            {.boundary = "v2v", .observer_props = "    - nested_accessed: false\n",
             .bugs = "    mds_assist: true\n", .aliasing = true});
        add("mem-npt-d-bit", "V2V, observer nested dirty bit clear (assist)", v2v_template(),
            {.boundary = "v2v", .observer_props = "    - nested_dirty: false\n",
             .bugs = "    mds_assist: true\n", .aliasing = true});
        add("mem-npt-p-bit", "V2V, observer nested present bit clear (#VMEXIT)", v2v_template(),
            {.boundary = "v2v", .observer_props = "    - nested_present: false\n",
             .bugs = "    mds_assist: true\n", .aliasing = true});
        add("mem-npt-r-bit", "V2V, observer nested reserved bit set (#VMEXIT)", v2v_template(),
            {.boundary = "v2v", .observer_props = "    - nested_reserved: true\n",
             .bugs = "    mds_assist: true\n", .aliasing = true});
        add("mem-npt-w-bit", "V2V, observer nested writable bit clear (#VMEXIT)", v2v_template(),
            {.boundary = "v2v", .observer_props = "    - nested_writable: false\n",
             .bugs = "    mds_assist: true\n", .aliasing = true});

        // COMP: divider state sampling via unmasked observer divisions.
        // Division-heavy pool so zero divisors arise before a successful
        // division refreshes the stale state.
        const std::string comp_pool = "- ADD\n- AND\n- SHL\n- SHR\n- CMOV\n- MUL\n- DIV\n"
                                      "- LOAD\n- STORE\n";
        add("comp-dss", "K2U, observer divide-by-zero (divider state sampling)",
            k2u_template(none, none),
            {.boundary = "k2u", .bugs = "    dss_divider: true\n", .div_unmask = true,
             .allowlist = comp_pool});

        // REG: privileged register reads from user mode
        add("reg-register", "K2U, faulting RDPRIV leaks the full register",
            k2u_template(none, none),
            {.boundary = "k2u", .bugs = "    rsrr_priv: true\n", .rdpriv = true});
        add("reg-umip", "K2U, faulting RDPRIV leaks the low 16 bits (UMIP analog)",
            k2u_template(none, none),
            {.boundary = "k2u", .bugs = "    smsw_umip_analog: true\n", .rdpriv = true});

        // Mitigation variants: primitive inserted before the attacker transition
        add("mit-mds-flush-buffers", "MDS scenario with flush_buffers before the transition",
            k2u_template(verw, none),
            {.boundary = "k2u", .observer_props = "    - accessed: false\n",
             .bugs = "    mds_assist: true\n", .aliasing = true});
        add("mit-mds-full-cache-flush",
            "MDS scenario with full_cache_flush (does not clear the store buffer)",
            k2u_template(wbinvd, none),
            {.boundary = "k2u", .observer_props = "    - accessed: false\n",
             .bugs = "    mds_assist: true\n", .aliasing = true});
        add("mit-foreshadow-flush-l1d", "Foreshadow scenario with flush_l1d before the transition",
            h2v_template(l1d),
            {.boundary = "h2v", .observer_props = "    - present: false\n",
             .bugs = "    foreshadow_p: true\n", .aliasing = true});
        add("mit-dss-dummy-div", "DSS scenario with dummy_div in the transition path",
            k2u_template(ddiv, none),
            {.boundary = "k2u", .bugs = "    dss_divider: true\n", .div_unmask = true,
             .allowlist = comp_pool});
        add("mit-dss-dummy-div-handler",
            "DSS scenario with dummy_div in the fault handler (the ineffective patch)",
            k2u_template(none, ddiv),
            {.boundary = "k2u", .bugs = "    dss_divider: true\n", .div_unmask = true,
             .allowlist = comp_pool});

        // KPTI analogs over the U-bit scenario
        add("mit-kpti-p-bit-clear", "U-bit scenario, kernel pages present-bit cleared only",
            k2u_template(none, none),
            {.boundary = "k2u", .bugs = "    meltdown_us: true\n    mds_assist: true\n",
             .aliasing = true, .cross_pass = true, .kernel_isolation = "p_bit_clear"});
        add("mit-kpti-unmap", "U-bit scenario, kernel pages fully unmapped",
            k2u_template(none, none),
            {.boundary = "k2u", .bugs = "    meltdown_us: true\n    mds_assist: true\n",
             .aliasing = true, .cross_pass = true, .kernel_isolation = "unmap"});
        add("mit-kpti-unmap-flush-buffers",
            "U-bit scenario, kernel pages unmapped + flush_buffers",
            k2u_template(verw, none),
            {.boundary = "k2u", .bugs = "    meltdown_us: true\n    mds_assist: true\n",
             .aliasing = true, .cross_pass = true, .kernel_isolation = "unmap"});

        // Leak-free machines for soundness / noise campaigns
        add("clean-k2u", "K2U, all bug toggles off, no overrides", k2u_template(none, none),
            {.boundary = "k2u"});
        add("clean-v2v-noise", "V2V, leak-free, transition noise 0.05", v2v_template(),
            {.boundary = "v2v", .aliasing = true, .noise = 0.05});
        add("clean-u2u", "U2U, all bug toggles off, no overrides", u2u_template(),
            {.boundary = "u2u"});
        return v;
    }();
    return entries;
}

inline const ScenarioEntry* find_scenario(const std::string& name) {
    for (const auto& e : scenario_corpus())
        if (e.name == name) return &e;
    return nullptr;
}

}  // namespace ilk
