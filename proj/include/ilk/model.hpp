#pragma once

#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include "ilk/harness.hpp"

namespace ilk {

// Contract(p, sigma^V): sequential architectural reference execution that
// emits the permitted-leakage trace. Macros run as callbacks on the
// placeholder NOPs; transitions are plain jumps; there is no speculation.

struct ContractEvent {
    enum class Kind : uint8_t { Pc, Ld, St } kind = Kind::Pc;
    uint16_t actor = 0;  // Pc events record (actor, offset), not raw addresses
    uint64_t value = 0;  // Pc: code offset; Ld/St: virtual address

    bool operator==(const ContractEvent&) const = default;
};

struct ContractTrace {
    std::vector<ContractEvent> events;
    bool discarded = false;  // instruction budget exceeded or malformed run

    bool operator==(const ContractTrace&) const = default;
};

inline std::string serialize_contract_trace(const ContractTrace& t) {
    std::string out;
    char buf[48];
    for (const auto& e : t.events) {
        switch (e.kind) {
            case ContractEvent::Kind::Pc:
                std::snprintf(buf, sizeof(buf), "PC %u:%llx\n", e.actor,
                              static_cast<unsigned long long>(e.value));
                break;
            case ContractEvent::Kind::Ld:
                std::snprintf(buf, sizeof(buf), "LD %llx\n",
                              static_cast<unsigned long long>(e.value));
                break;
            case ContractEvent::Kind::St:
                std::snprintf(buf, sizeof(buf), "ST %llx\n",
                              static_cast<unsigned long long>(e.value));
                break;
        }
        out += buf;
    }
    if (t.discarded) out += "DISCARDED\n";
    return out;
}

/// Campaign-stable 64-bit hash used for equivalence-class grouping.
inline uint64_t contract_hash(const ContractTrace& t) {
    std::string s = serialize_contract_trace(t);
    return fnv1a(s.data(), s.size());
}

struct ModelOptions {
    uint32_t instruction_budget = 4096;
    bool priv_read_disable = false;
};

namespace model_detail {

struct ModelEnv final : StepEnv {
    const AddressSpace* as = nullptr;
    Privilege priv = Privilege::Kernel;
    std::vector<uint8_t>* phys = nullptr;
    const std::array<uint64_t, 8>* privs = nullptr;
    bool priv_disable = false;

    LoadResult load(uint64_t va) override {
        auto r = access_memory(*as, priv, *phys, va, Access::Read, 0, false);
        if (!r.ok) return {false, 0, r.fault};
        return {true, r.value, {}};
    }
    std::optional<Fault> store(uint64_t va, uint64_t value) override {
        auto r = access_memory(*as, priv, *phys, va, Access::Write, value, true);
        if (!r.ok) return r.fault;
        return std::nullopt;
    }
    uint64_t priv_reg(unsigned id) override { return (*privs)[id % 8]; }
    bool priv_read_disabled() const override { return priv_disable; }
};

}  // namespace model_detail

/// Architectural-only execution of a package with one input. Events are
/// recorded for victim (non-observer) actors: LD/ST for every victim memory
/// access (including the attempted address of a faulting one), PC for
/// transition targets touching a victim and for victim taken branches.
/// Arrival of a transition at the exit location terminates silently.
inline ContractTrace run_model(const TestCasePackage& pkg, const InputBundle& input,
                               const ModelOptions& opt = {}, ArchState* final_state = nullptr) {
    ContractTrace trace;
    const HarnessGeometry geom = make_geometry(pkg);
    auto spaces = build_address_spaces(to_layout_info(pkg), /*memory_aliasing=*/false);
    std::vector<uint8_t> phys(pkg.actors.size() * kFramesPerActor * kPageSize);
    load_physical_memory(phys, pkg.code, input);
    const auto sites = macro_site_map(pkg.macros);
    TransitionTargets targets = initial_targets(pkg.macros);
    const auto privs = priv_regs_from_input(pkg, input);

    ArchState st;
    model_detail::ModelEnv env;
    env.phys = &phys;
    env.privs = &privs;
    env.priv_disable = opt.priv_read_disable;

    auto is_victim = [&](uint16_t a) { return !pkg.actors[a].observer; };
    auto enter_actor = [&](uint16_t a, uint32_t offset) {
        st.current_actor = a;
        st.pc = offset;
        st.mode = pkg.actors[a].mode;
        st.privilege = pkg.actors[a].privilege;
        for (int i = 0; i < 6; ++i) st.gprs[i] = input.actors[a].regs[static_cast<size_t>(i)];
        st.gprs[kSandboxBaseReg] = kVaData;
        st.gprs[kProbeBaseReg] = kVaProbe;
        st.flags = Flags{};
        env.as = &spaces[a];
        env.priv = st.privilege;
    };
    enter_actor(pkg.entry_actor(), 0);  // program entry emits no event

    uint32_t budget = opt.instruction_budget;
    while (true) {
        const uint16_t a = st.current_actor;
        if (st.pc >= geom.code_len[a]) break;  // off the end of a code region
        if (budget-- == 0) {
            trace.discarded = true;
            break;
        }

        auto site = sites.find({a, static_cast<uint32_t>(st.pc)});
        if (site != sites.end()) {
            const MacroSite& m = pkg.macros[site->second];
            if (is_set_target_macro(m.id)) {
                switch (m.id) {
                    case MacroId::SetH2GTarget:
                        targets.h2g = target_of_set_macro(m);
                        break;
                    case MacroId::SetG2HTarget:
                        targets.g2h = target_of_set_macro(m);
                        break;
                    case MacroId::SetK2UTarget:
                        targets.k2u = target_of_set_macro(m);
                        break;
                    default:
                        targets.u2k = target_of_set_macro(m);
                        break;
                }
            } else if (is_switch_macro(m.id)) {
                auto target = targets.for_switch(m.id);
                if (!target) {
                    trace.discarded = true;
                    break;
                }
                if (geom.is_exit_target(target->actor, target->offset)) break;
                if (is_victim(a) || is_victim(target->actor))
                    trace.events.push_back(
                        {ContractEvent::Kind::Pc, target->actor, target->offset});
                enter_actor(target->actor, target->offset);
                continue;
            }
            // measurement / mitigation macros are architectural no-ops here;
            // fall through and execute the placeholder NOP.
        }

        if (st.pc % kInstrBytes != 0) {
            trace.discarded = true;
            break;
        }
        DecodeError derr;
        auto in = decode_instruction(&phys[frame_of(a, 0) * kPageSize + st.pc], kInstrBytes, &derr);
        if (!in) {
            trace.discarded = true;
            break;
        }
        StepOutcome res = arch_step(st, *in, env);
        if (res.mem != MemKind::None && is_victim(a))
            trace.events.push_back({res.mem == MemKind::Load ? ContractEvent::Kind::Ld
                                                             : ContractEvent::Kind::St,
                                    a, res.mem_va});
        if (res.fault) {
            if (res.fault->kind == FaultKind::Assist) {
                // assists are architecturally invisible and never surface here
                trace.discarded = true;
                break;
            }
            if (geom.fault_handler_offset) {
                // fault delivery: registers and flags survive, no PC event
                st.current_actor = static_cast<uint16_t>(geom.main_actor);
                st.pc = *geom.fault_handler_offset;
                st.mode = pkg.actors[static_cast<size_t>(geom.main_actor)].mode;
                st.privilege = pkg.actors[static_cast<size_t>(geom.main_actor)].privilege;
                env.as = &spaces[static_cast<size_t>(geom.main_actor)];
                env.priv = st.privilege;
                continue;
            }
            break;  // no handler: fault exits the test case
        }
        if (res.branch_taken && is_victim(a))
            trace.events.push_back({ContractEvent::Kind::Pc, a, res.branch_target});
    }
    if (final_state) *final_state = st;
    return trace;
}

}  // namespace ilk
