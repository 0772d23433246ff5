#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "ilk/config.hpp"
#include "ilk/isa.hpp"
#include "ilk/macros.hpp"
#include "ilk/paging.hpp"
#include "ilk/rng.hpp"
#include "ilk/template_lang.hpp"

namespace ilk {

struct MacroSite {
    uint16_t owner = 0;
    uint32_t offset = 0;  // byte offset of the placeholder NOP in the owner's code
    MacroId id{};
    int32_t arg0 = 0;  // set_*_target: target actor
    int32_t arg1 = 0;  // set_*_target: target byte offset

    bool operator==(const MacroSite&) const = default;
};

struct ActorCode {
    std::string name;
    std::vector<Instruction> code;
};

/// A concrete multi-actor program: expanded code, resolved labels, and the
/// macro table consumed by both the simulator and the leakage model.
struct Program {
    std::vector<ActorCode> actors;
    std::vector<MacroSite> macros;
    uint16_t entry_actor = 0;  // first template section

    // generator-internal annotations (not part of the package)
    struct GenMemSite {
        uint16_t actor;
        uint32_t and_slot;  // slot of the masking AND; the access sits at and_slot+2
    };
    std::vector<GenMemSite> gen_mem_sites;
    bool cross_pass_warning = false;

    uint32_t code_bytes(unsigned a) const {
        return static_cast<uint32_t>(actors[a].code.size() * kInstrBytes);
    }
};

namespace gen_detail {

struct LabelRef {
    std::string name;
    int line;
};

inline uint8_t pick_gpr(Rng& rng) { return static_cast<uint8_t>(rng.below(6)); }  // r0-r5

}  // namespace gen_detail

/// Expand a validated template into a Program: random_instructions macros
/// become seeded random code with fault-prevention instrumentation (sandbox
/// masking of memory operands, OR-1 on divisors), all other macros become
/// placeholder NOPs registered in the macro table.
inline Program expand_random_instructions(const Template& tpl, const CampaignConfig& cfg,
                                          uint64_t seed) {
    if (cfg.instruction_allowlist.empty()) throw std::runtime_error("empty instruction allowlist");
    Rng rng(derive_seed(seed, 0x67656e));  // generation stream

    Program prog;
    prog.entry_actor = 0;

    // label -> (actor, slot) after expansion
    std::map<std::string, std::pair<uint16_t, uint32_t>> labels;
    struct BranchFixup {
        uint16_t actor;
        uint32_t slot;
        std::string label;
    };
    std::vector<BranchFixup> branch_fixups;
    struct MacroFixup {
        size_t macro_index;
        std::string label;
    };
    std::vector<MacroFixup> macro_fixups;

    for (uint16_t ai = 0; ai < tpl.sections.size(); ++ai) {
        const TemplateSection& sec = tpl.sections[ai];
        const ActorConfig* actor = cfg.find_actor(sec.actor);
        if (!actor) throw std::runtime_error("section '" + sec.actor + "' missing from config");
        ActorCode ac;
        ac.name = sec.actor;
        auto& code = ac.code;

        for (const auto& item : sec.items) {
            switch (item.kind) {
                case TemplateItem::Kind::Label:
                    labels[item.label] = {ai, static_cast<uint32_t>(code.size())};
                    break;
                case TemplateItem::Kind::Instr:
                    if (!item.instr.branch_label.empty())
                        branch_fixups.push_back(
                            {ai, static_cast<uint32_t>(code.size()), item.instr.branch_label});
                    code.push_back(item.instr.instr);
                    break;
                case TemplateItem::Kind::Macro: {
                    const MacroInvocation& m = item.macro;
                    if (m.id == MacroId::RandomInstructions) {
                        const int64_t n = m.int_arg.value_or(0);
                        std::vector<uint32_t> gen_slot;  // generated index -> slot
                        struct LocalBr {
                            uint32_t gen_idx;
                            uint32_t target_gen_idx;
                        };
                        std::vector<LocalBr> local_brs;
                        const bool unmask_div =
                            actor->observer && cfg.disable_observer_div_mask;
                        for (int64_t k = 0; k < n; ++k) {
                            Opcode op = cfg.instruction_allowlist[rng.below(
                                cfg.instruction_allowlist.size())];
                            using gen_detail::pick_gpr;
                            switch (op) {
                                case Opcode::Load:
                                case Opcode::Store: {
                                    uint8_t val = pick_gpr(rng);
                                    uint8_t base = pick_gpr(rng);
                                    auto disp = static_cast<uint16_t>(rng.below(kMaxGenDisp + 1));
                                    // branch targets land on the mask, never the bare access
                                    gen_slot.push_back(static_cast<uint32_t>(code.size()));
                                    prog.gen_mem_sites.push_back(
                                        {ai, static_cast<uint32_t>(code.size())});
                                    code.push_back(make_alu_imm(Opcode::And, base, kSandboxMask));
                                    code.push_back(make_alu(Opcode::Add, base, kSandboxBaseReg));
                                    code.push_back(op == Opcode::Load
                                                       ? make_load(val, base, disp)
                                                       : make_store(val, base, disp));
                                    break;
                                }
                                case Opcode::Div: {
                                    uint8_t dst = pick_gpr(rng);
                                    uint8_t src = pick_gpr(rng);
                                    gen_slot.push_back(static_cast<uint32_t>(code.size()));
                                    if (!unmask_div)
                                        code.push_back(make_alu_imm(Opcode::Or, src, 1));
                                    code.push_back(make_alu(Opcode::Div, dst, src));
                                    break;
                                }
                                case Opcode::Br: {
                                    auto c = static_cast<Cond>(rng.below(kCondCount));
                                    uint32_t skip = 1 + static_cast<uint32_t>(rng.below(8));
                                    uint32_t target =
                                        std::min<uint32_t>(static_cast<uint32_t>(k) + skip,
                                                           static_cast<uint32_t>(n));
                                    local_brs.push_back({static_cast<uint32_t>(k), target});
                                    gen_slot.push_back(static_cast<uint32_t>(code.size()));
                                    code.push_back(make_br(c, 0));
                                    break;
                                }
                                case Opcode::Cmov: {
                                    auto c = static_cast<Cond>(rng.below(kCondCount));
                                    uint8_t dst = pick_gpr(rng);
                                    gen_slot.push_back(static_cast<uint32_t>(code.size()));
                                    if (rng.below(10) < 3)
                                        code.push_back(make_cmov_imm(c, dst, rng.next_u16()));
                                    else
                                        code.push_back(make_cmov(c, dst, pick_gpr(rng)));
                                    break;
                                }
                                case Opcode::Shl:
                                case Opcode::Shr: {
                                    // immediate amounts straddle the 64-bit width, so
                                    // shifted-out (zeroed) registers occur routinely
                                    uint8_t dst = pick_gpr(rng);
                                    gen_slot.push_back(static_cast<uint32_t>(code.size()));
                                    if (rng.below(2))
                                        code.push_back(make_alu_imm(
                                            op, dst, static_cast<uint16_t>(32 + rng.below(64))));
                                    else
                                        code.push_back(make_alu(op, dst, pick_gpr(rng)));
                                    break;
                                }
                                case Opcode::Nop:
                                case Opcode::Fence:
                                    gen_slot.push_back(static_cast<uint32_t>(code.size()));
                                    code.push_back(op == Opcode::Nop ? make_nop() : make_fence());
                                    break;
                                case Opcode::Rdpriv: {
                                    uint8_t dst = pick_gpr(rng);
                                    gen_slot.push_back(static_cast<uint32_t>(code.size()));
                                    code.push_back(make_rdpriv(
                                        dst, static_cast<uint16_t>(rng.below(8))));
                                    break;
                                }
                                default: {  // two-operand ALU
                                    uint8_t dst = pick_gpr(rng);
                                    gen_slot.push_back(static_cast<uint32_t>(code.size()));
                                    if (rng.below(10) < 3)
                                        code.push_back(make_alu_imm(op, dst, rng.next_u16()));
                                    else
                                        code.push_back(make_alu(op, dst, pick_gpr(rng)));
                                    break;
                                }
                            }
                        }
                        gen_slot.push_back(static_cast<uint32_t>(code.size()));  // block end
                        for (const auto& b : local_brs) {
                            int32_t rel = (static_cast<int32_t>(gen_slot[b.target_gen_idx]) -
                                           static_cast<int32_t>(gen_slot[b.gen_idx] + 1)) *
                                          static_cast<int32_t>(kInstrBytes);
                            code[gen_slot[b.gen_idx]].disp =
                                static_cast<uint16_t>(static_cast<int16_t>(rel));
                        }
                    } else {
                        MacroSite site;
                        site.owner = ai;
                        site.offset = static_cast<uint32_t>(code.size() * kInstrBytes);
                        site.id = m.id;
                        if (!m.label_arg.empty())
                            macro_fixups.push_back({prog.macros.size(), m.label_arg});
                        prog.macros.push_back(site);
                        code.push_back(make_nop());  // placeholder
                    }
                    break;
                }
            }
        }
        prog.actors.push_back(std::move(ac));
    }

    for (const auto& f : branch_fixups) {
        auto it = labels.find(f.label);
        if (it == labels.end()) throw std::runtime_error("unresolved label '" + f.label + "'");
        if (it->second.first != f.actor)
            throw std::runtime_error("branch target '" + f.label + "' crosses actors");
        int32_t rel = (static_cast<int32_t>(it->second.second) - static_cast<int32_t>(f.slot + 1)) *
                      static_cast<int32_t>(kInstrBytes);
        prog.actors[f.actor].code[f.slot].disp =
            static_cast<uint16_t>(static_cast<int16_t>(rel));
    }
    for (const auto& f : macro_fixups) {
        auto it = labels.find(f.label);
        if (it == labels.end()) throw std::runtime_error("unresolved label '" + f.label + "'");
        prog.macros[f.macro_index].arg0 = it->second.first;
        prog.macros[f.macro_index].arg1 =
            static_cast<int32_t>(it->second.second * kInstrBytes);
    }
    return prog;
}

/// MEM U-bit pass: retarget one randomly chosen generated memory access of a
/// user-mode actor into main's data window. The mask pair is rewritten in
/// place, so offsets and the macro table are unaffected.
inline Program cross_actor_access_pass(Program prog, const CampaignConfig& cfg, uint64_t seed) {
    std::vector<size_t> candidates;
    for (size_t i = 0; i < prog.gen_mem_sites.size(); ++i) {
        const auto& site = prog.gen_mem_sites[i];
        const ActorConfig* a = cfg.find_actor(prog.actors[site.actor].name);
        if (a && a->mode == Mode::Host && a->privilege == Privilege::User)
            candidates.push_back(i);
    }
    if (candidates.empty()) {
        prog.cross_pass_warning = true;
        return prog;
    }
    Rng rng(derive_seed(seed, 0x63726f73));
    const auto& site = prog.gen_mem_sites[candidates[rng.below(candidates.size())]];
    auto& code = prog.actors[site.actor].code;
    const uint8_t base = code[site.and_slot].dst;
    code[site.and_slot] = make_alu_imm(Opcode::And, base, kCrossMask);
    code[site.and_slot + 1] = make_alu_imm(Opcode::Or, base, kMainViewBase);
    return prog;
}

// ---- inputs ----

/// One actor's slice of an input: three pages of data plus initial r0-r5.
struct ActorInput {
    std::vector<uint8_t> pages;  // kDataPages * kPageSize bytes
    std::array<uint64_t, 6> regs{};

    bool operator==(const ActorInput&) const = default;
};

struct InputBundle {
    std::vector<ActorInput> actors;
    uint32_t class_id = 0;  // generator-side; not serialized

    bool operator==(const InputBundle& o) const { return actors == o.actors; }
};

/// Hash of the observer-owned part of an input (sigma^A).
inline uint64_t observer_data_hash(const InputBundle& b, int observer_index) {
    const ActorInput& a = b.actors[static_cast<size_t>(observer_index)];
    uint64_t h = fnv1a(a.pages.data(), a.pages.size());
    return fnv1a(a.regs.data(), a.regs.size() * sizeof(uint64_t), h);
}

/// n_classes x n_variants bundles: within a class the observer's pages and
/// registers are byte-identical (sigma^A_1 = sigma^A_2 by construction),
/// victim material is independently random per variant.
inline std::vector<InputBundle> generate_inputs(const CampaignConfig& cfg, unsigned n_classes,
                                                unsigned n_variants, uint64_t seed) {
    if (n_classes * n_variants < 2)
        throw std::runtime_error("need at least two input bundles (classes*variants >= 2)");
    const int obs = cfg.observer_index();
    if (obs < 0) throw std::runtime_error("config has no observer");

    auto draw_actor = [](Rng& rng) {
        ActorInput a;
        a.pages.resize(kDataPages * kPageSize);
        rng.fill_bytes(a.pages.begin(), a.pages.end());
        for (auto& r : a.regs) r = rng.next_u64();
        return a;
    };

    std::vector<InputBundle> out;
    out.reserve(n_classes * n_variants);
    for (unsigned c = 0; c < n_classes; ++c) {
        Rng class_rng(derive_seed(seed, 0x10000 + c));
        ActorInput observer_material = draw_actor(class_rng);
        for (unsigned v = 0; v < n_variants; ++v) {
            Rng var_rng(derive_seed(seed, 0x20000 + c * n_variants + v));
            InputBundle b;
            b.class_id = c;
            for (size_t a = 0; a < cfg.actors.size(); ++a)
                b.actors.push_back(static_cast<int>(a) == obs ? observer_material
                                                              : draw_actor(var_rng));
            out.push_back(std::move(b));
        }
    }
    return out;
}

/// Per-actor disassembly of a program, used in violation reports.
inline std::string disassemble(const Program& prog) {
    std::string out;
    for (size_t a = 0; a < prog.actors.size(); ++a) {
        out += ".section ." + prog.actors[a].name + "\n";
        for (size_t s = 0; s < prog.actors[a].code.size(); ++s) {
            char off[16];
            std::snprintf(off, sizeof(off), "%04zx", s * kInstrBytes);
            std::string note;
            for (const auto& m : prog.macros)
                if (m.owner == a && m.offset == s * kInstrBytes)
                    note = "    # macro " + std::string(macro_by_id(m.id)->name);
            out += std::string(off) + ": " + format_instruction(prog.actors[a].code[s]) + note +
                   "\n";
        }
    }
    return out;
}

}  // namespace ilk
