#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <vector>

#include "ilk/arch.hpp"
#include "ilk/generator.hpp"
#include "ilk/package.hpp"
#include "ilk/paging.hpp"

namespace ilk {

// Pieces shared verbatim by the simulator and the leakage model, so the
// architectural paths of the two cannot drift apart.

struct TransitionTarget {
    uint16_t actor = 0;
    uint32_t offset = 0;
};

struct TransitionTargets {
    std::optional<TransitionTarget> h2g, g2h, k2u, u2k;

    std::optional<TransitionTarget>& for_switch(MacroId id) {
        switch (id) {
            case MacroId::SwitchH2G:
                return h2g;
            case MacroId::SwitchG2H:
                return g2h;
            case MacroId::SwitchK2U:
                return k2u;
            default:
                return u2k;
        }
    }
};

/// set_*_target macros are pre-registered from the macro table in program
/// order (first entry of each kind wins), then updated when executed.
inline TransitionTargets initial_targets(const std::vector<MacroSite>& macros) {
    TransitionTargets t;
    for (const auto& m : macros) {
        std::optional<TransitionTarget>* slot = nullptr;
        switch (m.id) {
            case MacroId::SetH2GTarget:
                slot = &t.h2g;
                break;
            case MacroId::SetG2HTarget:
                slot = &t.g2h;
                break;
            case MacroId::SetK2UTarget:
                slot = &t.k2u;
                break;
            case MacroId::SetU2KTarget:
                slot = &t.u2k;
                break;
            default:
                break;
        }
        if (slot && !slot->has_value())
            *slot = TransitionTarget{static_cast<uint16_t>(m.arg0),
                                     static_cast<uint32_t>(m.arg1)};
    }
    return t;
}

inline std::optional<TransitionTarget> target_of_set_macro(const MacroSite& m) {
    return TransitionTarget{static_cast<uint16_t>(m.arg0), static_cast<uint32_t>(m.arg1)};
}

/// Termination geometry: a transition that lands exactly on main's
/// fault_handler slot (or at/past the end of main's code) ends the test
/// case; fault delivery to the same slot continues executing there.
struct HarnessGeometry {
    int main_actor = 0;
    std::optional<uint32_t> fault_handler_offset;
    std::vector<uint32_t> code_len;

    bool is_exit_target(uint16_t actor, uint32_t offset) const {
        if (static_cast<int>(actor) != main_actor) return false;
        if (offset >= code_len[static_cast<size_t>(actor)]) return true;
        return fault_handler_offset && offset == *fault_handler_offset;
    }
};

inline HarnessGeometry make_geometry(const TestCasePackage& pkg) {
    HarnessGeometry g;
    g.main_actor = pkg.main_index();
    if (g.main_actor < 0) throw PackageError("package has no host-kernel main actor");
    for (const auto& c : pkg.code) g.code_len.push_back(static_cast<uint32_t>(c.size()));
    for (const auto& m : pkg.macros)
        if (m.id == MacroId::FaultHandler && static_cast<int>(m.owner) == g.main_actor)
            g.fault_handler_offset = m.offset;
    return g;
}

// ---- physical memory with translation ----

struct MemAccessOutcome {
    bool ok = false;
    uint64_t value = 0;
    Fault fault;
    std::optional<Fault> assist;
    // touch points for the cache layer
    uint64_t phys1 = 0;
    uint32_t n1 = 0;
    uint64_t phys2 = 0;
    uint32_t n2 = 0;
    bool leak_known = false;
    uint64_t leak_phys = 0;
};

/// One 8-byte access through an actor's page tables, split across pages when
/// it crosses a boundary. Writes happen only when every translation passes.
inline MemAccessOutcome access_memory(const AddressSpace& as, Privilege priv,
                                      std::vector<uint8_t>& phys, uint64_t va, Access acc,
                                      uint64_t store_value, bool do_write) {
    MemAccessOutcome out;
    const uint64_t off = va & (kPageSize - 1);
    const uint32_t first = off <= kPageSize - 8 ? 8u : static_cast<uint32_t>(kPageSize - off);

    Translation t1 = translate(as, va, acc, priv);
    out.leak_known = t1.leak_frame_known;
    out.leak_phys = t1.leak_phys;
    if (!t1.ok) {
        out.fault = t1.fault;
        return out;
    }
    Translation t2;
    if (first < 8) {
        t2 = translate(as, va + first, acc, priv);
        if (!t2.ok) {
            out.fault = t2.fault;
            return out;
        }
    }
    out.assist = t1.assist ? t1.assist : (first < 8 ? t2.assist : std::nullopt);
    out.phys1 = t1.phys;
    out.n1 = first;
    if (first < 8) {
        out.phys2 = t2.phys;
        out.n2 = 8 - first;
    }
    if (do_write) {
        for (uint32_t i = 0; i < first; ++i)
            phys[out.phys1 + i] = static_cast<uint8_t>(store_value >> (8 * i));
        for (uint32_t i = 0; i < out.n2; ++i)
            phys[out.phys2 + i] = static_cast<uint8_t>(store_value >> (8 * (first + i)));
    } else {
        uint64_t v = 0;
        for (uint32_t i = 0; i < first; ++i)
            v |= static_cast<uint64_t>(phys[out.phys1 + i]) << (8 * i);
        for (uint32_t i = 0; i < out.n2; ++i)
            v |= static_cast<uint64_t>(phys[out.phys2 + i]) << (8 * (first + i));
        out.value = v;
    }
    out.ok = true;
    return out;
}

/// Privileged registers hold victim-secret material: the first 64 bytes of
/// main's first data page, loaded per input.
inline std::array<uint64_t, 8> priv_regs_from_input(const TestCasePackage& pkg,
                                                    const InputBundle& input) {
    std::array<uint64_t, 8> regs{};
    const int main_idx = pkg.main_index();
    const auto& page0 = input.actors[static_cast<size_t>(main_idx)].pages;
    for (unsigned i = 0; i < 8; ++i) {
        uint64_t v = 0;
        for (unsigned b = 0; b < 8; ++b) v |= static_cast<uint64_t>(page0[i * 8 + b]) << (8 * b);
        regs[i] = v;
    }
    return regs;
}

inline std::map<std::pair<uint16_t, uint32_t>, size_t> macro_site_map(
    const std::vector<MacroSite>& macros) {
    std::map<std::pair<uint16_t, uint32_t>, size_t> m;
    for (size_t i = 0; i < macros.size(); ++i) m[{macros[i].owner, macros[i].offset}] = i;
    return m;
}

/// Fill the physical frames for one run: code from the given images, data
/// pages from the input, probe pages zeroed.
inline void load_physical_memory(std::vector<uint8_t>& phys,
                                 const std::vector<std::vector<uint8_t>>& code,
                                 const InputBundle& input) {
    std::fill(phys.begin(), phys.end(), 0);
    for (size_t a = 0; a < code.size(); ++a) {
        const uint64_t base = static_cast<uint64_t>(frame_of(a, 0)) * kPageSize;
        std::copy(code[a].begin(), code[a].end(), phys.begin() + static_cast<long>(base));
        const auto& pages = input.actors[a].pages;
        std::copy(pages.begin(), pages.end(),
                  phys.begin() + static_cast<long>(base + kPageSize));
    }
}

}  // namespace ilk
