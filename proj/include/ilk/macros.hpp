#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace ilk {

enum class MacroId : uint16_t {
    RandomInstructions = 1,
    MeasurementStart,
    MeasurementEnd,
    SwitchH2G,
    SwitchG2H,
    SetH2GTarget,
    SetG2HTarget,
    SwitchK2U,
    SwitchU2K,
    SetK2UTarget,
    SetU2KTarget,
    FaultHandler,
    FlushBuffers,
    FlushL1D,
    FullCacheFlush,
    DummyDiv,
};

enum class MacroArgKind : uint8_t { None, Int, Label };

struct MacroInfo {
    std::string_view name;
    MacroId id;
    MacroArgKind arg;
};

inline const std::array<MacroInfo, 16>& macro_catalog() {
    static const std::array<MacroInfo, 16> t{{
        {"random_instructions", MacroId::RandomInstructions, MacroArgKind::Int},
        {"measurement_start", MacroId::MeasurementStart, MacroArgKind::None},
        {"measurement_end", MacroId::MeasurementEnd, MacroArgKind::None},
        {"switch_h2g", MacroId::SwitchH2G, MacroArgKind::None},
        {"switch_g2h", MacroId::SwitchG2H, MacroArgKind::None},
        {"set_h2g_target", MacroId::SetH2GTarget, MacroArgKind::Label},
        {"set_g2h_target", MacroId::SetG2HTarget, MacroArgKind::Label},
        {"switch_k2u", MacroId::SwitchK2U, MacroArgKind::None},
        {"switch_u2k", MacroId::SwitchU2K, MacroArgKind::None},
        {"set_k2u_target", MacroId::SetK2UTarget, MacroArgKind::Label},
        {"set_u2k_target", MacroId::SetU2KTarget, MacroArgKind::Label},
        {"fault_handler", MacroId::FaultHandler, MacroArgKind::None},
        {"flush_buffers", MacroId::FlushBuffers, MacroArgKind::None},
        {"flush_l1d", MacroId::FlushL1D, MacroArgKind::None},
        {"full_cache_flush", MacroId::FullCacheFlush, MacroArgKind::None},
        {"dummy_div", MacroId::DummyDiv, MacroArgKind::None},
    }};
    return t;
}

inline const MacroInfo* macro_by_name(std::string_view name) {
    for (const auto& m : macro_catalog())
        if (m.name == name) return &m;
    return nullptr;
}

inline const MacroInfo* macro_by_id(MacroId id) {
    for (const auto& m : macro_catalog())
        if (m.id == id) return &m;
    return nullptr;
}

inline bool is_switch_macro(MacroId id) {
    return id == MacroId::SwitchH2G || id == MacroId::SwitchG2H || id == MacroId::SwitchK2U ||
           id == MacroId::SwitchU2K;
}

inline bool is_set_target_macro(MacroId id) {
    return id == MacroId::SetH2GTarget || id == MacroId::SetG2HTarget ||
           id == MacroId::SetK2UTarget || id == MacroId::SetU2KTarget;
}

}  // namespace ilk
