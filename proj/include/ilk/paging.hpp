#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <unordered_map>
#include <vector>

#include "ilk/arch.hpp"

namespace ilk {

// Memory geometry. Every actor owns five physical frames (code, data x3,
// probe) and sees the same virtual layout:
//
//   0x0000            code page
//   0x1000 - 0x3fff   data pages (input-initialized)
//   0x4000            probe array page (64 monitored lines)
//   0x8000 - 0xafff   main actor's data pages (host actors only, kernel-only)

constexpr uint64_t kPageSize = 4096;
constexpr uint64_t kLineSize = 64;
constexpr unsigned kProbeLines = 64;
constexpr unsigned kDataPages = 3;
constexpr unsigned kFramesPerActor = 5;
constexpr unsigned kVaPages = 16;  // override slots per actor in the package

constexpr uint64_t kVaCode = 0x0000;
constexpr uint64_t kVaData = 0x1000;
constexpr uint64_t kVaProbe = 0x4000;
constexpr uint64_t kVaMainView = 0x8000;

constexpr unsigned kPageCode = 0;
constexpr unsigned kPageData0 = 1;
constexpr unsigned kPageProbe = 4;
constexpr unsigned kPageMainView0 = 8;

// Masks used by the generator's sandboxing pass.
constexpr uint16_t kSandboxMask = 0x3fc0;  // own data+probe window, line aligned
constexpr uint16_t kCrossMask = 0x2fc0;    // main's data window, line aligned
constexpr uint16_t kMainViewBase = 0x8000;
constexpr uint16_t kMaxGenDisp = 48;

inline uint32_t frame_of(unsigned actor, unsigned region_page) {
    return static_cast<uint32_t>(actor * kFramesPerActor + region_page);
}

// ---- page tables ----

struct PageTableEntry {
    uint32_t frame = 0;
    bool present = true;
    bool writable = true;
    bool user = false;
    bool accessed = true;
    bool dirty = true;
    bool reserved = false;
};

struct NestedEntry {
    uint32_t host_frame = 0;
    bool present = true;
    bool writable = true;
    bool accessed = true;
    bool dirty = true;
    bool reserved = false;
};

// Per-page override bits carried in the package's actor rows. "Clear" bits
// flip a default-1 permission to 0; reserved is default-0 and gets set.
enum PageOverride : uint16_t {
    kOvClearPresent = 1u << 0,
    kOvClearWritable = 1u << 1,
    kOvClearUser = 1u << 2,
    kOvClearAccessed = 1u << 3,
    kOvClearDirty = 1u << 4,
    kOvSetReserved = 1u << 5,
    kOvUnmap = 1u << 6,
    kOvNestedClearPresent = 1u << 8,
    kOvNestedClearWritable = 1u << 9,
    kOvNestedClearAccessed = 1u << 10,
    kOvNestedClearDirty = 1u << 11,
    kOvNestedSetReserved = 1u << 12,
};

constexpr uint16_t kOvNestedBits = kOvNestedClearPresent | kOvNestedClearWritable |
                                   kOvNestedClearAccessed | kOvNestedClearDirty |
                                   kOvNestedSetReserved;

struct AddressSpace {
    Mode mode = Mode::Host;
    Privilege privilege = Privilege::Kernel;
    std::array<std::optional<PageTableEntry>, kVaPages> pt;
    // guest-physical frame -> nested translation (guest actors)
    std::unordered_map<uint32_t, NestedEntry> nested;
};

enum class Access : uint8_t { Read, Write, Exec };

struct Translation {
    bool ok = false;
    uint64_t phys = 0;               // valid when ok
    Fault fault;                     // valid when !ok
    std::optional<Fault> assist;     // may accompany a successful translation
    bool leak_frame_known = false;   // first-level PTE frame was available
    uint64_t leak_phys = 0;          // frame*page + offset; for guests this is the
                                     // guest-physical address read as host-physical
};

/// Walk one actor's tables for a single byte address. Fault priority within
/// a level: not-present > reserved > privilege > write; guest-level outcomes
/// take precedence over nested-level ones, and at most one assist is reported.
inline Translation translate(const AddressSpace& as, uint64_t va, Access acc, Privilege priv) {
    Translation t;
    const uint64_t page = va >> 12;
    const uint64_t off = va & (kPageSize - 1);
    if (page >= kVaPages || !as.pt[page]) {
        t.fault = Fault::page(PageBit::Present);
        return t;
    }
    const PageTableEntry& e = *as.pt[page];
    t.leak_frame_known = true;
    t.leak_phys = static_cast<uint64_t>(e.frame) * kPageSize + off;

    if (!e.present) {
        t.fault = Fault::page(PageBit::Present);
        return t;
    }
    if (e.reserved) {
        t.fault = Fault::page(PageBit::Reserved);
        return t;
    }
    if (priv == Privilege::User && !e.user) {
        t.fault = Fault::page(PageBit::User);
        return t;
    }
    if (acc == Access::Write && !e.writable) {
        t.fault = Fault::page(PageBit::Writable);
        return t;
    }
    std::optional<Fault> assist;
    if (!e.accessed)
        assist = Fault::assist(AssistBit::Accessed);
    else if (acc == Access::Write && !e.dirty)
        assist = Fault::assist(AssistBit::Dirty);

    if (as.mode == Mode::Guest) {
        auto it = as.nested.find(e.frame);
        if (it == as.nested.end()) {
            t.fault = Fault::vmexit(VmExitBit::NestedPresent);
            return t;
        }
        const NestedEntry& n = it->second;
        if (!n.present) {
            t.fault = Fault::vmexit(VmExitBit::NestedPresent);
            return t;
        }
        if (n.reserved) {
            t.fault = Fault::vmexit(VmExitBit::NestedReserved);
            return t;
        }
        if (acc == Access::Write && !n.writable) {
            t.fault = Fault::vmexit(VmExitBit::NestedWritable);
            return t;
        }
        if (!assist) {
            if (!n.accessed)
                assist = Fault::assist(AssistBit::NestedAccessed);
            else if (acc == Access::Write && !n.dirty)
                assist = Fault::assist(AssistBit::NestedDirty);
        }
        t.phys = static_cast<uint64_t>(n.host_frame) * kPageSize + off;
    } else {
        t.phys = t.leak_phys;
    }
    t.ok = true;
    t.assist = assist;
    return t;
}

// ---- building the spaces ----

struct ActorLayoutInfo {
    Mode mode = Mode::Host;
    Privilege privilege = Privilege::Kernel;
    std::array<uint16_t, kVaPages> overrides{};
};

inline void apply_override(PageTableEntry& e, uint16_t bits) {
    if (bits & kOvClearPresent) e.present = false;
    if (bits & kOvClearWritable) e.writable = false;
    if (bits & kOvClearUser) e.user = false;
    if (bits & kOvClearAccessed) e.accessed = false;
    if (bits & kOvClearDirty) e.dirty = false;
    if (bits & kOvSetReserved) e.reserved = true;
}

inline void apply_nested_override(NestedEntry& n, uint16_t bits) {
    if (bits & kOvNestedClearPresent) n.present = false;
    if (bits & kOvNestedClearWritable) n.writable = false;
    if (bits & kOvNestedClearAccessed) n.accessed = false;
    if (bits & kOvNestedClearDirty) n.dirty = false;
    if (bits & kOvNestedSetReserved) n.reserved = true;
}

inline unsigned find_main_actor(const std::vector<ActorLayoutInfo>& actors) {
    int main_idx = -1;
    for (size_t i = 0; i < actors.size(); ++i) {
        if (actors[i].mode == Mode::Host && actors[i].privilege == Privilege::Kernel) {
            if (main_idx >= 0) throw std::runtime_error("multiple host-kernel actors");
            main_idx = static_cast<int>(i);
        }
    }
    if (main_idx < 0) throw std::runtime_error("no host-kernel main actor");
    return static_cast<unsigned>(main_idx);
}

/// Build one address space per actor. With memory aliasing on, every guest
/// maps its pages at guest-physical frames equal to main's host frames, and
/// its nested table remaps them to the guest's private frames.
inline std::vector<AddressSpace> build_address_spaces(const std::vector<ActorLayoutInfo>& actors,
                                                      bool memory_aliasing) {
    const unsigned main_idx = find_main_actor(actors);
    std::vector<AddressSpace> spaces(actors.size());
    for (unsigned a = 0; a < actors.size(); ++a) {
        const ActorLayoutInfo& info = actors[a];
        AddressSpace& as = spaces[a];
        as.mode = info.mode;
        as.privilege = info.privilege;
        const bool is_guest = info.mode == Mode::Guest;

        for (unsigned r = 0; r < kFramesPerActor; ++r) {
            if (!is_guest && (info.overrides[r] & kOvNestedBits))
                throw std::runtime_error("nested page override on a host actor");
            if (info.overrides[r] & kOvUnmap) continue;
            PageTableEntry e;
            e.user = info.privilege == Privilege::User;
            if (is_guest) {
                const uint32_t gpa = memory_aliasing ? frame_of(main_idx, r) : frame_of(a, r);
                e.frame = gpa;
                NestedEntry n;
                n.host_frame = frame_of(a, r);
                apply_nested_override(n, info.overrides[r]);
                as.nested[gpa] = n;
            } else {
                e.frame = frame_of(a, r);
            }
            apply_override(e, info.overrides[r]);
            as.pt[r] = e;
        }
        // Host actors additionally see main's data pages, supervisor-only.
        if (!is_guest) {
            for (unsigned d = 0; d < kDataPages; ++d) {
                const unsigned page = kPageMainView0 + d;
                if (info.overrides[page] & kOvNestedBits)
                    throw std::runtime_error("nested page override on a host actor");
                if (info.overrides[page] & kOvUnmap) continue;
                PageTableEntry e;
                e.frame = frame_of(main_idx, 1 + d);
                e.user = false;
                apply_override(e, info.overrides[page]);
                as.pt[page] = e;
            }
        }
    }
    return spaces;
}

}  // namespace ilk
