#pragma once

#include <array>
#include <cstdint>
#include <cstring>
#include <stdexcept>
#include <string>
#include <vector>

#include "ilk/generator.hpp"
#include "ilk/paging.hpp"
#include "ilk/rng.hpp"

namespace ilk {

// Custom binary package format (little-endian, fixed-size table rows):
//   "ILK1" | u16 version | u16 n_actors | u32 n_macros | u32 n_inputs
//   actor rows:  name hash u64, mode u8, priv u8, observer u8, pad u8,
//                16 x u16 page override bitmask
//   macro rows:  owner u16, offset u32, macro_id u16, arg0 i32, arg1 i32
//   per actor:   code length u32, code bytes
//   per input:   per actor: 3*4096 data bytes, 6 x u64 registers

constexpr char kPackageMagic[4] = {'I', 'L', 'K', '1'};
constexpr uint16_t kPackageVersion = 1;

struct PackageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ActorMeta {
    uint64_t name_hash = 0;
    Mode mode = Mode::Host;
    Privilege privilege = Privilege::Kernel;
    bool observer = false;
    std::array<uint16_t, kVaPages> page_overrides{};

    bool operator==(const ActorMeta&) const = default;
};

struct TestCasePackage {
    uint16_t version = kPackageVersion;
    std::vector<ActorMeta> actors;
    std::vector<MacroSite> macros;
    std::vector<std::vector<uint8_t>> code;  // one blob per actor, 8-byte slots
    std::vector<InputBundle> inputs;

    bool operator==(const TestCasePackage&) const = default;

    int main_index() const {
        for (size_t i = 0; i < actors.size(); ++i)
            if (actors[i].mode == Mode::Host && actors[i].privilege == Privilege::Kernel)
                return static_cast<int>(i);
        return -1;
    }
    int observer_index() const {
        for (size_t i = 0; i < actors.size(); ++i)
            if (actors[i].observer) return static_cast<int>(i);
        return -1;
    }
    // execution enters the first actor (first template section) at offset 0
    uint16_t entry_actor() const { return 0; }
};

inline std::vector<ActorLayoutInfo> to_layout_info(const TestCasePackage& pkg) {
    std::vector<ActorLayoutInfo> out;
    out.reserve(pkg.actors.size());
    for (const auto& a : pkg.actors) out.push_back({a.mode, a.privilege, a.page_overrides});
    return out;
}

/// Combine program, config and inputs into a package value. The actor
/// metadata mirrors the campaign config; kernel-isolation knobs are encoded
/// as override bits on the user actors' kernel-view pages so the leakage
/// model sees the same fault behavior from the package alone.
inline TestCasePackage build_package(const Program& prog, const CampaignConfig& cfg,
                                     std::vector<InputBundle> inputs) {
    TestCasePackage pkg;
    for (const auto& ac : prog.actors) {
        const ActorConfig* a = cfg.find_actor(ac.name);
        if (!a) throw PackageError("program actor '" + ac.name + "' missing from config");
        ActorMeta meta;
        meta.name_hash = fnv1a_str(a->name);
        meta.mode = a->mode;
        meta.privilege = a->privilege;
        meta.observer = a->observer;
        for (unsigned d = 0; d < kDataPages; ++d)
            meta.page_overrides[kPageData0 + d] = a->data_overrides;
        if (a->mode == Mode::Host && a->privilege == Privilege::User) {
            uint16_t kpti = 0;
            if (cfg.executor.kernel_isolation == KernelIsolation::PBitClear)
                kpti = kOvClearPresent;
            else if (cfg.executor.kernel_isolation == KernelIsolation::Unmap)
                kpti = kOvUnmap;
            for (unsigned d = 0; d < kDataPages; ++d)
                meta.page_overrides[kPageMainView0 + d] = kpti;
        }
        pkg.actors.push_back(meta);

        std::vector<uint8_t> bytes(ac.code.size() * kInstrBytes);
        for (size_t i = 0; i < ac.code.size(); ++i)
            encode_instruction(ac.code[i], bytes.data() + i * kInstrBytes);
        pkg.code.push_back(std::move(bytes));
    }
    for (const auto& m : prog.macros) {
        if (m.owner >= pkg.actors.size() || m.offset + kInstrBytes > pkg.code[m.owner].size())
            throw PackageError("macro table entry out of range");
        pkg.macros.push_back(m);
    }
    for (auto& b : inputs) {
        if (b.actors.size() != pkg.actors.size())
            throw PackageError("input bundle actor count mismatch");
        pkg.inputs.push_back(std::move(b));
    }
    return pkg;
}

namespace pack_detail {

struct Writer {
    std::vector<uint8_t> out;
    void u8(uint8_t v) { out.push_back(v); }
    void u16(uint16_t v) {
        out.push_back(v & 0xff);
        out.push_back(v >> 8);
    }
    void u32(uint32_t v) {
        for (int i = 0; i < 4; ++i) out.push_back((v >> (8 * i)) & 0xff);
    }
    void u64(uint64_t v) {
        for (int i = 0; i < 8; ++i) out.push_back((v >> (8 * i)) & 0xff);
    }
    void i32(int32_t v) { u32(static_cast<uint32_t>(v)); }
    void bytes(const uint8_t* p, size_t n) { out.insert(out.end(), p, p + n); }
};

struct Reader {
    const uint8_t* p;
    size_t len;
    size_t pos = 0;
    void need(size_t n) {
        if (pos + n > len) throw PackageError("truncated package");
    }
    uint8_t u8() {
        need(1);
        return p[pos++];
    }
    uint16_t u16() {
        need(2);
        uint16_t v = static_cast<uint16_t>(p[pos] | (p[pos + 1] << 8));
        pos += 2;
        return v;
    }
    uint32_t u32() {
        need(4);
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(p[pos + i]) << (8 * i);
        pos += 4;
        return v;
    }
    uint64_t u64() {
        need(8);
        uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(p[pos + i]) << (8 * i);
        pos += 8;
        return v;
    }
    int32_t i32() { return static_cast<int32_t>(u32()); }
    void bytes(uint8_t* dst, size_t n) {
        need(n);
        std::memcpy(dst, p + pos, n);
        pos += n;
    }
};

}  // namespace pack_detail

inline std::vector<uint8_t> serialize_package(const TestCasePackage& pkg) {
    pack_detail::Writer w;
    w.bytes(reinterpret_cast<const uint8_t*>(kPackageMagic), 4);
    w.u16(pkg.version);
    w.u16(static_cast<uint16_t>(pkg.actors.size()));
    w.u32(static_cast<uint32_t>(pkg.macros.size()));
    w.u32(static_cast<uint32_t>(pkg.inputs.size()));
    for (const auto& a : pkg.actors) {
        w.u64(a.name_hash);
        w.u8(static_cast<uint8_t>(a.mode));
        w.u8(static_cast<uint8_t>(a.privilege));
        w.u8(a.observer ? 1 : 0);
        w.u8(0);
        for (uint16_t ov : a.page_overrides) w.u16(ov);
    }
    for (const auto& m : pkg.macros) {
        w.u16(m.owner);
        w.u32(m.offset);
        w.u16(static_cast<uint16_t>(m.id));
        w.i32(m.arg0);
        w.i32(m.arg1);
    }
    for (const auto& c : pkg.code) {
        w.u32(static_cast<uint32_t>(c.size()));
        w.bytes(c.data(), c.size());
    }
    for (const auto& in : pkg.inputs)
        for (const auto& a : in.actors) {
            w.bytes(a.pages.data(), a.pages.size());
            for (uint64_t r : a.regs) w.u64(r);
        }
    return w.out;
}

inline std::vector<uint8_t> assemble_package(const Program& prog, const CampaignConfig& cfg,
                                             std::vector<InputBundle> inputs) {
    return serialize_package(build_package(prog, cfg, std::move(inputs)));
}

inline TestCasePackage load_package(const std::vector<uint8_t>& bytes) {
    pack_detail::Reader r{bytes.data(), bytes.size()};
    char magic[4];
    r.bytes(reinterpret_cast<uint8_t*>(magic), 4);
    if (std::memcmp(magic, kPackageMagic, 4) != 0) throw PackageError("bad package magic");
    TestCasePackage pkg;
    pkg.version = r.u16();
    if (pkg.version != kPackageVersion)
        throw PackageError("unsupported package version " + std::to_string(pkg.version));
    const uint16_t n_actors = r.u16();
    const uint32_t n_macros = r.u32();
    const uint32_t n_inputs = r.u32();
    if (n_actors == 0 || n_actors > 8) throw PackageError("implausible actor count");
    if (n_macros > 4096) throw PackageError("implausible macro count");
    if (n_inputs > 1000000) throw PackageError("implausible input count");

    for (unsigned i = 0; i < n_actors; ++i) {
        ActorMeta a;
        a.name_hash = r.u64();
        uint8_t mode = r.u8(), priv = r.u8(), obs = r.u8();
        r.u8();  // pad
        if (mode > 1 || priv > 1) throw PackageError("bad actor mode/privilege");
        a.mode = static_cast<Mode>(mode);
        a.privilege = static_cast<Privilege>(priv);
        a.observer = obs != 0;
        for (auto& ov : a.page_overrides) ov = r.u16();
        pkg.actors.push_back(a);
    }
    for (unsigned i = 0; i < n_macros; ++i) {
        MacroSite m;
        m.owner = r.u16();
        m.offset = r.u32();
        uint16_t id = r.u16();
        m.arg0 = r.i32();
        m.arg1 = r.i32();
        if (m.owner >= n_actors) throw PackageError("macro owner out of range");
        if (!macro_by_id(static_cast<MacroId>(id))) throw PackageError("unknown macro id");
        m.id = static_cast<MacroId>(id);
        pkg.macros.push_back(m);
    }
    for (unsigned i = 0; i < n_actors; ++i) {
        uint32_t len = r.u32();
        if (len % kInstrBytes != 0 || len > kPageSize)
            throw PackageError("bad code length for actor " + std::to_string(i));
        std::vector<uint8_t> c(len);
        r.bytes(c.data(), len);
        pkg.code.push_back(std::move(c));
    }
    for (const auto& m : pkg.macros)
        if (m.offset + kInstrBytes > pkg.code[m.owner].size())
            throw PackageError("macro offset out of range");
    for (unsigned i = 0; i < n_inputs; ++i) {
        InputBundle b;
        for (unsigned a = 0; a < n_actors; ++a) {
            ActorInput ai;
            ai.pages.resize(kDataPages * kPageSize);
            r.bytes(ai.pages.data(), ai.pages.size());
            for (auto& reg : ai.regs) reg = r.u64();
            b.actors.push_back(std::move(ai));
        }
        pkg.inputs.push_back(std::move(b));
    }
    if (r.pos != bytes.size()) throw PackageError("trailing bytes after package");
    return pkg;
}

}  // namespace ilk
