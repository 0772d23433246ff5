#pragma once

#include <array>
#include <cstdint>
#include <cstring>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace ilk {

// Toy ISA: fixed-width 8-byte instructions, 8 GPRs (r6 = sandbox base,
// r7 = probe array base), flags {zero, carry, sign}.

enum class Opcode : uint8_t {
    Add = 1,
    Sub,
    And,
    Or,
    Xor,
    Shl,
    Shr,
    Cmp,
    Cmov,
    Mul,
    Div,
    Load,
    Store,
    Br,
    Nop,
    Fence,
    Rdpriv,
};

constexpr uint8_t kOpcodeCount = 17;
constexpr uint8_t kNumRegs = 8;
constexpr uint8_t kSandboxBaseReg = 6;
constexpr uint8_t kProbeBaseReg = 7;

/// src operand value meaning "use the 16-bit immediate field".
constexpr uint8_t kImmOperand = 0xff;

enum class Cond : uint8_t { Al = 0, Z, Nz, C, Nc, S, Ns };
constexpr uint8_t kCondCount = 7;

struct Instruction {
    Opcode op = Opcode::Nop;
    uint8_t dst = 0;   // destination register; for Store: the value register
    uint8_t src = 0;   // source register, kImmOperand, or memory base register
    Cond cond = Cond::Al;
    uint16_t disp = 0;  // Load/Store displacement; Br: relative byte offset (two's complement)
    uint16_t imm = 0;   // immediate operand; Rdpriv: privileged register id

    bool operator==(const Instruction&) const = default;
};

constexpr size_t kInstrBytes = 8;

inline bool opcode_has_src(Opcode op) {
    switch (op) {
        case Opcode::Add:
        case Opcode::Sub:
        case Opcode::And:
        case Opcode::Or:
        case Opcode::Xor:
        case Opcode::Shl:
        case Opcode::Shr:
        case Opcode::Cmp:
        case Opcode::Cmov:
        case Opcode::Mul:
        case Opcode::Div:
            return true;
        default:
            return false;
    }
}

inline bool opcode_is_mem(Opcode op) { return op == Opcode::Load || op == Opcode::Store; }

inline void encode_instruction(const Instruction& in, uint8_t out[kInstrBytes]) {
    out[0] = static_cast<uint8_t>(in.op);
    out[1] = in.dst;
    out[2] = in.src;
    out[3] = static_cast<uint8_t>(in.cond);
    out[4] = static_cast<uint8_t>(in.disp & 0xff);
    out[5] = static_cast<uint8_t>(in.disp >> 8);
    out[6] = static_cast<uint8_t>(in.imm & 0xff);
    out[7] = static_cast<uint8_t>(in.imm >> 8);
}

inline std::vector<uint8_t> encode_instruction(const Instruction& in) {
    std::vector<uint8_t> v(kInstrBytes);
    encode_instruction(in, v.data());
    return v;
}

struct DecodeError {
    std::string message;
};

/// Decode 8 bytes. Rejects unknown opcodes, out-of-range registers and
/// conditions; does not require unused fields to be zero.
inline std::optional<Instruction> decode_instruction(const uint8_t* p, size_t len,
                                                     DecodeError* err = nullptr) {
    auto fail = [&](std::string m) -> std::optional<Instruction> {
        if (err) err->message = std::move(m);
        return std::nullopt;
    };
    if (len < kInstrBytes) return fail("truncated instruction (need 8 bytes)");
    if (p[0] == 0 || p[0] > kOpcodeCount) return fail("unknown opcode " + std::to_string(p[0]));
    Instruction in;
    in.op = static_cast<Opcode>(p[0]);
    in.dst = p[1];
    in.src = p[2];
    if (p[3] >= kCondCount) return fail("bad condition " + std::to_string(p[3]));
    in.cond = static_cast<Cond>(p[3]);
    in.disp = static_cast<uint16_t>(p[4] | (p[5] << 8));
    in.imm = static_cast<uint16_t>(p[6] | (p[7] << 8));
    if (in.dst >= kNumRegs) return fail("bad register r" + std::to_string(in.dst));
    if (opcode_has_src(in.op)) {
        if (in.src >= kNumRegs && in.src != kImmOperand)
            return fail("bad source operand " + std::to_string(in.src));
    } else if (opcode_is_mem(in.op)) {
        if (in.src >= kNumRegs) return fail("bad base register " + std::to_string(in.src));
    }
    return in;
}

inline std::optional<Instruction> decode_instruction(const std::vector<uint8_t>& bytes,
                                                     DecodeError* err = nullptr) {
    return decode_instruction(bytes.data(), bytes.size(), err);
}

// Factories; unused fields stay zero so encode/decode round-trips exactly.

inline Instruction make_alu(Opcode op, uint8_t dst, uint8_t src) {
    return Instruction{op, dst, src, Cond::Al, 0, 0};
}
inline Instruction make_alu_imm(Opcode op, uint8_t dst, uint16_t imm) {
    return Instruction{op, dst, kImmOperand, Cond::Al, 0, imm};
}
inline Instruction make_cmov(Cond c, uint8_t dst, uint8_t src) {
    return Instruction{Opcode::Cmov, dst, src, c, 0, 0};
}
inline Instruction make_cmov_imm(Cond c, uint8_t dst, uint16_t imm) {
    return Instruction{Opcode::Cmov, dst, kImmOperand, c, 0, imm};
}
inline Instruction make_load(uint8_t dst, uint8_t base, uint16_t disp) {
    return Instruction{Opcode::Load, dst, base, Cond::Al, disp, 0};
}
inline Instruction make_store(uint8_t value, uint8_t base, uint16_t disp) {
    return Instruction{Opcode::Store, value, base, Cond::Al, disp, 0};
}
inline Instruction make_br(Cond c, int16_t rel) {
    return Instruction{Opcode::Br, 0, 0, c, static_cast<uint16_t>(rel), 0};
}
inline Instruction make_nop() { return Instruction{}; }
inline Instruction make_fence() { return Instruction{Opcode::Fence, 0, 0, Cond::Al, 0, 0}; }
inline Instruction make_rdpriv(uint8_t dst, uint16_t id) {
    return Instruction{Opcode::Rdpriv, dst, 0, Cond::Al, 0, id};
}

inline int16_t branch_offset(const Instruction& in) { return static_cast<int16_t>(in.disp); }

// ---- assembly text ----

struct MnemonicInfo {
    std::string_view name;
    Opcode op;
    Cond cond;
};

inline const std::array<MnemonicInfo, 28>& mnemonic_table() {
    static const std::array<MnemonicInfo, 28> t{{
        {"ADD", Opcode::Add, Cond::Al},     {"SUB", Opcode::Sub, Cond::Al},
        {"AND", Opcode::And, Cond::Al},     {"OR", Opcode::Or, Cond::Al},
        {"XOR", Opcode::Xor, Cond::Al},     {"SHL", Opcode::Shl, Cond::Al},
        {"SHR", Opcode::Shr, Cond::Al},     {"CMP", Opcode::Cmp, Cond::Al},
        {"MOV", Opcode::Cmov, Cond::Al},    {"CMOVZ", Opcode::Cmov, Cond::Z},
        {"CMOVNZ", Opcode::Cmov, Cond::Nz}, {"CMOVC", Opcode::Cmov, Cond::C},
        {"CMOVNC", Opcode::Cmov, Cond::Nc}, {"CMOVS", Opcode::Cmov, Cond::S},
        {"CMOVNS", Opcode::Cmov, Cond::Ns}, {"MUL", Opcode::Mul, Cond::Al},
        {"DIV", Opcode::Div, Cond::Al},     {"LOAD", Opcode::Load, Cond::Al},
        {"STORE", Opcode::Store, Cond::Al}, {"BRA", Opcode::Br, Cond::Al},
        {"BRZ", Opcode::Br, Cond::Z},       {"BRNZ", Opcode::Br, Cond::Nz},
        {"BRC", Opcode::Br, Cond::C},       {"BRNC", Opcode::Br, Cond::Nc},
        {"BRS", Opcode::Br, Cond::S},       {"BRNS", Opcode::Br, Cond::Ns},
        {"NOP", Opcode::Nop, Cond::Al},     {"FENCE", Opcode::Fence, Cond::Al},
    }};
    return t;
}

inline std::string mnemonic_for(Opcode op, Cond cond) {
    if (op == Opcode::Rdpriv) return "RDPRIV";
    for (const auto& m : mnemonic_table())
        if (m.op == op && (m.cond == cond || (op != Opcode::Cmov && op != Opcode::Br)))
            return std::string(m.name);
    return "?";
}

/// Canonical text form of one instruction. Branch targets are printed as
/// signed byte offsets; the template layer substitutes labels where it has them.
inline std::string format_instruction(const Instruction& in) {
    auto reg = [](uint8_t r) { return "r" + std::to_string(r); };
    std::string m = mnemonic_for(in.op, in.cond);
    switch (in.op) {
        case Opcode::Nop:
        case Opcode::Fence:
            return m;
        case Opcode::Br: {
            int16_t off = branch_offset(in);
            return m + " " + (off < 0 ? std::to_string(off) : "+" + std::to_string(off));
        }
        case Opcode::Load:
        case Opcode::Store:
            return m + " " + reg(in.dst) + ", [" + reg(in.src) +
                   (in.disp ? "+" + std::to_string(in.disp) : "") + "]";
        case Opcode::Rdpriv:
            return m + " " + reg(in.dst) + ", " + std::to_string(in.imm);
        default:
            return m + " " + reg(in.dst) + ", " +
                   (in.src == kImmOperand ? std::to_string(in.imm) : reg(in.src));
    }
}

}  // namespace ilk
