#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>

#include "ilk/isa.hpp"

namespace ilk {

enum class Mode : uint8_t { Host = 0, Guest = 1 };
enum class Privilege : uint8_t { Kernel = 0, User = 1 };

using ActorId = uint16_t;

// ---- faults ----

enum class FaultKind : uint8_t { PageFault, GeneralProtection, DivByZero, VmExit, Assist };

enum class PageBit : uint8_t { Present, Reserved, User, Writable };
enum class AssistBit : uint8_t { Accessed, Dirty, NestedAccessed, NestedDirty };
enum class VmExitBit : uint8_t { NestedPresent, NestedReserved, NestedWritable, PrivilegedInstruction };

struct Fault {
    FaultKind kind = FaultKind::PageFault;
    // reason payload; which member is live depends on kind
    PageBit page_bit = PageBit::Present;
    AssistBit assist_bit = AssistBit::Accessed;
    VmExitBit vmexit_bit = VmExitBit::NestedPresent;

    static Fault page(PageBit b) {
        Fault f;
        f.kind = FaultKind::PageFault;
        f.page_bit = b;
        return f;
    }
    static Fault gp() {
        Fault f;
        f.kind = FaultKind::GeneralProtection;
        return f;
    }
    static Fault div0() {
        Fault f;
        f.kind = FaultKind::DivByZero;
        return f;
    }
    static Fault vmexit(VmExitBit b) {
        Fault f;
        f.kind = FaultKind::VmExit;
        f.vmexit_bit = b;
        return f;
    }
    static Fault assist(AssistBit b) {
        Fault f;
        f.kind = FaultKind::Assist;
        f.assist_bit = b;
        return f;
    }

    bool operator==(const Fault&) const = default;
};

inline std::string to_string(const Fault& f) {
    switch (f.kind) {
        case FaultKind::GeneralProtection:
            return "#GP";
        case FaultKind::DivByZero:
            return "#DE";
        case FaultKind::PageFault:
            switch (f.page_bit) {
                case PageBit::Present:
                    return "#PF(P)";
                case PageBit::Reserved:
                    return "#PF(R)";
                case PageBit::User:
                    return "#PF(U)";
                case PageBit::Writable:
                    return "#PF(W)";
            }
            return "#PF";
        case FaultKind::VmExit:
            switch (f.vmexit_bit) {
                case VmExitBit::NestedPresent:
                    return "#VMEXIT(P)";
                case VmExitBit::NestedReserved:
                    return "#VMEXIT(R)";
                case VmExitBit::NestedWritable:
                    return "#VMEXIT(W)";
                case VmExitBit::PrivilegedInstruction:
                    return "#VMEXIT(PRIV)";
            }
            return "#VMEXIT";
        case FaultKind::Assist:
            switch (f.assist_bit) {
                case AssistBit::Accessed:
                    return "assist(A)";
                case AssistBit::Dirty:
                    return "assist(D)";
                case AssistBit::NestedAccessed:
                    return "assist(nA)";
                case AssistBit::NestedDirty:
                    return "assist(nD)";
            }
            return "assist";
    }
    return "?";
}

// ---- architectural state ----

struct Flags {
    bool zero = false;
    bool carry = false;
    bool sign = false;

    bool operator==(const Flags&) const = default;

    bool eval(Cond c) const {
        switch (c) {
            case Cond::Al:
                return true;
            case Cond::Z:
                return zero;
            case Cond::Nz:
                return !zero;
            case Cond::C:
                return carry;
            case Cond::Nc:
                return !carry;
            case Cond::S:
                return sign;
            case Cond::Ns:
                return !sign;
        }
        return false;
    }
};

struct ArchState {
    std::array<uint64_t, kNumRegs> gprs{};
    Flags flags;
    ActorId current_actor = 0;
    uint64_t pc = 0;  // byte offset within the current actor's code page
    Mode mode = Mode::Host;
    Privilege privilege = Privilege::Kernel;

    bool operator==(const ArchState&) const = default;
};

// ---- single-step execution ----

/// Memory/privilege environment a step executes against. The simulator backs
/// this with the MMU + microarchitectural side effects; the leakage model
/// backs it with package metadata. Accessors must be deterministic.
struct StepEnv {
    struct LoadResult {
        bool ok = false;
        uint64_t value = 0;
        Fault fault;  // valid when !ok
    };
    virtual ~StepEnv() = default;
    virtual LoadResult load(uint64_t va) = 0;
    virtual std::optional<Fault> store(uint64_t va, uint64_t value) = 0;
    virtual uint64_t priv_reg(unsigned id) = 0;
    virtual bool priv_read_disabled() const { return false; }
};

enum class MemKind : uint8_t { None, Load, Store };

struct StepOutcome {
    std::optional<Fault> fault;  // hard fault; state unchanged
    MemKind mem = MemKind::None;
    uint64_t mem_va = 0;
    bool branch_taken = false;
    uint64_t branch_target = 0;
};

/// Pure architectural semantics of one instruction. On success mutates
/// `st` (registers, flags, pc) and reports memory/control-flow observations;
/// on a hard fault leaves `st` untouched. Assists never surface here: they
/// are reported by the environment, not by the architecture.
inline StepOutcome arch_step(ArchState& st, const Instruction& in, StepEnv& env) {
    StepOutcome out;
    const uint64_t next_pc = st.pc + kInstrBytes;

    auto src_value = [&]() -> uint64_t {
        return in.src == kImmOperand ? in.imm : st.gprs[in.src];
    };
    auto set_zs = [&](uint64_t r) {
        st.flags.zero = (r == 0);
        st.flags.sign = (r >> 63) & 1;
    };

    switch (in.op) {
        case Opcode::Add: {
            uint64_t a = st.gprs[in.dst], b = src_value();
            uint64_t r = a + b;
            st.gprs[in.dst] = r;
            set_zs(r);
            st.flags.carry = r < a;
            break;
        }
        case Opcode::Sub:
        case Opcode::Cmp: {
            uint64_t a = st.gprs[in.dst], b = src_value();
            uint64_t r = a - b;
            if (in.op == Opcode::Sub) st.gprs[in.dst] = r;
            set_zs(r);
            st.flags.carry = a < b;  // borrow
            break;
        }
        case Opcode::And:
        case Opcode::Or:
        case Opcode::Xor: {
            uint64_t a = st.gprs[in.dst], b = src_value();
            uint64_t r = in.op == Opcode::And ? (a & b) : in.op == Opcode::Or ? (a | b) : (a ^ b);
            st.gprs[in.dst] = r;
            set_zs(r);
            st.flags.carry = false;
            break;
        }
        case Opcode::Shl:
        case Opcode::Shr: {
            // Shift amount is the full source value; >= 64 shifts out to zero.
            uint64_t a = st.gprs[in.dst], n = src_value();
            uint64_t r = n >= 64 ? 0 : (in.op == Opcode::Shl ? a << n : a >> n);
            st.gprs[in.dst] = r;
            set_zs(r);
            st.flags.carry = false;
            break;
        }
        case Opcode::Mul: {
            uint64_t r = st.gprs[in.dst] * src_value();
            st.gprs[in.dst] = r;
            set_zs(r);
            st.flags.carry = false;
            break;
        }
        case Opcode::Div: {
            uint64_t b = src_value();
            if (b == 0) {
                out.fault = Fault::div0();
                return out;
            }
            uint64_t r = st.gprs[in.dst] / b;
            st.gprs[in.dst] = r;
            set_zs(r);
            st.flags.carry = false;
            break;
        }
        case Opcode::Cmov:
            if (st.flags.eval(in.cond)) st.gprs[in.dst] = src_value();
            break;
        case Opcode::Load: {
            uint64_t va = st.gprs[in.src] + in.disp;
            out.mem = MemKind::Load;
            out.mem_va = va;
            auto r = env.load(va);
            if (!r.ok) {
                out.fault = r.fault;
                return out;
            }
            st.gprs[in.dst] = r.value;
            break;
        }
        case Opcode::Store: {
            uint64_t va = st.gprs[in.src] + in.disp;
            out.mem = MemKind::Store;
            out.mem_va = va;
            if (auto f = env.store(va, st.gprs[in.dst])) {
                out.fault = *f;
                return out;
            }
            break;
        }
        case Opcode::Br:
            if (st.flags.eval(in.cond)) {
                out.branch_taken = true;
                out.branch_target = next_pc + static_cast<int64_t>(branch_offset(in));
                st.pc = out.branch_target;
                return out;
            }
            break;
        case Opcode::Nop:
        case Opcode::Fence:
            // FENCE's microarchitectural effects belong to the executor.
            break;
        case Opcode::Rdpriv: {
            // The only privileged opcode: host-kernel only, and gated by the
            // privileged-read-disable flag. Guests trap to the hypervisor.
            if (st.mode == Mode::Guest) {
                out.fault = Fault::vmexit(VmExitBit::PrivilegedInstruction);
                return out;
            }
            if (st.privilege == Privilege::User || env.priv_read_disabled()) {
                out.fault = Fault::gp();
                return out;
            }
            st.gprs[in.dst] = env.priv_reg(in.imm % 8u);
            break;
        }
    }
    st.pc = next_pc;
    return out;
}

}  // namespace ilk
