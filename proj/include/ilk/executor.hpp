#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <unordered_map>
#include <vector>

#include "ilk/config.hpp"
#include "ilk/harness.hpp"
#include "ilk/model.hpp"
#include "ilk/rng.hpp"

namespace ilk {

// The simulated CPU under test: Measure(p, sigma, mu). Loads a package,
// builds per-actor address spaces, instantiates macros by binary patching,
// and executes with injectable transient-execution bugs, emitting
// Flush+Reload hardware traces over the observer's probe page.

using HardwareTrace = uint64_t;  // bit i = probe line i present at measurement end

struct SamplingPlan {
    std::vector<uint32_t> schedule{15, 40, 160, 320};

    uint32_t base() const { return schedule.front(); }
    bool valid() const {
        if (schedule.empty()) return false;
        for (size_t i = 1; i < schedule.size(); ++i)
            if (schedule[i] <= schedule[i - 1]) return false;
        return true;
    }
};

struct StoreBufferEntry {
    uint64_t phys = 0;
    uint64_t value = 0;
};

constexpr size_t kStoreBufferDepth = 32;
constexpr unsigned kTransientWindow = 16;

struct MicroArchState {
    uint64_t probe_presence = 0;              // the Flush+Reload monitored set
    std::vector<bool> cache_lines;            // physical line id -> recently touched
    std::vector<StoreBufferEntry> store_buffer;  // FIFO, capacity kStoreBufferDepth
    uint64_t div_quotient = 0;
    uint64_t div_remainder = 0;
    std::array<uint64_t, 8> priv_regs{};
    int speculation_depth = 0;
    Rng noise_rng;
};

struct RunResult {
    HardwareTrace trace = 0;
    bool discarded = false;  // instruction budget exceeded / malformed execution
    ArchState final_state;
};

struct TraceSample {
    std::vector<HardwareTrace> traces;
    bool discarded = false;
};

class ExecutionContext {
public:
    /// setup_environment: builds address spaces (guests get guest+nested
    /// tables, page-bit overrides applied), patches each placeholder NOP
    /// into a jump to a per-actor macro routine whose back-jump is shadowed
    /// by a FENCE, and pre-registers transition targets.
    ExecutionContext(TestCasePackage pkg, ExecutorKnobs knobs, uint64_t noise_seed = 0)
        : pkg_(std::move(pkg)), knobs_(knobs), geom_(make_geometry(pkg_)) {
        spaces_ = build_address_spaces(to_layout_info(pkg_), knobs_.memory_aliasing);
        micro_.noise_rng = Rng(noise_seed);
        micro_.cache_lines.assign(pkg_.actors.size() * kFramesPerActor * kLinesPerFrame(), false);
        phys_.resize(pkg_.actors.size() * kFramesPerActor * kPageSize);
        observer_ = pkg_.observer_index();
        if (observer_ < 0) throw PackageError("package has no observer actor");
        probe_line0_ = static_cast<uint64_t>(frame_of(static_cast<unsigned>(observer_),
                                                      kPageProbe)) *
                       kLinesPerFrame();
        patch_macros();
    }

    const TestCasePackage& package() const { return pkg_; }
    const ExecutorKnobs& knobs() const { return knobs_; }
    const std::vector<uint8_t>& patched_code(unsigned actor) const { return patched_[actor]; }
    const AddressSpace& address_space(unsigned actor) const { return spaces_[actor]; }
    const MicroArchState& micro() const { return micro_; }
    uint64_t total_runs() const { return total_runs_; }
    uint64_t faults_delivered() const { return faults_delivered_; }

    /// One Measure() evaluation: reset mu, load the input, execute from the
    /// entry actor, collect the Flush+Reload trace.
    RunResult run_with_input(const InputBundle& input) {
        reset_micro(input);
        load_physical_memory(phys_, patched_, input);
        targets_ = initial_targets(pkg_.macros);
        measuring_ = false;
        measured_ = false;
        trace_ = 0;
        running_ = true;
        discarded_ = false;
        enter_actor(pkg_.entry_actor(), 0, input);

        uint32_t budget = knobs_.instruction_budget;
        SimEnv env{this};
        while (running_) {
            const uint16_t a = st_.current_actor;
            // native macro dispatch on routine entry
            auto rit = routine_entries_.find(key(a, static_cast<uint32_t>(st_.pc)));
            if (rit != routine_entries_.end()) {
                apply_macro(pkg_.macros[rit->second], input);
                if (!running_) break;
                if (st_.pc != routine_offset_of_[rit->second])
                    continue;  // macro redirected control flow
                // fall through: execute the routine's back-jump normally
            } else if (st_.pc >= geom_.code_len[a]) {
                if (st_.pc >= kPageSize || !in_routine_region(a, static_cast<uint32_t>(st_.pc)))
                    break;  // fell off the program text: test case exit
            }
            if (budget-- == 0) {
                discarded_ = true;
                break;
            }
            if (st_.pc % kInstrBytes != 0 || st_.pc + kInstrBytes > kPageSize) {
                discarded_ = true;
                break;
            }
            DecodeError derr;
            auto in = decode_instruction(&phys_[code_base(a) + st_.pc], kInstrBytes, &derr);
            if (!in) {
                discarded_ = true;
                break;
            }
            const ArchState pre = st_;
            env.assist.reset();
            env.mem = MemAccessOutcome{};
            StepOutcome res = arch_step(st_, *in, env);
            if (!res.fault) {
                if (in->op == Opcode::Div)
                    note_arch_div(pre.gprs[in->dst],
                                  in->src == kImmOperand ? in->imm : pre.gprs[in->src]);
                if (in->op == Opcode::Fence) micro_.store_buffer.clear();
                if (env.assist) {
                    transient_window(*in, pre, env.mem, *env.assist);
                    continue;
                }
                continue;
            }
            // hard fault: transient effects first, then architectural routing
            transient_window(*in, pre, env.mem, *res.fault);
            deliver_fault();
        }
        if (measuring_ && !measured_) trace_ = micro_.probe_presence;  // harness reload
        return {trace_, discarded_, st_};
    }

    /// N independent runs with a mu reset in between; the noise PRNG is the
    /// only state that advances across runs.
    TraceSample measure_sample(const InputBundle& input, uint32_t n) {
        TraceSample s;
        s.traces.reserve(n);
        for (uint32_t i = 0; i < n; ++i) {
            RunResult r = run_with_input(input);
            ++total_runs_;
            s.traces.push_back(r.trace);
            s.discarded |= r.discarded;
        }
        return s;
    }

private:
    static constexpr unsigned kLinesPerFrame() {
        return static_cast<unsigned>(kPageSize / kLineSize);
    }
    static uint32_t key(uint16_t actor, uint32_t offset) {
        return (static_cast<uint32_t>(actor) << 16) | (offset & 0xffffu);
    }
    uint64_t code_base(uint16_t a) const {
        return static_cast<uint64_t>(frame_of(a, kPageCode)) * kPageSize;
    }
    bool in_routine_region(uint16_t a, uint32_t off) const {
        return off >= routine_floor_[a] && off < kPageSize;
    }

    // -- setup --

    void patch_macros() {
        patched_ = pkg_.code;
        for (auto& c : patched_) c.resize(kPageSize, 0);
        routine_floor_.assign(pkg_.actors.size(), static_cast<uint32_t>(kPageSize));
        routine_offset_of_.resize(pkg_.macros.size());
        std::vector<unsigned> per_actor(pkg_.actors.size(), 0);
        for (size_t i = 0; i < pkg_.macros.size(); ++i) {
            const MacroSite& m = pkg_.macros[i];
            const uint32_t routine = static_cast<uint32_t>(
                kPageSize - 2 * kInstrBytes * (per_actor[m.owner] + 1));
            ++per_actor[m.owner];
            if (routine < pkg_.code[m.owner].size())
                throw PackageError("macro routines collide with program code");
            DecodeError derr;
            auto placeholder =
                decode_instruction(&pkg_.code[m.owner][m.offset], kInstrBytes, &derr);
            if (!placeholder || placeholder->op != Opcode::Nop)
                throw PackageError("macro table entry does not address a NOP placeholder");
            // site NOP -> jump to routine; routine = back-jump, FENCE shadow
            const auto site_rel = static_cast<int16_t>(
                static_cast<int32_t>(routine) - static_cast<int32_t>(m.offset + kInstrBytes));
            encode_instruction(make_br(Cond::Al, site_rel), &patched_[m.owner][m.offset]);
            const auto back_rel = static_cast<int16_t>(
                static_cast<int32_t>(m.offset + kInstrBytes) -
                static_cast<int32_t>(routine + kInstrBytes));
            encode_instruction(make_br(Cond::Al, back_rel), &patched_[m.owner][routine]);
            encode_instruction(make_fence(), &patched_[m.owner][routine + kInstrBytes]);
            routine_entries_[key(m.owner, routine)] = i;
            routine_offset_of_[i] = routine;
            routine_floor_[m.owner] = std::min(routine_floor_[m.owner], routine);
        }
    }

    // -- run-time helpers --

    void reset_micro(const InputBundle& input) {
        micro_.probe_presence = 0;
        std::fill(micro_.cache_lines.begin(), micro_.cache_lines.end(), false);
        micro_.store_buffer.clear();
        micro_.div_quotient = 0;
        micro_.div_remainder = 0;
        micro_.priv_regs = priv_regs_from_input(pkg_, input);
        micro_.speculation_depth = 0;
    }

    void enter_actor(uint16_t a, uint32_t offset, const InputBundle& input) {
        st_.current_actor = a;
        st_.pc = offset;
        st_.mode = pkg_.actors[a].mode;
        st_.privilege = pkg_.actors[a].privilege;
        for (int i = 0; i < 6; ++i) st_.gprs[i] = input.actors[a].regs[static_cast<size_t>(i)];
        st_.gprs[kSandboxBaseReg] = kVaData;
        st_.gprs[kProbeBaseReg] = kVaProbe;
        st_.flags = Flags{};
    }

    // Opaque-microcode nondeterminism: each domain transition (switch macro
    // or fault delivery) flips one random probe bit with probability noise_p.
    void transition_noise() {
        if (micro_.noise_rng.chance(knobs_.noise_probability))
            micro_.probe_presence ^= 1ull << micro_.noise_rng.below(kProbeLines);
    }

    void do_transition(const TransitionTarget& t, const InputBundle& input) {
        transition_noise();
        if (geom_.is_exit_target(t.actor, t.offset)) {
            running_ = false;
            return;
        }
        enter_actor(t.actor, t.offset, input);
    }

    void deliver_fault() {
        ++faults_delivered_;
        transition_noise();
        if (!geom_.fault_handler_offset) {
            running_ = false;
            return;
        }
        // registers and flags survive fault delivery
        st_.current_actor = static_cast<uint16_t>(geom_.main_actor);
        st_.pc = *geom_.fault_handler_offset;
        st_.mode = pkg_.actors[static_cast<size_t>(geom_.main_actor)].mode;
        st_.privilege = pkg_.actors[static_cast<size_t>(geom_.main_actor)].privilege;
    }

    void apply_macro(const MacroSite& m, const InputBundle& input) {
        switch (m.id) {
            case MacroId::SetH2GTarget:
                targets_.h2g = target_of_set_macro(m);
                break;
            case MacroId::SetG2HTarget:
                targets_.g2h = target_of_set_macro(m);
                break;
            case MacroId::SetK2UTarget:
                targets_.k2u = target_of_set_macro(m);
                break;
            case MacroId::SetU2KTarget:
                targets_.u2k = target_of_set_macro(m);
                break;
            case MacroId::SwitchH2G:
            case MacroId::SwitchG2H:
            case MacroId::SwitchK2U:
            case MacroId::SwitchU2K: {
                auto t = targets_.for_switch(m.id);
                if (!t) {
                    discarded_ = true;
                    running_ = false;
                    return;
                }
                do_transition(*t, input);
                return;
            }
            case MacroId::MeasurementStart:  // Flush
                micro_.probe_presence = 0;
                measuring_ = true;
                break;
            case MacroId::MeasurementEnd:  // Reload
                trace_ = micro_.probe_presence;
                measured_ = true;
                measuring_ = false;
                break;
            case MacroId::FlushBuffers:  // VERW analog
                micro_.store_buffer.clear();
                break;
            case MacroId::FlushL1D:
                std::fill(micro_.cache_lines.begin(), micro_.cache_lines.end(), false);
                micro_.probe_presence = 0;
                break;
            case MacroId::FullCacheFlush:  // WBINVD analog: store buffer untouched
                std::fill(micro_.cache_lines.begin(), micro_.cache_lines.end(), false);
                break;
            case MacroId::DummyDiv:
                micro_.div_quotient = 1;
                micro_.div_remainder = 1;
                break;
            case MacroId::FaultHandler:
            case MacroId::RandomInstructions:
                break;
        }
    }

    void touch_line(uint64_t phys_addr) {
        const uint64_t line = phys_addr / kLineSize;
        micro_.cache_lines[line] = true;
        if (line >= probe_line0_ && line < probe_line0_ + kProbeLines)
            micro_.probe_presence |= 1ull << (line - probe_line0_);
    }

    void touch(const MemAccessOutcome& out) {
        touch_line(out.phys1);
        if (out.n1 > 1) touch_line(out.phys1 + out.n1 - 1);
        if (out.n2) {
            touch_line(out.phys2);
            if (out.n2 > 1) touch_line(out.phys2 + out.n2 - 1);
        }
    }

    uint64_t read_phys64(uint64_t phys_addr) const {
        uint64_t v = 0;
        for (unsigned i = 0; i < 8 && phys_addr + i < phys_.size(); ++i)
            v |= static_cast<uint64_t>(phys_[phys_addr + i]) << (8 * i);
        return v;
    }

    uint64_t newest_store_value() const {
        return micro_.store_buffer.empty() ? 0 : micro_.store_buffer.back().value;
    }

    void note_arch_div(uint64_t dividend, uint64_t divisor) {
        micro_.div_quotient = dividend / divisor;
        micro_.div_remainder = dividend % divisor;
    }

    // -- environments --

    struct SimEnv final : StepEnv {
        ExecutionContext* ctx;
        std::optional<Fault> assist;
        MemAccessOutcome mem;

        explicit SimEnv(ExecutionContext* c) : ctx(c) {}
        LoadResult load(uint64_t va) override {
            mem = access_memory(ctx->spaces_[ctx->st_.current_actor], ctx->st_.privilege,
                                ctx->phys_, va, Access::Read, 0, false);
            if (!mem.ok) return {false, 0, mem.fault};
            ctx->touch(mem);
            assist = mem.assist;
            return {true, mem.value, {}};
        }
        std::optional<Fault> store(uint64_t va, uint64_t value) override {
            mem = access_memory(ctx->spaces_[ctx->st_.current_actor], ctx->st_.privilege,
                                ctx->phys_, va, Access::Write, value, true);
            if (!mem.ok) return mem.fault;
            ctx->touch(mem);
            assist = mem.assist;
            auto& sb = ctx->micro_.store_buffer;
            if (sb.size() == kStoreBufferDepth) sb.erase(sb.begin());
            sb.push_back({mem.phys1, value});
            return std::nullopt;
        }
        uint64_t priv_reg(unsigned id) override { return ctx->micro_.priv_regs[id % 8]; }
        bool priv_read_disabled() const override { return ctx->knobs_.priv_read_disable; }
    };

    // Shadow environment for the transient window: reads see shadow stores,
    // writes stay in the shadow, cache/probe touches persist, and faulting
    // or assisting loads forward per the enabled bug toggles.
    struct TransientEnv final : StepEnv {
        ExecutionContext* ctx;
        std::unordered_map<uint64_t, uint64_t>* shadow;

        LoadResult load(uint64_t va) override {
            auto out = access_memory(ctx->spaces_[ctx->st_.current_actor], ctx->st_.privilege,
                                     ctx->phys_, va, Access::Read, 0, false);
            if (out.ok) {
                ctx->touch(out);
                uint64_t v = out.value;
                if (auto it = shadow->find(va); it != shadow->end()) v = it->second;
                if (out.assist && ctx->knobs_.bugs.mds_assist) v = ctx->newest_store_value();
                return {true, v, {}};
            }
            return {true, ctx->forward_value_for_load(out, out.fault), {}};
        }
        std::optional<Fault> store(uint64_t va, uint64_t value) override {
            auto out = access_memory(ctx->spaces_[ctx->st_.current_actor], ctx->st_.privilege,
                                     ctx->phys_, va, Access::Write, value, false);
            if (out.ok) {
                ctx->touch(out);
                (*shadow)[va] = value;
            }
            return std::nullopt;  // transient faults are suppressed
        }
        uint64_t priv_reg(unsigned id) override { return ctx->micro_.priv_regs[id % 8]; }
        bool priv_read_disabled() const override { return ctx->knobs_.priv_read_disable; }
    };

    /// Value a faulting load forwards transiently, honoring toggle priority.
    uint64_t forward_value_for_load(const MemAccessOutcome& mem, const Fault& f) {
        const BugToggles& bugs = knobs_.bugs;
        if (f.kind == FaultKind::PageFault && f.page_bit == PageBit::User && bugs.meltdown_us &&
            mem.leak_known)
            return read_phys64(mem.leak_phys);
        if (f.kind == FaultKind::PageFault && f.page_bit == PageBit::Present &&
            bugs.foreshadow_p && mem.leak_known) {
            const uint64_t line = mem.leak_phys / kLineSize;
            if (line < micro_.cache_lines.size() && micro_.cache_lines[line]) {
                touch_line(mem.leak_phys);
                return read_phys64(mem.leak_phys);
            }
            return 0;
        }
        if (bugs.mds_assist) return newest_store_value();
        return 0;
    }

    /// Does this fault/assist open a transient window, and what does the
    /// triggering instruction's destination receive?
    struct WindowStart {
        bool open = false;
        bool inject = false;
        uint64_t value = 0;
    };
    WindowStart window_start(const Instruction& in, const MemAccessOutcome& mem,
                             const Fault& f) {
        const BugToggles& bugs = knobs_.bugs;
        WindowStart w;
        switch (in.op) {
            case Opcode::Load: {
                if (f.kind == FaultKind::Assist) {
                    if (bugs.mds_assist) w = {true, true, newest_store_value()};
                } else if (f.kind == FaultKind::PageFault && f.page_bit == PageBit::User &&
                           bugs.meltdown_us && mem.leak_known) {
                    w = {true, true, read_phys64(mem.leak_phys)};
                } else if (f.kind == FaultKind::PageFault && f.page_bit == PageBit::Present &&
                           bugs.foreshadow_p && mem.leak_known) {
                    const uint64_t line = mem.leak_phys / kLineSize;
                    const bool resident =
                        line < micro_.cache_lines.size() && micro_.cache_lines[line];
                    if (resident) touch_line(mem.leak_phys);
                    w = {true, true, resident ? read_phys64(mem.leak_phys) : 0};
                } else if (bugs.mds_assist) {
                    w = {true, true, newest_store_value()};
                }
                break;
            }
            case Opcode::Store:
                if (bugs.mds_assist) w = {true, false, 0};
                break;
            case Opcode::Div:
                if (f.kind == FaultKind::DivByZero && bugs.dss_divider)
                    w = {true, true, micro_.div_quotient};  // stale divider state
                break;
            case Opcode::Rdpriv:
                if (bugs.rsrr_priv)
                    w = {true, true, micro_.priv_regs[in.imm % 8]};
                else if (bugs.smsw_umip_analog)
                    w = {true, true, micro_.priv_regs[in.imm % 8] & 0xffffu};
                break;
            default:
                break;
        }
        return w;
    }

    /// Speculative execution after a fault or assist: up to kTransientWindow
    /// instructions run on a shadow state seeded with the forwarded value.
    /// Architectural effects are squashed; cache and probe effects persist.
    /// FENCE, macro routines and decode failures end the window early.
    void transient_window(const Instruction& in, const ArchState& pre,
                          const MemAccessOutcome& mem, const Fault& f) {
        WindowStart w = window_start(in, mem, f);
        if (!w.open) return;
        ++micro_.speculation_depth;
        ArchState sst = pre;
        if (w.inject) sst.gprs[in.dst] = w.value;
        sst.pc = pre.pc + kInstrBytes;

        std::unordered_map<uint64_t, uint64_t> shadow;
        TransientEnv env;
        env.ctx = this;
        env.shadow = &shadow;

        const uint16_t a = sst.current_actor;
        for (unsigned step = 0; step < kTransientWindow; ++step) {
            if (routine_entries_.count(key(a, static_cast<uint32_t>(sst.pc)))) break;
            if (sst.pc + kInstrBytes > kPageSize) break;
            if (sst.pc >= geom_.code_len[a] && !in_routine_region(a, static_cast<uint32_t>(sst.pc)))
                break;
            DecodeError derr;
            auto ti = decode_instruction(&phys_[code_base(a) + sst.pc], kInstrBytes, &derr);
            if (!ti || ti->op == Opcode::Fence) break;
            const uint64_t pre_dst = sst.gprs[ti->dst];
            const uint64_t divisor = opcode_has_src(ti->op)
                                         ? (ti->src == kImmOperand ? ti->imm : sst.gprs[ti->src])
                                         : 0;
            StepOutcome o = arch_step(sst, *ti, env);
            if (o.fault) {
                // transient faults are suppressed; DIV/RDPRIV forward per toggles
                uint64_t v = 0;
                if (ti->op == Opcode::Div && o.fault->kind == FaultKind::DivByZero &&
                    knobs_.bugs.dss_divider)
                    v = micro_.div_quotient;
                else if (ti->op == Opcode::Rdpriv && knobs_.bugs.rsrr_priv)
                    v = micro_.priv_regs[ti->imm % 8];
                else if (ti->op == Opcode::Rdpriv && knobs_.bugs.smsw_umip_analog)
                    v = micro_.priv_regs[ti->imm % 8] & 0xffffu;
                if (ti->op != Opcode::Store) sst.gprs[ti->dst] = v;
                sst.pc += kInstrBytes;
                continue;
            }
            if (ti->op == Opcode::Div) {
                micro_.div_quotient = pre_dst / divisor;  // divider state is microarchitectural
                micro_.div_remainder = pre_dst % divisor;
            }
        }
        --micro_.speculation_depth;
        // shadow state discarded: squash
    }

    TestCasePackage pkg_;
    ExecutorKnobs knobs_;
    HarnessGeometry geom_;
    std::vector<AddressSpace> spaces_;
    std::vector<std::vector<uint8_t>> patched_;
    std::vector<uint32_t> routine_floor_;
    std::vector<uint32_t> routine_offset_of_;
    std::unordered_map<uint32_t, size_t> routine_entries_;
    std::vector<uint8_t> phys_;
    MicroArchState micro_;
    TransitionTargets targets_;
    ArchState st_;
    int observer_ = -1;
    uint64_t probe_line0_ = 0;
    bool measuring_ = false;
    bool measured_ = false;
    bool running_ = false;
    bool discarded_ = false;
    HardwareTrace trace_ = 0;
    uint64_t total_runs_ = 0;
    uint64_t faults_delivered_ = 0;
};

}  // namespace ilk
