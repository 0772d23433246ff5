#pragma once

#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ilk/paging.hpp"
#include "ilk/template_lang.hpp"

namespace ilk {

struct BugToggles {
    bool meltdown_us = false;
    bool foreshadow_p = false;
    bool mds_assist = false;
    bool dss_divider = false;
    bool rsrr_priv = false;
    bool smsw_umip_analog = false;

    bool any() const {
        return meltdown_us || foreshadow_p || mds_assist || dss_divider || rsrr_priv ||
               smsw_umip_analog;
    }
};

enum class KernelIsolation : uint8_t { None = 0, PBitClear, Unmap };

struct ExecutorKnobs {
    BugToggles bugs;
    double noise_probability = 0.0;
    bool memory_aliasing = false;
    KernelIsolation kernel_isolation = KernelIsolation::None;
    uint32_t instruction_budget = 4096;
    bool priv_read_disable = false;
    bool enable_prefetchers = false;  // accepted for config fidelity, ignored
};

struct AnalyzerKnobs {
    double chi2_threshold = 8.0;
    std::vector<uint32_t> sample_schedule{15, 40, 160, 320};
};

enum class ObservationClause : uint8_t { LoadStorePc };
// Speculative clauses exist in the enum but are not implemented.
enum class ExecutionClause : uint8_t { Noninterference, SpeculativeBranch };

struct ActorConfig {
    std::string name;
    Mode mode = Mode::Host;
    Privilege privilege = Privilege::Kernel;
    bool observer = false;
    uint16_t data_overrides = 0;  // PageOverride bits applied to the 3 data pages
};

struct CampaignConfig {
    std::vector<ActorConfig> actors;
    std::vector<Opcode> instruction_allowlist;
    ObservationClause observation = ObservationClause::LoadStorePc;
    std::vector<ExecutionClause> execution{ExecutionClause::Noninterference};
    bool cross_actor_access_pass = false;
    bool disable_observer_div_mask = false;  // COMP: let observer divisions fault
    ExecutorKnobs executor;
    AnalyzerKnobs analyzer;
    uint64_t seed = 1;

    const ActorConfig* find_actor(const std::string& name) const {
        for (const auto& a : actors)
            if (a.name == name) return &a;
        return nullptr;
    }
    int observer_index() const {
        for (size_t i = 0; i < actors.size(); ++i)
            if (actors[i].observer) return static_cast<int>(i);
        return -1;
    }
    int main_index() const {
        for (size_t i = 0; i < actors.size(); ++i)
            if (actors[i].mode == Mode::Host && actors[i].privilege == Privilege::Kernel)
                return static_cast<int>(i);
        return -1;
    }
};

inline std::vector<Opcode> default_instruction_pool() {
    return {Opcode::Add, Opcode::Sub, Opcode::And,  Opcode::Or,    Opcode::Xor,
            Opcode::Shl, Opcode::Shr, Opcode::Cmp,  Opcode::Cmov,  Opcode::Mul,
            Opcode::Div, Opcode::Load, Opcode::Store, Opcode::Nop};
}

inline const std::map<std::string, Opcode>& allowlist_names() {
    static const std::map<std::string, Opcode> m{
        {"ADD", Opcode::Add},   {"SUB", Opcode::Sub},     {"AND", Opcode::And},
        {"OR", Opcode::Or},     {"XOR", Opcode::Xor},     {"SHL", Opcode::Shl},
        {"SHR", Opcode::Shr},   {"CMP", Opcode::Cmp},     {"CMOV", Opcode::Cmov},
        {"MUL", Opcode::Mul},   {"DIV", Opcode::Div},     {"LOAD", Opcode::Load},
        {"STORE", Opcode::Store}, {"BR", Opcode::Br},     {"NOP", Opcode::Nop},
        {"FENCE", Opcode::Fence}, {"RDPRIV", Opcode::Rdpriv},
    };
    return m;
}

namespace detail {

struct ConfigCtx {
    std::vector<Diagnostic>* diags;
    void err(const YAML::Node& n, std::string m) {
        diags->push_back({n.Mark().line + 1, std::move(m)});
    }
};

// data_properties keys: config value must flip the bit away from its default.
inline std::optional<uint16_t> data_property_bit(const std::string& key, bool value) {
    struct Row {
        const char* key;
        uint16_t bit;
        bool expect;  // the only meaningful config value
    };
    static const Row rows[] = {
        {"present", kOvClearPresent, false},
        {"writable", kOvClearWritable, false},
        {"user", kOvClearUser, false},
        {"accessed", kOvClearAccessed, false},
        {"dirty", kOvClearDirty, false},
        {"reserved", kOvSetReserved, true},
        {"mapped", kOvUnmap, false},
        {"nested_present", kOvNestedClearPresent, false},
        {"nested_writable", kOvNestedClearWritable, false},
        {"nested_accessed", kOvNestedClearAccessed, false},
        {"nested_dirty", kOvNestedClearDirty, false},
        {"nested_reserved", kOvNestedSetReserved, true},
    };
    for (const auto& r : rows)
        if (key == r.key) return value == r.expect ? std::optional<uint16_t>(r.bit)
                                                   : std::optional<uint16_t>(0);
    return std::nullopt;
}

inline void parse_actor_props(ConfigCtx& cx, const YAML::Node& props, ActorConfig& a) {
    auto handle = [&](const std::string& key, const YAML::Node& val) {
        if (key == "mode") {
            auto s = val.as<std::string>("");
            if (s == "host")
                a.mode = Mode::Host;
            else if (s == "guest")
                a.mode = Mode::Guest;
            else
                cx.err(val, "invalid mode '" + s + "' (host|guest)");
        } else if (key == "privilege_level") {
            auto s = val.as<std::string>("");
            if (s == "kernel")
                a.privilege = Privilege::Kernel;
            else if (s == "user")
                a.privilege = Privilege::User;
            else
                cx.err(val, "invalid privilege_level '" + s + "' (kernel|user)");
        } else if (key == "observer") {
            a.observer = val.as<bool>(false);
        } else if (key == "data_properties") {
            for (const auto& p : val) {
                if (p.IsMap() && p.size() == 1) {
                    auto it = p.begin();
                    std::string k = it->first.as<std::string>("");
                    bool v = it->second.as<bool>(false);
                    auto bit = data_property_bit(k, v);
                    if (!bit)
                        cx.err(p, "unknown data property '" + k + "'");
                    else if (*bit == 0)
                        cx.err(p, "data property '" + k + "' does not change the default");
                    else
                        a.data_overrides |= *bit;
                } else {
                    cx.err(p, "data_properties entries must be 'key: value'");
                }
            }
        } else {
            cx.err(val, "unknown actor key '" + key + "'");
        }
    };
    if (props.IsSequence()) {
        for (const auto& item : props) {
            if (!item.IsMap() || item.size() != 1) {
                cx.err(item, "actor property must be a single 'key: value' entry");
                continue;
            }
            auto it = item.begin();
            handle(it->first.as<std::string>(""), it->second);
        }
    } else if (props.IsMap()) {
        for (const auto& kv : props) handle(kv.first.as<std::string>(""), kv.second);
    } else if (!props.IsNull()) {
        cx.err(props, "actor body must be a list or map of properties");
    }
}

}  // namespace detail

/// Parse a campaign configuration file. Unspecified knobs take their
/// documented defaults; unknown keys and invalid enum values are errors.
inline ParseResult<CampaignConfig> parse_config(const std::string& text) {
    ParseResult<CampaignConfig> res;
    detail::ConfigCtx cx{&res.diags};
    YAML::Node root;
    try {
        root = YAML::Load(text);
    } catch (const YAML::Exception& e) {
        res.diags.push_back({e.mark.line + 1, std::string("config parse error: ") + e.what()});
        return res;
    }
    if (root.IsNull()) root = YAML::Node(YAML::NodeType::Map);
    if (!root.IsMap()) {
        res.diags.push_back({1, "config root must be a mapping"});
        return res;
    }
    CampaignConfig cfg;
    cfg.instruction_allowlist = default_instruction_pool();

    for (const auto& kv : root) {
        std::string key = kv.first.as<std::string>("");
        const YAML::Node& val = kv.second;
        if (key == "actors") {
            for (const auto& entry : val) {
                if (!entry.IsMap() || entry.size() != 1) {
                    cx.err(entry, "actor entry must be '- name:' with properties");
                    continue;
                }
                auto it = entry.begin();
                ActorConfig a;
                a.name = it->first.as<std::string>("");
                detail::parse_actor_props(cx, it->second, a);
                cfg.actors.push_back(std::move(a));
            }
        } else if (key == "instruction_allowlist") {
            cfg.instruction_allowlist.clear();
            for (const auto& op : val) {
                std::string name = op.as<std::string>("");
                auto it = allowlist_names().find(name);
                if (it == allowlist_names().end())
                    cx.err(op, "unknown instruction '" + name + "' in allowlist");
                else if (std::find(cfg.instruction_allowlist.begin(),
                                   cfg.instruction_allowlist.end(),
                                   it->second) == cfg.instruction_allowlist.end())
                    cfg.instruction_allowlist.push_back(it->second);
            }
        } else if (key == "contract_observation_clause") {
            std::string s = val.as<std::string>("");
            if (s == "load+store+pc")
                cfg.observation = ObservationClause::LoadStorePc;
            else
                cx.err(val, "unsupported contract_observation_clause '" + s + "'");
        } else if (key == "contract_execution_clause") {
            cfg.execution.clear();
            auto one = [&](const YAML::Node& n) {
                std::string s = n.as<std::string>("");
                if (s == "noninterference")
                    cfg.execution.push_back(ExecutionClause::Noninterference);
                else if (s == "speculative-branch")
                    cfg.execution.push_back(ExecutionClause::SpeculativeBranch);
                else
                    cx.err(n, "unknown contract_execution_clause '" + s + "'");
            };
            if (val.IsSequence())
                for (const auto& n : val) one(n);
            else
                one(val);
        } else if (key == "enable_prefetchers") {
            cfg.executor.enable_prefetchers = val.as<bool>(false);
        } else if (key == "cross_actor_access_pass") {
            cfg.cross_actor_access_pass = val.as<bool>(false);
        } else if (key == "disable_observer_div_mask") {
            cfg.disable_observer_div_mask = val.as<bool>(false);
        } else if (key == "seed") {
            cfg.seed = val.as<uint64_t>(1);
        } else if (key == "executor") {
            for (const auto& ek : val) {
                std::string k = ek.first.as<std::string>("");
                const YAML::Node& v = ek.second;
                if (k == "bugs") {
                    for (const auto& bk : v) {
                        std::string b = bk.first.as<std::string>("");
                        bool on = bk.second.as<bool>(false);
                        if (b == "meltdown_us")
                            cfg.executor.bugs.meltdown_us = on;
                        else if (b == "foreshadow_p")
                            cfg.executor.bugs.foreshadow_p = on;
                        else if (b == "mds_assist")
                            cfg.executor.bugs.mds_assist = on;
                        else if (b == "dss_divider")
                            cfg.executor.bugs.dss_divider = on;
                        else if (b == "rsrr_priv")
                            cfg.executor.bugs.rsrr_priv = on;
                        else if (b == "smsw_umip_analog")
                            cfg.executor.bugs.smsw_umip_analog = on;
                        else
                            cx.err(bk.second, "unknown bug toggle '" + b + "'");
                    }
                } else if (k == "noise_probability") {
                    double p = v.as<double>(0.0);
                    if (p < 0.0 || p >= 1.0)
                        cx.err(v, "noise_probability must be in [0,1)");
                    else
                        cfg.executor.noise_probability = p;
                } else if (k == "memory_aliasing") {
                    cfg.executor.memory_aliasing = v.as<bool>(false);
                } else if (k == "kernel_isolation") {
                    std::string s = v.as<std::string>("");
                    if (s == "none")
                        cfg.executor.kernel_isolation = KernelIsolation::None;
                    else if (s == "p_bit_clear")
                        cfg.executor.kernel_isolation = KernelIsolation::PBitClear;
                    else if (s == "unmap")
                        cfg.executor.kernel_isolation = KernelIsolation::Unmap;
                    else
                        cx.err(v, "invalid kernel_isolation '" + s + "'");
                } else if (k == "instruction_budget") {
                    cfg.executor.instruction_budget = v.as<uint32_t>(4096);
                } else if (k == "priv_read_disable") {
                    cfg.executor.priv_read_disable = v.as<bool>(false);
                } else {
                    cx.err(v, "unknown executor key '" + k + "'");
                }
            }
        } else if (key == "analyzer") {
            for (const auto& ak : val) {
                std::string k = ak.first.as<std::string>("");
                const YAML::Node& v = ak.second;
                if (k == "chi2_threshold") {
                    cfg.analyzer.chi2_threshold = v.as<double>(8.0);
                } else if (k == "sample_schedule") {
                    cfg.analyzer.sample_schedule.clear();
                    for (const auto& n : v)
                        cfg.analyzer.sample_schedule.push_back(n.as<uint32_t>(0));
                    for (size_t i = 0; i < cfg.analyzer.sample_schedule.size(); ++i)
                        if (cfg.analyzer.sample_schedule[i] == 0 ||
                            (i && cfg.analyzer.sample_schedule[i] <=
                                      cfg.analyzer.sample_schedule[i - 1]))
                            cx.err(v, "sample_schedule must be positive and increasing");
                } else {
                    cx.err(v, "unknown analyzer key '" + k + "'");
                }
            }
        } else {
            cx.err(kv.second, "unknown config key '" + key + "'");
        }
    }

    if (cfg.actors.empty()) res.diags.push_back({0, "config declares no actors"});
    if (cfg.observer_index() < 0) res.diags.push_back({0, "no actor has observer: true"});
    if (cfg.instruction_allowlist.empty())
        res.diags.push_back({0, "instruction_allowlist is empty"});

    if (res.diags.empty()) res.value = std::move(cfg);
    return res;
}

// ---- cross validation of template vs config ----

/// Structural checks that a (template, config) pair makes a runnable test
/// case; every inconsistency is reported with its location.
inline std::vector<Diagnostic> validate(const Template& tpl, const CampaignConfig& cfg) {
    std::vector<Diagnostic> diags;
    auto err = [&](int line, std::string m) { diags.push_back({line, std::move(m)}); };

    // section <-> actor bijection
    for (const auto& s : tpl.sections)
        if (!cfg.find_actor(s.actor)) err(s.line, "section '" + s.actor + "' has no config actor");
    for (const auto& a : cfg.actors) {
        bool found = false;
        for (const auto& s : tpl.sections) found |= s.actor == a.name;
        if (!found) err(0, "config actor '" + a.name + "' has no template section");
    }
    if (!diags.empty()) return diags;

    // main is the unique host-kernel actor
    int n_hk = 0;
    for (const auto& a : cfg.actors)
        if (a.mode == Mode::Host && a.privilege == Privilege::Kernel) ++n_hk;
    const ActorConfig* main = cfg.find_actor("main");
    if (!main)
        err(0, "no actor named 'main'");
    else if (main->mode != Mode::Host || main->privilege != Privilege::Kernel)
        err(0, "'main' must be host + kernel");
    if (n_hk != 1) err(0, "exactly one host-kernel actor is required");

    int n_obs = 0;
    for (const auto& a : cfg.actors) n_obs += a.observer;
    if (n_obs != 1) err(0, "exactly one observer actor is required");

    for (const auto& a : cfg.actors)
        if (a.mode != Mode::Guest && (a.data_overrides & kOvNestedBits))
            err(0, "actor '" + a.name + "': nested page overrides on a non-guest actor");

    // label ownership map
    std::map<std::string, const ActorConfig*> label_owner;
    for (const auto& s : tpl.sections) {
        const ActorConfig* a = cfg.find_actor(s.actor);
        for (const auto& it : s.items)
            if (it.kind == TemplateItem::Kind::Label) label_owner[it.label] = a;
    }

    int n_mstart = 0, n_mend = 0, n_fh = 0, n_random = 0;
    for (const auto& s : tpl.sections) {
        const ActorConfig* owner = cfg.find_actor(s.actor);
        const bool host_kernel = owner->mode == Mode::Host && owner->privilege == Privilege::Kernel;
        for (const auto& it : s.items) {
            if (it.kind != TemplateItem::Kind::Macro) continue;
            const MacroInvocation& m = it.macro;
            auto target_owner = [&]() -> const ActorConfig* {
                auto f = label_owner.find(m.label_arg);
                return f == label_owner.end() ? nullptr : f->second;
            };
            switch (m.id) {
                case MacroId::RandomInstructions:
                    ++n_random;
                    break;
                case MacroId::MeasurementStart:
                case MacroId::MeasurementEnd:
                    (m.id == MacroId::MeasurementStart ? n_mstart : n_mend)++;
                    if (!owner->observer)
                        err(m.line, "measurement macro outside the observer actor");
                    break;
                case MacroId::SwitchH2G:
                case MacroId::SwitchK2U:
                    if (!host_kernel)
                        err(m.line, "'" + m.name + "' is only valid in host-kernel code");
                    break;
                case MacroId::SwitchG2H:
                    if (owner->mode != Mode::Guest)
                        err(m.line, "'switch_g2h' is only valid in guest code");
                    break;
                case MacroId::SwitchU2K:
                    if (owner->mode != Mode::Host || owner->privilege != Privilege::User)
                        err(m.line, "'switch_u2k' is only valid in host-user code");
                    break;
                case MacroId::SetH2GTarget:
                    if (auto* t = target_owner(); t && t->mode != Mode::Guest)
                        err(m.line, "h2g target label must be in a guest actor");
                    break;
                case MacroId::SetK2UTarget:
                    if (auto* t = target_owner();
                        t && (t->mode != Mode::Host || t->privilege != Privilege::User))
                        err(m.line, "k2u target label must be in a host-user actor");
                    break;
                case MacroId::SetG2HTarget:
                case MacroId::SetU2KTarget:
                    if (auto* t = target_owner();
                        t && (t->mode != Mode::Host || t->privilege != Privilege::Kernel))
                        err(m.line, "return target label must be in the main actor");
                    break;
                case MacroId::FaultHandler:
                    ++n_fh;
                    if (!host_kernel) err(m.line, "fault_handler must be owned by main");
                    break;
                case MacroId::FlushBuffers:
                case MacroId::FlushL1D:
                case MacroId::FullCacheFlush:
                case MacroId::DummyDiv:
                    break;  // mitigation primitives may appear anywhere
            }
        }
    }
    if (n_mstart != 1) err(0, "measurement_start must appear exactly once (found " +
                                  std::to_string(n_mstart) + ")");
    if (n_mend != 1)
        err(0, "measurement_end must appear exactly once (found " + std::to_string(n_mend) + ")");
    if (n_fh > 1) err(0, "at most one fault_handler is allowed");
    if (n_random > 0 && cfg.instruction_allowlist.empty())
        err(0, "template uses random_instructions but the allowlist is empty");
    for (auto c : cfg.execution)
        if (c != ExecutionClause::Noninterference)
            err(0, "only the 'noninterference' execution clause is implemented");
    return diags;
}

}  // namespace ilk
