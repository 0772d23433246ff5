#pragma once

#include <charconv>
#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "ilk/isa.hpp"
#include "ilk/macros.hpp"

namespace ilk {

struct Diagnostic {
    int line = 0;
    std::string message;
};

template <typename T>
struct ParseResult {
    std::optional<T> value;
    std::vector<Diagnostic> diags;
    bool ok() const { return value.has_value() && diags.empty(); }
};

// ---- template data model ----

struct TemplateInstr {
    Instruction instr;
    std::string branch_label;  // symbolic BR target; empty when disp is literal

    bool operator==(const TemplateInstr&) const = default;
};

struct MacroInvocation {
    MacroId id{};
    std::string name;
    std::optional<int64_t> int_arg;
    std::string label_arg;
    int line = 0;

    bool operator==(const MacroInvocation& o) const {
        return id == o.id && name == o.name && int_arg == o.int_arg && label_arg == o.label_arg;
    }
};

struct TemplateItem {
    enum class Kind : uint8_t { Instr, Label, Macro } kind = Kind::Instr;
    TemplateInstr instr;
    std::string label;
    MacroInvocation macro;
    int line = 0;

    bool operator==(const TemplateItem& o) const {
        if (kind != o.kind) return false;
        switch (kind) {
            case Kind::Instr:
                return instr == o.instr;
            case Kind::Label:
                return label == o.label;
            case Kind::Macro:
                return macro == o.macro;
        }
        return false;
    }
};

struct TemplateSection {
    std::string actor;
    std::vector<TemplateItem> items;
    int line = 0;

    bool operator==(const TemplateSection& o) const { return actor == o.actor && items == o.items; }
};

struct Template {
    std::vector<TemplateSection> sections;

    bool operator==(const Template&) const = default;

    size_t macro_count() const {
        size_t n = 0;
        for (const auto& s : sections)
            for (const auto& it : s.items)
                if (it.kind == TemplateItem::Kind::Macro) ++n;
        return n;
    }
};

// ---- lexing helpers ----

namespace detail {

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

inline bool is_ident(std::string_view s) {
    if (s.empty()) return false;
    for (char c : s)
        if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_')) return false;
    return true;
}

inline std::optional<int64_t> parse_int(std::string_view s) {
    if (s.empty()) return std::nullopt;
    int base = 10;
    bool neg = false;
    if (s.front() == '+') s.remove_prefix(1);
    else if (s.front() == '-') {
        neg = true;
        s.remove_prefix(1);
    }
    if (s.size() > 2 && s[0] == '0' && (s[1] == 'x' || s[1] == 'X')) {
        base = 16;
        s.remove_prefix(2);
    }
    int64_t v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v, base);
    if (ec != std::errc() || p != s.data() + s.size()) return std::nullopt;
    return neg ? -v : v;
}

inline std::optional<uint8_t> parse_reg(std::string_view s) {
    if (s.size() < 2 || (s[0] != 'r' && s[0] != 'R')) return std::nullopt;
    auto v = parse_int(s.substr(1));
    if (!v || *v < 0 || *v >= kNumRegs) return std::nullopt;
    return static_cast<uint8_t>(*v);
}

inline std::vector<std::string_view> split_operands(std::string_view s) {
    std::vector<std::string_view> out;
    size_t start = 0;
    for (size_t i = 0; i <= s.size(); ++i) {
        if (i == s.size() || s[i] == ',') {
            out.push_back(trim(s.substr(start, i - start)));
            start = i + 1;
        }
    }
    if (out.size() == 1 && out[0].empty()) out.clear();
    return out;
}

}  // namespace detail

/// Parse one assembly line ("ADD r1, r2", "LOAD r1, [r2+8]", "BRZ loop").
inline ParseResult<TemplateInstr> parse_asm_line(std::string_view text) {
    using namespace detail;
    ParseResult<TemplateInstr> res;
    auto fail = [&](std::string m) -> ParseResult<TemplateInstr>& {
        res.diags.push_back({0, std::move(m)});
        return res;
    };
    text = trim(text);
    size_t sp = text.find_first_of(" \t");
    std::string_view mnem = sp == std::string_view::npos ? text : text.substr(0, sp);
    std::string_view rest = sp == std::string_view::npos ? std::string_view{} : trim(text.substr(sp));
    std::string upper(mnem);
    for (char& c : upper) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));

    auto ops = split_operands(rest);
    TemplateInstr ti;

    if (upper == "RDPRIV") {
        if (ops.size() != 2) return fail("RDPRIV expects 'RDPRIV rD, id'");
        auto d = parse_reg(ops[0]);
        auto id = parse_int(ops[1]);
        if (!d || !id || *id < 0 || *id > 0xffff) return fail("bad RDPRIV operands");
        ti.instr = make_rdpriv(*d, static_cast<uint16_t>(*id));
        res.value = ti;
        return res;
    }

    const MnemonicInfo* mi = nullptr;
    for (const auto& m : mnemonic_table())
        if (m.name == upper) {
            mi = &m;
            break;
        }
    if (!mi) return fail("unknown mnemonic '" + std::string(mnem) + "'");

    switch (mi->op) {
        case Opcode::Nop:
        case Opcode::Fence:
            if (!ops.empty()) return fail(upper + " takes no operands");
            ti.instr = mi->op == Opcode::Nop ? make_nop() : make_fence();
            break;
        case Opcode::Br: {
            if (ops.size() != 1) return fail("branch expects one target");
            ti.instr = make_br(mi->cond, 0);
            if (auto v = parse_int(ops[0]); v && (ops[0][0] == '+' || ops[0][0] == '-' ||
                                                  std::isdigit(static_cast<unsigned char>(ops[0][0])))) {
                if (*v < -32768 || *v > 32767) return fail("branch offset out of range");
                ti.instr.disp = static_cast<uint16_t>(static_cast<int16_t>(*v));
            } else if (is_ident(ops[0])) {
                ti.branch_label = std::string(ops[0]);
            } else {
                return fail("bad branch target '" + std::string(ops[0]) + "'");
            }
            break;
        }
        case Opcode::Load:
        case Opcode::Store: {
            if (ops.size() != 2 || ops[1].size() < 4 || ops[1].front() != '[' || ops[1].back() != ']')
                return fail(upper + " expects 'rX, [rB+disp]'");
            auto d = parse_reg(ops[0]);
            if (!d) return fail("bad register '" + std::string(ops[0]) + "'");
            std::string inner(ops[1].substr(1, ops[1].size() - 2));
            std::erase(inner, ' ');
            uint16_t disp = 0;
            std::string base = inner;
            if (auto plus = inner.find('+'); plus != std::string::npos) {
                base = inner.substr(0, plus);
                auto dv = parse_int(inner.substr(plus + 1));
                if (!dv || *dv < 0 || *dv > 0xffff) return fail("bad displacement");
                disp = static_cast<uint16_t>(*dv);
            }
            auto b = parse_reg(base);
            if (!b) return fail("bad base register '" + base + "'");
            ti.instr = mi->op == Opcode::Load ? make_load(*d, *b, disp) : make_store(*d, *b, disp);
            break;
        }
        default: {  // ALU / CMOV forms: rD, (rS | imm)
            if (ops.size() != 2) return fail(upper + " expects two operands");
            auto d = parse_reg(ops[0]);
            if (!d) return fail("bad register '" + std::string(ops[0]) + "'");
            if (auto s = parse_reg(ops[1])) {
                ti.instr = mi->op == Opcode::Cmov ? make_cmov(mi->cond, *d, *s)
                                                  : make_alu(mi->op, *d, *s);
            } else if (auto v = parse_int(ops[1]); v && *v >= 0 && *v <= 0xffff) {
                ti.instr = mi->op == Opcode::Cmov
                               ? make_cmov_imm(mi->cond, *d, static_cast<uint16_t>(*v))
                               : make_alu_imm(mi->op, *d, static_cast<uint16_t>(*v));
            } else {
                return fail("bad operand '" + std::string(ops[1]) + "'");
            }
            break;
        }
    }
    res.value = ti;
    return res;
}

/// Parse a template file: sections, labels, macros and instruction lines.
/// Total: any input yields a Template or diagnostics with line numbers.
inline ParseResult<Template> parse_template(std::string_view text) {
    using namespace detail;
    ParseResult<Template> res;
    Template tpl;
    std::set<std::string> labels;
    auto err = [&](int line, std::string m) { res.diags.push_back({line, std::move(m)}); };

    int line_no = 0;
    size_t pos = 0;
    while (pos <= text.size()) {
        size_t eol = text.find('\n', pos);
        std::string_view raw = text.substr(pos, eol == std::string_view::npos ? text.size() - pos
                                                                              : eol - pos);
        pos = eol == std::string_view::npos ? text.size() + 1 : eol + 1;
        ++line_no;
        if (auto hash = raw.find('#'); hash != std::string_view::npos) raw = raw.substr(0, hash);
        std::string_view line = trim(raw);
        if (line.empty()) continue;

        if (line.starts_with(".section")) {
            std::string_view name = trim(line.substr(8));
            if (!name.starts_with(".") || !is_ident(name.substr(1))) {
                err(line_no, "bad section directive");
                continue;
            }
            std::string actor(name.substr(1));
            for (const auto& s : tpl.sections)
                if (s.actor == actor) err(line_no, "duplicate section '" + actor + "'");
            tpl.sections.push_back({actor, {}, line_no});
            continue;
        }
        if (tpl.sections.empty()) {
            err(line_no, "content before any .section");
            continue;
        }
        auto& items = tpl.sections.back().items;

        if (line.starts_with(".macro.")) {
            if (!line.ends_with(":")) {
                err(line_no, "macro line must end with ':'");
                continue;
            }
            std::string_view body = line.substr(7, line.size() - 8);
            size_t dot = body.find('.');
            std::string_view name = dot == std::string_view::npos ? body : body.substr(0, dot);
            std::string_view arg = dot == std::string_view::npos ? std::string_view{}
                                                                 : body.substr(dot + 1);
            const MacroInfo* mi = macro_by_name(name);
            if (!mi) {
                err(line_no, "unknown macro '" + std::string(name) + "'");
                continue;
            }
            MacroInvocation mv;
            mv.id = mi->id;
            mv.name = std::string(mi->name);
            mv.line = line_no;
            switch (mi->arg) {
                case MacroArgKind::None:
                    if (!arg.empty()) err(line_no, "macro '" + mv.name + "' takes no argument");
                    break;
                case MacroArgKind::Int: {
                    auto v = parse_int(arg);
                    if (!v || *v < 0)
                        err(line_no, "macro '" + mv.name + "' needs a non-negative count");
                    else
                        mv.int_arg = *v;
                    break;
                }
                case MacroArgKind::Label:
                    if (!is_ident(arg))
                        err(line_no, "macro '" + mv.name + "' needs a label argument");
                    else
                        mv.label_arg = std::string(arg);
                    break;
            }
            TemplateItem it;
            it.kind = TemplateItem::Kind::Macro;
            it.macro = std::move(mv);
            it.line = line_no;
            items.push_back(std::move(it));
            continue;
        }
        if (line.starts_with(".") && line.ends_with(":")) {
            std::string label(line.substr(1, line.size() - 2));
            if (!is_ident(label)) {
                err(line_no, "bad label '" + label + "'");
                continue;
            }
            if (!labels.insert(label).second) err(line_no, "duplicate label '" + label + "'");
            TemplateItem it;
            it.kind = TemplateItem::Kind::Label;
            it.label = std::move(label);
            it.line = line_no;
            items.push_back(std::move(it));
            continue;
        }
        auto pr = parse_asm_line(line);
        if (!pr.value) {
            for (auto& d : pr.diags) err(line_no, d.message);
            continue;
        }
        TemplateItem it;
        it.kind = TemplateItem::Kind::Instr;
        it.instr = *pr.value;
        it.line = line_no;
        items.push_back(std::move(it));
    }

    bool has_main = false;
    for (const auto& s : tpl.sections) has_main |= s.actor == "main";
    if (!has_main) err(0, "missing 'main' section");

    // label references must resolve
    for (const auto& s : tpl.sections)
        for (const auto& it : s.items) {
            if (it.kind == TemplateItem::Kind::Macro && !it.macro.label_arg.empty() &&
                !labels.count(it.macro.label_arg))
                err(it.line, "unresolved label '" + it.macro.label_arg + "'");
            if (it.kind == TemplateItem::Kind::Instr && !it.instr.branch_label.empty() &&
                !labels.count(it.instr.branch_label))
                err(it.line, "unresolved branch target '" + it.instr.branch_label + "'");
        }

    if (res.diags.empty()) res.value = std::move(tpl);
    return res;
}

/// Canonical printer; parse_template(print_template(t)) == t.
inline std::string print_template(const Template& tpl) {
    std::string out;
    for (const auto& s : tpl.sections) {
        if (!out.empty()) out += "\n";
        out += ".section ." + s.actor + "\n";
        for (const auto& it : s.items) {
            switch (it.kind) {
                case TemplateItem::Kind::Label:
                    out += "." + it.label + ":\n";
                    break;
                case TemplateItem::Kind::Macro: {
                    out += "  .macro." + it.macro.name;
                    if (it.macro.int_arg) out += "." + std::to_string(*it.macro.int_arg);
                    if (!it.macro.label_arg.empty()) out += "." + it.macro.label_arg;
                    out += ":\n";
                    break;
                }
                case TemplateItem::Kind::Instr:
                    if (!it.instr.branch_label.empty())
                        out += "  " + mnemonic_for(it.instr.instr.op, it.instr.instr.cond) + " " +
                               it.instr.branch_label + "\n";
                    else
                        out += "  " + format_instruction(it.instr.instr) + "\n";
                    break;
            }
        }
    }
    return out;
}

}  // namespace ilk
