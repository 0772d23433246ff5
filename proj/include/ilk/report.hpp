#pragma once

#include <cstdint>
#include <cstdio>
#include <sstream>
#include <string>
#include <vector>

#include "ilk/analyzer.hpp"
#include "ilk/config.hpp"
#include "ilk/package.hpp"

namespace ilk {

// Violation reports are self-contained text files: executor/analyzer knobs,
// seeds, the program disassembly, the full package (base64) and the
// per-stage trace histograms, enough to re-run the whole pipeline.

namespace b64 {

inline const char* alphabet() {
    return "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
}

inline std::string encode(const std::vector<uint8_t>& data) {
    std::string out;
    out.reserve((data.size() + 2) / 3 * 4);
    const char* tab = alphabet();
    size_t i = 0;
    for (; i + 3 <= data.size(); i += 3) {
        uint32_t v = (data[i] << 16) | (data[i + 1] << 8) | data[i + 2];
        out += tab[(v >> 18) & 63];
        out += tab[(v >> 12) & 63];
        out += tab[(v >> 6) & 63];
        out += tab[v & 63];
    }
    if (i + 1 == data.size()) {
        uint32_t v = data[i] << 16;
        out += tab[(v >> 18) & 63];
        out += tab[(v >> 12) & 63];
        out += "==";
    } else if (i + 2 == data.size()) {
        uint32_t v = (data[i] << 16) | (data[i + 1] << 8);
        out += tab[(v >> 18) & 63];
        out += tab[(v >> 12) & 63];
        out += tab[(v >> 6) & 63];
        out += '=';
    }
    return out;
}

inline std::vector<uint8_t> decode(const std::string& text) {
    auto val = [](char c) -> int {
        if (c >= 'A' && c <= 'Z') return c - 'A';
        if (c >= 'a' && c <= 'z') return c - 'a' + 26;
        if (c >= '0' && c <= '9') return c - '0' + 52;
        if (c == '+') return 62;
        if (c == '/') return 63;
        return -1;
    };
    std::vector<uint8_t> out;
    uint32_t acc = 0;
    int bits = 0;
    for (char c : text) {
        if (c == '\n' || c == '\r' || c == ' ' || c == '=') continue;
        int v = val(c);
        if (v < 0) throw std::runtime_error("invalid base64 character");
        acc = (acc << 6) | static_cast<uint32_t>(v);
        bits += 6;
        if (bits >= 8) {
            bits -= 8;
            out.push_back(static_cast<uint8_t>((acc >> bits) & 0xff));
        }
    }
    return out;
}

}  // namespace b64

struct PersistedViolation {
    ViolationReport violation;
    uint32_t program_index = 0;
    uint64_t program_seed = 0;
    uint64_t noise_seed = 0;
    ExecutorKnobs knobs;
    double chi2_threshold = 8.0;
    SamplingPlan plan;
    std::string assembly;
    std::vector<uint8_t> package_bytes;
};

namespace report_detail {

inline std::string bugs_csv(const BugToggles& b) {
    std::string s;
    auto add = [&](bool on, const char* name) {
        if (!on) return;
        if (!s.empty()) s += ",";
        s += name;
    };
    add(b.meltdown_us, "meltdown_us");
    add(b.foreshadow_p, "foreshadow_p");
    add(b.mds_assist, "mds_assist");
    add(b.dss_divider, "dss_divider");
    add(b.rsrr_priv, "rsrr_priv");
    add(b.smsw_umip_analog, "smsw_umip_analog");
    return s.empty() ? "none" : s;
}

inline void bugs_from_csv(const std::string& s, BugToggles& b) {
    b = BugToggles{};
    size_t pos = 0;
    while (pos < s.size()) {
        size_t comma = s.find(',', pos);
        std::string name = s.substr(pos, comma == std::string::npos ? s.size() - pos : comma - pos);
        if (name == "meltdown_us") b.meltdown_us = true;
        else if (name == "foreshadow_p") b.foreshadow_p = true;
        else if (name == "mds_assist") b.mds_assist = true;
        else if (name == "dss_divider") b.dss_divider = true;
        else if (name == "rsrr_priv") b.rsrr_priv = true;
        else if (name == "smsw_umip_analog") b.smsw_umip_analog = true;
        if (comma == std::string::npos) break;
        pos = comma + 1;
    }
}

inline const char* kernel_isolation_name(KernelIsolation k) {
    switch (k) {
        case KernelIsolation::None:
            return "none";
        case KernelIsolation::PBitClear:
            return "p_bit_clear";
        case KernelIsolation::Unmap:
            return "unmap";
    }
    return "none";
}

inline std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline std::string fmt_hist(const TraceDistribution& d) {
    std::string out;
    char buf[40];
    for (const auto& [trace, count] : d.counts) {
        std::snprintf(buf, sizeof(buf), "%016llx:%u ", static_cast<unsigned long long>(trace),
                      count);
        out += buf;
    }
    if (!out.empty()) out.pop_back();
    return out;
}

}  // namespace report_detail

inline std::string write_report_text(const PersistedViolation& pv) {
    using namespace report_detail;
    std::string out = "ILKREPORT 1\n";
    char buf[128];
    auto kv = [&](const std::string& k, const std::string& v) { out += k + ": " + v + "\n"; };
    kv("program_index", std::to_string(pv.program_index));
    std::snprintf(buf, sizeof(buf), "0x%016llx", static_cast<unsigned long long>(pv.program_seed));
    kv("program_seed", buf);
    std::snprintf(buf, sizeof(buf), "0x%016llx", static_cast<unsigned long long>(pv.noise_seed));
    kv("noise_seed", buf);
    kv("class_index", std::to_string(pv.violation.class_index));
    std::snprintf(buf, sizeof(buf), "0x%016llx",
                  static_cast<unsigned long long>(pv.violation.observer_hash));
    kv("observer_hash", buf);
    std::snprintf(buf, sizeof(buf), "0x%016llx",
                  static_cast<unsigned long long>(pv.violation.contract_hash));
    kv("contract_hash", buf);
    kv("input_a", std::to_string(pv.violation.input_a));
    kv("input_b", std::to_string(pv.violation.input_b));
    kv("bugs", bugs_csv(pv.knobs.bugs));
    kv("noise_probability", fmt_double(pv.knobs.noise_probability));
    kv("memory_aliasing", pv.knobs.memory_aliasing ? "1" : "0");
    kv("kernel_isolation", kernel_isolation_name(pv.knobs.kernel_isolation));
    kv("instruction_budget", std::to_string(pv.knobs.instruction_budget));
    kv("priv_read_disable", pv.knobs.priv_read_disable ? "1" : "0");
    kv("chi2_threshold", fmt_double(pv.chi2_threshold));
    {
        std::string sched;
        for (auto n : pv.plan.schedule) sched += std::to_string(n) + " ";
        if (!sched.empty()) sched.pop_back();
        kv("sample_schedule", sched);
    }
    kv("verdict", "violation");
    out += "begin assembly\n" + pv.assembly;
    if (!pv.assembly.empty() && pv.assembly.back() != '\n') out += "\n";
    out += "end assembly\n";
    out += "begin package\n";
    std::string enc = b64::encode(pv.package_bytes);
    for (size_t i = 0; i < enc.size(); i += 76) out += enc.substr(i, 76) + "\n";
    out += "end package\n";
    out += "begin stages\n";
    for (const auto& st : pv.violation.stages) {
        out += "stage " + std::to_string(st.sample_size) + "\n";
        out += "s1 " + fmt_hist(st.s1) + "\n";
        out += "s2 " + fmt_hist(st.s2) + "\n";
        out += "chi2 " + fmt_double(st.chi2) + "\n";
    }
    out += "end stages\n";
    return out;
}

inline PersistedViolation parse_report_text(const std::string& text) {
    using namespace report_detail;
    PersistedViolation pv;
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || line != "ILKREPORT 1")
        throw std::runtime_error("not an ILKREPORT file (version mismatch?)");

    auto parse_u64 = [](const std::string& s) -> uint64_t {
        return std::stoull(s, nullptr, 0);
    };
    bool in_stages = false, in_package = false, in_assembly = false;
    std::string package_b64;
    StageEvidence* stage = nullptr;
    auto parse_hist = [](const std::string& s) {
        TraceDistribution d;
        std::istringstream hs(s);
        std::string cell;
        while (hs >> cell) {
            auto colon = cell.find(':');
            if (colon == std::string::npos) throw std::runtime_error("bad histogram cell");
            uint64_t t = std::stoull(cell.substr(0, colon), nullptr, 16);
            uint32_t c = static_cast<uint32_t>(std::stoul(cell.substr(colon + 1)));
            d.counts[t] = c;
            d.total += c;
        }
        return d;
    };

    while (std::getline(in, line)) {
        if (in_assembly) {
            if (line == "end assembly")
                in_assembly = false;
            else
                pv.assembly += line + "\n";
            continue;
        }
        if (in_package) {
            if (line == "end package")
                in_package = false;
            else
                package_b64 += line;
            continue;
        }
        if (in_stages) {
            if (line == "end stages") {
                in_stages = false;
                continue;
            }
            if (line.rfind("stage ", 0) == 0) {
                pv.violation.stages.emplace_back();
                stage = &pv.violation.stages.back();
                stage->sample_size = static_cast<uint32_t>(std::stoul(line.substr(6)));
            } else if (line.rfind("s1 ", 0) == 0 && stage) {
                stage->s1 = parse_hist(line.substr(3));
            } else if (line.rfind("s2 ", 0) == 0 && stage) {
                stage->s2 = parse_hist(line.substr(3));
            } else if (line.rfind("chi2 ", 0) == 0 && stage) {
                stage->chi2 = std::stod(line.substr(5));
            } else {
                throw std::runtime_error("bad stages section line: " + line);
            }
            continue;
        }
        if (line == "begin assembly") {
            in_assembly = true;
            continue;
        }
        if (line == "begin package") {
            in_package = true;
            continue;
        }
        if (line == "begin stages") {
            in_stages = true;
            continue;
        }
        auto colon = line.find(": ");
        if (colon == std::string::npos) continue;
        std::string key = line.substr(0, colon), val = line.substr(colon + 2);
        if (key == "program_index")
            pv.program_index = static_cast<uint32_t>(std::stoul(val));
        else if (key == "program_seed")
            pv.program_seed = parse_u64(val);
        else if (key == "noise_seed")
            pv.noise_seed = parse_u64(val);
        else if (key == "class_index")
            pv.violation.class_index = static_cast<uint32_t>(std::stoul(val));
        else if (key == "observer_hash")
            pv.violation.observer_hash = parse_u64(val);
        else if (key == "contract_hash")
            pv.violation.contract_hash = parse_u64(val);
        else if (key == "input_a")
            pv.violation.input_a = static_cast<uint32_t>(std::stoul(val));
        else if (key == "input_b")
            pv.violation.input_b = static_cast<uint32_t>(std::stoul(val));
        else if (key == "bugs")
            bugs_from_csv(val, pv.knobs.bugs);
        else if (key == "noise_probability")
            pv.knobs.noise_probability = std::stod(val);
        else if (key == "memory_aliasing")
            pv.knobs.memory_aliasing = val == "1";
        else if (key == "kernel_isolation") {
            if (val == "p_bit_clear")
                pv.knobs.kernel_isolation = KernelIsolation::PBitClear;
            else if (val == "unmap")
                pv.knobs.kernel_isolation = KernelIsolation::Unmap;
            else
                pv.knobs.kernel_isolation = KernelIsolation::None;
        } else if (key == "instruction_budget")
            pv.knobs.instruction_budget = static_cast<uint32_t>(std::stoul(val));
        else if (key == "priv_read_disable")
            pv.knobs.priv_read_disable = val == "1";
        else if (key == "chi2_threshold")
            pv.chi2_threshold = std::stod(val);
        else if (key == "sample_schedule") {
            pv.plan.schedule.clear();
            std::istringstream ss(val);
            uint32_t n;
            while (ss >> n) pv.plan.schedule.push_back(n);
        }
        pv.violation.program_index = pv.program_index;
        pv.violation.program_seed = pv.program_seed;
    }
    pv.package_bytes = b64::decode(package_b64);
    if (pv.package_bytes.empty()) throw std::runtime_error("report carries no package");
    if (!pv.plan.valid()) throw std::runtime_error("report carries an invalid sample schedule");
    return pv;
}

}  // namespace ilk
