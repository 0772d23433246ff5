#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "ilk/executor.hpp"

namespace ilk {

// Def. 1 checking: group inputs into classes with equal sigma^A and equal
// contract traces, then test hardware-trace distribution equality with the
// averaged two-sample chi-squared statistic and the adaptive sample ladder.

struct TraceDistribution {
    std::map<HardwareTrace, uint32_t> counts;
    uint32_t total = 0;

    static TraceDistribution from_sample(const std::vector<HardwareTrace>& traces) {
        TraceDistribution d;
        for (auto t : traces) ++d.counts[t];
        d.total = static_cast<uint32_t>(traces.size());
        return d;
    }
};

/// Averaged two-sample Pearson chi-squared over categorical trace values:
/// for each trace t, the expected count is the average of the two observed
/// counts; the statistic is the mean of the two per-sample chi-squared sums.
inline double chi2_statistic(const TraceDistribution& s1, const TraceDistribution& s2) {
    if (s1.total != s2.total || s1.total == 0)
        throw std::invalid_argument("chi2_statistic requires equal, nonzero sample sizes");
    double chi1 = 0.0, chi2 = 0.0;
    auto it1 = s1.counts.begin();
    auto it2 = s2.counts.begin();
    auto cell = [&](double o1, double o2) {
        const double e = (o1 + o2) / 2.0;  // e > 0 for any observed trace
        chi1 += (o1 - e) * (o1 - e) / e;
        chi2 += (o2 - e) * (o2 - e) / e;
    };
    while (it1 != s1.counts.end() || it2 != s2.counts.end()) {
        if (it2 == s2.counts.end() || (it1 != s1.counts.end() && it1->first < it2->first)) {
            cell(it1->second, 0.0);
            ++it1;
        } else if (it1 == s1.counts.end() || it2->first < it1->first) {
            cell(0.0, it2->second);
            ++it2;
        } else {
            cell(it1->second, it2->second);
            ++it1;
            ++it2;
        }
    }
    return (chi1 + chi2) / 2.0;
}

inline bool distributions_equal(const TraceDistribution& s1, const TraceDistribution& s2,
                                double threshold) {
    return chi2_statistic(s1, s2) < threshold;
}

// ---- input grouping ----

struct EquivalenceClass {
    std::vector<uint32_t> members;
    uint64_t contract_hash = 0;
    uint64_t observer_hash = 0;
};

/// Partition inputs by (observer-data hash, contract-trace hash). Classes
/// are ordered by first member; singleton classes carry no check.
inline std::vector<EquivalenceClass> group_inputs(const std::vector<uint64_t>& contract_hashes,
                                                  const std::vector<uint64_t>& observer_hashes) {
    if (contract_hashes.size() != observer_hashes.size())
        throw std::invalid_argument("group_inputs: one contract trace per input required");
    std::vector<EquivalenceClass> classes;
    std::map<std::pair<uint64_t, uint64_t>, size_t> index;
    for (uint32_t i = 0; i < contract_hashes.size(); ++i) {
        auto key = std::make_pair(observer_hashes[i], contract_hashes[i]);
        auto it = index.find(key);
        if (it == index.end()) {
            index.emplace(key, classes.size());
            classes.push_back({{i}, contract_hashes[i], observer_hashes[i]});
        } else {
            classes[it->second].members.push_back(i);
        }
    }
    return classes;
}

// ---- adaptive ladder ----

struct StageEvidence {
    uint32_t sample_size = 0;
    TraceDistribution s1, s2;
    double chi2 = 0.0;
};

struct ViolationReport {
    uint32_t program_index = 0;
    uint64_t program_seed = 0;
    uint32_t class_index = 0;
    uint64_t contract_hash = 0;
    uint64_t observer_hash = 0;
    uint32_t input_a = 0;
    uint32_t input_b = 0;
    std::vector<StageEvidence> stages;  // one per ladder stage, all unequal
};

struct IsolationCheckStats {
    uint64_t measurements = 0;
    uint32_t pairs_checked = 0;
    uint32_t pairs_escalated = 0;
    uint32_t classes_aborted = 0;
    std::vector<std::string> diagnostics;
};

using MeasureFn = std::function<TraceSample(uint32_t input_id, uint32_t sample_size)>;

/// Per-stage decision threshold. The raw averaged chi-squared of two
/// same-distribution samples grows with the sample size under transition
/// noise (every unpaired noise singleton adds ~0.5), so the configured
/// threshold is anchored at the base stage and scaled linearly with N.
inline double stage_threshold(double threshold, const SamplingPlan& plan, size_t stage) {
    return threshold * static_cast<double>(plan.schedule[stage]) /
           static_cast<double>(plan.base());
}

/// For every class and member pair: compare fresh samples at the base size;
/// on inequality re-draw both at each larger size. A pair is reported only
/// if it stays unequal through the whole ladder; equality at any stage
/// exonerates it.
inline std::vector<ViolationReport> check_isolation(const std::vector<EquivalenceClass>& classes,
                                                    const MeasureFn& measure,
                                                    const SamplingPlan& plan, double threshold,
                                                    IsolationCheckStats* stats = nullptr) {
    if (!plan.valid()) throw std::invalid_argument("sampling plan must be increasing");
    IsolationCheckStats local;
    IsolationCheckStats& st = stats ? *stats : local;
    std::vector<ViolationReport> reports;

    for (uint32_t ci = 0; ci < classes.size(); ++ci) {
        const EquivalenceClass& cls = classes[ci];
        bool class_ok = true;
        for (size_t i = 0; i < cls.members.size() && class_ok; ++i) {
            for (size_t j = i + 1; j < cls.members.size() && class_ok; ++j) {
                ++st.pairs_checked;
                std::vector<StageEvidence> stages;
                bool violation = true;
                for (size_t s = 0; s < plan.schedule.size(); ++s) {
                    const uint32_t n = plan.schedule[s];
                    TraceSample a = measure(cls.members[i], n);
                    TraceSample b = measure(cls.members[j], n);
                    st.measurements += 2ull * n;
                    if (a.discarded || b.discarded) {
                        st.diagnostics.push_back("class " + std::to_string(ci) +
                                                 ": measurement discarded, class aborted");
                        ++st.classes_aborted;
                        class_ok = false;
                        violation = false;
                        break;
                    }
                    StageEvidence ev;
                    ev.sample_size = n;
                    ev.s1 = TraceDistribution::from_sample(a.traces);
                    ev.s2 = TraceDistribution::from_sample(b.traces);
                    ev.chi2 = chi2_statistic(ev.s1, ev.s2);
                    stages.push_back(std::move(ev));
                    if (stages.back().chi2 < stage_threshold(threshold, plan, s)) {
                        violation = false;  // exonerated
                        break;
                    }
                    if (s == 0) ++st.pairs_escalated;
                }
                if (violation) {
                    ViolationReport r;
                    r.class_index = ci;
                    r.contract_hash = cls.contract_hash;
                    r.observer_hash = cls.observer_hash;
                    r.input_a = cls.members[i];
                    r.input_b = cls.members[j];
                    r.stages = std::move(stages);
                    reports.push_back(std::move(r));
                }
            }
        }
    }
    return reports;
}

}  // namespace ilk
