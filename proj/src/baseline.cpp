#include "bbphase/baseline.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <stdexcept>

#include "bbphase/simd/kernels.hpp"
#include "numfmt.hpp"

namespace bbphase {

TqPhaseList tq_phases_from_quanta(std::span<const double> quantum_cpi, std::uint64_t quantum_length,
                                  std::uint64_t total_instructions, double merge_delta) {
    if (quantum_cpi.empty()) throw std::invalid_argument("no quanta to group");
    TqPhaseList out;
    out.quantum_length = quantum_length;
    out.total_instructions = total_instructions;
    out.merge_delta = merge_delta;

    double weighted = 0.0;
    double instructions = 0.0;
    for (std::size_t q = 0; q < quantum_cpi.size(); ++q) {
        const double len =
            static_cast<double>(std::min<std::uint64_t>(quantum_length, total_instructions - q * quantum_length));
        if (!out.phases.empty() && std::fabs(quantum_cpi[q] - weighted / instructions) <= merge_delta) {
            weighted += quantum_cpi[q] * len;
            instructions += len;
            out.phases.back().quantum_count += 1;
            out.phases.back().mean_cpi = weighted / instructions;
            continue;
        }
        weighted = quantum_cpi[q] * len;
        instructions = len;
        out.phases.push_back({q, 1, quantum_cpi[q]});
    }
    return out;
}

TqPhaseList tq_phases(const ExecutionTrace& trace, std::uint64_t quantum_length, double merge_delta) {
    if (quantum_length == 0) throw std::invalid_argument("quantum length must be positive");
    const std::uint64_t d = trace.total_instructions();
    if (trace.has_golden_cycles()) {
        const auto cpi = quantum_cpi_from_cycles(trace, std::min(quantum_length, d));
        return tq_phases_from_quanta(cpi, std::min(quantum_length, d), d, merge_delta);
    }
    if (trace.has_quanta() && trace.quantum_length() == quantum_length) {
        std::vector<double> cpi;
        cpi.reserve(trace.quanta().size());
        for (const auto& q : trace.quanta()) cpi.push_back(q.cpi);
        return tq_phases_from_quanta(cpi, quantum_length, d, merge_delta);
    }
    throw std::invalid_argument("time-quantum phases need golden cycles or quanta sampled at length " +
                                std::to_string(quantum_length));
}

double predicted_cpi_at(const PhaseNode& root, std::uint64_t instruction) {
    const PhaseNode* node = &root;
    std::uint64_t pos = instruction;
    for (;;) {
        const PhaseNode* next = nullptr;
        for (const auto& child : node->children) {
            if (child.occurrence > 1) {
                // fold the position into the template instance
                const auto len = static_cast<std::int64_t>(child.length);
                const auto rel = static_cast<std::int64_t>(pos) - static_cast<std::int64_t>(child.start);
                const std::int64_t folded = ((rel % len) + len) % len;
                pos = child.start + static_cast<std::uint64_t>(folded);
                next = &child;
                break;
            }
            if (pos >= child.start && pos < child.start + child.length) {
                next = &child;
                break;
            }
        }
        if (!next) return node->mean_cpi;
        node = next;
    }
}

Waveform predict_waveform(const PhaseNode& root, std::size_t resolution) {
    Waveform wf;
    wf.sample_stride = sample_stride_for(root.length, resolution);
    wf.origin_instruction = root.start;
    wf.length_instructions = root.length;
    const std::size_t n = sample_count_for(root.length, resolution);
    wf.samples.resize(n);
    wf.sample_heads.assign(n, root.head_block);
    for (std::size_t k = 0; k < n; ++k) wf.samples[k] = predicted_cpi_at(root, wf.offset_of(k));
    return wf;
}

Waveform predict_waveform(const TqPhaseList& list, std::size_t resolution) {
    Waveform wf;
    wf.sample_stride = sample_stride_for(list.total_instructions, resolution);
    wf.length_instructions = list.total_instructions;
    const std::size_t n = sample_count_for(list.total_instructions, resolution);
    wf.samples.resize(n);
    wf.sample_heads.assign(n, 0);
    std::size_t p = 0;
    for (std::size_t k = 0; k < n; ++k) {
        const std::uint64_t q = wf.offset_of(k) / list.quantum_length;
        while (q >= list.phases[p].start_quantum + list.phases[p].quantum_count) ++p;
        wf.samples[k] = list.phases[p].mean_cpi;
    }
    return wf;
}

ErrorReport error_rate(const Waveform& predicted, const Waveform& golden, std::string label, bool keep_samples) {
    if (predicted.size() != golden.size() || predicted.sample_stride != golden.sample_stride ||
        predicted.origin_instruction != golden.origin_instruction)
        throw std::invalid_argument("error rate needs waveforms on the same sample grid");
    if (golden.size() == 0) throw std::invalid_argument("empty waveform");
    if (std::any_of(golden.samples.begin(), golden.samples.end(), [](double g) { return !(g > 0.0); }))
        throw std::invalid_argument("golden waveform must be strictly positive");

    ErrorReport report;
    report.method_label = std::move(label);
    const double total = simd::active_kernels().abs_rel_error_sum(predicted.samples, golden.samples);
    report.mape_percent = 100.0 * total / static_cast<double>(golden.size());
    if (keep_samples) {
        report.per_sample_errors.resize(golden.size());
        for (std::size_t i = 0; i < golden.size(); ++i)
            report.per_sample_errors[i] = 100.0 * std::fabs(predicted.samples[i] - golden.samples[i]) / golden.samples[i];
    }
    return report;
}

std::vector<std::uint64_t> default_tq_lengths(std::uint64_t total_instructions) {
    return {std::max<std::uint64_t>(1, total_instructions / 64), std::max<std::uint64_t>(1, total_instructions / 8)};
}

std::size_t leaf_count(const PhaseNode& root) {
    if (root.children.empty()) return 1;
    std::size_t n = 0;
    for (const auto& c : root.children) n += leaf_count(c);
    return n;
}

ComparisonReport compare_methods(const ExecutionTrace& trace, const AnalysisConfig& config,
                                 std::span<const std::uint64_t> tq_lengths, double merge_delta,
                                 std::string trace_name, AttributionMode mode, bool keep_samples) {
    if (!trace.has_golden_cycles()) throw AttributionError("golden cycles required for comparison");
    ComparisonReport report;
    report.trace = std::move(trace_name);
    report.golden = build_golden_waveform(trace, config.resolution);

    auto add = [&](const Waveform& predicted, std::string label, std::size_t phases) {
        auto e = error_rate(predicted, report.golden, std::move(label), keep_samples);
        report.methods.push_back({std::move(e.method_label), e.mape_percent, phases, std::move(e.per_sample_errors)});
    };

    const PhaseNode tree = analyze(trace, config, mode);
    add(predict_waveform(tree, config.resolution), "bbfda", leaf_count(tree));
    for (std::uint64_t len : tq_lengths) {
        const TqPhaseList list = tq_phases(trace, len, merge_delta);
        add(predict_waveform(list, config.resolution), "tq-" + std::to_string(len), list.phases.size());
    }
    return report;
}

nlohmann::ordered_json comparison_to_json(const ComparisonReport& report) {
    nlohmann::ordered_json j;
    j["trace"] = report.trace;
    j["methods"] = nlohmann::ordered_json::array();
    for (const auto& m : report.methods) {
        nlohmann::ordered_json e;
        e["label"] = m.label;
        e["mape_percent"] = m.mape_percent;
        e["phase_count"] = m.phase_count;
        j["methods"].push_back(std::move(e));
    }
    return j;
}

void write_comparison_samples_csv(std::ostream& out, const ComparisonReport& report) {
    out << "instruction_offset,golden_cpi";
    for (const auto& m : report.methods) out << ',' << m.label << "_error_percent";
    out << '\n';
    for (std::size_t k = 0; k < report.golden.size(); ++k) {
        out << report.golden.offset_of(k) << ',' << detail::format_double(report.golden.samples[k]);
        for (const auto& m : report.methods) {
            if (m.per_sample_errors.size() != report.golden.size())
                throw std::logic_error("comparison was run without per-sample errors");
            out << ',' << detail::format_double(m.per_sample_errors[k]);
        }
        out << '\n';
    }
}

}  // namespace bbphase
