#include "bbphase/attribution.hpp"

#include <cmath>
#include <limits>
#include <ostream>

#include "numfmt.hpp"

namespace bbphase {

namespace {

ProfileMap attribute_golden(const ExecutionTrace& trace) {
    if (!trace.has_golden_cycles()) throw AttributionError("golden attribution requires per-event cycles");
    const auto& blocks = trace.blocks();
    std::vector<double> cycles(blocks.size(), 0.0);
    std::vector<std::uint64_t> count(blocks.size(), 0);
    for (const auto& e : trace.events()) {
        cycles[e.block] += *e.cycles;
        ++count[e.block];
    }
    ProfileMap out;
    for (std::size_t b = 0; b < blocks.size(); ++b) {
        if (count[b] == 0) continue;
        const double cpi = cycles[b] / (static_cast<double>(count[b]) * blocks[b].instruction_count);
        if (!(cpi > 0.0))
            throw AttributionError("block " + std::to_string(blocks[b].id) + " has non-positive golden cpi");
        out.emplace(blocks[b].id, BlockProfile{blocks[b].id, cpi, count[b], ProfileSource::Golden});
    }
    return out;
}

ProfileMap attribute_quantum(const ExecutionTrace& trace) {
    if (!trace.has_quanta()) throw AttributionError("quantum attribution requires quantum samples");
    const auto& blocks = trace.blocks();
    const auto& quanta = trace.quanta();
    const std::uint64_t qlen = *trace.quantum_length();
    // sum_q n_q * v_q accumulated one event at a time
    std::vector<double> weighted(blocks.size(), 0.0);
    std::vector<std::uint64_t> count(blocks.size(), 0);
    const auto& events = trace.events();
    for (std::size_t i = 0; i < events.size(); ++i) {
        const std::uint64_t q = trace.event_start(i) / qlen;
        weighted[events[i].block] += quanta[q].cpi;
        ++count[events[i].block];
    }
    ProfileMap out;
    for (std::size_t b = 0; b < blocks.size(); ++b) {
        if (count[b] == 0) continue;
        out.emplace(blocks[b].id, BlockProfile{blocks[b].id, weighted[b] / static_cast<double>(count[b]), count[b],
                                               ProfileSource::QuantumWeighted});
    }
    return out;
}

template <typename ValueOf>
Waveform sample_segment(const ExecutionTrace& trace, std::size_t resolution, Interval segment, ValueOf value_of) {
    if (resolution < 2) throw std::invalid_argument("waveform resolution must be at least 2");
    if (segment.length == 0 || segment.end() > trace.total_instructions())
        throw std::invalid_argument("waveform segment outside the trace");
    Waveform wf;
    wf.sample_stride = sample_stride_for(segment.length, resolution);
    wf.origin_instruction = segment.start;
    wf.length_instructions = segment.length;
    const std::size_t n = sample_count_for(segment.length, resolution);
    wf.samples.resize(n);
    wf.sample_heads.resize(n);
    const auto starts = trace.event_starts();
    std::size_t e = trace.event_at(segment.start);
    for (std::size_t k = 0; k < n; ++k) {
        const std::uint64_t offset = segment.start + k * wf.sample_stride;
        while (starts[e + 1] <= offset) ++e;
        wf.samples[k] = value_of(e);
        wf.sample_heads[k] = trace.block_of(e).id;
    }
    return wf;
}

}  // namespace

ProfileMap attribute_block_cpi(const ExecutionTrace& trace, AttributionMode mode) {
    switch (mode) {
        case AttributionMode::Golden: return attribute_golden(trace);
        case AttributionMode::Quantum: return attribute_quantum(trace);
        case AttributionMode::Auto: break;
    }
    return trace.has_quanta() ? attribute_quantum(trace) : attribute_golden(trace);
}

std::vector<double> quantum_cpi_from_cycles(const ExecutionTrace& trace, std::uint64_t quantum_length) {
    if (!trace.has_golden_cycles()) throw AttributionError("quantum CPI from cycles requires golden cycles");
    if (quantum_length == 0) throw std::invalid_argument("quantum length must be positive");
    const std::uint64_t d = trace.total_instructions();
    const std::size_t nq = static_cast<std::size_t>((d + quantum_length - 1) / quantum_length);
    std::vector<double> cycles(nq, 0.0);
    const auto& events = trace.events();
    for (std::size_t i = 0; i < events.size(); ++i) {
        const std::uint64_t begin = trace.event_start(i);
        const std::uint64_t end = trace.event_start(i + 1);
        const double per_instruction = *events[i].cycles / static_cast<double>(end - begin);
        std::uint64_t pos = begin;
        while (pos < end) {
            const std::uint64_t q = pos / quantum_length;
            const std::uint64_t piece_end = std::min(end, (q + 1) * quantum_length);
            cycles[q] += per_instruction * static_cast<double>(piece_end - pos);
            pos = piece_end;
        }
    }
    for (std::size_t q = 0; q < nq; ++q) {
        const std::uint64_t len = std::min<std::uint64_t>(quantum_length, d - q * quantum_length);
        cycles[q] /= static_cast<double>(len);
    }
    return cycles;
}

std::uint64_t sample_stride_for(std::uint64_t length, std::size_t resolution) {
    return (length + resolution - 1) / resolution;
}

std::size_t sample_count_for(std::uint64_t length, std::size_t resolution) {
    const std::uint64_t stride = sample_stride_for(length, resolution);
    return static_cast<std::size_t>((length + stride - 1) / stride);
}

std::vector<double> dense_block_cpi(const ExecutionTrace& trace, const ProfileMap& profiles) {
    const auto& blocks = trace.blocks();
    std::vector<double> cpi(blocks.size(), std::numeric_limits<double>::quiet_NaN());
    for (std::size_t b = 0; b < blocks.size(); ++b) {
        if (auto it = profiles.find(blocks[b].id); it != profiles.end()) cpi[b] = it->second.cpi;
    }
    for (const auto& e : trace.events()) {
        if (std::isnan(cpi[e.block]))
            throw AttributionError("missing profile for executed block " + std::to_string(blocks[e.block].id));
    }
    return cpi;
}

Waveform build_waveform(const ExecutionTrace& trace, const ProfileMap& profiles, std::size_t resolution) {
    const auto cpi = dense_block_cpi(trace, profiles);
    return build_waveform(trace, cpi, resolution, Interval{0, trace.total_instructions()});
}

Waveform build_waveform(const ExecutionTrace& trace, std::span<const double> block_cpi, std::size_t resolution,
                        Interval segment) {
    const auto& events = trace.events();
    return sample_segment(trace, resolution, segment, [&](std::size_t e) { return block_cpi[events[e].block]; });
}

Waveform build_golden_waveform(const ExecutionTrace& trace, std::size_t resolution) {
    if (!trace.has_golden_cycles()) throw AttributionError("golden waveform requires per-event cycles");
    const auto& events = trace.events();
    return sample_segment(trace, resolution, Interval{0, trace.total_instructions()}, [&](std::size_t e) {
        return *events[e].cycles / static_cast<double>(trace.block_of(e).instruction_count);
    });
}

void write_waveform_csv(std::ostream& out, const Waveform& wf) {
    out << "instruction_offset,cpi,block_id\n";
    for (std::size_t k = 0; k < wf.size(); ++k) {
        out << wf.offset_of(k) << ',' << detail::format_double(wf.samples[k]) << ',' << wf.sample_heads[k] << '\n';
    }
}

}  // namespace bbphase
