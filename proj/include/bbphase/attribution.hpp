#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <stdexcept>
#include <vector>

#include "bbphase/trace.hpp"

namespace bbphase {

enum class ProfileSource { Golden, QuantumWeighted };

struct BlockProfile {
    BlockId block_id = 0;
    double cpi = 0.0;                    // p_b
    std::uint64_t occurrence_total = 0;  // number of dynamic executions
    ProfileSource source = ProfileSource::Golden;
};

using ProfileMap = std::map<BlockId, BlockProfile>;

enum class AttributionMode {
    Auto,     // quantum-weighted when quanta exist, else golden
    Golden,
    Quantum,
};

class AttributionError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Per-block CPI.
///
/// Quantum mode takes the weighted average of the quantum CPIs v_q a block
/// occurs in, weighted by its occurrence count n_q in each quantum. An event
/// belongs to the quantum holding its first instruction. Golden mode divides
/// the block's summed cycles by its summed instructions. Blocks that never
/// execute are left out of the map.
ProfileMap attribute_block_cpi(const ExecutionTrace& trace, AttributionMode mode = AttributionMode::Auto);

/// Per-quantum CPI computed from golden cycles, with each event's cycles
/// spread evenly over its instructions (what a hardware counter sampled at
/// quantum boundaries would report). Requires golden cycles.
std::vector<double> quantum_cpi_from_cycles(const ExecutionTrace& trace, std::uint64_t quantum_length);

// Half-open instruction interval [start, start + length).
struct Interval {
    std::uint64_t start = 0;
    std::uint64_t length = 0;

    std::uint64_t end() const noexcept { return start + length; }
    bool operator==(const Interval&) const = default;
};

/// CPI sampled on a uniform instruction grid by zero-order hold.
struct Waveform {
    std::vector<double> samples;
    std::uint64_t sample_stride = 1;
    std::uint64_t origin_instruction = 0;
    std::uint64_t length_instructions = 0;  // instructions covered by the source segment
    std::vector<BlockId> sample_heads;      // block executing at each sample offset

    std::size_t size() const noexcept { return samples.size(); }
    std::uint64_t offset_of(std::size_t k) const noexcept { return origin_instruction + k * sample_stride; }
};

// Grid used for `length` instructions at the requested resolution:
// stride = ceil(length / resolution), count = ceil(length / stride).
std::uint64_t sample_stride_for(std::uint64_t length, std::size_t resolution);
std::size_t sample_count_for(std::uint64_t length, std::size_t resolution);

/// Dense per-block-index CPI table; throws AttributionError if an executed
/// block has no profile.
std::vector<double> dense_block_cpi(const ExecutionTrace& trace, const ProfileMap& profiles);

Waveform build_waveform(const ExecutionTrace& trace, const ProfileMap& profiles, std::size_t resolution);
Waveform build_waveform(const ExecutionTrace& trace, std::span<const double> block_cpi, std::size_t resolution,
                        Interval segment);

/// Golden waveform: each instruction carries its event's cycles / instructions.
Waveform build_golden_waveform(const ExecutionTrace& trace, std::size_t resolution);

// CSV with header instruction_offset,cpi,block_id.
void write_waveform_csv(std::ostream& out, const Waveform& wf);

}  // namespace bbphase
