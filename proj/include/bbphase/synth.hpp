#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "bbphase/phases.hpp"
#include "bbphase/trace.hpp"

namespace bbphase {

enum class EntryKind { Fallthrough, BackwardBranch, Call };

std::string_view entry_kind_name(EntryKind k);

/// A scripted stretch of execution. A leaf runs `event_count` executions of
/// one block; a composite (non-empty `nested`) runs its nested sequence
/// `inner_repetitions` times and ignores the block fields.
struct SegmentSpec {
    std::string label;
    double block_cpi = 1.0;
    std::uint32_t block_instruction_count = 1;
    std::uint64_t event_count = 1;
    std::vector<SegmentSpec> nested;
    std::uint64_t inner_repetitions = 1;
    EntryKind entry_kind = EntryKind::Fallthrough;  // how control enters a leaf's block

    bool is_leaf() const noexcept { return nested.empty(); }
    std::uint64_t length_instructions() const;
};

struct ScenarioSpec {
    std::vector<SegmentSpec> segments;
    std::uint64_t repetitions = 1;
    double noise_stddev = 0.0;  // CPI, per event
    std::uint64_t seed = 0;
    std::optional<std::uint64_t> quantum_length;

    // Throws std::invalid_argument.
    void validate() const;
    std::uint64_t total_instructions() const;
};

struct SyntheticTrace {
    ExecutionTrace trace;
    PhaseNode annotation;  // scripted ground-truth phases, same schema as analysis output
};

/// Deterministic golden-mode trace for a scenario (plus quantum samples when
/// quantum_length is set). Noise is Gaussian per event, drawn from
/// std::mt19937_64 seeded with `seed` through a Box-Muller transform, and
/// cycles are clamped to at least 0.05 per instruction.
///
/// Blocks are numbered in script order. A block's terminator encodes the
/// entry kind of the segment control passes to when it is first left:
/// calls and branches target that segment's block, and blocks entered by
/// backward branches are placed at lower addresses than the rest.
SyntheticTrace generate(const ScenarioSpec& spec);

ScenarioSpec scenario_from_json(const nlohmann::json& j);
nlohmann::ordered_json scenario_to_json(const ScenarioSpec& spec);

}  // namespace bbphase
