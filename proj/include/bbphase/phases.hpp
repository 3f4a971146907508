#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "bbphase/attribution.hpp"
#include "bbphase/config.hpp"
#include "bbphase/spectral.hpp"
#include "bbphase/trace.hpp"

namespace bbphase {

enum class Structure { None, Loop, Function };

std::string_view structure_name(Structure s);
Structure structure_from_name(std::string_view name);

/// One node of the hierarchical phase table.
///
/// A node with occurrence X > 1 is a template: it describes one instance
/// [start, start + length) of a pattern that repeats X times inside its
/// parent. Split halves and the root have occurrence 1.
struct PhaseNode {
    BlockId head_block = 0;
    Address head_address = 0;
    std::uint64_t start = 0;
    std::uint64_t length = 0;
    std::uint64_t occurrence = 1;
    double mean_cpi = 0.0;
    Structure structure = Structure::None;
    std::vector<PhaseNode> children;

    Interval interval() const noexcept { return {start, length}; }
    bool is_leaf() const noexcept { return children.empty(); }
    bool operator==(const PhaseNode&) const = default;
};

struct HeadCandidate {
    std::size_t event_index = 0;
    BlockId block_id = 0;

    bool operator==(const HeadCandidate&) const = default;
};

/// Second event of every consecutive pair whose block CPIs differ by more
/// than `threshold`, in execution order. Repeated blocks are all kept.
std::vector<HeadCandidate> candidate_heads(const ExecutionTrace& trace, const ProfileMap& profiles, double threshold);

// Same scan restricted to events [first_event, last_event); block_cpi is dense by block index.
std::vector<HeadCandidate> candidate_heads(const ExecutionTrace& trace, std::span<const double> block_cpi,
                                           double threshold, std::size_t first_event, std::size_t last_event);

struct Alignment {
    std::uint64_t start_instruction = 0;
    BlockId head_block = 0;
    std::size_t event_index = 0;
};

class NoAlignment : public std::runtime_error {
public:
    NoAlignment() : std::runtime_error("no candidate head block to align the phase with") {}
};

/// Picks the candidate block whose occurrences recur at a median gap
/// closest to `phase_length` and returns its first occurrence. Blocks seen
/// once only compete when no block recurs; then the earliest candidate
/// wins. Ties go to the earliest offset.
Alignment align_phase(const ExecutionTrace& trace, std::span<const HeadCandidate> candidates,
                      std::uint64_t phase_length);

struct StepSplit {
    std::size_t sample_index = 0;          // first sample after the boundary
    std::uint64_t boundary_instruction = 0;
    double mean_before = 0.0;
    double mean_after = 0.0;
};

/// Best single step in a waveform with no repeating pattern.
///
/// Chooses the boundary maximizing |mean after - mean before| and keeps it
/// only if that gap strictly exceeds the population standard deviation of
/// the whole waveform. Near-equal gaps (1e-9 relative) prefer the most
/// balanced split.
std::optional<StepSplit> split_step(const Waveform& wf);

/// Code structure at a phase head from the block that transferred control
/// to it: a call makes it a function entry, a backward branch a loop head.
Structure classify_structure(const BlockDescriptor& block, const BlockDescriptor* predecessor);

// Receives the spectrum of every analysed segment, keyed by the node's path from the root.
using SpectrumObserver = std::function<void(std::span<const std::size_t> path, const Spectrum& spectrum)>;

/// Recursive phase identification over the whole trace. Profiles come from
/// attribute_block_cpi(trace, mode).
PhaseNode analyze(const ExecutionTrace& trace, const AnalysisConfig& config = {},
                  AttributionMode mode = AttributionMode::Auto, const SpectrumObserver& observer = {});
PhaseNode analyze(const ExecutionTrace& trace, const ProfileMap& profiles, const AnalysisConfig& config,
                  const SpectrumObserver& observer = {});

// Throws std::logic_error if children overlap or leave their parent's interval.
void check_well_formed(const PhaseNode& root);

struct MarkerEntry {
    BlockId head_block = 0;
    std::vector<std::size_t> phase_path;  // child indices from the root
    double mean_cpi = 0.0;
    Structure structure = Structure::None;
    std::vector<std::vector<std::size_t>> nested_paths;  // deeper phases sharing this head

    bool operator==(const MarkerEntry&) const = default;
};

/// Per-head-address marker records; where nested phases share a head the
/// shallowest phase owns the entry.
struct MarkerTable {
    std::map<Address, MarkerEntry> entries;
};

MarkerTable export_markers(const PhaseNode& root);

// Resolves a path of child indices; throws std::out_of_range.
const PhaseNode& node_at(const PhaseNode& root, std::span<const std::size_t> path);

nlohmann::ordered_json phase_tree_to_json(const PhaseNode& node);
PhaseNode phase_tree_from_json(const nlohmann::json& j);
nlohmann::ordered_json markers_to_json(const MarkerTable& table);

}  // namespace bbphase
