#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "bbphase/attribution.hpp"
#include "bbphase/config.hpp"
#include "bbphase/phases.hpp"
#include "bbphase/trace.hpp"

namespace bbphase {

struct TqPhase {
    std::uint64_t start_quantum = 0;
    std::uint64_t quantum_count = 0;
    double mean_cpi = 0.0;
};

/// Fixed time-quantum phases: consecutive quanta whose CPI stays within
/// merge_delta of the running phase mean are grouped.
struct TqPhaseList {
    std::uint64_t quantum_length = 0;
    std::uint64_t total_instructions = 0;
    double merge_delta = 0.0;
    std::vector<TqPhase> phases;
};

/// Golden traces derive per-quantum CPI from cycles; quantum-only traces
/// must have been sampled at the same quantum length.
TqPhaseList tq_phases(const ExecutionTrace& trace, std::uint64_t quantum_length, double merge_delta);

// Greedy grouping over explicit per-quantum CPIs (last quantum may be short).
TqPhaseList tq_phases_from_quanta(std::span<const double> quantum_cpi, std::uint64_t quantum_length,
                                  std::uint64_t total_instructions, double merge_delta);

/// Piecewise-constant CPI predicted by a phase tree: every instruction takes
/// the mean CPI of the deepest phase covering it, with repeating templates
/// tiled periodically across their parent.
Waveform predict_waveform(const PhaseNode& root, std::size_t resolution);
Waveform predict_waveform(const TqPhaseList& phases, std::size_t resolution);

// Predicted CPI at one instruction offset.
double predicted_cpi_at(const PhaseNode& root, std::uint64_t instruction);

struct ErrorReport {
    std::string method_label;
    double mape_percent = 0.0;
    std::vector<double> per_sample_errors;  // percent, filled on request
};

/// Mean absolute percentage error over aligned samples.
ErrorReport error_rate(const Waveform& predicted, const Waveform& golden, std::string label = {},
                       bool keep_samples = false);

struct MethodResult {
    std::string label;
    double mape_percent = 0.0;
    std::size_t phase_count = 0;
    std::vector<double> per_sample_errors;  // percent, when requested
};

struct ComparisonReport {
    std::string trace;
    std::vector<MethodResult> methods;
    Waveform golden;
};

// Quantum lengths D/64 and D/8 (at least 1).
std::vector<std::uint64_t> default_tq_lengths(std::uint64_t total_instructions);

inline constexpr double kDefaultMergeDelta = 0.1;

std::size_t leaf_count(const PhaseNode& root);

/// Runs the frequency-domain analysis and each TQ configuration against the
/// trace's golden waveform. Requires golden cycles.
ComparisonReport compare_methods(const ExecutionTrace& trace, const AnalysisConfig& config,
                                 std::span<const std::uint64_t> tq_lengths, double merge_delta,
                                 std::string trace_name = {}, AttributionMode mode = AttributionMode::Auto,
                                 bool keep_samples = false);

nlohmann::ordered_json comparison_to_json(const ComparisonReport& report);

// CSV: instruction_offset,golden_cpi,<label>_error_percent... (needs keep_samples).
void write_comparison_samples_csv(std::ostream& out, const ComparisonReport& report);

}  // namespace bbphase
