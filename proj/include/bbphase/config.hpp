#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>

namespace bbphase {

struct AnalysisConfig {
    std::size_t resolution = 4096;               // waveform samples per segment
    double boundary_threshold_fraction = 0.5;    // candidate threshold = fraction * main-spectrum magnitude
    double flat_cpi_range = 0.3;                 // CPI
    double flat_spectrum_ratio = 0.02;           // max non-DC magnitude vs DC
    std::size_t max_depth = 8;
    std::uint64_t min_segment_instructions = 64;

    // Throws std::invalid_argument naming the first out-of-range field.
    void validate() const;

    bool operator==(const AnalysisConfig&) const = default;
};

inline void AnalysisConfig::validate() const {
    if (resolution < 2) throw std::invalid_argument("resolution must be at least 2");
    if (!(boundary_threshold_fraction > 0.0 && boundary_threshold_fraction <= 1.0))
        throw std::invalid_argument("boundary_threshold_fraction must lie in (0, 1]");
    if (!(flat_cpi_range >= 0.0)) throw std::invalid_argument("flat_cpi_range must be non-negative");
    if (!(flat_spectrum_ratio > 0.0 && flat_spectrum_ratio < 1.0))
        throw std::invalid_argument("flat_spectrum_ratio must lie in (0, 1)");
    if (max_depth < 1) throw std::invalid_argument("max_depth must be positive");
    if (min_segment_instructions < 1) throw std::invalid_argument("min_segment_instructions must be positive");
}

}  // namespace bbphase
