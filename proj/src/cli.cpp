#include "bbphase/cli.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>

#include "bbphase/attribution.hpp"
#include "bbphase/baseline.hpp"
#include "bbphase/phases.hpp"
#include "bbphase/spectral.hpp"
#include "bbphase/synth.hpp"
#include "bbphase/trace.hpp"

namespace bbphase::cli {

namespace {

namespace fs = std::filesystem;

// Usage and I/O problems map to exit code 2.
class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct ConfigFlags {
    std::optional<std::string> config_file;
    std::optional<std::size_t> resolution;
    std::optional<double> boundary_threshold_fraction;
    std::optional<double> flat_cpi_range;
    std::optional<double> flat_spectrum_ratio;
    std::optional<std::size_t> max_depth;
    std::optional<std::uint64_t> min_segment_instructions;
    std::string profile_source = "auto";

    void attach(CLI::App& app) {
        app.add_option("--config", config_file, "JSON file with analysis settings; flags override it");
        app.add_option("--resolution", resolution, "waveform samples per segment");
        app.add_option("--boundary-threshold-fraction", boundary_threshold_fraction);
        app.add_option("--flat-cpi-range", flat_cpi_range);
        app.add_option("--flat-spectrum-ratio", flat_spectrum_ratio);
        app.add_option("--max-depth", max_depth);
        app.add_option("--min-segment-instructions", min_segment_instructions);
        app.add_option("--profile-source", profile_source, "block CPI source")
            ->check(CLI::IsMember({"auto", "golden", "quantum"}));
    }

    AnalysisConfig resolve() const {
        AnalysisConfig c;
        if (config_file) {
            std::ifstream in(*config_file);
            if (!in) throw UsageError("cannot open config " + *config_file);
            nlohmann::json j;
            try {
                j = nlohmann::json::parse(in);
                c.resolution = j.value("resolution", c.resolution);
                c.boundary_threshold_fraction = j.value("boundary_threshold_fraction", c.boundary_threshold_fraction);
                c.flat_cpi_range = j.value("flat_cpi_range", c.flat_cpi_range);
                c.flat_spectrum_ratio = j.value("flat_spectrum_ratio", c.flat_spectrum_ratio);
                c.max_depth = j.value("max_depth", c.max_depth);
                c.min_segment_instructions = j.value("min_segment_instructions", c.min_segment_instructions);
            } catch (const nlohmann::json::exception& e) {
                throw UsageError("bad config " + *config_file + ": " + e.what());
            }
        }
        if (resolution) c.resolution = *resolution;
        if (boundary_threshold_fraction) c.boundary_threshold_fraction = *boundary_threshold_fraction;
        if (flat_cpi_range) c.flat_cpi_range = *flat_cpi_range;
        if (flat_spectrum_ratio) c.flat_spectrum_ratio = *flat_spectrum_ratio;
        if (max_depth) c.max_depth = *max_depth;
        if (min_segment_instructions) c.min_segment_instructions = *min_segment_instructions;
        try {
            c.validate();
        } catch (const std::invalid_argument& e) {
            throw UsageError(e.what());
        }
        return c;
    }

    AttributionMode mode() const {
        if (profile_source == "golden") return AttributionMode::Golden;
        if (profile_source == "quantum") return AttributionMode::Quantum;
        return AttributionMode::Auto;
    }
};

ExecutionTrace load_trace(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw UsageError("cannot open trace " + path);
    try {
        return parse_trace(in);
    } catch (const TraceError& e) {
        throw UsageError(path + ": " + e.what());
    }
}

class Writer {
public:
    explicit Writer(CommandOutcome& outcome) : outcome_(outcome) {}

    template <typename Fn>
    void file(const fs::path& path, Fn&& fill) {
        std::ostringstream buffer;
        fill(buffer);
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        if (!out) throw UsageError("cannot write " + path.string());
        out << buffer.str();
        out.close();
        if (!out) throw UsageError("failed writing " + path.string());
        outcome_.emitted_files.push_back(path);
    }

    void json(const fs::path& path, const nlohmann::ordered_json& j) {
        file(path, [&](std::ostream& o) { o << j.dump(2) << '\n'; });
    }

private:
    CommandOutcome& outcome_;
};

std::string path_label(std::span<const std::size_t> path) {
    std::string s = "root";
    for (std::size_t i : path) s += "." + std::to_string(i);
    return s;
}

}  // namespace

CommandOutcome run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CommandOutcome outcome;
    CLI::App app{"Basic-block phase analysis over CPI traces", "bbphase"};
    app.require_subcommand(1);

    // analyze
    ConfigFlags analyze_flags;
    std::string analyze_trace, tree_path;
    std::optional<std::string> waveform_path, spectra_prefix, markers_path, prediction_path;
    auto* analyze_cmd = app.add_subcommand("analyze", "identify hierarchical phases in a trace");
    analyze_cmd->add_option("trace", analyze_trace, "trace file")->required();
    analyze_cmd->add_option("-o,--tree", tree_path, "phase tree JSON output")->required();
    analyze_cmd->add_option("--waveform", waveform_path, "whole-trace waveform CSV output");
    analyze_cmd->add_option("--spectra", spectra_prefix, "write <prefix>.<node-path>.csv per analysed segment");
    analyze_cmd->add_option("--markers", markers_path, "marker table JSON output");
    analyze_cmd->add_option("--prediction", prediction_path, "predicted CPI waveform CSV output");
    analyze_flags.attach(*analyze_cmd);

    // compare
    ConfigFlags compare_flags;
    std::string compare_trace, compare_out;
    std::vector<std::uint64_t> tq_lengths;
    double merge_delta = kDefaultMergeDelta;
    std::optional<std::string> samples_path;
    auto* compare_cmd = app.add_subcommand("compare", "MAPE of phase analysis vs time-quantum baselines");
    compare_cmd->add_option("trace", compare_trace, "golden-mode trace file")->required();
    compare_cmd->add_option("-o,--output", compare_out, "comparison JSON output")->required();
    compare_cmd->add_option("--tq", tq_lengths, "TQ quantum lengths in instructions (default D/64 D/8)")
        ->check(CLI::PositiveNumber);
    compare_cmd->add_option("--merge-delta", merge_delta, "TQ merge threshold in CPI")->check(CLI::PositiveNumber);
    compare_cmd->add_option("--samples", samples_path, "per-sample CSV output");
    compare_flags.attach(*compare_cmd);

    // synth
    std::string spec_path, out_prefix;
    auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic trace and its ground-truth annotation");
    synth_cmd->add_option("spec", spec_path, "scenario JSON")->required();
    synth_cmd->add_option("-o,--out-prefix", out_prefix, "writes <prefix>.trace and <prefix>.annotation.json")
        ->required();

    // spectrum
    ConfigFlags spectrum_flags;
    std::string spectrum_trace, spectrum_out;
    auto* spectrum_cmd = app.add_subcommand("spectrum", "whole-trace spectrum CSV");
    spectrum_cmd->add_option("trace", spectrum_trace, "trace file")->required();
    spectrum_cmd->add_option("-o,--output", spectrum_out, "spectrum CSV output")->required();
    spectrum_flags.attach(*spectrum_cmd);

    // markers
    std::string markers_tree, markers_out;
    auto* markers_cmd = app.add_subcommand("markers", "marker table from a saved phase tree");
    markers_cmd->add_option("tree", markers_tree, "phase tree JSON")->required();
    markers_cmd->add_option("-o,--output", markers_out, "marker table JSON output")->required();

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return outcome;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return outcome;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << '\n';
        outcome.exit_code = kUsageError;
        return outcome;
    }

    Writer write(outcome);
    try {
        if (*analyze_cmd) {
            const AnalysisConfig config = analyze_flags.resolve();
            const ExecutionTrace trace = load_trace(analyze_trace);
            const ProfileMap profiles = attribute_block_cpi(trace, analyze_flags.mode());
            std::vector<std::pair<std::string, Spectrum>> spectra;
            SpectrumObserver observer;
            if (spectra_prefix) {
                observer = [&](std::span<const std::size_t> path, const Spectrum& s) {
                    spectra.emplace_back(path_label(path), s);
                };
            }
            const PhaseNode tree = analyze(trace, profiles, config, observer);
            write.json(tree_path, phase_tree_to_json(tree));
            if (waveform_path) {
                const Waveform wf = build_waveform(trace, profiles, config.resolution);
                write.file(*waveform_path, [&](std::ostream& o) { write_waveform_csv(o, wf); });
            }
            for (const auto& [label, s] : spectra) {
                write.file(*spectra_prefix + "." + label + ".csv", [&](std::ostream& o) { write_spectrum_csv(o, s); });
            }
            if (markers_path) write.json(*markers_path, markers_to_json(export_markers(tree)));
            if (prediction_path) {
                const Waveform wf = predict_waveform(tree, config.resolution);
                write.file(*prediction_path, [&](std::ostream& o) { write_waveform_csv(o, wf); });
            }
        } else if (*compare_cmd) {
            const AnalysisConfig config = compare_flags.resolve();
            const ExecutionTrace trace = load_trace(compare_trace);
            if (!trace.has_golden_cycles()) throw UsageError("golden cycles required for comparison");
            if (tq_lengths.empty()) tq_lengths = default_tq_lengths(trace.total_instructions());

            const ComparisonReport report =
                compare_methods(trace, config, tq_lengths, merge_delta, fs::path(compare_trace).filename().string(),
                                compare_flags.mode(), samples_path.has_value());
            write.json(compare_out, comparison_to_json(report));
            if (samples_path)
                write.file(*samples_path, [&](std::ostream& o) { write_comparison_samples_csv(o, report); });
        } else if (*synth_cmd) {
            std::ifstream in(spec_path);
            if (!in) throw UsageError("cannot open scenario " + spec_path);
            ScenarioSpec spec;
            try {
                spec = scenario_from_json(nlohmann::json::parse(in));
            } catch (const nlohmann::json::exception& e) {
                throw UsageError("bad scenario " + spec_path + ": " + e.what());
            } catch (const std::invalid_argument& e) {
                throw UsageError("bad scenario " + spec_path + ": " + e.what());
            }
            const SyntheticTrace synthetic = generate(spec);
            write.file(out_prefix + ".trace", [&](std::ostream& o) { write_trace(o, synthetic.trace); });
            write.json(out_prefix + ".annotation.json", phase_tree_to_json(synthetic.annotation));
        } else if (*spectrum_cmd) {
            const AnalysisConfig config = spectrum_flags.resolve();
            const ExecutionTrace trace = load_trace(spectrum_trace);
            const Waveform wf = build_waveform(trace, attribute_block_cpi(trace, spectrum_flags.mode()), config.resolution);
            const Spectrum s = dft_magnitude(wf);
            write.file(spectrum_out, [&](std::ostream& o) { write_spectrum_csv(o, s); });
        } else if (*markers_cmd) {
            std::ifstream in(markers_tree);
            if (!in) throw UsageError("cannot open phase tree " + markers_tree);
            PhaseNode tree;
            try {
                tree = phase_tree_from_json(nlohmann::json::parse(in));
                check_well_formed(tree);
            } catch (const std::exception& e) {
                throw UsageError("bad phase tree " + markers_tree + ": " + e.what());
            }
            write.json(markers_out, markers_to_json(export_markers(tree)));
        }
    } catch (const UsageError& e) {
        err << "error: " << e.what() << '\n';
        outcome.exit_code = kUsageError;
    } catch (const AttributionError& e) {
        err << "error: " << e.what() << '\n';
        outcome.exit_code = kUsageError;
    } catch (const std::exception& e) {
        err << "analysis error: " << e.what() << '\n';
        outcome.exit_code = kAnalysisError;
    }
    return outcome;
}

}  // namespace bbphase::cli
