#include "bbphase/phases.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <unordered_map>

#include "bbphase/simd/kernels.hpp"
#include "numfmt.hpp"

namespace bbphase {

namespace {

// Mean |s[n] - s[n + lag]| relative to the mean absolute deviation of the
// samples: near 0 when the waveform repeats every `lag` samples.
double period_mismatch(std::span<const double> s, std::size_t lag) {
    const std::size_t n = s.size();
    if (lag == 0 || lag >= n) return std::numeric_limits<double>::infinity();
    double mean = 0.0;
    for (double v : s) mean += v;
    mean /= static_cast<double>(n);
    double spread = 0.0;
    for (double v : s) spread += std::fabs(v - mean);
    spread /= static_cast<double>(n);
    if (!(spread > 0.0)) return 0.0;
    double diff = 0.0;
    for (std::size_t i = 0; i + lag < n; ++i) diff += std::fabs(s[i] - s[i + lag]);
    return diff / static_cast<double>(n - lag) / spread;
}

constexpr double kPeriodTolerance = 0.2;

}  // namespace

std::string_view structure_name(Structure s) {
    switch (s) {
        case Structure::Loop: return "loop";
        case Structure::Function: return "function";
        case Structure::None: break;
    }
    return "none";
}

Structure structure_from_name(std::string_view name) {
    if (name == "loop") return Structure::Loop;
    if (name == "function") return Structure::Function;
    if (name == "none") return Structure::None;
    throw std::invalid_argument("unknown structure '" + std::string(name) + "'");
}

std::vector<HeadCandidate> candidate_heads(const ExecutionTrace& trace, const ProfileMap& profiles, double threshold) {
    const auto cpi = dense_block_cpi(trace, profiles);
    return candidate_heads(trace, cpi, threshold, 0, trace.events().size());
}

std::vector<HeadCandidate> candidate_heads(const ExecutionTrace& trace, std::span<const double> block_cpi,
                                           double threshold, std::size_t first_event, std::size_t last_event) {
    const auto& events = trace.events();
    std::vector<HeadCandidate> out;
    for (std::size_t i = std::max<std::size_t>(first_event, 1); i < last_event; ++i) {
        const double diff = std::fabs(block_cpi[events[i - 1].block] - block_cpi[events[i].block]);
        if (diff > threshold) out.push_back({i, trace.block_of(i).id});
    }
    return out;
}

Alignment align_phase(const ExecutionTrace& trace, std::span<const HeadCandidate> candidates,
                      std::uint64_t phase_length) {
    if (candidates.empty()) throw NoAlignment();

    struct Group {
        std::size_t first_event;
        std::vector<std::uint64_t> offsets;
    };
    std::vector<BlockId> order;
    std::unordered_map<BlockId, Group> groups;
    for (const auto& c : candidates) {
        auto [it, fresh] = groups.try_emplace(c.block_id, Group{c.event_index, {}});
        if (fresh) order.push_back(c.block_id);
        it->second.first_event = std::min(it->second.first_event, c.event_index);
        it->second.offsets.push_back(trace.event_start(c.event_index));
    }

    const double target = static_cast<double>(phase_length);
    std::optional<BlockId> best;
    double best_score = std::numeric_limits<double>::infinity();
    std::uint64_t best_offset = 0;
    for (BlockId id : order) {
        auto& g = groups.at(id);
        if (g.offsets.size() < 2) continue;
        std::sort(g.offsets.begin(), g.offsets.end());
        std::vector<double> gaps;
        gaps.reserve(g.offsets.size() - 1);
        for (std::size_t i = 1; i < g.offsets.size(); ++i)
            gaps.push_back(static_cast<double>(g.offsets[i] - g.offsets[i - 1]));
        std::sort(gaps.begin(), gaps.end());
        const std::size_t m = gaps.size();
        const double median = m % 2 ? gaps[m / 2] : 0.5 * (gaps[m / 2 - 1] + gaps[m / 2]);
        const double score = std::fabs(median - target);
        const std::uint64_t offset = g.offsets.front();
        if (!best || score < best_score || (score == best_score && offset < best_offset)) {
            best = id;
            best_score = score;
            best_offset = offset;
        }
    }

    if (!best) {
        auto earliest = std::min_element(candidates.begin(), candidates.end(),
                                         [](const auto& a, const auto& b) { return a.event_index < b.event_index; });
        return {trace.event_start(earliest->event_index), earliest->block_id, earliest->event_index};
    }
    const auto& g = groups.at(*best);
    return {trace.event_start(g.first_event), *best, g.first_event};
}

std::optional<StepSplit> split_step(const Waveform& wf) {
    const std::size_t n = wf.size();
    if (n < 2) return std::nullopt;
    const auto& k = simd::active_kernels();
    double lo = 0.0, hi = 0.0;
    k.min_max(wf.samples, lo, hi);
    if (lo == hi) return std::nullopt;

    std::vector<double> prefix(n + 1, 0.0);
    for (std::size_t i = 0; i < n; ++i) prefix[i + 1] = prefix[i] + wf.samples[i];
    const double mean = prefix[n] / static_cast<double>(n);
    double var = 0.0;
    for (double s : wf.samples) var += (s - mean) * (s - mean);
    const double stddev = std::sqrt(var / static_cast<double>(n));

    std::vector<double> gaps(n - 1);
    k.mean_gaps(prefix, gaps);
    const double top = *std::max_element(gaps.begin(), gaps.end());
    // gaps at the level of summation round-off are not steps
    if (!(top > stddev) || top <= 1e-12 * std::fabs(mean)) return std::nullopt;

    // among near-maximal gaps take the split closest to the middle
    const double cutoff = top * (1.0 - 1e-9);
    std::size_t best = 0;
    std::size_t best_dist = std::numeric_limits<std::size_t>::max();
    for (std::size_t i = 0; i < gaps.size(); ++i) {
        if (gaps[i] < cutoff) continue;
        const std::size_t t = i + 1;
        const std::size_t dist = 2 * t > n ? 2 * t - n : n - 2 * t;
        if (dist < best_dist) {
            best = t;
            best_dist = dist;
        }
    }
    StepSplit split;
    split.sample_index = best;
    split.boundary_instruction = wf.offset_of(best);
    split.mean_before = prefix[best] / static_cast<double>(best);
    split.mean_after = (prefix[n] - prefix[best]) / static_cast<double>(n - best);
    return split;
}

Structure classify_structure(const BlockDescriptor& block, const BlockDescriptor* predecessor) {
    (void)block;
    if (!predecessor) return Structure::None;
    if (predecessor->terminator == Terminator::Call) return Structure::Function;
    if (predecessor->terminator == Terminator::Branch && predecessor->target_address &&
        *predecessor->target_address <= predecessor->start_address)
        return Structure::Loop;
    return Structure::None;
}

namespace {

class Analyzer {
public:
    Analyzer(const ExecutionTrace& trace, std::vector<double> block_cpi, const AnalysisConfig& config,
             const SpectrumObserver& observer)
        : trace_(trace), cpi_(std::move(block_cpi)), config_(config), observer_(observer) {}

    PhaseNode run() {
        PhaseNode root = make_node(Interval{0, trace_.total_instructions()}, 0, 1);
        std::vector<std::size_t> path;
        expand(root, 0, path);
        return root;
    }

private:
    double event_cpi(std::size_t e) const { return cpi_[trace_.events()[e].block]; }

    double mean_cpi(Interval iv) const {
        std::size_t e = trace_.event_at(iv.start);
        double weighted = 0.0;
        while (e < trace_.events().size() && trace_.event_start(e) < iv.end()) {
            const std::uint64_t lo = std::max(iv.start, trace_.event_start(e));
            const std::uint64_t hi = std::min(iv.end(), trace_.event_start(e + 1));
            weighted += event_cpi(e) * static_cast<double>(hi - lo);
            ++e;
        }
        return weighted / static_cast<double>(iv.length);
    }

    // The head's code structure comes from the first dynamic entry into the
    // head block from a different block, searching forward from head_event.
    Structure structure_at(std::size_t head_event) const {
        const auto& events = trace_.events();
        const std::uint32_t head = events[head_event].block;
        for (std::size_t e = head_event; e < events.size(); ++e) {
            if (events[e].block != head || e == 0 || events[e - 1].block == head) continue;
            return classify_structure(trace_.blocks()[head], &trace_.blocks()[events[e - 1].block]);
        }
        return Structure::None;
    }

    PhaseNode make_node(Interval iv, std::size_t head_event, std::uint64_t occurrence) const {
        PhaseNode node;
        const auto& block = trace_.block_of(head_event);
        node.head_block = block.id;
        node.head_address = block.start_address;
        node.start = iv.start;
        node.length = iv.length;
        node.occurrence = occurrence;
        node.mean_cpi = mean_cpi(iv);
        node.structure = structure_at(head_event);
        return node;
    }

    // Moves a sampled step boundary onto the nearest event start with the
    // sharpest CPI change, looking one stride either side.
    std::uint64_t snap_boundary(std::uint64_t b, std::uint64_t stride, Interval iv) const {
        const std::uint64_t lo = b > iv.start + stride ? b - stride + 1 : iv.start + 1;
        const std::uint64_t hi = std::min(iv.end(), b + stride);
        std::size_t e = trace_.event_at(std::min(lo, trace_.total_instructions() - 1));
        if (trace_.event_start(e) < lo) ++e;
        std::optional<std::uint64_t> best;
        double best_diff = 0.0;
        std::uint64_t best_dist = 0;
        for (; e < trace_.events().size() && trace_.event_start(e) < hi; ++e) {
            const double diff = std::fabs(event_cpi(e) - event_cpi(e - 1));
            const std::uint64_t at = trace_.event_start(e);
            const std::uint64_t dist = at > b ? at - b : b - at;
            if (diff > best_diff || (best && diff == best_diff && diff > 0.0 && dist < best_dist)) {
                best = at;
                best_diff = diff;
                best_dist = dist;
            }
        }
        if (best) return *best;
        return trace_.event_start(trace_.event_at(b));
    }

    void expand(PhaseNode& node, std::size_t depth, std::vector<std::size_t>& path) {
        const Interval iv = node.interval();
        if (depth >= config_.max_depth || iv.length < config_.min_segment_instructions || iv.length < 2) return;

        const Waveform wf = build_waveform(trace_, cpi_, config_.resolution, iv);
        if (wf.size() < 2) return;
        const Spectrum spectrum = dft_magnitude(wf);
        if (observer_) observer_(path, spectrum);
        if (is_flat(wf, spectrum, config_)) return;

        MainSpectrum main;
        try {
            main = fundamental(wf, spectrum, main_spectrum(spectrum, config_.flat_spectrum_ratio));
        } catch (const FlatSpectrum&) {
            return;
        }

        if (main.occurrence == 1) {
            const auto split = split_step(wf);
            if (!split) return;
            const std::uint64_t b = snap_boundary(split->boundary_instruction, wf.sample_stride, iv);
            if (b <= iv.start || b >= iv.end()) return;
            node.children.push_back(make_node({iv.start, b - iv.start}, trace_.event_at(iv.start), 1));
            node.children.push_back(make_node({b, iv.end() - b}, trace_.event_at(b), 1));
        } else {
            node.children.push_back(repeating_child(iv, main, wf.sample_stride));
        }

        for (std::size_t i = 0; i < node.children.size(); ++i) {
            path.push_back(i);
            expand(node.children[i], depth + 1, path);
            path.pop_back();
        }
    }

    // The largest peak can be a harmonic of the repeating pattern. When the
    // waveform does not repeat at D/X, take the largest divisor k of X whose
    // period the waveform does follow (a pattern repeating k times only has
    // energy at multiples of k), or occurrence 1 when there is none.
    static MainSpectrum fundamental(const Waveform& wf, const Spectrum& spectrum, MainSpectrum main) {
        const auto lag_for = [&](std::size_t k) {
            return static_cast<std::size_t>(std::llround(static_cast<double>(wf.size()) / static_cast<double>(k)));
        };
        if (main.occurrence < 2 || period_mismatch(wf.samples, lag_for(main.occurrence)) <= kPeriodTolerance)
            return main;
        for (std::size_t k = main.occurrence / 2; k >= 2; --k) {
            if (main.occurrence % k != 0) continue;
            if (period_mismatch(wf.samples, lag_for(k)) > kPeriodTolerance) continue;
            MainSpectrum sub;
            sub.occurrence = k;
            sub.magnitude = spectrum.magnitudes[k];
            sub.phase_length_instructions = std::max<std::uint64_t>(
                1, static_cast<std::uint64_t>(std::llround(static_cast<double>(spectrum.source_length_instructions) /
                                                           static_cast<double>(k))));
            return sub;
        }
        MainSpectrum single;
        single.occurrence = 1;
        single.magnitude = spectrum.magnitudes[1];
        single.phase_length_instructions = spectrum.source_length_instructions;
        return single;
    }

    PhaseNode repeating_child(Interval iv, const MainSpectrum& main, std::uint64_t stride) const {
        const std::uint64_t x = main.occurrence;
        const std::uint64_t length = main.phase_length_instructions;
        const double threshold = config_.boundary_threshold_fraction * main.magnitude;

        const std::size_t first = trace_.event_at(iv.start);
        std::size_t last = trace_.event_at(iv.end() - 1) + 1;
        auto candidates = candidate_heads(trace_, cpi_, threshold, first, last);
        // the segment start is itself a phase boundary
        if (candidates.empty() || candidates.front().event_index != first)
            candidates.insert(candidates.begin(), HeadCandidate{first, trace_.block_of(first).id});

        Alignment head{iv.start, trace_.block_of(first).id, first};
        try {
            head = align_phase(trace_, candidates, length);
        } catch (const NoAlignment&) {
        }

        // Let the instance end where the head block recurs, when that is within
        // one stride of the spectral estimate and still fits X times.
        std::uint64_t end = head.start_instruction + length;
        std::uint64_t best_dist = stride;
        for (const auto& c : candidates) {
            if (c.block_id != head.head_block) continue;
            const std::uint64_t at = trace_.event_start(c.event_index);
            if (at <= head.start_instruction) continue;
            const std::uint64_t nominal = head.start_instruction + length;
            const std::uint64_t dist = at > nominal ? at - nominal : nominal - at;
            if (dist < best_dist && x * (at - head.start_instruction) <= iv.length + stride) {
                end = at;
                best_dist = dist;
            }
        }
        end = std::min(end, iv.end());
        return make_node({head.start_instruction, end - head.start_instruction}, head.event_index, x);
    }

    const ExecutionTrace& trace_;
    std::vector<double> cpi_;
    const AnalysisConfig& config_;
    const SpectrumObserver& observer_;
};

}  // namespace

PhaseNode analyze(const ExecutionTrace& trace, const AnalysisConfig& config, AttributionMode mode,
                  const SpectrumObserver& observer) {
    return analyze(trace, attribute_block_cpi(trace, mode), config, observer);
}

PhaseNode analyze(const ExecutionTrace& trace, const ProfileMap& profiles, const AnalysisConfig& config,
                  const SpectrumObserver& observer) {
    config.validate();
    Analyzer analyzer(trace, dense_block_cpi(trace, profiles), config, observer);
    PhaseNode root = analyzer.run();
    check_well_formed(root);
    return root;
}

void check_well_formed(const PhaseNode& node) {
    if (node.length == 0) throw std::logic_error("phase with zero length");
    std::uint64_t cursor = node.start;
    for (const auto& child : node.children) {
        if (child.start < cursor || child.start + child.length > node.start + node.length)
            throw std::logic_error("child phase outside its parent or overlapping a sibling");
        if (child.length > node.length) throw std::logic_error("child phase longer than its parent");
        cursor = child.start + child.length;
        check_well_formed(child);
    }
}

const PhaseNode& node_at(const PhaseNode& root, std::span<const std::size_t> path) {
    const PhaseNode* node = &root;
    for (std::size_t i : path) node = &node->children.at(i);
    return *node;
}

MarkerTable export_markers(const PhaseNode& root) {
    MarkerTable table;
    // breadth-first so the shallowest phase claims a shared head
    std::deque<std::pair<const PhaseNode*, std::vector<std::size_t>>> queue;
    queue.emplace_back(&root, std::vector<std::size_t>{});
    while (!queue.empty()) {
        auto [node, path] = std::move(queue.front());
        queue.pop_front();
        auto [it, fresh] = table.entries.try_emplace(node->head_address);
        if (fresh) {
            it->second = MarkerEntry{node->head_block, path, node->mean_cpi, node->structure, {}};
        } else {
            it->second.nested_paths.push_back(path);
        }
        for (std::size_t i = 0; i < node->children.size(); ++i) {
            auto child_path = path;
            child_path.push_back(i);
            queue.emplace_back(&node->children[i], std::move(child_path));
        }
    }
    return table;
}

nlohmann::ordered_json phase_tree_to_json(const PhaseNode& node) {
    nlohmann::ordered_json j;
    j["head_block"] = node.head_block;
    j["head_address"] = detail::format_hex(node.head_address);
    j["start"] = node.start;
    j["length"] = node.length;
    j["occurrence"] = node.occurrence;
    j["mean_cpi"] = node.mean_cpi;
    j["structure"] = structure_name(node.structure);
    j["children"] = nlohmann::ordered_json::array();
    for (const auto& c : node.children) j["children"].push_back(phase_tree_to_json(c));
    return j;
}

PhaseNode phase_tree_from_json(const nlohmann::json& j) {
    PhaseNode node;
    node.head_block = j.at("head_block").get<BlockId>();
    const auto address = detail::parse_hex(j.at("head_address").get<std::string>());
    if (!address) throw std::invalid_argument("malformed head_address");
    node.head_address = *address;
    node.start = j.at("start").get<std::uint64_t>();
    node.length = j.at("length").get<std::uint64_t>();
    node.occurrence = j.at("occurrence").get<std::uint64_t>();
    node.mean_cpi = j.at("mean_cpi").get<double>();
    node.structure = structure_from_name(j.at("structure").get<std::string>());
    for (const auto& c : j.at("children")) node.children.push_back(phase_tree_from_json(c));
    if (node.length == 0 || node.occurrence == 0) throw std::invalid_argument("phase length and occurrence must be positive");
    return node;
}

nlohmann::ordered_json markers_to_json(const MarkerTable& table) {
    nlohmann::ordered_json j = nlohmann::ordered_json::object();
    for (const auto& [address, e] : table.entries) {
        nlohmann::ordered_json entry;
        entry["head_block"] = e.head_block;
        entry["phase_path"] = e.phase_path;
        entry["mean_cpi"] = e.mean_cpi;
        entry["structure"] = structure_name(e.structure);
        entry["nested_paths"] = e.nested_paths;
        j[detail::format_hex(address)] = std::move(entry);
    }
    return j;
}

}  // namespace bbphase
