#include "bbphase/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>
#include <unordered_map>

#include "bbphase/attribution.hpp"

namespace bbphase {

namespace {

constexpr Address kLowRegion = 0x8000;    // blocks entered by backward branches, growing down
constexpr Address kHighRegion = 0x10000;  // everything else, growing up
constexpr Address kBlockSpacing = 0x100;
constexpr double kMinCyclesPerInstruction = 0.05;

// Standard normal deviates from raw 64-bit draws (Box-Muller, cosine branch).
class Gaussian {
public:
    explicit Gaussian(std::uint64_t seed) : engine_(seed) {}

    double operator()() {
        const double u1 = uniform_open();
        const double u2 = uniform_open();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

private:
    // (0, 1) with 53 random bits
    double uniform_open() {
        const std::uint64_t bits = engine_() >> 11;
        return (static_cast<double>(bits) + 0.5) * 0x1.0p-53;
    }

    std::mt19937_64 engine_;
};

EntryKind entry_kind_from_name(const std::string& s) {
    if (s == "fallthrough") return EntryKind::Fallthrough;
    if (s == "backward_branch") return EntryKind::BackwardBranch;
    if (s == "call") return EntryKind::Call;
    throw std::invalid_argument("unknown entry_kind '" + s + "'");
}

Structure structure_for(EntryKind k) {
    switch (k) {
        case EntryKind::BackwardBranch: return Structure::Loop;
        case EntryKind::Call: return Structure::Function;
        case EntryKind::Fallthrough: break;
    }
    return Structure::None;
}

struct Leaf {
    const SegmentSpec* spec;
    std::uint32_t block;  // index in the block table
};

class Builder {
public:
    explicit Builder(const ScenarioSpec& spec) : spec_(spec) {}

    SyntheticTrace build() {
        collect_leaves(spec_.segments);
        assign_addresses();
        for (std::uint64_t r = 0; r < spec_.repetitions; ++r) run(spec_.segments);
        assign_terminators();

        std::vector<BlockEvent> events = emit_events();
        ExecutionTrace golden(blocks_, events);
        std::vector<QuantumRecord> quanta;
        if (spec_.quantum_length) {
            const auto cpi = quantum_cpi_from_cycles(golden, *spec_.quantum_length);
            for (std::size_t q = 0; q < cpi.size(); ++q) quanta.push_back({q, cpi[q]});
        }

        std::uint64_t cursor = 0;
        PhaseNode root = script_node(spec_.segments, spec_.repetitions, cursor);
        simplify(root);
        return {ExecutionTrace(std::move(blocks_), std::move(events), std::move(quanta), spec_.quantum_length),
                std::move(root)};
    }

private:
    void collect_leaves(const std::vector<SegmentSpec>& segments) {
        for (const auto& s : segments) {
            if (!s.is_leaf()) {
                collect_leaves(s.nested);
                continue;
            }
            const auto index = static_cast<std::uint32_t>(blocks_.size());
            leaf_block_.emplace(&s, index);
            BlockDescriptor b;
            b.id = index + 1;
            b.instruction_count = s.block_instruction_count;
            blocks_.push_back(b);
            leaves_.push_back({&s, index});
        }
    }

    void assign_addresses() {
        std::uint64_t low = 0, high = 0;
        for (const auto& leaf : leaves_) {
            auto& b = blocks_[leaf.block];
            if (leaf.spec->entry_kind == EntryKind::BackwardBranch) {
                b.start_address = kLowRegion - (++low) * kBlockSpacing;
            } else {
                b.start_address = kHighRegion + (high++) * kBlockSpacing;
            }
        }
    }

    void run(const std::vector<SegmentSpec>& segments) {
        for (const auto& s : segments) {
            if (s.is_leaf()) {
                order_.push_back(leaf_block_.at(&s));
                continue;
            }
            for (std::uint64_t r = 0; r < s.inner_repetitions; ++r) run(s.nested);
        }
    }

    void assign_terminators() {
        std::vector<bool> done(blocks_.size(), false);
        std::vector<const SegmentSpec*> spec_of(blocks_.size());
        for (const auto& leaf : leaves_) spec_of[leaf.block] = leaf.spec;
        for (std::size_t i = 0; i + 1 < order_.size(); ++i) {
            const std::uint32_t from = order_[i];
            const std::uint32_t to = order_[i + 1];
            if (done[from] || from == to) continue;
            done[from] = true;
            auto& b = blocks_[from];
            switch (spec_of[to]->entry_kind) {
                case EntryKind::Fallthrough:
                    b.terminator =
                        spec_of[from]->entry_kind == EntryKind::Call ? Terminator::Return : Terminator::Fallthrough;
                    break;
                case EntryKind::BackwardBranch:
                    b.terminator = Terminator::Branch;
                    b.target_address = blocks_[to].start_address;
                    break;
                case EntryKind::Call:
                    b.terminator = Terminator::Call;
                    b.target_address = blocks_[to].start_address;
                    break;
            }
        }
    }

    std::vector<BlockEvent> emit_events() {
        std::vector<const SegmentSpec*> spec_of(blocks_.size());
        for (const auto& leaf : leaves_) spec_of[leaf.block] = leaf.spec;
        Gaussian noise(spec_.seed);
        std::vector<BlockEvent> events;
        for (std::uint32_t block : order_) {
            const SegmentSpec& s = *spec_of[block];
            const double n = static_cast<double>(s.block_instruction_count);
            for (std::uint64_t e = 0; e < s.event_count; ++e) {
                double cycles = s.block_cpi * n;
                if (spec_.noise_stddev > 0.0) {
                    cycles += spec_.noise_stddev * noise() * n;
                    cycles = std::max(cycles, kMinCyclesPerInstruction * n);
                }
                events.push_back({block, cycles});
            }
        }
        return events;
    }

    PhaseNode leaf_node(const SegmentSpec& s, std::uint64_t start) const {
        const auto& b = blocks_[leaf_block_.at(&s)];
        PhaseNode node;
        node.head_block = b.id;
        node.head_address = b.start_address;
        node.start = start;
        node.length = s.length_instructions();
        node.mean_cpi = s.block_cpi;
        node.structure = structure_for(s.entry_kind);
        return node;
    }

    // Lays out `segments` x `reps` from `cursor`; repetitions become one template child.
    PhaseNode script_node(const std::vector<SegmentSpec>& segments, std::uint64_t reps, std::uint64_t& cursor) {
        const std::uint64_t start = cursor;
        PhaseNode body;
        body.start = start;
        double weighted = 0.0;
        for (const auto& s : segments) {
            PhaseNode child = s.is_leaf() ? leaf_node(s, cursor) : script_node(s.nested, s.inner_repetitions, cursor);
            if (s.is_leaf()) cursor += child.length;
            weighted += child.mean_cpi * static_cast<double>(child.length);
            body.children.push_back(std::move(child));
        }
        body.length = cursor - start;
        body.mean_cpi = weighted / static_cast<double>(body.length);
        body.head_block = body.children.front().head_block;
        body.head_address = body.children.front().head_address;
        body.structure = body.children.front().structure;
        if (reps <= 1) return body;

        body.occurrence = reps;
        PhaseNode outer;
        outer.head_block = body.head_block;
        outer.head_address = body.head_address;
        outer.structure = body.structure;
        outer.start = start;
        outer.length = body.length * reps;
        outer.mean_cpi = body.mean_cpi;
        outer.children.push_back(std::move(body));
        cursor = start + outer.length;
        return outer;
    }

    // Children that are all constant leaves of one CPI add no structure; a
    // single child spanning its parent is the parent.
    static void simplify(PhaseNode& node) {
        for (auto& c : node.children) simplify(c);
        if (node.children.empty()) return;
        const bool uniform = std::all_of(node.children.begin(), node.children.end(), [&](const PhaseNode& c) {
            return c.is_leaf() && std::fabs(c.mean_cpi - node.children.front().mean_cpi) <= 1e-12;
        });
        if (uniform) {
            node.children.clear();
            return;
        }
        if (node.children.size() == 1 && node.children.front().occurrence == 1 &&
            node.children.front().interval() == node.interval()) {
            PhaseNode child = std::move(node.children.front());
            child.occurrence = node.occurrence;
            node = std::move(child);
        }
    }

    const ScenarioSpec& spec_;
    std::vector<BlockDescriptor> blocks_;
    std::vector<Leaf> leaves_;
    std::unordered_map<const SegmentSpec*, std::uint32_t> leaf_block_;
    std::vector<std::uint32_t> order_;  // block index per leaf run, in execution order
};

void validate_segment(const SegmentSpec& s, double noise, std::size_t depth) {
    if (depth > 16) throw std::invalid_argument("segments nested too deeply");
    if (!s.is_leaf()) {
        if (s.inner_repetitions < 1) throw std::invalid_argument("segment '" + s.label + "': inner_repetitions must be positive");
        for (const auto& n : s.nested) validate_segment(n, noise, depth + 1);
        return;
    }
    if (!(s.block_cpi > 0.0) || !std::isfinite(s.block_cpi))
        throw std::invalid_argument("segment '" + s.label + "': block_cpi must be positive");
    if (s.block_instruction_count < 1)
        throw std::invalid_argument("segment '" + s.label + "': block_instruction_count must be positive");
    if (s.event_count < 1) throw std::invalid_argument("segment '" + s.label + "': event_count must be positive");
    if (!(noise < s.block_cpi))
        throw std::invalid_argument("segment '" + s.label + "': noise_stddev must be below every segment CPI");
}

SegmentSpec segment_from_json(const nlohmann::json& j) {
    SegmentSpec s;
    s.label = j.value("label", std::string{});
    s.entry_kind = entry_kind_from_name(j.value("entry_kind", std::string("fallthrough")));
    if (j.contains("nested")) {
        for (const auto& n : j.at("nested")) s.nested.push_back(segment_from_json(n));
        s.inner_repetitions = j.value("inner_repetitions", std::uint64_t{1});
        if (s.nested.empty()) throw std::invalid_argument("segment '" + s.label + "': nested must not be empty");
        return s;
    }
    s.block_cpi = j.at("block_cpi").get<double>();
    s.block_instruction_count = j.at("block_instruction_count").get<std::uint32_t>();
    s.event_count = j.at("event_count").get<std::uint64_t>();
    return s;
}

nlohmann::ordered_json segment_to_json(const SegmentSpec& s) {
    nlohmann::ordered_json j;
    j["label"] = s.label;
    j["entry_kind"] = entry_kind_name(s.entry_kind);
    if (!s.is_leaf()) {
        j["inner_repetitions"] = s.inner_repetitions;
        j["nested"] = nlohmann::ordered_json::array();
        for (const auto& n : s.nested) j["nested"].push_back(segment_to_json(n));
        return j;
    }
    j["block_cpi"] = s.block_cpi;
    j["block_instruction_count"] = s.block_instruction_count;
    j["event_count"] = s.event_count;
    return j;
}

}  // namespace

std::string_view entry_kind_name(EntryKind k) {
    switch (k) {
        case EntryKind::BackwardBranch: return "backward_branch";
        case EntryKind::Call: return "call";
        case EntryKind::Fallthrough: break;
    }
    return "fallthrough";
}

std::uint64_t SegmentSpec::length_instructions() const {
    if (is_leaf()) return static_cast<std::uint64_t>(block_instruction_count) * event_count;
    std::uint64_t body = 0;
    for (const auto& n : nested) body += n.length_instructions();
    return body * inner_repetitions;
}

void ScenarioSpec::validate() const {
    if (segments.empty()) throw std::invalid_argument("scenario needs at least one segment");
    if (repetitions < 1) throw std::invalid_argument("repetitions must be positive");
    if (!(noise_stddev >= 0.0) || !std::isfinite(noise_stddev))
        throw std::invalid_argument("noise_stddev must be non-negative");
    if (quantum_length && *quantum_length == 0) throw std::invalid_argument("quantum_length must be positive");
    for (const auto& s : segments) validate_segment(s, noise_stddev, 0);
}

std::uint64_t ScenarioSpec::total_instructions() const {
    std::uint64_t period = 0;
    for (const auto& s : segments) period += s.length_instructions();
    return period * repetitions;
}

SyntheticTrace generate(const ScenarioSpec& spec) {
    spec.validate();
    return Builder(spec).build();
}

ScenarioSpec scenario_from_json(const nlohmann::json& j) {
    ScenarioSpec spec;
    for (const auto& s : j.at("segments")) spec.segments.push_back(segment_from_json(s));
    spec.repetitions = j.value("repetitions", std::uint64_t{1});
    spec.noise_stddev = j.value("noise_stddev", 0.0);
    spec.seed = j.value("seed", std::uint64_t{0});
    if (j.contains("quantum_length") && !j.at("quantum_length").is_null())
        spec.quantum_length = j.at("quantum_length").get<std::uint64_t>();
    spec.validate();
    return spec;
}

nlohmann::ordered_json scenario_to_json(const ScenarioSpec& spec) {
    nlohmann::ordered_json j;
    j["segments"] = nlohmann::ordered_json::array();
    for (const auto& s : spec.segments) j["segments"].push_back(segment_to_json(s));
    j["repetitions"] = spec.repetitions;
    j["noise_stddev"] = spec.noise_stddev;
    j["seed"] = spec.seed;
    if (spec.quantum_length) j["quantum_length"] = *spec.quantum_length;
    return j;
}

}  // namespace bbphase
