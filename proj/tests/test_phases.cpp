#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "bbphase/baseline.hpp"
#include "bbphase/phases.hpp"
#include "bbphase/spectral.hpp"
#include "bbphase/synth.hpp"
#include "scenarios.hpp"

using namespace bbphase;

namespace {

// Trace of single-instruction blocks with given cpis, one event per entry of `seq`.
ExecutionTrace cpi_trace(const std::vector<std::pair<BlockId, double>>& seq) {
    std::vector<BlockDescriptor> blocks;
    std::vector<BlockEvent> events;
    for (const auto& [id, cpi] : seq) {
        auto it = std::find_if(blocks.begin(), blocks.end(), [&](const auto& b) { return b.id == id; });
        if (it == blocks.end()) {
            blocks.push_back({id, 0x1000 + 0x10 * id, 1, Terminator::Fallthrough, std::nullopt});
            it = blocks.end() - 1;
        }
        events.push_back({static_cast<std::uint32_t>(it - blocks.begin()), cpi});
    }
    return ExecutionTrace(blocks, events);
}

Waveform samples(std::vector<double> s) {
    Waveform wf;
    wf.length_instructions = s.size();
    wf.sample_heads.assign(s.size(), 1);
    wf.samples = std::move(s);
    return wf;
}

struct Shape {
    std::uint64_t length, occurrence;
    double mean;
    bool operator<(const Shape& o) const {
        return std::tie(length, occurrence, mean) < std::tie(o.length, o.occurrence, o.mean);
    }
};

std::vector<std::vector<Shape>> levels(const PhaseNode& root) {
    std::vector<std::vector<Shape>> out;
    std::vector<const PhaseNode*> cur{&root};
    while (!cur.empty()) {
        std::vector<Shape> row;
        std::vector<const PhaseNode*> next;
        for (const auto* n : cur) {
            row.push_back({n->length, n->occurrence, n->mean_cpi});
            for (const auto& c : n->children) next.push_back(&c);
        }
        std::sort(row.begin(), row.end());
        out.push_back(row);
        cur = next;
    }
    return out;
}

std::size_t depth(const PhaseNode& n) {
    std::size_t d = 0;
    for (const auto& c : n.children) d = std::max(d, depth(c));
    return d + (n.children.empty() ? 0 : 1);
}

void for_each_node(const PhaseNode& n, const std::function<void(const PhaseNode&)>& f) {
    f(n);
    for (const auto& c : n.children) for_each_node(c, f);
}

}  // namespace

TEST_CASE("candidate heads from a hand scan") {
    auto t = cpi_trace({{1, 1.0}, {1, 1.0}, {2, 2.0}, {2, 2.0}, {1, 1.0}});
    auto p = attribute_block_cpi(t);
    auto c = candidate_heads(t, p, 0.5);
    REQUIRE(c.size() == 2);
    CHECK(c[0] == HeadCandidate{2, 2});
    CHECK(c[1] == HeadCandidate{4, 1});
    CHECK(candidate_heads(t, p, 1.5).empty());
    auto dense = dense_block_cpi(t, p);
    CHECK(candidate_heads(t, dense, 0.5, 3, 5).size() == 1);
}

TEST_CASE("constant trace has no candidates") {
    auto t = cpi_trace({{1, 1.0}, {2, 1.0}, {1, 1.0}, {3, 1.0}});
    CHECK(candidate_heads(t, attribute_block_cpi(t), 0.01).empty());
}

TEST_CASE("alignment by median recurrence gap") {
    // block 1 every 10 events, block 2 every 30
    std::vector<std::pair<BlockId, double>> seq;
    for (int i = 0; i < 60; ++i) seq.push_back({i % 10 == 3 ? 1 : (i % 30 == 7 ? 2 : 9), 1.0});
    auto t = cpi_trace(seq);
    std::vector<HeadCandidate> cands;
    for (std::size_t i = 0; i < seq.size(); ++i)
        if (seq[i].first != 9) cands.push_back({i, seq[i].first});

    auto a = align_phase(t, cands, 10);
    CHECK(a.head_block == 1);
    CHECK(a.start_instruction == 3);
    CHECK(a.event_index == 3);
    CHECK(align_phase(t, cands, 30).head_block == 2);
}

TEST_CASE("single-occurrence candidates fall back to the earliest") {
    auto t = cpi_trace({{1, 1.0}, {2, 1.0}, {3, 1.0}, {4, 1.0}});
    std::vector<HeadCandidate> cands{{3, 4}, {1, 2}};
    auto a = align_phase(t, cands, 2);
    CHECK(a.head_block == 2);
    CHECK(a.start_instruction == 1);
    CHECK_THROWS_AS(align_phase(t, {}, 2), NoAlignment);
}

TEST_CASE("ideal step split") {
    std::vector<double> s(64, 1.0);
    std::fill(s.begin() + 32, s.end(), 2.0);
    auto split = split_step(samples(s));
    REQUIRE(split);
    CHECK(split->sample_index == 32);
    CHECK(split->boundary_instruction == 32);
    CHECK(split->mean_before == doctest::Approx(1.0));
    CHECK(split->mean_after == doctest::Approx(2.0));
}

TEST_CASE("constant waveform has no split") {
    CHECK_FALSE(split_step(samples(std::vector<double>(50, 1.3))));
}

TEST_CASE("linear ramp splits in the middle") {
    for (std::size_t n : {100u, 101u, 1000u}) {
        std::vector<double> s(n);
        for (std::size_t i = 0; i < n; ++i) s[i] = 1.0 + static_cast<double>(i) / static_cast<double>(n - 1);
        auto split = split_step(samples(s));
        REQUIRE(split);
        CHECK(std::llabs(static_cast<long long>(split->sample_index) - static_cast<long long>(n / 2)) <= 1);
        CHECK(split->mean_after - split->mean_before == doctest::Approx(0.5).epsilon(0.02));
    }
}

TEST_CASE("a single spike does not exceed the spread") {
    std::vector<double> s(100, 1.0);
    s[50] = 30.0;
    CHECK_FALSE(split_step(samples(s)));
}

TEST_CASE("structure classification") {
    BlockDescriptor head{2, 0x1000, 4, Terminator::Fallthrough, std::nullopt};
    BlockDescriptor call{1, 0x2000, 4, Terminator::Call, 0x1000};
    BlockDescriptor back{3, 0x1040, 4, Terminator::Branch, 0x1000};
    BlockDescriptor fwd{4, 0x0800, 4, Terminator::Branch, 0x1000};
    BlockDescriptor ret{5, 0x3000, 4, Terminator::Return, std::nullopt};
    CHECK(classify_structure(head, &call) == Structure::Function);
    CHECK(classify_structure(head, &back) == Structure::Loop);
    CHECK(classify_structure(head, &fwd) == Structure::None);
    CHECK(classify_structure(head, &ret) == Structure::None);
    CHECK(classify_structure(head, nullptr) == Structure::None);
    CHECK(structure_from_name(structure_name(Structure::Loop)) == Structure::Loop);
    CHECK(structure_name(Structure::Function) == "function");
}

TEST_CASE("constant trace is a single leaf") {
    auto g = generate(scenarios::constant(1.4, 500));
    auto tree = analyze(g.trace);
    CHECK(tree.is_leaf());
    CHECK(tree.length == 2000);
    CHECK(tree.mean_cpi == doctest::Approx(1.4));
}

TEST_CASE("square trace gives an occurrence-four template with a low/high split") {
    auto g = generate(scenarios::square_4500());
    auto tree = analyze(g.trace);
    check_well_formed(tree);
    REQUIRE(tree.children.size() == 1);
    const auto& tpl = tree.children[0];
    CHECK(tpl.occurrence == 4);
    CHECK(tpl.length == 1125);
    REQUIRE(tpl.children.size() == 2);
    CHECK(tpl.children[0].mean_cpi == doctest::Approx(1.0));
    CHECK(tpl.children[1].mean_cpi == doctest::Approx(2.0));
    CHECK(tpl.children[0].length == 560);
    CHECK(tpl.children[1].start == 560);
    CHECK(tpl.children[0].structure == Structure::Loop);
    CHECK(tpl.children[1].structure == Structure::Function);
}

namespace {

// Compares nodes level by level as sorted (length, occurrence, mean) rows, so
// a template anchored at a different block of the period still matches.
void check_levels(const ScenarioSpec& spec) {
    auto g = generate(spec);
    auto tree = analyze(g.trace);
    check_well_formed(tree);
    CHECK(depth(tree) >= 2);
    const auto stride = sample_stride_for(g.trace.total_instructions(), AnalysisConfig{}.resolution);
    auto got = levels(tree), want = levels(g.annotation);
    REQUIRE(got.size() == want.size());
    for (std::size_t d = 0; d < got.size(); ++d) {
        REQUIRE(got[d].size() == want[d].size());
        for (std::size_t i = 0; i < got[d].size(); ++i) {
            CHECK(got[d][i].occurrence == want[d][i].occurrence);
            CHECK(std::llabs(static_cast<long long>(got[d][i].length) - static_cast<long long>(want[d][i].length)) <=
                  static_cast<long long>(stride));
            CHECK(std::fabs(got[d][i].mean - want[d][i].mean) <= 1e-9);
        }
    }
}

void collect(const PhaseNode& n, std::vector<const PhaseNode*>& out) {
    out.push_back(&n);
    for (const auto& c : n.children) collect(c, out);
}

}  // namespace

TEST_CASE("two-level scenario recovers both periods") {
    check_levels(scenarios::two_level());
    check_levels(scenarios::two_level_inner_first());
}

TEST_CASE("two-level scenario with the outer head first matches node for node") {
    auto g = generate(scenarios::two_level());
    auto tree = analyze(g.trace);
    const auto stride = sample_stride_for(g.trace.total_instructions(), AnalysisConfig{}.resolution);
    std::vector<const PhaseNode*> got, want;
    collect(tree, got);
    collect(g.annotation, want);
    REQUIRE(got.size() == want.size());
    for (std::size_t i = 0; i < got.size(); ++i) {
        CHECK(got[i]->head_block == want[i]->head_block);
        CHECK(got[i]->occurrence == want[i]->occurrence);
        CHECK(std::llabs(static_cast<long long>(got[i]->start) - static_cast<long long>(want[i]->start)) <=
              static_cast<long long>(stride));
        CHECK(std::llabs(static_cast<long long>(got[i]->length) - static_cast<long long>(want[i]->length)) <=
              static_cast<long long>(stride));
        CHECK(std::fabs(got[i]->mean_cpi - want[i]->mean_cpi) <= 1e-9);
    }
}

TEST_CASE("fine pattern terminates as flat") {
    auto g = generate(scenarios::fine_400());
    CHECK(analyze(g.trace).is_leaf());
}

TEST_CASE("the observer sees one spectrum per analysed segment") {
    auto g = generate(scenarios::square_4500());
    std::vector<std::vector<std::size_t>> paths;
    analyze(g.trace, AnalysisConfig{}, AttributionMode::Auto,
            [&](std::span<const std::size_t> p, const Spectrum& s) {
                CHECK(s.sample_count >= 2);
                paths.emplace_back(p.begin(), p.end());
            });
    REQUIRE(!paths.empty());
    CHECK(paths.front().empty());
}

TEST_CASE("max depth and config validation") {
    auto g = generate(scenarios::two_level());
    AnalysisConfig cfg;
    cfg.max_depth = 1;
    CHECK(depth(analyze(g.trace, cfg)) <= 1);
    cfg.max_depth = 0;
    CHECK_THROWS_AS(analyze(g.trace, cfg), std::invalid_argument);
    AnalysisConfig bad;
    bad.resolution = 1;
    CHECK_THROWS_AS(analyze(g.trace, bad), std::invalid_argument);
    bad = AnalysisConfig{};
    bad.boundary_threshold_fraction = -1.0;
    CHECK_THROWS_AS(analyze(g.trace, bad), std::invalid_argument);
}

TEST_CASE("analysis output is always well formed") {
    std::mt19937_64 rng(21);
    std::uniform_real_distribution<double> cpi(0.6, 3.0);
    std::uniform_int_distribution<int> cnt(3, 60);
    for (int i = 0; i < 25; ++i) {
        ScenarioSpec spec;
        for (int s = 0; s < 3; ++s)
            spec.segments.push_back(scenarios::leaf("s" + std::to_string(s), cpi(rng), 1 + s, cnt(rng),
                                                    static_cast<EntryKind>(s % 3)));
        spec.repetitions = 1 + i % 6;
        spec.noise_stddev = 0.1 * (i % 2);
        spec.seed = rng();
        auto g = generate(spec);
        auto tree = analyze(g.trace);
        CHECK_NOTHROW(check_well_formed(tree));
        for_each_node(tree, [&](const PhaseNode& n) {
            CHECK(n.length > 0);
            CHECK(n.mean_cpi > 0.0);
            CHECK(n.occurrence >= 1);
        });
    }
}

TEST_CASE("well-formedness check rejects overlaps") {
    PhaseNode root{1, 0x10, 0, 100, 1, 1.0, Structure::None, {}};
    root.children.push_back({1, 0x10, 0, 60, 1, 1.0, Structure::None, {}});
    root.children.push_back({2, 0x20, 50, 50, 1, 1.0, Structure::None, {}});
    CHECK_THROWS_AS(check_well_formed(root), std::logic_error);
    root.children[1].start = 60;
    root.children[1].length = 40;
    CHECK_NOTHROW(check_well_formed(root));
    root.children[1].length = 41;
    CHECK_THROWS_AS(check_well_formed(root), std::logic_error);
}

TEST_CASE("markers for a leaf-only tree") {
    auto g = generate(scenarios::constant(1.0, 50));
    auto m = export_markers(analyze(g.trace));
    REQUIRE(m.entries.size() == 1);
    CHECK(m.entries.begin()->first == g.trace.blocks()[0].start_address);
    CHECK(m.entries.begin()->second.phase_path.empty());
}

TEST_CASE("markers with distinct heads") {
    PhaseNode root{1, 0x10, 0, 100, 1, 1.5, Structure::None, {}};
    root.children.push_back({1, 0x10, 0, 50, 1, 1.0, Structure::None, {}});
    root.children.push_back({2, 0x20, 50, 50, 1, 2.0, Structure::Function, {}});
    auto m = export_markers(root);
    REQUIRE(m.entries.size() == 2);
    CHECK(m.entries.at(0x20).phase_path == std::vector<std::size_t>{1});
    CHECK(m.entries.at(0x20).structure == Structure::Function);
    CHECK(m.entries.at(0x10).nested_paths == std::vector<std::vector<std::size_t>>{{0}});
}

TEST_CASE("nested phases sharing a head give one entry") {
    auto g = generate(scenarios::square_4500());
    auto tree = analyze(g.trace);
    auto m = export_markers(tree);
    REQUIRE(m.entries.size() == 2);
    const auto& low = m.entries.at(tree.head_address);
    CHECK(low.phase_path.empty());
    CHECK(low.nested_paths.size() == 2);
    for (const auto& p : low.nested_paths) CHECK(node_at(tree, p).head_address == tree.head_address);
    CHECK_THROWS_AS(node_at(tree, std::vector<std::size_t>{7}), std::out_of_range);
}

TEST_CASE("tree json round trip") {
    auto g = generate(scenarios::two_level());
    auto tree = analyze(g.trace);
    auto j = phase_tree_to_json(tree);
    CHECK(j["head_address"].get<std::string>().rfind("0x", 0) == 0);
    auto back = phase_tree_from_json(nlohmann::json::parse(j.dump()));
    CHECK(back == tree);
    CHECK(predict_waveform(back, 4096).samples == predict_waveform(tree, 4096).samples);
    CHECK_THROWS(phase_tree_from_json(nlohmann::json{{"start", 0}}));
}

TEST_CASE("a dominant harmonic does not halve the template") {
    // the period-5 pattern carries more energy at occurrence 10 than at 5
    ScenarioSpec spec;
    spec.segments = {scenarios::leaf("a", 2.901, 19, 67), scenarios::leaf("b", 2.222, 7, 41),
                     scenarios::leaf("c", 1.41, 9, 85), scenarios::leaf("d", 1.982, 17, 241)};
    spec.repetitions = 5;
    auto g = generate(spec);
    auto wf = build_waveform(g.trace, attribute_block_cpi(g.trace), AnalysisConfig{}.resolution);
    REQUIRE(main_spectrum(dft_magnitude(wf)).occurrence == 10);

    auto tree = analyze(g.trace);
    REQUIRE(tree.children.size() == 1);
    CHECK(tree.children[0].occurrence == 5);
    CHECK(tree.children[0].length == 6422);
    CHECK(leaf_count(tree) == 4);
    CHECK(error_rate(predict_waveform(tree, 4096), build_golden_waveform(g.trace, 4096)).mape_percent < 1e-9);
}

TEST_CASE("template occurrence times length fits the parent") {
    std::mt19937_64 rng(31);
    std::uniform_real_distribution<double> cpi(0.8, 3.0);
    std::uniform_int_distribution<int> cnt(5, 90);
    for (int i = 0; i < 20; ++i) {
        ScenarioSpec spec;
        for (int s = 0; s < 2 + i % 3; ++s)
            spec.segments.push_back(scenarios::leaf("s" + std::to_string(s), cpi(rng), 1 + 2 * s, cnt(rng)));
        spec.repetitions = 2 + i % 5;
        spec.noise_stddev = 0.05;
        spec.seed = rng();
        auto g = generate(spec);
        auto tree = analyze(g.trace);
        std::function<void(const PhaseNode&)> walk = [&](const PhaseNode& n) {
            const auto stride = sample_stride_for(n.length, AnalysisConfig{}.resolution);
            for (const auto& c : n.children) {
                CHECK(c.occurrence * c.length <= n.length + stride);
                walk(c);
            }
        };
        walk(tree);
    }
}

TEST_CASE("zero-noise leaves carry the scripted cpi") {
    for (const auto& spec : {scenarios::square_4500(), scenarios::two_level(), scenarios::step(1.0, 2.5, 300)}) {
        auto g = generate(spec);
        auto tree = analyze(g.trace);
        std::vector<double> scripted;
        for_each_node(g.annotation, [&](const PhaseNode& n) { scripted.push_back(n.mean_cpi); });
        for_each_node(tree, [&](const PhaseNode& n) {
            if (!n.is_leaf()) return;
            const bool found = std::any_of(scripted.begin(), scripted.end(),
                                           [&](double c) { return std::fabs(c - n.mean_cpi) <= 1e-9; });
            CHECK(found);
        });
    }
}

TEST_CASE("scaling quantum cpis scales means and keeps the shape") {
    ScenarioSpec spec = scenarios::two_level();
    spec.quantum_length = 50;
    auto g = generate(spec);
    auto base = analyze(g.trace, AnalysisConfig{}, AttributionMode::Quantum);
    std::vector<BlockEvent> bare;
    for (const auto& e : g.trace.events()) bare.push_back({e.block, std::nullopt});
    for (double a : {0.5, 2.0, 4.0}) {
        std::vector<QuantumRecord> q = g.trace.quanta();
        for (auto& r : q) r.cpi *= a;
        ExecutionTrace scaled(g.trace.blocks(), bare, q, spec.quantum_length);
        auto tree = analyze(scaled);
        std::vector<const PhaseNode*> x, y;
        std::function<void(const PhaseNode&, std::vector<const PhaseNode*>&)> flat =
            [&](const PhaseNode& n, std::vector<const PhaseNode*>& out) {
                out.push_back(&n);
                for (const auto& c : n.children) flat(c, out);
            };
        flat(base, x);
        flat(tree, y);
        REQUIRE(x.size() == y.size());
        for (std::size_t i = 0; i < x.size(); ++i) {
            CHECK(y[i]->head_block == x[i]->head_block);
            CHECK(y[i]->start == x[i]->start);
            CHECK(y[i]->length == x[i]->length);
            CHECK(y[i]->occurrence == x[i]->occurrence);
            CHECK(y[i]->mean_cpi == doctest::Approx(a * x[i]->mean_cpi).epsilon(1e-12));
        }
    }
}
