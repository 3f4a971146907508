#include "bbphase/trace.hpp"

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <fstream>
#include <istream>
#include <sstream>
#include <system_error>
#include <unordered_set>

#include "numfmt.hpp"

namespace bbphase {

namespace {

std::string located(const std::string& what, std::size_t line) {
    if (line == 0) return what;
    return "line " + std::to_string(line) + ": " + what;
}

std::optional<Terminator> terminator_from_code(std::string_view code) {
    if (code.size() != 1) return std::nullopt;
    switch (code[0]) {
        case 'F': return Terminator::Fallthrough;
        case 'B': return Terminator::Branch;
        case 'C': return Terminator::Call;
        case 'R': return Terminator::Return;
        default: return std::nullopt;
    }
}

bool needs_target(Terminator t) { return t == Terminator::Branch || t == Terminator::Call; }

std::vector<std::string_view> split_fields(std::string_view line) {
    std::vector<std::string_view> fields;
    std::size_t i = 0;
    while (i < line.size()) {
        while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
        std::size_t j = i;
        while (j < line.size() && line[j] != ' ' && line[j] != '\t' && line[j] != '\r') ++j;
        if (j > i) fields.push_back(line.substr(i, j - i));
        i = j;
    }
    return fields;
}

}  // namespace

char terminator_code(Terminator t) {
    switch (t) {
        case Terminator::Fallthrough: return 'F';
        case Terminator::Branch: return 'B';
        case Terminator::Call: return 'C';
        case Terminator::Return: return 'R';
    }
    return '?';
}

TraceError::TraceError(const std::string& what, std::size_t line)
    : std::runtime_error(located(what, line)), line_(line) {}

ExecutionTrace::ExecutionTrace(std::vector<BlockDescriptor> blocks,
                               std::vector<BlockEvent> events,
                               std::vector<QuantumRecord> quanta,
                               std::optional<std::uint64_t> quantum_length)
    : blocks_(std::move(blocks)),
      events_(std::move(events)),
      quanta_(std::move(quanta)),
      quantum_length_(quantum_length) {
    std::unordered_set<Address> addresses;
    by_id_.reserve(blocks_.size());
    for (std::size_t i = 0; i < blocks_.size(); ++i) {
        const auto& b = blocks_[i];
        if (b.instruction_count < 1)
            throw TraceError("block " + std::to_string(b.id) + " has zero instructions");
        if (needs_target(b.terminator) != b.target_address.has_value())
            throw TraceError("block " + std::to_string(b.id) + ": target address must be present iff terminator is B or C");
        if (!by_id_.emplace(b.id, static_cast<std::uint32_t>(i)).second)
            throw TraceError("duplicate block " + std::to_string(b.id));
        if (!addresses.insert(b.start_address).second)
            throw TraceError("duplicate start address " + detail::format_hex(b.start_address));
    }

    if (events_.empty()) throw TraceError("trace has no events");
    offsets_.resize(events_.size() + 1);
    offsets_[0] = 0;
    std::size_t with_cycles = 0;
    for (std::size_t i = 0; i < events_.size(); ++i) {
        const auto& e = events_[i];
        if (e.block >= blocks_.size()) throw TraceError("event " + std::to_string(i) + " references unknown block");
        if (e.cycles) {
            if (!std::isfinite(*e.cycles) || *e.cycles < 0.0)
                throw TraceError("event " + std::to_string(i) + " has negative or non-finite cycles");
            ++with_cycles;
        }
        offsets_[i + 1] = offsets_[i] + blocks_[e.block].instruction_count;
    }
    if (with_cycles != 0 && with_cycles != events_.size())
        throw TraceError("mixed-mode trace: only some events carry cycles");
    golden_ = with_cycles == events_.size();

    if (!quanta_.empty()) {
        if (!quantum_length_ || *quantum_length_ == 0)
            throw TraceError("quantum records require a positive quantum length (L record)");
        for (std::size_t q = 0; q < quanta_.size(); ++q) {
            if (quanta_[q].index != q)
                throw TraceError("quantum indices must be contiguous from 0 (expected " + std::to_string(q) + ")");
            if (!(quanta_[q].cpi > 0.0) || !std::isfinite(quanta_[q].cpi))
                throw TraceError("quantum " + std::to_string(q) + " has non-positive cpi");
        }
        const std::uint64_t d = total_instructions();
        const std::uint64_t expected = (d + *quantum_length_ - 1) / *quantum_length_;
        if (quanta_.size() != expected)
            throw TraceError("quantum count mismatch: " + std::to_string(quanta_.size()) + " records, expected " +
                             std::to_string(expected));
    } else if (quantum_length_ && *quantum_length_ == 0) {
        throw TraceError("quantum length must be positive");
    }

    if (!golden_ && quanta_.empty())
        throw TraceError("trace carries neither per-event cycles nor quantum samples");
}

std::optional<std::uint32_t> ExecutionTrace::block_index(BlockId id) const {
    auto it = by_id_.find(id);
    if (it == by_id_.end()) return std::nullopt;
    return it->second;
}

std::size_t ExecutionTrace::event_at(std::uint64_t offset) const {
    auto it = std::upper_bound(offsets_.begin(), offsets_.end(), offset);
    return static_cast<std::size_t>(it - offsets_.begin()) - 1;
}

bool ExecutionTrace::operator==(const ExecutionTrace& other) const {
    return blocks_ == other.blocks_ && events_ == other.events_ && quanta_ == other.quanta_ &&
           quantum_length_ == other.quantum_length_;
}

ExecutionTrace parse_trace(std::istream& in) {
    std::vector<BlockDescriptor> blocks;
    std::vector<BlockEvent> events;
    std::vector<QuantumRecord> quanta;
    std::optional<std::uint64_t> quantum_length;
    std::unordered_map<BlockId, std::uint32_t> index_of;
    std::unordered_set<Address> addresses;

    bool seen_version = false;
    std::size_t line_no = 0;
    std::string line;
    while (std::getline(in, line)) {
        ++line_no;
        std::string_view view(line);
        if (auto hash = view.find('#'); hash != std::string_view::npos) view = view.substr(0, hash);
        auto f = split_fields(view);
        if (f.empty()) continue;

        auto bad = [&](const std::string& what) { return TraceError(what, line_no); };
        if (f[0].size() != 1) throw bad("unknown record '" + std::string(f[0]) + "'");
        const char kind = f[0][0];

        if (!seen_version) {
            if (kind != 'V') throw bad("first record must be the version header 'V 1'");
            if (f.size() != 2 || f[1] != "1") throw bad("unsupported trace version");
            seen_version = true;
            continue;
        }

        switch (kind) {
            case 'V':
                throw bad("duplicate version header");
            case 'B': {
                if (f.size() != 5 && f.size() != 6) throw bad("malformed block record");
                auto id = detail::parse_number<BlockId>(f[1]);
                auto addr = detail::parse_hex(f[2]);
                auto count = detail::parse_number<std::uint32_t>(f[3]);
                auto term = terminator_from_code(f[4]);
                if (!id || !addr || !count || !term) throw bad("malformed block record");
                if (*count == 0) throw bad("block " + std::to_string(*id) + " has zero instructions");
                BlockDescriptor b{*id, *addr, *count, *term, std::nullopt};
                if (f.size() == 6) {
                    auto target = detail::parse_hex(f[5]);
                    if (!target) throw bad("malformed target address");
                    b.target_address = *target;
                }
                if (needs_target(b.terminator) != b.target_address.has_value())
                    throw bad("target address must be present iff terminator is B or C");
                if (index_of.count(b.id)) throw bad("duplicate block " + std::to_string(b.id));
                if (!addresses.insert(b.start_address).second)
                    throw bad("duplicate start address " + detail::format_hex(b.start_address));
                index_of.emplace(b.id, static_cast<std::uint32_t>(blocks.size()));
                blocks.push_back(b);
                break;
            }
            case 'E': {
                if (f.size() != 2 && f.size() != 3) throw bad("malformed event record");
                auto id = detail::parse_number<BlockId>(f[1]);
                if (!id) throw bad("malformed event record");
                auto it = index_of.find(*id);
                if (it == index_of.end()) throw bad("unknown block " + std::to_string(*id));
                BlockEvent e{it->second, std::nullopt};
                if (f.size() == 3) {
                    auto cycles = detail::parse_number<double>(f[2]);
                    if (!cycles || !std::isfinite(*cycles) || *cycles < 0.0) throw bad("malformed cycle count");
                    e.cycles = *cycles;
                }
                events.push_back(e);
                break;
            }
            case 'Q': {
                if (f.size() != 3) throw bad("malformed quantum record");
                auto idx = detail::parse_number<std::uint64_t>(f[1]);
                auto cpi = detail::parse_number<double>(f[2]);
                if (!idx || !cpi) throw bad("malformed quantum record");
                if (*idx != quanta.size()) throw bad("quantum indices must be contiguous from 0");
                if (!(*cpi > 0.0) || !std::isfinite(*cpi)) throw bad("quantum cpi must be positive");
                quanta.push_back({*idx, *cpi});
                break;
            }
            case 'L': {
                if (f.size() != 2) throw bad("malformed quantum length record");
                auto len = detail::parse_number<std::uint64_t>(f[1]);
                if (!len || *len == 0) throw bad("quantum length must be a positive integer");
                if (quantum_length) throw bad("duplicate quantum length record");
                quantum_length = *len;
                break;
            }
            default:
                throw bad("unknown record '" + std::string(f[0]) + "'");
        }
    }
    if (!seen_version) throw TraceError("missing version header 'V 1'");
    if (quantum_length && quanta.empty()) throw TraceError("quantum length given without quantum records");

    return ExecutionTrace(std::move(blocks), std::move(events), std::move(quanta), quantum_length);
}

ExecutionTrace parse_trace_text(const std::string& text) {
    std::istringstream in(text);
    return parse_trace(in);
}

ExecutionTrace read_trace_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::system_error(errno, std::generic_category(), "cannot open " + path.string());
    return parse_trace(in);
}

void write_trace(std::ostream& out, const ExecutionTrace& trace) {
    out << "V 1\n";
    for (const auto& b : trace.blocks()) {
        out << "B " << b.id << ' ' << detail::format_hex(b.start_address) << ' ' << b.instruction_count << ' '
            << terminator_code(b.terminator);
        if (b.target_address) out << ' ' << detail::format_hex(*b.target_address);
        out << '\n';
    }
    if (trace.has_quanta()) {
        out << "L " << *trace.quantum_length() << '\n';
        for (const auto& q : trace.quanta()) out << "Q " << q.index << ' ' << detail::format_double(q.cpi) << '\n';
    }
    for (const auto& e : trace.events()) {
        out << "E " << trace.blocks()[e.block].id;
        if (e.cycles) out << ' ' << detail::format_double(*e.cycles);
        out << '\n';
    }
}

std::string serialize_trace(const ExecutionTrace& trace) {
    std::ostringstream out;
    write_trace(out, trace);
    return out.str();
}

}  // namespace bbphase
