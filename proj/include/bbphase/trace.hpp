#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace bbphase {

using BlockId = std::uint64_t;
using Address = std::uint64_t;

enum class Terminator { Fallthrough, Branch, Call, Return };

char terminator_code(Terminator t);

// A static basic block. start_address is the block's identity; id is a compact alias.
struct BlockDescriptor {
    BlockId id = 0;
    Address start_address = 0;
    std::uint32_t instruction_count = 1;
    Terminator terminator = Terminator::Fallthrough;
    std::optional<Address> target_address;  // present iff Branch or Call

    bool operator==(const BlockDescriptor&) const = default;
};

// One dynamic execution of a block.
struct BlockEvent {
    std::uint32_t block = 0;        // index into ExecutionTrace::blocks()
    std::optional<double> cycles;   // golden traces only

    bool operator==(const BlockEvent&) const = default;
};

struct QuantumRecord {
    std::uint64_t index = 0;
    double cpi = 0.0;

    bool operator==(const QuantumRecord&) const = default;
};

class TraceError : public std::runtime_error {
public:
    explicit TraceError(const std::string& what, std::size_t line = 0);

    // 1-based source line, 0 when the error is not tied to a line.
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

/// Validated, immutable basic-block trace.
///
/// A trace is in golden mode when every event carries cycles and in quantum
/// mode when quantum samples are present; validation traces may be both.
/// The constructor checks every structural invariant and throws TraceError.
class ExecutionTrace {
public:
    ExecutionTrace(std::vector<BlockDescriptor> blocks,
                   std::vector<BlockEvent> events,
                   std::vector<QuantumRecord> quanta = {},
                   std::optional<std::uint64_t> quantum_length = std::nullopt);

    const std::vector<BlockDescriptor>& blocks() const noexcept { return blocks_; }
    const std::vector<BlockEvent>& events() const noexcept { return events_; }
    const std::vector<QuantumRecord>& quanta() const noexcept { return quanta_; }
    std::optional<std::uint64_t> quantum_length() const noexcept { return quantum_length_; }

    bool has_golden_cycles() const noexcept { return golden_; }
    bool has_quanta() const noexcept { return !quanta_.empty(); }

    std::uint64_t total_instructions() const noexcept { return offsets_.back(); }

    const BlockDescriptor& block_of(std::size_t event_index) const {
        return blocks_[events_[event_index].block];
    }
    std::optional<std::uint32_t> block_index(BlockId id) const;

    // Instruction offset of the first instruction of event i; event_start(events().size()) == D.
    std::uint64_t event_start(std::size_t i) const noexcept { return offsets_[i]; }
    std::span<const std::uint64_t> event_starts() const noexcept { return offsets_; }

    // Index of the event executing instruction `offset` (offset < D).
    std::size_t event_at(std::uint64_t offset) const;

    bool operator==(const ExecutionTrace& other) const;

private:
    std::vector<BlockDescriptor> blocks_;
    std::vector<BlockEvent> events_;
    std::vector<QuantumRecord> quanta_;
    std::optional<std::uint64_t> quantum_length_;
    std::unordered_map<BlockId, std::uint32_t> by_id_;
    std::vector<std::uint64_t> offsets_;
    bool golden_ = false;
};

/// D: total dynamic instruction count.
inline std::uint64_t total_instructions(const ExecutionTrace& trace) { return trace.total_instructions(); }

ExecutionTrace parse_trace(std::istream& in);
ExecutionTrace parse_trace_text(const std::string& text);
ExecutionTrace read_trace_file(const std::filesystem::path& path);

// Emits the line format read by parse_trace; doubles are written in shortest
// round-trip form so parse(serialize(t)) == t.
void write_trace(std::ostream& out, const ExecutionTrace& trace);
std::string serialize_trace(const ExecutionTrace& trace);

}  // namespace bbphase
