#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace bbphase::cli {

// 0 success, 1 analysis error, 2 usage or I/O error.
enum ExitCode : int { kOk = 0, kAnalysisError = 1, kUsageError = 2 };

struct CommandOutcome {
    int exit_code = kOk;
    std::vector<std::filesystem::path> emitted_files;
};

/// Runs one command line (args excludes the program name). Diagnostics go
/// to `err`; nothing is written to `out` unless a command targets stdout.
CommandOutcome run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace bbphase::cli
