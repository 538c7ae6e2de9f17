#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "cli/config.hpp"

namespace vecprobe::cli {

inline constexpr const char* kVersion = "0.1.0";

const std::vector<std::string>& command_names();

// Runs one command. Artifacts land in `out_dir`; on failure every file this
// call created is removed and the exception propagates.
void run_command(const std::string& command, const ConfigMap& config, const std::filesystem::path& out_dir,
                 std::size_t jobs);

// Exit status for an exception thrown by run_command.
int exit_code_for(const std::exception& e);

// Full argv entry point: parses flags, configures logging, returns the exit code.
int run(int argc, char** argv);

}  // namespace vecprobe::cli
