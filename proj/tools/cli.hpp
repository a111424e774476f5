// Copyright 2026 The advtts Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef ADVTTS_TOOLS_CLI_HPP
#define ADVTTS_TOOLS_CLI_HPP

#include <ostream>
#include <string>
#include <vector>

namespace advtts::cli {

// Dispatches one subcommand (gen-data, train, probe, synth, align-compare).
// Exit codes: 0 success, 2 usage or validation failure, 3 numeric failure.
int run_command(const std::vector<std::string>& args, std::ostream& out,
                std::ostream& err);

}  // namespace advtts::cli

#endif  // ADVTTS_TOOLS_CLI_HPP
