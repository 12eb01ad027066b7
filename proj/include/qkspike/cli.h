// Copyright 2026 The qkspike Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef QKSPIKE_CLI_H_
#define QKSPIKE_CLI_H_

#include <iosfwd>

namespace qkspike {

// Exit codes of the command-line interface.
inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitRuntime = 2;

// Entry point of the `qkspike` tool. Subcommands: train, eval,
// profile-energy, analyze-attention, bench-complexity, bench-memory,
// mc-verify, gen-data. Every subcommand accepts --config <json>, --seed and
// --out <dir>; QKF_SEED is the seed fallback.
int cli_dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace qkspike

#endif  // QKSPIKE_CLI_H_
