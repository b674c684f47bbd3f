/*
 * Copyright 2026 The CSST Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <iosfwd>

namespace csst {

// Exit codes of run_cli.
inline constexpr int kExitOk = 0;
inline constexpr int kExitCheckFailed = 1;  // verify-theory assertion failed
inline constexpr int kExitInputError = 2;   // bad data, checkpoint or config

// Entry point for the `csst` tool: gen-data, train, eval, verify-theory.
// Reports go to `out`, diagnostics and warnings to `err`.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace csst
