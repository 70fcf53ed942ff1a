/*
 * Copyright 2026 The ranksmooth Authors.
 *
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

#ifndef RANKSMOOTH_TOOLS_CLI_APP_H_
#define RANKSMOOTH_TOOLS_CLI_APP_H_

#include <map>
#include <ostream>
#include <string>
#include <vector>

namespace ranksmooth::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

// Runs one command line. args[0] is the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

// Parses "key = value" lines; '#' starts a comment. Throws std::invalid_argument
// with the offending line on malformed input.
std::map<std::string, std::string> parse_config_text(const std::string& text);

}  // namespace ranksmooth::cli

#endif  // RANKSMOOTH_TOOLS_CLI_APP_H_
