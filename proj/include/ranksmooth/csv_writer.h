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

#ifndef RANKSMOOTH_CSV_WRITER_H_
#define RANKSMOOTH_CSV_WRITER_H_

#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <string>
#include <string_view>
#include <vector>

namespace ranksmooth {

// Shortest round-trip representation; independent of the C locale.
std::string format_double(double v);

// Writes comma-separated rows with LF endings.
class CsvWriter {
 public:
  explicit CsvWriter(const std::filesystem::path& path);

  void header(const std::vector<std::string>& names);
  void row(const std::vector<std::string>& cells);

 private:
  std::ofstream os_;
  std::filesystem::path path_;
};

}  // namespace ranksmooth

#endif  // RANKSMOOTH_CSV_WRITER_H_
