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

#include "ranksmooth/csv_writer.h"

#include <array>
#include <charconv>
#include <cmath>
#include <stdexcept>

namespace ranksmooth {

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  std::array<char, 64> buf{};
  auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  if (ec != std::errc()) throw std::runtime_error("format_double: conversion failed");
  return std::string(buf.data(), end);
}

CsvWriter::CsvWriter(const std::filesystem::path& path)
    : os_(path, std::ios::binary | std::ios::trunc), path_(path) {
  if (!os_) throw std::runtime_error("cannot open for writing: " + path.string());
}

void CsvWriter::header(const std::vector<std::string>& names) { row(names); }

void CsvWriter::row(const std::vector<std::string>& cells) {
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i) os_.put(',');
    os_ << cells[i];
  }
  os_.put('\n');
  if (!os_) throw std::runtime_error("write failed: " + path_.string());
}

}  // namespace ranksmooth
