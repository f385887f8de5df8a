// Copyright 2026 The npclab Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef NPCLAB_IO_HPP_
#define NPCLAB_IO_HPP_

#include <filesystem>
#include <string>

namespace npclab {

std::string read_text_file(const std::filesystem::path& path);

// Writes to a sibling temp file and renames it over the target, so an
// interrupted writer never leaves a partially written file behind.
void atomic_write_text_file(const std::filesystem::path& path,
                            const std::string& content);

void append_text_file(const std::filesystem::path& path,
                      const std::string& content);

}  // namespace npclab

#endif  // NPCLAB_IO_HPP_
