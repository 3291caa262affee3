// Copyright 2026 the kdlic Authors. All Rights Reserved.
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

#pragma once

#include <mutex>
#include <string>
#include <vector>

#include "kdlic/image.hpp"

namespace kdlic {

/// Host-codec bridge: a persistent Python/PIL worker process spoken to
/// over pipes with length-prefixed messages. Provides the WebP and
/// JPEG-2000 paths; one worker serves the whole process.
class PilBridge {
 public:
  static PilBridge& instance();

  bool available();
  const std::string& unavailable_reason();

  /// options_json: a JSON object of keyword arguments for the encoder
  /// (e.g. {"quality":80,"lossless":true}).
  std::vector<uint8_t> encode(const Image8& img, const std::string& format,
                              const std::string& options_json);
  Image8 decode(const std::vector<uint8_t>& bytes);

  ~PilBridge();
  PilBridge(const PilBridge&) = delete;
  PilBridge& operator=(const PilBridge&) = delete;

 private:
  PilBridge() = default;
  bool ensure_started_locked();
  void shutdown_locked();
  void write_all_locked(const void* data, size_t len);
  void read_all_locked(void* data, size_t len);
  std::string read_line_locked();

  std::mutex mu_;
  bool started_ = false;
  bool failed_ = false;
  std::string fail_reason_;
  int child_pid_ = -1;
  int to_child_ = -1;
  int from_child_ = -1;
};

}  // namespace kdlic
