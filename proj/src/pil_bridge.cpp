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

#include "kdlic/pil_bridge.hpp"

#include <fcntl.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

#include <json.hpp>

#include "kdlic/errors.hpp"

using nlohmann::json;

namespace kdlic {

namespace {

// The worker: framed requests on stdin, framed replies on stdout.
constexpr const char* kWorkerScript = R"PY(
import sys, io, json
inp = sys.stdin.buffer
out = sys.stdout.buffer
try:
    from PIL import Image
except Exception as e:
    out.write((json.dumps({"ok": False, "error": "PIL unavailable: %s" % e, "len": 0}) + "\n").encode())
    out.flush()
    sys.exit(1)

def reply(obj, payload=b""):
    obj["len"] = len(payload)
    out.write((json.dumps(obj) + "\n").encode())
    if payload:
        out.write(payload)
    out.flush()

while True:
    line = inp.readline()
    if not line:
        break
    try:
        h = json.loads(line)
        payload = inp.read(h.get("len", 0))
        op = h["op"]
        if op == "ping":
            reply({"ok": True})
        elif op == "encode":
            im = Image.frombytes("RGB", (h["width"], h["height"]), payload)
            buf = io.BytesIO()
            im.save(buf, format=h["format"], **h.get("options", {}))
            reply({"ok": True}, buf.getvalue())
        elif op == "decode":
            im = Image.open(io.BytesIO(payload))
            im.load()
            if im.mode != "RGB":
                im = im.convert("RGB")
            reply({"ok": True, "width": im.width, "height": im.height}, im.tobytes())
        else:
            reply({"ok": False, "error": "unknown op %r" % op})
    except Exception as e:
        reply({"ok": False, "error": str(e)})
)PY";

}  // namespace

PilBridge& PilBridge::instance() {
  static PilBridge bridge;
  return bridge;
}

PilBridge::~PilBridge() {
  std::lock_guard<std::mutex> lock(mu_);
  shutdown_locked();
}

void PilBridge::shutdown_locked() {
  if (to_child_ >= 0) close(to_child_);
  if (from_child_ >= 0) close(from_child_);
  to_child_ = from_child_ = -1;
  if (child_pid_ > 0) {
    int status = 0;
    waitpid(child_pid_, &status, WNOHANG);
    child_pid_ = -1;
  }
  started_ = false;
}

bool PilBridge::ensure_started_locked() {
  if (started_) return true;
  if (failed_) return false;

  int to_pipe[2], from_pipe[2];
  if (pipe(to_pipe) != 0 || pipe(from_pipe) != 0) {
    failed_ = true;
    fail_reason_ = "pipe() failed";
    return false;
  }
  const pid_t pid = fork();
  if (pid < 0) {
    failed_ = true;
    fail_reason_ = "fork() failed";
    return false;
  }
  if (pid == 0) {
    dup2(to_pipe[0], STDIN_FILENO);
    dup2(from_pipe[1], STDOUT_FILENO);
    close(to_pipe[0]);
    close(to_pipe[1]);
    close(from_pipe[0]);
    close(from_pipe[1]);
    execlp("python3", "python3", "-c", kWorkerScript, static_cast<char*>(nullptr));
    _exit(127);
  }
  close(to_pipe[0]);
  close(from_pipe[1]);
  to_child_ = to_pipe[1];
  from_child_ = from_pipe[0];
  child_pid_ = pid;
  started_ = true;

  // Handshake; a missing interpreter or PIL surfaces as EOF or an error reply.
  try {
    const std::string ping = "{\"op\":\"ping\",\"len\":0}\n";
    write_all_locked(ping.data(), ping.size());
    const std::string line = read_line_locked();
    const json r = json::parse(line);
    if (!r.value("ok", false)) {
      fail_reason_ = r.value("error", "worker rejected handshake");
      failed_ = true;
      shutdown_locked();
      return false;
    }
  } catch (const std::exception& e) {
    fail_reason_ = std::string("worker handshake failed: ") + e.what();
    failed_ = true;
    shutdown_locked();
    return false;
  }
  return true;
}

bool PilBridge::available() {
  std::lock_guard<std::mutex> lock(mu_);
  return ensure_started_locked();
}

const std::string& PilBridge::unavailable_reason() {
  std::lock_guard<std::mutex> lock(mu_);
  ensure_started_locked();
  return fail_reason_;
}

void PilBridge::write_all_locked(const void* data, size_t len) {
  const char* p = static_cast<const char*>(data);
  while (len > 0) {
    const ssize_t n = write(to_child_, p, len);
    if (n <= 0) {
      if (errno == EINTR) continue;
      throw CapabilityError("codec worker pipe closed while writing");
    }
    p += n;
    len -= size_t(n);
  }
}

void PilBridge::read_all_locked(void* data, size_t len) {
  char* p = static_cast<char*>(data);
  while (len > 0) {
    const ssize_t n = read(from_child_, p, len);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) throw CapabilityError("codec worker pipe closed while reading");
    p += n;
    len -= size_t(n);
  }
}

std::string PilBridge::read_line_locked() {
  std::string line;
  char c;
  while (true) {
    const ssize_t n = read(from_child_, &c, 1);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) throw CapabilityError("codec worker pipe closed");
    if (c == '\n') break;
    line.push_back(c);
    if (line.size() >1 << 20) throw CapabilityError("codec worker protocol error");
  }
  return line;
}

std::vector<uint8_t> PilBridge::encode(const Image8& img, const std::string& format,
                                       const std::string& options_json) {
  std::lock_guard<std::mutex> lock(mu_);
  if (!ensure_started_locked()) {
    throw CapabilityError("codec bridge unavailable: " + fail_reason_);
  }
  json h;
  h["op"] = "encode";
  h["format"] = format;
  h["width"] = img.width;
  h["height"] = img.height;
  h["len"] = img.rgb.size();
  h["options"] = json::parse(options_json.empty() ? "{}" : options_json);
  const std::string header = h.dump() + "\n";
  write_all_locked(header.data(), header.size());
  write_all_locked(img.rgb.data(), img.rgb.size());

  const json r = json::parse(read_line_locked());
  std::vector<uint8_t> payload(r.value("len", size_t{0}));
  if (!payload.empty()) read_all_locked(payload.data(), payload.size());
  if (!r.value("ok", false)) {
    throw CapabilityError("codec encode failed: " + r.value("error", std::string("unknown")));
  }
  return payload;
}

Image8 PilBridge::decode(const std::vector<uint8_t>& bytes) {
  std::lock_guard<std::mutex> lock(mu_);
  if (!ensure_started_locked()) {
    throw CapabilityError("codec bridge unavailable: " + fail_reason_);
  }
  json h;
  h["op"] = "decode";
  h["len"] = bytes.size();
  const std::string header = h.dump() + "\n";
  write_all_locked(header.data(), header.size());
  write_all_locked(bytes.data(), bytes.size());

  const json r = json::parse(read_line_locked());
  std::vector<uint8_t> payload(r.value("len", size_t{0}));
  if (!payload.empty()) read_all_locked(payload.data(), payload.size());
  if (!r.value("ok", false)) {
    throw CapabilityError("codec decode failed: " + r.value("error", std::string("unknown")));
  }
  Image8 img;
  img.width = r.at("width").get<int64_t>();
  img.height = r.at("height").get<int64_t>();
  img.rgb = std::move(payload);
  if (int64_t(img.rgb.size()) != img.width * img.height * 3) {
    throw CapabilityError("codec decode returned inconsistent payload");
  }
  return img;
}

}  // namespace kdlic
