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

#include "kdlic/npz.hpp"

#include <cstring>
#include <fstream>

#include "kdlic/errors.hpp"

namespace kdlic {

namespace {

uint16_t rd16(const uint8_t* p) { return uint16_t(p[0]) | (uint16_t(p[1]) << 8); }
uint32_t rd32(const uint8_t* p) {
  return uint32_t(p[0]) | (uint32_t(p[1]) << 8) | (uint32_t(p[2]) << 16) | (uint32_t(p[3]) << 24);
}

void wr16(std::vector<uint8_t>& out, uint16_t v) {
  out.push_back(uint8_t(v));
  out.push_back(uint8_t(v >> 8));
}

void wr32(std::vector<uint8_t>& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(uint8_t(v >> (8 * i)));
}

// CRC-32 (ZIP polynomial), table-less bitwise form.
uint32_t crc32_of(const uint8_t* data, size_t len) {
  uint32_t crc = 0xFFFFFFFFu;
  for (size_t i = 0; i < len; ++i) {
    crc ^= data[i];
    for (int k = 0; k < 8; ++k) crc = (crc >> 1) ^ (0xEDB88320u & (0u - (crc & 1u)));
  }
  return ~crc;
}

NpzEntry parse_npy(const std::string& member, const uint8_t* p, size_t len) {
  if (len < 10 || std::memcmp(p, "\x93NUMPY", 6) != 0) {
    throw ParseError("archive member " + member + " is not an npy tensor");
  }
  const int major = p[6];
  size_t header_len, header_off;
  if (major == 1) {
    header_len = rd16(p + 8);
    header_off = 10;
  } else {
    header_len = rd32(p + 8);
    header_off = 12;
  }
  if (header_off + header_len > len) throw ParseError("npy header truncated in " + member);
  const std::string header(reinterpret_cast<const char*>(p + header_off), header_len);

  auto find_value = [&](const std::string& key) -> std::string {
    const auto kpos = header.find("'" + key + "'");
    if (kpos == std::string::npos) throw ParseError("npy header missing " + key + " in " + member);
    auto colon = header.find(':', kpos);
    auto start = header.find_first_not_of(" ", colon + 1);
    return header.substr(start);
  };

  std::string descr = find_value("descr");
  descr = descr.substr(1, descr.find('\'', 1) - 1);  // strip quotes
  const std::string order = find_value("fortran_order");
  if (order.rfind("True", 0) == 0) {
    throw ParseError("npy member " + member + " is Fortran-ordered; re-export in C order");
  }

  std::string shape_str = find_value("shape");
  NpzEntry entry;
  entry.name = member;
  size_t pos = 1;  // past '('
  while (pos < shape_str.size() && shape_str[pos] != ')') {
    size_t end;
    const long long d = std::stoll(shape_str.substr(pos), &end);
    entry.shape.push_back(d);
    pos += end;
    while (pos < shape_str.size() && (shape_str[pos] == ',' || shape_str[pos] == ' ')) ++pos;
  }

  int64_t count = 1;
  for (int64_t d : entry.shape) count *= d;
  const uint8_t* data = p + header_off + header_len;
  const size_t avail = len - header_off - header_len;
  entry.data.resize(size_t(count));
  if (descr == "<f4") {
    if (avail < size_t(count) * 4) throw ParseError("npy data truncated in " + member);
    for (int64_t i = 0; i < count; ++i) {
      float v;
      std::memcpy(&v, data + i * 4, 4);
      entry.data[size_t(i)] = v;
    }
  } else if (descr == "<f8") {
    if (avail < size_t(count) * 8) throw ParseError("npy data truncated in " + member);
    for (int64_t i = 0; i < count; ++i) {
      double v;
      std::memcpy(&v, data + i * 8, 8);
      entry.data[size_t(i)] = v;
    }
  } else {
    throw ParseError("npy member " + member + " has unsupported dtype " + descr +
                     " (expected <f4 or <f8)");
  }
  return entry;
}

}  // namespace

std::vector<NpzEntry> load_npz(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open tensor archive: " + path);
  std::vector<uint8_t> buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());

  std::vector<NpzEntry> out;
  size_t pos = 0;
  while (pos + 4 <= buf.size()) {
    const uint32_t sig = rd32(buf.data() + pos);
    if (sig == 0x02014b50 || sig == 0x06054b50) break;  // central directory / end
    if (sig != 0x04034b50) throw ParseError("not a zip archive: " + path);
    if (pos + 30 > buf.size()) throw ParseError("zip local header truncated: " + path);
    const uint8_t* h = buf.data() + pos;
    const uint16_t flags = rd16(h + 6);
    const uint16_t method = rd16(h + 8);
    const uint32_t csize = rd32(h + 18);
    const uint16_t name_len = rd16(h + 26);
    const uint16_t extra_len = rd16(h + 28);
    std::string name(reinterpret_cast<const char*>(h + 30), name_len);
    const size_t data_off = pos + 30 + name_len + extra_len;
    if (method != 0) {
      throw ParseError("zip member " + name + " is compressed; this reader handles stored " +
                       "(numpy.savez) archives only — re-export without compression");
    }
    if (flags & 0x08) throw ParseError("zip member " + name + " uses streaming descriptors");
    if (data_off + csize > buf.size()) throw ParseError("zip member truncated: " + name);
    if (name.size() > 4 && name.substr(name.size() - 4) == ".npy") {
      out.push_back(parse_npy(name.substr(0, name.size() - 4), buf.data() + data_off, csize));
    }
    pos = data_off + csize;
  }
  if (out.empty()) throw ParseError("tensor archive has no npy members: " + path);
  return out;
}

void save_npz(const std::string& path,
              const std::vector<std::pair<std::string, Tensor<float>>>& tensors) {
  std::vector<uint8_t> out;
  struct CentralEntry {
    std::string name;
    uint32_t crc, size, offset;
  };
  std::vector<CentralEntry> central;

  for (const auto& [name, t] : tensors) {
    // npy payload
    std::string header = "{'descr': '<f4', 'fortran_order': False, 'shape': (";
    for (size_t i = 0; i < t.shape().size(); ++i) {
      header += std::to_string(t.shape()[i]);
      if (t.shape().size() == 1 || i + 1 < t.shape().size()) header += ",";
      if (i + 1 < t.shape().size()) header += " ";
    }
    header += "), }";
    const size_t base = 10;
    size_t total = base + header.size() + 1;
    const size_t pad = (64 - total % 64) % 64;
    header.append(pad, ' ');
    header.push_back('\n');

    std::vector<uint8_t> npy;
    const char magic[] = "\x93NUMPY\x01\x00";
    npy.insert(npy.end(), magic, magic + 8);
    wr16(npy, uint16_t(header.size()));
    npy.insert(npy.end(), header.begin(), header.end());
    const auto* raw = reinterpret_cast<const uint8_t*>(t.data());
    npy.insert(npy.end(), raw, raw + t.numel() * sizeof(float));

    const std::string member = name + ".npy";
    CentralEntry ce;
    ce.name = member;
    ce.crc = crc32_of(npy.data(), npy.size());
    ce.size = uint32_t(npy.size());
    ce.offset = uint32_t(out.size());
    central.push_back(ce);

    wr32(out, 0x04034b50);
    wr16(out, 20);        // version needed
    wr16(out, 0);         // flags
    wr16(out, 0);         // method: stored
    wr16(out, 0);         // mtime
    wr16(out, 0);         // mdate
    wr32(out, ce.crc);
    wr32(out, ce.size);   // compressed
    wr32(out, ce.size);   // uncompressed
    wr16(out, uint16_t(member.size()));
    wr16(out, 0);         // extra len
    out.insert(out.end(), member.begin(), member.end());
    out.insert(out.end(), npy.begin(), npy.end());
  }

  const uint32_t cd_offset = uint32_t(out.size());
  for (const auto& ce : central) {
    wr32(out, 0x02014b50);
    wr16(out, 20);  // version made by
    wr16(out, 20);  // version needed
    wr16(out, 0);
    wr16(out, 0);
    wr16(out, 0);
    wr16(out, 0);
    wr32(out, ce.crc);
    wr32(out, ce.size);
    wr32(out, ce.size);
    wr16(out, uint16_t(ce.name.size()));
    wr16(out, 0);
    wr16(out, 0);
    wr16(out, 0);
    wr16(out, 0);
    wr32(out, 0);
    wr32(out, ce.offset);
    out.insert(out.end(), ce.name.begin(), ce.name.end());
  }
  const uint32_t cd_size = uint32_t(out.size()) - cd_offset;
  wr32(out, 0x06054b50);
  wr16(out, 0);
  wr16(out, 0);
  wr16(out, uint16_t(central.size()));
  wr16(out, uint16_t(central.size()));
  wr32(out, cd_size);
  wr32(out, cd_offset);
  wr16(out, 0);

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write tensor archive: " + path);
  f.write(reinterpret_cast<const char*>(out.data()), std::streamsize(out.size()));
}

}  // namespace kdlic
