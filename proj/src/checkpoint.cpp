// Copyright 2026 The hccrop Authors.
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

#include "hccrop/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include <openssl/sha.h>

#include "hccrop/error.hpp"

namespace hccrop {
namespace {

constexpr char kMagic[8] = {'H', 'C', 'C', 'R', 'O', 'P', 'C', 'K'};
static_assert(std::endian::native == std::endian::little, "checkpoint payload assumes a little-endian host");

template <typename T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

template <typename T>
T get(const std::string& in, std::size_t& pos) {
  if (pos + sizeof(T) > in.size()) throw IntegrityError("checkpoint truncated");
  T v;
  std::memcpy(&v, in.data() + pos, sizeof(T));
  pos += sizeof(T);
  return v;
}

std::string digest(const char* data, std::size_t n) {
  unsigned char md[SHA256_DIGEST_LENGTH];
  SHA256(reinterpret_cast<const unsigned char*>(data), n, md);
  return std::string(reinterpret_cast<const char*>(md), SHA256_DIGEST_LENGTH);
}

}  // namespace

const nn::Tensor* Checkpoint::find(const std::string& name) const {
  for (const auto& [n, t] : arrays) {
    if (n == name) return &t;
  }
  return nullptr;
}

const nn::Tensor& Checkpoint::at(const std::string& name) const {
  if (const nn::Tensor* t = find(name)) return *t;
  throw IncompatibleCheckpointError("checkpoint has no array '" + name + "'");
}

std::string sha256_hex(const std::string& bytes) {
  const std::string md = digest(bytes.data(), bytes.size());
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned char c : md) {
    out.push_back(hex[c >> 4]);
    out.push_back(hex[c & 15]);
  }
  return out;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  nlohmann::json index = nlohmann::json::array();
  std::size_t offset = 0;
  for (const auto& [name, t] : ckpt.arrays) {
    index.push_back({{"name", name}, {"shape", t.shape()}, {"offset", offset}});
    offset += t.size();
  }
  const std::string header =
      nlohmann::json{{"config", ckpt.config}, {"metadata", ckpt.metadata}, {"arrays", index}}.dump();

  std::string bytes(kMagic, sizeof(kMagic));
  put<std::uint32_t>(bytes, kCheckpointVersion);
  put<std::uint64_t>(bytes, header.size());
  bytes += header;
  for (const auto& [name, t] : ckpt.arrays) {
    bytes.append(reinterpret_cast<const char*>(t.data()), t.size() * sizeof(double));
  }
  bytes += digest(bytes.data(), bytes.size());

  if (!path.parent_path().empty()) std::filesystem::create_directories(path.parent_path());
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write checkpoint " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open checkpoint " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  const std::string bytes = ss.str();

  if (bytes.size() < sizeof(kMagic) || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    throw IncompatibleCheckpointError(path.string() + " is not a checkpoint archive");
  }
  std::size_t pos = sizeof(kMagic);
  const auto version = get<std::uint32_t>(bytes, pos);
  if (version != kCheckpointVersion) {
    throw IncompatibleCheckpointError("checkpoint format version " + std::to_string(version) + ", expected " +
                                      std::to_string(kCheckpointVersion));
  }
  if (bytes.size() < pos + SHA256_DIGEST_LENGTH) throw IntegrityError("checkpoint truncated");
  const std::size_t body = bytes.size() - SHA256_DIGEST_LENGTH;
  if (digest(bytes.data(), body) != bytes.substr(body)) throw IntegrityError("checkpoint digest mismatch");

  const auto header_len = get<std::uint64_t>(bytes, pos);
  if (pos + header_len > body) throw IntegrityError("checkpoint header overruns the payload");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(pos, header_len));
  } catch (const nlohmann::json::exception& e) {
    throw IntegrityError(std::string("checkpoint header unreadable: ") + e.what());
  }
  pos += header_len;

  Checkpoint ckpt;
  ckpt.config = header.at("config");
  ckpt.metadata = header.at("metadata");
  const std::size_t payload = body - pos;
  for (const auto& a : header.at("arrays")) {
    const auto shape = a.at("shape").get<std::vector<int>>();
    const auto offset = a.at("offset").get<std::size_t>();
    nn::Tensor t(shape);
    if ((offset + t.size()) * sizeof(double) > payload) throw IntegrityError("checkpoint array overruns the payload");
    std::memcpy(t.data(), bytes.data() + pos + offset * sizeof(double), t.size() * sizeof(double));
    ckpt.arrays.emplace_back(a.at("name").get<std::string>(), std::move(t));
  }
  return ckpt;
}

}  // namespace hccrop
