#include "sgg/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "sgg/errors.hpp"

namespace sgg::io {

namespace {

constexpr char kMagic[4] = {'S', 'G', 'T', 'A'};

void put_u32(std::string& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

uint32_t get_u32(const std::string& s, size_t& pos) {
  if (pos + 4 > s.size()) throw IoError("tensor archive: truncated");
  uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(static_cast<unsigned char>(s[pos + static_cast<size_t>(i)])) << (8 * i);
  pos += 4;
  return v;
}

void put_str(std::string& out, const std::string& s) {
  put_u32(out, static_cast<uint32_t>(s.size()));
  out += s;
}

std::string get_str(const std::string& s, size_t& pos) {
  uint32_t n = get_u32(s, pos);
  if (pos + n > s.size()) throw IoError("tensor archive: truncated string");
  std::string v = s.substr(pos, n);
  pos += n;
  return v;
}

}  // namespace

void NamedTensorArchive::save(const std::string& path) const {
  std::string out;
  out.append(kMagic, 4);
  put_u32(out, kVersion);
  put_u32(out, static_cast<uint32_t>(tensors.size()));
  put_u32(out, static_cast<uint32_t>(blobs.size()));
  for (const auto& [name, m] : tensors) {
    put_str(out, name);
    put_u32(out, static_cast<uint32_t>(m.rows));
    put_u32(out, static_cast<uint32_t>(m.cols));
    size_t bytes = m.size() * sizeof(double);
    size_t off = out.size();
    out.resize(off + bytes);
    std::memcpy(out.data() + off, m.v.data(), bytes);
  }
  for (const auto& [name, b] : blobs) {
    put_str(out, name);
    put_str(out, b);
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write checkpoint: " + path);
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f) throw IoError("checkpoint write failed: " + path);
}

NamedTensorArchive NamedTensorArchive::load(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open checkpoint: " + path);
  std::string data((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());

  size_t pos = 0;
  if (data.size() < 4 || std::memcmp(data.data(), kMagic, 4) != 0)
    throw IoError("not a tensor archive: " + path);
  pos = 4;
  uint32_t version = get_u32(data, pos);
  if (version != kVersion)
    throw IoError("tensor archive version " + std::to_string(version) + " unsupported (want " +
                  std::to_string(kVersion) + "): " + path);
  uint32_t n_tensors = get_u32(data, pos);
  uint32_t n_blobs = get_u32(data, pos);

  NamedTensorArchive a;
  for (uint32_t i = 0; i < n_tensors; ++i) {
    std::string name = get_str(data, pos);
    uint32_t rows = get_u32(data, pos);
    uint32_t cols = get_u32(data, pos);
    Mat m(static_cast<int>(rows), static_cast<int>(cols));
    size_t bytes = m.size() * sizeof(double);
    if (pos + bytes > data.size()) throw IoError("tensor archive: truncated tensor " + name);
    std::memcpy(m.v.data(), data.data() + pos, bytes);
    pos += bytes;
    a.tensors[name] = std::move(m);
  }
  for (uint32_t i = 0; i < n_blobs; ++i) {
    std::string name = get_str(data, pos);
    a.blobs[name] = get_str(data, pos);
  }
  return a;
}

const Mat& NamedTensorArchive::tensor(const std::string& name) const {
  auto it = tensors.find(name);
  if (it == tensors.end()) throw IoError("tensor archive: missing tensor '" + name + "'");
  return it->second;
}

const std::string& NamedTensorArchive::blob(const std::string& name) const {
  auto it = blobs.find(name);
  if (it == blobs.end()) throw IoError("tensor archive: missing blob '" + name + "'");
  return it->second;
}

}  // namespace sgg::io
