#pragma once

#include "wm/common.hpp"

#include <cstring>
#include <map>
#include <string>
#include <vector>

namespace wm {

// All file writes in this project go through temp-then-rename so a crashed
// run never leaves a truncated artifact that loads. Missing parent
// directories are created on demand.
void atomic_write_bytes(const std::string& path, const void* data, std::size_t size);
void atomic_write_text(const std::string& path, const std::string& text);

std::string read_text(const std::string& path);

template <typename T>
void write_binary(const std::string& path, const T* data, std::size_t count) {
  atomic_write_bytes(path, data, count * sizeof(T));
}

template <typename T>
std::vector<T> read_binary(const std::string& path) {
  std::string bytes = read_text(path);
  if (bytes.size() % sizeof(T) != 0) throw DecodeError("binary file size not a multiple of element size: " + path);
  std::vector<T> out(bytes.size() / sizeof(T));
  std::memcpy(out.data(), bytes.data(), bytes.size());
  return out;
}

// Ordered key=value text block. Lines starting with '#' are comments.
class KeyValueFile {
 public:
  void set(const std::string& key, const std::string& value);
  void set_int(const std::string& key, long long v);
  void set_u64(const std::string& key, std::uint64_t v);
  void set_double(const std::string& key, double v);

  bool has(const std::string& key) const;
  const std::string& get(const std::string& key) const;
  std::string get_or(const std::string& key, const std::string& fallback) const;
  int get_int(const std::string& key) const;
  long long get_long(const std::string& key) const;
  std::uint64_t get_u64(const std::string& key) const;
  double get_double(const std::string& key) const;

  const std::vector<std::pair<std::string, std::string>>& entries() const { return entries_; }

  std::string serialize() const;
  static KeyValueFile parse(const std::string& text);

  void save(const std::string& path) const;
  static KeyValueFile load(const std::string& path);

 private:
  std::vector<std::pair<std::string, std::string>> entries_;
  std::map<std::string, std::size_t> index_;
};

// Single-file container: text header (key=value) plus named binary blobs.
// Layout: "wmblob 1\n" header-lines "blob <name> <bytes>\n"... "---\n" raw data.
class BlobWriter {
 public:
  KeyValueFile& header() { return header_; }
  void add(const std::string& name, const void* data, std::size_t bytes);
  template <typename T>
  void add_typed(const std::string& name, const T* data, std::size_t count) {
    add(name, data, count * sizeof(T));
  }
  void save(const std::string& path) const;

 private:
  KeyValueFile header_;
  std::vector<std::pair<std::string, std::string>> blobs_;  // name -> bytes
};

class BlobReader {
 public:
  static BlobReader load(const std::string& path);

  const KeyValueFile& header() const { return header_; }
  bool has_blob(const std::string& name) const;
  const std::string& blob(const std::string& name) const;
  template <typename T>
  std::vector<T> blob_typed(const std::string& name) const {
    const std::string& b = blob(name);
    if (b.size() % sizeof(T) != 0) throw DecodeError("blob size mismatch: " + name);
    std::vector<T> out(b.size() / sizeof(T));
    std::memcpy(out.data(), b.data(), b.size());
    return out;
  }
  std::vector<std::string> blob_names() const;

 private:
  KeyValueFile header_;
  std::map<std::string, std::string> blobs_;
};

}  // namespace wm
