#include "wm/io.hpp"

#include <unistd.h>

#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace wm {

namespace fs = std::filesystem;

void atomic_write_bytes(const std::string& path, const void* data, std::size_t size) {
  try {
    fs::path target(path);
    if (target.has_parent_path()) fs::create_directories(target.parent_path());
    std::string tmp = path + ".tmp." + std::to_string(::getpid());
    {
      std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
      if (!out) throw IoError("cannot open for write: " + tmp);
      out.write(static_cast<const char*>(data), static_cast<std::streamsize>(size));
      out.flush();
      if (!out) throw IoError("short write: " + tmp);
    }
    fs::rename(tmp, target);
  } catch (const fs::filesystem_error& e) {
    throw IoError(std::string("write failed: ") + e.what());
  }
}

void atomic_write_text(const std::string& path, const std::string& text) {
  atomic_write_bytes(path, text.data(), text.size());
}

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void KeyValueFile::set(const std::string& key, const std::string& value) {
  auto it = index_.find(key);
  if (it != index_.end()) {
    entries_[it->second].second = value;
  } else {
    index_[key] = entries_.size();
    entries_.emplace_back(key, value);
  }
}

void KeyValueFile::set_int(const std::string& key, long long v) { set(key, std::to_string(v)); }
void KeyValueFile::set_u64(const std::string& key, std::uint64_t v) { set(key, std::to_string(v)); }

void KeyValueFile::set_double(const std::string& key, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  set(key, buf);
}

bool KeyValueFile::has(const std::string& key) const { return index_.count(key) != 0; }

const std::string& KeyValueFile::get(const std::string& key) const {
  auto it = index_.find(key);
  if (it == index_.end()) throw DecodeError("missing key: " + key);
  return entries_[it->second].second;
}

std::string KeyValueFile::get_or(const std::string& key, const std::string& fallback) const {
  auto it = index_.find(key);
  return it == index_.end() ? fallback : entries_[it->second].second;
}

int KeyValueFile::get_int(const std::string& key) const { return std::stoi(get(key)); }
long long KeyValueFile::get_long(const std::string& key) const { return std::stoll(get(key)); }
std::uint64_t KeyValueFile::get_u64(const std::string& key) const {
  return static_cast<std::uint64_t>(std::stoull(get(key)));
}
double KeyValueFile::get_double(const std::string& key) const { return std::stod(get(key)); }

std::string KeyValueFile::serialize() const {
  std::ostringstream os;
  for (const auto& [k, v] : entries_) os << k << "=" << v << "\n";
  return os.str();
}

KeyValueFile KeyValueFile::parse(const std::string& text) {
  KeyValueFile kv;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    auto eq = line.find('=');
    if (eq == std::string::npos) throw DecodeError("malformed key=value line: " + line);
    kv.set(line.substr(0, eq), line.substr(eq + 1));
  }
  return kv;
}

void KeyValueFile::save(const std::string& path) const { atomic_write_text(path, serialize()); }

KeyValueFile KeyValueFile::load(const std::string& path) { return parse(read_text(path)); }

void BlobWriter::add(const std::string& name, const void* data, std::size_t bytes) {
  blobs_.emplace_back(name, std::string(static_cast<const char*>(data), bytes));
}

void BlobWriter::save(const std::string& path) const {
  std::ostringstream os;
  os << "wmblob 1\n";
  os << header_.serialize();
  for (const auto& [name, data] : blobs_) os << "blob " << name << " " << data.size() << "\n";
  os << "---\n";
  for (const auto& [name, data] : blobs_) os << data;
  std::string all = os.str();
  atomic_write_bytes(path, all.data(), all.size());
}

BlobReader BlobReader::load(const std::string& path) {
  std::string bytes = read_text(path);
  std::size_t pos = bytes.find('\n');
  if (pos == std::string::npos || bytes.substr(0, pos) != "wmblob 1") {
    throw DecodeError("not a wmblob file: " + path);
  }
  BlobReader r;
  std::vector<std::pair<std::string, std::size_t>> order;
  std::string header_text;
  std::size_t cursor = pos + 1;
  while (true) {
    std::size_t eol = bytes.find('\n', cursor);
    if (eol == std::string::npos) throw DecodeError("truncated wmblob header: " + path);
    std::string line = bytes.substr(cursor, eol - cursor);
    cursor = eol + 1;
    if (line == "---") break;
    if (line.rfind("blob ", 0) == 0) {
      std::istringstream is(line.substr(5));
      std::string name;
      std::size_t n = 0;
      if (!(is >> name >> n)) throw DecodeError("malformed blob line: " + line);
      order.emplace_back(name, n);
    } else {
      header_text += line;
      header_text += '\n';
    }
  }
  r.header_ = KeyValueFile::parse(header_text);
  for (const auto& [name, n] : order) {
    if (cursor + n > bytes.size()) throw DecodeError("truncated blob data: " + path);
    r.blobs_[name] = bytes.substr(cursor, n);
    cursor += n;
  }
  return r;
}

bool BlobReader::has_blob(const std::string& name) const { return blobs_.count(name) != 0; }

const std::string& BlobReader::blob(const std::string& name) const {
  auto it = blobs_.find(name);
  if (it == blobs_.end()) throw DecodeError("missing blob: " + name);
  return it->second;
}

std::vector<std::string> BlobReader::blob_names() const {
  std::vector<std::string> names;
  for (const auto& [k, v] : blobs_) names.push_back(k);
  return names;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016" PRIx64, v);
  return std::string(buf);
}

}  // namespace wm
