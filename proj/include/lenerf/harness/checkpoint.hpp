#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "lenerf/core/params.hpp"

namespace lenerf {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Text header followed by little-endian f32 tensors:
///
///   LENERF-CKPT 1
///   meta <key> <value>
///   tensor <section> <name> <rows> <cols> <offset>
///   end
///   <payload>
///
/// The section is the name up to the first '.'; offsets count floats from
/// the start of the payload and follow header order.
struct Checkpoint {
  static constexpr int kVersion = 1;

  struct Tensor {
    std::string name;
    Mat<float> value;
    std::string section() const { return name.substr(0, name.find('.')); }
  };

  std::map<std::string, std::string> meta;
  std::vector<Tensor> tensors;

  template <class T>
  void add(const ParamStore<T>& store) {
    for (const auto& p : store.all()) put(p.name, p.value);
  }

  template <class T>
  void put(const std::string& name, const Mat<T>& v) {
    if (name.empty() || name.find_first_of(" \t\n") != std::string::npos)
      throw CheckpointError("tensor name '" + name + "' must be non-empty without whitespace");
    for (auto& t : tensors)
      if (t.name == name) {
        t.value = v.template cast<float>();
        return;
      }
    tensors.push_back({name, v.template cast<float>()});
  }

  const Tensor* find(const std::string& name) const {
    for (const auto& t : tensors)
      if (t.name == name) return &t;
    return nullptr;
  }

  const Mat<float>& get(const std::string& name) const {
    if (const auto* t = find(name)) return t->value;
    throw CheckpointError("checkpoint has no tensor '" + name + "'");
  }

  bool has_section(const std::string& s) const {
    for (const auto& t : tensors)
      if (t.section() == s) return true;
    return false;
  }

  /// Copies every tensor of `store` from the checkpoint (shapes must match).
  template <class T>
  void load_into(ParamStore<T>& store) const {
    for (auto& p : store.all()) {
      const Mat<float>& v = get(p.name);
      if (v.rows() != p.value.rows() || v.cols() != p.value.cols())
        throw CheckpointError("tensor '" + p.name + "' has shape " + std::to_string(v.rows()) + "x" +
                              std::to_string(v.cols()) + ", expected " + std::to_string(p.value.rows()) + "x" +
                              std::to_string(p.value.cols()));
      p.value = v.template cast<T>();
    }
  }
};

namespace detail {
inline void put_f32(std::ostream& o, float f) {
  std::uint32_t u;
  std::memcpy(&u, &f, 4);
  const unsigned char b[4] = {static_cast<unsigned char>(u), static_cast<unsigned char>(u >> 8),
                              static_cast<unsigned char>(u >> 16), static_cast<unsigned char>(u >> 24)};
  o.write(reinterpret_cast<const char*>(b), 4);
}
inline float get_f32(const unsigned char* b) {
  const std::uint32_t u = std::uint32_t(b[0]) | std::uint32_t(b[1]) << 8 | std::uint32_t(b[2]) << 16 |
                          std::uint32_t(b[3]) << 24;
  float f;
  std::memcpy(&f, &u, 4);
  return f;
}
}  // namespace detail

inline void save_checkpoint(std::ostream& o, const Checkpoint& c) {
  o << "LENERF-CKPT " << Checkpoint::kVersion << "\n";
  for (const auto& [k, v] : c.meta) {
    if (k.find_first_of(" \t\n") != std::string::npos || v.find('\n') != std::string::npos)
      throw CheckpointError("meta entry '" + k + "' is not a single-line key/value");
    o << "meta " << k << " " << v << "\n";
  }
  Index off = 0;
  for (const auto& t : c.tensors) {
    o << "tensor " << t.section() << " " << t.name << " " << t.value.rows() << " " << t.value.cols() << " " << off
      << "\n";
    off += t.value.size();
  }
  o << "end\n";
  for (const auto& t : c.tensors)
    for (Index r = 0; r < t.value.rows(); ++r)
      for (Index k = 0; k < t.value.cols(); ++k) detail::put_f32(o, t.value(r, k));
}

inline void save_checkpoint(const std::string& path, const Checkpoint& c) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw CheckpointError("cannot write checkpoint '" + path + "'");
  save_checkpoint(f, c);
  if (!f) throw CheckpointError("write failed for '" + path + "'");
}

inline Checkpoint load_checkpoint(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw CheckpointError("empty checkpoint");
  {
    std::istringstream h(line);
    std::string magic;
    int version = -1;
    h >> magic >> version;
    if (magic != "LENERF-CKPT") throw CheckpointError("not a checkpoint (bad magic)");
    if (version != Checkpoint::kVersion)
      throw CheckpointError("unsupported checkpoint version " + std::to_string(version) + " (expected " +
                            std::to_string(Checkpoint::kVersion) + ")");
  }
  Checkpoint c;
  struct Entry {
    std::string name;
    Index rows, cols, offset;
  };
  std::vector<Entry> entries;
  bool ended = false;
  Index expect = 0;
  while (std::getline(in, line)) {
    if (line == "end") {
      ended = true;
      break;
    }
    std::istringstream s(line);
    std::string kind;
    s >> kind;
    if (kind == "meta") {
      std::string k, v;
      s >> k;
      std::getline(s >> std::ws, v);
      c.meta[k] = v;
    } else if (kind == "tensor") {
      std::string section;
      Entry e{};
      if (!(s >> section >> e.name >> e.rows >> e.cols >> e.offset) || e.rows < 0 || e.cols < 0)
        throw CheckpointError("malformed tensor line: " + line);
      if (section != e.name.substr(0, e.name.find('.')))
        throw CheckpointError("tensor '" + e.name + "' listed under section '" + section + "'");
      if (e.offset != expect) throw CheckpointError("tensor '" + e.name + "' offset out of order");
      expect += e.rows * e.cols;
      entries.push_back(e);
    } else {
      throw CheckpointError("unknown header line: " + line);
    }
  }
  if (!ended) throw CheckpointError("checkpoint header is not terminated");
  std::vector<unsigned char> buf(static_cast<std::size_t>(expect) * 4);
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (in.gcount() != static_cast<std::streamsize>(buf.size())) throw CheckpointError("checkpoint payload truncated");
  for (const auto& e : entries) {
    Mat<float> v(e.rows, e.cols);
    const unsigned char* p = buf.data() + 4 * e.offset;
    for (Index r = 0; r < e.rows; ++r)
      for (Index k = 0; k < e.cols; ++k, p += 4) v(r, k) = detail::get_f32(p);
    c.tensors.push_back({e.name, std::move(v)});
  }
  return c;
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw CheckpointError("cannot open checkpoint '" + path + "'");
  return load_checkpoint(f);
}

}  // namespace lenerf
