#include "spannorm/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>

#include "spannorm/errors.hpp"

namespace spannorm {

namespace {

constexpr char kCheckpointMagic[8] = {'S', 'P', 'N', 'C', 'K', 'P', 'T', '\0'};
constexpr char kActivationMagic[8] = {'S', 'P', 'N', 'A', 'C', 'T', 'S', '\0'};
constexpr std::uint32_t kVersion = 1;

class Writer {
 public:
  explicit Writer(const std::string& path) : path_(path), out_(path, std::ios::binary) {
    if (!out_) throw IoError("cannot open " + path + " for writing");
  }

  void bytes(const void* data, std::size_t n) {
    out_.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
    if (!out_) throw IoError("write failed on " + path_);
  }

  template <typename T>
  void scalar(T value) {
    unsigned char buf[sizeof(T)];
    std::memcpy(buf, &value, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(buf, buf + sizeof(T));
    bytes(buf, sizeof(T));
  }

  void doubles(const double* data, Index n) {
    if constexpr (std::endian::native == std::endian::little) {
      bytes(data, static_cast<std::size_t>(n) * sizeof(double));
    } else {
      for (Index i = 0; i < n; ++i) scalar(data[i]);
    }
  }

  void text(const std::string& s, bool wide_length) {
    if (wide_length) scalar<std::uint64_t>(s.size());
    else scalar<std::uint32_t>(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }

 private:
  std::string path_;
  std::ofstream out_;
};

class Reader {
 public:
  explicit Reader(const std::string& path) : path_(path), in_(path, std::ios::binary) {
    if (!in_) throw IoError("cannot open " + path);
  }

  void bytes(void* data, std::size_t n) {
    in_.read(static_cast<char*>(data), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n) throw IoError("truncated file " + path_);
  }

  template <typename T>
  T scalar() {
    unsigned char buf[sizeof(T)];
    bytes(buf, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(buf, buf + sizeof(T));
    T value;
    std::memcpy(&value, buf, sizeof(T));
    return value;
  }

  void doubles(double* data, Index n) {
    if constexpr (std::endian::native == std::endian::little) {
      bytes(data, static_cast<std::size_t>(n) * sizeof(double));
    } else {
      for (Index i = 0; i < n; ++i) data[i] = scalar<double>();
    }
  }

  std::string text(bool wide_length, std::uint64_t limit) {
    const std::uint64_t n = wide_length ? scalar<std::uint64_t>() : scalar<std::uint32_t>();
    if (n > limit) throw IoError("corrupt length field in " + path_);
    std::string s(n, '\0');
    bytes(s.data(), n);
    return s;
  }

  void expect_end() {
    if (in_.peek() != std::char_traits<char>::eof()) throw IoError("trailing bytes in " + path_);
  }

  void magic(const char (&expected)[8]) {
    char got[8];
    bytes(got, 8);
    if (std::memcmp(got, expected, 8) != 0) throw IoError(path_ + ": wrong file type");
    const auto version = scalar<std::uint32_t>();
    if (version != kVersion) {
      throw IoError(path_ + ": unsupported version " + std::to_string(version));
    }
  }

  const std::string& path() const { return path_; }

 private:
  std::string path_;
  std::ifstream in_;
};

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& checkpoint) {
  Writer w(path);
  w.bytes(kCheckpointMagic, 8);
  w.scalar(kVersion);
  w.text(to_key_values(checkpoint.config).to_text(), true);
  w.scalar<std::uint64_t>(checkpoint.step);
  w.scalar<std::uint64_t>(checkpoint.rng.seed);
  w.scalar<std::uint64_t>(checkpoint.rng.next_index);
  const auto views = param_views(checkpoint.params);
  w.scalar<std::uint32_t>(static_cast<std::uint32_t>(views.size()));
  for (const auto& v : views) {
    w.text(v.name, false);
    w.scalar<std::uint8_t>(static_cast<std::uint8_t>(v.kind));
    w.scalar<std::uint64_t>(static_cast<std::uint64_t>(v.size));
  }
  for (const auto& v : views) w.doubles(v.data, v.size);
}

Checkpoint load_checkpoint(const std::string& path) {
  Reader r(path);
  r.magic(kCheckpointMagic);
  Checkpoint c;
  c.config = train_config_from(KeyValueConfig::parse(r.text(true, 1 << 20)));
  c.config.validate();
  c.step = r.scalar<std::uint64_t>();
  c.rng.seed = r.scalar<std::uint64_t>();
  c.rng.next_index = r.scalar<std::uint64_t>();

  c.params = init_model(c.config.model);
  auto views = param_views(c.params);
  const auto count = r.scalar<std::uint32_t>();
  if (count != views.size()) {
    throw IoError(path + ": manifest has " + std::to_string(count) + " tensors, configuration " +
                  "implies " + std::to_string(views.size()));
  }
  for (const auto& v : views) {
    const std::string name = r.text(false, 4096);
    const auto kind = r.scalar<std::uint8_t>();
    const auto size = r.scalar<std::uint64_t>();
    if (name != v.name || kind != static_cast<std::uint8_t>(v.kind) ||
        size != static_cast<std::uint64_t>(v.size)) {
      throw IoError(path + ": manifest entry '" + name + "' does not match expected '" + v.name +
                    "'");
    }
  }
  for (auto& v : views) r.doubles(v.data, v.size);
  r.expect_end();
  return c;
}

void save_activations(const std::string& path, const std::vector<Matrix>& activations) {
  if (activations.empty()) throw ContractError("save_activations: nothing to save");
  const Index rows = activations[0].rows(), cols = activations[0].cols();
  for (const auto& a : activations) {
    if (a.rows() != rows || a.cols() != cols) {
      throw DimensionError("save_activations: layers differ in shape");
    }
  }
  Writer w(path);
  w.bytes(kActivationMagic, 8);
  w.scalar(kVersion);
  w.scalar<std::uint32_t>(static_cast<std::uint32_t>(activations.size()));
  w.scalar<std::uint64_t>(static_cast<std::uint64_t>(rows));
  w.scalar<std::uint64_t>(static_cast<std::uint64_t>(cols));
  for (const auto& a : activations) w.doubles(a.data(), a.size());
}

std::vector<Matrix> load_activations(const std::string& path) {
  Reader r(path);
  r.magic(kActivationMagic);
  const auto count = r.scalar<std::uint32_t>();
  const auto rows = r.scalar<std::uint64_t>();
  const auto cols = r.scalar<std::uint64_t>();
  if (count == 0 || rows == 0 || cols == 0 || rows * cols > (1ULL << 32)) {
    throw IoError(path + ": implausible activation shape");
  }
  std::vector<Matrix> out;
  for (std::uint32_t i = 0; i < count; ++i) {
    Matrix m(static_cast<Index>(rows), static_cast<Index>(cols));
    r.doubles(m.data(), m.size());
    out.push_back(std::move(m));
  }
  r.expect_end();
  return out;
}

}  // namespace spannorm
