#include "rnml/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace rnml {

namespace {
constexpr char kMagic[8] = {'R', 'N', 'M', 'L', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void write_raw(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_raw(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw data_error("checkpoint: truncated file");
  return v;
}
}  // namespace

void save_checkpoint(std::ostream& out, const std::vector<NamedTensor>& tensors) {
  out.write(kMagic, sizeof(kMagic));
  write_raw(out, kVersion);
  write_raw(out, static_cast<std::uint32_t>(tensors.size()));
  for (const NamedTensor& t : tensors) {
    write_raw(out, static_cast<std::uint32_t>(t.name.size()));
    out.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
    write_raw<std::uint32_t>(out, 2);
    write_raw(out, static_cast<std::uint32_t>(t.value.rows()));
    write_raw(out, static_cast<std::uint32_t>(t.value.cols()));
    for (Eigen::Index i = 0; i < t.value.rows(); ++i) {
      for (Eigen::Index j = 0; j < t.value.cols(); ++j) write_raw(out, t.value(i, j));
    }
  }
}

void save_checkpoint(const std::string& path, const std::vector<NamedTensor>& tensors) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw data_error("cannot open " + path + " for writing");
  save_checkpoint(out, tensors);
}

std::vector<NamedTensor> load_checkpoint(std::istream& in) {
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw data_error("checkpoint: bad magic");
  }
  const auto version = read_raw<std::uint32_t>(in);
  if (version != kVersion) {
    throw data_error("checkpoint: unsupported version " + std::to_string(version));
  }
  const auto count = read_raw<std::uint32_t>(in);
  std::vector<NamedTensor> tensors;
  tensors.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedTensor t;
    const auto name_len = read_raw<std::uint32_t>(in);
    t.name.resize(name_len);
    in.read(t.name.data(), name_len);
    if (!in) throw data_error("checkpoint: truncated name");
    const auto rank = read_raw<std::uint32_t>(in);
    if (rank != 1 && rank != 2) throw data_error("checkpoint: unsupported rank");
    std::uint32_t rows = read_raw<std::uint32_t>(in);
    std::uint32_t cols = rank == 2 ? read_raw<std::uint32_t>(in) : 1;
    t.value.resize(rows, cols);
    for (std::uint32_t r = 0; r < rows; ++r) {
      for (std::uint32_t c = 0; c < cols; ++c) t.value(r, c) = read_raw<double>(in);
    }
    tensors.push_back(std::move(t));
  }
  return tensors;
}

std::vector<NamedTensor> load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw data_error("cannot open " + path);
  return load_checkpoint(in);
}

const Matrix* find_tensor_opt(const std::vector<NamedTensor>& tensors, const std::string& name) {
  for (const NamedTensor& t : tensors) {
    if (t.name == name) return &t.value;
  }
  return nullptr;
}

const Matrix& find_tensor(const std::vector<NamedTensor>& tensors, const std::string& name) {
  if (const Matrix* m = find_tensor_opt(tensors, name)) return *m;
  throw data_error("checkpoint: missing tensor '" + name + "'");
}

}  // namespace rnml
