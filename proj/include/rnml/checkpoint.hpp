#ifndef RNML_CHECKPOINT_HPP
#define RNML_CHECKPOINT_HPP

#include "rnml/core.hpp"

#include <iosfwd>
#include <string>
#include <vector>

namespace rnml {

struct NamedTensor {
  std::string name;
  Matrix value;
};

// Binary layout: magic "RNMLCKPT", u32 version, u32 num_tensors, then per
// tensor: u32 name length, UTF-8 name, u32 rank, u32 dims, row-major
// little-endian f64 payload.
void save_checkpoint(std::ostream& out, const std::vector<NamedTensor>& tensors);
void save_checkpoint(const std::string& path, const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> load_checkpoint(std::istream& in);
std::vector<NamedTensor> load_checkpoint(const std::string& path);

const Matrix& find_tensor(const std::vector<NamedTensor>& tensors, const std::string& name);
const Matrix* find_tensor_opt(const std::vector<NamedTensor>& tensors, const std::string& name);

}  // namespace rnml

#endif  // RNML_CHECKPOINT_HPP
