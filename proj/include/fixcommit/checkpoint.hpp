#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "fixcommit/tensor.hpp"

namespace fixcommit {

/// Named learnable tensors in registration order.
class ParameterSet {
 public:
  /// Registers a parameter; names must be unique.
  Tensor& add(const std::string& name, Tensor tensor);

  const Tensor& get(const std::string& name) const;
  Tensor& get(const std::string& name);
  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  std::size_t size() const { return entries_.size(); }
  std::size_t scalar_count() const;
  const std::vector<std::pair<std::string, Tensor>>& entries() const { return entries_; }
  std::vector<std::pair<std::string, Tensor>>& entries() { return entries_; }

  void zero_grad();
  /// Copies values from another set with identical names and shapes.
  void copy_values_from(const ParameterSet& other);
  /// Deep copy of the current values (fresh storage).
  ParameterSet snapshot() const;

 private:
  std::vector<std::pair<std::string, Tensor>> entries_;
  std::map<std::string, std::size_t> index_;
};

// Checkpoint file layout (text, exact):
//
//   fixcommit-tensors 1
//   meta <key> <value...>          (zero or more)
//   tensor <name> <rank> <dims...>
//   <values as C99 hex floats, space separated>
//   ...
//   end
//
// Hex floats round-trip every f64 bit pattern, so saved/loaded weights are
// bit-identical.
struct TensorFile {
  std::map<std::string, std::string> meta;
  std::vector<std::pair<std::string, Tensor>> tensors;
};

void save_tensor_file(const std::filesystem::path& path, const TensorFile& file);
TensorFile load_tensor_file(const std::filesystem::path& path);

void save_parameters(const std::filesystem::path& path, const ParameterSet& params,
                     const std::map<std::string, std::string>& meta = {});
/// Loads values into an existing set; every name and shape must match.
std::map<std::string, std::string> load_parameters(const std::filesystem::path& path, ParameterSet& params);

}  // namespace fixcommit
