#include "fixcommit/checkpoint.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "fixcommit/errors.hpp"

namespace fixcommit {

namespace {
constexpr const char* kMagic = "fixcommit-tensors";
constexpr int kVersion = 1;
}  // namespace

Tensor& ParameterSet::add(const std::string& name, Tensor tensor) {
  if (name.empty() || name.find_first_of(" \t\n") != std::string::npos) {
    throw ContractError("parameter name must be non-empty without whitespace: '" + name + "'");
  }
  if (index_.count(name)) throw ContractError("duplicate parameter name: " + name);
  index_[name] = entries_.size();
  entries_.emplace_back(name, std::move(tensor));
  return entries_.back().second;
}

const Tensor& ParameterSet::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ContractError("unknown parameter: " + name);
  return entries_[it->second].second;
}

Tensor& ParameterSet::get(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw ContractError("unknown parameter: " + name);
  return entries_[it->second].second;
}

std::size_t ParameterSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : entries_) n += t.numel();
  return n;
}

void ParameterSet::zero_grad() {
  for (auto& [name, t] : entries_) t.zero_grad();
}

void ParameterSet::copy_values_from(const ParameterSet& other) {
  if (other.size() != size()) throw ContractError("parameter sets differ in size");
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    const auto& [name, src] = other.entries_[i];
    auto& [own_name, dst] = entries_[i];
    if (name != own_name || src.shape() != dst.shape()) {
      throw ContractError("parameter mismatch at " + own_name + " vs " + name);
    }
    auto out = dst.mutable_values();
    std::copy(src.values().begin(), src.values().end(), out.begin());
  }
}

ParameterSet ParameterSet::snapshot() const {
  ParameterSet copy;
  for (const auto& [name, t] : entries_) copy.add(name, t.clone());
  return copy;
}

void save_tensor_file(const std::filesystem::path& path, const TensorFile& file) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << kMagic << ' ' << kVersion << '\n';
  for (const auto& [key, value] : file.meta) {
    if (key.find_first_of(" \n") != std::string::npos || value.find('\n') != std::string::npos) {
      throw ContractError("checkpoint metadata must be single-line: " + key);
    }
    out << "meta " << key << ' ' << value << '\n';
  }
  char buffer[40];
  for (const auto& [name, t] : file.tensors) {
    out << "tensor " << name << ' ' << t.rank();
    for (auto d : t.shape()) out << ' ' << d;
    out << '\n';
    bool first = true;
    for (double v : t.values()) {
      std::snprintf(buffer, sizeof buffer, "%a", v);
      if (!first) out << ' ';
      out << buffer;
      first = false;
    }
    out << '\n';
  }
  out << "end\n";
  if (!out) throw IoError("failed writing " + path.string());
}

TensorFile load_tensor_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::string magic;
  int version = 0;
  in >> magic >> version;
  if (magic != kMagic) throw InputError(path.string() + " is not a tensor checkpoint");
  if (version != kVersion) throw InputError(path.string() + ": unsupported checkpoint version " + std::to_string(version));
  TensorFile file;
  std::string line;
  std::getline(in, line);
  bool ended = false;
  while (std::getline(in, line)) {
    if (line == "end") {
      ended = true;
      break;
    }
    std::istringstream header(line);
    std::string kind;
    header >> kind;
    if (kind == "meta") {
      std::string key;
      header >> key;
      std::string value;
      std::getline(header, value);
      if (!value.empty() && value[0] == ' ') value.erase(0, 1);
      file.meta[key] = value;
    } else if (kind == "tensor") {
      std::string name;
      std::size_t rank = 0;
      header >> name >> rank;
      Shape shape(rank);
      for (auto& d : shape) header >> d;
      if (!header) throw InputError(path.string() + ": malformed tensor header '" + line + "'");
      std::string body;
      if (!std::getline(in, body)) throw InputError(path.string() + ": truncated tensor " + name);
      std::vector<double> values;
      values.reserve(shape_numel(shape));
      const char* cursor = body.c_str();
      char* next = nullptr;
      for (std::size_t i = 0; i < shape_numel(shape); ++i) {
        const double v = std::strtod(cursor, &next);
        if (next == cursor) throw InputError(path.string() + ": short value list for " + name);
        values.push_back(v);
        cursor = next;
      }
      file.tensors.emplace_back(name, Tensor::from(shape, std::move(values)));
    } else {
      throw InputError(path.string() + ": unexpected line '" + line.substr(0, 40) + "'");
    }
  }
  if (!ended) throw InputError(path.string() + ": missing end marker (truncated checkpoint?)");
  return file;
}

void save_parameters(const std::filesystem::path& path, const ParameterSet& params,
                     const std::map<std::string, std::string>& meta) {
  TensorFile file;
  file.meta = meta;
  file.tensors = params.entries();
  save_tensor_file(path, file);
}

std::map<std::string, std::string> load_parameters(const std::filesystem::path& path, ParameterSet& params) {
  TensorFile file = load_tensor_file(path);
  if (file.tensors.size() != params.size()) {
    throw ContractError(path.string() + ": checkpoint has " + std::to_string(file.tensors.size()) +
                        " tensors, model expects " + std::to_string(params.size()));
  }
  for (const auto& [name, t] : file.tensors) {
    if (!params.contains(name)) throw ContractError(path.string() + ": unexpected parameter " + name);
    Tensor& dst = params.get(name);
    if (dst.shape() != t.shape()) {
      throw ContractError(path.string() + ": shape " + shape_string(t.shape()) + " for " + name + ", model expects " +
                          shape_string(dst.shape()));
    }
    auto out = dst.mutable_values();
    std::copy(t.values().begin(), t.values().end(), out.begin());
  }
  return file.meta;
}

}  // namespace fixcommit
