#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "traffic/model.hpp"
#include "traffic/tensor.hpp"

namespace traffic {

// Binary weight container, little-endian throughout:
//   magic "NNWT" | u32 version=1 | u32 record_count
//   per record:  u16 name_len + UTF-8 name | u8 tensor_count
//   per tensor:  u8 rank | u32 dims[rank] | f32 values[product(dims)]
// Writers emit records in model order; readers index by name.
struct WeightRecord {
  std::string name;
  std::vector<Tensor> tensors;
};

void write_weight_container(const std::filesystem::path& path,
                            const std::vector<WeightRecord>& records);
std::vector<WeightRecord> read_weight_container(const std::filesystem::path& path);

// One record per parameterized layer, tensors = [weights, bias].
void save_weights(const Model& m, const std::filesystem::path& path);

// Strict restore: every parameterized layer must be present with matching
// shapes. save -> load round-trips bit-identically.
void load_weights(Model& m, const std::filesystem::path& path);

struct ImportReport {
  std::vector<std::string> matched;          // copied into the model
  std::vector<std::string> unmatched_model;  // model layers left at their initialization
  std::vector<std::string> unmatched_file;   // file records no model layer wanted
};

// Copies tensors for records whose name matches a parameterized layer.
// A matched name with conflicting shapes is an error naming the layer.
ImportReport import_by_name(Model& m, const std::filesystem::path& path);

}  // namespace traffic
