// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rfscope/arch_graph.hpp"
#include "rfscope/tensor.hpp"

namespace rfscope {

// One entry of the binary tensor container. The file layout is
// little-endian: magic "RFSW", version u32 = 1, tensor count u32, then per
// tensor: name length u16, UTF-8 name, rank u8, one u32 per dim, f64 data.
struct NamedTensor {
  std::string name;
  std::vector<uint32_t> dims;
  std::vector<double> data;

  size_t volume() const;
};

void write_tensor_file(const std::string& path,
                       const std::vector<NamedTensor>& tensors);
std::vector<NamedTensor> read_tensor_file(const std::string& path);

// WeightSet <-> container mapping. Conv nodes store "<id>/weight" (rank 4)
// and "<id>/bias"; affine nodes store "<id>/scale" and "<id>/shift".
std::vector<NamedTensor> weights_to_tensors(const ArchGraph& graph,
                                            const WeightSet& weights);
WeightSet weights_from_tensors(const ArchGraph& graph,
                               const std::vector<NamedTensor>& tensors);

void write_weights_file(const std::string& path, const ArchGraph& graph,
                        const WeightSet& weights);
WeightSet read_weights_file(const std::string& path, const ArchGraph& graph);

// Input tensors travel in the same container under the name "input", or as
// CSV (freq rows x time columns) for single-channel data. read_input_file
// sniffs the magic to pick the decoder.
void write_input_file(const std::string& path, const Tensor& input);
Tensor read_input_file(const std::string& path);

// CSV helpers. Values are written with 17 significant digits so a
// round-trip reproduces every double exactly.
std::string matrix_to_csv(int rows, int cols, const double* values);
Tensor tensor_from_csv(const std::string& text);

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& contents);

}  // namespace rfscope
