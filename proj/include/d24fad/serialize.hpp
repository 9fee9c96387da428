#pragma once

#include <map>
#include <string>

#include "d24fad/tensor.hpp"

namespace d24fad {

// Binary tensor container: magic, format version, a JSON metadata string,
// then named float64 blobs. Used for teacher weight files and training
// checkpoints. Round-trips are bit-exact; writes go through a temp file and
// rename so readers never observe partial files.

inline constexpr char kTensorFileMagic[8] = {'D', '2', '4', 'F', 'A', 'D', 'T', 'F'};
inline constexpr uint32_t kTensorFileVersion = 1;

void write_tensor_file(const std::string& path, const std::map<std::string, Tensor>& tensors,
                       const std::string& meta_json);

struct TensorFile {
    std::map<std::string, Tensor> tensors;
    std::string meta_json;
};

// StateError on missing/corrupt/version-incompatible files.
TensorFile read_tensor_file(const std::string& path);

uint64_t file_checksum(const std::string& path);  // FNV-1a over file bytes

// Atomic small-text write (manifests, reports).
void write_text_atomic(const std::string& path, const std::string& content);

}  // namespace d24fad
