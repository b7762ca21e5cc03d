#pragma once

#include <torch/torch.h>

#include <filesystem>
#include <map>
#include <string>

namespace simcond {

// Flat key=value text that sits next to every binary checkpoint
// (`<blob>.header`). Keys are written sorted, so identical content gives
// identical bytes.
using HeaderFields = std::map<std::string, std::string>;

std::filesystem::path header_path_for(const std::filesystem::path& blob);
void write_header(const std::filesystem::path& path, const HeaderFields& fields);
HeaderFields read_header(const std::filesystem::path& path);
const std::string& require_field(const HeaderFields& fields, const std::string& key);

// Shortest decimal text that round-trips the double exactly.
std::string format_real(double v);

// Parameters and buffers of a module, in registration order, as raw
// little-endian tensors. Loading requires an identically configured module
// and checks every name, dtype and shape.
void save_module_state(const torch::nn::Module& module, const std::filesystem::path& blob);
void load_module_state(torch::nn::Module& module, const std::filesystem::path& blob);

// Single named tensors (classifier heads and similar).
void save_tensors(const std::vector<std::pair<std::string, torch::Tensor>>& tensors,
                  const std::filesystem::path& blob);
std::vector<std::pair<std::string, torch::Tensor>> load_tensors(const std::filesystem::path& blob);

}  // namespace simcond
