#include "simcond/checkpoint_io.hpp"

#include <bit>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <sstream>

#include "simcond/errors.hpp"

namespace simcond {

static_assert(std::endian::native == std::endian::little, "checkpoint format assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'S', 'C', 'K', 'P', 'T', '0', '0', '1'};

template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw IoError("truncated checkpoint");
  return v;
}

std::uint8_t dtype_code(torch::ScalarType t) {
  switch (t) {
    case torch::kFloat32: return 0;
    case torch::kFloat64: return 1;
    case torch::kInt64: return 2;
    default: throw ValidationError("unsupported tensor dtype in checkpoint");
  }
}

torch::ScalarType dtype_from(std::uint8_t code) {
  switch (code) {
    case 0: return torch::kFloat32;
    case 1: return torch::kFloat64;
    case 2: return torch::kInt64;
    default: throw IoError("unknown dtype code in checkpoint");
  }
}

void write_entries(const std::vector<std::pair<std::string, torch::Tensor>>& entries,
                   const std::filesystem::path& blob) {
  std::ofstream out(blob, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write checkpoint " + blob.string());
  out.write(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(entries.size()));
  for (const auto& [name, tensor] : entries) {
    auto t = tensor.detach().cpu().contiguous();
    put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put<std::uint8_t>(out, dtype_code(t.scalar_type()));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.dim()));
    for (auto d : t.sizes()) put<std::int64_t>(out, d);
    out.write(static_cast<const char*>(t.data_ptr()), static_cast<std::streamsize>(t.nbytes()));
  }
  if (!out) throw IoError("failed writing checkpoint " + blob.string());
}

std::vector<std::pair<std::string, torch::Tensor>> read_entries(const std::filesystem::path& blob) {
  std::ifstream in(blob, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + blob.string());
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) throw IoError("bad checkpoint magic in " + blob.string());
  const auto count = get<std::uint32_t>(in);
  std::vector<std::pair<std::string, torch::Tensor>> entries;
  entries.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name_len = get<std::uint32_t>(in);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    const auto dtype = dtype_from(get<std::uint8_t>(in));
    const auto ndim = get<std::uint32_t>(in);
    std::vector<int64_t> dims(ndim);
    for (auto& d : dims) d = get<std::int64_t>(in);
    auto t = torch::empty(dims, torch::TensorOptions().dtype(dtype));
    in.read(static_cast<char*>(t.data_ptr()), static_cast<std::streamsize>(t.nbytes()));
    if (!in) throw IoError("truncated checkpoint " + blob.string());
    entries.emplace_back(std::move(name), std::move(t));
  }
  return entries;
}

std::vector<std::pair<std::string, torch::Tensor>> module_entries(const torch::nn::Module& module) {
  std::vector<std::pair<std::string, torch::Tensor>> entries;
  for (const auto& item : module.named_parameters(true)) entries.emplace_back("p:" + item.key(), item.value());
  for (const auto& item : module.named_buffers(true)) entries.emplace_back("b:" + item.key(), item.value());
  return entries;
}

}  // namespace

std::filesystem::path header_path_for(const std::filesystem::path& blob) {
  return std::filesystem::path(blob.string() + ".header");
}

void write_header(const std::filesystem::path& path, const HeaderFields& fields) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write header " + path.string());
  for (const auto& [k, v] : fields) {
    if (k.find_first_of("=\n") != std::string::npos || v.find('\n') != std::string::npos) {
      throw ValidationError("header key/value contains a reserved character: " + k);
    }
    out << k << '=' << v << '\n';
  }
}

HeaderFields read_header(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read header " + path.string());
  HeaderFields fields;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw IoError("malformed header line: " + line);
    fields[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return fields;
}

const std::string& require_field(const HeaderFields& fields, const std::string& key) {
  auto it = fields.find(key);
  if (it == fields.end()) throw IoError("checkpoint header is missing '" + key + "'");
  return it->second;
}

std::string format_real(double v) {
  char buf[32];
  for (int precision = 1; precision <= 17; ++precision) {
    std::snprintf(buf, sizeof(buf), "%.*g", precision, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  return buf;
}

void save_module_state(const torch::nn::Module& module, const std::filesystem::path& blob) {
  write_entries(module_entries(module), blob);
}

void load_module_state(torch::nn::Module& module, const std::filesystem::path& blob) {
  auto stored = read_entries(blob);
  auto targets = module_entries(module);
  if (stored.size() != targets.size()) {
    throw IoError("checkpoint tensor count " + std::to_string(stored.size()) + " does not match model (" +
                  std::to_string(targets.size()) + ")");
  }
  torch::NoGradGuard no_grad;
  for (size_t i = 0; i < stored.size(); ++i) {
    auto& [name, src] = stored[i];
    auto& [tname, dst] = targets[i];
    if (name != tname) throw IoError("checkpoint entry '" + name + "' where model expects '" + tname + "'");
    if (src.sizes() != dst.sizes()) throw IoError("shape mismatch for " + name);
    dst.copy_(src.to(dst.scalar_type()));
  }
}

void save_tensors(const std::vector<std::pair<std::string, torch::Tensor>>& tensors,
                  const std::filesystem::path& blob) {
  write_entries(tensors, blob);
}

std::vector<std::pair<std::string, torch::Tensor>> load_tensors(const std::filesystem::path& blob) {
  return read_entries(blob);
}

}  // namespace simcond
