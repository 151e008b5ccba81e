#include "fednilm/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "fednilm/hash.hpp"
#include "fednilm/wire.hpp"

namespace fednilm {

namespace {

constexpr char kParamMagic[9] = "FNLMPRM1";

std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw DataError("cannot open file: " + path);
  }
  return std::vector<std::uint8_t>((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
}

void write_file(const std::string& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw DataError("cannot write file: " + path);
  }
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) {
    throw DataError("short write to " + path);
  }
}

}  // namespace

std::vector<std::uint8_t> encode_params(const ParameterVector& params) {
  std::vector<std::uint8_t> bytes;
  bytes.reserve(16 + params.count() * 4);
  wire::put_u64(bytes, params.spec_hash);
  wire::put_u64(bytes, static_cast<std::uint64_t>(params.count()));
  for (float v : params.values) wire::put_f32(bytes, v);
  return bytes;
}

ParameterVector decode_params(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 16) {
    throw ProtocolError("parameter payload truncated");
  }
  std::size_t pos = 0;
  ParameterVector pv;
  pv.spec_hash = wire::get_u64(bytes, pos);
  const std::uint64_t count = wire::get_u64(bytes, pos);
  // division form: a hostile count cannot overflow the size check into an
  // allocation bomb
  if (count > (bytes.size() - 16) / 4 || bytes.size() != 16 + count * 4) {
    throw ProtocolError("parameter payload length does not match its count");
  }
  pv.values.resize(count);
  for (auto& v : pv.values) v = wire::get_f32(bytes, pos);
  return pv;
}

std::uint64_t params_digest(const ParameterVector& params) {
  const auto bytes = encode_params(params);
  return fnv1a64(std::span<const std::uint8_t>(bytes));
}

void save_checkpoint(const ParameterVector& params, const std::string& path) {
  std::vector<std::uint8_t> bytes;
  for (int i = 0; i < 8; ++i) bytes.push_back(static_cast<std::uint8_t>(kParamMagic[i]));
  const auto body = encode_params(params);
  bytes.insert(bytes.end(), body.begin(), body.end());
  write_file(path, bytes);
}

ParameterVector load_checkpoint(const std::string& path) {
  const auto bytes = read_file(path);
  if (bytes.size() < 8 || std::memcmp(bytes.data(), kParamMagic, 8) != 0) {
    throw DataError(path + ": not a parameter checkpoint (bad magic)");
  }
  try {
    return decode_params(std::span<const std::uint8_t>(bytes).subspan(8));
  } catch (const ProtocolError& e) {
    throw DataError(path + ": " + e.what());
  }
}

void save_model(const ArchitectureSpec& spec, const ParameterVector& params,
                const std::string& path_stem) {
  detail::check_hash(spec_hash(spec), params.spec_hash, "save_model");
  save_checkpoint(params, path_stem + ".fnlmprm");
  const std::string json = canonical_json(spec);
  write_file(path_stem + ".arch.json",
             std::span<const std::uint8_t>(
                 reinterpret_cast<const std::uint8_t*>(json.data()), json.size()));
}

std::pair<ArchitectureSpec, ParameterVector> load_model(const std::string& path_stem) {
  const auto arch_bytes = read_file(path_stem + ".arch.json");
  const auto spec = parse_architecture(
      std::string(reinterpret_cast<const char*>(arch_bytes.data()), arch_bytes.size()));
  auto params = load_checkpoint(path_stem + ".fnlmprm");
  detail::check_hash(spec_hash(spec), params.spec_hash, "load_model");
  if (params.count() != param_count(spec)) {
    throw DataError(path_stem + ": checkpoint parameter count does not match the architecture");
  }
  return {spec, std::move(params)};
}

std::vector<std::uint8_t> encode_optimizer_state(const OptimizerState& state) {
  std::vector<std::uint8_t> bytes;
  wire::put_u8(bytes, state.kind == OptimizerKind::adam ? 1 : 0);
  wire::put_u64(bytes, state.step_count);
  wire::put_u64(bytes, static_cast<std::uint64_t>(state.m.size()));
  for (float v : state.m) wire::put_f32(bytes, v);
  for (float v : state.v) wire::put_f32(bytes, v);
  return bytes;
}

OptimizerState decode_optimizer_state(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 17) {
    throw DataError("optimizer state truncated");
  }
  std::size_t pos = 0;
  OptimizerState st;
  const std::uint8_t kind = wire::get_u8(bytes, pos);
  if (kind > 1) {
    throw DataError("optimizer state: unknown kind byte");
  }
  st.kind = kind == 1 ? OptimizerKind::adam : OptimizerKind::sgd;
  st.step_count = wire::get_u64(bytes, pos);
  const std::uint64_t count = wire::get_u64(bytes, pos);
  if (bytes.size() != 17 + count * 8) {
    throw DataError("optimizer state length does not match its count");
  }
  st.m.resize(count);
  for (auto& v : st.m) v = wire::get_f32(bytes, pos);
  st.v.resize(count);
  for (auto& v : st.v) v = wire::get_f32(bytes, pos);
  return st;
}

}  // namespace fednilm
