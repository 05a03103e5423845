#include "discprop/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <openssl/evp.h>

#include "discprop/errors.hpp"

namespace discprop {

namespace fs = std::filesystem;

namespace {

constexpr char kMagic[4] = {'D', 'P', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::string& out, T value) {
  char buf[sizeof(T)];
  std::memcpy(buf, &value, sizeof(T));
  out.append(buf, sizeof(T));
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    T value;
    std::memcpy(&value, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return value;
  }
  std::string take(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::string rest() const { return bytes_.substr(pos_); }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) throw ParseError("checkpoint is truncated");
  }
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string serialize_parameters(const nn::ParameterStore& store) {
  std::string out;
  put<std::uint64_t>(out, store.size());
  for (const auto* p : store.all()) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(p->name.size()));
    out += p->name;
    put<std::uint64_t>(out, static_cast<std::uint64_t>(p->value.rows()));
    put<std::uint64_t>(out, static_cast<std::uint64_t>(p->value.cols()));
    out.append(reinterpret_cast<const char*>(p->value.data()),
               static_cast<std::size_t>(p->value.size()) * sizeof(double));
  }
  return out;
}

void load_parameters(nn::ParameterStore& store, const std::string& tensors, bool require_all) {
  Reader r(tensors);
  const auto count = r.get<std::uint64_t>();
  if (require_all && count != store.size()) {
    throw ConfigError("checkpoint has " + std::to_string(count) + " tensors, model expects " +
                      std::to_string(store.size()));
  }
  for (std::uint64_t k = 0; k < count; ++k) {
    const auto name = r.take(r.get<std::uint32_t>());
    const auto rows = static_cast<Eigen::Index>(r.get<std::uint64_t>());
    const auto cols = static_cast<Eigen::Index>(r.get<std::uint64_t>());
    if (!store.contains(name)) throw ConfigError("checkpoint tensor '" + name + "' is unknown");
    auto& p = store.get(name);
    if (p.value.rows() != rows || p.value.cols() != cols) {
      throw ConfigError("checkpoint tensor '" + name + "' is " + std::to_string(rows) + "x" +
                        std::to_string(cols) + ", model expects " +
                        std::to_string(p.value.rows()) + "x" + std::to_string(p.value.cols()));
    }
    const auto raw = r.take(static_cast<std::size_t>(rows * cols) * sizeof(double));
    std::memcpy(p.value.data(), raw.data(), raw.size());
  }
  if (!r.done()) throw ParseError("trailing bytes after checkpoint tensors");
}

std::string sha256_hex(const std::string& bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw std::runtime_error("SHA-256 failed");
  }
  std::ostringstream hex;
  for (unsigned int i = 0; i < len; ++i) {
    hex << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(digest[i]);
  }
  return hex.str();
}

std::string parameter_hash(const nn::ParameterStore& store) {
  return sha256_hex(serialize_parameters(store));
}

void write_atomic(const fs::path& path, const std::string& bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ValidationError("cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw ValidationError("short write to " + tmp.string());
  }
  fs::rename(tmp, path);
}

std::string read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void save_checkpoint(const fs::path& path, const nlohmann::json& meta,
                     const nn::ParameterStore& store) {
  std::string out(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, kVersion);
  const std::string meta_text = meta.dump();
  put<std::uint64_t>(out, meta_text.size());
  out += meta_text;
  out += serialize_parameters(store);
  write_atomic(path, out);
}

Checkpoint read_checkpoint(const fs::path& path) {
  const std::string bytes = read_bytes(path);
  Reader r(bytes);
  if (r.take(4) != std::string(kMagic, 4)) {
    throw ParseError(path.string() + " is not a checkpoint file");
  }
  if (const auto v = r.get<std::uint32_t>(); v != kVersion) {
    throw ParseError(path.string() + ": unsupported checkpoint version " + std::to_string(v));
  }
  Checkpoint ckpt;
  const auto meta_len = r.get<std::uint64_t>();
  try {
    ckpt.meta = nlohmann::json::parse(r.take(meta_len));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path.string() + ": bad checkpoint metadata: " + e.what());
  }
  ckpt.tensors = r.rest();
  return ckpt;
}

}  // namespace discprop
