#include "mtgan/checkpoint.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

namespace mtgan {
namespace {

constexpr char kMagic[4] = {'M', 'T', 'G', 'N'};

std::uint32_t checksum(std::string_view bytes) {
  return static_cast<std::uint32_t>(
      crc32(crc32(0L, Z_NULL, 0), reinterpret_cast<const Bytef*>(bytes.data()), static_cast<uInt>(bytes.size())));
}

template <typename T>
void put_le(std::string& out, T value) {
  std::uint64_t bits;
  if constexpr (std::is_same_v<T, double>) {
    bits = std::bit_cast<std::uint64_t>(value);
  } else {
    bits = static_cast<std::uint64_t>(value);
  }
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xFF));
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    std::uint64_t bits = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
      bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    }
    pos_ += sizeof(T);
    if constexpr (std::is_same_v<T, double>) {
      return std::bit_cast<double>(bits);
    } else {
      return static_cast<T>(bits);
    }
  }

  std::string_view take(std::size_t n) {
    need(n);
    const auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw CorruptArtifactError("checkpoint truncated");
  }

  std::string_view bytes_;
  std::size_t pos_ = 0;
};

std::string read_all(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + path.string());
  return std::string(std::istreambuf_iterator<char>(in), {});
}

}  // namespace

void Checkpoint::put(std::string name, Tensor value) {
  for (auto& [n, v] : blocks_) {
    if (n == name) {
      v = std::move(value);
      return;
    }
  }
  blocks_.emplace_back(std::move(name), std::move(value));
}

void Checkpoint::put_scalar(std::string name, double value) { put(std::move(name), Tensor::Constant(1, 1, value)); }

bool Checkpoint::contains(std::string_view name) const {
  for (const auto& [n, v] : blocks_) {
    if (n == name) return true;
  }
  return false;
}

const Tensor& Checkpoint::get(std::string_view name) const {
  for (const auto& [n, v] : blocks_) {
    if (n == name) return v;
  }
  throw IndexError("checkpoint has no block '" + std::string(name) + "'");
}

double Checkpoint::scalar(std::string_view name) const {
  const Tensor& t = get(name);
  if (t.size() != 1) throw CorruptArtifactError("checkpoint block '" + std::string(name) + "' is not a scalar");
  return t(0, 0);
}

void Checkpoint::put_params(std::string_view prefix, const ParamStore& params) {
  for (const auto& p : params) put(std::string(prefix) + p.name, p.value);
}

void Checkpoint::restore_params(std::string_view prefix, ParamStore& params) const {
  for (auto& p : params) {
    const std::string name = std::string(prefix) + p.name;
    if (!contains(name)) throw ValidationError("checkpoint is missing parameter '" + name + "'");
    const Tensor& t = get(name);
    if (t.rows() != p.value.rows() || t.cols() != p.value.cols()) {
      throw ValidationError("checkpoint parameter '" + name + "' has shape " + shape_string(t.rows(), t.cols()) +
                            ", model expects " + shape_string(p.value.rows(), p.value.cols()));
    }
    p.value = t;
    p.grad.setZero();
  }
}

void Checkpoint::put_adam(std::string_view prefix, const AdamState& state) {
  const std::string p(prefix);
  put_scalar(p + "lr", state.learning_rate);
  put_scalar(p + "beta1", state.beta1);
  put_scalar(p + "beta2", state.beta2);
  put_scalar(p + "epsilon", state.epsilon);
  put_scalar(p + "weight_decay", state.weight_decay);
  put_scalar(p + "step", static_cast<double>(state.step));
  put_scalar(p + "slots", static_cast<double>(state.first_moment.size()));
  for (std::size_t i = 0; i < state.first_moment.size(); ++i) {
    put(p + "m" + std::to_string(i), state.first_moment[i]);
    put(p + "v" + std::to_string(i), state.second_moment[i]);
  }
}

void Checkpoint::restore_adam(std::string_view prefix, AdamState& state) const {
  const std::string p(prefix);
  state.learning_rate = scalar(p + "lr");
  state.beta1 = scalar(p + "beta1");
  state.beta2 = scalar(p + "beta2");
  state.epsilon = scalar(p + "epsilon");
  state.weight_decay = scalar(p + "weight_decay");
  state.step = static_cast<std::int64_t>(scalar(p + "step"));
  const auto slots = static_cast<std::size_t>(scalar(p + "slots"));
  state.first_moment.assign(slots, Tensor());
  state.second_moment.assign(slots, Tensor());
  for (std::size_t i = 0; i < slots; ++i) {
    state.first_moment[i] = get(p + "m" + std::to_string(i));
    state.second_moment[i] = get(p + "v" + std::to_string(i));
  }
}

std::string Checkpoint::serialize() const {
  std::string out(kMagic, 4);
  put_le<std::uint32_t>(out, kCheckpointVersion);
  put_le<std::uint32_t>(out, digest);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(blocks_.size()));
  for (const auto& [name, t] : blocks_) {
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    put_le<std::uint64_t>(out, static_cast<std::uint64_t>(t.rows()));
    put_le<std::uint64_t>(out, static_cast<std::uint64_t>(t.cols()));
    // Row-major storage, so data() is already in file order.
    for (Eigen::Index i = 0; i < t.size(); ++i) put_le<double>(out, t.data()[i]);
  }
  put_le<std::uint32_t>(out, checksum(out));
  return out;
}

Checkpoint Checkpoint::parse(std::string_view bytes) {
  if (bytes.size() < 20 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw CorruptArtifactError("not a checkpoint (bad magic)");
  }
  const auto body = bytes.substr(0, bytes.size() - 4);
  Reader tail(bytes.substr(bytes.size() - 4));
  if (tail.get<std::uint32_t>() != checksum(body)) throw CorruptArtifactError("checkpoint checksum mismatch");

  Reader r(body);
  r.take(4);
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw CorruptArtifactError("unsupported checkpoint version " + std::to_string(version));
  }
  Checkpoint c;
  c.digest = r.get<std::uint32_t>();
  const auto count = r.get<std::uint32_t>();
  for (std::uint32_t b = 0; b < count; ++b) {
    const auto len = r.get<std::uint32_t>();
    std::string name(r.take(len));
    const auto rows = r.get<std::uint64_t>();
    const auto cols = r.get<std::uint64_t>();
    if (cols != 0 && rows > r.remaining() / 8 / cols) throw CorruptArtifactError("checkpoint block '" + name + "' truncated");
    Tensor t(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] = r.get<double>();
    c.blocks_.emplace_back(std::move(name), std::move(t));
  }
  if (r.remaining() != 0) throw CorruptArtifactError("checkpoint has trailing bytes");
  return c;
}

void write_file_atomic(const std::filesystem::path& path, std::string_view contents) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ValidationError("cannot write " + tmp.string());
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw ValidationError("failed writing " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
  write_file_atomic(path, checkpoint.serialize());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) { return Checkpoint::parse(read_all(path)); }

Checkpoint load_checkpoint(const std::filesystem::path& path, std::uint32_t expected_digest) {
  Checkpoint c = load_checkpoint(path);
  if (c.digest != expected_digest) {
    std::ostringstream os;
    os << "checkpoint " << path.string() << " was written for a different model configuration (digest " << std::hex
       << c.digest << ", expected " << expected_digest << ")";
    throw ValidationError(os.str());
  }
  return c;
}

}  // namespace mtgan
