#include "flowssm/autodiff/archive.hpp"

#include <cstring>

#include "flowssm/common/atomic_file.hpp"
#include "flowssm/common/error.hpp"

namespace flowssm::ad {

namespace {

constexpr std::uint64_t kMaxElements = std::uint64_t{1} << 36;
constexpr char kMagic[8] = {'F', 'S', 'S', 'M', 'T', 'N', 'S', 'R'};

template <typename T>
void put_pod(std::string& out, T v) {
  out.append(reinterpret_cast<const char*>(&v), sizeof v);
}

class Cursor {
 public:
  explicit Cursor(std::string_view bytes) : bytes_(bytes) {}

  template <typename T>
  T pod() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }

  std::string_view take(std::size_t n) {
    need(n);
    auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) throw IoError("tensor archive is truncated");
  }

  std::string_view bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

void TensorArchive::put(const std::string& name, const Matrix& value) { put(name, value, {value.rows(), value.cols()}); }

void TensorArchive::put(const std::string& name, const Matrix& value, Shape shape) {
  tensors[name] = {std::move(shape), value};
}

const Matrix& TensorArchive::get(const std::string& name) const {
  auto it = tensors.find(name);
  if (it == tensors.end()) throw IoError("tensor archive has no entry '" + name + "'");
  return it->second.second;
}

std::string serialize_archive(const TensorArchive& archive) {
  std::string out(kMagic, sizeof kMagic);
  put_pod<std::uint32_t>(out, kArchiveVersion);
  const std::string manifest = archive.manifest.dump();
  put_pod<std::uint64_t>(out, manifest.size());
  out += manifest;
  put_pod<std::uint32_t>(out, static_cast<std::uint32_t>(archive.tensors.size()));
  for (const auto& [name, entry] : archive.tensors) {
    const auto& [shape, value] = entry;
    put_pod<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    put_pod<std::uint32_t>(out, static_cast<std::uint32_t>(shape.size()));
    for (auto d : shape) put_pod<std::uint64_t>(out, static_cast<std::uint64_t>(d));
    out.append(reinterpret_cast<const char*>(value.data()), static_cast<std::size_t>(value.size()) * sizeof(double));
  }
  return out;
}

TensorArchive deserialize_archive(std::string_view bytes) {
  Cursor cur(bytes);
  if (cur.take(sizeof kMagic) != std::string_view(kMagic, sizeof kMagic)) throw IoError("bad tensor archive magic");
  const auto version = cur.pod<std::uint32_t>();
  if (version != kArchiveVersion) throw IoError("unsupported tensor archive version " + std::to_string(version));
  TensorArchive archive;
  const auto manifest_len = cur.pod<std::uint64_t>();
  try {
    archive.manifest = nlohmann::json::parse(cur.take(manifest_len));
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("tensor archive manifest is not valid JSON: ") + e.what());
  }
  const auto count = cur.pod<std::uint32_t>();
  for (std::uint32_t t = 0; t < count; ++t) {
    const auto name_len = cur.pod<std::uint32_t>();
    std::string name(cur.take(name_len));
    const auto rank = cur.pod<std::uint32_t>();
    if (rank > 8) throw IoError("tensor '" + name + "' has unsupported rank " + std::to_string(rank));
    Shape shape;
    std::uint64_t n = 1;
    for (std::uint32_t k = 0; k < rank; ++k) {
      shape.push_back(static_cast<Eigen::Index>(cur.pod<std::uint64_t>()));
      if (shape.back() < 0 || static_cast<std::uint64_t>(shape.back()) > kMaxElements) {
        throw IoError("tensor '" + name + "' has an invalid dimension");
      }
      n *= static_cast<std::uint64_t>(shape.back());
      if (n > kMaxElements) throw IoError("tensor '" + name + "' is too large");
    }
    const Eigen::Index rows = rank >= 2 ? shape[0] : 1;
    const Eigen::Index cols = rows == 0 ? 0 : static_cast<Eigen::Index>(n) / rows;
    Matrix value(rows, cols);
    auto raw = cur.take(n * sizeof(double));
    std::memcpy(value.data(), raw.data(), raw.size());
    archive.tensors[name] = {std::move(shape), std::move(value)};
  }
  return archive;
}

void write_archive(const std::filesystem::path& path, const TensorArchive& archive) {
  write_file_atomic(path, serialize_archive(archive));
}

TensorArchive read_archive(const std::filesystem::path& path) { return deserialize_archive(read_file(path)); }

}  // namespace flowssm::ad
