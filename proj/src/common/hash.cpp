#include "flowssm/common/hash.hpp"

#include <openssl/evp.h>

#include <array>
#include <memory>

#include "flowssm/common/atomic_file.hpp"
#include "flowssm/common/error.hpp"

namespace flowssm {

namespace {

std::string digest_hex(std::initializer_list<std::string_view> parts) {
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha1(), nullptr) != 1) throw Error("SHA-1 initialisation failed");
  for (auto p : parts) EVP_DigestUpdate(ctx.get(), p.data(), p.size());
  std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx.get(), md.data(), &len);
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += kHex[md[i] >> 4];
    out += kHex[md[i] & 0xf];
  }
  return out;
}

}  // namespace

std::string sha1_hex(std::string_view data) { return digest_hex({data}); }

std::string git_blob_hash(std::string_view contents) {
  const std::string header = "blob " + std::to_string(contents.size()) + std::string(1, '\0');
  return digest_hex({header, contents});
}

std::string git_blob_hash_file(const std::filesystem::path& path) { return git_blob_hash(read_file(path)); }

}  // namespace flowssm
