#include "gserec/util/archive.hpp"

#include <unistd.h>

#include <array>
#include <atomic>
#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace gserec::util {

namespace {

constexpr std::array<char, 8> kMagic = {'G', 'S', 'E', 'R', 'E', 'C', 'A', '1'};

static_assert(std::endian::native == std::endian::little,
              "archive I/O assumes a little-endian host");

}  // namespace

const Matrix& Archive::tensor(const std::string& name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return t.value;
  }
  throw std::runtime_error("archive: missing tensor '" + name + "'");
}

void write_u64_le(std::ostream& out, std::uint64_t value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(value));
}

std::uint64_t read_u64_le(std::istream& in) {
  std::uint64_t value = 0;
  in.read(reinterpret_cast<char*>(&value), sizeof(value));
  if (!in) throw std::runtime_error("archive: truncated u64");
  return value;
}

void write_f32_le(std::ostream& out, std::span<const float> values) {
  out.write(reinterpret_cast<const char*>(values.data()),
            static_cast<std::streamsize>(values.size() * sizeof(float)));
}

std::vector<float> read_f32_le(std::istream& in, std::size_t count) {
  std::vector<float> values(count);
  in.read(reinterpret_cast<char*>(values.data()),
          static_cast<std::streamsize>(count * sizeof(float)));
  if (!in) throw std::runtime_error("archive: truncated f32 payload");
  return values;
}

void write_file_atomic(const std::filesystem::path& path, std::string_view contents) {
  static std::atomic<std::uint64_t> counter{0};
  std::ostringstream suffix;
  suffix << ".tmp." << ::getpid() << "." << std::hash<std::thread::id>{}(std::this_thread::get_id()) << "."
         << counter.fetch_add(1);
  auto tmp = path;
  tmp += suffix.str();
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw std::runtime_error("short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

void round_to_f32(Matrix& m) {
  for (Eigen::Index i = 0; i < m.size(); ++i) {
    m.data()[i] = static_cast<double>(static_cast<float>(m.data()[i]));
  }
}

void write_archive(const std::filesystem::path& path, const Archive& archive) {
  nlohmann::json header;
  header["kind"] = archive.kind;
  header["meta"] = archive.meta;
  header["tensors"] = nlohmann::json::array();
  for (const auto& t : archive.tensors) {
    header["tensors"].push_back({{"name", t.name}, {"rows", t.value.rows()}, {"cols", t.value.cols()}});
  }
  const std::string header_text = header.dump();

  std::ostringstream out(std::ios::binary);
  out.write(kMagic.data(), kMagic.size());
  write_u64_le(out, header_text.size());
  out.write(header_text.data(), static_cast<std::streamsize>(header_text.size()));
  std::vector<float> buffer;
  for (const auto& t : archive.tensors) {
    buffer.resize(static_cast<std::size_t>(t.value.size()));
    for (Eigen::Index i = 0; i < t.value.size(); ++i) buffer[i] = static_cast<float>(t.value.data()[i]);
    write_f32_le(out, buffer);
  }
  write_file_atomic(path, out.str());
}

Archive read_archive(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open archive " + path.string());
  std::array<char, 8> magic{};
  in.read(magic.data(), magic.size());
  if (!in || magic != kMagic) throw std::runtime_error("not a gserec archive: " + path.string());
  const auto header_len = read_u64_le(in);
  std::string header_text(header_len, '\0');
  in.read(header_text.data(), static_cast<std::streamsize>(header_len));
  if (!in) throw std::runtime_error("archive: truncated header in " + path.string());
  const auto header = nlohmann::json::parse(header_text);

  Archive archive;
  archive.kind = header.at("kind").get<std::string>();
  archive.meta = header.at("meta");
  for (const auto& entry : header.at("tensors")) {
    NamedTensor t;
    t.name = entry.at("name").get<std::string>();
    const auto rows = entry.at("rows").get<Eigen::Index>();
    const auto cols = entry.at("cols").get<Eigen::Index>();
    const auto values = read_f32_le(in, static_cast<std::size_t>(rows * cols));
    t.value.resize(rows, cols);
    for (Eigen::Index i = 0; i < rows * cols; ++i) t.value.data()[i] = values[static_cast<std::size_t>(i)];
    archive.tensors.push_back(std::move(t));
  }
  return archive;
}

}  // namespace gserec::util
