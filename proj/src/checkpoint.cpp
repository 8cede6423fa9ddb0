#include "spai/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>
#include <vector>

namespace spai {

static_assert(std::endian::native == std::endian::little, "archive payload assumes a little-endian host");

std::uint64_t fnv1a64(const void* data, std::size_t size, std::uint64_t seed) {
  std::uint64_t h = seed;
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < size; ++i) {
    h ^= p[i];
    h *= 1099511628211ULL;
  }
  return h;
}

namespace {

std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << v;
  return os.str();
}

}  // namespace

void write_archive(const std::filesystem::path& path, const Archive& archive) {
  std::vector<double> payload;
  nlohmann::json index = nlohmann::json::array();
  for (const auto& [name, m] : archive.tensors) {
    index.push_back({{"name", name}, {"rows", m.rows()}, {"cols", m.cols()}, {"offset", payload.size()}});
    payload.insert(payload.end(), m.data(), m.data() + m.size());
  }
  const std::size_t bytes = payload.size() * sizeof(double);
  nlohmann::json header = {{"format", archive.format},
                           {"config", archive.config},
                           {"tensors", index},
                           {"payload_bytes", bytes},
                           {"payload_fnv1a64", hex64(fnv1a64(payload.data(), bytes))}};
  const std::string text = header.dump();
  const std::uint64_t length = text.size();

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open '" + path.string() + "' for writing");
  out << archive.format << '\n';
  out.write(reinterpret_cast<const char*>(&length), sizeof(length));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  out.write(reinterpret_cast<const char*>(payload.data()), static_cast<std::streamsize>(bytes));
  if (!out) throw Error("failed writing '" + path.string() + "'");
}

Archive read_archive(const std::filesystem::path& path, std::string_view expected_format) {
  if (!std::filesystem::exists(path)) throw NotFound("checkpoint '" + path.string() + "' not found");
  std::ifstream in(path, std::ios::binary);
  if (!in) throw NotFound("cannot open checkpoint '" + path.string() + "'");

  auto fail = [&path](const std::string& why) {
    return CheckpointIncompatible("checkpoint '" + path.string() + "': " + why);
  };

  std::string tag;
  if (!std::getline(in, tag) || tag.size() > 64) throw fail("missing format tag");
  if (tag != expected_format) throw fail("format '" + tag + "', expected '" + std::string(expected_format) + "'");

  std::uint64_t length = 0;
  if (!in.read(reinterpret_cast<char*>(&length), sizeof(length)) || length > (1ULL << 30)) {
    throw fail("truncated header");
  }
  std::string text(length, '\0');
  if (!in.read(text.data(), static_cast<std::streamsize>(length))) throw fail("truncated header");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw fail(std::string("malformed header: ") + e.what());
  }

  Archive archive;
  try {
    archive.format = header.at("format").get<std::string>();
    archive.config = header.at("config");
    const std::size_t bytes = header.at("payload_bytes").get<std::size_t>();
    if (bytes % sizeof(double) != 0 || bytes > (1ULL << 36)) throw fail("bad payload size");
    std::vector<double> payload(bytes / sizeof(double));
    if (!in.read(reinterpret_cast<char*>(payload.data()), static_cast<std::streamsize>(bytes))) {
      throw fail("truncated payload");
    }
    if (in.peek() != std::char_traits<char>::eof()) throw fail("trailing bytes after payload");
    if (hex64(fnv1a64(payload.data(), bytes)) != header.at("payload_fnv1a64").get<std::string>()) {
      throw fail("payload checksum mismatch");
    }
    for (const auto& t : header.at("tensors")) {
      const auto rows = t.at("rows").get<Eigen::Index>();
      const auto cols = t.at("cols").get<Eigen::Index>();
      const auto offset = t.at("offset").get<std::size_t>();
      if (rows < 0 || cols < 0 || offset + static_cast<std::size_t>(rows * cols) > payload.size()) {
        throw fail("tensor index out of range");
      }
      archive.tensors[t.at("name").get<std::string>()] =
          Eigen::Map<const Matrix<double>>(payload.data() + offset, rows, cols);
    }
  } catch (const nlohmann::json::exception& e) {
    throw fail(std::string("malformed header: ") + e.what());
  }
  return archive;
}

}  // namespace spai
