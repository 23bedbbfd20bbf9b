#include "fsdlre/archive.h"

#include <cereal/archives/portable_binary.hpp>
#include <cereal/types/map.hpp>
#include <cereal/types/string.hpp>
#include <cereal/types/vector.hpp>

#include <fstream>
#include <stdexcept>
#include <vector>

namespace fsdlre {
namespace {

struct StoredMatrix {
  std::int64_t rows = 0;
  std::int64_t cols = 0;
  std::vector<double> data;  // column-major

  template <class Archive>
  void serialize(Archive& ar) {
    ar(rows, cols, data);
  }
};

constexpr std::uint32_t kArchiveMagic = 0x46534d41;  // "FSMA"

}  // namespace

void write_matrix_archive(const std::filesystem::path& path,
                          const MatrixArchive& archive) {
  std::map<std::string, StoredMatrix> stored;
  for (const auto& [name, m] : archive) {
    StoredMatrix s;
    s.rows = m.rows();
    s.cols = m.cols();
    s.data.assign(m.data(), m.data() + m.size());
    stored.emplace(name, std::move(s));
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  cereal::PortableBinaryOutputArchive ar(out);
  ar(kArchiveMagic, stored);
}

MatrixArchive read_matrix_archive(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::uint32_t magic = 0;
  std::map<std::string, StoredMatrix> stored;
  try {
    cereal::PortableBinaryInputArchive ar(in);
    ar(magic);
    if (magic != kArchiveMagic) {
      throw std::runtime_error("not a matrix archive: " + path.string());
    }
    ar(stored);
  } catch (const cereal::Exception& e) {
    throw std::runtime_error("corrupt matrix archive " + path.string() + ": " +
                             e.what());
  }
  MatrixArchive out;
  for (auto& [name, s] : stored) {
    if (static_cast<std::int64_t>(s.data.size()) != s.rows * s.cols) {
      throw std::runtime_error("corrupt matrix '" + name + "' in " +
                               path.string());
    }
    out.emplace(name, Eigen::Map<const Matrix>(s.data.data(), s.rows, s.cols));
  }
  return out;
}

}  // namespace fsdlre
