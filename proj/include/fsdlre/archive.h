// Named-matrix archives for parameters and optimizer state.

#ifndef FSDLRE_ARCHIVE_H_
#define FSDLRE_ARCHIVE_H_

#include "fsdlre/autograd.h"

#include <filesystem>
#include <map>
#include <string>

namespace fsdlre {

using MatrixArchive = std::map<std::string, Matrix>;

void write_matrix_archive(const std::filesystem::path& path,
                          const MatrixArchive& archive);
MatrixArchive read_matrix_archive(const std::filesystem::path& path);

}  // namespace fsdlre

#endif  // FSDLRE_ARCHIVE_H_
