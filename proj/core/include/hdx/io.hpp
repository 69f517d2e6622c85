#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace hdx {

// Whole-file read. Throws DataError(kMissingFile) naming the path.
std::vector<char> read_file(const std::string& path);

// Writes to "<path>.tmp" and renames into place; a crash never leaves a
// truncated file at `path`.
void write_file_atomic(const std::string& path, std::string_view data);

}  // namespace hdx
