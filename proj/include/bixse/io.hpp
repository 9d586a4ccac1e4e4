#pragma once

#include <string>

namespace bixse {

/// Writes via a temp file in the same directory plus rename, creating parent
/// directories as needed.
void write_file_atomic(const std::string& path, const std::string& content);

std::string read_file(const std::string& path);

}  // namespace bixse
