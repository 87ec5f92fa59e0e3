#pragma once

#include <string>
#include <string_view>

namespace cpq {

// Writes via a temp file in the same directory plus rename, so readers
// never observe a half-written file. Throws Error(io) when the destination
// is not writable.
void atomic_write_file(const std::string& path, std::string_view content);

std::string read_file(const std::string& path); // Error(io) when unreadable

} // namespace cpq
