#ifndef ASYMCODEC_IO_HPP
#define ASYMCODEC_IO_HPP

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace asymcodec {

/// Whole-file binary I/O; failures throw std::ios_base::failure.
std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace asymcodec

#endif  // ASYMCODEC_IO_HPP
