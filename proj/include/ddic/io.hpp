#ifndef DDIC_IO_HPP
#define DDIC_IO_HPP

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ddic/image.hpp"

namespace ddic {

using json = nlohmann::json;

// Binary PGM (P5), 8- or 16-bit grayscale. Pixels are returned as raw
// integer values in doubles; range metadata is set to [0, maxval].
ImageGrid read_pgm(const std::filesystem::path& path);

// Quantizes [lo, hi] to 0..maxval (maxval 255 or 65535) and writes P5.
void write_pgm(const std::filesystem::path& path, const ImageGrid& img,
               int maxval, double lo, double hi);

// Normalize raw raster values into [norm_lo, norm_hi] using the image's
// range metadata; updates the metadata accordingly. A no-op when the
// metadata already matches the requested range.
ImageGrid normalize_to(const ImageGrid& img, double norm_lo, double norm_hi);

// Indexed archive of sampler snapshots: one 16-bit PGM per kept timestep
// plus an index.json mapping t -> file and recording the intensity mapping.
void write_trace_archive(const std::filesystem::path& dir,
                         const std::vector<int>& timesteps,
                         const std::vector<ImageGrid>& snapshots,
                         double lo, double hi);

std::string sha256_file(const std::filesystem::path& path);
std::string sha256_bytes(const void* data, std::size_t len);

json read_json_file(const std::filesystem::path& path);
void write_json_file(const std::filesystem::path& path, const json& j);

// Reject keys outside `allowed`; `where` names the config section in errors.
void check_known_keys(const json& obj, const std::vector<std::string>& allowed,
                      const std::string& where);

} // namespace ddic

#endif
