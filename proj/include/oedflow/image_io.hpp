#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "oedflow/grid.hpp"

namespace oedflow {

/// Binary PGM (P5). Values are taken as-is, so they must fit maxval.
void write_pgm(const std::filesystem::path& path, std::size_t width, std::size_t height, std::uint16_t maxval,
               const std::vector<std::uint16_t>& pixels);
/// Quantizes a [0, 1] image to 8 or 16 bits.
void write_pgm_image(const std::filesystem::path& path, const RealGrid& image, int bit_depth);
/// Image of shape {h, w} scaled to [0, 1] by maxval.
RealGrid read_pgm(const std::filesystem::path& path);

/// "OEDT" raw tensor: magic, u32 version, u32 rank, u32 extents, float32 LE payload.
void write_tensor(const std::filesystem::path& path, const RealGrid& tensor);
RealGrid read_tensor(const std::filesystem::path& path);

/// Images of the given extents from a PGM (one image) or an OEDT file (rank 2:
/// one image, rank 3: a stack). OEDT payloads are min-max rescaled to [0, 1]
/// over the whole file; PGMs are divided by maxval.
std::vector<RealGrid> load_images(const std::filesystem::path& path, const Shape& extents);

}  // namespace oedflow
