#pragma once

#include <filesystem>

#include "covidscreen/image.hpp"

namespace covidscreen {

// Decode a PNG/JPEG file into an RGB tensor in [0,1]. Grayscale files are
// replicated to three channels. Throws std::runtime_error on decode failure.
Tensor read_image(const std::filesystem::path& path);

// Encode an RGB (or single-channel) tensor in [0,1] to a PNG file. Output
// bytes are deterministic for identical pixel content.
void write_png(const std::filesystem::path& path, const Tensor& image);

}  // namespace covidscreen
