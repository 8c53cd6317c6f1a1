#pragma once

#include <filesystem>
#include <vector>

#include "gspcd/imaging.hpp"

namespace gspcd::io {

/// 8- or 16-bit gray / gray+alpha / RGB / RGBA PNG, normalized to [0,1]. Alpha is dropped.
imaging::ImageRaster read_png(const std::filesystem::path& path);

/// Writes an 8-bit PNG (1 or 3 channels) from values already in [0, 1].
void write_png(const std::filesystem::path& path, const imaging::ImageRaster& img);

/// write_png for 1 or 3 channels; any other count becomes one gray file per band,
/// named <stem>_band<q><ext>. Returns the files written.
std::vector<std::filesystem::path> write_png_bands(const std::filesystem::path& path, const imaging::ImageRaster& img);

/// Min-max normalizes a single-band grid to 8 bits. A constant grid is written as zeros.
void write_png_normalized(const std::filesystem::path& path, const PixelGrid& grid);

/// Binary label map written as 0 / 255.
void write_png_labels(const std::filesystem::path& path, const LabelGrid& labels);

/// GSPM: "GSPM", u32 rows, u32 cols (little endian), rows*cols f64 LE row-major.
void write_gspm(const std::filesystem::path& path, const Matrix& m);
Matrix read_gspm(const std::filesystem::path& path);

/// PNG by extension, otherwise GSPM interpreted as height x (width * channels).
imaging::ImageRaster load_image(const std::filesystem::path& path, int gspm_channels = 1);

/// Loads a ground-truth raster; any nonzero value is "changed".
LabelGrid load_labels(const std::filesystem::path& path);

}  // namespace gspcd::io
