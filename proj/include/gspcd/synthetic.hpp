#pragma once

#include <cstdint>
#include <vector>

#include "gspcd/imaging.hpp"

namespace gspcd::synthetic {

/// Monotone intensity transfer functions on [0, 1] used to fake sensor modalities.
enum class ModalityMap { identity, sqrt, square, sigmoid, invert, invert_square };

double apply_modality(ModalityMap map, double s);

struct SyntheticSpec {
  int height = 256;
  int width = 256;
  int n_regions = 60;  // Voronoi cells of the latent structure
  int n_levels = 2;    // distinct latent values shared across cells
  double change_fraction = 0.10;
  double noise_sigma = 0.02;
  ModalityMap pre_map = ModalityMap::square;
  // One falling and one rising channel: their mean carries no level information, so raw pre/post
  // intensities are nearly uncorrelated while both images share the cell structure.
  std::vector<ModalityMap> post_maps{ModalityMap::invert_square, ModalityMap::identity};
  std::uint64_t seed = 42;
};

struct SyntheticPair {
  imaging::ImageRaster pre;
  imaging::ImageRaster post;
  LabelGrid truth;
  std::vector<int> cell_of_pixel;   // latent Voronoi cell per pixel
  double realized_fraction = 0.0;
};

/// Piecewise-constant latent scene seen through two modality maps. A connected union of cells
/// gets new latent levels before the post-event map is applied; truth marks those pixels.
SyntheticPair generate_synthetic(const SyntheticSpec& spec);

}  // namespace gspcd::synthetic
