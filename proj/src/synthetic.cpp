#include "gspcd/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <set>

namespace gspcd::synthetic {

double apply_modality(ModalityMap map, double s) {
  switch (map) {
    case ModalityMap::identity:
      return s;
    case ModalityMap::sqrt:
      return std::sqrt(s);
    case ModalityMap::square:
      return s * s;
    case ModalityMap::sigmoid: {
      auto f = [](double x) { return 1.0 / (1.0 + std::exp(-10.0 * (x - 0.5))); };
      return (f(s) - f(0.0)) / (f(1.0) - f(0.0));
    }
    case ModalityMap::invert:
      return 1.0 - s;
    case ModalityMap::invert_square:
      return 1.0 - s * s;
  }
  return s;
}

namespace {

// Greedily grows a connected set of cells from a random start until its area is near target.
std::vector<bool> grow_change_region(const std::vector<std::set<int>>& adjacency, const std::vector<std::size_t>& area,
                                     double target, std::mt19937_64& rng) {
  const int n = int(area.size());
  std::vector<int> nonempty;
  for (int c = 0; c < n; ++c) {
    if (area[c] > 0) nonempty.push_back(c);
  }
  std::uniform_int_distribution<std::size_t> pick(0, nonempty.size() - 1);

  std::vector<bool> best_sel;
  double best_err = std::numeric_limits<double>::infinity();
  // A few restarts guard against starting inside a cell that is already too large.
  for (int attempt = 0; attempt < 8 && best_err > 0.05 * target; ++attempt) {
    std::vector<bool> sel(n, false);
    const int start = nonempty[pick(rng)];
    sel[start] = true;
    double covered = double(area[start]);
    std::set<int> frontier(adjacency[start].begin(), adjacency[start].end());
    while (covered < target && !frontier.empty()) {
      int choice = -1;
      double choice_err = std::numeric_limits<double>::infinity();
      for (int c : frontier) {
        const double err = std::abs(covered + double(area[c]) - target);
        if (err < choice_err) {
          choice_err = err;
          choice = c;
        }
      }
      if (choice_err >= std::abs(covered - target)) break;
      sel[choice] = true;
      covered += double(area[choice]);
      frontier.erase(choice);
      for (int nb : adjacency[choice]) {
        if (!sel[nb]) frontier.insert(nb);
      }
    }
    const double err = std::abs(covered - target);
    if (err < best_err) {
      best_err = err;
      best_sel = std::move(sel);
    }
  }
  return best_sel;
}

}  // namespace

SyntheticPair generate_synthetic(const SyntheticSpec& spec) {
  if (spec.height <= 0 || spec.width <= 0) throw InputError("synthetic image must be nonempty");
  if (spec.n_regions < 2 || spec.n_levels < 2) throw InputError("need at least two latent cells and two levels");
  if (spec.post_maps.empty()) throw InputError("post-event image needs at least one channel map");
  if (!(spec.noise_sigma >= 0.0)) throw InputError("noise sigma must be nonnegative");
  const std::size_t pixels = std::size_t(spec.height) * spec.width;
  if (!(spec.change_fraction > 0.0 && spec.change_fraction < 1.0) || spec.change_fraction * pixels < 1.0)
    throw InputError("change_fraction must lie in (0,1) and cover at least one pixel");

  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<int> level_dist(0, spec.n_levels - 1);

  // Latent Voronoi structure.
  const int cells = spec.n_regions;
  std::vector<double> py(cells), px(cells);
  for (int c = 0; c < cells; ++c) {
    py[c] = unit(rng) * spec.height;
    px[c] = unit(rng) * spec.width;
  }
  std::vector<int> level(cells);
  for (int c = 0; c < cells; ++c) level[c] = level_dist(rng);

  SyntheticPair out;
  out.cell_of_pixel.resize(pixels);
  std::vector<std::size_t> area(cells, 0);
  for (int r = 0; r < spec.height; ++r) {
    for (int col = 0; col < spec.width; ++col) {
      int best = 0;
      double bd = std::numeric_limits<double>::infinity();
      for (int c = 0; c < cells; ++c) {
        const double dy = r + 0.5 - py[c], dx = col + 0.5 - px[c];
        const double d = dy * dy + dx * dx;
        if (d < bd) {
          bd = d;
          best = c;
        }
      }
      out.cell_of_pixel[std::size_t(r) * spec.width + col] = best;
      ++area[best];
    }
  }

  std::vector<std::set<int>> adjacency(cells);
  for (int r = 0; r < spec.height; ++r) {
    for (int col = 0; col < spec.width; ++col) {
      const int a = out.cell_of_pixel[std::size_t(r) * spec.width + col];
      if (col + 1 < spec.width) {
        const int b = out.cell_of_pixel[std::size_t(r) * spec.width + col + 1];
        if (a != b) adjacency[a].insert(b), adjacency[b].insert(a);
      }
      if (r + 1 < spec.height) {
        const int b = out.cell_of_pixel[std::size_t(r + 1) * spec.width + col];
        if (a != b) adjacency[a].insert(b), adjacency[b].insert(a);
      }
    }
  }

  const std::vector<bool> changed = grow_change_region(adjacency, area, spec.change_fraction * double(pixels), rng);
  std::vector<int> post_level = level;
  std::uniform_int_distribution<int> shift_dist(1, spec.n_levels - 1);
  for (int c = 0; c < cells; ++c) {
    if (changed[c]) post_level[c] = (level[c] + shift_dist(rng)) % spec.n_levels;
  }

  auto latent = [&](int lvl) { return (lvl + 0.5) / spec.n_levels; };
  std::normal_distribution<double> noise(0.0, 1.0);
  const int post_ch = int(spec.post_maps.size());
  out.pre = imaging::ImageRaster(spec.height, spec.width, 1);
  out.post = imaging::ImageRaster(spec.height, spec.width, post_ch);
  out.truth = LabelGrid::Zero(spec.height, spec.width);
  std::size_t changed_pixels = 0;
  for (std::size_t p = 0; p < pixels; ++p) {
    const int c = out.cell_of_pixel[p];
    const double s_pre = latent(level[c]);
    const double s_post = latent(post_level[c]);
    out.pre.data[p] = std::clamp(apply_modality(spec.pre_map, s_pre) + spec.noise_sigma * noise(rng), 0.0, 1.0);
    for (int q = 0; q < post_ch; ++q) {
      out.post.data[p * post_ch + q] =
          std::clamp(apply_modality(spec.post_maps[q], s_post) + spec.noise_sigma * noise(rng), 0.0, 1.0);
    }
    if (changed[c]) {
      out.truth.data()[p] = 1;
      ++changed_pixels;
    }
  }
  out.realized_fraction = double(changed_pixels) / double(pixels);
  return out;
}

}  // namespace gspcd::synthetic
