#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>

#include "gspcd/detect.hpp"
#include "gspcd/graph.hpp"
#include "gspcd/imaging.hpp"
#include "gspcd/regression.hpp"

namespace gspcd::pipeline {

/// Invalid configuration key or value.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class Direction { forward, backward };
enum class SegmentSource { pre, post };

struct PipelineConfig {
  std::filesystem::path pre;
  std::filesystem::path post;
  std::filesystem::path truth;
  std::filesystem::path out_dir = ".";
  int pre_channels = 1;   // only used for GSPM inputs
  int post_channels = 1;

  int n_superpixels = 2000;
  imaging::SegmentationMethod segmentation = imaging::SegmentationMethod::grid;
  std::uint64_t seed = 0;
  SegmentSource segment_on = SegmentSource::pre;

  int k = 30;
  graph::AffinityMode graph_mode = graph::AffinityMode::l2;

  regression::SolverConfig solver;
  detect::ThresholdMethod di_method = detect::ThresholdMethod::otsu;
  Direction direction = Direction::forward;

  bool run_vdf = false;
  bool run_spectral_projection = false;
  Index kc = 0;  // 0 selects N/2
  bool strict = false;

  void validate() const;
};

using KeyValues = std::map<std::string, std::string>;

/// Flat "key = value" text, '#' starts a comment.
KeyValues parse_config_text(const std::string& text);
KeyValues read_config_file(const std::filesystem::path& path);

/// Sets one field from its flag name (without the leading dashes).
void apply_setting(PipelineConfig& cfg, const std::string& key, const std::string& value);

/// Defaults, then the config file, then command-line flags.
PipelineConfig resolve_config(const KeyValues& file, const KeyValues& cli);

struct BaselineResult {
  detect::DifferenceImage di;
  detect::ChangeMap cm;
  std::optional<detect::EvalReport> report;
};

struct PipelineResult {
  imaging::SuperpixelMap map;
  regression::RegressionState state;
  imaging::ImageRaster regression_image;
  detect::DifferenceImage di;
  detect::ChangeMap cm;
  std::optional<detect::EvalReport> report;
  std::optional<BaselineResult> vdf;
  std::optional<BaselineResult> spectral_projection;
};

/// In-memory pipeline. truth may be null.
PipelineResult run_pipeline(const imaging::ImageRaster& pre, const imaging::ImageRaster& post, const LabelGrid* truth,
                            const PipelineConfig& cfg);

/// Exit codes for the detect command.
enum ExitCode : int { kOk = 0, kBadInput = 1, kBadConfig = 2, kNotConverged = 3 };

/// Loads inputs, runs the pipeline and writes z.png, di.png, di.gspm, cm.png, trace.csv,
/// metrics.json (with truth) and optional baseline products into cfg.out_dir.
int run_detect(const PipelineConfig& cfg, std::ostream& log);

}  // namespace gspcd::pipeline
