#include "gspcd/pipeline.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "gspcd/image_io.hpp"
#include "gspcd/spectral.hpp"

namespace gspcd::pipeline {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError("'" + key + "' expects a number, got '" + v + "'");
  }
}

long long to_int(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const long long i = std::stoll(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return i;
  } catch (const std::exception&) {
    throw ConfigError("'" + key + "' expects an integer, got '" + v + "'");
  }
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError("'" + key + "' expects true/false, got '" + v + "'");
}

template <class E>
E to_enum(const std::string& key, const std::string& v, std::initializer_list<std::pair<const char*, E>> options) {
  for (const auto& [name, value] : options) {
    if (v == name) return value;
  }
  throw ConfigError("'" + key + "' has unsupported value '" + v + "'");
}

std::vector<double> to_list(const std::string& key, const std::string& v) {
  std::vector<double> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(to_double(key, trim(item)));
  return out;
}

BaselineResult make_baseline(const Vector& scores, const imaging::SuperpixelMap& map, const LabelGrid* truth,
                             const PipelineConfig& cfg) {
  BaselineResult b;
  b.di = detect::difference_image_from_scores(scores, map);
  b.cm = detect::segment_threshold(b.di, map, cfg.di_method, cfg.seed);
  if (truth) b.report = detect::evaluate(b.cm, *truth, b.di);
  return b;
}

imaging::ImageRaster regression_image(const Matrix& z, const imaging::ColumnScaling& scaling,
                                      const imaging::SuperpixelMap& map, int channels) {
  imaging::ImageRaster img(map.height, map.width, channels);
  for (int q = 0; q < channels; ++q) {
    const Index col = 3 * q;  // mean feature of channel q
    const double scale = scaling.scale(col) > 0.0 ? scaling.scale(col) : 0.0;
    const Vector mean = (z.col(col) * scale).array() + scaling.mean(col);
    const PixelGrid grid = imaging::reproject(mean, map);
    for (Index p = 0; p < grid.size(); ++p) img.data[std::size_t(p) * channels + q] = std::clamp(grid.data()[p], 0.0, 1.0);
  }
  return img;
}

}  // namespace

void PipelineConfig::validate() const {
  if (n_superpixels < 2) throw ConfigError("n-superpixels must be at least 2");
  if (k < 1) throw ConfigError("k must be at least 1");
  if (kc < 0) throw ConfigError("kc must be nonnegative");
  if (pre_channels < 1 || post_channels < 1) throw ConfigError("channel counts must be positive");
  try {
    solver.validate();
  } catch (const InputError& e) {
    throw ConfigError(e.what());
  }
}

KeyValues parse_config_text(const std::string& text) {
  KeyValues kv;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(lineno) + " lacks '='");
    std::string key = trim(line.substr(0, eq));
    if (key.rfind("--", 0) == 0) key.erase(0, 2);
    kv[key] = trim(line.substr(eq + 1));
  }
  return kv;
}

KeyValues read_config_file(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_config_text(ss.str());
}

void apply_setting(PipelineConfig& cfg, const std::string& key, const std::string& value) {
  using regression::ProxMode;
  if (key == "pre") cfg.pre = value;
  else if (key == "post") cfg.post = value;
  else if (key == "truth") cfg.truth = value;
  else if (key == "out") cfg.out_dir = value;
  else if (key == "pre-channels") cfg.pre_channels = int(to_int(key, value));
  else if (key == "post-channels") cfg.post_channels = int(to_int(key, value));
  else if (key == "n-superpixels") cfg.n_superpixels = int(to_int(key, value));
  else if (key == "segmentation")
    cfg.segmentation = to_enum<imaging::SegmentationMethod>(
        key, value, {{"grid", imaging::SegmentationMethod::grid}, {"slic", imaging::SegmentationMethod::slic}});
  else if (key == "segment-on")
    cfg.segment_on = to_enum<SegmentSource>(key, value, {{"pre", SegmentSource::pre}, {"post", SegmentSource::post}});
  else if (key == "seed") cfg.seed = std::uint64_t(to_int(key, value));
  else if (key == "k") cfg.k = int(to_int(key, value));
  else if (key == "graph-mode")
    cfg.graph_mode = to_enum<graph::AffinityMode>(
        key, value, {{"l2", graph::AffinityMode::l2}, {"entropy", graph::AffinityMode::entropy}});
  else if (key == "alpha") cfg.solver.alpha = to_double(key, value);
  else if (key == "mu") cfg.solver.mu = to_double(key, value);
  else if (key == "xi0") cfg.solver.xi0 = to_double(key, value);
  else if (key == "max-iter") cfg.solver.max_iter = int(to_int(key, value));
  else if (key == "prox")
    cfg.solver.prox = to_enum<ProxMode>(key, value, {{"l20", ProxMode::l20}, {"l21", ProxMode::l21}, {"topk", ProxMode::topk}});
  else if (key == "tau") cfg.solver.tau = Index(to_int(key, value));
  else if (key == "filter-coeffs") cfg.solver.filter_coeffs = to_list(key, value);
  else if (key == "linear-solver")
    cfg.solver.linear_solver = to_enum<regression::LinearSolverKind>(
        key, value, {{"direct", regression::LinearSolverKind::direct}, {"iterative", regression::LinearSolverKind::iterative}});
  else if (key == "l20-threshold")
    cfg.solver.l20_rule = to_enum<regression::HardThresholdRule>(
        key, value, {{"derived", regression::HardThresholdRule::derived}, {"literal", regression::HardThresholdRule::literal}});
  else if (key == "di-method")
    cfg.di_method = to_enum<detect::ThresholdMethod>(
        key, value, {{"otsu", detect::ThresholdMethod::otsu}, {"kmeans2", detect::ThresholdMethod::kmeans2}});
  else if (key == "direction")
    cfg.direction = to_enum<Direction>(key, value, {{"forward", Direction::forward}, {"backward", Direction::backward}});
  else if (key == "vdf") cfg.run_vdf = to_bool(key, value);
  else if (key == "spectral-projection") cfg.run_spectral_projection = to_bool(key, value);
  else if (key == "kc") cfg.kc = Index(to_int(key, value));
  else if (key == "strict") cfg.strict = to_bool(key, value);
  else throw ConfigError("unknown setting '" + key + "'");
}

PipelineConfig resolve_config(const KeyValues& file, const KeyValues& cli) {
  PipelineConfig cfg;
  for (const auto& [k, v] : file) apply_setting(cfg, k, v);
  for (const auto& [k, v] : cli) apply_setting(cfg, k, v);
  cfg.validate();
  return cfg;
}

PipelineResult run_pipeline(const imaging::ImageRaster& pre_in, const imaging::ImageRaster& post_in,
                            const LabelGrid* truth, const PipelineConfig& cfg) {
  cfg.validate();
  // Backward regression maps post -> pre with the roles of the two images swapped.
  const bool swap = cfg.direction == Direction::backward;
  const imaging::ImageRaster& pre = swap ? post_in : pre_in;
  const imaging::ImageRaster& post = swap ? pre_in : post_in;
  pre.validate();
  post.validate();
  if (pre.height != post.height || pre.width != post.width) throw InputError("pre and post images differ in size");
  if (truth && (truth->rows() != pre.height || truth->cols() != pre.width))
    throw InputError("truth map size differs from the images");

  const imaging::ImageRaster& seg_source = (cfg.segment_on == SegmentSource::pre) == !swap ? pre : post;
  PipelineResult res;
  res.map = imaging::segment_superpixels(seg_source, cfg.n_superpixels, cfg.segmentation, cfg.seed);
  const Index n = res.map.n_regions;
  if (cfg.k > n - 1) throw ConfigError("k must be below the superpixel count");

  const FeatureMatrix x = imaging::extract_features(pre, res.map, true);
  imaging::ColumnScaling y_scaling;
  const FeatureMatrix y = imaging::extract_features(post, res.map, true, &y_scaling);

  const graph::GraphOperators g1 = graph::build_graph(x, cfg.k, cfg.graph_mode);
  res.state = regression::solve_decomposition(y, g1, cfg.solver);
  res.regression_image = regression_image(res.state.z, y_scaling, res.map, post.channels);
  res.di = detect::difference_image(res.state.delta, res.map);
  res.cm = detect::segment_threshold(res.di, res.map, cfg.di_method, cfg.seed);
  if (truth) res.report = detect::evaluate(res.cm, *truth, res.di);

  if (cfg.run_vdf) {
    const graph::GraphOperators g2 = graph::build_graph(y, cfg.k, cfg.graph_mode);
    res.vdf = make_baseline(detect::vdf_difference(y, g1, g2, detect::ShiftKind::laplacian), res.map, truth, cfg);
  }
  if (cfg.run_spectral_projection) {
    const spectral::SpectralBasis basis = spectral::eigendecompose(g1.laplacian);
    const Index kc = cfg.kc > 0 ? cfg.kc : std::max<Index>(1, n / 2);
    if (kc > n) throw ConfigError("kc exceeds the superpixel count");
    const auto proj = spectral::spectral_projection_regression(basis, y, kc);
    res.spectral_projection = make_baseline(proj.changed.rowwise().norm(), res.map, truth, cfg);
  }
  return res;
}

int run_detect(const PipelineConfig& cfg, std::ostream& log) {
  try {
    cfg.validate();
  } catch (const ConfigError& e) {
    log << "config error: " << e.what() << '\n';
    return kBadConfig;
  }

  imaging::ImageRaster pre, post;
  std::optional<LabelGrid> truth;
  try {
    pre = io::load_image(cfg.pre, cfg.pre_channels);
    post = io::load_image(cfg.post, cfg.post_channels);
    if (!cfg.truth.empty()) truth = io::load_labels(cfg.truth);
  } catch (const std::exception& e) {
    log << "input error: " << e.what() << '\n';
    return kBadInput;
  }

  PipelineResult res;
  try {
    res = run_pipeline(pre, post, truth ? &*truth : nullptr, cfg);
  } catch (const ConfigError& e) {
    log << "config error: " << e.what() << '\n';
    return kBadConfig;
  } catch (const ConvergenceError& e) {
    log << "not converged: " << e.what() << '\n';
    return kNotConverged;
  } catch (const InputError& e) {
    log << "input error: " << e.what() << '\n';
    return kBadInput;
  }

  try {
    std::filesystem::create_directories(cfg.out_dir);
    const auto& out = cfg.out_dir;
    io::write_png_bands(out / "z.png", res.regression_image);
    io::write_png_normalized(out / "di.png", res.di.per_pixel);
    io::write_gspm(out / "di.gspm", res.di.per_pixel);
    io::write_png_labels(out / "cm.png", res.cm.labels);
    {
      std::ofstream trace(out / "trace.csv");
      regression::write_trace_csv(trace, res.state);
    }
    if (res.report) {
      std::ofstream(out / "metrics.json") << detect::to_json(*res.report);
      std::ofstream roc(out / "curve.csv");
      detect::write_curve_csv(roc, detect::roc_pr_sweep(res.di.per_pixel, *truth));
    }
    auto write_baseline = [&](const std::string& prefix, const BaselineResult& b) {
      io::write_png_normalized(out / (prefix + "_di.png"), b.di.per_pixel);
      io::write_gspm(out / (prefix + "_di.gspm"), b.di.per_pixel);
      io::write_png_labels(out / (prefix + "_cm.png"), b.cm.labels);
      if (b.report) std::ofstream(out / (prefix + "_metrics.json")) << detect::to_json(*b.report);
    };
    if (res.vdf) write_baseline("vdf", *res.vdf);
    if (res.spectral_projection) write_baseline("sp", *res.spectral_projection);
  } catch (const std::exception& e) {
    log << "output error: " << e.what() << '\n';
    return kBadInput;
  }

  log << "regions=" << res.map.n_regions << " iterations=" << res.state.iter
      << " converged=" << (res.state.converged ? "yes" : "no");
  if (res.cm.degenerate) log << " (constant difference image: no change detected)";
  log << '\n';
  if (res.report) log << detect::to_json(*res.report);

  if (cfg.strict && !res.state.converged) {
    log << "solver did not converge within " << cfg.solver.max_iter << " iterations\n";
    return kNotConverged;
  }
  return kOk;
}

}  // namespace gspcd::pipeline
