// gspcd command-line front end: detect, synth, spectrum, graph.

#include <fstream>
#include <iostream>
#include <map>

#include <CLI11.hpp>

#include "gspcd/graph.hpp"
#include "gspcd/image_io.hpp"
#include "gspcd/imaging.hpp"
#include "gspcd/pipeline.hpp"
#include "gspcd/spectral.hpp"
#include "gspcd/synthetic.hpp"

namespace {

using namespace gspcd;

// Options whose values are forwarded verbatim to pipeline::apply_setting.
const std::vector<std::pair<std::string, std::string>> kDetectOptions = {
    {"pre", "pre-event image (PNG or GSPM)"},
    {"post", "post-event image (PNG or GSPM)"},
    {"truth", "ground-truth change mask"},
    {"out", "output directory"},
    {"pre-channels", "channel count of a GSPM pre-event image"},
    {"post-channels", "channel count of a GSPM post-event image"},
    {"n-superpixels", "target number of superpixels (graph vertices)"},
    {"segmentation", "grid | slic"},
    {"segment-on", "pre | post"},
    {"seed", "segmentation / clustering seed"},
    {"k", "neighbours per vertex"},
    {"graph-mode", "l2 | entropy"},
    {"alpha", "sparsity weight"},
    {"mu", "ADMM penalty"},
    {"xi0", "relative-change stopping tolerance"},
    {"max-iter", "ADMM iteration cap"},
    {"prox", "l21 | l20 | topk"},
    {"tau", "row budget for topk"},
    {"filter-coeffs", "comma-separated h_1..h_M"},
    {"linear-solver", "direct | iterative"},
    {"l20-threshold", "derived | literal"},
    {"di-method", "otsu | kmeans2"},
    {"direction", "forward | backward"},
    {"kc", "cutoff index for the spectral projection baseline"},
};
const std::vector<std::pair<std::string, std::string>> kDetectFlags = {
    {"vdf", "also run the vertex-domain filtering baseline"},
    {"spectral-projection", "also run the ideal low-pass projection baseline"},
    {"strict", "exit 3 when the solver does not converge"},
};

imaging::ImageRaster load_or_die(const std::string& path, int channels) {
  return io::load_image(path, channels);
}

int run_synth(const synthetic::SyntheticSpec& spec, const std::filesystem::path& out) {
  const auto pair = synthetic::generate_synthetic(spec);
  std::filesystem::create_directories(out);
  io::write_png(out / "pre.png", pair.pre);
  io::write_png_bands(out / "post.png", pair.post);
  io::write_png_labels(out / "truth.png", pair.truth);
  auto as_matrix = [](const imaging::ImageRaster& img) {
    Matrix m(img.height, std::size_t(img.width) * img.channels);
    for (int r = 0; r < img.height; ++r) {
      for (Index c = 0; c < m.cols(); ++c) m(r, c) = img.data[std::size_t(r) * m.cols() + c];
    }
    return m;
  };
  io::write_gspm(out / "pre.gspm", as_matrix(pair.pre));
  io::write_gspm(out / "post.gspm", as_matrix(pair.post));
  std::cout << "changed fraction " << pair.realized_fraction << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Graph spectral change detection for heterogeneous image pairs"};
  app.require_subcommand(1);

  // detect
  auto* detect = app.add_subcommand("detect", "run the full change-detection pipeline");
  std::string config_path;
  detect->add_option("--config", config_path, "key = value configuration file");
  std::map<std::string, std::string> detect_values;
  std::map<std::string, CLI::Option*> detect_opts;
  for (const auto& [name, help] : kDetectOptions) {
    detect_opts[name] = detect->add_option("--" + name, detect_values[name], help);
  }
  std::map<std::string, bool> detect_flags;
  std::map<std::string, CLI::Option*> flag_opts;
  for (const auto& [name, help] : kDetectFlags) {
    detect_flags[name] = false;
    flag_opts[name] = detect->add_flag("--" + name, detect_flags[name], help);
  }

  // synth
  auto* synth = app.add_subcommand("synth", "generate a synthetic heterogeneous pair");
  synthetic::SyntheticSpec spec;
  std::string synth_out = "synthetic";
  synth->add_option("--seed", spec.seed, "random seed")->capture_default_str();
  synth->add_option("--height", spec.height)->capture_default_str();
  synth->add_option("--width", spec.width)->capture_default_str();
  synth->add_option("--regions", spec.n_regions, "latent Voronoi cells")->capture_default_str();
  synth->add_option("--levels", spec.n_levels, "distinct latent values")->capture_default_str();
  synth->add_option("--change-fraction", spec.change_fraction)->capture_default_str();
  synth->add_option("--noise", spec.noise_sigma, "Gaussian noise sigma")->capture_default_str();
  synth->add_option("--out", synth_out, "output directory")->capture_default_str();

  // spectrum
  auto* spectrum = app.add_subcommand("spectrum", "energy profile of a signal on an image's KNN graph");
  std::string sp_image, sp_signal, sp_out = "spectrum.csv", sp_mode = "l2";
  int sp_channels = 1, sp_signal_channels = 1, sp_n = 1000, sp_k = 30;
  spectrum->add_option("--image", sp_image, "image defining the graph")->required();
  spectrum->add_option("--signal", sp_signal, "image whose features are analysed (default: --image)");
  spectrum->add_option("--channels", sp_channels, "GSPM channel count of --image");
  spectrum->add_option("--signal-channels", sp_signal_channels, "GSPM channel count of --signal");
  spectrum->add_option("--n-superpixels", sp_n)->capture_default_str();
  spectrum->add_option("--k", sp_k)->capture_default_str();
  spectrum->add_option("--graph-mode", sp_mode, "l2 | entropy")->capture_default_str();
  spectrum->add_option("--out", sp_out, "CSV output")->capture_default_str();

  // graph
  auto* graph_cmd = app.add_subcommand("graph", "export an affinity matrix as a coordinate list");
  std::string g_image, g_out = "affinity.txt", g_mode = "l2", g_kind = "knn";
  int g_channels = 1, g_n = 2000, g_k = 30;
  bool g_raw = false;
  graph_cmd->add_option("--image", g_image)->required();
  graph_cmd->add_option("--channels", g_channels, "GSPM channel count");
  graph_cmd->add_option("--n-superpixels", g_n)->capture_default_str();
  graph_cmd->add_option("--k", g_k)->capture_default_str();
  graph_cmd->add_option("--graph-mode", g_mode, "l2 | entropy")->capture_default_str();
  graph_cmd->add_option("--kind", g_kind, "knn | kfn")->capture_default_str();
  graph_cmd->add_flag("--raw", g_raw, "skip Sinkhorn balancing of the KNN affinity");
  graph_cmd->add_option("--out", g_out)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : pipeline::kBadConfig;
  }

  try {
    if (*detect) {
      pipeline::KeyValues file, cli;
      if (!config_path.empty()) file = pipeline::read_config_file(config_path);
      for (const auto& [name, opt] : detect_opts) {
        if (opt->count() > 0) cli[name] = detect_values[name];
      }
      for (const auto& [name, opt] : flag_opts) {
        if (opt->count() > 0) cli[name] = detect_flags[name] ? "true" : "false";
      }
      const pipeline::PipelineConfig cfg = pipeline::resolve_config(file, cli);
      if (cfg.pre.empty() || cfg.post.empty()) throw pipeline::ConfigError("--pre and --post are required");
      return pipeline::run_detect(cfg, std::cerr);
    }
    if (*synth) return run_synth(spec, synth_out);

    auto mode_of = [](const std::string& m) {
      if (m == "l2") return graph::AffinityMode::l2;
      if (m == "entropy") return graph::AffinityMode::entropy;
      throw pipeline::ConfigError("graph-mode must be l2 or entropy");
    };

    if (*spectrum) {
      const auto img = load_or_die(sp_image, sp_channels);
      const auto map = imaging::segment_superpixels(img, sp_n, imaging::SegmentationMethod::grid);
      const FeatureMatrix x = imaging::extract_features(img, map, true);
      const FeatureMatrix f = sp_signal.empty()
                                  ? x
                                  : imaging::extract_features(load_or_die(sp_signal, sp_signal_channels), map, true);
      const auto g = graph::build_graph(x, sp_k, mode_of(sp_mode));
      const auto basis = spectral::eigendecompose(g.laplacian);
      std::ofstream os(sp_out);
      spectral::write_energy_csv(os, basis, spectral::energy_profile(basis, f));
      return 0;
    }
    if (*graph_cmd) {
      const auto img = load_or_die(g_image, g_channels);
      const auto map = imaging::segment_superpixels(img, g_n, imaging::SegmentationMethod::grid);
      const Matrix dist = graph::pairwise_sq_distances(imaging::extract_features(img, map, true));
      graph::SparseAffinity w;
      if (g_kind == "kfn") {
        w = graph::build_kfn_affinity(dist, g_k);
      } else if (g_kind == "knn") {
        w = graph::build_adaptive_affinity(dist, g_k, mode_of(g_mode));
        if (!g_raw) w = graph::sinkhorn_symmetrize(w);
      } else {
        throw pipeline::ConfigError("kind must be knn or kfn");
      }
      std::ofstream os(g_out);
      graph::write_affinity_coo(os, w);
      return 0;
    }
  } catch (const pipeline::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return pipeline::kBadConfig;
  } catch (const ConvergenceError& e) {
    std::cerr << "not converged: " << e.what() << '\n';
    return pipeline::kNotConverged;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return pipeline::kBadInput;
  }
  return 0;
}
