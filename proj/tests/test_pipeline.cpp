#include <doctest.h>

#include <sys/wait.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "gspcd/image_io.hpp"
#include "gspcd/pipeline.hpp"
#include "gspcd/synthetic.hpp"

using namespace gspcd;
namespace fs = std::filesystem;

namespace {

// Fresh directory under the system temp dir, removed on scope exit.
struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("gspcd_test_" + tag + "_" + std::to_string(std::random_device{}()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
};

synthetic::SyntheticSpec small_spec(std::uint64_t seed = 7) {
  synthetic::SyntheticSpec s;
  s.height = 64;
  s.width = 60;
  s.n_regions = 20;
  s.seed = seed;
  return s;
}

pipeline::PipelineConfig small_config() {
  pipeline::PipelineConfig cfg;
  cfg.n_superpixels = 100;
  cfg.k = 8;
  return cfg;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(GSPCD_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("generator bookkeeping") {
  for (std::uint64_t seed : {1, 2, 3}) {
    const auto pair = synthetic::generate_synthetic(small_spec(seed));
    CHECK(pair.pre.channels == 1);
    CHECK(pair.post.channels == 2);
    CHECK_NOTHROW(pair.pre.validate());
    CHECK_NOTHROW(pair.post.validate());
    const double frac = pair.truth.cast<double>().mean();
    CHECK(frac == doctest::Approx(pair.realized_fraction));
    CHECK(std::abs(frac - 0.10) <= 0.02);
    CHECK(pair.cell_of_pixel.size() == std::size_t(64 * 60));
  }
  const auto a = synthetic::generate_synthetic(small_spec(5));
  const auto b = synthetic::generate_synthetic(small_spec(5));
  CHECK(a.post.data == b.post.data);
  CHECK(a.truth == b.truth);
}

TEST_CASE("noise-free identity maps leave unchanged pixels equal") {
  auto spec = small_spec(9);
  spec.noise_sigma = 0.0;
  spec.pre_map = synthetic::ModalityMap::identity;
  spec.post_maps = {synthetic::ModalityMap::identity};
  const auto pair = synthetic::generate_synthetic(spec);
  int changed_differ = 0, changed = 0;
  for (std::size_t p = 0; p < pair.pre.data.size(); ++p) {
    if (pair.truth.data()[p]) {
      ++changed;
      changed_differ += pair.pre.data[p] != pair.post.data[p];
    } else {
      CHECK(pair.pre.data[p] == pair.post.data[p]);
    }
  }
  CHECK(changed > 0);
  CHECK(changed_differ == changed);
}

TEST_CASE("default pair: raw intensities are nearly uncorrelated") {
  const auto pair = synthetic::generate_synthetic(synthetic::SyntheticSpec{});
  const std::size_t n = pair.pre.data.size();
  Vector x{Index(n)}, y{Index(n)};
  for (std::size_t p = 0; p < n; ++p) {
    x(Index(p)) = pair.pre.data[p];
    y(Index(p)) = 0.5 * (pair.post.data[2 * p] + pair.post.data[2 * p + 1]);
  }
  x.array() -= x.mean();
  y.array() -= y.mean();
  const double rho = x.dot(y) / (x.norm() * y.norm());
  CHECK(std::abs(rho) <= 0.1);
}

TEST_CASE("generator rejects bad specs") {
  auto spec = small_spec();
  spec.n_levels = 1;
  CHECK_THROWS_AS(synthetic::generate_synthetic(spec), InputError);
  spec = small_spec();
  spec.change_fraction = 1.0;
  CHECK_THROWS_AS(synthetic::generate_synthetic(spec), InputError);
  spec = small_spec();
  spec.post_maps.clear();
  CHECK_THROWS_AS(synthetic::generate_synthetic(spec), InputError);
}

TEST_CASE("config text parsing") {
  const auto kv = pipeline::parse_config_text("# comment\nalpha = 0.2\n  --k=12  # trailing\n\nprox = topk\n");
  CHECK(kv.size() == 3u);
  CHECK(kv.at("alpha") == "0.2");
  CHECK(kv.at("k") == "12");
  CHECK(kv.at("prox") == "topk");
  CHECK_THROWS_AS(pipeline::parse_config_text("alpha 0.2\n"), pipeline::ConfigError);
}

TEST_CASE("config precedence: defaults, then file, then command line") {
  const pipeline::KeyValues file{{"alpha", "0.2"}, {"k", "12"}, {"filter-coeffs", "1,0.5"}};
  const pipeline::KeyValues cli{{"k", "15"}, {"vdf", "true"}};
  const auto cfg = pipeline::resolve_config(file, cli);
  CHECK(cfg.solver.alpha == 0.2);
  CHECK(cfg.k == 15);
  CHECK(cfg.run_vdf);
  CHECK(cfg.solver.mu == 0.1);
  CHECK(cfg.n_superpixels == 2000);
  CHECK(cfg.solver.filter_coeffs == std::vector<double>{1.0, 0.5});

  CHECK_THROWS_AS(pipeline::resolve_config({{"bogus", "1"}}, {}), pipeline::ConfigError);
  CHECK_THROWS_AS(pipeline::resolve_config({}, {{"alpha", "-1"}}), pipeline::ConfigError);
  CHECK_THROWS_AS(pipeline::resolve_config({}, {{"k", "abc"}}), pipeline::ConfigError);
  CHECK_THROWS_AS(pipeline::resolve_config({}, {{"prox", "l1"}}), pipeline::ConfigError);
}

TEST_CASE("gspm and png round trips") {
  TempDir dir("io");
  Matrix m(3, 4);
  m << 0.0, 0.1, 0.2, 0.3, -1.0, 1e-300, 1e300, 0.5, 0.25, 0.125, 2.0, 3.0;
  io::write_gspm(dir.path / "m.gspm", m);
  CHECK(io::read_gspm(dir.path / "m.gspm") == m);

  imaging::ImageRaster img(5, 4, 3);
  for (std::size_t i = 0; i < img.data.size(); ++i) img.data[i] = double(i % 17) / 16.0;
  io::write_png(dir.path / "rgb.png", img);
  const auto back = io::read_png(dir.path / "rgb.png");
  REQUIRE(back.channels == 3);
  for (std::size_t i = 0; i < img.data.size(); ++i) CHECK(std::abs(back.data[i] - img.data[i]) <= 0.5 / 255.0 + 1e-12);

  imaging::ImageRaster two(3, 3, 2);
  const auto files = io::write_png_bands(dir.path / "two.png", two);
  REQUIRE(files.size() == 2u);
  CHECK(files[1].filename() == "two_band1.png");
  CHECK(fs::exists(files[0]));

  LabelGrid labels = LabelGrid::Zero(2, 3);
  labels(1, 2) = 1;
  io::write_png_labels(dir.path / "l.png", labels);
  CHECK(io::load_labels(dir.path / "l.png") == labels);

  CHECK_THROWS_AS(io::read_gspm(dir.path / "missing.gspm"), InputError);
  CHECK_THROWS_AS(io::read_png(dir.path / "m.gspm"), InputError);
  CHECK_THROWS_AS(io::load_image(dir.path / "m.gspm", 3), InputError);
}

TEST_CASE("pipeline is deterministic and detects the planted change") {
  const auto pair = synthetic::generate_synthetic(small_spec(11));
  auto cfg = small_config();
  cfg.run_vdf = true;
  cfg.run_spectral_projection = true;
  const auto a = pipeline::run_pipeline(pair.pre, pair.post, &pair.truth, cfg);
  const auto b = pipeline::run_pipeline(pair.pre, pair.post, &pair.truth, cfg);
  CHECK(a.di.per_pixel == b.di.per_pixel);
  CHECK(a.cm.labels == b.cm.labels);
  REQUIRE(a.report.has_value());
  CHECK(*a.report->aur > 0.8);
  REQUIRE(a.vdf.has_value());
  REQUIRE(a.spectral_projection.has_value());
  CHECK(a.regression_image.channels == 2);
}

TEST_CASE("identical images score far below a changed pair") {
  // Delta still absorbs whatever Y has that is rough on its own graph, so the DI is not zero;
  // most vertices sit at zero and the mean is well under that of the changed pair.
  for (std::uint64_t seed : {12, 13, 14}) {
    const auto pair = synthetic::generate_synthetic(small_spec(seed));
    const auto same = pipeline::run_pipeline(pair.pre, pair.pre, nullptr, small_config());
    const auto diff = pipeline::run_pipeline(pair.pre, pair.post, &pair.truth, small_config());
    Vector v = same.di.per_vertex;
    std::sort(v.data(), v.data() + v.size());
    CHECK(v(v.size() / 2) <= 0.05);
    CHECK(same.di.per_vertex.mean() < 0.5 * diff.di.per_vertex.mean());
    CHECK_FALSE(same.report.has_value());
  }
}

TEST_CASE("pipeline input checks") {
  const auto pair = synthetic::generate_synthetic(small_spec(13));
  imaging::ImageRaster small(10, 10, 1);
  CHECK_THROWS_AS(pipeline::run_pipeline(pair.pre, small, nullptr, small_config()), InputError);
  auto cfg = small_config();
  cfg.k = 200;
  CHECK_THROWS_AS(pipeline::run_pipeline(pair.pre, pair.post, nullptr, cfg), pipeline::ConfigError);
}

TEST_CASE("cli exit codes and outputs") {
  TempDir dir("cli");
  const std::string d = dir.path.string();
  REQUIRE(run_cli("synth --height 64 --width 60 --regions 20 --seed 3 --out " + d + "/pair") == 0);
  CHECK(fs::exists(dir.path / "pair" / "post_band0.png"));
  const std::string base = "detect --pre " + d + "/pair/pre.gspm --post " + d + "/pair/post.gspm --post-channels 2 " +
                           "--truth " + d + "/pair/truth.png --n-superpixels 100 --k 8";

  CHECK(run_cli(base + " --out " + d + "/ok") == 0);
  for (const char* f : {"di.gspm", "di.png", "cm.png", "trace.csv", "metrics.json", "z_band0.png"}) {
    CHECK_MESSAGE(fs::exists(dir.path / "ok" / f), f);
  }
  const Matrix di = io::read_gspm(dir.path / "ok" / "di.gspm");
  CHECK(di.rows() == 64);
  CHECK(di.cols() == 60);
  const auto report = detect::report_from_json(slurp(dir.path / "ok" / "metrics.json"));
  CHECK(report.tp + report.fp + report.tn + report.fn == 64u * 60u);

  std::ofstream(dir.path / "bad.cfg") << "alpha = 0.1\nnot_a_key = 3\n";
  CHECK(run_cli(base + " --config " + d + "/bad.cfg --out " + d + "/x") == 2);
  CHECK(run_cli(base + " --alpha -1 --out " + d + "/x") == 2);
  CHECK(run_cli("detect --pre " + d + "/nope.png --post " + d + "/pair/pre.png --out " + d + "/x") == 1);
  CHECK(run_cli(base + " --max-iter 1 --strict --out " + d + "/x") == 3);
  CHECK(run_cli(base + " --max-iter 1 --out " + d + "/y") == 0);

  CHECK(run_cli("spectrum --image " + d + "/pair/pre.png --n-superpixels 50 --k 5 --out " + d + "/s.csv") == 0);
  CHECK(slurp(dir.path / "s.csv").rfind("lambda,norm\n", 0) == 0);
  CHECK(run_cli("graph --image " + d + "/pair/pre.png --n-superpixels 50 --k 5 --out " + d + "/g.coo") == 0);
  std::ifstream coo(dir.path / "g.coo");
  const auto w = graph::read_affinity_coo(coo);
  CHECK(w.size() == 49);  // 7 x 7 grid on 64 x 60
}
