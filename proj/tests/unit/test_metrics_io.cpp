#include <png.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <unistd.h>

#include "doctest.h"
#include "helpers.hpp"
#include "mgrdn/image_io.hpp"
#include "mgrdn/manifest.hpp"
#include "mgrdn/metrics.hpp"

using mgr::Rng;
using mgr::Shape;
using mgr::Tensor;
using testing::random_tensor;

namespace fs = std::filesystem;

namespace {

fs::path scratch_dir() {
  static const fs::path dir = [] {
    fs::path d = fs::temp_directory_path() / ("mgrdn_unit_" + std::to_string(::getpid()));
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

// Direct 2-D evaluation at every valid 11x11 window position.
double ssim_brute_force(const Tensor<float>& a, const Tensor<float>& b) {
  double wsum = 0.0;
  double win[11][11];
  for (int i = 0; i < 11; ++i)
    for (int j = 0; j < 11; ++j) {
      win[i][j] = std::exp(-((i - 5) * (i - 5) + (j - 5) * (j - 5)) / (2 * 1.5 * 1.5));
      wsum += win[i][j];
    }
  const double c1 = 1e-4, c2 = 9e-4;
  double total = 0.0;
  for (int ch = 0; ch < a.c(); ++ch) {
    double sum = 0.0;
    int count = 0;
    for (int y = 0; y + 11 <= a.h(); ++y)
      for (int x = 0; x + 11 <= a.w(); ++x) {
        double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
        for (int i = 0; i < 11; ++i)
          for (int j = 0; j < 11; ++j) {
            const double w = win[i][j] / wsum;
            const double va = a.at(0, ch, y + i, x + j), vb = b.at(0, ch, y + i, x + j);
            ma += w * va;
            mb += w * vb;
            saa += w * va * va;
            sbb += w * vb * vb;
            sab += w * va * vb;
          }
        const double va = saa - ma * ma, vb = sbb - mb * mb, cov = sab - ma * mb;
        sum += (2 * ma * mb + c1) * (2 * cov + c2) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
        ++count;
      }
    total += sum / count;
  }
  return total / a.c();
}

}  // namespace

TEST_CASE("psnr values") {
  Tensor<float> a(Shape{1, 1, 10, 10}, 0.5f), b(Shape{1, 1, 10, 10}, 0.6f);
  CHECK(mgr::psnr(a, b) == doctest::Approx(20.0).epsilon(1e-5));  // mse 0.01
  CHECK(mgr::psnr(a, a) == 100.0);
  Tensor<float> c = a;
  c[0] = 0.5f + 1e-7f;
  CHECK(mgr::psnr(a, c) == 100.0);
  Rng rng(1);
  auto x = random_tensor<float>(Shape{1, 3, 8, 8}, rng, 0.0, 1.0);
  auto y = random_tensor<float>(Shape{1, 3, 8, 8}, rng, 0.0, 1.0);
  CHECK(mgr::psnr(x, y) == mgr::psnr(y, x));
  CHECK_THROWS_AS(mgr::psnr(x, a), std::invalid_argument);
}

TEST_CASE("ssim window is a normalized gaussian") {
  const auto w = mgr::ssim_window();
  REQUIRE(w.size() == 121);
  double sum = 0.0;
  for (double v : w) sum += v;
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(w[60] == *std::max_element(w.begin(), w.end()));
  CHECK(w[0] == doctest::Approx(w[120]).epsilon(1e-15));
  CHECK(w[60] / w[61] == doctest::Approx(std::exp(1.0 / (2 * 2.25))).epsilon(1e-12));
}

TEST_CASE("ssim matches a brute-force window evaluation") {
  Rng rng(2);
  for (int trial = 0; trial < 3; ++trial) {
    auto a = random_tensor<float>(Shape{1, 2, 17, 23}, rng, 0.0, 1.0);
    Tensor<float> b = a;
    for (auto& v : b.values()) v = std::clamp(v + static_cast<float>(rng.uniform(-0.2, 0.2)), 0.0f, 1.0f);
    CHECK(mgr::ssim(a, b) == doctest::Approx(ssim_brute_force(a, b)).epsilon(1e-9));
  }
}

TEST_CASE("ssim properties") {
  Rng rng(3);
  auto a = random_tensor<float>(Shape{1, 3, 16, 16}, rng, 0.0, 1.0);
  auto b = random_tensor<float>(Shape{1, 3, 16, 16}, rng, 0.0, 1.0);
  CHECK(mgr::ssim(a, a) == 1.0);
  CHECK(mgr::ssim(a, b) == doctest::Approx(mgr::ssim(b, a)).epsilon(1e-12));
  CHECK(mgr::ssim(a, b) < 1.0);
  CHECK(mgr::ssim(a, b) > -1.0);
  Tensor<float> flat(Shape{1, 1, 12, 12}, 0.3f);
  CHECK(mgr::ssim(flat, flat) == 1.0);
  CHECK_THROWS_AS(mgr::ssim(Tensor<float>(Shape{1, 1, 10, 20}), Tensor<float>(Shape{1, 1, 10, 20})),
                  std::invalid_argument);
}

TEST_CASE("quality report csv") {
  mgr::QualityReport r;
  Tensor<float> a(Shape{1, 1, 12, 12}, 0.5f), b(Shape{1, 1, 12, 12}, 0.6f);
  r.add("x", a, b);
  r.add("y", a, a);
  CHECK(r.mean_psnr() == doctest::Approx(60.0).epsilon(1e-5));
  const auto path = (scratch_dir() / "report.csv").string();
  r.write_csv(path);
  std::ifstream in(path);
  std::string header, l1, l2, mean;
  std::getline(in, header);
  std::getline(in, l1);
  std::getline(in, l2);
  std::getline(in, mean);
  CHECK(header == "image_id,psnr,ssim");
  CHECK(l1.rfind("x,20.0000,", 0) == 0);
  CHECK(l2 == "y,100.0000,1.000000");
  CHECK(mean.rfind("mean,60.0000,", 0) == 0);
}

TEST_CASE("png and pgm round trip") {
  Rng rng(4);
  for (int c : {1, 3}) {
    Tensor<float> t(Shape{1, c, 7, 9});
    for (auto& v : t.values()) v = static_cast<float>(rng.index(256)) / 255.0f;
    const auto path = (scratch_dir() / ("rt" + std::to_string(c) + ".png")).string();
    mgr::save_image(t, path);
    auto back = mgr::load_image(path);
    CHECK(back.format == mgr::ImageFormat::png8);
    REQUIRE(back.pixels.shape() == t.shape());
    for (std::size_t i = 0; i < t.size(); ++i) CHECK(back.pixels[i] == t[i]);
  }
  Tensor<float> g(Shape{1, 1, 5, 4});
  for (auto& v : g.values()) v = static_cast<float>(rng.index(256)) / 255.0f;
  const auto pgm = (scratch_dir() / "rt.pgm").string();
  mgr::save_image(g, pgm);
  auto back = mgr::load_image(pgm);
  CHECK(back.format == mgr::ImageFormat::pgm);
  for (std::size_t i = 0; i < g.size(); ++i) CHECK(back.pixels[i] == g[i]);
  CHECK_THROWS_AS(mgr::save_image(Tensor<float>(Shape{1, 3, 4, 4}), pgm), std::invalid_argument);
}

TEST_CASE("saving clamps and rounds") {
  Tensor<float> t(Shape{1, 1, 1, 5});
  t[0] = -0.3f;
  t[1] = 1.7f;
  t[2] = 0.5f;            // 127.5 rounds half away from zero
  t[3] = 100.4f / 255.0f;
  t[4] = 100.6f / 255.0f;
  const auto path = (scratch_dir() / "q.pgm").string();
  mgr::save_image(t, path);
  auto back = mgr::load_image(path).pixels;
  const float expect[] = {0, 255, 128, 100, 101};
  for (int i = 0; i < 5; ++i) CHECK(back[i] * 255.0f == doctest::Approx(expect[i]));
}

TEST_CASE("pgm header comments and errors") {
  const auto path = (scratch_dir() / "c.pgm").string();
  {
    std::ofstream out(path, std::ios::binary);
    out << "P5\n# a comment\n3 # inline\n2\n255\n";
    const unsigned char px[6] = {0, 51, 102, 153, 204, 255};
    out.write(reinterpret_cast<const char*>(px), 6);
  }
  auto img = mgr::load_image(path).pixels;
  REQUIRE(img.shape() == Shape{1, 1, 2, 3});
  CHECK(img.at(0, 0, 1, 2) == 1.0f);
  CHECK(img.at(0, 0, 0, 1) == doctest::Approx(0.2f));

  auto write = [&](const std::string& bytes) {
    std::ofstream out(path, std::ios::binary);
    out << bytes;
  };
  write("P2\n3 2\n255\n0 1 2 3 4 5\n");
  CHECK_THROWS_AS(mgr::load_image(path), std::runtime_error);
  write("P5\n3 2\n65535\n");
  CHECK_THROWS_AS(mgr::load_image(path), std::runtime_error);
  write("P5\n3 2\n255\nabc");
  CHECK_THROWS_AS(mgr::load_image(path), std::runtime_error);
  CHECK_THROWS_AS(mgr::load_image((scratch_dir() / "missing.png").string()), std::runtime_error);
  CHECK_THROWS_AS(mgr::load_image((scratch_dir() / "x.bmp").string()), std::runtime_error);
}

TEST_CASE("png alpha is dropped and 16-bit is rejected") {
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  image.width = 2;
  image.height = 1;
  image.format = PNG_FORMAT_RGBA;
  const unsigned char rgba[8] = {10, 20, 30, 255, 40, 50, 60, 255};
  const auto path = (scratch_dir() / "a.png").string();
  REQUIRE(png_image_write_to_file(&image, path.c_str(), 0, rgba, 0, nullptr));
  auto img = mgr::load_image(path).pixels;
  REQUIRE(img.shape() == Shape{1, 3, 1, 2});
  CHECK(img.at(0, 2, 0, 1) * 255.0f == doctest::Approx(60.0f));

  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  image.width = 2;
  image.height = 1;
  image.format = PNG_FORMAT_LINEAR_Y;
  const png_uint_16 deep[2] = {1000, 60000};
  const auto path16 = (scratch_dir() / "d.png").string();
  REQUIRE(png_image_write_to_file(&image, path16.c_str(), 0, deep, 0, nullptr));
  try {
    mgr::load_image(path16);
    FAIL("expected a throw");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()).find("16-bit") != std::string::npos);
  }
}

TEST_CASE("gray conversion and crop") {
  Tensor<float> rgb(Shape{1, 3, 2, 2});
  for (int i = 0; i < 4; ++i) {
    rgb.plane(0, 0)[i] = 1.0f;
    rgb.plane(0, 1)[i] = 0.5f;
    rgb.plane(0, 2)[i] = 0.0f;
  }
  auto g = mgr::to_gray(rgb);
  REQUIRE(g.shape() == Shape{1, 1, 2, 2});
  CHECK(g[0] == doctest::Approx(0.299 + 0.5 * 0.587));
  Tensor<float> t(Shape{1, 1, 4, 5});
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<float>(i);
  auto c = mgr::crop(t, 1, 2, 2, 3);
  CHECK(c.shape() == Shape{1, 1, 2, 3});
  CHECK(c.at(0, 0, 0, 0) == 7.0f);
  CHECK(c.at(0, 0, 1, 2) == 14.0f);
  CHECK_THROWS_AS(mgr::crop(t, 3, 0, 2, 1), std::invalid_argument);
}

TEST_CASE("bundled grayscale test image loads") {
  auto img = mgr::load_image(std::string(MGRDN_TEST_DATA) + "/set12_08.pgm");
  CHECK(img.pixels.shape() == Shape{1, 1, 512, 512});
}

TEST_CASE("git blob hashes") {
  // `printf 'hello\n' | git hash-object --stdin` and `git hash-object /dev/null`
  CHECK(mgr::git_blob_sha1("hello\n") == "ce013625030ba8dba906f756967f9e9ca394464a");
  CHECK(mgr::git_blob_sha1("") == "e69de29bb2d1d6434b8b29ae775ad8c2e48c5391");
}

TEST_CASE("run directories never overwrite") {
  const auto base = std::filesystem::temp_directory_path() / "mgrdn_rundir_test";
  std::filesystem::remove_all(base);
  for (int i = 1; i <= 3; ++i) std::filesystem::remove_all(base.string() + "-" + std::to_string(i));
  CHECK(mgr::create_run_dir(base, mgr::ExistingRunDir::fail) == base);
  CHECK_THROWS_WITH_AS(mgr::create_run_dir(base, mgr::ExistingRunDir::fail), doctest::Contains("already exists"),
                       std::runtime_error);
  CHECK(mgr::create_run_dir(base, mgr::ExistingRunDir::suffix).string() == base.string() + "-1");
  CHECK(mgr::create_run_dir(base, mgr::ExistingRunDir::suffix).string() == base.string() + "-2");

  mgr::RunManifest m;
  m.command = "eval";
  m.seed = 7;
  {
    std::ofstream(base / "in.txt") << "hello\n";
  }
  m.add_input(base / "in.txt");
  m.outputs.push_back("out.csv");
  m.metrics["psnr"] = 30.5;
  m.write(base);
  std::ifstream in(base / "manifest.json");
  auto j = mgr::Json::parse(in);
  CHECK(j["command"] == "eval");
  CHECK(j["seed"] == 7);
  CHECK(j["inputs"][0]["sha1"] == "ce013625030ba8dba906f756967f9e9ca394464a");
  CHECK(j["metrics"]["psnr"] == 30.5);
  for (const auto& d : {base.string(), base.string() + "-1", base.string() + "-2"}) std::filesystem::remove_all(d);
}
