#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "nmn/data.hpp"

using namespace nmn;
using Eigen::Matrix2d;
using Eigen::RowVectorXd;
using Eigen::Vector2d;
namespace fs = std::filesystem;

namespace {

std::string temp_path(const std::string& name) { return (fs::temp_directory_path() / ("nmn_test_" + name)).string(); }

std::vector<char> file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_bytes(const std::string& path, const std::vector<unsigned char>& bytes) {
  std::ofstream out(path, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
}

}  // namespace

TEST_CASE("hand-built 2x2 IDX fixture") {
  const std::string img = temp_path("fixture_images"), lbl = temp_path("fixture_labels");
  // Byte-for-byte IDX files, independent of the writer.
  write_bytes(img, {0, 0, 8, 3, 0, 0, 0, 1, 0, 0, 0, 2, 0, 0, 0, 2, 0, 51, 204, 255});
  write_bytes(lbl, {0, 0, 8, 1, 0, 0, 0, 1, 7});
  const Dataset ds = load_mnist_idx(img, lbl, "test");
  CHECK(ds.size() == 1);
  CHECK(ds.dim() == 4);
  CHECK(ds.labels == std::vector<int>{7});
  CHECK(ds.split == "test");
  CHECK(ds.inputs(0, 0) == 0.0f);
  CHECK(ds.inputs(0, 1) == doctest::Approx(0.2));
  CHECK(ds.inputs(0, 2) == doctest::Approx(0.8));
  CHECK(ds.inputs(0, 3) == 1.0f);
}

TEST_CASE("IDX writer round-trips bit-exactly") {
  const std::string img = temp_path("rt_images"), lbl = temp_path("rt_labels");
  std::vector<std::uint8_t> pixels(3 * 4 * 5);
  std::iota(pixels.begin(), pixels.end(), std::uint8_t(10));
  write_idx_images(img, 3, 4, 5, pixels);
  write_idx_labels(lbl, {1, 2, 9});
  const Dataset ds = load_mnist_idx(img, lbl);
  REQUIRE(ds.size() == 3);
  REQUIRE(ds.dim() == 20);
  std::vector<std::uint8_t> back;
  for (Index i = 0; i < ds.size(); ++i) {
    for (Index j = 0; j < ds.dim(); ++j) back.push_back(std::uint8_t(std::lround(ds.inputs(i, j) * 255.0f)));
  }
  CHECK(back == pixels);

  // Rewriting the parsed data reproduces the same files.
  const std::string img2 = temp_path("rt_images2"), lbl2 = temp_path("rt_labels2");
  write_idx_images(img2, 3, 4, 5, back);
  write_idx_labels(lbl2, {std::uint8_t(ds.labels[0]), std::uint8_t(ds.labels[1]), std::uint8_t(ds.labels[2])});
  CHECK(file_bytes(img) == file_bytes(img2));
  CHECK(file_bytes(lbl) == file_bytes(lbl2));
}

TEST_CASE("IDX errors") {
  const std::string img = temp_path("err_images"), lbl = temp_path("err_labels");
  write_idx_images(img, 2, 2, 2, std::vector<std::uint8_t>(8, 1));
  write_idx_labels(lbl, {0, 1});

  SUBCASE("wrong magic names the expected value") {
    const std::string bad = temp_path("bad_magic");
    write_bytes(bad, {0, 0, 8, 1, 0, 0, 0, 1, 0, 0, 0, 2, 0, 0, 0, 2, 0, 0, 0, 0});
    try {
      load_mnist_idx(bad, lbl);
      FAIL("expected a parse error");
    } catch (const DataError& e) {
      CHECK(std::string(e.what()).find("0x00000803") != std::string::npos);
    }
  }
  SUBCASE("count mismatch") {
    const std::string three = temp_path("three_labels");
    write_idx_labels(three, {0, 1, 2});
    try {
      load_mnist_idx(img, three);
      FAIL("expected a mismatch error");
    } catch (const DataError& e) {
      CHECK(std::string(e.what()).find("mismatch") != std::string::npos);
    }
  }
  SUBCASE("truncated payload") {
    auto bytes = file_bytes(img);
    bytes.pop_back();
    const std::string cut = temp_path("truncated");
    write_bytes(cut, std::vector<unsigned char>(bytes.begin(), bytes.end()));
    CHECK_THROWS_AS(load_mnist_idx(cut, lbl), DataError);
  }
  SUBCASE("missing file") { CHECK_THROWS_AS(load_mnist_idx(temp_path("does_not_exist"), lbl), DataError); }
}

TEST_CASE("xor dataset") {
  const Dataset ds = xor_dataset();
  REQUIRE(ds.size() == 4);
  CHECK(ds.dim() == 2);
  CHECK(ds.labels == std::vector<int>{0, 1, 1, 0});
  CHECK(std::accumulate(ds.labels.begin(), ds.labels.end(), 0) == 2);
  const float expect[4][2] = {{0, 0}, {0, 1}, {1, 0}, {1, 1}};
  for (Index i = 0; i < 4; ++i) {
    CHECK(ds.inputs(i, 0) == expect[i][0]);
    CHECK(ds.inputs(i, 1) == expect[i][1]);
  }
  CHECK_NOTHROW(ds.validate());
}

TEST_CASE("dataset validation") {
  Dataset ds = xor_dataset();
  ds.labels[1] = 5;
  CHECK_THROWS_AS(ds.validate(), DataError);
  ds = xor_dataset();
  ds.labels.pop_back();
  CHECK_THROWS_AS(ds.validate(), DataError);
}

TEST_CASE("char corpus round-trip and split") {
  const std::string text = "In the beginning God created the heaven and the earth.\nAnd the earth was without form.";
  const CharCorpus c = char_tokenize(text, 0.25);
  CHECK(c.decode(c.ids) == text);
  CHECK(c.decode(c.encode("the earth")) == "the earth");
  CHECK(c.ids.size() == text.size());
  CHECK(c.split == text.size() - std::size_t(std::floor(0.25 * double(text.size()))));
  // Ids are dense and sorted by byte value.
  for (int i = 1; i < c.vocab(); ++i) CHECK(c.id_to_byte[std::size_t(i - 1)] < c.id_to_byte[std::size_t(i)]);
  CHECK_THROWS(c.encode("Z"));
}

TEST_CASE("lm batches: shifted targets and deterministic stream") {
  std::string text;
  for (int i = 0; i < 50; ++i) text += "abcdefghij klmnop\n";
  const CharCorpus c = char_tokenize(text);
  LmBatcher a(c, 16, 4, 42), b(c, 16, 4, 42), other(c, 16, 4, 43);
  bool differs = false;
  for (int k = 0; k < 5; ++k) {
    const LmBatch x = a.next(), y = b.next(), z = other.next();
    CHECK(x.inputs == y.inputs);
    CHECK(x.targets == y.targets);
    differs = differs || x.inputs != z.inputs;
    REQUIRE(x.inputs.size() == 4);
    for (std::size_t r = 0; r < x.inputs.size(); ++r) {
      REQUIRE(x.inputs[r].size() == 16);
      for (std::size_t t = 0; t + 1 < 16; ++t) CHECK(x.targets[r][t] == x.inputs[r][t + 1]);
    }
  }
  CHECK(differs);

  // Validation windows come from the held-out tail only.
  LmBatcher val(c, 8, 16, 1, true);
  const LmBatch v = val.next();
  for (const auto& row : v.inputs) {
    const auto it = std::search(c.ids.begin() + std::ptrdiff_t(c.split), c.ids.end(), row.begin(), row.end());
    CHECK(it != c.ids.end());
  }
  CHECK_THROWS_AS(LmBatcher(c, Index(c.ids.size()), 1, 0), DataError);
}

TEST_CASE("csv round-trip at 1e-12") {
  Rng rng(5);
  CsvTable t{{"a", "b", "c"}, gaussian_fill(rng, 7, 3, 1e3)};
  t.values(2, 1) = 1e-300;
  t.values(3, 2) = -0.1;
  t.values(4, 0) = NAN;
  const std::string path = temp_path("table.csv");
  write_csv(path, t);
  const CsvTable back = read_csv(path);
  CHECK(back.header == t.header);
  REQUIRE(back.values.rows() == 7);
  REQUIRE(back.values.cols() == 3);
  for (Index i = 0; i < 7; ++i) {
    for (Index j = 0; j < 3; ++j) {
      const double want = t.values(i, j), got = back.values(i, j);
      if (std::isnan(want)) {
        CHECK(std::isnan(got));
      } else {
        CHECK(std::abs(got - want) <= 1e-12 * std::max(1.0, std::abs(want)));
      }
    }
  }
  CHECK_THROWS_AS(write_csv(path, CsvTable{{"a"}, MatrixXd::Zero(1, 2)}), ShapeError);
}

TEST_CASE("boundary grid: orthogonal prototypes label the axes") {
  MatrixXd protos(2, 2);
  protos << 1, 0, 0, 1;
  const KernelConfig cfg{1e-3};
  GridSpec g;
  g.resolution = 21;
  const CsvTable grid = emit_boundary_grid(protos, ResponseKind::yat, cfg, g);
  REQUIRE(grid.header == std::vector<std::string>{"x", "y", "resp_0", "resp_1", "label"});
  REQUIRE(grid.values.rows() == 21 * 21);
  int on_axes = 0;
  for (Index r = 0; r < grid.values.rows(); ++r) {
    const double x = grid.values(r, 0), y = grid.values(r, 1);
    if (x == 0.0 && y != 0.0) {
      CHECK(grid.values(r, 2) == 0.0);
      CHECK(grid.values(r, 4) == 1);
      ++on_axes;
    }
    if (y == 0.0 && x != 0.0) {
      CHECK(grid.values(r, 3) == 0.0);
      CHECK(grid.values(r, 4) == 0);
      ++on_axes;
    }
  }
  CHECK(on_axes == 40);
}

TEST_CASE("boundary points satisfy the quartic surface equation") {
  Rng rng(11);
  const MatrixXd protos = gaussian_fill(rng, 3, 2, 1.0);
  const double eps = 0.05;
  const KernelConfig cfg{eps};
  GridSpec g;
  g.resolution = 101;
  const double cell = (g.xmax - g.xmin) / double(g.resolution - 1);
  const CsvTable grid = emit_boundary_grid(protos, ResponseKind::yat, cfg, g);
  const auto pts = boundary_points(grid, protos, ResponseKind::yat, cfg);
  REQUIRE(pts.size() > 20);
  double worst = 0, worst_scaled = 0;
  for (const auto& p : pts) {
    Vector2d x(p.x, p.y);
    const Vector2d wa = protos.row(p.a).transpose(), wb = protos.row(p.b).transpose();
    // (w_a·x)²(‖w_b−x‖²+ε) − (w_b·x)²(‖w_a−x‖²+ε) vanishes on the a/b boundary.
    auto quartic = [&](const Vector2d& z) {
      return std::pow(wa.dot(z), 2) * ((wb - z).squaredNorm() + eps) -
             std::pow(wb.dot(z), 2) * ((wa - z).squaredNorm() + eps);
    };
    const double q = quartic(x);
    // Bound by the surface's change over one grid cell.
    double slope = 0;
    for (const Vector2d dir : {Vector2d(1, 0), Vector2d(0, 1)}) {
      slope += std::abs(quartic(x + 1e-6 * dir) - quartic(x - 1e-6 * dir)) / 2e-6;
    }
    worst = std::max(worst, std::abs(q));
    worst_scaled = std::max(worst_scaled, std::abs(q) / (slope * cell + 1e-300));
  }
  CHECK(worst_scaled < 1.0);
  CHECK(worst < 1e-9);
}

TEST_CASE("linear prototypes give a straight boundary") {
  MatrixXd protos(2, 2);
  protos << 1.0, 0.3, -0.4, 0.9;
  GridSpec g;
  g.resolution = 81;
  const CsvTable grid = emit_boundary_grid(protos, ResponseKind::linear, KernelConfig{}, g);
  const auto pts = boundary_points(grid, protos, ResponseKind::linear, KernelConfig{});
  REQUIRE(pts.size() > 10);
  // Total least squares line through the boundary points.
  MatrixXd p(Index(pts.size()), 2);
  for (std::size_t i = 0; i < pts.size(); ++i) p.row(Index(i)) << pts[i].x, pts[i].y;
  const RowVectorXd mean = p.colwise().mean();
  const MatrixXd centered = p.rowwise() - mean;
  Eigen::SelfAdjointEigenSolver<Matrix2d> es(centered.transpose() * centered);
  const Vector2d normal = es.eigenvectors().col(0);
  const double residual = (centered * normal).cwiseAbs().maxCoeff();
  CHECK(residual < 1e-6);
  // The boundary is the hyperplane (w_0 − w_1)·x = 0.
  const Vector2d diff = (protos.row(0) - protos.row(1)).transpose();
  CHECK(std::abs(std::abs(normal.dot(diff.normalized())) - 1.0) < 1e-9);
}
