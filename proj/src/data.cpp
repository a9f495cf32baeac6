#include "nmn/data.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace nmn {

namespace {

constexpr std::uint32_t kImageMagic = 0x00000803;
constexpr std::uint32_t kLabelMagic = 0x00000801;

std::vector<std::uint8_t> read_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t be32(const std::vector<std::uint8_t>& b, std::size_t at) {
  return std::uint32_t(b[at]) << 24 | std::uint32_t(b[at + 1]) << 16 | std::uint32_t(b[at + 2]) << 8 |
         std::uint32_t(b[at + 3]);
}

void put_be32(std::ofstream& out, std::uint32_t v) {
  const char b[4] = {char(v >> 24), char(v >> 16), char(v >> 8), char(v)};
  out.write(b, 4);
}

std::string hex(std::uint32_t v) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "0x%08X", v);
  return buf;
}

void expect_magic(const std::vector<std::uint8_t>& b, std::uint32_t want, const std::string& path) {
  if (b.size() < 4) throw DataError(path + ": file too short for an IDX header");
  const std::uint32_t got = be32(b, 0);
  if (got != want) throw DataError(path + ": bad IDX magic " + hex(got) + ", expected " + hex(want));
}

}  // namespace

void Dataset::validate() const {
  if (static_cast<Index>(labels.size()) != inputs.rows()) {
    throw DataError("dataset: " + std::to_string(labels.size()) + " labels for " + std::to_string(inputs.rows()) +
                    " rows");
  }
  for (int l : labels) {
    if (l < 0 || l >= classes) throw DataError("dataset: label " + std::to_string(l) + " out of range");
  }
}

Dataset load_mnist_idx(const std::string& images_path, const std::string& labels_path, const std::string& split) {
  const auto img = read_bytes(images_path);
  const auto lab = read_bytes(labels_path);
  expect_magic(img, kImageMagic, images_path);
  expect_magic(lab, kLabelMagic, labels_path);
  if (img.size() < 16) throw DataError(images_path + ": truncated IDX header");
  if (lab.size() < 8) throw DataError(labels_path + ": truncated IDX header");

  const std::uint32_t n = be32(img, 4), rows = be32(img, 8), cols = be32(img, 12);
  const std::uint32_t nl = be32(lab, 4);
  const std::size_t dim = std::size_t(rows) * cols;
  if (img.size() - 16 < std::size_t(n) * dim) {
    throw DataError(images_path + ": truncated payload, header promises " + std::to_string(n) + " images of " +
                    std::to_string(rows) + "x" + std::to_string(cols));
  }
  if (lab.size() - 8 < nl) throw DataError(labels_path + ": truncated payload");
  if (nl != n) {
    throw DataError("count mismatch: " + std::to_string(n) + " images vs " + std::to_string(nl) + " labels");
  }

  Dataset d;
  d.split = split;
  d.classes = 10;
  d.inputs.resize(n, static_cast<Index>(dim));
  const std::uint8_t* px = img.data() + 16;
  for (std::size_t i = 0; i < std::size_t(n) * dim; ++i) d.inputs.data()[i] = float(px[i]) / 255.0f;
  d.labels.assign(lab.begin() + 8, lab.begin() + 8 + n);
  for (int l : d.labels) d.classes = std::max(d.classes, l + 1);
  return d;
}

void write_idx_images(const std::string& path, std::uint32_t count, std::uint32_t rows, std::uint32_t cols,
                      const std::vector<std::uint8_t>& pixels) {
  if (pixels.size() != std::size_t(count) * rows * cols) throw DataError("write_idx_images: pixel count mismatch");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  put_be32(out, kImageMagic);
  put_be32(out, count);
  put_be32(out, rows);
  put_be32(out, cols);
  out.write(reinterpret_cast<const char*>(pixels.data()), static_cast<std::streamsize>(pixels.size()));
}

void write_idx_labels(const std::string& path, const std::vector<std::uint8_t>& labels) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  put_be32(out, kLabelMagic);
  put_be32(out, static_cast<std::uint32_t>(labels.size()));
  out.write(reinterpret_cast<const char*>(labels.data()), static_cast<std::streamsize>(labels.size()));
}

Dataset xor_dataset() {
  Dataset d;
  d.split = "train";
  d.classes = 2;
  d.inputs.resize(4, 2);
  d.inputs << 0, 0, 0, 1, 1, 0, 1, 1;
  d.labels = {0, 1, 1, 0};
  return d;
}

std::vector<int> CharCorpus::encode(const std::string& text) const {
  std::vector<int> out;
  out.reserve(text.size());
  for (unsigned char c : text) {
    const int id = byte_to_id[c];
    if (id < 0) throw DataError("byte " + std::to_string(int(c)) + " not in vocabulary");
    out.push_back(id);
  }
  return out;
}

std::string CharCorpus::decode(const std::vector<int>& toks) const {
  std::string out;
  out.reserve(toks.size());
  for (int t : toks) {
    if (t < 0 || t >= vocab()) throw std::out_of_range("token id " + std::to_string(t) + " outside vocabulary");
    out.push_back(static_cast<char>(id_to_byte[t]));
  }
  return out;
}

CharCorpus char_tokenize(const std::string& text, double val_fraction) {
  if (val_fraction < 0 || val_fraction >= 1) throw std::invalid_argument("val_fraction must be in [0, 1)");
  CharCorpus c;
  c.byte_to_id.fill(-1);
  std::array<bool, 256> seen{};
  for (unsigned char ch : text) seen[ch] = true;
  for (int b = 0; b < 256; ++b) {
    if (!seen[b]) continue;
    c.byte_to_id[b] = static_cast<int>(c.id_to_byte.size());
    c.id_to_byte.push_back(static_cast<unsigned char>(b));
  }
  c.ids = c.encode(text);
  c.split = c.ids.size() - static_cast<std::size_t>(std::floor(val_fraction * double(c.ids.size())));
  return c;
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

LmBatcher::LmBatcher(const CharCorpus& corpus, Index len, Index batch, std::uint64_t seed, bool validation)
    : corpus_(&corpus), len_(len), batch_(batch), rng_(seed) {
  if (len < 1 || batch < 1) throw std::invalid_argument("lm batches need positive length and batch size");
  begin_ = validation ? corpus.split : 0;
  end_ = validation ? corpus.ids.size() : corpus.split;
  // A window needs len inputs plus one shifted target.
  if (end_ - begin_ < std::size_t(len) + 1) {
    throw DataError(std::string("corpus too small: ") + (validation ? "validation" : "training") + " side has " +
                    std::to_string(end_ - begin_) + " tokens, need " + std::to_string(len + 1));
  }
}

LmBatch LmBatcher::next() {
  LmBatch b;
  const std::uint64_t starts = end_ - begin_ - std::size_t(len_);
  for (Index i = 0; i < batch_; ++i) {
    const std::size_t s = begin_ + rng_.below(starts);
    b.inputs.emplace_back(corpus_->ids.begin() + s, corpus_->ids.begin() + s + len_);
    b.targets.emplace_back(corpus_->ids.begin() + s + 1, corpus_->ids.begin() + s + len_ + 1);
  }
  return b;
}

void write_csv(const std::string& path, const CsvTable& t) {
  if (static_cast<Index>(t.header.size()) != t.values.cols()) throw ShapeError("write_csv: header/column mismatch");
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  out.imbue(std::locale::classic());
  for (std::size_t j = 0; j < t.header.size(); ++j) out << (j ? "," : "") << t.header[j];
  out << '\n' << std::setprecision(17);
  for (Index i = 0; i < t.values.rows(); ++i) {
    for (Index j = 0; j < t.values.cols(); ++j) {
      if (j) out << ',';
      const double v = t.values(i, j);
      if (std::isnan(v)) {
        out << "nan";
      } else {
        out << v;
      }
    }
    out << '\n';
  }
}

CsvTable read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  CsvTable t;
  std::string line;
  if (!std::getline(in, line)) throw DataError(path + ": empty csv");
  std::stringstream hs(line);
  for (std::string cell; std::getline(hs, cell, ',');) t.header.push_back(cell);
  std::vector<double> vals;
  Index rows = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ls(line);
    std::size_t n = 0;
    for (std::string cell; std::getline(ls, cell, ','); ++n) {
      vals.push_back(cell == "nan" ? std::nan("") : std::stod(cell));
    }
    if (n != t.header.size()) throw DataError(path + ": row " + std::to_string(rows + 1) + " has wrong width");
    ++rows;
  }
  t.values = Eigen::Map<MatrixXd>(vals.data(), rows, static_cast<Index>(t.header.size()));
  return t;
}

VectorXd prototype_responses(const MatrixXd& prototypes, ResponseKind kind, const KernelConfig& cfg, double x,
                             double y) {
  if (prototypes.cols() != 2) throw ShapeError("boundary grid needs 2-D prototypes");
  VectorXd p(2);
  p << x, y;
  VectorXd r(prototypes.rows());
  for (Index i = 0; i < prototypes.rows(); ++i) {
    const VectorXd w = prototypes.row(i).transpose();
    r(i) = kind == ResponseKind::yat ? yat(w, p, cfg) : w.dot(p);
  }
  return r;
}

CsvTable emit_boundary_grid(const MatrixXd& prototypes, ResponseKind kind, const KernelConfig& cfg,
                            const GridSpec& g) {
  if (g.resolution < 2) throw std::invalid_argument("grid resolution must be at least 2");
  const Index n = prototypes.rows(), res = g.resolution;
  CsvTable t;
  t.header = {"x", "y"};
  for (Index i = 0; i < n; ++i) t.header.push_back("resp_" + std::to_string(i));
  t.header.push_back("label");
  t.values.resize(res * res, n + 3);
  for (Index iy = 0; iy < res; ++iy) {
    for (Index ix = 0; ix < res; ++ix) {
      const double x = g.xmin + (g.xmax - g.xmin) * double(ix) / double(res - 1);
      const double y = g.ymin + (g.ymax - g.ymin) * double(iy) / double(res - 1);
      const VectorXd r = prototype_responses(prototypes, kind, cfg, x, y);
      Index arg;
      r.maxCoeff(&arg);
      const Index row = iy * res + ix;
      t.values(row, 0) = x;
      t.values(row, 1) = y;
      t.values.row(row).segment(2, n) = r.transpose();
      t.values(row, n + 2) = double(arg);
    }
  }
  return t;
}

std::vector<BoundaryPoint> boundary_points(const CsvTable& grid, const MatrixXd& prototypes, ResponseKind kind,
                                           const KernelConfig& cfg, double tol) {
  const Index total = grid.values.rows();
  const auto res = static_cast<Index>(std::llround(std::sqrt(double(total))));
  if (res * res != total) throw ShapeError("boundary_points: grid is not square");
  const Index label_col = grid.values.cols() - 1;
  std::vector<BoundaryPoint> out;
  auto bisect = [&](Index p, Index q) {
    const int a = int(grid.values(p, label_col)), b = int(grid.values(q, label_col));
    if (a == b) return;
    double x0 = grid.values(p, 0), y0 = grid.values(p, 1), x1 = grid.values(q, 0), y1 = grid.values(q, 1);
    auto diff = [&](double x, double y) {
      const VectorXd r = prototype_responses(prototypes, kind, cfg, x, y);
      return r(a) - r(b);
    };
    double f0 = diff(x0, y0);
    // An exact root at either end (e.g. the origin, where every response is 0) is the boundary point.
    if (f0 == 0.0) {
      x1 = x0;
      y1 = y0;
    } else if (diff(x1, y1) == 0.0) {
      x0 = x1;
      y0 = y1;
    }
    for (int it = 0; it < 200 && std::hypot(x1 - x0, y1 - y0) > tol; ++it) {
      const double xm = 0.5 * (x0 + x1), ym = 0.5 * (y0 + y1);
      const double fm = diff(xm, ym);
      if (fm == 0.0) {
        x0 = x1 = xm;
        y0 = y1 = ym;
      } else if ((fm > 0) == (f0 > 0)) {
        x0 = xm;
        y0 = ym;
        f0 = fm;
      } else {
        x1 = xm;
        y1 = ym;
      }
    }
    out.push_back({0.5 * (x0 + x1), 0.5 * (y0 + y1), a, b});
  };
  for (Index iy = 0; iy < res; ++iy) {
    for (Index ix = 0; ix < res; ++ix) {
      const Index row = iy * res + ix;
      if (ix + 1 < res) bisect(row, row + 1);
      if (iy + 1 < res) bisect(row, row + res);
    }
  }
  return out;
}

}  // namespace nmn
