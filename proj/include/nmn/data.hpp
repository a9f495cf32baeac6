#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "nmn/kernel.hpp"

namespace nmn {

struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Float storage keeps the 60k×784 MNIST matrix at ~190 MB.
struct Dataset {
  MatrixXf inputs;
  std::vector<int> labels;
  std::string split;
  int classes = 0;

  Index size() const { return inputs.rows(); }
  Index dim() const { return inputs.cols(); }
  void validate() const;
};

// IDX (big-endian) images 0x00000803 and labels 0x00000801.
Dataset load_mnist_idx(const std::string& images_path, const std::string& labels_path,
                       const std::string& split = "train");
void write_idx_images(const std::string& path, std::uint32_t count, std::uint32_t rows, std::uint32_t cols,
                      const std::vector<std::uint8_t>& pixels);
void write_idx_labels(const std::string& path, const std::vector<std::uint8_t>& labels);

Dataset xor_dataset();

/// Byte-level vocabulary built from the bytes present in the text.
struct CharCorpus {
  std::array<int, 256> byte_to_id{};
  std::vector<unsigned char> id_to_byte;
  std::vector<int> ids;
  std::size_t split = 0;  // ids[0, split) train, ids[split, end) validation

  int vocab() const { return static_cast<int>(id_to_byte.size()); }
  std::vector<int> encode(const std::string& text) const;
  std::string decode(const std::vector<int>& ids) const;
};

CharCorpus char_tokenize(const std::string& text, double val_fraction = 0.1);
std::string read_text_file(const std::string& path);

struct LmBatch {
  std::vector<std::vector<int>> inputs, targets;
};

/// Random windows of length `len` from one side of the split; targets are
/// the inputs shifted by one.
class LmBatcher {
 public:
  LmBatcher(const CharCorpus& corpus, Index len, Index batch, std::uint64_t seed, bool validation = false);
  LmBatch next();

 private:
  const CharCorpus* corpus_;
  Index len_, batch_;
  std::size_t begin_, end_;
  Rng rng_;
};

struct CsvTable {
  std::vector<std::string> header;
  MatrixXd values;
};

void write_csv(const std::string& path, const CsvTable& table);
CsvTable read_csv(const std::string& path);

enum class ResponseKind { yat, linear };

struct GridSpec {
  double xmin = -2, xmax = 2, ymin = -2, ymax = 2;
  Index resolution = 101;  // points per axis
};

/// Per-class responses of 2-D prototypes at a point.
VectorXd prototype_responses(const MatrixXd& prototypes, ResponseKind kind, const KernelConfig& cfg, double x,
                             double y);

/// Columns: x, y, resp_0 .. resp_{n-1}, label (argmax).
CsvTable emit_boundary_grid(const MatrixXd& prototypes, ResponseKind kind, const KernelConfig& cfg,
                            const GridSpec& grid);

struct BoundaryPoint {
  double x, y;
  int a, b;  // the two classes on either side
};

/// Locates every label change between horizontally or vertically adjacent grid
/// points and bisects the response difference along that segment.
std::vector<BoundaryPoint> boundary_points(const CsvTable& grid, const MatrixXd& prototypes, ResponseKind kind,
                                           const KernelConfig& cfg, double tol = 1e-13);

}  // namespace nmn
