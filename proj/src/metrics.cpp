#include "nmn/metrics.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace nmn {

namespace {

const char* kHeader = "step,split,loss,accuracy,prototype_norm_mean,alpha";

void put(std::ostream& os, double v) {
  if (std::isnan(v)) {
    os << "nan";
  } else {
    os << v;
  }
}

double parse(const std::string& s) { return s == "nan" ? NAN : std::stod(s); }

}  // namespace

std::vector<MetricRow> MetricsLog::split(const std::string& name) const {
  std::vector<MetricRow> out;
  for (const auto& r : rows_) {
    if (r.split == name) out.push_back(r);
  }
  return out;
}

std::string MetricsLog::to_csv() const {
  std::ostringstream os;
  os.imbue(std::locale::classic());
  os.precision(17);
  os << kHeader << '\n';
  for (const auto& r : rows_) {
    os << r.step << ',' << r.split << ',';
    put(os, r.loss);
    os << ',';
    put(os, r.accuracy);
    os << ',';
    put(os, r.prototype_norm_mean);
    os << ',';
    put(os, r.alpha);
    os << '\n';
  }
  return os.str();
}

void MetricsLog::write(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << to_csv();
}

MetricsLog MetricsLog::read(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::string line;
  std::getline(in, line);
  if (line != kHeader) throw std::runtime_error(path + ": unexpected metrics header");
  MetricsLog log;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell[6];
    for (auto& c : cell) std::getline(ss, c, ',');
    log.add({std::stol(cell[0]), cell[1], parse(cell[2]), parse(cell[3]), parse(cell[4]), parse(cell[5])});
  }
  return log;
}

}  // namespace nmn
