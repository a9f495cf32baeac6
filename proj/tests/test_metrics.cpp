#include "doctest.h"

#include <cmath>
#include <filesystem>

#include "nmn/metrics.hpp"

using namespace nmn;

TEST_CASE("metrics csv layout") {
  MetricsLog log;
  log.add({0, "train", 2.5, 0.25, NAN, NAN});
  log.add({10, "test", 1.0, 0.5, 3.0, 1.5});
  const std::string csv = log.to_csv();
  CHECK(csv.rfind("step,split,loss,accuracy,prototype_norm_mean,alpha\n", 0) == 0);
  CHECK(csv.find("0,train,2.5,0.25,nan,nan\n") != std::string::npos);
  CHECK(csv.find("10,test,1,0.5,3,1.5\n") != std::string::npos);
  CHECK(std::stod(csv.substr(csv.rfind(",") + 1)) == 1.5);
}

TEST_CASE("metrics round-trip and split filter") {
  MetricsLog log;
  for (long s = 0; s < 5; ++s) log.add({s, s % 2 ? "val" : "train", 1.0 / double(s + 3), NAN, 0.1 * double(s), NAN});
  const std::string path = (std::filesystem::temp_directory_path() / "nmn_test_metrics.csv").string();
  log.write(path);
  const MetricsLog back = MetricsLog::read(path);
  REQUIRE(back.rows().size() == 5);
  for (std::size_t i = 0; i < 5; ++i) {
    const auto &a = log.rows()[i], &b = back.rows()[i];
    CHECK(a.step == b.step);
    CHECK(a.split == b.split);
    CHECK(std::abs(a.loss - b.loss) < 1e-12);
    CHECK(std::isnan(b.accuracy));
    CHECK(std::abs(a.prototype_norm_mean - b.prototype_norm_mean) < 1e-12);
  }
  CHECK(back.split("val").size() == 2);
  CHECK(back.split("train").size() == 3);
  CHECK(back.split("test").empty());
  CHECK(back.to_csv() == log.to_csv());
}
