#include <CLI11.hpp>

#include <Eigen/Core>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>

#include "nmn/bench.hpp"
#include "nmn/data.hpp"
#include "nmn/train.hpp"
#include "nmn/verify.hpp"

namespace fs = std::filesystem;
using namespace nmn;

namespace {

constexpr int kPass = 0, kFail = 1, kUsage = 2;

struct Common {
  std::uint64_t seed = 0;
  std::string out = "out";
  int threads = 1;
};

/// Resolved settings, echoed as key=value lines next to the outputs.
class ConfigEcho {
 public:
  template <typename T>
  void set(const std::string& key, const T& value) {
    std::ostringstream os;
    os << std::setprecision(17) << value;
    values_[key] = os.str();
  }
  void write(const std::string& path) const {
    std::ofstream f(path);
    if (!f) throw DataError("cannot write " + path);
    for (const auto& [k, v] : values_) f << k << '=' << v << '\n';
  }

 private:
  std::map<std::string, std::string> values_;
};

std::string prepare_out(const Common& c) {
  fs::create_directories(c.out);
  Eigen::setNbThreads(c.threads);
  return c.out;
}

void echo_common(ConfigEcho& e, const std::string& cmd, const Common& c) {
  e.set("command", cmd);
  e.set("seed", c.seed);
  e.set("out", c.out);
  e.set("threads", c.threads);
}

const char* status(bool ok) { return ok ? "PASS" : "FAIL"; }

// ---------------------------------------------------------------- verify

struct VerifyOpts {
  double tolerance_scale = 1.0;
};

int cmd_verify(const Common& c, const VerifyOpts& o) {
  const std::string dir = prepare_out(c);
  ProbeConfig cfg;
  cfg.seed = c.seed;
  cfg.tolerance_scale = o.tolerance_scale;
  ConfigEcho echo;
  echo_common(echo, "verify", c);
  echo.set("tolerance_scale", o.tolerance_scale);
  echo.write(dir + "/verify_config.txt");

  const auto reports = run_all(cfg);
  std::ofstream jsonl(dir + "/verify.jsonl");
  bool all = true;
  for (const auto& r : reports) {
    jsonl << r.to_json_line() << '\n';
    std::cout << std::left << std::setw(22) << r.probe << ' ' << status(r.passed) << "  measured=" << r.measured
              << " bound=" << r.bound << "  " << r.detail << '\n';
    all = all && r.passed;
  }
  std::cout << (all ? "all probes passed" : "probe failures") << "; report " << dir << "/verify.jsonl\n";
  return all ? kPass : kFail;
}

// ---------------------------------------------------------------- xor

struct XorOpts {
  double eps = 0.01;
  int steps = 500;
};

int cmd_xor(const Common& c, const XorOpts& o) {
  const std::string dir = prepare_out(c);
  ConfigEcho echo;
  echo_common(echo, "xor", c);
  echo.set("eps", o.eps);
  echo.set("steps", o.steps);
  echo.write(dir + "/xor_config.txt");

  ProbeConfig cfg;
  cfg.seed = c.seed;
  cfg.xor_eps = o.eps;
  cfg.xor_max_steps = o.steps;
  const ProbeReport cert = xor_certificate(cfg);

  const Dataset d = xor_dataset();
  const KernelConfig kc{o.eps};
  VectorXd w(2);
  w << 1, -1;
  CsvTable t{{"x1", "x2", "label", "dot", "yat"}, MatrixXd(4, 5)};
  std::cout << "w = [1, -1], eps = " << o.eps << "\n  x        w.x   yat\n";
  for (Index i = 0; i < 4; ++i) {
    const VectorXd x = d.inputs.row(i).cast<double>().transpose();
    const double v = yat(w, x, kc);
    t.values.row(i) << x(0), x(1), d.labels[std::size_t(i)], w.dot(x), v;
    std::cout << "  (" << x(0) << "," << x(1) << ")  " << std::setw(4) << w.dot(x) << "  " << v << '\n';
  }
  write_csv(dir + "/xor_table.csv", t);

  // Decision surface of the golden unit over [-0.5, 1.5]².
  GridSpec g{-0.5, 1.5, -0.5, 1.5, 81};
  write_csv(dir + "/xor_grid.csv", emit_boundary_grid(MatrixXd(w.transpose()), ResponseKind::yat, kc, g));

  std::cout << cert.detail << '\n' << "xor certificate " << status(cert.passed) << '\n';
  std::ofstream(dir + "/xor.jsonl") << cert.to_json_line() << '\n';
  return cert.passed ? kPass : kFail;
}

// ---------------------------------------------------------------- mnist

struct MnistOpts {
  std::string images, labels, test_images, labels_test;
  std::string dir;
  std::string head = "both";
  std::string dtype = "float";
  int epochs = 5;
  double lr = 1e-3;
  double eps = 0;          // 0: per-head default
  double init_sigma = 0;   // 0: per-head default
  Index batch = 128;
};

CsvTable prototype_table(const MatrixXd& protos) {
  CsvTable t;
  t.header.push_back("class");
  for (Index j = 0; j < protos.cols(); ++j) t.header.push_back("px" + std::to_string(j));
  t.values.resize(protos.rows(), protos.cols() + 1);
  for (Index i = 0; i < protos.rows(); ++i) {
    t.values(i, 0) = double(i);
    t.values.row(i).tail(protos.cols()) = protos.row(i);
  }
  return t;
}

int cmd_mnist(const Common& c, MnistOpts o) {
  if (!o.dir.empty()) {
    const auto at = [&](const char* name) { return (fs::path(o.dir) / name).string(); };
    if (o.images.empty()) o.images = at("train-images-idx3-ubyte");
    if (o.labels.empty()) o.labels = at("train-labels-idx1-ubyte");
    if (o.test_images.empty()) o.test_images = at("t10k-images-idx3-ubyte");
    if (o.labels_test.empty()) o.labels_test = at("t10k-labels-idx1-ubyte");
  }
  if (o.images.empty() || o.labels.empty() || o.test_images.empty() || o.labels_test.empty()) {
    std::cerr << "mnist needs --mnist-dir or all of --mnist-images, --mnist-labels, --mnist-test-images, "
                 "--mnist-test-labels\n";
    return kUsage;
  }
  const std::string dir = prepare_out(c);
  const Dataset train = load_mnist_idx(o.images, o.labels, "train");
  const Dataset test = load_mnist_idx(o.test_images, o.labels_test, "test");

  ConfigEcho echo;
  echo_common(echo, "mnist", c);
  echo.set("mnist_images", o.images);
  echo.set("mnist_labels", o.labels);
  echo.set("mnist_test_images", o.test_images);
  echo.set("mnist_test_labels", o.labels_test);
  echo.set("head", o.head);
  echo.set("dtype", o.dtype);
  echo.set("epochs", o.epochs);
  echo.set("lr", o.lr);
  echo.set("batch", o.batch);

  std::vector<HeadKind> heads;
  if (o.head == "yat" || o.head == "both") heads.push_back(HeadKind::yat);
  if (o.head == "linear" || o.head == "both") heads.push_back(HeadKind::linear);

  bool ok = true;
  CsvTable summary{{"head_is_yat", "test_accuracy", "inverted_accuracy", "initial_norm", "final_norm", "norm_change", "alpha",
                    "eps", "init_sigma"},
                   MatrixXd(Index(heads.size()), 9)};
  for (std::size_t h = 0; h < heads.size(); ++h) {
    const HeadKind kind = heads[h];
    const std::string name = kind == HeadKind::yat ? "yat" : "linear";
    ClassifierConfig cfg = mnist_defaults(kind);
    cfg.epochs = o.epochs;
    cfg.lr = o.lr;
    cfg.batch = o.batch;
    cfg.seed = c.seed;
    if (o.eps > 0) cfg.kernel = KernelConfig{o.eps};
    if (o.init_sigma > 0) cfg.init_sigma = o.init_sigma;
    const ClassifierReport r = o.dtype == "double" ? train_classifier<double>(kind, train, test, cfg)
                                                   : train_classifier<float>(kind, train, test, cfg);
    echo.set(name + ".eps", r.eps);
    echo.set(name + ".init_sigma", r.init_sigma);

    r.log.write(dir + "/mnist_" + name + "_metrics.csv");
    write_csv(dir + "/mnist_" + name + "_prototypes.csv", prototype_table(r.prototypes));
    write_csv(dir + "/mnist_" + name + "_initial_prototypes.csv", prototype_table(r.initial_prototypes));
    summary.values.row(Index(h)) << double(kind == HeadKind::yat), r.test_accuracy, r.inversion.inverted,
        r.initial_norms.mean(), r.final_norms.mean(), r.norm_change, r.alpha, r.eps, r.init_sigma;

    std::cout << name << ": test " << 100 * r.test_accuracy << "%  inverted " << 100 * r.inversion.inverted
              << "%  norm " << r.initial_norms.mean() << " -> " << r.final_norms.mean() << " ("
              << 100 * r.norm_change << "%)";
    if (kind == HeadKind::yat) std::cout << "  alpha " << r.alpha;
    std::cout << '\n';
    if (kind == HeadKind::yat) {
      ok = ok && r.test_accuracy >= 0.91 && r.inversion.inverted >= 0.80 && r.norm_change <= 0.02 && r.alpha > 1;
    } else {
      ok = ok && r.test_accuracy >= 0.905 && r.inversion.inverted <= 0.05 && r.norm_change > 0;
    }
  }
  write_csv(dir + "/mnist_summary.csv", summary);
  echo.write(dir + "/mnist_config.txt");
  std::cout << "mnist gates " << status(ok) << '\n';
  return ok ? kPass : kFail;
}

// ---------------------------------------------------------------- lm

struct LmOpts {
  std::string corpus = "data/kjv_excerpt.txt";
  std::string kind = "aether";
  std::string dtype = "float";
  LmConfig cfg;
};

int cmd_lm(const Common& c, LmOpts o) {
  const std::string dir = prepare_out(c);
  o.cfg.kind = parse_lm_kind(o.kind);
  o.cfg.seed = c.seed;
  const CharCorpus corpus = char_tokenize(read_text_file(o.corpus));

  ConfigEcho echo;
  echo_common(echo, "lm", c);
  echo.set("corpus", o.corpus);
  echo.set("kind", o.kind);
  echo.set("dtype", o.dtype);
  echo.set("vocab", corpus.vocab());
  echo.set("dim", o.cfg.dim);
  echo.set("heads", o.cfg.heads);
  echo.set("layers", o.cfg.layers);
  echo.set("len", o.cfg.len);
  echo.set("batch", o.cfg.batch);
  echo.set("steps", o.cfg.steps);
  echo.set("lr", o.cfg.lr);
  echo.set("eps", o.cfg.eps);
  echo.set("eval_every", o.cfg.eval_every);
  echo.set("eval_batches", o.cfg.eval_batches);
  echo.write(dir + "/lm_" + o.kind + "_config.txt");

  const LmReport r = o.dtype == "double" ? train_lm<double>(corpus, o.cfg) : train_lm<float>(corpus, o.cfg);
  r.log.write(dir + "/lm_" + o.kind + "_curves.csv");

  const double reduction = 1.0 - r.final_val_loss / r.ln_vocab;
  std::cout << o.kind << ": ln V " << r.ln_vocab << "  val " << r.initial_val_loss << " -> " << r.final_val_loss
            << " (" << 100 * reduction << "% below ln V)  steps " << r.steps_run << "  NaN/Inf events "
            << r.nan_events << "  norm layers " << r.norm_count << (r.diverged ? "  DIVERGED" : "") << '\n';
  if (o.cfg.kind == LmKind::aether) {
    const bool ok = reduction >= 0.30 && r.nan_events == 0 && r.norm_count == 0;
    std::cout << "aether gates " << status(ok) << '\n';
    return ok ? kPass : kFail;
  }
  return kPass;
}

// ---------------------------------------------------------------- bench

struct BenchOpts {
  Index batch = 128, units = 512, dim = 512;
  int repeats = 5;
};

int cmd_bench(const Common& c, const BenchOpts& o) {
  const std::string dir = prepare_out(c);
  ConfigEcho echo;
  echo_common(echo, "bench", c);
  echo.set("batch", o.batch);
  echo.set("units", o.units);
  echo.set("dim", o.dim);
  echo.set("repeats", o.repeats);
  echo.write(dir + "/bench_config.txt");

  std::cout << "per-neuron FLOPs\n";
  CsvTable flops{{"d", "linear_relu", "linear_gelu", "yat_naive", "yat_optimized", "ratio_vs_relu", "ratio_vs_gelu"},
                 MatrixXd(2, 7)};
  Index row = 0;
  for (Index d : {o.dim, Index(768)}) {
    const auto f = neuron_flops(d);
    flops.values.row(row++) << double(d), f.linear_relu, f.linear_gelu, f.yat_naive, f.yat_optimized,
        f.yat_optimized / f.linear_relu, f.yat_optimized / f.linear_gelu;
    std::cout << "  d=" << d << "  linear+relu " << f.linear_relu << "  linear+gelu " << f.linear_gelu
              << "  yat naive " << f.yat_naive << "  yat optimized " << f.yat_optimized
              << "  (4d+4)/(2d+1) = " << f.yat_optimized / f.linear_relu
              << "  (4d+4)/(2d+15) = " << f.yat_optimized / f.linear_gelu << '\n';
  }
  write_csv(dir + "/bench_flops.csv", flops);

  CsvTable timing{{"axis_index", "B", "n", "d", "yat_seconds", "gelu_seconds", "time_ratio", "yat_flops",
                   "linear_relu_flops", "yat_transient_bytes", "gelu_transient_bytes"},
                  MatrixXd(9, 11)};
  row = 0;
  std::cout << "wall clock (best of " << o.repeats << ")\n";
  for (char axis : {'B', 'n', 'd'}) {
    const auto s = scaling_sweep(axis, o.batch, o.units, o.dim, o.repeats, c.seed);
    for (const auto& p : s.points) {
      timing.values.row(row++) << double(axis == 'B' ? 0 : axis == 'n' ? 1 : 2), double(p.batch), double(p.units),
          double(p.dim), p.yat_seconds, p.gelu_seconds, p.time_ratio, p.yat_flops, p.linear_relu_flops,
          double(p.yat_transient_bytes), double(p.gelu_transient_bytes);
      std::cout << "  B=" << p.batch << " n=" << p.units << " d=" << p.dim << "  yat " << p.yat_seconds * 1e3
                << " ms  gemm+gelu " << p.gelu_seconds * 1e3 << " ms  ratio " << p.time_ratio << "  buffers "
                << p.yat_transient_bytes << " / " << p.gelu_transient_bytes << " bytes\n";
    }
    std::cout << "  4x " << axis << " -> time x" << s.growth << (s.linear ? " (linear within 30%)" : " (NOT linear)")
              << '\n';
  }
  write_csv(dir + "/bench_timing.csv", timing);
  return kPass;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Yat-product kernels, NMN layers and attention: probes, experiments and benchmarks"};
  app.require_subcommand(1);
  Common common;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--seed", common.seed, "Random seed")->capture_default_str();
    sub->add_option("--out", common.out, "Output directory")->capture_default_str();
    sub->add_option("--threads", common.threads, "Upper bound on internal threads")
        ->check(CLI::PositiveNumber)
        ->capture_default_str();
  };

  VerifyOpts vo;
  auto* verify = app.add_subcommand("verify", "Run every kernel property probe");
  add_common(verify);
  verify->add_option("--tolerance-scale", vo.tolerance_scale, "Multiplier on every pass threshold")
      ->capture_default_str();

  XorOpts xo;
  auto* xr = app.add_subcommand("xor", "XOR table for w=[1,-1] and a unit trained from scratch");
  add_common(xr);
  xr->add_option("--eps", xo.eps, "Kernel epsilon")->check(CLI::PositiveNumber)->capture_default_str();
  xr->add_option("--steps", xo.steps, "Training step budget")->check(CLI::PositiveNumber)->capture_default_str();

  MnistOpts mo;
  auto* mnist = app.add_subcommand("mnist", "10-prototype classifier on MNIST (yat and linear heads)");
  add_common(mnist);
  mnist->add_option("--mnist-dir", mo.dir, "Directory with the four standard IDX files");
  mnist->add_option("--mnist-images", mo.images, "Training images (IDX)");
  mnist->add_option("--mnist-labels", mo.labels, "Training labels (IDX)");
  mnist->add_option("--mnist-test-images", mo.test_images, "Test images (IDX)");
  mnist->add_option("--mnist-test-labels", mo.labels_test, "Test labels (IDX)");
  mnist->add_option("--kind", mo.head, "Head: yat, linear or both")
      ->check(CLI::IsMember({"yat", "linear", "both"}))
      ->capture_default_str();
  mnist->add_option("--epochs", mo.epochs, "Epochs")->check(CLI::PositiveNumber)->capture_default_str();
  mnist->add_option("--batch", mo.batch, "Batch size")->check(CLI::PositiveNumber)->capture_default_str();
  mnist->add_option("--lr", mo.lr, "Adam learning rate")->check(CLI::PositiveNumber)->capture_default_str();
  mnist->add_option("--eps", mo.eps, "Fixed kernel epsilon (default: automatic for the yat head)")
      ->check(CLI::PositiveNumber);
  mnist->add_option("--init-sigma", mo.init_sigma, "Prototype init std (default: per head)")
      ->check(CLI::PositiveNumber);
  mnist->add_option("--dtype", mo.dtype, "float or double")
      ->check(CLI::IsMember({"float", "double"}))
      ->capture_default_str();

  LmOpts lo;
  auto* lm = app.add_subcommand("lm", "Char-level toy language model");
  add_common(lm);
  lm->add_option("--corpus", lo.corpus, "UTF-8 text file")->check(CLI::ExistingFile)->capture_default_str();
  lm->add_option("--kind", lo.kind, "aether, standard, aether-preln or aether-postln")
      ->check(CLI::IsMember({"aether", "standard", "aether-preln", "aether-postln"}))
      ->capture_default_str();
  lm->add_option("--steps", lo.cfg.steps, "Training steps")->check(CLI::PositiveNumber)->capture_default_str();
  lm->add_option("--lr", lo.cfg.lr, "Adam learning rate")->check(CLI::PositiveNumber)->capture_default_str();
  lm->add_option("--eps", lo.cfg.eps, "Kernel epsilon")->check(CLI::PositiveNumber)->capture_default_str();
  lm->add_option("--dim", lo.cfg.dim, "Model width")->check(CLI::PositiveNumber)->capture_default_str();
  lm->add_option("--heads", lo.cfg.heads, "Attention heads")->check(CLI::PositiveNumber)->capture_default_str();
  lm->add_option("--layers", lo.cfg.layers, "Blocks")->check(CLI::PositiveNumber)->capture_default_str();
  lm->add_option("--len", lo.cfg.len, "Context length")->check(CLI::PositiveNumber)->capture_default_str();
  lm->add_option("--batch", lo.cfg.batch, "Sequences per step")->check(CLI::PositiveNumber)->capture_default_str();
  lm->add_option("--eval-every", lo.cfg.eval_every, "Steps between validation passes")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  lm->add_option("--dtype", lo.dtype, "float or double")
      ->check(CLI::IsMember({"float", "double"}))
      ->capture_default_str();

  BenchOpts bo;
  auto* bench = app.add_subcommand("bench", "Time yat_batch against gemm + GeLU and print FLOP counts");
  add_common(bench);
  bench->add_option("--batch", bo.batch, "Base batch size B")->check(CLI::PositiveNumber)->capture_default_str();
  bench->add_option("--units", bo.units, "Base unit count n")->check(CLI::PositiveNumber)->capture_default_str();
  bench->add_option("--dim", bo.dim, "Base input width d")->check(CLI::PositiveNumber)->capture_default_str();
  bench->add_option("--repeats", bo.repeats, "Timing repeats (best is kept)")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kPass : kUsage;
  }

  try {
    if (*verify) return cmd_verify(common, vo);
    if (*xr) return cmd_xor(common, xo);
    if (*mnist) return cmd_mnist(common, mo);
    if (*lm) return cmd_lm(common, lo);
    if (*bench) return cmd_bench(common, bo);
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kFail;
  }
  return kUsage;
}
