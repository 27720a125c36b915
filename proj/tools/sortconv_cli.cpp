// sortconv: train models, evaluate them per rotation angle, audit the
// architectural rotation invariance, and merge reports.
//
// Exit codes: 0 success, 1 usage/config error, 2 data error, 3 failed
// invariance audit.

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "sortconv/audit.hpp"
#include "sortconv/checkpoint.hpp"
#include "sortconv/dataset.hpp"
#include "sortconv/digits.hpp"
#include "sortconv/models.hpp"
#include "sortconv/report.hpp"
#include "sortconv/runtime.hpp"
#include "sortconv/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitAudit = 3;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct TrainFileConfig {
  std::string variant;
  std::string mnist_dir;
  std::string out_dir = "run";
  std::int64_t train_subset = 0;  // 0 = all images
  std::int64_t valid_count = 10000;
  std::string precision = "float32";
  sortconv::TrainConfig train;
  json echo;
};

void require_keys(const json& j, const std::vector<std::string>& allowed,
                  const std::string& scope) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (std::find(allowed.begin(), allowed.end(), it.key()) == allowed.end())
      throw UsageError("config: unknown key '" + (scope.empty() ? it.key() : scope + "." + it.key()) +
                       "'");
  }
}

TrainFileConfig parse_train_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("config file not found: " + path);
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded()) throw UsageError("config file is not valid JSON: " + path);
  require_keys(j, {"variant", "mnist_dir", "out_dir", "train_subset", "valid_count", "precision",
                   "train"},
               "");
  TrainFileConfig cfg;
  cfg.echo = j;
  if (!j.contains("variant")) throw UsageError("config: missing required key 'variant'");
  cfg.variant = j.at("variant").get<std::string>();
  sortconv::ModelSpec::parse(cfg.variant);  // validates the name early
  if (!j.contains("mnist_dir")) throw UsageError("config: missing required key 'mnist_dir'");
  cfg.mnist_dir = j.at("mnist_dir").get<std::string>();
  cfg.out_dir = j.value("out_dir", cfg.out_dir);
  cfg.train_subset = j.value("train_subset", cfg.train_subset);
  cfg.valid_count = j.value("valid_count", cfg.valid_count);
  cfg.precision = j.value("precision", cfg.precision);
  if (cfg.precision != "float32" && cfg.precision != "float64")
    throw UsageError("config: precision must be float32 or float64");
  if (j.contains("train")) {
    const json& t = j.at("train");
    require_keys(t, {"epochs", "batch_size", "lr0", "lr_decay", "decay_every", "seed",
                     "adam_beta1", "adam_beta2", "adam_eps"},
                 "train");
    cfg.train.epochs = t.value("epochs", cfg.train.epochs);
    cfg.train.batch_size = t.value("batch_size", cfg.train.batch_size);
    cfg.train.lr0 = t.value("lr0", cfg.train.lr0);
    cfg.train.lr_decay = t.value("lr_decay", cfg.train.lr_decay);
    cfg.train.decay_every = t.value("decay_every", cfg.train.decay_every);
    cfg.train.seed = t.value("seed", cfg.train.seed);
    cfg.train.adam_beta1 = t.value("adam_beta1", cfg.train.adam_beta1);
    cfg.train.adam_beta2 = t.value("adam_beta2", cfg.train.adam_beta2);
    cfg.train.adam_eps = t.value("adam_eps", cfg.train.adam_eps);
  }
  return cfg;
}

std::pair<std::vector<sortconv::LabeledImage>, std::vector<sortconv::LabeledImage>> load_mnist_dir(
    const std::string& dir) {
  auto train = sortconv::load_idx(dir + "/train-images-idx3-ubyte", dir + "/train-labels-idx1-ubyte");
  auto test = sortconv::load_idx(dir + "/t10k-images-idx3-ubyte", dir + "/t10k-labels-idx1-ubyte");
  return {std::move(train), std::move(test)};
}

template <typename S>
int run_train_typed(const TrainFileConfig& cfg, bool verbose) {
  auto [train_full, test] = load_mnist_dir(cfg.mnist_dir);
  (void)test;
  auto [train_rest, valid] =
      sortconv::split_train_valid(std::move(train_full), cfg.valid_count, cfg.train.seed);
  if (cfg.train_subset > 0 && cfg.train_subset < static_cast<std::int64_t>(train_rest.size()))
    train_rest.resize(static_cast<size_t>(cfg.train_subset));

  sortconv::ModelSpec spec = sortconv::ModelSpec::parse(cfg.variant);
  sortconv::Model<S> model = sortconv::build_model<S>(spec, cfg.train.seed);
  auto result = sortconv::train(model, train_rest, valid, cfg.train, verbose);

  fs::create_directories(cfg.out_dir);
  sortconv::save_checkpoint(cfg.out_dir + "/checkpoint.ckpt", result.best);
  sortconv::write_history_csv(cfg.out_dir + "/history.csv", result.history);
  std::ofstream echo(cfg.out_dir + "/config-echo.json");
  echo << cfg.echo.dump(2) << '\n';
  std::cout << "trained " << cfg.variant << " for " << cfg.train.epochs
            << " epochs; best validation accuracy " << result.best_valid_accuracy << " at epoch "
            << result.best_epoch << "\n"
            << "checkpoint: " << cfg.out_dir << "/checkpoint.ckpt\n";
  return 0;
}

int cmd_train(const std::string& config_path, bool verbose) {
  TrainFileConfig cfg = parse_train_config(config_path);
  if (cfg.precision == "float64") return run_train_typed<double>(cfg, verbose);
  return run_train_typed<float>(cfg, verbose);
}

std::vector<int> parse_angles(const std::string& csv) {
  std::vector<int> out;
  std::stringstream ss(csv);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (tok.empty()) continue;
    out.push_back(std::stoi(tok));
  }
  if (out.empty()) throw UsageError("--angles: no angles given");
  return out;
}

int cmd_eval_rot(const std::string& checkpoint, const std::string& mnist_dir,
                 const std::string& angles_csv, std::int64_t subset, bool full,
                 std::uint64_t seed, const std::string& out_base,
                 const std::string& rot_cache) {
  auto model = sortconv::load_model_checkpoint<float>(checkpoint);
  auto [train, test] = load_mnist_dir(mnist_dir);
  (void)train;
  std::vector<int> angles =
      angles_csv.empty() ? sortconv::default_rot_angles() : parse_angles(angles_csv);

  std::vector<sortconv::LabeledImage> base;
  if (full || subset >= static_cast<std::int64_t>(test.size())) {
    base = std::move(test);
  } else {
    // seed-deterministic subset
    std::mt19937_64 rng(seed);
    std::vector<std::int64_t> idx(test.size());
    for (size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<std::int64_t>(i);
    std::shuffle(idx.begin(), idx.end(), rng);
    for (std::int64_t i = 0; i < subset; ++i)
      base.push_back(test[static_cast<size_t>(idx[static_cast<size_t>(i)])]);
  }

  const auto t0 = std::chrono::steady_clock::now();
  sortconv::RunReport report;
  report.variant = model.spec.name();
  report.seed = seed;
  {
    json echo;
    echo["checkpoint"] = checkpoint;
    echo["subset"] = static_cast<std::int64_t>(base.size());
    echo["angles"] = angles;
    report.config_echo = echo.dump();
  }
  std::vector<sortconv::LabeledImage> cached;
  for (int angle : angles) {
    // one rotated subset at a time; the full 36x set never has to coexist
    std::vector<sortconv::LabeledImage> rotated;
    rotated.reserve(base.size());
    for (const auto& img : base) rotated.push_back(sortconv::rotate_image(img, angle));
    auto eval = sortconv::evaluate(model, rotated);
    report.rows.push_back({angle, eval.accuracy, eval.total});
    std::cout << "angle " << angle << ": accuracy " << eval.accuracy << "\n";
    if (!rot_cache.empty())
      cached.insert(cached.end(), std::make_move_iterator(rotated.begin()),
                    std::make_move_iterator(rotated.end()));
  }
  report.elapsed_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (!rot_cache.empty())
    sortconv::save_rot_cache(rot_cache, cached, static_cast<std::uint32_t>(base.size()), angles);
  sortconv::write_report_csv(out_base + ".csv", report);
  sortconv::write_report_json(out_base + ".json", report);
  std::cout << "aggregate accuracy " << report.aggregate() << " over " << report.rows.size()
            << " angles\nreport: " << out_base << ".csv, " << out_base << ".json\n";
  return 0;
}

int cmd_audit(const std::string& variant, std::uint64_t seed, double tolerance, double phase,
              const std::string& out_path) {
  sortconv::ModelSpec spec = sortconv::ModelSpec::parse(variant);
  spec.phase = phase;
  auto report = sortconv::run_invariance_audit(spec, seed, tolerance);
  for (const auto& c : report.checks)
    std::cout << (c.exact ? "[exact]    " : "[reported] ") << c.name << ": residual "
              << c.residual << " (tolerance " << c.tolerance << ") "
              << (c.pass ? "ok" : "EXCEEDED") << "\n";
  if (!out_path.empty()) sortconv::write_audit_json(out_path, report);
  if (!report.exact_ok()) {
    std::cerr << "audit: exact invariance check failed\n";
    return kExitAudit;
  }
  return 0;
}

int cmd_report(const std::vector<std::string>& inputs, const std::string& out_path) {
  sortconv::merge_reports_csv(inputs, out_path);
  std::cout << "merged " << inputs.size() << " report(s) into " << out_path << "\n";
  return 0;
}

int cmd_gen_data(const std::string& out_dir, std::int64_t train_count, std::int64_t test_count,
                 std::uint64_t seed) {
  fs::create_directories(out_dir);
  auto train = sortconv::make_digit_corpus(train_count, seed);
  auto test = sortconv::make_digit_corpus(test_count, seed + 0x9e3779b9ULL);
  sortconv::write_idx(out_dir + "/train-images-idx3-ubyte", out_dir + "/train-labels-idx1-ubyte",
                      train);
  sortconv::write_idx(out_dir + "/t10k-images-idx3-ubyte", out_dir + "/t10k-labels-idx1-ubyte",
                      test);
  std::cout << "wrote " << train_count << " train / " << test_count
            << " test synthetic digit images to " << out_dir << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"sorted-convolution trainer and rotational-invariance harness"};
  app.require_subcommand(1);

  bool deterministic = false;
  app.add_flag("--deterministic", deterministic,
               "single-threaded bitwise-reproducible execution");

  auto* t = app.add_subcommand("train", "train a model from a JSON config");
  std::string config_path;
  bool verbose = false;
  t->add_option("--config", config_path, "JSON config path")->required();
  t->add_flag("--verbose", verbose, "print per-epoch progress");

  auto* e = app.add_subcommand("eval-rot", "evaluate a checkpoint per rotation angle");
  std::string checkpoint, mnist_dir, angles_csv, out_base = "report", rot_cache;
  std::int64_t subset = 1000;
  bool full = false;
  std::uint64_t seed = 0;
  e->add_option("--checkpoint", checkpoint, "model checkpoint")->required();
  e->add_option("--mnist-dir", mnist_dir, "directory with MNIST IDX files")->required();
  e->add_option("--angles", angles_csv, "comma-separated angle list (default 0,10,...,350)");
  e->add_option("--subset", subset, "test images per angle (default 1000)");
  e->add_flag("--full", full, "evaluate the full test set at every angle");
  e->add_option("--seed", seed, "seed for the subset draw");
  e->add_option("--out", out_base, "output base path (.csv/.json appended)");
  e->add_option("--rot-cache", rot_cache, "also write the rotated set as an MROT cache");

  auto* a = app.add_subcommand("audit", "architectural invariance audit on random weights");
  std::string variant, audit_out;
  std::uint64_t audit_seed = 0;
  double tolerance = 1e-2, phase = 0.0;
  a->add_option("--variant", variant, "SCNN variant name, e.g. P-RS-5")->required();
  a->add_option("--seed", audit_seed, "weight seed");
  a->add_option("--tolerance", tolerance, "tolerance for the approximate checks");
  a->add_option("--phase", phase, "polar sampling phase (radians)");
  a->add_option("--out", audit_out, "JSON tolerance report path");

  auto* r = app.add_subcommand("report", "merge per-angle reports into a plot-ready CSV");
  std::vector<std::string> report_inputs;
  std::string report_out = "merged.csv";
  r->add_option("inputs", report_inputs, "input report CSVs")->required();
  r->add_option("--out", report_out, "merged CSV path");

  auto* g = app.add_subcommand("gen-data", "generate a synthetic digit corpus as IDX files");
  std::string gen_out = "data/synthetic";
  std::int64_t gen_train = 12000, gen_test = 2000;
  std::uint64_t gen_seed = 7;
  g->add_option("--out", gen_out, "output directory");
  g->add_option("--train", gen_train, "training image count");
  g->add_option("--test", gen_test, "test image count");
  g->add_option("--seed", gen_seed, "corpus seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    app.exit(err);  // prints the message / help
    return err.get_exit_code() == 0 ? 0 : kExitUsage;
  }

  sortconv::runtime::set_deterministic(deterministic);

  try {
    if (t->parsed()) return cmd_train(config_path, verbose);
    if (e->parsed())
      return cmd_eval_rot(checkpoint, mnist_dir, angles_csv, subset, full, seed, out_base,
                          rot_cache);
    if (a->parsed()) return cmd_audit(variant, audit_seed, tolerance, phase, audit_out);
    if (r->parsed()) return cmd_report(report_inputs, report_out);
    if (g->parsed()) return cmd_gen_data(gen_out, gen_train, gen_test, gen_seed);
  } catch (const UsageError& err) {
    std::cerr << "error: " << err.what() << "\n";
    return kExitUsage;
  } catch (const std::invalid_argument& err) {
    std::cerr << "error: " << err.what() << "\n";
    return kExitUsage;
  } catch (const sortconv::DataError& err) {
    std::cerr << "data error: " << err.what() << "\n";
    return kExitData;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return kExitData;
  }
  return kExitUsage;
}
