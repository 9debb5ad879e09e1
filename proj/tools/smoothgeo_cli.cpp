// Command-line front end: training, attribution attacks, robustness
// evaluation, transfer experiments, theory checks and figure emission.

#include "smoothgeo/harness.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

namespace fs = std::filesystem;
using namespace smoothgeo;

namespace {

struct CommonArgs {
  std::string config_path;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::string out_dir = ".";
  std::string format = "csv";
};

harness::KvConfig load_config(const CommonArgs& args) {
  if (args.config_path.empty()) return harness::KvConfig::from_string("");
  return harness::KvConfig::from_file(args.config_path);
}

std::uint64_t effective_seed(const CommonArgs& args,
                             const harness::KvConfig& cfg) {
  if (args.seed_set) return args.seed;
  return cfg.get_u64("seed", 0);
}

data::Dataset load_dataset(const harness::KvConfig& cfg, std::uint64_t seed) {
  const std::string kind = cfg.get("dataset", "synth_digits");
  if (kind == "two_moons")
    return data::gen_two_moons(cfg.get_int("n", 200),
                               cfg.get_double("noise", 0.1), seed);
  if (kind == "synth_digits")
    return data::synth_digits(cfg.get_int("n", 400), cfg.get_int("classes", 10),
                              seed);
  if (kind == "idx")
    return data::load_idx(cfg.get("idx_images", ""), cfg.get("idx_labels", ""));
  throw std::runtime_error("unknown dataset kind: " + kind);
}

harness::ExperimentSpec make_spec(const harness::KvConfig& cfg,
                                  std::uint64_t seed) {
  harness::ExperimentSpec spec;
  spec.epsilon_grid = cfg.get_list("epsilon_grid", {2, 4, 8, 16});
  for (std::size_t i = 1; i < spec.epsilon_grid.size(); ++i)
    if (spec.epsilon_grid[i] <= spec.epsilon_grid[i - 1])
      throw std::runtime_error("epsilon_grid must be strictly increasing");
  spec.k = cfg.get_int("k", 4);
  spec.image_count = cfg.get_int("image_count", 100);
  spec.seed = seed;
  spec.attack_steps = cfg.get_int("attack_steps", 50);
  spec.surrogate_beta = cfg.get_double("surrogate_beta", 50.0);
  spec.mc_samples = cfg.get_int("mc_samples", 50);
  spec.attack_mc_samples = cfg.get_int("attack_mc_samples", 8);
  const std::string qoi = cfg.get("qoi", "pre");
  if (qoi == "pre")
    spec.qoi_stage = nn::QuantityOfInterest::Stage::PreSoftmax;
  else if (qoi == "post")
    spec.qoi_stage = nn::QuantityOfInterest::Stage::PostSoftmax;
  else
    throw std::runtime_error("qoi must be 'pre' or 'post'");
  if (cfg.has("methods")) {
    spec.methods.clear();
    std::istringstream in(cfg.get("methods", ""));
    std::string tok;
    while (std::getline(in, tok, ','))
      spec.methods.push_back(attribution::method_from_name(tok));
  }
  if (cfg.has("attacks")) {
    spec.attack_kinds.clear();
    std::istringstream in(cfg.get("attacks", ""));
    std::string tok;
    while (std::getline(in, tok, ','))
      spec.attack_kinds.push_back(attacks::attack_from_name(tok));
  }
  return spec;
}

training::TrainConfig make_train_config(const harness::KvConfig& cfg,
                                        std::uint64_t seed) {
  training::TrainConfig tc;
  const std::string mode = cfg.get("mode", "natural");
  if (mode == "natural")
    tc.mode = training::TrainMode::Natural;
  else if (mode == "ssr")
    tc.mode = training::TrainMode::Ssr;
  else if (mode == "pgd_at")
    tc.mode = training::TrainMode::PgdAt;
  else
    throw std::runtime_error("unknown training mode: " + mode);
  tc.epochs = cfg.get_int("epochs", 20);
  tc.batch_size = cfg.get_int("batch_size", 32);
  tc.learning_rate = cfg.get_double("learning_rate", 0.1);
  tc.momentum = cfg.get_double("momentum", 0.0);
  tc.seed = seed;
  tc.ssr.beta = cfg.get_double("ssr_beta", 0.3);
  tc.ssr.s = cfg.get_double("ssr_s", 1.0);
  tc.pgd_at.delta2 = cfg.get_double("pgd_delta2", 0.25);
  tc.pgd_at.inner_steps = cfg.get_int("pgd_inner_steps", 30);
  for (double h : cfg.get_list("hidden", {32}))
    tc.hidden.push_back(static_cast<int>(h));
  return tc;
}

void write_file(const fs::path& path, const std::string& content) {
  fs::create_directories(path.parent_path().empty() ? "." : path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << content;
}

void write_result(const harness::RobustnessResult& result,
                  const CommonArgs& args, const std::string& stem) {
  const fs::path dir(args.out_dir);
  fs::create_directories(dir);
  if (args.format == "json")
    write_file(dir / (stem + ".json"), result.to_json());
  else
    write_file(dir / (stem + ".csv"), result.to_csv());
}

int cmd_train(const CommonArgs& args) {
  const auto cfg = load_config(args);
  const auto seed = effective_seed(args, cfg);
  const data::Dataset ds = load_dataset(cfg, seed);
  const training::TrainConfig tc = make_train_config(cfg, seed);
  auto [net, history] = training::train(ds, tc);

  const fs::path dir(args.out_dir);
  fs::create_directories(dir);
  nn::CheckpointMeta meta;
  meta.mode = cfg.get("mode", "natural");
  meta.seed = seed;
  meta.epoch = static_cast<std::uint32_t>(tc.epochs);
  const fs::path ckpt = dir / cfg.get("checkpoint_out", "model.ckpt");
  nn::save_checkpoint(net, ckpt, meta);
  write_file(dir / "train_history.csv", history.to_csv());
  std::cout << "saved " << ckpt.string() << " (train accuracy "
            << training::accuracy(net, ds) << ")\n";
  return 0;
}

int cmd_attack(const CommonArgs& args) {
  const auto cfg = load_config(args);
  const auto seed = effective_seed(args, cfg);
  const data::Dataset ds = load_dataset(cfg, seed);
  const nn::Network net = nn::load_checkpoint(cfg.get("checkpoint", "model.ckpt"));
  const harness::ExperimentSpec spec = make_spec(cfg, seed);

  const auto inputs = harness::select_inputs(net, ds, 1);
  if (inputs.empty()) throw std::runtime_error("no correctly-classified input");
  const Eigen::VectorXd x = ds.scaled_input(inputs[0]);

  attacks::AttackConfig acfg;
  acfg.kind = spec.attack_kinds.front();
  acfg.epsilon_inf = ds.scale_epsilon(cfg.get_double("epsilon", 8.0));
  acfg.steps = spec.attack_steps;
  acfg.surrogate_beta = spec.surrogate_beta;
  acfg.k = spec.k;
  acfg.data_range = {0.0, 1.0};
  acfg.geometry = ds.geometry;
  acfg.seed = seed;
  acfg.attacked_method = spec.methods.front();
  acfg.attribution =
      harness::make_attribution_config(ds, acfg.attacked_method, spec);
  if (acfg.kind == attacks::AttackKind::Manipulate) {
    // aim at the map of the next selected input
    const auto more = harness::select_inputs(net, ds, 2);
    const int other = more.size() > 1 ? more[1] : inputs[0];
    acfg.target_map = attribution::compute(acfg.attacked_method, net,
                                           ds.scaled_input(other),
                                           acfg.attribution)
                          .scores;
  }
  const attacks::AttackResult res = attacks::pgd_attack(net, x, acfg);
  const fs::path dir(args.out_dir);
  fs::create_directories(dir);
  write_file(dir / "attack_result.json", attacks::to_json(res));
  attribution::save_blob(res.x_adv - x, (dir / "perturbation.f64").string());
  std::cout << "feasible=" << res.feasible << " linf=" << res.linf_norm
            << " best_step=" << res.best_step << "\n";
  return 0;
}

int cmd_evaluate(const CommonArgs& args) {
  const auto cfg = load_config(args);
  const auto seed = effective_seed(args, cfg);
  const data::Dataset ds = load_dataset(cfg, seed);
  const harness::ExperimentSpec spec = make_spec(cfg, seed);

  if (cfg.has("checkpoint_b")) {
    std::map<std::string, nn::Network> models;
    models[cfg.get("model_a", "natural")] =
        nn::load_checkpoint(cfg.get("checkpoint", "model.ckpt"));
    models[cfg.get("model_b", "ssr")] =
        nn::load_checkpoint(cfg.get("checkpoint_b", ""));
    if (cfg.has("checkpoint_c"))
      models[cfg.get("model_c", "pgd_at")] =
          nn::load_checkpoint(cfg.get("checkpoint_c", ""));
    const auto result = harness::run_regularization_experiment(models, ds, spec);
    write_file(fs::path(args.out_dir) / "regularization.csv", result.to_csv());
    std::cout << "wrote regularization.csv\n";
    return 0;
  }

  const nn::Network net =
      nn::load_checkpoint(cfg.get("checkpoint", "model.ckpt"));
  const auto result = harness::run_robustness_experiment(net, ds, spec);
  write_result(result, args, "robustness");
  std::cout << "wrote robustness report for " << result.reports.size()
            << " method/attack pairs\n";
  return 0;
}

int cmd_transfer(const CommonArgs& args) {
  const auto cfg = load_config(args);
  const auto seed = effective_seed(args, cfg);
  const data::Dataset ds = load_dataset(cfg, seed);
  const nn::Network net =
      nn::load_checkpoint(cfg.get("checkpoint", "model.ckpt"));
  const harness::ExperimentSpec spec = make_spec(cfg, seed);
  const auto result = harness::run_transfer_experiment(net, ds, spec);
  write_result(result, args, "transfer");
  std::cout << "wrote transfer report\n";
  return 0;
}

int cmd_theory_check(const CommonArgs& args) {
  const auto cfg = load_config(args);
  harness::TheoryCheckSpec spec;
  spec.seed = effective_seed(args, cfg);
  spec.prop3_trials = cfg.get_int("prop3_trials", spec.prop3_trials);
  spec.eigen_trick_trials =
      cfg.get_int("eigen_trick_trials", spec.eigen_trick_trials);
  spec.thm2_trials = cfg.get_int("thm2_trials", spec.thm2_trials);
  spec.thm3_nets = cfg.get_int("thm3_nets", spec.thm3_nets);
  spec.thm3_pairs = cfg.get_int("thm3_pairs", spec.thm3_pairs);
  spec.prop1_nets = cfg.get_int("prop1_nets", spec.prop1_nets);
  spec.prop1_samples = cfg.get_int("prop1_samples", spec.prop1_samples);
  spec.prop2_trials = cfg.get_int("prop2_trials", spec.prop2_trials);
  spec.triangle_trials = cfg.get_int("triangle_trials", spec.triangle_trials);

  const auto checks = harness::run_theory_checks(spec);
  for (const auto& c : checks)
    std::cout << (c.pass ? "PASS " : "FAIL ") << c.check << "\n";
  write_file(fs::path(args.out_dir) / "theory_checks.json",
             harness::checks_to_json(checks));
  return harness::all_pass(checks) ? 0 : 2;
}

int cmd_plot(const CommonArgs& args) {
  const auto cfg = load_config(args);
  const auto seed = effective_seed(args, cfg);
  const data::Dataset ds = load_dataset(cfg, seed);
  const nn::Network net =
      nn::load_checkpoint(cfg.get("checkpoint", "model.ckpt"));
  const fs::path dir(args.out_dir);
  fs::create_directories(dir);
  const std::string kind = cfg.get("plot", "heatmap");

  if (kind == "heatmap") {
    const auto inputs = harness::select_inputs(net, ds, 1);
    if (inputs.empty()) throw std::runtime_error("no input to plot");
    harness::ExperimentSpec spec = make_spec(cfg, seed);
    const attribution::Method m = spec.methods.front();
    const auto map = attribution::compute(
        m, net, ds.scaled_input(inputs[0]),
        harness::make_attribution_config(ds, m, spec));
    harness::emit_heatmap(map.scores, ds.geometry, dir / "attribution.pgm");
    std::cout << "wrote attribution.pgm\n";
    return 0;
  }
  if (kind == "contour") {
    const Eigen::Vector2d lo(ds.features.col(0).minCoeff(),
                             ds.features.col(1).minCoeff());
    const Eigen::Vector2d hi(ds.features.col(0).maxCoeff(),
                             ds.features.col(1).maxCoeff());
    const double span = ds.range.hi - ds.range.lo;
    const Eigen::Vector2d slo = (lo.array() - ds.range.lo) / span;
    const Eigen::Vector2d shi = (hi.array() - ds.range.lo) / span;
    harness::emit_contour_field(
        net, slo, shi,
        {attribution::Method::SM, attribution::Method::IG,
         attribution::Method::SG},
        dir / "contour_field.svg");
    std::cout << "wrote contour_field.svg\n";
    return 0;
  }
  throw std::runtime_error("unknown plot kind: " + kind);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"attribution robustness laboratory"};
  app.require_subcommand(1);

  CommonArgs args;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", args.config_path, "key=value config file");
    sub->add_option("--seed", args.seed, "random seed")
        ->each([&](const std::string&) { args.seed_set = true; });
    sub->add_option("--out", args.out_dir, "output directory");
    sub->add_option("--format", args.format, "csv|json")
        ->check(CLI::IsMember({"csv", "json"}));
  };

  int (*handler)(const CommonArgs&) = nullptr;
  for (auto& [name, fn, desc] :
       std::initializer_list<std::tuple<const char*, int (*)(const CommonArgs&),
                                        const char*>>{
           {"train", cmd_train, "train a model"},
           {"attack", cmd_attack, "run one attribution attack"},
           {"evaluate", cmd_evaluate, "robustness / regularization reports"},
           {"transfer", cmd_transfer, "SM-targeted transfer experiment"},
           {"theory-check", cmd_theory_check, "run the analytic-bound checks"},
           {"plot", cmd_plot, "emit heatmap or contour figures"}}) {
    CLI::App* sub = app.add_subcommand(name, desc);
    add_common(sub);
    sub->callback([&handler, fn] { handler = fn; });
  }

  CLI11_PARSE(app, argc, argv);
  try {
    return handler ? handler(args) : 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
