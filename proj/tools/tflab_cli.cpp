#include <CLI11.hpp>

#include <fstream>
#include <iostream>

#include "tflab/harness.hpp"

using namespace tflab;

namespace {

struct Flags {
  ExperimentConfig cfg;
  std::string out;
  bool plot = false;
  std::optional<int> resolution;
  std::optional<double> p, q, t, eps;
};

void add_common(CLI::App* app, Flags& f) {
  app->add_option("--resolution", f.resolution, "Grid resolution L (side resolution for planar runs)");
  app->add_option("--trials", f.cfg.trials, "Number of trials")->capture_default_str();
  app->add_option("--seed", f.cfg.seed, "Run seed")->capture_default_str();
  app->add_option("--p", f.p, "Exponent p");
  app->add_option("--q", f.q, "Exponent q");
  app->add_option("--t", f.t, "Restricted exponent t (> 2)");
  app->add_option("--epsilon", f.eps, "epsilon");
  app->add_option("--p0", f.cfg.p0, "Lower exponent of the principle")->capture_default_str();
  app->add_option("--p1", f.cfg.p1, "Upper exponent of the principle")->capture_default_str();
  app->add_option("--family-size", f.cfg.family_size, "Family size J")->capture_default_str();
  app->add_option("--out", f.out, "Output prefix: writes PREFIX.json, PREFIX.csv, PREFIX.manifest.json");
  app->add_flag("--plot", f.plot, "Also write SVG plots");
}

int execute(Flags& f) {
  f.cfg.resolution = f.resolution;
  f.cfg.p = f.p;
  f.cfg.q = f.q;
  f.cfg.t = f.t;
  f.cfg.eps = f.eps;
  const RunResult r = run(f.cfg);
  if (f.out.empty())
    std::cout << r.report.dump(2) << '\n';
  else
    write_outputs(r, f.out, f.plot);
  if (!r.ok) {
    for (const auto& s : r.failures) std::cerr << "postcondition failed: " << s << '\n';
    return 1;
  }
  std::cerr << experiment_name(f.cfg.experiment) << ": all postconditions held\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Time-frequency vector-valued inequality lab"};
  app.require_subcommand(1);
  Flags f;

  auto* verify = app.add_subcommand("verify", "Run a verification experiment");
  verify->require_subcommand(1);
  for (const char* name : {"fs", "biparam", "cordoba", "cordoba-weighted", "carleson", "principle"}) {
    auto* sub = verify->add_subcommand(name, std::string("Verify ") + name);
    add_common(sub, f);
    sub->callback([&f, name] { f.cfg.experiment = parse_experiment(name); });
  }

  auto* e22 = app.add_subcommand("estimate-22", "Operator-norm decay along a ratio ladder");
  add_common(e22, f);
  e22->callback([&f] { f.cfg.experiment = Experiment::Estimate22; });

  auto* dec = app.add_subcommand("decompose", "Size/mass decomposition of a tile collection");
  add_common(dec, f);
  dec->add_option("--collection", f.cfg.collection_path, "Collection CSV (k,n,freq_offset)")->required();
  dec->add_option("--signal", f.cfg.signal_path, "Signal CSV (index,re,im)")->required();
  dec->add_option("--set", f.cfg.set_path, "Set CSV (index,member); default the full grid");
  dec->add_option("--choice", f.cfg.choice_path, "Choice function CSV (index,value); default constant 1/2");
  dec->callback([&f] { f.cfg.experiment = Experiment::Decompose; });

  std::string manifest;
  auto* replay = app.add_subcommand("replay", "Rerun the configuration recorded in a manifest");
  replay->add_option("manifest", manifest, "Manifest JSON")->required()->check(CLI::ExistingFile);
  replay->add_option("--out", f.out, "Output prefix");
  replay->add_flag("--plot", f.plot, "Also write SVG plots");

  try {
    app.parse(argc, argv);
    if (replay->parsed()) {
      std::ifstream in(manifest);
      const ExperimentConfig c = config_from_json(nlohmann::json::parse(in).at("config"));
      f.cfg = c;
      f.resolution = c.resolution;
      f.p = c.p;
      f.q = c.q;
      f.t = c.t;
      f.eps = c.eps;
    }
    return execute(f);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const ConfigError& e) {
    std::cerr << "invalid configuration: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
}
