#include <doctest.h>

#include <atomic>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "tflab/harness.hpp"
#include "tflab/random_data.hpp"
#include "tflab/walsh_tiles.hpp"

using namespace tflab;

namespace {

ExperimentConfig config(Experiment e, int trials, std::uint64_t seed = 1) {
  ExperimentConfig c;
  c.experiment = e;
  c.trials = trials;
  c.seed = seed;
  return c;
}

std::string rejection(ExperimentConfig c) {
  try {
    validated(c);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

std::filesystem::path scratch(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "tflab_harness_test";
  std::filesystem::create_directories(dir);
  return dir / name;
}

void write_file(const std::filesystem::path& p, const std::string& text) { std::ofstream(p) << text; }

}  // namespace

TEST_CASE("configuration validation") {
  auto c = config(Experiment::Fs, 1);
  CHECK(*validated(c).resolution == 8);
  CHECK(*validated(c).p == 3.0);
  c.resolution = 13;
  CHECK(rejection(c).find("12") != std::string::npos);

  auto b = config(Experiment::Biparam, 1);
  CHECK(*validated(b).resolution == 5);
  b.resolution = 7;
  CHECK(rejection(b).find("[1, 6]") != std::string::npos);
  b.resolution = 4;
  b.p = 1.5;
  CHECK(rejection(b).find("p must exceed 2") != std::string::npos);

  auto d = config(Experiment::Cordoba, 1);
  d.p = 2.0;
  d.q = 4.0;
  CHECK(rejection(d).find("|1 - 2/q| < 1/p") != std::string::npos);
  auto w = config(Experiment::CordobaWeighted, 1);
  w.p = 2.0;
  CHECK(*validated(w).q == doctest::Approx(4.0));

  auto pr = config(Experiment::Principle, 1);
  pr.q = 5.0;
  CHECK(rejection(pr).find("strictly between") != std::string::npos);
  pr.q = 2.0;
  pr.p0 = 5.0;
  CHECK(rejection(pr).find("p0 < p1") != std::string::npos);

  auto e = config(Experiment::Estimate22, 1);
  e.eps = 0.7;
  CHECK(rejection(e).find("epsilon") != std::string::npos);

  auto ca = config(Experiment::Carleson, 1);
  ca.t = 2.0;
  CHECK(rejection(ca).find("t must exceed 2") != std::string::npos);

  auto n = config(Experiment::Fs, -1);
  CHECK(rejection(n).find("nonnegative") != std::string::npos);
  CHECK(rejection(config(Experiment::Decompose, 0)).find("collection") != std::string::npos);
  CHECK_THROWS_AS(parse_experiment("nope"), ConfigError);
  CHECK(parse_experiment("cordoba-weighted") == Experiment::CordobaWeighted);
}

TEST_CASE("configuration round trip") {
  auto c = config(Experiment::Biparam, 3, 99);
  c.q = 1.25;
  const auto v = validated(c);
  const auto back = config_from_json(config_to_json(v));
  CHECK(config_to_json(back) == config_to_json(v));
}

TEST_CASE("deterministic fan-out") {
  std::vector<std::uint64_t> a(64), b(64);
  parallel_for(64, [&](std::size_t i) { a[i] = trial_seed(7, i); }, 1);
  parallel_for(64, [&](std::size_t i) { b[i] = trial_seed(7, i); }, 4);
  CHECK(a == b);
  CHECK(trial_seed(7, 0) != trial_seed(7, 1));
  CHECK(trial_seed(7, 0) != trial_seed(8, 0));

  std::atomic<int> count{0};
  CHECK_THROWS_WITH_AS(parallel_for(
                           10,
                           [&](std::size_t i) {
                             ++count;
                             if (i == 3 || i == 7) throw std::runtime_error("trial " + std::to_string(i));
                           },
                           3),
                       "trial 3", std::runtime_error);
  CHECK(count == 10);
}

TEST_CASE("runs") {
  SUBCASE("zero trials") {
    for (auto e : {Experiment::Fs, Experiment::Biparam, Experiment::Cordoba, Experiment::CordobaWeighted,
                   Experiment::Carleson, Experiment::Principle, Experiment::Estimate22}) {
      const auto r = run(config(e, 0));
      CHECK(r.ok);
      CHECK(r.trials.empty());
      CHECK(r.report["trials"].empty());
      CHECK(r.manifest["trial_seeds"].empty());
      CHECK(r.manifest["config"]["trials"] == 0);
      CHECK(trials_csv(r.trials).empty());
    }
  }

  SUBCASE("same seed, same bytes") {
    for (auto e : {Experiment::Fs, Experiment::Carleson, Experiment::Principle}) {
      const auto a = run(config(e, 3, 11)), b = run(config(e, 3, 11)), c = run(config(e, 3, 12));
      CHECK(a.report.dump() == b.report.dump());
      CHECK(trials_csv(a.trials) == trials_csv(b.trials));
      CHECK(a.report.dump() != c.report.dump());
    }
  }

  SUBCASE("replaying a manifest") {
    auto c = config(Experiment::Biparam, 2, 5);
    c.family_size = 2;
    const auto a = run(c);
    const auto b = run(config_from_json(a.manifest["config"]));
    CHECK(a.report.dump() == b.report.dump());
  }

  SUBCASE("fs at L = 8, J = 16, 50 trials") {
    auto c = config(Experiment::Fs, 50, 3);
    c.family_size = 16;
    const auto r = run(c);
    CHECK(r.ok);
    CHECK(r.trials.size() == 50);
    CHECK(r.report["summary"]["max_ratio"].get<double>() >= 1.0);
    CHECK(r.manifest["trial_seeds"].size() == 50);
    const std::string csv = trials_csv(r.trials);
    CHECK(csv.rfind("trial,seed,ratio,", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 51);
  }

  SUBCASE("estimate-22 plots") {
    auto c = config(Experiment::Estimate22, 1);
    c.resolution = 6;
    const auto r = run(c);
    CHECK(r.ok);
    REQUIRE(r.plots.size() == 2);
    CHECK(r.plots[0].fit);
    const std::string svg = render_svg(r.plots[0]);
    CHECK(svg.rfind("<svg", 0) == 0);
    CHECK(svg.find("slope") != std::string::npos);
  }
}

TEST_CASE("decompose") {
  const int L = 5;
  CounterRng rng(21);
  const GridSignal f = random_walsh_signal(L, rng);
  const auto sig = scratch("signal.csv");
  {
    std::ofstream o(sig);
    write_signal_csv(o, f);
  }
  auto c = config(Experiment::Decompose, 0);
  c.signal_path = sig.string();

  SUBCASE("empty collection") {
    const auto col = scratch("empty.csv");
    write_file(col, "k,n,freq_offset\n");
    c.collection_path = col.string();
    const auto r = run(c);
    CHECK(r.ok);
    CHECK(r.trials.empty());
    CHECK(r.report["summary"]["tiles"] == 0);
  }

  SUBCASE("single tree") {
    const Tree T = random_tree(L, rng, 1.0, 2);
    const TileCollection S(L, T.members);
    const auto col = scratch("tree.csv");
    {
      std::ofstream o(col);
      write_collection_csv(o, S);
    }
    c.collection_path = col.string();
    const auto r = run(c);
    CHECK(r.ok);
    CHECK_FALSE(r.trials.empty());
    std::size_t members = 0;
    for (const auto& row : r.trials) members += row["members"].get<std::size_t>();
    CHECK(members >= S.size());
  }

  SUBCASE("random collection with set and choice") {
    const TileCollection S = random_convex_collection(L, rng, 3, 6);
    const auto col = scratch("random.csv");
    {
      std::ofstream o(col);
      write_collection_csv(o, S);
    }
    const GridSet E = random_dyadic_union(L, rng, 0.5);
    const auto set = scratch("set.csv");
    {
      std::ofstream o(set);
      write_set_csv(o, E);
    }
    std::ostringstream ch;
    ch << "index,value\n";
    for (std::size_t i = 0; i < f.size(); ++i) ch << i << ',' << double(rng.below(32)) + 0.25 << '\n';
    const auto choice = scratch("choice.csv");
    write_file(choice, ch.str());
    c.collection_path = col.string();
    c.set_path = set.string();
    c.choice_path = choice.string();
    const auto r = run(c);
    CHECK(r.ok);
    CHECK(r.report["summary"]["tiles"] == S.size());
  }

  SUBCASE("malformed input names the row") {
    const auto col = scratch("bad.csv");
    write_file(col, "k,n,freq_offset\n0,0,0\n1,zero,0\n");
    c.collection_path = col.string();
    try {
      run(c);
      FAIL("expected a CSV error");
    } catch (const CsvError& e) {
      CHECK(e.row() == 3);
    }
    write_file(col, "k,n,freq_offset\n");
    c.collection_path = col.string();
    const auto choice = scratch("badchoice.csv");
    write_file(choice, "index,value\n0,99\n");
    c.choice_path = choice.string();
    CHECK_THROWS_AS(run(c), CsvError);
  }

  SUBCASE("missing file") {
    c.collection_path = scratch("does-not-exist.csv").string();
    CHECK_THROWS_AS(run(c), ConfigError);
  }
}

TEST_CASE("output files") {
  const auto r = run(config(Experiment::Fs, 2));
  const std::string prefix = scratch("out").string();
  write_outputs(r, prefix, true);
  CHECK(std::filesystem::exists(prefix + ".json"));
  CHECK(std::filesystem::exists(prefix + ".csv"));
  CHECK(std::filesystem::exists(prefix + ".manifest.json"));
  CHECK(std::filesystem::exists(prefix + ".svg"));
  std::ifstream in(prefix + ".manifest.json");
  const auto m = nlohmann::json::parse(in);
  CHECK(m["csv_schema"] == kCsvSchema);
  CHECK(m["version"] == kVersion);
  CHECK(m["stages"].size() >= 1);
}
