#include "tflab/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "tflab/biparam.hpp"
#include "tflab/carleson_vv.hpp"
#include "tflab/directional.hpp"
#include "tflab/maximal_fs.hpp"
#include "tflab/principle.hpp"
#include "tflab/random_data.hpp"
#include "tflab/rng.hpp"
#include "tflab/walsh_tiles.hpp"

namespace tflab {

namespace {

using ojson = nlohmann::ordered_json;

constexpr int kMaxCells = 12;  // log2 of the largest grid

const std::vector<std::pair<Experiment, std::string>>& experiment_names() {
  static const std::vector<std::pair<Experiment, std::string>> names{
      {Experiment::Fs, "fs"},
      {Experiment::Biparam, "biparam"},
      {Experiment::Cordoba, "cordoba"},
      {Experiment::CordobaWeighted, "cordoba-weighted"},
      {Experiment::Carleson, "carleson"},
      {Experiment::Principle, "principle"},
      {Experiment::Estimate22, "estimate-22"},
      {Experiment::Decompose, "decompose"}};
  return names;
}

bool planar(Experiment e) {
  return e == Experiment::Biparam || e == Experiment::Cordoba || e == Experiment::CordobaWeighted;
}

int default_resolution(Experiment e) {
  switch (e) {
    case Experiment::Biparam:
    case Experiment::Cordoba:
    case Experiment::CordobaWeighted:
      return 5;
    case Experiment::Estimate22:
      return 9;
    default:
      return 8;
  }
}

void require(bool ok, const std::string& what) {
  if (!ok) throw ConfigError(what);
}

void require_exponent(const std::optional<double>& v, const char* name) {
  require(v && std::isfinite(*v) && *v > 1.0, std::string(name) + " must lie in (1, inf)");
}

// Stage timer whose readings only reach the manifest.
struct Stages {
  ojson list = ojson::array();
  template <typename F>
  auto time(const std::string& name, F&& f) {
    const auto t0 = std::chrono::steady_clock::now();
    if constexpr (std::is_void_v<decltype(f())>) {
      f();
      list.push_back({{"stage", name}, {"seconds", seconds_since(t0)}});
    } else {
      auto out = f();
      list.push_back({{"stage", name}, {"seconds", seconds_since(t0)}});
      return out;
    }
  }
  static double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  }
};

struct Collected {
  ojson summary = ojson::object();
  std::vector<ojson> trials;
  std::vector<PlotSeries> plots;
  std::vector<std::string> failures;

  void expect(bool ok, const std::string& name) {
    if (!ok && std::find(failures.begin(), failures.end(), name) == failures.end()) failures.push_back(name);
  }
};

// Runs one body per trial and keeps the rows in trial order.
template <typename Body>
std::vector<ojson> fan_out(const ExperimentConfig& c, Body&& body) {
  std::vector<ojson> rows(std::size_t(c.trials));
  parallel_for(rows.size(), [&](std::size_t i) {
    const std::uint64_t s = trial_seed(c.seed, i);
    CounterRng rng(s);
    ojson row;
    row["trial"] = i;
    row["seed"] = s;
    body(i, rng, row);
    rows[i] = std::move(row);
  });
  return rows;
}

double column_max(const std::vector<ojson>& rows, const char* key) {
  double m = 0.0;
  for (const auto& r : rows) m = std::max(m, r.at(key).get<double>());
  return m;
}

double column_min(const std::vector<ojson>& rows, const char* key) {
  double m = std::numeric_limits<double>::infinity();
  for (const auto& r : rows) m = std::min(m, r.at(key).get<double>());
  return m;
}

bool column_all(const std::vector<ojson>& rows, const char* key) {
  return std::all_of(rows.begin(), rows.end(), [&](const ojson& r) { return r.at(key).get<bool>(); });
}

PlotSeries trial_plot(const std::vector<ojson>& rows, const char* key, const std::string& title) {
  PlotSeries s;
  s.title = title;
  s.xlabel = "trial";
  s.ylabel = key;
  for (const auto& r : rows) {
    s.x.push_back(r.at("trial").get<double>());
    s.y.push_back(r.at(key).get<double>());
  }
  return s;
}

std::vector<GridSignal> walsh_family(int L, std::size_t J, CounterRng& rng) {
  std::vector<GridSignal> f;
  for (std::size_t j = 0; j < J; ++j) f.push_back(random_walsh_signal(L, rng));
  return f;
}

std::vector<Grid2D> gaussian_planar_family(int L, std::size_t J, CounterRng& rng) {
  std::vector<Grid2D> out;
  for (std::size_t j = 0; j < J; ++j) {
    Grid2D f(L);
    for (auto& v : f.values()) v = {rng.normal(), rng.normal()};
    out.push_back(std::move(f));
  }
  return out;
}

Collected run_fs(const ExperimentConfig& c, Stages& st) {
  const int L = *c.resolution;
  const double p = *c.p;
  Collected out;
  out.trials = st.time("trials", [&] {
    return fan_out(c, [&](std::size_t, CounterRng& rng, ojson& row) {
      const auto fs = verify_fefferman_stein(VectorSignal(walsh_family(L, c.family_size, rng)), p);
      const GridSet H = random_dyadic_union(L, rng, 0.3 + 0.7 * rng.uniform());
      const GridSet G = random_dyadic_union(L, rng, 0.02 + 0.4 * rng.uniform());
      const GridSet E = random_dyadic_union(L, rng, 0.5), F = random_dyadic_union(L, rng, 0.5);
      const GridSet Hp = build_H_prime_fs(H, G, 4.0);
      const ScaleChoice kappa = greedy_scale_choice(random_walsh_signal(L, rng));
      const auto rs = fs_restricted_sum(E, F, H, Hp, G, kappa, p);
      const double cap = 4.0 * measure(G) / measure(H);
      row["ratio"] = fs.ratio;
      row["lhs"] = fs.lhs;
      row["rhs"] = fs.rhs;
      row["restricted_ratio"] = rs.ratio;
      row["max_count_bound_ratio"] = rs.max_count_bound_ratio;
      row["max_mass"] = rs.max_mass;
      row["mass_cap"] = cap;
      row["measure_ok"] = 2.0 * measure(Hp) >= measure(H);
      row["mass_ok"] = rs.max_mass < cap;
      row["finite"] = std::isfinite(fs.ratio) && std::isfinite(rs.ratio);
    });
  });
  if (!out.trials.empty()) {
    out.summary["max_ratio"] = column_max(out.trials, "ratio");
    out.summary["max_restricted_ratio"] = column_max(out.trials, "restricted_ratio");
    out.summary["max_count_bound_ratio"] = column_max(out.trials, "max_count_bound_ratio");
    out.expect(column_all(out.trials, "measure_ok"), "measure condition |H'| >= |H|/2");
    out.expect(column_all(out.trials, "mass_ok"), "mass < 4|G|/|H| on intervals meeting H'");
    out.expect(column_all(out.trials, "finite"), "finite ratios");
    out.plots.push_back(trial_plot(out.trials, "ratio", "vector maximal ratio"));
  }
  return out;
}

Collected run_biparam(const ExperimentConfig& c, Stages& st) {
  const int L = *c.resolution;
  Collected out;
  if (c.trials == 0) return out;
  const double c_eps = st.time("calibrate", [&] { return calibrate_c_eps(L, *c.eps, c.seed); });
  out.summary["c_eps"] = c_eps;
  out.trials = st.time("trials", [&] {
    return fan_out(c, [&](std::size_t, CounterRng& rng, ojson& row) {
      const auto fam = random_grid_family(L, c.family_size, rng);
      Thm51Options o;
      o.trials = 1;
      o.seed = rng.key();
      o.q = *c.q;
      o.c_eps = c_eps;
      const auto r = verify_thm51(fam, *c.p, *c.eps, o);
      row["ratio"] = r.ratio;
      row["scalar_ratio"] = r.scalar_ratio;
      row["K_p"] = r.K_p;
      row["K_q"] = r.K_q;
      row["K_2"] = r.K_2;
      row["max_counting_ratio"] = r.max_counting_ratio;
      row["max_C_p"] = r.max_C_p;
      row["measure_ok"] = r.measure_ok;
      row["mass_ok"] = r.mass_ok;
      row["interpolation_ok"] = r.interpolation_ok;
    });
  });
  out.summary["max_ratio"] = column_max(out.trials, "ratio");
  out.summary["max_counting_ratio"] = column_max(out.trials, "max_counting_ratio");
  out.expect(column_all(out.trials, "measure_ok"), "measure condition for H'");
  out.expect(column_all(out.trials, "mass_ok"), "mass cap c_eps (|G|/|H|)^{1-eps}");
  out.expect(column_all(out.trials, "interpolation_ok"), "K_2 <= K_p^theta K_q^{1-theta}");
  out.plots.push_back(trial_plot(out.trials, "ratio", "bi-parameter vector ratio"));
  return out;
}

Collected run_cordoba(const ExperimentConfig& c, Stages& st, bool weighted) {
  const int L = *c.resolution;
  const double p = *c.p, q = *c.q;
  const DirectionSet dirs = DirectionSet::uniform(std::max<std::size_t>(c.family_size, 1));
  Collected out;
  if (c.trials == 0) return out;
  const DirectionalMaximal M(L, dirs);
  const double norm = st.time("maximal norm", [&] { return M.operator_norm(weighted ? p : 2.0, c.seed); });
  out.summary["norm_MSigma"] = norm;
  out.summary["directions"] = dirs.size();
  out.trials = st.time("trials", [&] {
    return fan_out(c, [&](std::size_t, CounterRng& rng, ojson& row) {
      const auto fam = gaussian_planar_family(L, c.family_size, rng);
      DirectionalOptions o;
      o.seed = rng.key();
      o.norm_M = norm;
      if (!weighted) {
        o.principle_trials = 1;
        const auto r = verify_thm61(fam, dirs, q, p, o);
        row["ratio"] = r.ratio;
        row["C_p"] = r.principle ? r.principle->C_p : 0.0;
        row["builder_ok"] = r.principle && r.principle->builder_ok;
        row["finite"] = std::isfinite(r.ratio);
      } else {
        const auto r = verify_thm62(fam, dirs, q, p, o);
        row["ratio"] = r.ratio;
        row["normalized"] = r.normalized;
        row["endpoint"] = r.endpoint;
        row["chain_ok"] = r.chain_ok;
        row["C21"] = r.C21;
        row["A1"] = r.A1;
        row["A2"] = r.A2;
        row["tail"] = r.weight ? r.weight->tail : 0.0;
        row["finite"] = std::isfinite(r.normalized);
      }
    });
  });
  out.summary["max_ratio"] = column_max(out.trials, "ratio");
  out.expect(column_all(out.trials, "finite"), "finite ratios");
  if (!weighted) {
    out.summary["max_C_p"] = column_max(out.trials, "C_p");
    out.expect(column_all(out.trials, "builder_ok"), "measure condition for H'");
  } else {
    const double lo = column_min(out.trials, "normalized"), hi = column_max(out.trials, "normalized");
    out.summary["min_normalized"] = lo;
    out.summary["max_normalized"] = hi;
    out.summary["normalized_spread"] = lo > 0.0 ? hi / lo : 0.0;
    out.expect(column_all(out.trials, "chain_ok"), "weight certificates and chain");
  }
  out.plots.push_back(trial_plot(out.trials, weighted ? "normalized" : "ratio", "half-plane vector ratio"));
  return out;
}

Collected run_carleson(const ExperimentConfig& c, Stages& st) {
  const int L = *c.resolution;
  Collected out;
  out.trials = st.time("trials", [&] {
    return fan_out(c, [&](std::size_t, CounterRng& rng, ojson& row) {
      std::vector<ChoiceFunction> Ns;
      for (std::size_t j = 0; j < c.family_size; ++j) Ns.push_back(random_choice_function(L, rng));
      const auto thm = verify_thm71(VectorSignal(walsh_family(L, c.family_size, rng)), Ns, *c.p);
      const GridSet H = random_dyadic_union(L, rng, 0.5 + 0.5 * rng.uniform());
      const GridSet G = random_dyadic_union(L, rng, 0.05 + 0.4 * rng.uniform());
      const GridSet E = random_dyadic_union(L, rng, 0.5), F = random_dyadic_union(L, rng, 0.5);
      const GridSet Hp = build_H_prime_c(H, G, 4.0);
      const RestrictedOp op{G, Hp, Ns.front(), tiles_meeting(TileCollection::all(L), Hp)};
      const auto pr =
          restricted_pairing(random_sub_indicator(E, rng), random_sub_indicator(F, rng), E, F, op, *c.t);
      row["ratio"] = thm.ratio;
      row["greedy_ratio"] = thm.greedy_ratio;
      row["pairing"] = pr.pairing;
      row["majorant"] = pr.majorant;
      row["tree_constant"] = pr.tree_constant;
      row["max_mass"] = pr.max_mass;
      row["mass_cap"] = 4.0 * measure(G) / measure(H);
      row["chain_ok"] = pr.chain_ok;
      row["mass_ok"] = pr.max_mass <= 4.0 * measure(G) / measure(H);
      row["measure_ok"] = 2.0 * measure(Hp) >= measure(H);
    });
  });
  if (!out.trials.empty()) {
    out.summary["max_ratio"] = std::max(column_max(out.trials, "ratio"), column_max(out.trials, "greedy_ratio"));
    out.summary["max_tree_constant"] = column_max(out.trials, "tree_constant");
    out.expect(column_all(out.trials, "chain_ok"), "pairing <= bucketed majorant");
    out.expect(column_all(out.trials, "mass_ok"), "mass <= 4|G|/|H|");
    out.expect(column_all(out.trials, "measure_ok"), "measure condition |H'| >= |H|/2");
    out.plots.push_back(trial_plot(out.trials, "greedy_ratio", "vector model ratio (greedy N)"));
  }
  return out;
}

OperatorFamily linearized_maximal_family(int L, std::size_t J, CounterRng& rng) {
  OperatorFamily fam;
  for (std::size_t j = 0; j < J; ++j) {
    const ScaleChoice k = greedy_scale_choice(random_walsh_signal(L, rng));
    fam.members.push_back({L, [k](const GridSignal& f) { return model_T(f, k); },
                           [k](const GridSignal& g) { return model_T_adjoint(g, k); }});
  }
  return fam;
}

Collected run_principle(const ExperimentConfig& c, Stages& st) {
  const int L = *c.resolution;
  const double q = *c.q;
  Collected out;
  out.summary["p0"] = c.p0;
  out.summary["p1"] = c.p1;
  out.summary["envelope"] = interpolation_envelope(q, c.p0, c.p1);
  out.trials = st.time("trials", [&] {
    return fan_out(c, [&](std::size_t, CounterRng& rng, ojson& row) {
      const OperatorFamily fam = linearized_maximal_family(L, c.family_size, rng);
      const GridSet H = random_dyadic_union(L, rng, 0.3 + 0.7 * rng.uniform());
      const GridSet G = random_dyadic_union(L, rng, 0.05 + 0.5 * rng.uniform());
      auto builder = [](double p) { return p < 2.0 ? fs_g_builder() : fs_h_builder(); };
      const auto r0 = measure_condition_P(fam, H, G, builder(c.p0), c.p0, 1, rng.key());
      const auto r1 = measure_condition_P(fam, H, G, builder(c.p1), c.p1, 1, rng.key() + 1);
      const auto vb = conclude_vector_bound(fam, VectorSignal(walsh_family(L, c.family_size, rng)), q, c.p0, c.p1);
      const double bound = interpolation_envelope(q, c.p0, c.p1) * std::max(r0.A_p, r1.A_p);
      const auto decay = iterate_error_decay(H, G, gamma_refined(builder(c.p1), gamma_of(c.p1)), c.p1, 10);
      row["C_p0"] = r0.C_p;
      row["C_p1"] = r1.C_p;
      row["A_p0"] = r0.A_p;
      row["A_p1"] = r1.A_p;
      row["ratio"] = vb.ratio;
      row["bound"] = bound;
      row["bounded"] = vb.ratio <= bound;
      row["builder_ok"] = r0.builder_ok && r1.builder_ok;
      row["decay_ok"] = decay.ok;
    });
  });
  if (!out.trials.empty()) {
    out.summary["max_ratio"] = column_max(out.trials, "ratio");
    out.summary["max_A_p"] = std::max(column_max(out.trials, "A_p0"), column_max(out.trials, "A_p1"));
    out.expect(column_all(out.trials, "bounded"), "vector ratio <= envelope * max A_p");
    out.expect(column_all(out.trials, "builder_ok"), "measure condition for the builders");
    out.expect(column_all(out.trials, "decay_ok"), "error budget halving");
    out.plots.push_back(trial_plot(out.trials, "ratio", "vector bound ratio"));
  }
  return out;
}

Collected run_estimate22(const ExperimentConfig& c, Stages& st) {
  const int L = *c.resolution;
  const int rungs = std::min(8, L - 1);
  Collected out;
  std::vector<Estimate22Report> first(2);
  out.trials = st.time("ladders", [&] {
    std::mutex mu;
    return fan_out(c, [&](std::size_t i, CounterRng& rng, ojson& row) {
      NormOptions o;
      o.seed = rng.key();
      for (auto br : {Branch::HPrime, Branch::GPrime}) {
        const auto r = estimate_22(ratio_ladder(L, rungs, rng.key() + (br == Branch::GPrime), br), *c.eps, br, o);
        const std::string tag = br == Branch::HPrime ? "H" : "G";
        row["slope_" + tag] = r.slope;
        row["intercept_" + tag] = r.intercept;
        row["ok_" + tag] = r.slope_ok && r.measure_ok && r.cap_ok;
        if (i == 0) {
          std::lock_guard<std::mutex> lock(mu);
          first[br == Branch::HPrime ? 0 : 1] = r;
        }
      }
    });
  });
  if (!out.trials.empty()) {
    out.summary["min_slope_H"] = column_min(out.trials, "slope_H");
    out.summary["min_slope_G"] = column_min(out.trials, "slope_G");
    out.summary["target_slope"] = 0.5 - *c.eps;
    out.summary["ladder_H"] = nlohmann::json(first[0]);
    out.summary["ladder_G"] = nlohmann::json(first[1]);
    out.expect(column_all(out.trials, "ok_H"), "slope >= 1/2 - eps with cap and measure (H' branch)");
    out.expect(column_all(out.trials, "ok_G"), "slope >= 1/2 - eps with cap and measure (G' branch)");
    for (int b = 0; b < 2; ++b) {
      PlotSeries s;
      s.title = b == 0 ? "log2 ||S_{G,H'}|| against log2 |G|/|H|" : "log2 ||S_{G',H}|| against log2 |H|/|G|";
      s.xlabel = "log2 ratio";
      s.ylabel = "log2 norm";
      for (const auto& pt : first[b].points) {
        s.x.push_back(pt.log_ratio);
        s.y.push_back(pt.log_norm);
      }
      s.fit = std::make_pair(first[b].slope, first[b].intercept);
      out.plots.push_back(std::move(s));
    }
  }
  return out;
}

ChoiceFunction read_choice_csv(std::istream& in, int L) {
  std::string line;
  if (!std::getline(in, line)) throw CsvError(1, "missing header");
  if (csv_fields(line) != std::vector<std::string>{"index", "value"}) throw CsvError(1, "expected header 'index,value'");
  std::vector<double> v(std::size_t{1} << L, 0.0);
  std::vector<bool> seen(v.size(), false);
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty() || line == "\r") continue;
    const auto f = csv_fields(line);
    if (f.size() != 2) throw CsvError(row, "expected 2 fields");
    const auto i = csv_index(f[0], row);
    if (i >= v.size()) throw CsvError(row, "index out of range");
    if (seen[i]) throw CsvError(row, "duplicate index");
    const double x = csv_double(f[1], row);
    if (!(x >= 0.0 && x < std::ldexp(1.0, L))) throw CsvError(row, "choice outside [0, 2^L)");
    v[i] = x;
    seen[i] = true;
  }
  if (std::find(seen.begin(), seen.end(), false) != seen.end()) throw CsvError(row, "missing cells");
  return ChoiceFunction(L, std::move(v));
}

std::ifstream open_input(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open input file '" + path + "'");
  return in;
}

Collected run_decompose(const ExperimentConfig& c, Stages& st) {
  Collected out;
  auto sin = open_input(c.signal_path);
  const GridSignal f = read_signal_csv(sin);
  const int L = f.resolution();
  require(L <= kMaxCells, "resolution must not exceed 12");
  auto cin = open_input(c.collection_path);
  const TileCollection S = read_collection_csv(cin, L);
  GridSet E = GridSet::full(L);
  if (!c.set_path.empty()) {
    auto ein = open_input(c.set_path);
    E = read_set_csv(ein);
    require_same_resolution(L, E.resolution(), "decompose: set");
  }
  ChoiceFunction N = ChoiceFunction::constant(L, 0.5);
  if (!c.choice_path.empty()) {
    auto nin = open_input(c.choice_path);
    N = read_choice_csv(nin, L);
  }
  const Decomposition d = st.time("decompose", [&] { return full_decompose(S, f, E, N); });
  TileCollection covered(L);
  std::size_t bucket_index = 0;
  auto emit = [&](const Tree& T, long bucket, int n, int m, bool by_size, double ratio) {
    ojson row;
    row["bucket"] = bucket;
    row["n"] = n;
    row["m"] = m;
    row["by_size"] = by_size;
    row["top_scale"] = T.top.scale;
    row["top_offset"] = T.top.offset;
    row["xi"] = T.xi;
    row["members"] = T.members.size();
    row["top_measure"] = T.top.length();
    row["counting_ratio"] = ratio;
    out.trials.push_back(std::move(row));
    for (const auto& p : T.members) covered.insert(p);
  };
  for (const auto& b : d.buckets) {
    for (const auto& T : b.forest) emit(T, long(bucket_index), b.n, b.m, b.by_size, b.counting_ratio);
    ++bucket_index;
  }
  for (const auto& T : d.residual) emit(T, -1, 0, 0, false, 0.0);
  out.summary["resolution"] = L;
  out.summary["tiles"] = S.size();
  out.summary["decomposition"] = nlohmann::json(d);
  out.summary["max_counting_ratio"] = d.max_counting_ratio;
  out.expect(covered == S, "trees cover the collection");
  out.expect(std::isfinite(d.max_counting_ratio), "finite counting ratios");
  return out;
}

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(4) << v;
  return os.str();
}

std::string xml_escape(const std::string& s) {
  std::string o;
  for (char ch : s) {
    if (ch == '<')
      o += "&lt;";
    else if (ch == '>')
      o += "&gt;";
    else if (ch == '&')
      o += "&amp;";
    else
      o += ch;
  }
  return o;
}

std::string csv_cell(const nlohmann::ordered_json& v) {
  if (v.is_boolean()) return v.get<bool>() ? "1" : "0";
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number_float()) {
    std::ostringstream os;
    os << std::setprecision(17) << v.get<double>();
    return os.str();
  }
  return v.dump();
}

}  // namespace

Experiment parse_experiment(const std::string& name) {
  for (const auto& [e, n] : experiment_names())
    if (n == name) return e;
  throw ConfigError("unknown experiment '" + name + "'");
}

std::string experiment_name(Experiment e) {
  for (const auto& [x, n] : experiment_names())
    if (x == e) return n;
  return "?";
}

ExperimentConfig validated(ExperimentConfig c) {
  const Experiment e = c.experiment;
  // decompose takes its resolution from the signal file
  if (!c.resolution && e != Experiment::Decompose) c.resolution = default_resolution(e);
  const int L = c.resolution.value_or(0);
  require(c.trials >= 0, "trials must be nonnegative");
  require(c.family_size >= 1 && c.family_size <= 256, "family size must lie in [1, 256]");
  if (planar(e))
    require(L >= 1 && 2 * L <= kMaxCells, "resolution L <= 12: the square has 2^L x 2^L cells, so L must lie in [1, 6]");
  else if (e != Experiment::Decompose)
    require(L >= 1 && L <= kMaxCells, "resolution must lie in [1, 12]");

  switch (e) {
    case Experiment::Fs:
      if (!c.p) c.p = 3.0;
      require_exponent(c.p, "p");
      break;
    case Experiment::Biparam:
      if (!c.p) c.p = 3.0;
      if (!c.q) c.q = 1.5;
      if (!c.eps) c.eps = 0.1;
      require(c.p && std::isfinite(*c.p) && *c.p > 2.0, "p must exceed 2 (the bi-parameter bound is stated for p > 2)");
      require(*c.q > 1.0 && *c.q < 2.0, "q must lie in (1, 2) for the lower restricted estimate");
      require(*c.eps > 0.0 && *c.eps < 1.0, "epsilon must lie in (0, 1)");
      break;
    case Experiment::Cordoba:
      if (!c.p) c.p = 3.0;
      if (!c.q) c.q = 2.5;
      require_exponent(c.p, "p");
      require_exponent(c.q, "q");
      require(std::abs(1.0 - 2.0 / *c.q) < 1.0 / *c.p, "need |1 - 2/q| < 1/p");
      break;
    case Experiment::CordobaWeighted:
      if (!c.p) c.p = 3.0;
      require_exponent(c.p, "p");
      if (!c.q) c.q = 2.0 * *c.p / (*c.p - 1.0);
      require_exponent(c.q, "q");
      require(std::abs(1.0 - 2.0 / *c.q) <= 1.0 / *c.p + 1e-12, "need |1 - 2/q| <= 1/p");
      break;
    case Experiment::Carleson:
      if (!c.p) c.p = 3.0;
      if (!c.t) c.t = 3.0;
      require_exponent(c.p, "p");
      require(std::isfinite(*c.t) && *c.t > 2.0, "t must exceed 2");
      break;
    case Experiment::Principle:
      if (!c.q) c.q = 2.5;
      require(c.p0 > 1.0 && c.p0 < c.p1 && std::isfinite(c.p1), "need 1 < p0 < p1 < inf");
      require(*c.q > c.p0 && *c.q < c.p1, "q must lie strictly between p0 and p1");
      break;
    case Experiment::Estimate22:
      if (!c.eps) c.eps = 0.1;
      require(L >= 3, "resolution must be at least 3 for a ratio ladder");
      require(*c.eps > 0.0 && *c.eps < 0.5, "epsilon must lie in (0, 1/2)");
      break;
    case Experiment::Decompose:
      require(!c.collection_path.empty(), "decompose needs a collection file");
      require(!c.signal_path.empty(), "decompose needs a signal file");
      break;
  }
  return c;
}

nlohmann::ordered_json config_to_json(const ExperimentConfig& c) {
  ojson j;
  j["experiment"] = experiment_name(c.experiment);
  j["resolution"] = c.resolution ? ojson(*c.resolution) : ojson(nullptr);
  j["family_size"] = c.family_size;
  auto opt = [](const std::optional<double>& v) { return v ? ojson(*v) : ojson(nullptr); };
  j["p"] = opt(c.p);
  j["q"] = opt(c.q);
  j["t"] = opt(c.t);
  j["epsilon"] = opt(c.eps);
  j["p0"] = c.p0;
  j["p1"] = c.p1;
  j["trials"] = c.trials;
  j["seed"] = c.seed;
  if (c.experiment == Experiment::Decompose) {
    j["collection"] = c.collection_path;
    j["signal"] = c.signal_path;
    j["set"] = c.set_path;
    j["choice"] = c.choice_path;
  }
  return j;
}

ExperimentConfig config_from_json(const nlohmann::json& j) {
  ExperimentConfig c;
  c.experiment = parse_experiment(j.at("experiment").get<std::string>());
  if (!j.at("resolution").is_null()) c.resolution = j.at("resolution").get<int>();
  c.family_size = j.at("family_size").get<std::size_t>();
  auto opt = [&](const char* k) -> std::optional<double> {
    if (!j.contains(k) || j.at(k).is_null()) return std::nullopt;
    return j.at(k).get<double>();
  };
  c.p = opt("p");
  c.q = opt("q");
  c.t = opt("t");
  c.eps = opt("epsilon");
  c.p0 = j.at("p0").get<double>();
  c.p1 = j.at("p1").get<double>();
  c.trials = j.at("trials").get<int>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.collection_path = j.value("collection", "");
  c.signal_path = j.value("signal", "");
  c.set_path = j.value("set", "");
  c.choice_path = j.value("choice", "");
  return c;
}

std::uint64_t trial_seed(std::uint64_t seed, std::size_t i) { return CounterRng(seed).split(i).key(); }

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn, unsigned threads) {
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = unsigned(std::min<std::size_t>(threads, n));
  std::vector<std::exception_ptr> errors(n);
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < threads; ++w)
      pool.emplace_back([&] {
        for (std::size_t i; (i = next.fetch_add(1)) < n;) {
          try {
            fn(i);
          } catch (...) {
            errors[i] = std::current_exception();
          }
        }
      });
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

RunResult run(const ExperimentConfig& config) {
  const ExperimentConfig c = validated(config);
  Stages st;
  Collected col;
  switch (c.experiment) {
    case Experiment::Fs:
      col = run_fs(c, st);
      break;
    case Experiment::Biparam:
      col = run_biparam(c, st);
      break;
    case Experiment::Cordoba:
      col = run_cordoba(c, st, false);
      break;
    case Experiment::CordobaWeighted:
      col = run_cordoba(c, st, true);
      break;
    case Experiment::Carleson:
      col = run_carleson(c, st);
      break;
    case Experiment::Principle:
      col = run_principle(c, st);
      break;
    case Experiment::Estimate22:
      col = run_estimate22(c, st);
      break;
    case Experiment::Decompose:
      col = run_decompose(c, st);
      break;
  }
  RunResult r;
  r.ok = col.failures.empty();
  r.failures = col.failures;
  r.trials = std::move(col.trials);
  r.plots = std::move(col.plots);
  r.report["experiment"] = experiment_name(c.experiment);
  r.report["config"] = config_to_json(c);
  r.report["summary"] = std::move(col.summary);
  r.report["trials"] = r.trials;
  r.report["ok"] = r.ok;
  r.report["failed_postconditions"] = r.failures;

  r.manifest["tool"] = "tflab";
  r.manifest["version"] = kVersion;
  r.manifest["csv_schema"] = kCsvSchema;
  r.manifest["config"] = config_to_json(c);
  ojson seeds = ojson::array();
  if (c.experiment != Experiment::Decompose)
    for (int i = 0; i < c.trials; ++i) seeds.push_back(trial_seed(c.seed, std::size_t(i)));
  r.manifest["trial_seeds"] = seeds;
  r.manifest["stages"] = st.list;
  r.manifest["ok"] = r.ok;
  return r;
}

std::string trials_csv(const std::vector<nlohmann::ordered_json>& trials) {
  std::ostringstream os;
  if (trials.empty()) return os.str();
  bool first = true;
  for (const auto& [k, v] : trials.front().items()) {
    os << (first ? "" : ",") << k;
    first = false;
  }
  os << '\n';
  for (const auto& row : trials) {
    first = true;
    for (const auto& [k, v] : trials.front().items()) {
      os << (first ? "" : ",") << csv_cell(row.at(k));
      first = false;
    }
    os << '\n';
  }
  return os.str();
}

std::string render_svg(const PlotSeries& s) {
  const double W = 640, H = 420, ml = 70, mr = 20, mt = 40, mb = 50;
  double x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < s.x.size(); ++i)
    if (std::isfinite(s.x[i]) && std::isfinite(s.y[i])) keep.push_back(i);
  if (!keep.empty()) {
    x0 = x1 = s.x[keep[0]];
    y0 = y1 = s.y[keep[0]];
    for (auto i : keep) {
      x0 = std::min(x0, s.x[i]), x1 = std::max(x1, s.x[i]);
      y0 = std::min(y0, s.y[i]), y1 = std::max(y1, s.y[i]);
    }
  }
  if (x1 - x0 < 1e-12) x0 -= 0.5, x1 += 0.5;
  if (y1 - y0 < 1e-12) y0 -= 0.5, y1 += 0.5;
  const double padx = 0.05 * (x1 - x0), pady = 0.05 * (y1 - y0);
  x0 -= padx, x1 += padx, y0 -= pady, y1 += pady;
  auto X = [&](double x) { return ml + (x - x0) / (x1 - x0) * (W - ml - mr); };
  auto Y = [&](double y) { return H - mb - (y - y0) / (y1 - y0) * (H - mt - mb); };

  std::ostringstream o;
  o << std::setprecision(6);
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o << "<text x=\"" << W / 2 << "\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"15\">"
    << xml_escape(s.title) << "</text>\n";
  o << "<line x1=\"" << ml << "\" y1=\"" << H - mb << "\" x2=\"" << W - mr << "\" y2=\"" << H - mb
    << "\" stroke=\"black\"/>\n";
  o << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\"" << H - mb << "\" stroke=\"black\"/>\n";
  for (int t = 0; t <= 4; ++t) {
    const double xv = x0 + (x1 - x0) * t / 4, yv = y0 + (y1 - y0) * t / 4;
    o << "<text x=\"" << X(xv) << "\" y=\"" << H - mb + 16
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">" << fmt(xv) << "</text>\n";
    o << "<text x=\"" << ml - 6 << "\" y=\"" << Y(yv) + 4
      << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">" << fmt(yv) << "</text>\n";
  }
  o << "<text x=\"" << (ml + W - mr) / 2 << "\" y=\"" << H - 12
    << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">" << xml_escape(s.xlabel) << "</text>\n";
  o << "<text x=\"16\" y=\"" << (mt + H - mb) / 2 << "\" transform=\"rotate(-90 16 " << (mt + H - mb) / 2
    << ")\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">" << xml_escape(s.ylabel)
    << "</text>\n";
  if (s.fit) {
    const auto [a, b] = *s.fit;
    o << "<line x1=\"" << X(x0) << "\" y1=\"" << Y(a * x0 + b) << "\" x2=\"" << X(x1) << "\" y2=\"" << Y(a * x1 + b)
      << "\" stroke=\"#c33\" stroke-dasharray=\"5,3\"/>\n";
    o << "<text x=\"" << W - mr - 4 << "\" y=\"" << mt + 14
      << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"12\" fill=\"#c33\">slope " << fmt(a)
      << "</text>\n";
  }
  for (auto i : keep)
    o << "<circle cx=\"" << X(s.x[i]) << "\" cy=\"" << Y(s.y[i]) << "\" r=\"3.5\" fill=\"#236\"/>\n";
  o << "</svg>\n";
  return o.str();
}

void write_outputs(const RunResult& r, const std::string& out, bool plot) {
  auto write = [](const std::string& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write '" + path + "'");
    f << text;
  };
  write(out + ".json", r.report.dump(2) + "\n");
  write(out + ".csv", trials_csv(r.trials));
  write(out + ".manifest.json", r.manifest.dump(2) + "\n");
  if (plot)
    for (std::size_t i = 0; i < r.plots.size(); ++i)
      write(r.plots.size() == 1 ? out + ".svg" : out + "." + std::to_string(i + 1) + ".svg", render_svg(r.plots[i]));
}

}  // namespace tflab
