#include "kdiag/scenario.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <functional>
#include <type_traits>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <future>
#include <thread>

#include "json.hpp"
#include "kdiag/banded.hpp"
#include "kdiag/certify.hpp"
#include "kdiag/construct.hpp"
#include "kdiag/serialize.hpp"

namespace kdiag {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string fmt(double v) {
  if (!std::isfinite(v)) return v > 0 ? "inf" : (v < 0 ? "-inf" : "nan");
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

long now_ms_since(const std::chrono::steady_clock::time_point& t0) {
  return std::chrono::duration_cast<std::chrono::milliseconds>(
             std::chrono::steady_clock::now() - t0)
      .count();
}

void write_file_atomic(const fs::path& path, const std::string& content) {
  fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    out << content;
  }
  fs::rename(tmp, path);
}

}  // namespace

PsiFunction log_like_psi(int levels) {
  std::vector<std::pair<double, double>> pts;
  for (int i = 0; i <= levels; ++i)
    pts.emplace_back(std::ldexp(1.0, i) - 1.0, i * std::log(2.0));
  return PsiFunction::piecewise_linear(std::move(pts));
}

ScenarioConfig ScenarioConfig::from_json_text(const std::string& text) {
  json j = json::parse(text, nullptr, false);
  if (j.is_discarded())
    throw ValidationError("config: malformed JSON document");
  ScenarioConfig c;
  auto get = [&](const char* key, auto& slot, bool required) {
    if (j.contains(key))
      slot = j.at(key).get<std::decay_t<decltype(slot)>>();
    else if (required)
      throw ValidationError(std::string("config: missing required field '") +
                            key + "'");
  };
  get("scenario", c.scenario, true);
  get("output_dir", c.output_dir, true);
  if (!j.contains("seed"))
    throw ValidationError("config: the seed is mandatory");
  c.seed = j.at("seed").get<std::uint64_t>();
  get("d", c.d, false);
  get("n", c.n, false);
  get("mesh", c.mesh, false);
  get("spaces", c.spaces, false);
  get("psis", c.psis, false);
  get("m_min", c.m_min, false);
  get("m_max", c.m_max, false);
  get("k_max", c.k_max, false);
  get("epsilon", c.epsilon, false);
  get("tau_q", c.tau_q, false);
  get("m_cap", c.m_cap, false);
  get("dump_operators", c.dump_operators, false);
  get("dump_spectrum", c.dump_spectrum, false);
  get("workers", c.workers, false);
  return c;
}

ScenarioConfig ScenarioConfig::from_json_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("config: cannot open " + path);
  std::string text((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  return from_json_text(text);
}

std::string ScenarioConfig::to_json_text() const {
  json j = {{"scenario", scenario},
            {"d", d},
            {"n", n},
            {"mesh", mesh},
            {"spaces", spaces},
            {"psis", psis},
            {"m_min", m_min},
            {"m_max", m_max},
            {"k_max", k_max},
            {"epsilon", epsilon},
            {"tau_q", tau_q},
            {"m_cap", m_cap},
            {"seed", seed},
            {"output_dir", output_dir},
            {"dump_operators", dump_operators},
            {"dump_spectrum", dump_spectrum},
            {"workers", workers}};
  return j.dump(2);
}

void ScenarioConfig::validate() const {
  static const std::vector<std::string> known{
      "mult1d", "multnd", "appendixA", "shift_certificate", "sweep_psi"};
  if (std::find(known.begin(), known.end(), scenario) == known.end())
    throw ValidationError("config: unknown scenario '" + scenario + "'");
  if (output_dir.empty()) throw ValidationError("config: empty output_dir");
  if (mesh != "uniform" && mesh != "unit")
    throw ValidationError("config: mesh must be 'uniform' or 'unit'");
  for (const std::string& s : spaces) SpaceSpec::parse(s);
  for (const std::string& p : psis) PsiFunction::parse(p);
  if (scenario == "mult1d" || scenario == "multnd" ||
      scenario == "appendixA") {
    if (d < 2) throw ValidationError("config: d >= 2 required");
    if (m_max < m_min || m_min < 0)
      throw ValidationError("config: bad m range");
  }
  if (scenario == "multnd") {
    if (n < 1) throw ValidationError("config: n >= 1 required");
    auto side = static_cast<Eigen::Index>(
        std::llround(std::pow(static_cast<double>(d), 1.0 / n)));
    Eigen::Index total = 1;
    for (int j = 0; j < n; ++j) total *= side;
    if (total != d)
      throw ValidationError("config: multnd needs d = side^n exactly");
  }
  if (scenario == "appendixA") {
    if (spaces.size() != 1)
      throw ValidationError("config: appendixA takes exactly one space");
    if (k_max < 0) throw ValidationError("config: k_max >= 0 required");
  }
  if (scenario == "sweep_psi") {
    if (psis.empty())
      throw ValidationError("config: sweep_psi needs at least one psi");
    if (m_max < 4) throw ValidationError("config: sweep_psi needs m_max >= 4");
    if (!(tau_q > 0)) throw ValidationError("config: tau_q > 0 required");
  }
}

std::string rows_to_csv(const std::vector<ResultRow>& rows) {
  std::string out =
      "scenario,d,n,index,space,metric,measured,bound,slack,wall_ms\n";
  for (const ResultRow& r : rows) {
    out += r.scenario + "," + std::to_string(r.d) + "," + std::to_string(r.n) +
           "," + fmt(r.index) + "," + r.space + "," + r.metric + "," +
           fmt(r.measured) + "," + fmt(r.bound) + "," +
           fmt(r.bound - r.measured) + "," + std::to_string(r.wall_ms) + "\n";
  }
  return out;
}

namespace {

struct MultModel {
  AlgebraPtr alg;
  HermTuple alpha;
  MatOp q;
  JointSpectrum J;
};

MultModel build_mult_model(const ScenarioConfig& c) {
  double w = c.mesh == "uniform" ? 1.0 / static_cast<double>(c.d) : 1.0;
  AlgebraPtr alg = make_simple_algebra(c.d, w);
  int n = c.scenario == "mult1d" ? 1 : c.n;
  auto side = static_cast<Eigen::Index>(
      std::llround(std::pow(static_cast<double>(c.d), 1.0 / n)));
  std::vector<MatOp> entries;
  for (int j = 0; j < n; ++j) {
    Eigen::VectorXd diag(c.d);
    Eigen::Index stride = 1;
    for (int l = j + 1; l < n; ++l) stride *= side;
    for (Eigen::Index i = 0; i < c.d; ++i)
      diag[i] =
          static_cast<double>((i / stride) % side) / static_cast<double>(side);
    entries.push_back(MatOp::diagonal(alg, {diag}));
  }
  HermTuple alpha(entries);
  MatOp q = MatOp::rank_one(alg, 0, Eigen::VectorXcd::Ones(c.d));
  JointSpectrum J = joint_diagonalize(alpha);
  return {alg, std::move(alpha), std::move(q), std::move(J)};
}

// deterministic ordering of the emitted rows
void sort_rows(std::vector<ResultRow>& rows) {
  std::stable_sort(rows.begin(), rows.end(),
                   [](const ResultRow& a, const ResultRow& b) {
                     if (a.metric != b.metric) return a.metric < b.metric;
                     if (a.space != b.space) return a.space < b.space;
                     return a.index < b.index;
                   });
}

template <class Task>
std::vector<std::vector<ResultRow>> run_parallel(int workers,
                                                 const std::vector<Task>& ts) {
  unsigned hw = std::thread::hardware_concurrency();
  unsigned count = workers > 0 ? static_cast<unsigned>(workers)
                               : (hw > 0 ? std::min(hw, 8u) : 1u);
  std::vector<std::vector<ResultRow>> out(ts.size());
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (unsigned t = 0; t < count; ++t)
    pool.emplace_back([&]() {
      for (;;) {
        std::size_t i = next.fetch_add(1);
        if (i >= ts.size()) break;
        out[i] = ts[i]();
      }
    });
  for (auto& th : pool) th.join();
  return out;
}

RunOutcome run_mult(const ScenarioConfig& c) {
  MultModel model = build_mult_model(c);
  const int n = model.J.n();
  std::vector<SpaceSpec> spaces;
  for (const std::string& s : c.spaces) spaces.push_back(SpaceSpec::parse(s));
  std::vector<PsiFunction> psis;
  for (const std::string& p : c.psis) psis.push_back(PsiFunction::parse(p));

  using Task = std::function<std::vector<ResultRow>()>;
  std::vector<Task> tasks;
  for (int m = c.m_min; m <= c.m_max; ++m) {
    tasks.push_back([&, m]() {
      auto t0 = std::chrono::steady_clock::now();
      std::vector<ResultRow> rows;
      ApproxUnitReport rep = build_approx_unit(model.J, model.q, m);
      double tau_q = rep.tau_q;
      rows.push_back({c.scenario, c.d, n, static_cast<double>(m), "linf",
                      "inf_comm", rep.inf_comm, rep.bound_inf, 0});
      rows.push_back({c.scenario, c.d, n, static_cast<double>(m), "trace",
                      "tau_pm", rep.tau_p, rep.bound_tau, 0});
      for (const PsiFunction& psi : psis) {
        double rhs = std::max(2.0 * tau_q, 1.0) *
                     std::ldexp(psi(std::ldexp(1.0, m * n)), -m);
        for (int j = 0; j < n; ++j) {
          double lhs =
              rep.commutator_norm(j, SpaceSpec::lorentz(psi));
          rows.push_back({c.scenario, c.d, n, static_cast<double>(m),
                          psi.to_string(), "lorentz_comm_j" + std::to_string(j),
                          lhs, rhs, 0});
        }
      }
      for (const SpaceSpec& sp : spaces) {
        double measured = 0.0;
        for (int j = 0; j < n; ++j)
          measured = std::max(measured, rep.commutator_norm(j, sp));
        // support bound: ||x||_E <= ||x||_inf phi_E(tau(l(x))),
        // tau(l([p,a])) <= 2 tau(p_m)
        double bound =
            rep.inf_comm * std::max(fundamental_function(sp, 2.0 * rep.tau_p),
                                    1.0);
        rows.push_back({c.scenario, c.d, n, static_cast<double>(m),
                        sp.to_string(), "space_comm", measured, bound, 0});
      }
      long ms = now_ms_since(t0);
      for (ResultRow& r : rows) r.wall_ms = ms;
      return rows;
    });
  }
  RunOutcome out;
  for (auto& chunk : run_parallel(c.workers, tasks))
    out.rows.insert(out.rows.end(), chunk.begin(), chunk.end());
  sort_rows(out.rows);

  json summary = {{"scenario", c.scenario}, {"rows", out.rows.size()}};
  out.result_json = summary.dump(2);
  return out;
}

RunOutcome run_appendix(const ScenarioConfig& c) {
  MultModel model = build_mult_model(c);
  SpaceSpec E = SpaceSpec::parse(c.spaces.at(0));
  auto t0 = std::chrono::steady_clock::now();
  auto reports = kuroda_diagonalize_single(model.alpha.entry(0), model.q, E,
                                           c.k_max);
  long ms = now_ms_since(t0);

  RunOutcome out;
  double scale = reports.empty() ? 1.0 : reports.front().scale;
  for (const auto& rep : reports) {
    out.rows.push_back({c.scenario, c.d, 1, static_cast<double>(rep.k),
                        E.to_string(), "residual_e_cap_linf",
                        rep.residual.at("e_cap_linf"), rep.bound, ms});
    out.rows.push_back({c.scenario, c.d, 1, static_cast<double>(rep.k),
                        E.to_string(), "telescoping_gap", rep.telescoping_gap,
                        1e-10 * std::max(1.0, scale), ms});
  }
  sort_rows(out.rows);
  json summary = {{"scenario", c.scenario},
                  {"generating", reports.empty() || reports.front().generating},
                  {"k_max", c.k_max},
                  {"space", E.to_string()}};
  out.result_json = summary.dump(2);
  return out;
}

RunOutcome run_shift(const ScenarioConfig& c) {
  auto t0 = std::chrono::steady_clock::now();
  BandedOp S = BandedOp::shift();
  BandedOp a = BandedOp::real_part(S);
  BandedOp g = BandedOp::imag_part(S);
  BandedOp y = banded_commutator(a, g) * Complex(0, 1);
  TraceResult tr = banded_trace(
      y, DecayCertificate::eventually_zero(
             static_cast<Eigen::Index>(4 + y.bandwidth())));

  // finite-corner contrast: the same pair compressed to a corner has a
  // traceless commutator
  const Eigen::Index N = 64;
  BandedOp ac = BandedOp::corner_embedding(a.corner(N));
  BandedOp gc = BandedOp::corner_embedding(g.corner(N));
  BandedOp yc = banded_commutator(ac, gc) * Complex(0, 1);
  TraceResult trc = banded_trace(
      yc, DecayCertificate::eventually_zero(2 * N + 2));

  DualCertificate cert = dual_certificate(
      {a}, {g}, PsiFunction::power_root(1.0), {g.band_sum_bound()});
  long ms = now_ms_since(t0);

  RunOutcome out;
  out.rows.push_back({c.scenario, 0, 1, 0, "l1", "trace", tr.value, 0.5, ms});
  out.rows.push_back(
      {c.scenario, 0, 1, 0, "l1", "corner_trace", trc.value, 0.0, ms});
  out.rows.push_back({c.scenario, 0, 1, 0, "l1", "certificate",
                      cert.lower_bound, 0.5, ms});
  sort_rows(out.rows);
  json summary = {{"trace", tr.value},
                  {"corner_trace", trc.value},
                  {"certificate", cert.lower_bound},
                  {"denominator", cert.denominator},
                  {"psi", cert.psi}};
  out.result_json = summary.dump(2);
  return out;
}

RunOutcome run_sweep_psi(const ScenarioConfig& c) {
  RunOutcome out;
  json verdicts = json::array();
  for (const std::string& text : c.psis) {
    auto t0 = std::chrono::steady_clock::now();
    PsiFunction psi = PsiFunction::parse(text);
    EmbeddingVerdict v = embedding_test_ln1(psi, c.n, c.m_max);
    long ms = now_ms_since(t0);
    double psi1 = psi(1.0);
    for (int m = 0; m <= c.m_max; ++m) {
      // scaling bound: psi(2^{mn}) <= 2^{mn} psi(1), so r_m <= 2^{m(n-1)} psi(1)
      double bound = std::ldexp(psi1, m * (c.n - 1));
      out.rows.push_back({c.scenario, 0, c.n, static_cast<double>(m), text,
                          "embed_ratio", v.ratios[static_cast<size_t>(m)],
                          bound, ms});
    }
    json entry = {{"psi", text},
                  {"verdict", v.kind == EmbeddingKind::Embedded
                                  ? "embedded"
                                  : (v.kind == EmbeddingKind::NotEmbedded
                                         ? "not_embedded"
                                         : "inconclusive")},
                  {"witness", v.witness}};
    json levels = json::array();
    for (int k = 0; k <= c.k_max; ++k) {
      try {
        int mk = select_mk(psi, c.tau_q, k, c.n, c.m_cap);
        out.rows.push_back({c.scenario, 0, c.n, static_cast<double>(k), text,
                            "m_k", static_cast<double>(mk),
                            static_cast<double>(c.m_cap), ms});
        levels.push_back({{"k", k}, {"m_k", mk}});
      } catch (const UnreachableLevelError& e) {
        levels.push_back({{"k", k},
                          {"unreachable", true},
                          {"bound_at_cap", e.bound_at_cap}});
        break;
      }
    }
    entry["select_mk"] = levels;
    verdicts.push_back(std::move(entry));
  }
  sort_rows(out.rows);
  out.result_json = json{{"scenario", c.scenario}, {"psis", verdicts}}.dump(2);
  return out;
}

}  // namespace

RunOutcome run_scenario(const ScenarioConfig& config) {
  RunOutcome out;
  try {
    config.validate();
  } catch (const ValidationError& e) {
    out.exit_code = 2;
    out.error_kind = "config-error";
    out.message = e.what();
    return out;
  }
  try {
    fs::path dir(config.output_dir);
    json manifest = {
        {"artifact", "kdiag"},
        {"version", "0.1.0"},
        {"format", 1},
        {"config", json::parse(config.to_json_text())},
    };
    write_file_atomic(dir / "manifest.json", manifest.dump(2) + "\n");

    if (config.scenario == "mult1d" || config.scenario == "multnd")
      out = run_mult(config);
    else if (config.scenario == "appendixA")
      out = run_appendix(config);
    else if (config.scenario == "shift_certificate")
      out = run_shift(config);
    else
      out = run_sweep_psi(config);

    write_file_atomic(dir / "results.csv", rows_to_csv(out.rows));
    write_file_atomic(dir / "result.json", out.result_json + "\n");
    if (config.dump_operators &&
        (config.scenario == "mult1d" || config.scenario == "multnd" ||
         config.scenario == "appendixA")) {
      MultModel model = build_mult_model(config);
      write_file_atomic(dir / "ops.json", tuple_to_json(model.alpha));
      if (config.dump_spectrum)
        write_file_atomic(dir / "spectrum.csv", eigen_tuples_csv(model.J));
    }
  } catch (const UnreachableLevelError& e) {
    out.exit_code = 3;
    out.error_kind = "precondition-error";
    out.message = e.what();
  } catch (const EmbeddingPreconditionError& e) {
    out.exit_code = 3;
    out.error_kind = "precondition-error";
    out.message = e.what();
  } catch (const ValidationError& e) {
    out.exit_code = 2;
    out.error_kind = "config-error";
    out.message = e.what();
  } catch (const std::exception& e) {
    out.exit_code = 1;
    out.error_kind = "runtime-error";
    out.message = e.what();
  }
  return out;
}

}  // namespace kdiag
