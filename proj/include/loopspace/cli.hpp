#ifndef LOOPSPACE_CLI_HPP
#define LOOPSPACE_CLI_HPP

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "loopspace/discretize.hpp"
#include "loopspace/io.hpp"
#include "loopspace/loop.hpp"
#include "loopspace/metric.hpp"
#include "loopspace/occupation.hpp"
#include "loopspace/reconstruct.hpp"

namespace loopspace::cli {

using io::json;

enum class Status : int { ok = 0, invalid = 1, findings = 2 };

struct RunConfig {
  std::string command;
  std::uint64_t seed = 0;
  std::optional<double> tol;
  std::string format = "text";

  std::string loop, a, b, table;
  std::string pattern;
  std::string out, report, witness;

  std::optional<double> eps;
  std::string eps_ladder;
  bool quotient = false;
  int qmax = 6;

  std::string suite = "all";
  std::optional<std::size_t> trials;
  std::optional<std::size_t> samples;

  // generate
  std::size_t segments = 4;
  std::size_t labels = 3;
  std::size_t dim = 0;
};

struct RunResult {
  Status status = Status::ok;
  /// Report text for standard output (empty on failure).
  std::string report;
  /// Diagnostic for standard error (empty on success).
  std::string error;

  int exit_code() const { return static_cast<int>(status); }
};

namespace detail {

struct Outcome {
  json report;
  /// Value printed alone in text format, when the command has one.
  std::optional<std::string> headline;
  std::vector<std::pair<std::filesystem::path, std::string>> files;
  Status status = Status::ok;
};

inline std::string dump(const json &j) { return j.dump(2) + "\n"; }

/// "key: value" lines; numbers fixed at nine decimals, containers as JSON.
inline std::string render_text(const json &j) {
  std::string out;
  for (const auto &[key, value] : j.items()) {
    out += key;
    out += ": ";
    if (value.is_number_float())
      out += io::format_number(value.get<double>());
    else if (value.is_string())
      out += value.get<std::string>();
    else
      out += value.dump();
    out += "\n";
  }
  return out;
}

inline void require(bool ok, const std::string &what) {
  if (!ok)
    throw domain_error(what);
}

inline std::vector<double> parse_ladder(const std::string &text) {
  std::vector<double> out;
  const auto parts = io::detail::split(text, ',');
  for (std::size_t i = 0; i < parts.size(); ++i)
    out.push_back(io::detail::parse_real(
        parts[i], "eps-ladder[" + std::to_string(i) + "]"));
  return out;
}

inline SpacePtr alphabet(std::size_t n) {
  static const char *names[] = {"x", "y", "z", "w", "v", "u", "t", "s"};
  require(n >= 1 && n <= 8, "labels must lie in [1, 8]");
  return StateSpace::discrete(std::vector<std::string>(names, names + n));
}

/// Random adjacent-distinct word of at most `max_segments` segments.
inline Loop random_word(const SpacePtr &space, std::size_t max_segments,
                        Rng &rng) {
  std::size_t q = 1;
  if (space->size() > 1) {
    do
      q = 1 + uniform_index(rng, max_segments);
    while (space->size() == 2 && q > 1 && q % 2 == 1);
  }
  return generate_random_loop(space, q, rng());
}

inline Pattern random_label_pattern(const StateSpace &space, std::size_t n,
                                    Rng &rng) {
  std::vector<PatternEntry> cells;
  for (std::size_t k = 0; k < n; ++k)
    cells.emplace_back(State{LabelId{uniform_index(rng, space.size())}});
  return Pattern(std::move(cells));
}

inline double relative_gap(double x, double y) {
  const double scale = std::max(std::abs(x), std::abs(y));
  return scale == 0.0 ? 0.0 : std::abs(x - y) / scale;
}

inline json loop_brief(const Loop &l) { return io::loop_to_json(l)["word"]; }

// Commands

inline Outcome generate(const RunConfig &c) {
  const SpacePtr space =
      c.dim > 0 ? StateSpace::euclidean(c.dim) : alphabet(c.labels);
  const Loop l = generate_random_loop(space, c.segments, c.seed);
  Outcome o;
  o.report = io::loop_to_json(l);
  if (!c.out.empty())
    o.files.emplace_back(c.out, dump(o.report));
  return o;
}

inline Outcome occupation(const RunConfig &c) {
  require(!c.loop.empty(), "occupation: --loop is required");
  const io::LoopFile f = io::read_loop_file(c.loop);
  Outcome o;
  o.report["command"] = "occupation";
  if (!c.pattern.empty()) {
    const Pattern p = io::parse_pattern(f.loop.space(), c.pattern);
    const double v = multi_occupation(f.loop, p);
    o.report["property"] = "multi-occupation time of the pattern";
    o.report["pattern"] = io::pattern_to_text(f.loop.space(), p);
    o.report["value"] = v;
    o.headline = io::format_number(v);
    return o;
  }
  const OccupationMeasure m = occupation_measure(f.loop);
  o.report["property"] = "one-point occupation times";
  json per = json::object();
  std::string text;
  for (const auto &[key, mass] : m.entries) {
    const auto name = f.loop.space().name(std::get<State>(key));
    per[name] = mass;
    text += name + ": " + io::format_number(mass) + "\n";
  }
  o.report["occupation"] = std::move(per);
  o.report["total"] = m.total;
  text += "total: " + io::format_number(m.total);
  o.headline = std::move(text);
  return o;
}

inline Outcome distance(const RunConfig &c) {
  require(!c.a.empty() && !c.b.empty(), "distance: --a and --b are required");
  const io::LoopFile fa = io::read_loop_file(c.a);
  const io::LoopFile fb = io::read_loop_file(c.b);
  const DistanceResult r = c.quotient ? loop_distance(fa.based(), fb.loop)
                                      : based_distance(fa.based(), fb.based());
  Outcome o;
  o.report["command"] = "distance";
  o.report["property"] = c.quotient ? "loop distance between rotation classes"
                                    : "Skorokhod distance between based loops";
  o.report["value"] = r.value;
  o.report["certified_upper_bound"] = r.certified_upper_bound;
  if (r.witness_offset)
    o.report["offset"] = *r.witness_offset;
  o.headline = io::format_number(r.value);
  if (!c.witness.empty())
    o.files.emplace_back(c.witness, dump(io::witness_to_json(r)));
  return o;
}

inline json cell_json(const StateSpace &space, const PatternEntry &cell) {
  if (const auto *s = std::get_if<State>(&cell))
    return io::state_to_json(space, *s);
  const auto &b = std::get<Box>(cell);
  return json{{"min", b.min}, {"max", b.max}};
}

inline Outcome discretize(const RunConfig &c) {
  require(!c.loop.empty(), "discretize: --loop is required");
  require(c.eps.has_value(), "discretize: --eps is required");
  const io::LoopFile f = io::read_loop_file(c.loop);
  const BasedLoop based = f.based();
  const OccupationMeasure m = occupation_measure(f.loop);
  const Partition part = build_partition(f.loop.space_ptr(), m, *c.eps, c.seed);
  const PartitionCheck check = check_partition(part, m);
  const InducedTrace trace = induced_trace(based, part);
  const TraceIdentityReport ident = verify_trace_identity(
      based, part, 3, kTraceTupleCap, c.tol.value_or(1e-9));

  Outcome o;
  json &r = o.report;
  r["command"] = "discretize";
  r["property"] = "trace identity for the induced discrete loop";
  r["epsilon"] = *c.eps;
  r["margin"] = part.margin();
  json cells = json::array();
  for (std::size_t i = 0; i < part.size(); ++i)
    cells.push_back(
        {{"cell", cell_json(part.space(), part.cell(i))},
         {"representative",
          io::state_to_json(part.space(), part.representative(i))}});
  r["cells"] = std::move(cells);
  r["partition"] = {{"diameters_below_epsilon", check.diameters_below_epsilon},
                    {"positive_separation", check.positive_separation},
                    {"support_off_boundaries", check.support_off_boundaries},
                    {"leaked_mass", check.leaked_mass}};
  r["t_eps"] = trace.time_change.t_eps;
  r["trace_identity"] = {{"holds", ident.holds},
                         {"tuples_checked", ident.tuples_checked},
                         {"worst_relative", ident.worst_relative}};
  r["induced_loop"] = io::loop_to_json(trace.loop);
  if (!c.eps_ladder.empty()) {
    require(!c.b.empty(), "discretize: --eps-ladder needs a second loop in --b");
    const io::LoopFile f2 = io::read_loop_file(c.b);
    const auto rep = convergence_experiment(based, f2.based(),
                                            parse_ladder(c.eps_ladder), c.seed);
    json rows = json::array();
    for (const auto &row : rep.rows) {
      json jr{{"epsilon", row.epsilon}, {"cells", row.cells}, {"equal", row.equal}};
      if (row.offset)
        jr["offset"] = *row.offset;
      if (row.sup_distance)
        jr["sup_distance"] = *row.sup_distance;
      rows.push_back(std::move(jr));
    }
    json conv{{"rows", rows}};
    if (rep.limiting_offset)
      conv["limiting_offset"] = *rep.limiting_offset;
    if (rep.final_sup_distance)
      conv["final_sup_distance"] = *rep.final_sup_distance;
    r["convergence"] = std::move(conv);
  }
  if (!check.ok() || !ident.holds)
    o.status = Status::findings;

  if (!c.out.empty()) {
    o.files.emplace_back(c.out, dump(io::loop_to_json(trace.loop)));
    const std::string sidecar =
        c.report.empty() ? c.out + ".report.json" : c.report;
    o.files.emplace_back(sidecar, dump(r));
  } else if (!c.report.empty()) {
    o.files.emplace_back(c.report, dump(r));
  }
  return o;
}

inline Outcome reconstruct(const RunConfig &c) {
  require(c.loop.empty() != c.table.empty(),
          "reconstruct: give exactly one of --loop and --table");
  std::optional<FieldOracle> oracle;
  if (!c.loop.empty()) {
    oracle = FieldOracle::from_loop(io::read_loop_file(c.loop).loop);
  } else {
    const io::RecordedTable t = io::parse_table(io::read_json_file(c.table));
    oracle = FieldOracle::from_table(t.space, t.entries);
  }
  ReconstructOptions opt;
  opt.q_max = c.qmax;
  opt.seed = c.seed;
  if (c.tol)
    opt.tol = *c.tol;
  const ReconstructionResult res = reconstruct_loop(*oracle, opt);
  const Loop l = canonical_form(res.loop);
  Outcome o;
  o.report["command"] = "reconstruct";
  o.report["property"] = "loop recovered from its multi-occupation field";
  o.report["segments"] = l.size();
  o.report["residual"] = res.residual;
  o.report["candidates_tried"] = res.candidates_tried;
  o.report["loop"] = io::loop_to_json(l);
  if (!c.out.empty())
    o.files.emplace_back(c.out, dump(io::loop_to_json(l)));
  return o;
}

// Campaigns. Trial i draws from derive_seed(seed, i), so results do not
// depend on evaluation order.

struct Suite {
  const char *name;
  const char *property;
  std::size_t default_trials;
  std::function<json(const RunConfig &, std::size_t, std::size_t &)> body;
};

inline json occupation_suite(const RunConfig &c, std::size_t trials,
                             std::size_t &failures) {
  const std::size_t samples = c.samples.value_or(100000);
  const SpacePtr space = alphabet(3);
  double worst = 0.0;
  json failed = json::array();
  for (std::size_t i = 0; i < trials; ++i) {
    Rng rng = make_rng(derive_seed(c.seed, i));
    const Loop l = random_word(space, 6, rng);
    const Pattern p = random_label_pattern(*space, 1 + uniform_index(rng, 3), rng);
    const double dp = multi_occupation(l, p);
    const auto mc = monte_carlo_occupation(l, p, samples, rng());
    const double bound = std::max(4.0 * mc.standard_error,
                                  1e-6 * std::pow(l.duration(), p.size()));
    const double err = std::abs(dp - mc.estimate);
    worst = std::max(worst, err / bound);
    if (err > bound) {
      ++failures;
      failed.push_back(i);
    }
  }
  return {{"samples", samples},
          {"worst_error_over_bound", worst},
          {"failed_trials", failed}};
}

inline json invariance_suite(const RunConfig &c, std::size_t trials,
                             std::size_t &failures) {
  const double tol = c.tol.value_or(1e-12);
  double worst = 0.0;
  json failed = json::array();
  for (std::size_t i = 0; i < trials; ++i) {
    Rng rng = make_rng(derive_seed(c.seed, i));
    const SpacePtr space = alphabet(2 + uniform_index(rng, 3));
    const Loop l = random_word(space, 6, rng);
    const Pattern p = random_label_pattern(*space, 1 + uniform_index(rng, 4), rng);
    const double base = multi_occupation(l, p);
    double gap = 0.0;
    for (std::size_t j = 1; j < p.size(); ++j)
      gap = std::max(gap, relative_gap(base, multi_occupation(l, rotate_pattern(p, j))));
    for (std::size_t k = 1; k < l.size(); ++k)
      gap = std::max(gap, relative_gap(base, multi_occupation(shift(l, k), p)));
    worst = std::max(worst, gap);
    if (gap > tol) {
      ++failures;
      failed.push_back(i);
    }
  }
  return {{"tolerance", tol}, {"worst_relative", worst}, {"failed_trials", failed}};
}

inline json injectivity_suite(const RunConfig &c, std::size_t trials,
                              std::size_t &failures) {
  // Trials are spread over alphabets of 2 to 5 labels.
  InjectivityReport total;
  total.separation_lengths.assign(7, 0);
  json unseparated = json::array();
  for (std::size_t k = 0; k < 4; ++k) {
    const std::size_t share = trials / 4 + (k < trials % 4 ? 1 : 0);
    if (share == 0)
      continue;
    const auto r =
        verify_injectivity(alphabet(2 + k), share, 6, 6, derive_seed(c.seed, k));
    total.trials += r.trials;
    total.equivalent += r.equivalent;
    total.separated += r.separated;
    total.unseparated += r.unseparated;
    total.equivalent_disagreements += r.equivalent_disagreements;
    for (std::size_t n = 0; n < r.separation_lengths.size(); ++n)
      total.separation_lengths[n] += r.separation_lengths[n];
    for (const auto &pair : r.unseparated_pairs)
      unseparated.push_back({{"a", loop_brief(pair.a)}, {"b", loop_brief(pair.b)}});
    for (const auto &pair : r.disagreeing_pairs)
      unseparated.push_back({{"a", loop_brief(pair.a)}, {"b", loop_brief(pair.b)}});
  }
  failures = total.unseparated + total.equivalent_disagreements;
  json lengths = json::object();
  for (std::size_t n = 1; n < total.separation_lengths.size(); ++n)
    lengths[std::to_string(n)] = total.separation_lengths[n];
  return {{"equivalent_pairs", total.equivalent},
          {"separated_pairs", total.separated},
          {"unseparated_pairs", total.unseparated},
          {"equivalent_disagreements", total.equivalent_disagreements},
          {"separation_lengths", lengths},
          {"offending_pairs", unseparated}};
}

inline json reconstruction_suite(const RunConfig &c, std::size_t trials,
                                 std::size_t &failures) {
  const double tol = c.tol.value_or(1e-6);
  double worst = 0.0;
  json failed = json::array();
  for (std::size_t i = 0; i < trials; ++i) {
    Rng rng = make_rng(derive_seed(c.seed, i));
    const SpacePtr space = alphabet(2 + uniform_index(rng, 3));
    const Loop l = random_word(space, 6, rng);
    ReconstructOptions opt;
    opt.tol = tol;
    opt.seed = rng();
    bool ok = false;
    try {
      const auto r = reconstruct_loop(FieldOracle::from_loop(l), opt);
      worst = std::max(worst, r.residual);
      ok = r.residual < tol && equals_up_to_rotation(r.loop, l, 1e-6).equal;
    } catch (const not_found_error &e) {
      worst = std::max(worst, e.best_residual());
    }
    if (!ok) {
      ++failures;
      failed.push_back(i);
    }
  }
  return {{"tolerance", tol}, {"worst_residual", worst}, {"failed_trials", failed}};
}

inline json metric_suite(const RunConfig &c, std::size_t trials,
                         std::size_t &failures) {
  const double tol = c.tol.value_or(1e-5);
  std::size_t self = 0, symmetry = 0, triangle = 0;
  double worst_sym = 0.0, worst_tri = 0.0;
  for (std::size_t i = 0; i < trials; ++i) {
    Rng rng = make_rng(derive_seed(c.seed, i));
    const SpacePtr space = alphabet(2 + uniform_index(rng, 2));
    const Loop a = random_word(space, 4, rng);
    const Loop b = random_word(space, 4, rng);
    const Loop d = random_word(space, 4, rng);
    const BasedLoop ab = based_at_segment(a, 0);
    if (based_distance(ab, ab).value != 0.0)
      ++self;
    const double dab = loop_distance(a, b).value;
    const double dba = loop_distance(b, a).value;
    const double dad = loop_distance(a, d).value;
    const double dbd = loop_distance(b, d).value;
    const double sym = std::abs(dab - dba);
    const double tri = dad - (dab + dbd);
    worst_sym = std::max(worst_sym, sym);
    worst_tri = std::max(worst_tri, tri);
    symmetry += sym > tol;
    triangle += tri > tol;
  }
  failures = self + symmetry + triangle;
  return {{"tolerance", tol},
          {"self_distance_failures", self},
          {"symmetry_failures", symmetry},
          {"triangle_failures", triangle},
          {"worst_asymmetry", worst_sym},
          {"worst_triangle_excess", worst_tri}};
}

inline json discretize_suite(const RunConfig &c, std::size_t trials,
                             std::size_t &failures) {
  const double tol = c.tol.value_or(1e-9);
  std::size_t partition_failures = 0, identity_failures = 0,
              convergence_failures = 0;
  for (std::size_t i = 0; i < trials; ++i) {
    Rng rng = make_rng(derive_seed(c.seed, i));
    const SpacePtr space = StateSpace::euclidean(1 + uniform_index(rng, 2));
    const Loop l = generate_random_loop(space, 2 + uniform_index(rng, 5), rng());
    const BasedLoop l1 = based_at_segment(l, 0);
    const double eps = uniform(rng, 0.05, 1.0);
    const OccupationMeasure m = occupation_measure(l);
    const Partition part = build_partition(space, m, eps, rng());
    partition_failures += !check_partition(part, m).ok();
    identity_failures +=
        !verify_trace_identity(l1, part, 3, kTraceTupleCap, tol).holds;

    std::optional<BasedLoop> l2;
    double shift_by = 0.0;
    while (!l2) {
      shift_by = uniform(rng, 0.0, l.duration());
      l2 = rotate(l1, shift_by);
    }
    const std::vector<double> ladder{0.5, 0.25, 0.125, 0.0625};
    const auto rep = convergence_experiment(l1, *l2, ladder, rng());
    bool ok = rep.limiting_offset && rep.final_sup_distance &&
              *rep.final_sup_distance == 0.0;
    if (ok) {
      const double err = std::fmod(
          std::abs(*rep.limiting_offset - (l.duration() - shift_by)),
          l.duration());
      ok = std::min(err, l.duration() - err) <= ladder.back();
    }
    convergence_failures += !ok;
  }
  failures = partition_failures + identity_failures + convergence_failures;
  return {{"tolerance", tol},
          {"partition_failures", partition_failures},
          {"trace_identity_failures", identity_failures},
          {"convergence_failures", convergence_failures}};
}

inline const std::vector<Suite> &suites() {
  static const std::vector<Suite> all{
      {"occupation", "exact field agrees with Monte Carlo estimates", 50,
       occupation_suite},
      {"invariance", "field invariant under pattern and loop rotation", 200,
       invariance_suite},
      {"injectivity", "equal fields imply equal loops up to rotation", 200,
       injectivity_suite},
      {"reconstruction", "loops recovered from their fields", 50,
       reconstruction_suite},
      {"metric", "loop distance is symmetric and satisfies the triangle "
                 "inequality", 50,
       metric_suite},
      {"discretize", "partition conditions, trace identity and offset "
                     "recovery", 30,
       discretize_suite},
  };
  return all;
}

inline Outcome verify(const RunConfig &c) {
  std::vector<const Suite *> chosen;
  for (const auto &s : suites())
    if (c.suite == "all" || c.suite == s.name)
      chosen.push_back(&s);
  if (chosen.empty()) {
    std::string names = "all";
    for (const auto &s : suites())
      names += std::string(", ") + s.name;
    throw domain_error("verify: unknown suite '" + c.suite + "' (expected " +
                       names + ")");
  }
  Outcome o;
  o.report["command"] = "verify";
  o.report["seed"] = c.seed;
  json results = json::array();
  std::size_t total_failures = 0;
  std::string text;
  for (const Suite *s : chosen) {
    const std::size_t trials = c.trials.value_or(s->default_trials);
    require(trials >= 1, "verify: --trials must be >= 1");
    std::size_t failures = 0;
    json detail = s->body(c, trials, failures);
    json entry;
    entry["suite"] = s->name;
    entry["property"] = s->property;
    entry["trials"] = trials;
    entry["failures"] = failures;
    entry["status"] = failures == 0 ? "pass" : "fail";
    for (auto &[k, v] : detail.items())
      entry[k] = v;
    text += std::string(failures == 0 ? "PASS " : "FAIL ") + s->name + " (" +
            std::to_string(trials) + " trials, " + std::to_string(failures) +
            " failures)\n";
    total_failures += failures;
    results.push_back(std::move(entry));
  }
  o.report["suites"] = std::move(results);
  o.report["failures"] = total_failures;
  if (!text.empty())
    text.pop_back();
  o.headline = std::move(text);
  if (total_failures > 0)
    o.status = Status::findings;
  if (!c.out.empty())
    o.files.emplace_back(c.out, dump(o.report));
  return o;
}

} // namespace detail

/// Execute one command. Files are written only when the command succeeds.
inline RunResult run(const RunConfig &c) {
  RunResult result;
  try {
    detail::require(c.format == "text" || c.format == "json",
                    "--format must be 'text' or 'json'");
    if (c.tol)
      detail::require(*c.tol > 0.0 && std::isfinite(*c.tol),
                      "--tol must be a positive real");
    if (c.eps)
      detail::require(*c.eps > 0.0 && std::isfinite(*c.eps),
                      "--eps must be a positive real");
    detail::Outcome o;
    if (c.command == "generate")
      o = detail::generate(c);
    else if (c.command == "occupation")
      o = detail::occupation(c);
    else if (c.command == "distance")
      o = detail::distance(c);
    else if (c.command == "discretize")
      o = detail::discretize(c);
    else if (c.command == "reconstruct")
      o = detail::reconstruct(c);
    else if (c.command == "verify")
      o = detail::verify(c);
    else
      throw domain_error("unknown command '" + c.command + "'");

    for (const auto &[path, contents] : o.files)
      io::write_file_atomic(path, contents);
    if (c.format == "json")
      result.report = detail::dump(o.report);
    else if (o.headline)
      result.report = *o.headline + "\n";
    else if (c.command == "generate")
      result.report = detail::dump(o.report);
    else
      result.report = detail::render_text(o.report);
    result.status = o.status;
  } catch (const validation_error &e) {
    result = {Status::invalid, {}, std::string("error: ") + e.what()};
  } catch (const domain_error &e) {
    result = {Status::invalid, {}, std::string("error: ") + e.what()};
  } catch (const not_found_error &e) {
    result = {Status::invalid, {},
              std::string("error: ") + e.what() + " (best residual " +
                  io::format_number(e.best_residual()) + ")"};
  } catch (const construction_error &e) {
    result = {Status::invalid, {}, std::string("error: ") + e.what()};
  } catch (const std::filesystem::filesystem_error &e) {
    result = {Status::invalid, {}, std::string("error: ") + e.what()};
  }
  return result;
}

} // namespace loopspace::cli

#endif // LOOPSPACE_CLI_HPP
