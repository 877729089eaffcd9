#include "pfuchs/json_io.hpp"

#include <fstream>
#include <limits>
#include <sstream>
#include <utility>

namespace pfuchs {

namespace {

// mpz accepts decimal with an optional sign; anything else is a schema
// problem in the surrounding document, not a rational-syntax problem
Int int_from_str(const std::string& s) {
  if (s.empty()) fail("SchemaMismatch", "empty integer string");
  try {
    return Int(s, 10);
  } catch (const std::invalid_argument&) {
    fail("SchemaMismatch", "malformed integer string '" + s + "'");
  }
}

int jget_int(const Json& j, const char* key) {
  const long v = jget_long(j, key);
  if (v < std::numeric_limits<int>::min() || v > std::numeric_limits<int>::max())
    fail("SchemaMismatch", std::string("field '") + key + "' out of range");
  return static_cast<int>(v);
}

const Json& need_array(const Json& j, const char* what) {
  if (!j.is_array()) fail("SchemaMismatch", std::string(what) + " must be an array");
  return j;
}

std::vector<long> long_vec_from_json(const Json& j, const char* what) {
  need_array(j, what);
  std::vector<long> out;
  out.reserve(j.size());
  for (const Json& x : j) {
    if (!x.is_number_integer() && !x.is_number_unsigned())
      fail("SchemaMismatch", std::string(what) + " entries must be integers");
    out.push_back(x.get<long>());
  }
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// Primitives

const Json& jget(const Json& j, const char* key) {
  if (!j.is_object()) fail("SchemaMismatch", std::string("expected an object with '") + key + "'");
  auto it = j.find(key);
  if (it == j.end()) fail("SchemaMismatch", std::string("missing field '") + key + "'");
  return *it;
}

long jget_long(const Json& j, const char* key) {
  const Json& v = jget(j, key);
  if (!v.is_number_integer() && !v.is_number_unsigned())
    fail("SchemaMismatch", std::string("field '") + key + "' must be an integer");
  return v.get<long>();
}

std::string jget_str(const Json& j, const char* key) {
  const Json& v = jget(j, key);
  if (!v.is_string()) fail("SchemaMismatch", std::string("field '") + key + "' must be a string");
  return v.get<std::string>();
}

Json rat_to_json(const Rat& x) { return rat_str(x); }

Rat rat_from_json(const Json& j) {
  if (!j.is_string()) fail("SchemaMismatch", "rational values are strings");
  return parse_rat(j.get<std::string>());
}

Json int_to_json(const Int& x) { return x.get_str(); }

Int int_from_json(const Json& j) {
  if (!j.is_string()) fail("SchemaMismatch", "big integers are strings");
  return int_from_str(j.get<std::string>());
}

Json lognorm_to_json(const LogNorm& v) {
  if (v.is_neg_inf()) return nullptr;
  return rat_str(v.value());
}

// ---------------------------------------------------------------------------
// Scalars

Json scalar_to_json(const PadicScalar& x) {
  Json j = Json::object();
  switch (x.kind()) {
    case PadicScalar::Kind::ExactZero:
      j["zero"] = true;
      break;
    case PadicScalar::Kind::ZeroAtPrec:
      j["zero"] = true;
      j["prec"] = x.abs_prec();
      break;
    case PadicScalar::Kind::Value:
      j["mantissa"] = x.mantissa().get_str();
      j["shift"] = x.shift();
      if (x.is_exact())
        j["exact"] = true;
      else
        j["prec"] = static_cast<long>(x.rel_prec());
      break;
  }
  return j;
}

PadicScalar scalar_from_json(const Json& j, long p, int prec) {
  if (!j.is_object()) fail("SchemaMismatch", "scalar values are objects");
  if (j.contains("zero")) {
    const Json& z = *j.find("zero");
    if (!z.is_boolean() || !z.get<bool>())
      fail("SchemaMismatch", "the 'zero' marker must be true");
    if (j.contains("prec")) return PadicScalar::zero_at_prec(p, jget_long(j, "prec"));
    return PadicScalar::zero(p);
  }
  const Int mant = int_from_str(jget_str(j, "mantissa"));
  const long shift = jget_long(j, "shift");
  if (j.contains("exact")) {
    const Json& e = *j.find("exact");
    if (!e.is_boolean() || !e.get<bool>())
      fail("SchemaMismatch", "the 'exact' marker must be true");
    return PadicScalar::from_parts(p, shift, mant, prec, true);
  }
  return PadicScalar::from_parts(p, shift, mant, jget_int(j, "prec"), false);
}

Json cyc_to_json(const CycScalar& x) {
  Json coords = Json::array();
  for (const auto& [pow, c] : x.coords())
    coords.push_back(Json{{"c", scalar_to_json(c)}, {"pow", pow}});
  return Json{{"coords", std::move(coords)}, {"level", x.level()}};
}

// ---------------------------------------------------------------------------
// Series, windows, boxes

Json window_to_json(const Window& w) {
  Json j = Json::array();
  for (int i = 0; i < w.nvars(); ++i) j.push_back(Json::array({w.lo[i], w.hi[i]}));
  return j;
}

Window window_from_json(const Json& j) {
  need_array(j, "window");
  std::vector<long> lo, hi;
  for (const Json& pair : j) {
    std::vector<long> b = long_vec_from_json(pair, "window bound");
    if (b.size() != 2) fail("SchemaMismatch", "window bounds are [lo,hi] pairs");
    lo.push_back(b[0]);
    hi.push_back(b[1]);
  }
  return Window(std::move(lo), std::move(hi));
}

Json box_to_json(const LogRadiusBox& b) {
  Json lo = Json::array(), hi = Json::array();
  for (const Rat& x : b.lo) lo.push_back(rat_str(x));
  for (const Rat& x : b.hi) hi.push_back(rat_str(x));
  return Json{{"hi", std::move(hi)}, {"lo", std::move(lo)}};
}

LogRadiusBox box_from_json(const Json& j) {
  const Json& lo = need_array(jget(j, "lo"), "box 'lo'");
  const Json& hi = need_array(jget(j, "hi"), "box 'hi'");
  if (lo.size() != hi.size()) fail("SchemaMismatch", "box bound arities differ");
  std::vector<Rat> l, h;
  for (const Json& x : lo) l.push_back(rat_from_json(x));
  for (const Json& x : hi) h.push_back(rat_from_json(x));
  return LogRadiusBox(std::move(l), std::move(h));
}

Json series_to_json(const PSeries& f) {
  Json terms = Json::array();
  for (const auto& [e, c] : f.terms()) {
    Json exp = Json::array();
    for (long v : e) exp.push_back(v);
    terms.push_back(Json{{"coef", scalar_to_json(c)}, {"exp", std::move(exp)}});
  }
  return Json{{"nvars", f.nvars()},
              {"terms", std::move(terms)},
              {"window", window_to_json(f.window())}};
}

PSeries series_from_json(const Json& j, long p, int prec) {
  const int nvars = jget_int(j, "nvars");
  PSeries f(p, nvars, window_from_json(jget(j, "window")));
  for (const Json& term : need_array(jget(j, "terms"), "series 'terms'")) {
    std::vector<long> e = long_vec_from_json(jget(term, "exp"), "term exponent");
    if (static_cast<int>(e.size()) != nvars)
      fail("SchemaMismatch", "term exponent arity disagrees with 'nvars'");
    if (f.coeff_ptr(e) != nullptr) fail("SchemaMismatch", "duplicate exponent in series terms");
    f.set_coeff(e, scalar_from_json(jget(term, "coef"), p, prec));
  }
  return f;
}

Json cseries_to_json(const CSeries& f) {
  Json terms = Json::array();
  for (const auto& [e, c] : f.terms()) {
    Json exp = Json::array();
    for (long v : e) exp.push_back(v);
    terms.push_back(Json{{"coef", cyc_to_json(c)}, {"exp", std::move(exp)}});
  }
  return Json{{"nvars", f.nvars()},
              {"terms", std::move(terms)},
              {"window", window_to_json(f.window())}};
}

Json mat_series_to_json(const Mat<PSeries>& m) {
  Json j = Json::array();
  for (const PSeries& x : m.raw()) j.push_back(series_to_json(x));
  return j;
}

Mat<PSeries> mat_series_from_json(const Json& j, int rows, int cols, long p, int prec) {
  need_array(j, "series matrix");
  if (static_cast<int>(j.size()) != rows * cols)
    fail("SchemaMismatch", "series matrix entry count disagrees with its shape");
  Mat<PSeries> m;
  m.set_shape(rows, cols);
  for (const Json& x : j) m.raw().push_back(series_from_json(x, p, prec));
  return m;
}

Json mat_scalar_to_json(const Mat<PadicScalar>& m) {
  Json j = Json::array();
  for (const PadicScalar& x : m.raw()) j.push_back(scalar_to_json(x));
  return j;
}

Mat<PadicScalar> mat_scalar_from_json(const Json& j, int rows, int cols, long p, int prec) {
  need_array(j, "scalar matrix");
  if (static_cast<int>(j.size()) != rows * cols)
    fail("SchemaMismatch", "scalar matrix entry count disagrees with its shape");
  Mat<PadicScalar> m;
  m.set_shape(rows, cols);
  for (const Json& x : j) m.raw().push_back(scalar_from_json(x, p, prec));
  return m;
}

Json mat_cseries_to_json(const Mat<CSeries>& m) {
  Json j = Json::array();
  for (const CSeries& x : m.raw()) j.push_back(cseries_to_json(x));
  return j;
}

// ---------------------------------------------------------------------------
// Exponent data

Json coord_to_json(const ExpCoord& c) {
  if (c.is_exact()) return Json{{"rat", rat_str(c.rat())}};
  return Json{{"padic", scalar_to_json(c.padic())}};
}

ExpCoord coord_from_json(const Json& j, long p, int prec) {
  if (!j.is_object()) fail("SchemaMismatch", "exponent coordinates are objects");
  if (j.contains("rat")) return ExpCoord::rational(p, rat_from_json(*j.find("rat")));
  if (j.contains("padic"))
    return ExpCoord::truncated(scalar_from_json(*j.find("padic"), p, prec));
  fail("SchemaMismatch", "exponent coordinate needs 'rat' or 'padic'");
}

Json entry_to_json(const ExponentEntry& e) {
  Json coords = Json::array();
  for (const ExpCoord& c : e.coords) coords.push_back(coord_to_json(c));
  return Json{{"coords", std::move(coords)}};
}

ExponentEntry entry_from_json(const Json& j, long p, int prec) {
  ExponentEntry e;
  for (const Json& c : need_array(jget(j, "coords"), "entry 'coords'"))
    e.coords.push_back(coord_from_json(c, p, prec));
  if (e.coords.empty()) fail("SchemaMismatch", "exponent entry with no coordinates");
  return e;
}

Json multiset_to_json(const ExponentMultiset& a) {
  Json j = Json::array();
  for (const ExponentEntry& e : a.entries) j.push_back(entry_to_json(e));
  return j;
}

ExponentMultiset multiset_from_json(const Json& j, long p, int prec) {
  ExponentMultiset a;
  for (const Json& e : need_array(j, "exponent multiset"))
    a.entries.push_back(entry_from_json(e, p, prec));
  a.validate();
  return a;
}

Json blocks_to_json(const std::vector<std::vector<int>>& blocks) {
  Json j = Json::array();
  for (const auto& b : blocks) {
    Json row = Json::array();
    for (int i : b) row.push_back(i);
    j.push_back(std::move(row));
  }
  return j;
}

std::vector<std::vector<int>> blocks_from_json(const Json& j) {
  std::vector<std::vector<int>> out;
  for (const Json& b : need_array(j, "blocks")) {
    std::vector<int> row;
    for (long v : long_vec_from_json(b, "block")) {
      if (v < 0) fail("SchemaMismatch", "block indices are nonnegative");
      row.push_back(static_cast<int>(v));
    }
    out.push_back(std::move(row));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Modules

Json standard_form_to_json(const StandardForm& sf) {
  Json lambda = Json::array();
  for (const ExponentEntry& e : sf.lambda) lambda.push_back(entry_to_json(e));
  Json nil = Json::array();
  for (const auto& m : sf.nilpotent) nil.push_back(mat_scalar_to_json(m));
  return Json{{"lambda", std::move(lambda)}, {"nilpotent", std::move(nil)}};
}

StandardForm standard_form_from_json(const Json& j, long p, int prec) {
  StandardForm sf;
  sf.p = p;
  for (const Json& e : need_array(jget(j, "lambda"), "standard form 'lambda'"))
    sf.lambda.push_back(entry_from_json(e, p, prec));
  if (sf.lambda.empty()) fail("SchemaMismatch", "standard form with no exponents");
  sf.rank = static_cast<int>(sf.lambda.size());
  sf.nvars = sf.lambda.front().n();
  const Json& nil = need_array(jget(j, "nilpotent"), "standard form 'nilpotent'");
  if (static_cast<int>(nil.size()) != sf.nvars)
    fail("SchemaMismatch", "one nilpotent matrix per direction is required");
  for (const Json& m : nil)
    sf.nilpotent.push_back(mat_scalar_from_json(m, sf.rank, sf.rank, p, prec));
  sf.validate();
  return sf;
}

Json module_to_json(const DiffModule& m) {
  Json theta = Json::array();
  for (const auto& t : m.theta()) theta.push_back(mat_series_to_json(t));
  Json j{{"nvars", m.nvars()}, {"rank", m.rank()}, {"theta", std::move(theta)}};
  if (m.certified()) {
    const Certification& c = m.certification();
    Json cert = standard_form_to_json(c.standard);
    cert["twist"] = mat_series_to_json(c.twist);
    cert["box"] = box_to_json(c.box);
    j["certified"] = std::move(cert);
  }
  return j;
}

DiffModule module_from_json(const Json& j, long p, int prec, const ModuleOptions& opt) {
  const int rank = jget_int(j, "rank");
  const int nvars = jget_int(j, "nvars");
  if (rank <= 0 || nvars <= 0) fail("SchemaMismatch", "module rank and nvars are positive");
  const Json& th = need_array(jget(j, "theta"), "module 'theta'");
  if (static_cast<int>(th.size()) != nvars)
    fail("SchemaMismatch", "one connection matrix per direction is required");
  std::vector<Mat<PSeries>> theta;
  for (const Json& m : th) theta.push_back(mat_series_from_json(m, rank, rank, p, prec));
  if (!j.contains("certified")) return DiffModule::general(std::move(theta), opt);

  const Json& cj = *j.find("certified");
  Certification cert;
  cert.standard = standard_form_from_json(cj, p, prec);
  if (cert.standard.rank != rank || cert.standard.nvars != nvars)
    fail("SchemaMismatch", "certification shape disagrees with the module");
  cert.twist = mat_series_from_json(jget(cj, "twist"), rank, rank, p, prec);
  cert.box = box_from_json(jget(cj, "box"));
  return DiffModule::with_certification(std::move(theta), std::move(cert), opt);
}

// ---------------------------------------------------------------------------
// Fixture envelope

namespace {

bool known_kind(const std::string& k) {
  return k == "scalar" || k == "series" || k == "box" || k == "module" ||
         k == "exponent-multiset" || k == "partition";
}

void check_kind(const Fixture& fx, const char* want) {
  if (fx.kind != want)
    fail("SchemaMismatch",
         "fixture holds a '" + fx.kind + "' payload, not '" + want + "'");
}

}  // namespace

Json fixture_to_json(const Fixture& fx) {
  return Json{{"kind", fx.kind}, {"nvars", fx.nvars},   {"p", fx.p},
              {"payload", fx.payload}, {"prec", fx.prec}, {"schema", 1}};
}

Fixture fixture_from_json(const Json& j) {
  if (jget_long(j, "schema") != 1) fail("SchemaMismatch", "unsupported schema version");
  Fixture fx;
  fx.p = jget_long(j, "p");
  if (fx.p < 2) fail("SchemaMismatch", "the prime must be at least 2");
  fx.prec = jget_int(j, "prec");
  if (fx.prec <= 0) fail("SchemaMismatch", "the working precision must be positive");
  fx.nvars = jget_int(j, "nvars");
  if (fx.nvars <= 0) fail("SchemaMismatch", "the variable count must be positive");
  fx.kind = jget_str(j, "kind");
  if (!known_kind(fx.kind)) fail("SchemaMismatch", "unknown fixture kind '" + fx.kind + "'");
  fx.payload = jget(j, "payload");
  return fx;
}

Json parse_json_text(const std::string& text) {
  Json j = Json::parse(text, nullptr, /*allow_exceptions=*/false);
  if (j.is_discarded()) fail("BadJson", "malformed JSON input");
  return j;
}

Fixture load_fixture(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail("BadFile", "cannot open '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return fixture_from_json(parse_json_text(buf.str()));
}

PadicScalar fixture_scalar(const Fixture& fx) {
  check_kind(fx, "scalar");
  return scalar_from_json(fx.payload, fx.p, fx.prec);
}

PSeries fixture_series(const Fixture& fx) {
  check_kind(fx, "series");
  PSeries f = series_from_json(fx.payload, fx.p, fx.prec);
  if (f.nvars() != fx.nvars)
    fail("SchemaMismatch", "series arity disagrees with the fixture header");
  return f;
}

LogRadiusBox fixture_box(const Fixture& fx) {
  check_kind(fx, "box");
  LogRadiusBox b = box_from_json(fx.payload);
  if (b.nvars() != fx.nvars)
    fail("SchemaMismatch", "box arity disagrees with the fixture header");
  return b;
}

DiffModule fixture_module(const Fixture& fx, const ModuleOptions& opt) {
  check_kind(fx, "module");
  DiffModule m = module_from_json(fx.payload, fx.p, fx.prec, opt);
  if (m.nvars() != fx.nvars)
    fail("SchemaMismatch", "module arity disagrees with the fixture header");
  return m;
}

ExponentMultiset fixture_multiset(const Fixture& fx) {
  check_kind(fx, "exponent-multiset");
  ExponentMultiset a = multiset_from_json(fx.payload, fx.p, fx.prec);
  if (!a.entries.empty() && a.n() != fx.nvars)
    fail("SchemaMismatch", "multiset arity disagrees with the fixture header");
  return a;
}

PartitionFixture fixture_partition(const Fixture& fx) {
  check_kind(fx, "partition");
  PartitionFixture out;
  out.multiset = multiset_from_json(jget(fx.payload, "multiset"), fx.p, fx.prec);
  if (!out.multiset.entries.empty() && out.multiset.n() != fx.nvars)
    fail("SchemaMismatch", "multiset arity disagrees with the fixture header");
  out.blocks = blocks_from_json(jget(fx.payload, "blocks"));
  for (const auto& b : out.blocks)
    for (int i : b)
      if (i >= out.multiset.size()) fail("SchemaMismatch", "block index outside the multiset");
  return out;
}

// ---------------------------------------------------------------------------
// Reports (emit-only)

Json gauss_norm_to_json(const GaussNorm& g) {
  return Json{{"exact", g.exact}, {"upper", lognorm_to_json(g.upper)}};
}

Json unit_check_to_json(const PSeries::UnitCheck& u) {
  Json index = Json::array();
  for (long v : u.index) index.push_back(v);
  return Json{{"gap", lognorm_to_json(u.gap)}, {"index", std::move(index)}, {"unit", u.unit}};
}

Json clip_report_to_json(const ClipReport& r) {
  return Json{{"discarded_terms", r.discarded_terms},
              {"max_discarded", lognorm_to_json(r.max_discarded)},
              {"measured", r.measured}};
}

Json monic_factor_to_json(const MonicFactor<PadicScalar>& f) {
  Json bidist{{"lower_deg", f.report.lower_deg},
              {"pass", f.report.pass},
              {"upper_deg", f.report.upper_deg}};
  if (f.report.margin) bidist["margin"] = rat_str(*f.report.margin);
  if (!f.report.reason.empty()) bidist["reason"] = f.report.reason;
  Json j{{"P", series_to_json(f.P)},
         {"bidistinguished", std::move(bidist)},
         {"degree", f.degree},
         {"residual", lognorm_to_json(f.residual)},
         {"rounds", f.rounds},
         {"shift", f.shift},
         {"u", series_to_json(f.u)},
         {"unit", unit_check_to_json(f.unit_check)}};
  if (f.ratio) j["ratio"] = rat_str(*f.ratio);
  return j;
}

Json liouville_profile_to_json(const LiouvilleProfile& pr) {
  Json values = Json::array();
  for (const Rat& v : pr.values) values.push_back(rat_str(v));
  return Json{{"argmin_m", pr.argmin_m},
              {"nondecreasing_from", pr.nondecreasing_from},
              {"prefix_min", rat_str(pr.prefix_min)},
              {"values", std::move(values)}};
}

Json weak_equiv_to_json(const WeakEquivResult& r) {
  Json costs = Json::array();
  for (const Int& c : r.cost_per_h) costs.push_back(c.get_str());
  Json sigmas = Json::array();
  for (const auto& s : r.sigma_per_h) {
    Json row = Json::array();
    for (int i : s) row.push_back(i);
    sigmas.push_back(std::move(row));
  }
  return Json{{"binding_h", r.binding_h},
              {"c", rat_str(r.c)},
              {"cost_per_h", std::move(costs)},
              {"sigma_per_h", std::move(sigmas)},
              {"within_budget", r.within_budget}};
}

namespace {

const char* equiv_status_str(EquivStatus s) {
  switch (s) {
    case EquivStatus::Equivalent: return "equivalent";
    case EquivStatus::NotEquivalent: return "not-equivalent";
    default: return "inconclusive";
  }
}

const char* partition_status_str(PartitionStatus s) {
  switch (s) {
    case PartitionStatus::Valid: return "valid";
    case PartitionStatus::Invalid: return "invalid";
    default: return "inconclusive";
  }
}

Json tree_to_json(const PartitionTreeNode& node) {
  Json ids = Json::array();
  for (int b : node.block_ids) ids.push_back(b);
  Json children = Json::array();
  for (const auto& c : node.children) children.push_back(tree_to_json(c));
  return Json{{"blocks", std::move(ids)},
              {"children", std::move(children)},
              {"direction", node.direction}};
}

}  // namespace

Json strict_equiv_to_json(const StrictEquivResult& r) {
  Json sigma = Json::array();
  for (int i : r.sigma) sigma.push_back(i);
  return Json{{"sigma", std::move(sigma)}, {"status", equiv_status_str(r.status)}};
}

Json recursive_check_to_json(const RecursiveCheck& r) {
  Json j{{"status", partition_status_str(r.status)}};
  if (r.status == PartitionStatus::Valid) j["tree"] = tree_to_json(r.tree);
  if (r.status != PartitionStatus::Valid && r.stuck_block_a >= 0)
    j["stuck"] = Json::array({r.stuck_block_a, r.stuck_block_b});
  return j;
}

Json liouville_partition_to_json(const LiouvillePartition& r) {
  return Json{{"blocks", blocks_to_json(r.blocks)},
              {"check", recursive_check_to_json(r.check)}};
}

Json gamma_to_json(const GammaMatrix& e) {
  Json table = Json::array();
  for (const auto& [a, m] : e.table) {
    Json key = Json::array();
    for (long v : a) key.push_back(v);
    table.push_back(Json{{"a", std::move(key)}, {"m", mat_cseries_to_json(m)}});
  }
  Json j{{"box", box_to_json(e.box)},
         {"exact", e.exact},
         {"level", e.level},
         {"nvars", e.nvars},
         {"p", e.p},
         {"rank", e.rank},
         {"table", std::move(table)},
         {"twist_residual", lognorm_to_json(e.twist_residual)}};
  if (!e.exact) {
    j["order"] = e.order;
    j["tail_bound"] = lognorm_to_json(e.tail_bound);
  }
  return j;
}

Json action_laws_to_json(const ActionLawReport& r) {
  return Json{{"galois_residual", lognorm_to_json(r.galois_residual)},
              {"group_law_residual", lognorm_to_json(r.group_law_residual)},
              {"growth_l", rat_str(r.growth_l)}};
}

Json s_average_to_json(const SAverage& s) {
  Json j{{"clip_ledger", lognorm_to_json(s.clip_ledger)}, {"s", mat_series_to_json(s.s)}};
  j["prec_in"] = s.prec_in ? Json(*s.prec_in) : Json(nullptr);
  j["prec_out"] = s.prec_out ? Json(*s.prec_out) : Json(nullptr);
  return j;
}

Json descent_to_json(const DescentResult& r) {
  Json trace = Json::array();
  for (const auto& lvl : r.trace) {
    Json chosen = Json::array();
    for (long d : lvl.chosen) chosen.push_back(d);
    trace.push_back(Json{{"chosen", std::move(chosen)},
                         {"det_constant", lognorm_to_json(lvl.det_constant)},
                         {"k", lvl.k},
                         {"num_candidates", static_cast<long>(lvl.candidates.size())}});
  }
  return Json{{"A", multiset_to_json(r.A)}, {"trace", std::move(trace)}};
}

Json certificate_to_json(const ExponentCertificate& c) {
  Json levels = Json::array();
  for (const auto& rec : c.levels) {
    Json lj{{"det_constant_lognorm", lognorm_to_json(rec.det_constant_lognorm)},
            {"invertible", rec.invertible},
            {"k", rec.k},
            {"semilinearity_residual", lognorm_to_json(rec.semilinearity_residual)},
            {"sup_lognorm_s", lognorm_to_json(rec.sup_lognorm_s)}};
    if (rec.invertible) {
      lj["inverse_sup_lognorm"] = lognorm_to_json(rec.inverse_sup_lognorm);
      if (rec.inverse_excess) lj["inverse_excess"] = rat_str(*rec.inverse_excess);
    }
    levels.push_back(std::move(lj));
  }
  return Json{{"A", multiset_to_json(c.A)},
              {"det_witness_ok", c.det_witness_ok},
              {"growth_l", rat_str(c.growth_l)},
              {"law_ok", c.law_ok},
              {"levels", std::move(levels)},
              {"valid", c.valid()}};
}

Json projector_to_json(const ProjectorReport& r) {
  Json ks = Json::array();
  for (int k : r.ks) ks.push_back(k);
  Json skipped = Json::array();
  for (int k : r.skipped) skipped.push_back(k);
  Json decay = Json::array();
  for (const LogNorm& d : r.decay) decay.push_back(lognorm_to_json(d));
  return Json{{"converged", r.converged},
              {"decay", std::move(decay)},
              {"horizontality_residual", lognorm_to_json(r.horizontality_residual)},
              {"idempotency_residual", lognorm_to_json(r.idempotency_residual)},
              {"ks", std::move(ks)},
              {"limit", mat_series_to_json(r.limit)},
              {"shrunk", box_to_json(r.shrunk)},
              {"skipped", std::move(skipped)}};
}

Json decomposition_to_json(const Decomposition& d) {
  Json factors = Json::array();
  for (const auto& f : d.factors) {
    Json block = Json::array();
    for (int i : f.block) block.push_back(i);
    factors.push_back(Json{{"basis", mat_series_to_json(f.basis)},
                           {"block", std::move(block)},
                           {"certificate", certificate_to_json(f.certificate)},
                           {"exponent_match", weak_equiv_to_json(f.exponent_match)},
                           {"model_residual", lognorm_to_json(f.model_residual)},
                           {"module", module_to_json(f.module)}});
  }
  Json projectors = Json::array();
  for (const auto& p : d.projectors) projectors.push_back(projector_to_json(p));
  return Json{{"assembled", mat_series_to_json(d.assembled)},
              {"assembled_det_gap", lognorm_to_json(d.assembled_det_gap)},
              {"factors", std::move(factors)},
              {"projectors", std::move(projectors)}};
}

Json constant_basis_to_json(const ConstantBasisResult& r) {
  Json constants = Json::array();
  for (const auto& m : r.constants) constants.push_back(mat_scalar_to_json(m));
  Json decay = Json::array();
  for (const LogNorm& d : r.decay) decay.push_back(lognorm_to_json(d));
  Json nil = Json::array();
  for (const LogNorm& d : r.nilpotency) nil.push_back(lognorm_to_json(d));
  return Json{{"basis", mat_series_to_json(r.basis)},
              {"constancy_residual", lognorm_to_json(r.constancy_residual)},
              {"constants", std::move(constants)},
              {"converged", r.converged},
              {"decay", std::move(decay)},
              {"nilpotency", std::move(nil)}};
}

std::string dump_compact(const Json& j) { return j.dump(); }

std::string dump_pretty(const Json& j) { return j.dump(2); }

}  // namespace pfuchs
