#pragma once

// JSON codecs for the library's value types, plus the fixture-file envelope
// shared by the command-line tool and the test corpus.
//
// Two tiers:
//   * round-trip codecs (emit / parse pairs) for everything a fixture can
//     carry -- scalars, series, boxes, modules, exponent multisets, and
//     partitions -- with parse(emit(x)) == x under each type's own equality;
//   * emit-only encoders for measurement reports (norm checks, factor
//     splits, certificates, projector and decomposition summaries).  These
//     exist so the tool can print them, not so they can be read back.
//
// The Json alias is backed by std::map, so object keys are always sorted
// and dumping equal values gives byte-identical text.  Rationals are
// emitted as canonical lowest-terms strings, big integers as decimal
// strings; neither ever appears as a JSON number.

#include "pfuchs/diffmod.hpp"
#include "pfuchs/expcalc.hpp"
#include "pfuchs/fuchs.hpp"
#include "pfuchs/matrix.hpp"
#include "pfuchs/weier.hpp"

#include "json.hpp"

#include <string>
#include <vector>

namespace pfuchs {

using Json = nlohmann::json;

// ---------------------------------------------------------------------------
// Primitives

// Strict field access: error "SchemaMismatch" on a missing key or a value of
// the wrong shape.  All parsers below funnel through these.
const Json& jget(const Json& j, const char* key);
long jget_long(const Json& j, const char* key);
std::string jget_str(const Json& j, const char* key);

Json rat_to_json(const Rat& x);   // "a" or "a/b", lowest terms
Rat rat_from_json(const Json& j);
Json int_to_json(const Int& x);   // decimal string
Int int_from_json(const Json& j);

// -inf is null; finite values are rational strings
Json lognorm_to_json(const LogNorm& v);

// ---------------------------------------------------------------------------
// Scalars

// Value, exact:      {"exact":true, "mantissa":"<dec>", "shift":v}
// Value, truncated:  {"mantissa":"<dec>", "prec":n, "shift":v}
// tracked zero:      {"zero":true, "prec":N}
// exact zero:        {"zero":true}
// Exact values omit "prec" (their equality ignores it); the fixture header
// supplies the uniform working precision on the way back in.
Json scalar_to_json(const PadicScalar& x);
PadicScalar scalar_from_json(const Json& j, long p, int prec);

Json cyc_to_json(const CycScalar& x);  // emit-only

// ---------------------------------------------------------------------------
// Series, windows, boxes

Json window_to_json(const Window& w);  // [[lo_1,hi_1],...,[lo_n,hi_n]]
Window window_from_json(const Json& j);

Json box_to_json(const LogRadiusBox& b);  // {"lo":[...],"hi":[...]}
LogRadiusBox box_from_json(const Json& j);

// {"nvars":n, "window":[[lo,hi],...], "terms":[{"coef":<scalar>,
//  "exp":[e_1,...,e_n]}, ...]}; terms are emitted in the series' own
// lexicographic exponent order
Json series_to_json(const PSeries& f);
PSeries series_from_json(const Json& j, long p, int prec);

Json cseries_to_json(const CSeries& f);  // emit-only

// flat row-major arrays; the caller carries the shape (modules know their
// rank, certificates their block size)
Json mat_series_to_json(const Mat<PSeries>& m);
Mat<PSeries> mat_series_from_json(const Json& j, int rows, int cols, long p, int prec);
Json mat_scalar_to_json(const Mat<PadicScalar>& m);
Mat<PadicScalar> mat_scalar_from_json(const Json& j, int rows, int cols, long p, int prec);
Json mat_cseries_to_json(const Mat<CSeries>& m);  // emit-only

// ---------------------------------------------------------------------------
// Exponent data

Json coord_to_json(const ExpCoord& c);  // {"rat":"a/b"} | {"padic":<scalar>}
ExpCoord coord_from_json(const Json& j, long p, int prec);

Json entry_to_json(const ExponentEntry& e);  // {"coords":[...]}
ExponentEntry entry_from_json(const Json& j, long p, int prec);

Json multiset_to_json(const ExponentMultiset& a);  // [entry,...]
ExponentMultiset multiset_from_json(const Json& j, long p, int prec);

Json blocks_to_json(const std::vector<std::vector<int>>& blocks);  // [[0,2],[1]]
std::vector<std::vector<int>> blocks_from_json(const Json& j);

// ---------------------------------------------------------------------------
// Modules

// {"lambda":[entry,...], "nilpotent":[<scalar matrix>,...]} with one
// nilpotent matrix per direction
Json standard_form_to_json(const StandardForm& sf);
StandardForm standard_form_from_json(const Json& j, long p, int prec);

// {"rank":r, "nvars":n, "theta":[<series matrix>,...]} plus, when present,
// "certified": {"lambda":..., "nilpotent":..., "twist":<series matrix>,
// "box":<box>}
Json module_to_json(const DiffModule& m);
DiffModule module_from_json(const Json& j, long p, int prec, const ModuleOptions& opt = {});

// ---------------------------------------------------------------------------
// Fixture envelope

// {"kind":..., "nvars":n, "p":p, "payload":..., "prec":N, "schema":1}
// kind is one of scalar | series | box | module | exponent-multiset |
// partition; a partition payload is {"blocks":[[...]], "multiset":[...]}.
struct Fixture {
  long p = 0;
  int prec = 0;
  int nvars = 1;
  std::string kind;
  Json payload;
};

Json fixture_to_json(const Fixture& fx);
Fixture fixture_from_json(const Json& j);

// "BadJson" on malformed text; "BadFile" on an unreadable path
Json parse_json_text(const std::string& text);
Fixture load_fixture(const std::string& path);

// typed payload extraction; "SchemaMismatch" when fx.kind disagrees
PadicScalar fixture_scalar(const Fixture& fx);
PSeries fixture_series(const Fixture& fx);
LogRadiusBox fixture_box(const Fixture& fx);
DiffModule fixture_module(const Fixture& fx, const ModuleOptions& opt = {});
ExponentMultiset fixture_multiset(const Fixture& fx);

struct PartitionFixture {
  ExponentMultiset multiset;
  std::vector<std::vector<int>> blocks;
};
PartitionFixture fixture_partition(const Fixture& fx);

// ---------------------------------------------------------------------------
// Reports (emit-only)

Json gauss_norm_to_json(const GaussNorm& g);
Json unit_check_to_json(const PSeries::UnitCheck& u);
Json clip_report_to_json(const ClipReport& r);
Json monic_factor_to_json(const MonicFactor<PadicScalar>& f);
Json liouville_profile_to_json(const LiouvilleProfile& pr);
Json weak_equiv_to_json(const WeakEquivResult& r);
Json strict_equiv_to_json(const StrictEquivResult& r);
Json recursive_check_to_json(const RecursiveCheck& r);
Json liouville_partition_to_json(const LiouvillePartition& r);
Json gamma_to_json(const GammaMatrix& e);
Json action_laws_to_json(const ActionLawReport& r);
Json s_average_to_json(const SAverage& s);
Json descent_to_json(const DescentResult& r);
Json certificate_to_json(const ExponentCertificate& c);
Json projector_to_json(const ProjectorReport& r);
Json decomposition_to_json(const Decomposition& d);
Json constant_basis_to_json(const ConstantBasisResult& r);

// canonical dumps; neither carries a trailing newline
std::string dump_compact(const Json& j);
std::string dump_pretty(const Json& j);  // 2-space indent, for files on disk

}  // namespace pfuchs
