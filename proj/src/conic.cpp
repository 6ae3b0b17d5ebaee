#include "robust_precoding/conic.hpp"

#include <cmath>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>

namespace rbp {

namespace {

void check_triplet(const ConicProblem& p, const Triplet& t, const char* where) {
  if (t.block < 0 || t.block >= static_cast<int>(p.blocks.size()))
    throw ConfigError(std::string(where) + ": block index out of range");
  const auto& spec = p.blocks[static_cast<std::size_t>(t.block)];
  if (t.row < 0 || t.col < 0 || t.row >= spec.dim || t.col >= spec.dim)
    throw ConfigError(std::string(where) + ": entry outside its block");
  if (t.row > t.col) throw ConfigError(std::string(where) + ": entries must be on the upper triangle");
  if (spec.kind == ConeKind::nonneg && t.row != t.col)
    throw ConfigError(std::string(where) + ": nonneg blocks are diagonal");
  if (!std::isfinite(t.value)) throw ConfigError(std::string(where) + ": non-finite coefficient");
}

const char* sense_name(Sense s) {
  switch (s) {
    case Sense::le: return "le";
    case Sense::eq: return "eq";
    case Sense::ge: return "ge";
  }
  return "?";
}

Sense parse_sense(const std::string& s) {
  if (s == "le") return Sense::le;
  if (s == "eq") return Sense::eq;
  if (s == "ge") return Sense::ge;
  throw ConfigError("unknown constraint sense '" + s + "'");
}

void expect(std::istream& is, const std::string& word) {
  std::string got;
  if (!(is >> got) || got != word) throw ConfigError("problem file: expected '" + word + "'");
}

std::vector<Triplet> read_triplets(std::istream& is, std::size_t count) {
  std::vector<Triplet> out(count);
  for (auto& t : out)
    if (!(is >> t.block >> t.row >> t.col >> t.value)) throw ConfigError("problem file: bad triplet");
  return out;
}

}  // namespace

void ConicProblem::validate() const {
  if (blocks.empty()) throw ConfigError("conic problem has no variable blocks");
  for (const auto& b : blocks)
    if (b.dim < 1) throw ConfigError("block dimensions must be positive");
  for (const auto& t : objective) check_triplet(*this, t, "objective");
  for (const auto& c : constraints) {
    for (const auto& t : c.coefficients) check_triplet(*this, t, "constraint");
    if (!std::isfinite(c.rhs)) throw ConfigError("constraint right-hand side is not finite");
  }
}

std::vector<RMatrix> ConicProblem::dense(const std::vector<Triplet>& triplets) const {
  std::vector<RMatrix> out;
  out.reserve(blocks.size());
  for (const auto& b : blocks) out.push_back(RMatrix::Zero(b.dim, b.dim));
  for (const auto& t : triplets) {
    auto& m = out[static_cast<std::size_t>(t.block)];
    m(t.row, t.col) += t.value;
    if (t.row != t.col) m(t.col, t.row) += t.value;
  }
  return out;
}

double ConicProblem::inner(const std::vector<RMatrix>& m, const std::vector<RMatrix>& x) {
  double s = 0.0;
  for (std::size_t b = 0; b < m.size(); ++b) s += m[b].cwiseProduct(x[b]).sum();
  return s;
}

const char* to_string(SolveStatus status) {
  switch (status) {
    case SolveStatus::optimal: return "optimal";
    case SolveStatus::infeasible: return "infeasible";
    case SolveStatus::numerical_failure: return "numerical_failure";
    case SolveStatus::iteration_limit: return "iteration_limit";
  }
  return "unknown";
}

RMatrix embed_hermitian(const CMatrix& q) {
  const auto n = q.rows();
  RMatrix x(2 * n, 2 * n);
  x.topLeftCorner(n, n) = q.real();
  x.bottomRightCorner(n, n) = q.real();
  x.topRightCorner(n, n) = -q.imag();
  x.bottomLeftCorner(n, n) = q.imag();
  return x;
}

CMatrix unembed_hermitian(const RMatrix& x) {
  if (x.rows() != x.cols() || x.rows() % 2 != 0) throw ConfigError("embedded block must be square of even size");
  const auto n = x.rows() / 2;
  const RMatrix re = (x.topLeftCorner(n, n) + x.bottomRightCorner(n, n)) * 0.5;
  const RMatrix im = (x.bottomLeftCorner(n, n) - x.topRightCorner(n, n)) * 0.5;
  CMatrix q(n, n);
  q.real() = re;
  q.imag() = im;
  return (q + q.adjoint()) * 0.5;
}

void append_embedded(std::vector<Triplet>& out, int block, const CMatrix& a, double scale) {
  const RMatrix e = embed_hermitian(a) * scale;
  for (Eigen::Index c = 0; c < e.cols(); ++c)
    for (Eigen::Index r = 0; r <= c; ++r)
      if (e(r, c) != 0.0) out.push_back({block, static_cast<int>(r), static_cast<int>(c), e(r, c)});
}

void write_problem(std::ostream& os, const ConicProblem& p) {
  std::ostringstream buf;
  buf << std::setprecision(17);
  buf << "conic-problem v1\n";
  buf << "blocks " << p.blocks.size() << '\n';
  for (const auto& b : p.blocks) buf << (b.kind == ConeKind::psd ? "psd " : "nonneg ") << b.dim << '\n';
  buf << "objective " << p.objective.size() << '\n';
  for (const auto& t : p.objective) buf << t.block << ' ' << t.row << ' ' << t.col << ' ' << t.value << '\n';
  buf << "constraints " << p.constraints.size() << '\n';
  for (const auto& c : p.constraints) {
    buf << sense_name(c.sense) << ' ' << c.rhs << ' ' << c.coefficients.size() << '\n';
    for (const auto& t : c.coefficients) buf << t.block << ' ' << t.row << ' ' << t.col << ' ' << t.value << '\n';
  }
  os << buf.str();
}

ConicProblem read_problem(std::istream& is) {
  ConicProblem p;
  expect(is, "conic-problem");
  expect(is, "v1");
  std::size_t count = 0;
  expect(is, "blocks");
  if (!(is >> count)) throw ConfigError("problem file: bad block count");
  p.blocks.resize(count);
  for (auto& b : p.blocks) {
    std::string kind;
    if (!(is >> kind >> b.dim)) throw ConfigError("problem file: bad block line");
    if (kind == "psd") b.kind = ConeKind::psd;
    else if (kind == "nonneg") b.kind = ConeKind::nonneg;
    else throw ConfigError("problem file: unknown block kind '" + kind + "'");
  }
  expect(is, "objective");
  if (!(is >> count)) throw ConfigError("problem file: bad objective count");
  p.objective = read_triplets(is, count);
  expect(is, "constraints");
  if (!(is >> count)) throw ConfigError("problem file: bad constraint count");
  p.constraints.resize(count);
  for (auto& c : p.constraints) {
    std::string sense;
    std::size_t n = 0;
    if (!(is >> sense >> c.rhs >> n)) throw ConfigError("problem file: bad constraint header");
    c.sense = parse_sense(sense);
    c.coefficients = read_triplets(is, n);
  }
  p.validate();
  return p;
}

void to_json(nlohmann::json& j, const SolverStats& s) {
  j = nlohmann::json{{"iterations", s.iterations},
                     {"primal_residual", s.primal_residual},
                     {"dual_residual", s.dual_residual},
                     {"gap", s.gap},
                     {"detail", s.detail}};
}

}  // namespace rbp
