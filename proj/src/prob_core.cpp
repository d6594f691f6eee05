#include "l0opt/prob_core.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace l0opt {

namespace {

void require_same_algebra(const SigmaAlgebra& a, const SigmaAlgebra& b, const char* op) {
  if (a != b) throw std::invalid_argument(std::string(op) + ": mismatched algebras");
}

}  // namespace

// ---------------------------------------------------------------------------
// ProbSpace
// ---------------------------------------------------------------------------

ProbSpace::ProbSpace(std::vector<double> weights) {
  if (weights.empty()) throw std::invalid_argument("ProbSpace: empty scenario set");
  double sum = 0.0;
  for (double w : weights) {
    if (!std::isfinite(w) || w <= 0.0)
      throw std::invalid_argument("ProbSpace: weights must be strictly positive");
    sum += w;
  }
  if (std::abs(sum - 1.0) > 1e-12)
    throw std::invalid_argument("ProbSpace: weights must sum to 1 within 1e-12");
  // Renormalize so the sum is 1 to machine precision. Weights already at
  // roundoff level stay untouched, which makes construction idempotent and
  // the JSON encoding bit-exact under round trips.
  const double canonical = 8.0 * std::numeric_limits<double>::epsilon();
  auto accumulate = [&] {
    double s = 0.0;
    for (double w : weights) s += w;
    return s;
  };
  if (std::abs(sum - 1.0) > 32.0 * canonical) {
    for (double& w : weights) w /= sum;
  }
  for (int pass = 0; pass < 32; ++pass) {
    const double s = accumulate();
    if (std::abs(s - 1.0) <= canonical) break;
    size_t imax = 0;
    for (size_t i = 1; i < weights.size(); ++i)
      if (weights[i] > weights[imax]) imax = i;
    const double before = weights[imax];
    weights[imax] += 1.0 - s;
    if (weights[imax] == before) break;  // correction below one ulp
  }
  auto d = std::make_shared<Data>();
  d->p = std::move(weights);
  data_ = std::move(d);
}

ProbSpace ProbSpace::uniform(int n) {
  if (n <= 0) throw std::invalid_argument("ProbSpace::uniform: n must be positive");
  return ProbSpace(std::vector<double>(static_cast<size_t>(n), 1.0 / n));
}

// ---------------------------------------------------------------------------
// SigmaAlgebra
// ---------------------------------------------------------------------------

SigmaAlgebra::SigmaAlgebra(ProbSpace space, std::vector<std::vector<int>> atoms) {
  const int n = space.size();
  if (atoms.empty()) throw std::invalid_argument("SigmaAlgebra: empty partition");
  for (auto& block : atoms) {
    if (block.empty()) throw std::invalid_argument("SigmaAlgebra: empty atom");
    std::sort(block.begin(), block.end());
  }
  std::sort(atoms.begin(), atoms.end(),
            [](const auto& a, const auto& b) { return a.front() < b.front(); });

  std::vector<int> owner(static_cast<size_t>(n), -1);
  for (size_t a = 0; a < atoms.size(); ++a) {
    for (int s : atoms[a]) {
      if (s < 0 || s >= n) throw std::invalid_argument("SigmaAlgebra: scenario index out of range");
      if (owner[static_cast<size_t>(s)] != -1)
        throw std::invalid_argument("SigmaAlgebra: atoms overlap");
      owner[static_cast<size_t>(s)] = static_cast<int>(a);
    }
  }
  for (int s = 0; s < n; ++s)
    if (owner[static_cast<size_t>(s)] == -1)
      throw std::invalid_argument("SigmaAlgebra: atoms do not cover all scenarios");

  auto d = std::make_shared<Data>(std::move(space), std::move(atoms));
  d->atom_of = std::move(owner);
  d->atom_prob.resize(d->atoms.size());
  for (size_t a = 0; a < d->atoms.size(); ++a) {
    double q = 0.0;
    for (int s : d->atoms[a]) q += d->space.weight(s);
    d->atom_prob[a] = q;
  }
  data_ = std::move(d);
}

SigmaAlgebra SigmaAlgebra::full(const ProbSpace& space) {
  std::vector<std::vector<int>> atoms;
  atoms.reserve(static_cast<size_t>(space.size()));
  for (int s = 0; s < space.size(); ++s) atoms.push_back({s});
  return SigmaAlgebra(space, std::move(atoms));
}

SigmaAlgebra SigmaAlgebra::trivial(const ProbSpace& space) {
  std::vector<int> all(static_cast<size_t>(space.size()));
  std::iota(all.begin(), all.end(), 0);
  return SigmaAlgebra(space, {std::move(all)});
}

bool SigmaAlgebra::refines(const SigmaAlgebra& coarser) const {
  if (space() != coarser.space()) return false;
  for (const auto& block : atoms()) {
    const int target = coarser.atom_of(block.front());
    for (int s : block)
      if (coarser.atom_of(s) != target) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// RandomVariable
// ---------------------------------------------------------------------------

RandomVariable::RandomVariable(SigmaAlgebra algebra, std::vector<XReal> values)
    : algebra_(std::move(algebra)), values_(std::move(values)) {
  if (static_cast<int>(values_.size()) != algebra_.atom_count())
    throw std::invalid_argument("RandomVariable: one value per atom required");
}

RandomVariable RandomVariable::constant(const SigmaAlgebra& algebra, double v) {
  return RandomVariable(algebra,
                        std::vector<XReal>(static_cast<size_t>(algebra.atom_count()),
                                           XReal::finite(v)));
}

RandomVariable RandomVariable::from_doubles(const SigmaAlgebra& algebra,
                                            const std::vector<double>& v) {
  std::vector<XReal> xs;
  xs.reserve(v.size());
  for (double x : v) xs.push_back(XReal::from_double(x));
  return RandomVariable(algebra, std::move(xs));
}

bool RandomVariable::is_finite() const {
  for (const auto& v : values_)
    if (!v.is_finite()) return false;
  return true;
}

std::vector<double> RandomVariable::finite_values() const {
  std::vector<double> out;
  out.reserve(values_.size());
  for (const auto& v : values_) out.push_back(v.value());
  return out;
}

RandomVariable RandomVariable::map(XReal (*fn)(const XReal&)) const {
  std::vector<XReal> out;
  out.reserve(values_.size());
  for (const auto& v : values_) out.push_back(fn(v));
  return RandomVariable(algebra_, std::move(out));
}

RandomVariable operator+(const RandomVariable& a, const RandomVariable& b) {
  require_same_algebra(a.algebra_, b.algebra_, "RandomVariable+");
  std::vector<XReal> out;
  out.reserve(a.values_.size());
  for (size_t i = 0; i < a.values_.size(); ++i) out.push_back(a.values_[i] + b.values_[i]);
  return RandomVariable(a.algebra_, std::move(out));
}

RandomVariable operator-(const RandomVariable& a, const RandomVariable& b) {
  require_same_algebra(a.algebra_, b.algebra_, "RandomVariable-");
  std::vector<XReal> out;
  out.reserve(a.values_.size());
  for (size_t i = 0; i < a.values_.size(); ++i) out.push_back(a.values_[i] - b.values_[i]);
  return RandomVariable(a.algebra_, std::move(out));
}

RandomVariable operator-(const RandomVariable& a) {
  std::vector<XReal> out;
  out.reserve(a.values_.size());
  for (const auto& v : a.values_) out.push_back(-v);
  return RandomVariable(a.algebra_, std::move(out));
}

RandomVariable operator*(double c, const RandomVariable& a) {
  std::vector<XReal> out;
  out.reserve(a.values_.size());
  for (const auto& v : a.values_) out.push_back(c * v);
  return RandomVariable(a.algebra_, std::move(out));
}

// ---------------------------------------------------------------------------
// IndicatorSet
// ---------------------------------------------------------------------------

IndicatorSet::IndicatorSet(SigmaAlgebra algebra, std::vector<int> member_atoms)
    : algebra_(std::move(algebra)), atoms_(std::move(member_atoms)) {
  std::sort(atoms_.begin(), atoms_.end());
  atoms_.erase(std::unique(atoms_.begin(), atoms_.end()), atoms_.end());
  for (int a : atoms_)
    if (a < 0 || a >= algebra_.atom_count())
      throw std::invalid_argument("IndicatorSet: atom index out of range");
}

IndicatorSet IndicatorSet::all(const SigmaAlgebra& algebra) {
  std::vector<int> atoms(static_cast<size_t>(algebra.atom_count()));
  std::iota(atoms.begin(), atoms.end(), 0);
  return IndicatorSet(algebra, std::move(atoms));
}

IndicatorSet IndicatorSet::none(const SigmaAlgebra& algebra) {
  return IndicatorSet(algebra, {});
}

bool IndicatorSet::contains(int atom) const {
  return std::binary_search(atoms_.begin(), atoms_.end(), atom);
}

double IndicatorSet::probability() const {
  double q = 0.0;
  for (int a : atoms_) q += algebra_.atom_prob(a);
  return q;
}

IndicatorSet IndicatorSet::complement() const {
  std::vector<int> rest;
  for (int a = 0; a < algebra_.atom_count(); ++a)
    if (!contains(a)) rest.push_back(a);
  return IndicatorSet(algebra_, std::move(rest));
}

IndicatorSet operator|(const IndicatorSet& a, const IndicatorSet& b) {
  require_same_algebra(a.algebra_, b.algebra_, "IndicatorSet|");
  std::vector<int> merged;
  std::set_union(a.atoms_.begin(), a.atoms_.end(), b.atoms_.begin(), b.atoms_.end(),
                 std::back_inserter(merged));
  return IndicatorSet(a.algebra_, std::move(merged));
}

IndicatorSet operator&(const IndicatorSet& a, const IndicatorSet& b) {
  require_same_algebra(a.algebra_, b.algebra_, "IndicatorSet&");
  std::vector<int> merged;
  std::set_intersection(a.atoms_.begin(), a.atoms_.end(), b.atoms_.begin(), b.atoms_.end(),
                        std::back_inserter(merged));
  return IndicatorSet(a.algebra_, std::move(merged));
}

RandomVariable IndicatorSet::indicator() const {
  std::vector<XReal> v(static_cast<size_t>(algebra_.atom_count()), XReal::finite(0.0));
  for (int a : atoms_) v[static_cast<size_t>(a)] = XReal::finite(1.0);
  return RandomVariable(algebra_, std::move(v));
}

// ---------------------------------------------------------------------------
// Lattice operations
// ---------------------------------------------------------------------------

RandomVariable ess_sup(const std::vector<RandomVariable>& family) {
  if (family.empty()) throw std::invalid_argument("ess_sup: empty family");
  const SigmaAlgebra& alg = family.front().algebra();
  std::vector<XReal> out = family.front().values();
  for (size_t i = 1; i < family.size(); ++i) {
    require_same_algebra(alg, family[i].algebra(), "ess_sup");
    for (int a = 0; a < family[i].size(); ++a)
      out[static_cast<size_t>(a)] = max(out[static_cast<size_t>(a)], family[i][a]);
  }
  return RandomVariable(alg, std::move(out));
}

RandomVariable ess_inf(const std::vector<RandomVariable>& family) {
  if (family.empty()) throw std::invalid_argument("ess_inf: empty family");
  std::vector<RandomVariable> neg;
  neg.reserve(family.size());
  for (const auto& f : family) neg.push_back(-f);
  return -ess_sup(neg);
}

namespace {

bool dominates(const RandomVariable& a, const RandomVariable& b) {
  for (int i = 0; i < a.size(); ++i)
    if (a[i] < b[i]) return false;
  return true;
}

}  // namespace

DirectedSupResult ess_sup_directed(const std::vector<RandomVariable>& family) {
  if (family.empty()) throw std::invalid_argument("ess_sup_directed: empty family");
  const RandomVariable sup = ess_sup(family);
  std::vector<int> selection;
  selection.reserve(family.size());
  int current = 0;
  selection.push_back(0);
  // Directedness gives, for every pair, a family member above both; scan for it.
  for (size_t j = 1; j < family.size(); ++j) {
    if (dominates(family[static_cast<size_t>(current)], family[j])) {
      selection.push_back(current);
      continue;
    }
    int found = -1;
    for (size_t k = 0; k < family.size(); ++k) {
      if (dominates(family[k], family[static_cast<size_t>(current)]) &&
          dominates(family[k], family[j])) {
        found = static_cast<int>(k);
        break;
      }
    }
    if (found < 0)
      throw std::invalid_argument("ess_sup_directed: family is not directed upward");
    current = found;
    selection.push_back(current);
  }
  return {sup, std::move(selection)};
}

DirectedSupResult ess_inf_directed(const std::vector<RandomVariable>& family) {
  std::vector<RandomVariable> neg;
  neg.reserve(family.size());
  for (const auto& f : family) neg.push_back(-f);
  DirectedSupResult r = ess_sup_directed(neg);
  return {-r.sup, std::move(r.selection)};
}

RandomVariable restrict_glue(const IndicatorSet& A, const RandomVariable& x,
                             const RandomVariable& y) {
  require_same_algebra(A.algebra(), x.algebra(), "restrict_glue");
  require_same_algebra(x.algebra(), y.algebra(), "restrict_glue");
  std::vector<XReal> out = y.values();
  for (int a : A.member_atoms()) out[static_cast<size_t>(a)] = x[a];
  return RandomVariable(x.algebra(), std::move(out));
}

double ky_fan_distance(const RandomVariable& x, const RandomVariable& y) {
  require_same_algebra(x.algebra(), y.algebra(), "ky_fan_distance");
  if (!x.is_finite() || !y.is_finite())
    throw std::invalid_argument("ky_fan_distance: extended-real inputs");
  const SigmaAlgebra& alg = x.algebra();
  const int m = alg.atom_count();
  std::vector<std::pair<double, double>> dev;  // (deviation, atom probability)
  dev.reserve(static_cast<size_t>(m));
  for (int a = 0; a < m; ++a)
    dev.emplace_back(std::abs(x[a].value() - y[a].value()), alg.atom_prob(a));
  std::sort(dev.begin(), dev.end());

  // Scan intervals [d_i, d_{i+1}) of constant tail probability
  // T(eps) = P(|x-y| > eps); pick the smallest eps with T(eps) <= eps.
  double best = dev.back().first;  // eps = max deviation always qualifies
  double lower = 0.0;              // left edge of the current interval
  size_t i = 0;
  while (i < dev.size()) {
    size_t j = i;
    while (j < dev.size() && dev[j].first <= lower) ++j;
    double tail = 0.0;
    for (size_t k = j; k < dev.size(); ++k) tail += dev[k].second;
    const double upper = (j < dev.size()) ? dev[j].first : std::numeric_limits<double>::infinity();
    if (tail <= lower) {
      best = std::min(best, lower);
      break;
    }
    if (tail < upper) {
      best = std::min(best, tail);
      break;
    }
    lower = upper;
    i = j;
  }
  return best;
}

XReal as_sup_distance(const RandomVariable& x, const RandomVariable& y) {
  require_same_algebra(x.algebra(), y.algebra(), "as_sup_distance");
  XReal worst = XReal::finite(0.0);
  for (int a = 0; a < x.size(); ++a) worst = max(worst, metric_abs_diff(x[a], y[a]));
  return worst;
}

IndicatorSet atoms_where_le(const RandomVariable& a, const RandomVariable& b) {
  require_same_algebra(a.algebra(), b.algebra(), "atoms_where_le");
  std::vector<int> atoms;
  for (int i = 0; i < a.size(); ++i)
    if (a[i] <= b[i]) atoms.push_back(i);
  return IndicatorSet(a.algebra(), std::move(atoms));
}

}  // namespace l0opt
