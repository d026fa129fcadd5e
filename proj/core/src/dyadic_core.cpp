#include "tflab/dyadic_core.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

namespace tflab {

namespace {

template <typename T>
T pairwise_sum_impl(std::span<const T> v) {
  constexpr std::size_t kLeaf = 8;
  if (v.size() <= kLeaf) {
    T acc{};
    for (const T& x : v) acc += x;
    return acc;
  }
  const std::size_t half = v.size() / 2;
  return pairwise_sum_impl(v.first(half)) + pairwise_sum_impl(v.subspan(half));
}

}  // namespace

double pairwise_sum(std::span<const double> values) { return pairwise_sum_impl(values); }
complex pairwise_sum(std::span<const complex> values) { return pairwise_sum_impl(values); }

// ---------------------------------------------------------------------------

DyadicInterval::DyadicInterval(int scale, std::uint64_t offset) : scale(scale), offset(offset) {
  if (scale < 0 || scale > 62) throw std::invalid_argument("dyadic interval scale out of range");
  if (offset >= (std::uint64_t{1} << scale))
    throw std::invalid_argument("dyadic interval offset must be < 2^scale");
}

double DyadicInterval::length() const { return std::ldexp(1.0, -scale); }
double DyadicInterval::left() const { return std::ldexp(static_cast<double>(offset), -scale); }
double DyadicInterval::right() const { return std::ldexp(static_cast<double>(offset + 1), -scale); }
double DyadicInterval::center() const { return std::ldexp(static_cast<double>(2 * offset + 1), -scale - 1); }

bool DyadicInterval::contains(const DyadicInterval& other) const {
  if (other.scale < scale) return false;
  return (other.offset >> (other.scale - scale)) == offset;
}

bool DyadicInterval::disjoint(const DyadicInterval& other) const {
  return !contains(other) && !other.contains(*this);
}

bool DyadicInterval::contains_point(double x) const { return left() <= x && x < right(); }

DyadicInterval DyadicInterval::parent() const {
  if (scale == 0) throw std::logic_error("[0,1) has no dyadic parent inside the unit interval");
  return {scale - 1, offset >> 1};
}

DyadicInterval DyadicInterval::child(int which) const {
  return {scale + 1, 2 * offset + static_cast<std::uint64_t>(which != 0)};
}

DyadicInterval DyadicInterval::ancestor(int coarser_scale) const {
  if (coarser_scale > scale || coarser_scale < 0) throw std::invalid_argument("not an ancestor scale");
  return {coarser_scale, offset >> (scale - coarser_scale)};
}

std::size_t DyadicInterval::first_cell(int resolution) const {
  if (scale > resolution) throw std::invalid_argument("interval finer than the grid");
  return static_cast<std::size_t>(offset) << (resolution - scale);
}

std::size_t DyadicInterval::cell_count(int resolution) const {
  if (scale > resolution) throw std::invalid_argument("interval finer than the grid");
  return std::size_t{1} << (resolution - scale);
}

DyadicInterval DyadicInterval::containing_cell(int resolution, std::size_t cell, int scale) {
  return {scale, static_cast<std::uint64_t>(cell >> (resolution - scale))};
}

// ---------------------------------------------------------------------------

int dyadic_class(double value) {
  if (!(value > 0.0) || !std::isfinite(value)) throw std::invalid_argument("dyadic_class needs a positive finite value");
  int e = 0;
  const double m = std::frexp(value, &e);  // value = m 2^e, m in [1/2, 1)
  return m == 0.5 ? 1 - e : -e;
}

DyadicInterval from_heap_id(std::uint64_t id) {
  if (id == 0) throw std::invalid_argument("heap id 0 is not an interval");
  const int scale = 63 - std::countl_zero(id);
  return {scale, id - (std::uint64_t{1} << scale)};
}

std::vector<std::uint32_t> interval_counts(const GridSet& set) {
  const std::size_t n = set.size();
  std::vector<std::uint32_t> counts(2 * n, 0);
  for (std::size_t i = 0; i < n; ++i) counts[n + i] = set[i] ? 1 : 0;
  for (std::size_t id = n - 1; id >= 1; --id) counts[id] = counts[2 * id] + counts[2 * id + 1];
  return counts;
}

int checked_resolution(std::size_t count) {
  if (count == 0 || !std::has_single_bit(count)) throw std::invalid_argument("grid length must be a power of two");
  const int L = std::countr_zero(count);
  if (L > kMaxResolution) throw std::invalid_argument("grid resolution too large");
  return L;
}

void require_same_resolution(int a, int b, const char* what) {
  if (a != b) {
    throw ResolutionMismatch(std::string(what) + ": resolution mismatch (" + std::to_string(a) + " vs " +
                             std::to_string(b) + ")");
  }
}

GridSignal::GridSignal(int resolution) : resolution_(resolution) {
  if (resolution < 0 || resolution > kMaxResolution) throw std::invalid_argument("grid resolution out of range");
  values_.assign(std::size_t{1} << resolution, complex{});
}

GridSignal::GridSignal(int resolution, std::vector<complex> values)
    : resolution_(resolution), values_(std::move(values)) {
  if (resolution < 0 || resolution > kMaxResolution) throw std::invalid_argument("grid resolution out of range");
  if (values_.size() != (std::size_t{1} << resolution)) throw std::invalid_argument("signal length must be 2^L");
}

GridSignal GridSignal::constant(int resolution, complex value) {
  GridSignal f(resolution);
  std::fill(f.values_.begin(), f.values_.end(), value);
  return f;
}

GridSignal GridSignal::from_real(int resolution, std::span<const double> values) {
  GridSignal f(resolution);
  if (values.size() != f.size()) throw std::invalid_argument("signal length must be 2^L");
  std::copy(values.begin(), values.end(), f.values_.begin());
  return f;
}

double GridSignal::cell_measure() const { return std::ldexp(1.0, -resolution_); }

std::vector<double> GridSignal::abs() const {
  std::vector<double> out(values_.size());
  std::transform(values_.begin(), values_.end(), out.begin(), [](complex z) { return std::abs(z); });
  return out;
}

bool GridSignal::all_finite() const {
  return std::all_of(values_.begin(), values_.end(),
                     [](complex z) { return std::isfinite(z.real()) && std::isfinite(z.imag()); });
}

GridSignal& GridSignal::operator+=(const GridSignal& other) {
  require_same_resolution(resolution_, other.resolution_, "signal addition");
  for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += other.values_[i];
  return *this;
}

GridSignal& GridSignal::operator-=(const GridSignal& other) {
  require_same_resolution(resolution_, other.resolution_, "signal subtraction");
  for (std::size_t i = 0; i < values_.size(); ++i) values_[i] -= other.values_[i];
  return *this;
}

GridSignal& GridSignal::operator*=(complex scale) {
  for (auto& v : values_) v *= scale;
  return *this;
}

GridSignal operator+(GridSignal a, const GridSignal& b) { return a += b; }
GridSignal operator-(GridSignal a, const GridSignal& b) { return a -= b; }
GridSignal operator*(complex s, GridSignal a) { return a *= s; }

// ---------------------------------------------------------------------------

GridSet::GridSet(int resolution, bool filled) : resolution_(resolution) {
  if (resolution < 0 || resolution > kMaxResolution) throw std::invalid_argument("grid resolution out of range");
  mask_.assign(std::size_t{1} << resolution, filled ? 1 : 0);
}

GridSet::GridSet(int resolution, std::vector<std::uint8_t> mask) : resolution_(resolution), mask_(std::move(mask)) {
  if (resolution < 0 || resolution > kMaxResolution) throw std::invalid_argument("grid resolution out of range");
  if (mask_.size() != (std::size_t{1} << resolution)) throw std::invalid_argument("mask length must be 2^L");
  for (auto& m : mask_) m = m ? 1 : 0;
}

GridSet GridSet::from_interval(int resolution, const DyadicInterval& interval) {
  GridSet s(resolution);
  const std::size_t first = interval.first_cell(resolution);
  std::fill_n(s.mask_.begin() + static_cast<std::ptrdiff_t>(first), interval.cell_count(resolution), 1);
  return s;
}

std::size_t GridSet::count() const { return static_cast<std::size_t>(std::count(mask_.begin(), mask_.end(), 1)); }

std::size_t GridSet::count_in(std::size_t first, std::size_t n) const {
  const auto b = mask_.begin() + static_cast<std::ptrdiff_t>(first);
  return static_cast<std::size_t>(std::count(b, b + static_cast<std::ptrdiff_t>(n), 1));
}

GridSet GridSet::operator&(const GridSet& other) const {
  require_same_resolution(resolution_, other.resolution_, "set intersection");
  GridSet out(resolution_);
  for (std::size_t i = 0; i < mask_.size(); ++i) out.mask_[i] = mask_[i] & other.mask_[i];
  return out;
}

GridSet GridSet::operator|(const GridSet& other) const {
  require_same_resolution(resolution_, other.resolution_, "set union");
  GridSet out(resolution_);
  for (std::size_t i = 0; i < mask_.size(); ++i) out.mask_[i] = mask_[i] | other.mask_[i];
  return out;
}

GridSet GridSet::operator-(const GridSet& other) const {
  require_same_resolution(resolution_, other.resolution_, "set difference");
  GridSet out(resolution_);
  for (std::size_t i = 0; i < mask_.size(); ++i) out.mask_[i] = mask_[i] & (other.mask_[i] ^ 1);
  return out;
}

GridSet GridSet::complement() const {
  GridSet out(resolution_);
  for (std::size_t i = 0; i < mask_.size(); ++i) out.mask_[i] = mask_[i] ^ 1;
  return out;
}

bool GridSet::subset_of(const GridSet& other) const {
  require_same_resolution(resolution_, other.resolution_, "subset test");
  for (std::size_t i = 0; i < mask_.size(); ++i)
    if (mask_[i] && !other.mask_[i]) return false;
  return true;
}

GridSignal GridSet::indicator() const {
  GridSignal f(resolution_);
  for (std::size_t i = 0; i < mask_.size(); ++i) f[i] = mask_[i] ? 1.0 : 0.0;
  return f;
}

// ---------------------------------------------------------------------------

VectorSignal::VectorSignal(std::vector<GridSignal> members) : members_(std::move(members)) {
  if (members_.empty()) throw std::invalid_argument("vector signal needs at least one member");
  for (const auto& m : members_) require_same_resolution(members_.front().resolution(), m.resolution(), "vector signal");
}

std::vector<double> VectorSignal::pointwise_l2() const {
  std::vector<double> out(members_.front().size(), 0.0);
  for (const auto& f : members_)
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += std::norm(f[i]);
  for (auto& v : out) v = std::sqrt(v);
  return out;
}

// ---------------------------------------------------------------------------

double measure(const GridSet& set) {
  return std::ldexp(static_cast<double>(set.count()), -set.resolution());
}

complex inner_product(const GridSignal& f, const GridSignal& g) {
  require_same_resolution(f.resolution(), g.resolution(), "inner_product");
  std::vector<complex> terms(f.size());
  for (std::size_t i = 0; i < terms.size(); ++i) terms[i] = f[i] * std::conj(g[i]);
  return pairwise_sum(std::span<const complex>(terms)) * f.cell_measure();
}

double lp_norm(std::span<const double> values, int resolution, double p) {
  if (!(p > 0.0)) throw std::invalid_argument("lp_norm requires p > 0");
  if (std::isinf(p)) {
    double m = 0.0;
    for (double v : values) m = std::max(m, std::abs(v));
    return m;
  }
  std::vector<double> terms(values.size());
  if (p == 2.0) {
    std::transform(values.begin(), values.end(), terms.begin(), [](double v) { return v * v; });
    return std::sqrt(std::ldexp(pairwise_sum(std::span<const double>(terms)), -resolution));
  }
  std::transform(values.begin(), values.end(), terms.begin(), [p](double v) { return std::pow(std::abs(v), p); });
  return std::pow(std::ldexp(pairwise_sum(std::span<const double>(terms)), -resolution), 1.0 / p);
}

double lp_norm(const GridSignal& f, double p) {
  if (p == 2.0) {
    std::vector<double> terms(f.size());
    for (std::size_t i = 0; i < terms.size(); ++i) terms[i] = std::norm(f[i]);
    return std::sqrt(std::ldexp(pairwise_sum(std::span<const double>(terms)), -f.resolution()));
  }
  const auto a = f.abs();
  return lp_norm(a, f.resolution(), p);
}

double vector_lq_norm(const VectorSignal& family, double q) {
  const auto stack = family.pointwise_l2();
  return lp_norm(stack, family.resolution(), q);
}

double chi_tilde(const DyadicInterval& interval, double x) {
  const double u = (x - interval.center()) / interval.length();
  return 1.0 / std::sqrt(1.0 + u * u);
}

GridSignal restrict_to(const GridSignal& f, const GridSet& set) {
  require_same_resolution(f.resolution(), set.resolution(), "restrict_to");
  GridSignal out = f;
  for (std::size_t i = 0; i < f.size(); ++i)
    if (!set[i]) out[i] = 0.0;
  return out;
}

// ---------------------------------------------------------------------------

std::uint64_t reverse_bits(std::uint64_t value, int bits) {
  std::uint64_t r = 0;
  for (int i = 0; i < bits; ++i) {
    r = (r << 1) | (value & 1u);
    value >>= 1;
  }
  return r;
}

int walsh_sign(std::uint64_t l, std::uint64_t cell, int bits) {
  return (std::popcount(l & reverse_bits(cell, bits)) & 1) ? -1 : 1;
}

void hadamard_in_place(std::span<complex> block) {
  const std::size_t n = block.size();
  for (std::size_t h = 1; h < n; h <<= 1) {
    for (std::size_t i = 0; i < n; i += 2 * h) {
      for (std::size_t j = i; j < i + h; ++j) {
        const complex a = block[j];
        const complex b = block[j + h];
        block[j] = a + b;
        block[j + h] = a - b;
      }
    }
  }
}

std::vector<complex> walsh_transform(const GridSignal& f) {
  const int L = f.resolution();
  std::vector<complex> h(f.values().begin(), f.values().end());
  hadamard_in_place(h);
  std::vector<complex> out(h.size());
  const double scale = f.cell_measure();
  // Paley index l corresponds to Hadamard index reverse(l).
  for (std::size_t l = 0; l < h.size(); ++l) out[l] = h[reverse_bits(l, L)] * scale;
  return out;
}

GridSignal inverse_walsh_transform(int resolution, std::span<const complex> coefficients) {
  GridSignal f(resolution);
  if (coefficients.size() != f.size()) throw std::invalid_argument("coefficient count must be 2^L");
  std::vector<complex> h(f.size());
  for (std::size_t l = 0; l < h.size(); ++l) h[reverse_bits(l, resolution)] = coefficients[l];
  hadamard_in_place(h);
  for (std::size_t i = 0; i < h.size(); ++i) f[i] = h[i];
  return f;
}

// ---------------------------------------------------------------------------

CsvError::CsvError(std::size_t row, const std::string& message)
    : std::runtime_error("row " + std::to_string(row) + ": " + message), row_(row) {}

std::vector<std::string> csv_fields(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, ',')) {
    while (!field.empty() && (field.back() == '\r' || field.back() == ' ')) field.pop_back();
    while (!field.empty() && field.front() == ' ') field.erase(field.begin());
    fields.push_back(field);
  }
  return fields;
}

double csv_double(const std::string& s, std::size_t row) {
  try {
    std::size_t used = 0;
    double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw CsvError(row, "not a number: '" + s + "'");
  }
}

std::uint64_t csv_index(const std::string& s, std::size_t row) {
  if (s.empty() || !std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; }))
    throw CsvError(row, "not a nonnegative integer: '" + s + "'");
  return std::stoull(s);
}

void write_signal_csv(std::ostream& out, const GridSignal& f) {
  out << "index,re,im\n";
  out.precision(17);
  for (std::size_t i = 0; i < f.size(); ++i) out << i << ',' << f[i].real() << ',' << f[i].imag() << '\n';
}

GridSignal read_signal_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw CsvError(1, "missing header");
  if (csv_fields(line) != std::vector<std::string>{"index", "re", "im"})
    throw CsvError(1, "expected header 'index,re,im'");
  std::vector<complex> values;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty() || line == "\r") continue;
    const auto fields = csv_fields(line);
    if (fields.size() != 3) throw CsvError(row, "expected 3 fields");
    if (csv_index(fields[0], row) != values.size()) throw CsvError(row, "indices must be consecutive from 0");
    values.emplace_back(csv_double(fields[1], row), csv_double(fields[2], row));
  }
  int L = 0;
  try {
    L = checked_resolution(values.size());
  } catch (const std::invalid_argument& e) {
    throw CsvError(row, e.what());
  }
  return GridSignal(L, std::move(values));
}

void write_set_csv(std::ostream& out, const GridSet& set) {
  out << "index,member\n";
  for (std::size_t i = 0; i < set.size(); ++i) out << i << ',' << (set[i] ? 1 : 0) << '\n';
}

GridSet read_set_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw CsvError(1, "missing header");
  if (csv_fields(line) != std::vector<std::string>{"index", "member"})
    throw CsvError(1, "expected header 'index,member'");
  std::vector<std::uint8_t> mask;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty() || line == "\r") continue;
    const auto fields = csv_fields(line);
    if (fields.size() != 2) throw CsvError(row, "expected 2 fields");
    if (csv_index(fields[0], row) != mask.size()) throw CsvError(row, "indices must be consecutive from 0");
    if (fields[1] != "0" && fields[1] != "1") throw CsvError(row, "member must be 0 or 1");
    mask.push_back(fields[1] == "1" ? 1 : 0);
  }
  int L = 0;
  try {
    L = checked_resolution(mask.size());
  } catch (const std::invalid_argument& e) {
    throw CsvError(row, e.what());
  }
  return GridSet(L, std::move(mask));
}

}  // namespace tflab
