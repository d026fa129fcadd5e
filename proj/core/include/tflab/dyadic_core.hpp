#pragma once

#include <complex>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace tflab {

using complex = std::complex<double>;

class ResolutionMismatch : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Largest number of grid bits the library accepts: 2^24 cells in 1D, 2^12 x 2^12
/// in 2D. The CLI caps experiments at 2^12 cells.
inline constexpr int kMaxResolution = 24;

/// Deterministic pairwise (tree) summation in index order.
double pairwise_sum(std::span<const double> values);
complex pairwise_sum(std::span<const complex> values);

/// Dyadic interval [offset * 2^-scale, (offset + 1) * 2^-scale) inside [0,1).
struct DyadicInterval {
  int scale = 0;
  std::uint64_t offset = 0;

  DyadicInterval() = default;
  DyadicInterval(int scale, std::uint64_t offset);

  double length() const;
  double left() const;
  double right() const;
  double center() const;

  bool contains(const DyadicInterval& other) const;
  bool disjoint(const DyadicInterval& other) const;
  bool contains_point(double x) const;

  DyadicInterval parent() const;
  DyadicInterval child(int which) const;
  /// Ancestor at a coarser scale (scale <= this->scale).
  DyadicInterval ancestor(int coarser_scale) const;

  /// Cells [first_cell, first_cell + cell_count) of a grid with 2^resolution cells.
  std::size_t first_cell(int resolution) const;
  std::size_t cell_count(int resolution) const;

  /// The interval of scale `scale` that contains cell `cell` of a 2^resolution grid.
  static DyadicInterval containing_cell(int resolution, std::size_t cell, int scale);

  auto operator<=>(const DyadicInterval&) const = default;
};

/// Complex samples on the 2^L cells of [0,1).
class GridSignal {
 public:
  GridSignal() = default;
  explicit GridSignal(int resolution);
  GridSignal(int resolution, std::vector<complex> values);

  static GridSignal constant(int resolution, complex value);
  static GridSignal from_real(int resolution, std::span<const double> values);

  int resolution() const { return resolution_; }
  std::size_t size() const { return values_.size(); }
  double cell_measure() const;

  complex& operator[](std::size_t i) { return values_[i]; }
  const complex& operator[](std::size_t i) const { return values_[i]; }
  std::span<const complex> values() const { return values_; }
  std::span<complex> values() { return values_; }

  std::vector<double> abs() const;
  bool all_finite() const;

  GridSignal& operator+=(const GridSignal& other);
  GridSignal& operator-=(const GridSignal& other);
  GridSignal& operator*=(complex scale);

 private:
  int resolution_ = 0;
  std::vector<complex> values_ = std::vector<complex>(1);
};

GridSignal operator+(GridSignal a, const GridSignal& b);
GridSignal operator-(GridSignal a, const GridSignal& b);
GridSignal operator*(complex s, GridSignal a);

/// Boolean mask over the 2^L cells.
class GridSet {
 public:
  GridSet() = default;
  explicit GridSet(int resolution, bool filled = false);
  GridSet(int resolution, std::vector<std::uint8_t> mask);

  static GridSet full(int resolution) { return GridSet(resolution, true); }
  static GridSet empty(int resolution) { return GridSet(resolution, false); }
  static GridSet from_interval(int resolution, const DyadicInterval& interval);

  int resolution() const { return resolution_; }
  std::size_t size() const { return mask_.size(); }
  bool operator[](std::size_t i) const { return mask_[i] != 0; }
  void set(std::size_t i, bool value) { mask_[i] = value ? 1 : 0; }

  std::size_t count() const;
  /// Number of member cells inside the given cell range.
  std::size_t count_in(std::size_t first, std::size_t n) const;
  bool is_empty() const { return count() == 0; }

  GridSet operator&(const GridSet& other) const;
  GridSet operator|(const GridSet& other) const;
  /// Set difference.
  GridSet operator-(const GridSet& other) const;
  GridSet complement() const;
  bool subset_of(const GridSet& other) const;

  GridSignal indicator() const;
  std::span<const std::uint8_t> mask() const { return mask_; }

  bool operator==(const GridSet&) const = default;

 private:
  int resolution_ = 0;
  std::vector<std::uint8_t> mask_ = std::vector<std::uint8_t>(1, 0);
};

/// Nonempty family of signals sharing one resolution.
class VectorSignal {
 public:
  VectorSignal() = default;
  explicit VectorSignal(std::vector<GridSignal> members);

  int resolution() const { return members_.front().resolution(); }
  std::size_t size() const { return members_.size(); }
  const GridSignal& operator[](std::size_t j) const { return members_[j]; }
  const std::vector<GridSignal>& members() const { return members_; }

  /// Pointwise (sum_j |f_j(x)|^2)^{1/2}.
  std::vector<double> pointwise_l2() const;

 private:
  std::vector<GridSignal> members_;
};

double measure(const GridSet& set);
complex inner_product(const GridSignal& f, const GridSignal& g);
double lp_norm(const GridSignal& f, double p);
/// L^p norm of a real, nonnegative-or-signed profile sampled on 2^L cells.
double lp_norm(std::span<const double> values, int resolution, double p);
double vector_lq_norm(const VectorSignal& family, double q);
double chi_tilde(const DyadicInterval& interval, double x);

/// Pointwise product with an indicator.
GridSignal restrict_to(const GridSignal& f, const GridSet& set);

/// Paley-ordered Walsh coefficients <f, W_l>, l = 0 .. 2^L - 1.
std::vector<complex> walsh_transform(const GridSignal& f);
GridSignal inverse_walsh_transform(int resolution, std::span<const complex> coefficients);
/// W_l evaluated on cell c of a grid with `bits` binary digits.
int walsh_sign(std::uint64_t l, std::uint64_t cell, int bits);
/// In-place unnormalized Hadamard butterfly over a power-of-two block.
void hadamard_in_place(std::span<complex> block);
std::uint64_t reverse_bits(std::uint64_t value, int bits);

/// Dyadic class of a positive value: the n with 2^{-n-1} < v <= 2^{-n}.
/// Exact powers of two land in the larger class.
int dyadic_class(double value);

/// Heap numbering of dyadic intervals: [0,1) is 1, children of id are 2id, 2id+1.
inline std::uint64_t heap_id(const DyadicInterval& I) { return (std::uint64_t{1} << I.scale) + I.offset; }
DyadicInterval from_heap_id(std::uint64_t id);

/// Per-interval cell counts of a mask, indexed by heap id (size 2^{L+1}).
std::vector<std::uint32_t> interval_counts(const GridSet& set);

int checked_resolution(std::size_t count);
void require_same_resolution(int a, int b, const char* what);

// CSV interchange: signals `index,re,im`; sets `index,member`.
void write_signal_csv(std::ostream& out, const GridSignal& f);
GridSignal read_signal_csv(std::istream& in);
void write_set_csv(std::ostream& out, const GridSet& set);
GridSet read_set_csv(std::istream& in);

class CsvError : public std::runtime_error {
 public:
  CsvError(std::size_t row, const std::string& message);
  std::size_t row() const { return row_; }

 private:
  std::size_t row_;
};

/// Comma-split with surrounding blanks trimmed.
std::vector<std::string> csv_fields(const std::string& line);
double csv_double(const std::string& s, std::size_t row);
std::uint64_t csv_index(const std::string& s, std::size_t row);

}  // namespace tflab
