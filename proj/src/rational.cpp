#include "htl/rational.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace htl {

namespace {

__int128 abs128(__int128 v) { return v < 0 ? -v : v; }

__int128 gcd128(__int128 a, __int128 b) {
  a = abs128(a);
  b = abs128(b);
  while (b != 0) {
    const __int128 t = a % b;
    a = b;
    b = t;
  }
  return a;
}

bool fits(__int128 v) {
  return v >= std::numeric_limits<std::int64_t>::min() + 1 && v <= std::numeric_limits<std::int64_t>::max();
}

}  // namespace

Rational Rational::from_wide(__int128 num, __int128 den) {
  if (den == 0) throw std::domain_error("division by zero");
  if (den < 0) {
    num = -num;
    den = -den;
  }
  const __int128 g = gcd128(num, den);
  if (g > 1) {
    num /= g;
    den /= g;
  }
  if (!fits(num) || !fits(den)) throw RationalOverflow("rational overflow");
  Rational r;
  r.num_ = static_cast<std::int64_t>(num);
  r.den_ = static_cast<std::int64_t>(den);
  return r;
}

Rational::Rational(std::int64_t num, std::int64_t den) { *this = from_wide(num, den); }

Rational operator+(const Rational& a, const Rational& b) {
  return Rational::from_wide(static_cast<__int128>(a.num_) * b.den_ + static_cast<__int128>(b.num_) * a.den_,
                             static_cast<__int128>(a.den_) * b.den_);
}

Rational operator-(const Rational& a, const Rational& b) {
  return Rational::from_wide(static_cast<__int128>(a.num_) * b.den_ - static_cast<__int128>(b.num_) * a.den_,
                             static_cast<__int128>(a.den_) * b.den_);
}

Rational operator*(const Rational& a, const Rational& b) {
  return Rational::from_wide(static_cast<__int128>(a.num_) * b.num_, static_cast<__int128>(a.den_) * b.den_);
}

Rational operator/(const Rational& a, const Rational& b) {
  if (b.num_ == 0) throw std::domain_error("division by zero");
  return Rational::from_wide(static_cast<__int128>(a.num_) * b.den_, static_cast<__int128>(a.den_) * b.num_);
}

Rational Rational::operator-() const { return from_wide(-static_cast<__int128>(num_), den_); }

std::strong_ordering operator<=>(const Rational& a, const Rational& b) {
  const __int128 l = static_cast<__int128>(a.num_) * b.den_;
  const __int128 r = static_cast<__int128>(b.num_) * a.den_;
  if (l < r) return std::strong_ordering::less;
  if (l > r) return std::strong_ordering::greater;
  return std::strong_ordering::equal;
}

std::string Rational::to_string() const {
  if (den_ == 1) return std::to_string(num_);
  std::int64_t d = den_;
  int twos = 0, fives = 0;
  while (d % 2 == 0) {
    d /= 2;
    ++twos;
  }
  while (d % 5 == 0) {
    d /= 5;
    ++fives;
  }
  if (d != 1) return std::to_string(num_) + "/" + std::to_string(den_);
  const int digits = std::max(twos, fives);
  __int128 scaled = static_cast<__int128>(num_);
  __int128 pow10 = 1;
  for (int i = 0; i < digits; ++i) pow10 *= 10;
  scaled = scaled * pow10 / den_;
  const bool neg = scaled < 0;
  __int128 mag = abs128(scaled);
  std::string frac;
  for (int i = 0; i < digits; ++i) {
    frac.insert(frac.begin(), static_cast<char>('0' + static_cast<int>(mag % 10)));
    mag /= 10;
  }
  std::string whole;
  do {
    whole.insert(whole.begin(), static_cast<char>('0' + static_cast<int>(mag % 10)));
    mag /= 10;
  } while (mag != 0);
  return (neg ? "-" : "") + whole + "." + frac;
}

namespace {

std::optional<__int128> parse_digits(std::string_view s) {
  if (s.empty() || s.size() > 18) return std::nullopt;
  __int128 v = 0;
  for (char c : s) {
    if (c < '0' || c > '9') return std::nullopt;
    v = v * 10 + (c - '0');
  }
  return v;
}

}  // namespace

std::optional<Rational> parse_rational(std::string_view text) {
  bool neg = false;
  if (!text.empty() && text.front() == '-') {
    neg = true;
    text.remove_prefix(1);
  }
  try {
    if (const auto slash = text.find('/'); slash != std::string_view::npos) {
      const auto n = parse_digits(text.substr(0, slash));
      const auto d = parse_digits(text.substr(slash + 1));
      if (!n || !d || *d == 0) return std::nullopt;
      const Rational r(static_cast<std::int64_t>(*n), static_cast<std::int64_t>(*d));
      return neg ? -r : r;
    }
    if (const auto dot = text.find('.'); dot != std::string_view::npos) {
      const auto w = parse_digits(text.substr(0, dot));
      const auto frac_text = text.substr(dot + 1);
      const auto f = parse_digits(frac_text);
      if (!w || !f) return std::nullopt;
      std::int64_t scale = 1;
      for (std::size_t i = 0; i < frac_text.size(); ++i) scale *= 10;
      const Rational r = Rational(static_cast<std::int64_t>(*w)) + Rational(static_cast<std::int64_t>(*f), scale);
      return neg ? -r : r;
    }
    const auto w = parse_digits(text);
    if (!w) return std::nullopt;
    const Rational r(static_cast<std::int64_t>(*w));
    return neg ? -r : r;
  } catch (const RationalOverflow&) {
    return std::nullopt;
  }
}

bool answers_match(const Rational& a, const Rational& b) {
  if (a == b) return true;
  const double x = a.to_double(), y = b.to_double();
  return std::abs(x - y) <= 1e-9 * std::max(std::abs(x), std::abs(y));
}

}  // namespace htl
