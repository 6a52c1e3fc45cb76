// Shared plumbing: error type, deterministic RNG, hashing, date arithmetic.
#pragma once

#include <charconv>
#include <cstdint>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace tesan {

/// Library-wide error type. Messages are meant to be shown to the user as-is.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Non-finite values detected mid-computation. The trainer treats this as
/// divergence (recoverable); everything else treats it as any other Error.
class NumericError : public Error {
public:
    using Error::Error;
};

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// FNV-1a over raw bytes. Used for vocabulary fingerprints in checkpoints.
inline std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ULL) {
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

/// Deterministic random source. All draws are derived from explicit bit
/// manipulation of mt19937_64 output, so a seed produces the same stream on
/// every platform regardless of standard-library distribution internals.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    std::uint64_t next_u64() { return gen_(); }

    /// Uniform in [0, 1) with 53 bits of randomness.
    double next_double() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    /// Unbiased uniform in [0, n). n must be > 0.
    std::uint64_t next_below(std::uint64_t n) {
        const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
        std::uint64_t v = gen_();
        while (v >= limit) v = gen_();
        return v % n;
    }

    /// Uniform integer in [lo, hi], inclusive.
    std::int64_t next_int(std::int64_t lo, std::int64_t hi) {
        return lo + static_cast<std::int64_t>(next_below(static_cast<std::uint64_t>(hi - lo) + 1));
    }

    double next_real(double lo, double hi) { return lo + (hi - lo) * next_double(); }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::swap(v[i - 1], v[next_below(i)]);
        }
    }

    /// Independent stream for a given lane (per-patient generation etc.).
    static Rng derive(std::uint64_t seed, std::uint64_t lane) {
        return Rng(splitmix64(seed ^ splitmix64(lane + 1)));
    }

    std::string state() const {
        std::ostringstream os;
        os << gen_;
        return os.str();
    }

    void set_state(const std::string& s) {
        std::istringstream is(s);
        is >> gen_;
        if (is.fail()) throw Error("invalid rng state string");
    }

private:
    std::mt19937_64 gen_;
};

/// Days since 1970-01-01 for a proleptic Gregorian calendar date.
inline std::int64_t days_from_civil(int y, int m, int d) {
    y -= m <= 2;
    const int era = (y >= 0 ? y : y - 399) / 400;
    const unsigned yoe = static_cast<unsigned>(y - era * 400);
    const unsigned doy = (153u * static_cast<unsigned>(m + (m > 2 ? -3 : 9)) + 2u) / 5u + static_cast<unsigned>(d) - 1u;
    const unsigned doe = yoe * 365u + yoe / 4u - yoe / 100u + doy;
    return static_cast<std::int64_t>(era) * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

/// Parses strict "YYYY-MM-DD" into a day serial; throws Error on bad input.
inline std::int64_t parse_date(std::string_view s) {
    auto bad = [&] { throw Error("invalid date '" + std::string(s) + "', expected YYYY-MM-DD"); };
    if (s.size() != 10 || s[4] != '-' || s[7] != '-') bad();
    int y = 0, m = 0, d = 0;
    auto num = [&](std::size_t off, std::size_t len, int& out) {
        auto [p, ec] = std::from_chars(s.data() + off, s.data() + off + len, out);
        if (ec != std::errc{} || p != s.data() + off + len) bad();
    };
    num(0, 4, y);
    num(5, 2, m);
    num(8, 2, d);
    if (m < 1 || m > 12 || d < 1) bad();
    static constexpr int mdays[] = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
    const bool leap = (y % 4 == 0 && y % 100 != 0) || y % 400 == 0;
    if (d > mdays[m - 1] + ((m == 2 && leap) ? 1 : 0)) bad();
    return days_from_civil(y, m, d);
}

/// Shortest decimal representation that round-trips the value.
template <typename T>
std::string format_value(T v) {
    char buf[64];
    auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    if (ec != std::errc{}) throw Error("number formatting failed");
    return std::string(buf, p);
}

}  // namespace tesan
