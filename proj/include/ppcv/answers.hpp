#pragma once

/**
 * Answer normalization and equality.
 *
 * Benchmarks leave answer matching underspecified, so the rules here are
 * deliberately conservative: numeric answers are compared as exact
 * rationals whenever both sides parse as integer / decimal / fraction
 * strings (no tolerance, so large GSM-Hard-style integers never merge by
 * accident), and a 1e-9 relative tolerance applies only when a side falls
 * back to floating-point parsing (scientific notation and similar forms).
 */

#include "ppcv/types.hpp"

#include <boost/multiprecision/cpp_int.hpp>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <optional>
#include <string>

namespace ppcv {

namespace detail {

using BigInt = boost::multiprecision::cpp_int;

struct Rational {
    BigInt num;
    BigInt den;  // > 0
};

inline bool is_digit(char c) { return c >= '0' && c <= '9'; }

inline std::string strip_ws(const std::string& s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

// Strips dollar signs and thousands separators (commas between digits).
inline std::string strip_currency(const std::string& s) {
    std::string out;
    out.reserve(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) {
        char c = s[i];
        if (c == '$') continue;
        if (c == ',' && !out.empty() && is_digit(out.back()) && i + 1 < s.size() && is_digit(s[i + 1]))
            continue;
        out.push_back(c);
    }
    return out;
}

inline std::string strip_trailing_punct(std::string s) {
    while (!s.empty()) {
        char c = s.back();
        // A trailing '.' is punctuation only when not preceded by a digit
        // sequence that still expects a fraction part; "51." ends a sentence,
        // "51.0" does not.
        if (c == ',' || c == ';' || c == ':' || c == '!' || c == '?' || c == '.') {
            s.pop_back();
            continue;
        }
        break;
    }
    return s;
}

// Canonical integer digits: no leading zeros ("007" -> "7", "000" -> "0").
inline std::string canon_digits(std::string d) {
    std::size_t i = 0;
    while (i + 1 < d.size() && d[i] == '0') ++i;
    return d.substr(i);
}

inline bool all_digits(const std::string& s) {
    if (s.empty()) return false;
    return std::all_of(s.begin(), s.end(), [](char c) { return is_digit(c); });
}

// Recognizes [sign] digits [ '.' digits ] and returns the canonical form,
// or nullopt. Canonical: no '+', no '-0', no leading zeros, no trailing
// fractional zeros, no dangling point.
inline std::optional<std::string> canon_plain_number(const std::string& s) {
    std::string body = s;
    bool neg = false;
    if (!body.empty() && (body[0] == '+' || body[0] == '-')) {
        neg = body[0] == '-';
        body = body.substr(1);
    }
    std::string ipart = body, fpart;
    if (auto dot = body.find('.'); dot != std::string::npos) {
        ipart = body.substr(0, dot);
        fpart = body.substr(dot + 1);
        if (body.find('.', dot + 1) != std::string::npos) return std::nullopt;
    }
    if (ipart.empty() && fpart.empty()) return std::nullopt;
    if (!ipart.empty() && !all_digits(ipart)) return std::nullopt;
    if (!fpart.empty() && !all_digits(fpart)) return std::nullopt;

    while (!fpart.empty() && fpart.back() == '0') fpart.pop_back();
    if (ipart.empty()) ipart = "0";
    ipart = canon_digits(ipart);

    std::string out = ipart;
    if (!fpart.empty()) out += "." + fpart;
    const bool is_zero = all_digits(ipart) && ipart == "0" && fpart.empty();
    if (neg && !is_zero) out.insert(out.begin(), '-');
    return out;
}

// Recognizes [sign] digits '/' [sign] digits, denominator non-zero. The
// canonical form carries the sign on the numerator and is left unreduced.
inline std::optional<std::string> canon_fraction(const std::string& s) {
    auto slash = s.find('/');
    if (slash == std::string::npos || s.find('/', slash + 1) != std::string::npos)
        return std::nullopt;
    std::string ns = s.substr(0, slash);
    std::string ds = s.substr(slash + 1);
    bool neg = false;
    if (!ns.empty() && (ns[0] == '+' || ns[0] == '-')) {
        neg ^= ns[0] == '-';
        ns = ns.substr(1);
    }
    if (!ds.empty() && (ds[0] == '+' || ds[0] == '-')) {
        neg ^= ds[0] == '-';
        ds = ds.substr(1);
    }
    if (!all_digits(ns) || !all_digits(ds)) return std::nullopt;
    ns = canon_digits(ns);
    ds = canon_digits(ds);
    if (ds == "0") return std::nullopt;
    if (ns == "0") neg = false;
    return (neg ? "-" : "") + ns + "/" + ds;
}

inline BigInt pow10(std::size_t k) {
    BigInt p = 1;
    for (std::size_t i = 0; i < k; ++i) p *= 10;
    return p;
}

// Exact rational value of a canonical integer/decimal/fraction string.
inline std::optional<Rational> parse_rational(const std::string& s) {
    if (auto frac = canon_fraction(s)) {
        auto slash = frac->find('/');
        BigInt num(frac->substr(0, slash));
        BigInt den(frac->substr(slash + 1));
        return Rational{num, den};
    }
    if (auto plain = canon_plain_number(s)) {
        std::string body = *plain;
        bool neg = false;
        if (body[0] == '-') {
            neg = true;
            body = body.substr(1);
        }
        std::string ipart = body, fpart;
        if (auto dot = body.find('.'); dot != std::string::npos) {
            ipart = body.substr(0, dot);
            fpart = body.substr(dot + 1);
        }
        BigInt den = pow10(fpart.size());
        BigInt num = BigInt(ipart.empty() ? "0" : ipart) * den;
        if (!fpart.empty()) num += BigInt(fpart);
        if (neg) num = -num;
        return Rational{num, den};
    }
    return std::nullopt;
}

inline std::optional<double> parse_double(const std::string& s) {
    if (s.empty()) return std::nullopt;
    const char* begin = s.c_str();
    char* end = nullptr;
    double v = std::strtod(begin, &end);
    if (end != begin + s.size()) return std::nullopt;
    if (!std::isfinite(v)) return std::nullopt;
    return v;
}

}  // namespace detail

/**
 * Canonicalizes a raw extracted answer. Returns nullopt when unparseable;
 * callers treat that rollout's answer as absent.
 *
 * numeric: strips whitespace, "$", thousands commas and trailing
 * punctuation; canonicalizes sign and leading zeros; keeps decimal and
 * fraction forms ("1,234.50" -> "1234.5", "2/4" stays "2/4"). Strings that
 * only parse as floating point (e.g. "1e3") are kept verbatim after
 * stripping. multiple_choice: yields the single uppercase letter.
 */
inline std::optional<std::string> normalize_answer(const std::string& raw, AnswerKind kind) {
    using namespace detail;
    if (kind == AnswerKind::multiple_choice) {
        std::string s = strip_ws(raw);
        // Strip decorations: parentheses, periods, colons, brackets.
        std::string letters;
        for (char c : s) {
            if (c == '(' || c == ')' || c == '.' || c == ':' || c == '[' || c == ']' ||
                std::isspace(static_cast<unsigned char>(c)))
                continue;
            letters.push_back(c);
        }
        if (letters.size() != 1 || !std::isalpha(static_cast<unsigned char>(letters[0])))
            return std::nullopt;
        return std::string(1, static_cast<char>(std::toupper(static_cast<unsigned char>(letters[0]))));
    }

    std::string s = strip_ws(strip_currency(strip_ws(raw)));
    if (auto frac = canon_fraction(s)) return frac;
    if (auto plain = canon_plain_number(s)) return plain;
    s = strip_ws(strip_trailing_punct(s));
    if (auto frac = canon_fraction(s)) return frac;
    if (auto plain = canon_plain_number(s)) return plain;
    if (detail::parse_double(s)) return s;  // float-only form, kept verbatim
    return std::nullopt;
}

/**
 * Equality on normalized answers. multiple_choice compares letters.
 * numeric compares exact rationals when both sides parse as
 * integer/decimal/fraction; otherwise falls back to floating point with
 * 1e-9 relative tolerance. Total: never throws, unparseable-vs-parseable
 * is false.
 */
inline bool answers_equal(const std::string& a, const std::string& b, AnswerKind kind) {
    using namespace detail;
    if (kind == AnswerKind::multiple_choice) return a == b;
    if (a == b) return true;
    const auto ra = parse_rational(a);
    const auto rb = parse_rational(b);
    if (ra && rb) {
        // Exact cross-multiplied comparison; no tolerance by design.
        return ra->num * rb->den == rb->num * ra->den;
    }
    const auto da = ra ? std::optional<double>(static_cast<double>(ra->num) / static_cast<double>(ra->den))
                       : parse_double(a);
    const auto db = rb ? std::optional<double>(static_cast<double>(rb->num) / static_cast<double>(rb->den))
                       : parse_double(b);
    if (!da || !db) return false;
    const double scale = std::max(std::abs(*da), std::abs(*db));
    if (scale == 0.0) return true;
    return std::abs(*da - *db) <= 1e-9 * scale;
}

}  // namespace ppcv
