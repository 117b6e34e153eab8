#include "clef/repr.hpp"

#include <algorithm>
#include <bit>
#include <cassert>
#include <cfloat>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <mutex>

namespace clef::repr {

namespace {

long floor_div(long a, long b) {
    long q = a / b;
    if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
    return q;
}

std::uint64_t width_mask(int n) {
    return n >= 64 ? ~0ULL : ((1ULL << n) - 1);
}

// -----------------------------------------------------------------------------
// Posit layout parameters
// -----------------------------------------------------------------------------

struct PositLayout {
    int n = 0;
    int es = 2;
    int regime_cap = 0;  // maximum regime run length (n-1 when unbounded)
    int exp_bias = 0;
};

PositLayout layout_of(const Posit& p) { return {p.n, p.es, p.n - 1, 0}; }
PositLayout layout_of(const BPosit& p) { return {p.n, p.es, p.rs, p.exp_bias}; }

bool layout_supported(const PositLayout& l) {
    return l.n >= 3 && l.n <= 32 && l.es >= 1 && l.es <= 5 && l.regime_cap >= 2;
}

// Decoded posit in exact parts: value = (-1)^neg * (sig / 2^63) * 2^scale,
// with sig's top bit set.
struct PositParts {
    bool zero = false;
    bool nar = false;
    bool neg = false;
    long scale = 0;
    std::uint64_t sig = 0;
};

PositParts decode_parts(const PositLayout& l, std::uint64_t bits) {
    const std::uint64_t mask = width_mask(l.n);
    bits &= mask;
    PositParts out;
    if (bits == 0) {
        out.zero = true;
        return out;
    }
    if (bits == (1ULL << (l.n - 1))) {
        out.nar = true;
        return out;
    }
    out.neg = (bits >> (l.n - 1)) & 1;
    if (out.neg) bits = (~bits + 1) & mask;

    const int avail = l.n - 1;
    int pos = l.n - 2;
    const int b = static_cast<int>((bits >> pos) & 1);
    const int cap = std::min(l.regime_cap, avail);
    int run = 0;
    while (run < cap && pos >= 0 && static_cast<int>((bits >> pos) & 1) == b) {
        ++run;
        --pos;
    }
    if (run < cap && pos >= 0) --pos;  // consume the terminator
    const long k = (b == 1) ? run - 1 : -run;

    const int remaining = pos + 1;
    const int e_bits = std::min(l.es, remaining);
    std::uint64_t e = 0;
    if (e_bits > 0) e = (bits >> (remaining - e_bits)) & width_mask(e_bits);
    e <<= (l.es - e_bits);  // truncated low exponent bits read as zero

    const int frac_bits = remaining - e_bits;
    const std::uint64_t frac = frac_bits > 0 ? (bits & width_mask(frac_bits)) : 0;

    out.scale = (k << l.es) + static_cast<long>(e) + l.exp_bias;
    out.sig = (1ULL << 63) | (frac_bits > 0 ? (frac << (63 - frac_bits)) : 0);
    return out;
}

double parts_value(const PositParts& p) {
    if (p.zero) return 0.0;
    if (p.nar) return std::numeric_limits<double>::quiet_NaN();
    double v = std::ldexp(static_cast<double>(p.sig), static_cast<int>(p.scale) - 63);
    return p.neg ? -v : v;
}

// Compares |value| represented as (scale, sig, sticky) against decoded parts.
// Returns -1/0/+1.
int compare_magnitude(long scale, std::uint64_t sig, bool sticky, const PositParts& ref) {
    if (scale != ref.scale) return scale < ref.scale ? -1 : 1;
    if (sig != ref.sig) return sig < ref.sig ? -1 : 1;
    return sticky ? 1 : 0;
}

// Round-to-nearest (ties to even in bit space) encoding from exact parts.
// The caller guarantees the magnitude is strictly between 0 and NaR.
std::uint64_t encode_parts(const PositLayout& l, bool neg, long scale_in,
                           std::uint64_t sig, bool sticky) {
    const std::uint64_t mask = width_mask(l.n);
    const PositParts maxp = decode_parts(l, mask >> 1);  // 0b0111...1
    const PositParts minp = decode_parts(l, 1);

    std::uint64_t body;
    if (compare_magnitude(scale_in, sig, sticky, maxp) >= 0) {
        body = mask >> 1;
    } else if (compare_magnitude(scale_in, sig, sticky, minp) <= 0) {
        body = 1;
    } else {
        const long scale = scale_in - l.exp_bias;
        const long k = floor_div(scale, 1L << l.es);
        const std::uint64_t e = static_cast<std::uint64_t>(scale - (k << l.es));

        const int avail = l.n - 1;
        const int cap = std::min(l.regime_cap, avail);
        int remaining = avail;
        body = 0;
        int guard = -1;  // -1: not reached; else 0/1
        bool tail_sticky = false;
        auto emit = [&](int bit) {
            if (remaining > 0) {
                body = (body << 1) | static_cast<std::uint64_t>(bit);
                --remaining;
            } else if (guard < 0) {
                guard = bit;
            } else if (bit != 0) {
                tail_sticky = true;
            }
        };

        const int run_bit = k >= 0 ? 1 : 0;
        const long run_len = k >= 0 ? k + 1 : -k;
        for (long i = 0; i < std::min<long>(run_len, cap); ++i) emit(run_bit);
        if (run_len < cap) emit(1 - run_bit);  // terminator
        for (int i = l.es - 1; i >= 0; --i) emit(static_cast<int>((e >> i) & 1));
        for (int i = 62; i >= 0; --i) emit(static_cast<int>((sig >> i) & 1));
        body <<= remaining;  // value needed fewer bits than available

        tail_sticky = tail_sticky || sticky;
        if (guard == 1 && (tail_sticky || (body & 1))) ++body;
    }

    std::uint64_t code = body;
    if (neg) code = (~code + 1) & mask;
    return code;
}

std::uint64_t encode_double(const PositLayout& l, double x) {
    if (x == 0.0) return 0;
    if (!std::isfinite(x)) return 1ULL << (l.n - 1);  // NaR
    const bool neg = x < 0;
    int exp = 0;
    const double m = std::frexp(std::fabs(x), &exp);  // m in [0.5, 1)
    const long scale = exp - 1;
    const auto sig = static_cast<std::uint64_t>(std::ldexp(m, 64));
    return encode_parts(l, neg, scale, sig, false);
}

// -----------------------------------------------------------------------------
// Enumerated positive value tables for small posit-family formats
// -----------------------------------------------------------------------------

constexpr int kEnumerableMaxN = 20;

const std::vector<double>& positive_values(const NumericFormat& f, const PositLayout& l) {
    static std::mutex mu;
    static std::map<std::string, std::vector<double>> cache;
    std::lock_guard<std::mutex> lock(mu);
    auto key = f.to_string();
    auto it = cache.find(key);
    if (it != cache.end()) return it->second;

    std::vector<double> values;
    const std::uint64_t half = 1ULL << (l.n - 1);
    values.reserve(half - 1);
    for (std::uint64_t code = 1; code < half; ++code) {
        values.push_back(parts_value(decode_parts(l, code)));
    }
    std::sort(values.begin(), values.end());
    return cache.emplace(std::move(key), std::move(values)).first->second;
}

// -----------------------------------------------------------------------------
// Format parameter helpers
// -----------------------------------------------------------------------------

int ieee_frac_bits(const Ieee& f) { return f.width == 64 ? 52 : 23; }

double midpoint_bound(int frac_bits) {
    const double u = std::ldexp(1.0, -(frac_bits + 1));
    return u / (1.0 - u);
}

// Worst-case relative error of a posit-family format near magnitude x,
// analytic regime-length model.
double analytic_posit_error_at(const PositLayout& l, double x) {
    const long s = static_cast<long>(std::floor(std::log2(x)));
    const long field_scale = s - l.exp_bias;
    const long k = floor_div(field_scale, 1L << l.es);
    long rho = k >= 0 ? k + 2 : -k + 1;  // run + terminator
    rho = std::min<long>(rho, std::min(l.regime_cap, l.n - 1));
    const int frac = static_cast<int>(l.n - 1 - rho - l.es);
    if (frac >= 0) return midpoint_bound(frac);
    const int truncated = -frac;  // missing exponent bits
    const double ratio = std::ldexp(1.0, 1 << std::min(truncated, l.es));
    return (ratio - 1.0) / (ratio + 1.0);
}

}  // namespace

// =============================================================================
// Format strings
// =============================================================================

std::string NumericFormat::to_string() const {
    char buf[64];
    if (const auto* f = std::get_if<Ieee>(&kind)) {
        std::snprintf(buf, sizeof buf, "float%d", f->width);
    } else if (const auto* p = std::get_if<Posit>(&kind)) {
        std::snprintf(buf, sizeof buf, "posit%des%d", p->n, p->es);
    } else if (const auto* b = std::get_if<BPosit>(&kind)) {
        if (b->exp_bias != 0) {
            std::snprintf(buf, sizeof buf, "bposit%des%drs%db%d", b->n, b->es, b->rs,
                          b->exp_bias);
        } else {
            std::snprintf(buf, sizeof buf, "bposit%des%drs%d", b->n, b->es, b->rs);
        }
    } else if (const auto* x = std::get_if<Fixed>(&kind)) {
        std::snprintf(buf, sizeof buf, "fixed%d%c%d", x->n, x->is_signed ? 's' : 'u',
                      x->frac_bits);
    } else {
        std::snprintf(buf, sizeof buf, "quire%d", std::get<QuireFor>(kind).posit_n);
    }
    return buf;
}

std::optional<NumericFormat> parse_format(std::string_view text) {
    auto parse_int = [](std::string_view& s) -> std::optional<int> {
        bool neg = false;
        std::size_t i = 0;
        if (i < s.size() && s[i] == '-') {
            neg = true;
            ++i;
        }
        if (i >= s.size() || !std::isdigit(static_cast<unsigned char>(s[i]))) {
            return std::nullopt;
        }
        long v = 0;
        while (i < s.size() && std::isdigit(static_cast<unsigned char>(s[i]))) {
            v = v * 10 + (s[i] - '0');
            if (v > 1'000'000) return std::nullopt;
            ++i;
        }
        s.remove_prefix(i);
        return static_cast<int>(neg ? -v : v);
    };
    auto eat = [](std::string_view& s, std::string_view word) {
        if (s.substr(0, word.size()) != word) return false;
        s.remove_prefix(word.size());
        return true;
    };

    std::string_view s = text;
    if (eat(s, "float")) {
        auto w = parse_int(s);
        if (!w || !s.empty() || (*w != 32 && *w != 64)) return std::nullopt;
        return NumericFormat{Ieee{*w}};
    }
    if (eat(s, "bposit")) {
        auto n = parse_int(s);
        if (!n || !eat(s, "es")) return std::nullopt;
        auto es = parse_int(s);
        if (!es || !eat(s, "rs")) return std::nullopt;
        auto rs = parse_int(s);
        if (!rs) return std::nullopt;
        int bias = 0;
        if (!s.empty()) {
            if (!eat(s, "b")) return std::nullopt;
            auto b = parse_int(s);
            if (!b || !s.empty()) return std::nullopt;
            bias = *b;
        }
        BPosit f{*n, *es, *rs, bias};
        if (f.es < 1 || f.es > 5 || f.rs < 2 || f.rs > 6 || f.n < 3 || f.n > 32) {
            return std::nullopt;
        }
        return NumericFormat{f};
    }
    if (eat(s, "posit")) {
        auto n = parse_int(s);
        if (!n || !eat(s, "es")) return std::nullopt;
        auto es = parse_int(s);
        if (!es || !s.empty() || *es != 2 || *n < 3 || *n > 64) return std::nullopt;
        return NumericFormat{Posit{*n, *es}};
    }
    if (eat(s, "fixed")) {
        auto n = parse_int(s);
        if (!n || s.empty()) return std::nullopt;
        const char c = s.front();
        if (c != 's' && c != 'u') return std::nullopt;
        s.remove_prefix(1);
        auto frac = parse_int(s);
        if (!frac || !s.empty() || *n < 2 || *n > 64 || *frac < 0 || *frac >= *n) {
            return std::nullopt;
        }
        return NumericFormat{Fixed{*n, *frac, c == 's'}};
    }
    if (eat(s, "quire")) {
        auto n = parse_int(s);
        if (!n || !s.empty()) return std::nullopt;
        return NumericFormat{QuireFor{*n}};
    }
    return std::nullopt;
}

std::vector<NumericFormat> enumerate_bposit_candidates(int n) {
    std::vector<NumericFormat> out;
    for (int es = 1; es <= 5; ++es) {
        for (int rs = 2; rs <= 6; ++rs) {
            if (rs + es + 1 >= n) continue;  // no fraction bits anywhere
            for (int bias : {0, -2, -3}) {
                out.push_back(NumericFormat{BPosit{n, es, rs, bias}});
            }
        }
    }
    return out;
}

// =============================================================================
// Codec entry points
// =============================================================================

DecodeResult decode(const NumericFormat& f, std::uint64_t bits) {
    if (const auto* i = std::get_if<Ieee>(&f.kind)) {
        if (i->width == 64) return {std::bit_cast<double>(bits), std::nullopt};
        if (i->width == 32) {
            return {static_cast<double>(
                        std::bit_cast<float>(static_cast<std::uint32_t>(bits))),
                    std::nullopt};
        }
        return {std::nullopt, CodecError::UnsupportedWidth};
    }
    if (const auto* p = std::get_if<Posit>(&f.kind)) {
        auto l = layout_of(*p);
        if (!layout_supported(l)) return {std::nullopt, CodecError::UnsupportedWidth};
        return {parts_value(decode_parts(l, bits)), std::nullopt};
    }
    if (const auto* b = std::get_if<BPosit>(&f.kind)) {
        auto l = layout_of(*b);
        if (!layout_supported(l)) return {std::nullopt, CodecError::UnsupportedWidth};
        return {parts_value(decode_parts(l, bits)), std::nullopt};
    }
    if (const auto* x = std::get_if<Fixed>(&f.kind)) {
        if (x->n < 2 || x->n > 64) return {std::nullopt, CodecError::UnsupportedWidth};
        std::uint64_t code = bits & width_mask(x->n);
        double v;
        if (x->is_signed && (code >> (x->n - 1)) & 1) {
            // sign-extend
            auto sv = static_cast<std::int64_t>(code | ~width_mask(x->n));
            v = static_cast<double>(sv);
        } else {
            v = static_cast<double>(code);
        }
        return {std::ldexp(v, -x->frac_bits), std::nullopt};
    }
    return {std::nullopt, CodecError::UnsupportedWidth};  // quire is not a scalar
}

EncodeResult encode(const NumericFormat& f, double x) {
    if (const auto* i = std::get_if<Ieee>(&f.kind)) {
        if (i->width == 64) return {std::bit_cast<std::uint64_t>(x), std::nullopt};
        if (i->width == 32) {
            return {std::bit_cast<std::uint32_t>(static_cast<float>(x)), std::nullopt};
        }
        return {std::nullopt, CodecError::UnsupportedWidth};
    }
    if (const auto* p = std::get_if<Posit>(&f.kind)) {
        auto l = layout_of(*p);
        if (!layout_supported(l)) return {std::nullopt, CodecError::UnsupportedWidth};
        return {encode_double(l, x), std::nullopt};
    }
    if (const auto* b = std::get_if<BPosit>(&f.kind)) {
        auto l = layout_of(*b);
        if (!layout_supported(l)) return {std::nullopt, CodecError::UnsupportedWidth};
        return {encode_double(l, x), std::nullopt};
    }
    if (const auto* fx = std::get_if<Fixed>(&f.kind)) {
        if (fx->n < 2 || fx->n > 62) return {std::nullopt, CodecError::UnsupportedWidth};
        const double scaled = std::ldexp(x, fx->frac_bits);
        const double lo = fx->is_signed ? -std::ldexp(1.0, fx->n - 1) : 0.0;
        const double hi =
            std::ldexp(1.0, fx->is_signed ? fx->n - 1 : fx->n) - 1.0;
        double r = std::nearbyint(scaled);  // default mode: round half to even
        r = std::clamp(r, lo, hi);
        auto code = static_cast<std::int64_t>(r);
        return {static_cast<std::uint64_t>(code) & width_mask(fx->n), std::nullopt};
    }
    return {std::nullopt, CodecError::UnsupportedWidth};
}

const std::vector<double>* enumerate_positive(const NumericFormat& f) {
    if (!f.is_posit_family()) return nullptr;
    PositLayout l = std::holds_alternative<Posit>(f.kind)
                        ? layout_of(std::get<Posit>(f.kind))
                        : layout_of(std::get<BPosit>(f.kind));
    if (!layout_supported(l) || l.n > kEnumerableMaxN) return nullptr;
    return &positive_values(f, l);
}

MagnitudeRange representable_range(const NumericFormat& f) {
    if (const auto* i = std::get_if<Ieee>(&f.kind)) {
        if (i->width == 64) return {DBL_MIN, DBL_MAX};
        return {FLT_MIN, FLT_MAX};
    }
    if (f.is_posit_family()) {
        PositLayout l = std::holds_alternative<Posit>(f.kind)
                            ? layout_of(std::get<Posit>(f.kind))
                            : layout_of(std::get<BPosit>(f.kind));
        if (!layout_supported(l)) return {0, 0};
        const std::uint64_t mask = width_mask(l.n);
        return {parts_value(decode_parts(l, 1)), parts_value(decode_parts(l, mask >> 1))};
    }
    if (const auto* x = std::get_if<Fixed>(&f.kind)) {
        const double step = std::ldexp(1.0, -x->frac_bits);
        const double hi =
            std::ldexp(1.0, (x->is_signed ? x->n - 1 : x->n) - x->frac_bits) - step;
        return {step, hi};
    }
    return {0, 0};
}

// =============================================================================
// Error analysis
// =============================================================================

namespace {

int decade_of(double x) { return static_cast<int>(std::floor(std::log10(x))); }

void bump_decade(ErrorProfile& p, int decade, double err) {
    for (auto& d : p.decades) {
        if (d.decade == decade) {
            d.worst_rel_error = std::max(d.worst_rel_error, err);
            return;
        }
    }
    p.decades.push_back({decade, err});
}

void finish_profile(ErrorProfile& p) {
    std::sort(p.decades.begin(), p.decades.end(),
              [](const auto& a, const auto& b) { return a.decade < b.decade; });
    p.summary = 0;
    for (const auto& d : p.decades) p.summary = std::max(p.summary, d.worst_rel_error);
}

ErrorProfile enumerated_profile(const std::vector<double>& values, double lo, double hi) {
    ErrorProfile p;
    // Ensure every decade intersecting the range appears, even if error 0.
    for (int d = decade_of(lo); d <= decade_of(hi); ++d) bump_decade(p, d, 0.0);

    auto first = std::lower_bound(values.begin(), values.end(), lo);
    if (first != values.begin()) --first;  // the gap straddling lo matters
    for (auto it = first; it + 1 != values.end(); ++it) {
        const double a = *it;
        const double b = *(it + 1);
        if (a > hi) break;
        const double glo = std::max(a, lo);
        const double ghi = std::min(b, hi);
        if (glo > ghi) continue;
        const double mid = (a + b) / 2;
        double worst_x, err;
        if (mid >= glo && mid <= ghi) {
            worst_x = mid;
            err = (b - a) / (a + b);
        } else if (mid < glo) {
            worst_x = glo;  // rounds up to b
            err = (b - glo) / glo;
        } else {
            worst_x = ghi;  // rounds down to a
            err = (ghi - a) / ghi;
        }
        bump_decade(p, decade_of(worst_x), err);
    }
    finish_profile(p);
    return p;
}

}  // namespace

ErrorAnalysis worst_case_rel_error(const NumericFormat& f, const ValueRange& r) {
    const MagnitudeRange rep = representable_range(f);
    if (rep.hi <= 0) return {std::nullopt, RangeError::NotRepresentable};
    const double lo = std::max(r.lo, rep.lo);
    const double hi = std::min(r.hi, rep.hi);
    if (lo > hi) return {std::nullopt, RangeError::NotRepresentable};

    ErrorProfile p;
    if (lo == hi && !std::holds_alternative<QuireFor>(f.kind)) {
        // Degenerate range: the error is whatever rounding the one point costs.
        auto enc = encode(f, lo);
        auto dec = enc.bits ? decode(f, *enc.bits) : DecodeResult{};
        if (dec.value) {
            bump_decade(p, decade_of(lo), std::fabs(lo - *dec.value) / lo);
            finish_profile(p);
            return {p, std::nullopt};
        }
    }
    if (const auto* i = std::get_if<Ieee>(&f.kind)) {
        const double wc = midpoint_bound(ieee_frac_bits(*i));
        for (int d = decade_of(lo); d <= decade_of(hi); ++d) bump_decade(p, d, wc);
        finish_profile(p);
        return {p, std::nullopt};
    }
    if (f.is_posit_family()) {
        PositLayout l = std::holds_alternative<Posit>(f.kind)
                            ? layout_of(std::get<Posit>(f.kind))
                            : layout_of(std::get<BPosit>(f.kind));
        if (!layout_supported(l)) return {std::nullopt, RangeError::NotRepresentable};
        if (l.n <= kEnumerableMaxN) {
            p = enumerated_profile(positive_values(f, l), lo, hi);
            return {p, std::nullopt};
        }
        // Analytic regime-length model; sample each power of two inside the
        // decade so regime transitions are not missed.
        for (int d = decade_of(lo); d <= decade_of(hi); ++d) {
            const double dlo = std::max(lo, std::pow(10.0, d));
            const double dhi = std::min(hi, std::pow(10.0, d + 1));
            double wc = 0;
            for (double x = dlo; x <= dhi * (1 + 1e-12); x *= 2) {
                wc = std::max(wc, analytic_posit_error_at(l, x));
            }
            wc = std::max(wc, analytic_posit_error_at(l, dhi));
            bump_decade(p, d, wc);
        }
        p.approximate = true;
        finish_profile(p);
        return {p, std::nullopt};
    }
    if (const auto* x = std::get_if<Fixed>(&f.kind)) {
        const double half_step = std::ldexp(0.5, -x->frac_bits);
        for (int d = decade_of(lo); d <= decade_of(hi); ++d) {
            const double dlo = std::max(lo, std::pow(10.0, d));
            bump_decade(p, d, half_step / dlo);
        }
        finish_profile(p);
        return {p, std::nullopt};
    }
    return {std::nullopt, RangeError::NotRepresentable};
}

// =============================================================================
// Selection
// =============================================================================

namespace {

std::string decade_string(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "1e%d", static_cast<int>(std::lround(std::log10(x))));
    return buf;
}

// Decades of overlap between [lo, hi] and the format's representable range.
double coverage_decades(double lo, double hi, const MagnitudeRange& rep) {
    const double l = std::max(lo, rep.lo);
    const double h = std::min(hi, rep.hi);
    if (l >= h) return 0;
    return std::log10(h) - std::log10(l);
}

}  // namespace

SelectionResult select_representation(const ValueRange& r,
                                      const std::vector<NumericFormat>& candidates,
                                      const RescaleContext* rescale) {
    SelectionResult result;
    struct Viable {
        const NumericFormat* format;
        ErrorProfile profile;
    };
    std::vector<Viable> viable;

    for (const auto& c : candidates) {
        const MagnitudeRange rep = representable_range(c);
        const bool covered = rep.lo <= r.lo && r.hi <= rep.hi && rep.hi > 0;
        if (covered) {
            auto analysis = worst_case_rel_error(c, r);
            if (analysis.profile) {
                viable.push_back({&c, std::move(*analysis.profile)});
                continue;
            }
        }

        // Range exclusion diagnostic.
        std::string msg = c.to_string() + " dynamic range [" + decade_string(rep.lo) +
                          ", " + decade_string(rep.hi) +
                          "] does not cover full dimensional range [" +
                          decade_string(r.lo) + ", " + decade_string(r.hi) + "]";
        if (rescale != nullptr && !rescale->value_name.empty()) {
            msg += " of " + rescale->value_name;
            if (rescale->units != nullptr) {
                msg += "<" + rescale->units->render(rescale->dimension) + ">";
            }
        }

        // Suggestions: a covering candidate (or float64), and a unit rescale
        // when one improves coverage.
        std::string consider;
        const NumericFormat fallback = float64();
        std::vector<const NumericFormat*> alternatives;
        for (const auto& other : candidates) {
            if (!(other == c)) alternatives.push_back(&other);
        }
        alternatives.push_back(&fallback);
        for (const auto* alt : alternatives) {
            const MagnitudeRange arep = representable_range(*alt);
            if (arep.lo <= r.lo && r.hi <= arep.hi) {
                consider = alt->to_string() + " (covers full range)";
                break;
            }
        }
        if (rescale != nullptr && rescale->units != nullptr && c.is_posit_family()) {
            const double base_cov = coverage_decades(r.lo, r.hi, rep);
            const dims::UnitAlias* best = nullptr;
            double best_cov = base_cov;
            for (const auto* alias :
                 rescale->units->all_with_dimension(rescale->dimension)) {
                if (alias->scale == 1.0) continue;
                const double cov =
                    coverage_decades(r.lo / alias->scale, r.hi / alias->scale, rep);
                if (cov > best_cov + 0.5) {
                    best_cov = cov;
                    best = alias;
                }
            }
            if (best != nullptr) {
                const bool fits = rep.lo <= r.lo / best->scale &&
                                  r.hi / best->scale <= rep.hi;
                if (!consider.empty()) consider += " or ";
                consider += "scaling to " + best->name +
                            (fits ? " (fits " + c.to_string() + " range)"
                                  : " (improves " + c.to_string() + " range coverage)");
            }
        }
        if (!consider.empty()) msg += "\n  Consider: " + consider;
        result.diagnostics.push_back({DiagnosticLevel::Warning, std::move(msg)});
    }

    if (viable.empty()) return result;

    std::size_t best = 0;
    for (std::size_t i = 1; i < viable.size(); ++i) {
        if (viable[i].profile.summary < viable[best].profile.summary) best = i;
    }
    for (std::size_t i = 0; i < viable.size(); ++i) {
        if (i == best) continue;
        char buf[160];
        std::snprintf(buf, sizeof buf, "%s viable; worst-case relative error %.2e over the range",
                      viable[i].format->to_string().c_str(), viable[i].profile.summary);
        result.diagnostics.push_back({DiagnosticLevel::Info, buf});
    }
    result.format = *viable[best].format;
    result.profile = std::move(viable[best].profile);
    return result;
}

// =============================================================================
// Quire
// =============================================================================

std::optional<QuireSpec> quire_spec(int posit_n, int cache_line_bytes) {
    if (posit_n != 8 && posit_n != 16 && posit_n != 32 && posit_n != 64) {
        return std::nullopt;
    }
    QuireSpec s;
    s.bits = posit_n * posit_n / 2;
    s.bytes = s.bits / 8;
    s.cache_lines = (s.bytes + cache_line_bytes - 1) / cache_line_bytes;
    return s;
}

Quire::Quire(int n, int es) : n_(n), es_(es) {
    // Operand scales span +-S; products need 2S on each side of the point,
    // plus 128 bits of significand and count headroom of 2^(n-1).
    const long s_max = static_cast<long>(n - 2) << es;
    lsb_scale_ = static_cast<int>(-(2 * s_max + 126));
    const long top = 2 * s_max + 2 + n;  // headroom for 2^(n-1) accumulations
    const long total_bits = top - lsb_scale_ + 2;
    limbs_.assign((total_bits + 63) / 64 + 1, 0);
}

std::optional<Quire> Quire::zero(int posit_n, int es) {
    PositLayout l{posit_n, es, posit_n - 1, 0};
    if (!layout_supported(l)) return std::nullopt;
    return Quire(posit_n, es);
}

std::optional<QuireError> Quire::accumulate(std::uint64_t a_bits, std::uint64_t b_bits) {
    if (count_ >= (1ULL << (n_ - 1))) return QuireError::Overflow;
    ++count_;

    const PositLayout l{n_, es_, n_ - 1, 0};
    const PositParts a = decode_parts(l, a_bits);
    const PositParts b = decode_parts(l, b_bits);
    if (a.nar || b.nar) {
        nar_ = true;
        return std::nullopt;
    }
    if (a.zero || b.zero) return std::nullopt;

    // Exact product: (siga * sigb) * 2^(sa + sb - 126).
    const unsigned __int128 prod =
        static_cast<unsigned __int128>(a.sig) * static_cast<unsigned __int128>(b.sig);
    const long weight = a.scale + b.scale - 126;
    const long offset = weight - lsb_scale_;
    assert(offset >= 0);
    const auto limb = static_cast<std::size_t>(offset / 64);
    const int shift = static_cast<int>(offset % 64);

    // Spread the shifted 128-bit product over three chunks.
    std::uint64_t chunk[3];
    if (shift == 0) {
        chunk[0] = static_cast<std::uint64_t>(prod);
        chunk[1] = static_cast<std::uint64_t>(prod >> 64);
        chunk[2] = 0;
    } else {
        chunk[0] = static_cast<std::uint64_t>(prod) << shift;
        chunk[1] = static_cast<std::uint64_t>(prod >> (64 - shift));
        chunk[2] = static_cast<std::uint64_t>((prod >> 64) >> (64 - shift));
    }

    const bool negative = a.neg != b.neg;
    if (!negative) {
        unsigned __int128 carry = 0;
        for (std::size_t i = 0; i < 3 && limb + i < limbs_.size(); ++i) {
            const unsigned __int128 sum =
                static_cast<unsigned __int128>(limbs_[limb + i]) + chunk[i] + carry;
            limbs_[limb + i] = static_cast<std::uint64_t>(sum);
            carry = sum >> 64;
        }
        for (std::size_t i = limb + 3; carry != 0 && i < limbs_.size(); ++i) {
            const unsigned __int128 sum =
                static_cast<unsigned __int128>(limbs_[i]) + carry;
            limbs_[i] = static_cast<std::uint64_t>(sum);
            carry = sum >> 64;
        }
    } else {
        std::uint64_t borrow = 0;
        for (std::size_t i = 0; i < 3 && limb + i < limbs_.size(); ++i) {
            const unsigned __int128 need =
                static_cast<unsigned __int128>(chunk[i]) + borrow;
            const unsigned __int128 have = limbs_[limb + i];
            if (have >= need) {
                limbs_[limb + i] = static_cast<std::uint64_t>(have - need);
                borrow = 0;
            } else {
                limbs_[limb + i] = static_cast<std::uint64_t>(
                    (static_cast<unsigned __int128>(1) << 64) + have - need);
                borrow = 1;
            }
        }
        for (std::size_t i = limb + 3; borrow != 0 && i < limbs_.size(); ++i) {
            const std::uint64_t before = limbs_[i];
            limbs_[i] = before - 1;
            borrow = before == 0 ? 1 : 0;
        }
    }
    return std::nullopt;
}

std::uint64_t Quire::to_posit_bits() const {
    const PositLayout l{n_, es_, n_ - 1, 0};
    if (nar_) return 1ULL << (n_ - 1);

    const bool negative = (limbs_.back() >> 63) & 1;
    std::vector<std::uint64_t> abs = limbs_;
    if (negative) {
        // two's complement negate
        std::uint64_t carry = 1;
        for (auto& w : abs) {
            w = ~w;
            const std::uint64_t sum = w + carry;
            carry = sum < w ? 1 : 0;
            w = sum;
        }
    }

    int msb = -1;
    for (int i = static_cast<int>(abs.size()) - 1; i >= 0 && msb < 0; --i) {
        if (abs[static_cast<std::size_t>(i)] != 0) {
            msb = i * 64 + 63 - std::countl_zero(abs[static_cast<std::size_t>(i)]);
        }
    }
    if (msb < 0) return 0;  // exact zero sum

    const long scale = msb + lsb_scale_;
    // Top 64 bits starting at msb, plus sticky from everything below.
    std::uint64_t sig = 0;
    bool sticky = false;
    for (int bit = 0; bit < 64; ++bit) {
        const int pos = msb - bit;
        std::uint64_t v = 0;
        if (pos >= 0) {
            v = (abs[static_cast<std::size_t>(pos / 64)] >> (pos % 64)) & 1;
        }
        sig = (sig << 1) | v;
    }
    for (int pos = msb - 64; pos >= 0 && !sticky; --pos) {
        if ((abs[static_cast<std::size_t>(pos / 64)] >> (pos % 64)) & 1) sticky = true;
    }
    return encode_parts(l, negative, scale, sig, sticky);
}

QuireRunResult quire_accumulate(
    int posit_n, const std::vector<std::pair<std::uint64_t, std::uint64_t>>& products) {
    auto q = Quire::zero(posit_n);
    if (!q) return {std::nullopt, QuireError::UnsupportedWidth};
    for (const auto& [a, b] : products) {
        if (auto err = q->accumulate(a, b)) return {std::nullopt, *err};
    }
    return {q->to_posit_bits(), std::nullopt};
}

}  // namespace clef::repr
