#pragma once

// Bit-accurate numeric format models (IEEE 754, posit, bounded posit,
// fixed-point, quire), worst-case relative error analysis over magnitude
// ranges, and the minimax representation selector.

#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "clef/dims.hpp"

namespace clef::repr {

// =============================================================================
// Formats
// =============================================================================

struct Ieee {
    int width = 64;  // 32 or 64
    bool operator==(const Ieee&) const = default;
};

/// Standard posit; the exponent field is fixed at es = 2.
struct Posit {
    int n = 32;
    int es = 2;
    bool operator==(const Posit&) const = default;
};

/// Bounded posit: regime field clamped at rs bits, optional exponent bias
/// shifting the precision peak away from 1.0.
struct BPosit {
    int n = 32;
    int es = 2;   // in [1, 5]
    int rs = 6;   // in [2, 6]
    int exp_bias = 0;
    bool operator==(const BPosit&) const = default;
};

struct Fixed {
    int n = 32;
    int frac_bits = 16;
    bool is_signed = true;
    bool operator==(const Fixed&) const = default;
};

/// The exact accumulator paired with an n-bit posit.
struct QuireFor {
    int posit_n = 32;
    bool operator==(const QuireFor&) const = default;
};

struct NumericFormat {
    std::variant<Ieee, Posit, BPosit, Fixed, QuireFor> kind;

    bool operator==(const NumericFormat&) const = default;

    [[nodiscard]] bool is_posit_family() const {
        return std::holds_alternative<Posit>(kind) || std::holds_alternative<BPosit>(kind);
    }

    /// Spec string: float64, posit32es2, bposit20es2rs5b-2, fixed24s12,
    /// quire32. Round-trips through parse_format.
    [[nodiscard]] std::string to_string() const;
};

inline NumericFormat float64() { return {Ieee{64}}; }
inline NumericFormat float32() { return {Ieee{32}}; }
inline NumericFormat posit(int n, int es = 2) { return {Posit{n, es}}; }

/// Parses the documented format grammar; nullopt on malformed input.
std::optional<NumericFormat> parse_format(std::string_view text);

/// Enumerates the bounded-posit candidate space es in [1,5] x rs in [2,6]
/// x bias in {0, -2, -3} for a given width.
std::vector<NumericFormat> enumerate_bposit_candidates(int n);

// =============================================================================
// Codec
// =============================================================================

enum class CodecError { UnsupportedWidth };

struct DecodeResult {
    // Exactly one is set for valid input widths.
    std::optional<double> value;        // finite value; NaN encodes NaR / IEEE NaN
    std::optional<CodecError> error;
};

/// Decodes a bit pattern of f's width. Posit decoding follows the 2022
/// standard layout (sign, regime, es exponent bits, fraction); bounded posits
/// clamp the regime run at rs; fixed decodes as a scaled two's-complement
/// integer. Posit/BPosit widths above 32 are UnsupportedWidth (values would
/// no longer be exact in a double).
DecodeResult decode(const NumericFormat& f, std::uint64_t bits);

struct EncodeResult {
    std::optional<std::uint64_t> bits;
    std::optional<CodecError> error;
};

/// Round-to-nearest encoding. Posits round to nearest with ties to even in
/// bit space and saturate at minpos/maxpos; IEEE overflows to infinity; fixed
/// saturates at its end points.
EncodeResult encode(const NumericFormat& f, double x);

/// Positive representable magnitude range [min, max] of a format (normals
/// only for IEEE). Zero-width for quire (not a scalar value format).
struct MagnitudeRange {
    double lo = 0;
    double hi = 0;
};
MagnitudeRange representable_range(const NumericFormat& f);

/// All positive finite values of an enumerable format (posit family with
/// n <= 20), ascending. Empty for formats too wide to enumerate.
const std::vector<double>* enumerate_positive(const NumericFormat& f);

// =============================================================================
// Error analysis
// =============================================================================

/// Positive magnitude interval at decade resolution plus a sign-symmetry
/// flag. 0 < lo <= hi.
struct ValueRange {
    double lo = 1.0;
    double hi = 1.0;
    bool sign_symmetric = true;

    bool operator==(const ValueRange&) const = default;
};

/// Worst-case relative error per magnitude decade, plus the range maximum.
/// `approximate` marks analytic (non-enumerated) profiles.
struct ErrorProfile {
    struct DecadeEntry {
        int decade = 0;  // values in [10^decade, 10^(decade+1))
        double worst_rel_error = 0;
    };
    std::vector<DecadeEntry> decades;
    double summary = 0;
    bool approximate = false;
};

enum class RangeError { NotRepresentable };

struct ErrorAnalysis {
    std::optional<ErrorProfile> profile;
    std::optional<RangeError> error;
};

/// Worst-case relative rounding error of f over r. IEEE uses the closed-form
/// midpoint bound, constant across normal decades; posit family with n <= 16
/// enumerates consecutive representable values; wider posits use the analytic
/// regime-length model (flagged approximate); fixed uses the per-decade
/// step/2 / x bound. Values outside f's representable range are clipped to it;
/// NotRepresentable when the intersection is empty.
ErrorAnalysis worst_case_rel_error(const NumericFormat& f, const ValueRange& r);

// =============================================================================
// Selection
// =============================================================================

enum class DiagnosticLevel { Info, Warning };

struct Diagnostic {
    DiagnosticLevel level = DiagnosticLevel::Info;
    std::string message;
};

/// Alias context for range-rescaling suggestions: the value's dimension and
/// the loaded unit table.
struct RescaleContext {
    dims::Dimension dimension;
    const dims::UnitTable* units = nullptr;
    std::string value_name;  // e.g. the binding name, for diagnostic text
};

struct SelectionResult {
    std::optional<NumericFormat> format;
    std::optional<ErrorProfile> profile;
    std::vector<Diagnostic> diagnostics;

    [[nodiscard]] bool ok() const { return format.has_value(); }
};

/// Minimax selection: returns the candidate minimizing the range-maximum
/// relative error, excluding candidates whose representable range does not
/// cover r (each exclusion produces a range warning, with a rescaling
/// suggestion when a known same-dimension alias improves coverage).
/// Deterministic tie-break by candidate order. No viable candidate leaves
/// `format` empty with the warnings explaining why.
SelectionResult select_representation(const ValueRange& r,
                                      const std::vector<NumericFormat>& candidates,
                                      const RescaleContext* rescale = nullptr);

// =============================================================================
// Quire
// =============================================================================

struct QuireSpec {
    int bits = 0;
    int bytes = 0;
    int cache_lines = 0;  // ceil(bytes / line size)
};

/// Width model: n^2/2 bits for an n-bit posit. n in {8, 16, 32, 64}.
std::optional<QuireSpec> quire_spec(int posit_n, int cache_line_bytes = 64);

enum class QuireError { UnsupportedWidth, Overflow };

/// Exact multiply-accumulate state for products of n-bit posits. The result
/// of to_posit equals the correctly rounded exact sum of exact products: one
/// rounding total. The accumulation-count headroom is 2^(n-1) fused
/// multiply-adds (the carry-guard capacity of the standard layout);
/// accumulate reports Overflow beyond that.
class Quire {
public:
    /// n <= 32 (operand codec limit).
    static std::optional<Quire> zero(int posit_n, int es = 2);

    /// Accumulates the exact product of two posit bit patterns.
    [[nodiscard]] std::optional<QuireError> accumulate(std::uint64_t a_bits,
                                                       std::uint64_t b_bits);

    /// Rounds the exact sum to the nearest posit (ties to even in bit space).
    [[nodiscard]] std::uint64_t to_posit_bits() const;

    [[nodiscard]] int posit_n() const { return n_; }
    [[nodiscard]] std::uint64_t count() const { return count_; }

private:
    Quire(int n, int es);

    int n_ = 0;
    int es_ = 2;
    std::uint64_t count_ = 0;
    bool nar_ = false;
    // Two's-complement fixed-point accumulator, 64-bit limbs, little-endian;
    // bit 0 of limb 0 has weight 2^lsb_scale_.
    std::vector<std::uint64_t> limbs_;
    int lsb_scale_ = 0;
};

/// Convenience wrapper: accumulate a product list into a fresh quire and
/// round once.
struct QuireRunResult {
    std::optional<std::uint64_t> posit_bits;
    std::optional<QuireError> error;
};
QuireRunResult quire_accumulate(int posit_n,
                                const std::vector<std::pair<std::uint64_t, std::uint64_t>>& products);

}  // namespace clef::repr
