#pragma once

// Target-binding configuration (capabilities, memory regions, preferred
// formats, cache geometry, transfer links) and cross-target transfer
// fidelity analysis.

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "clef/dims.hpp"
#include "clef/lifetime.hpp"
#include "clef/repr.hpp"

namespace clef::targets {

// =============================================================================
// Bindings
// =============================================================================

struct TransferLink {
    std::string protocol;
    std::string note;

    bool operator==(const TransferLink&) const = default;
};

struct TargetBinding {
    std::string name;
    std::vector<std::string> capabilities;
    std::vector<repr::NumericFormat> format_preferences;  // candidate order
    std::map<LifetimeLevel, dims::MemorySpace> memory_regions;
    int cache_line_bytes = 64;
    std::optional<int> quire_cost_cycles_per_fma;
    std::map<std::string, TransferLink> transfer_links;  // peer target -> link

    [[nodiscard]] bool has_capability(std::string_view tag) const;

    /// Exact accumulation available in some form (quire-hw or quire-sw).
    [[nodiscard]] bool supports_quire() const;

    /// A floating-point computation path exists (float64, float32 or a posit
    /// pipeline).
    [[nodiscard]] bool supports_float() const;

    /// Concrete memory region for a lifetime level; targets may map a level
    /// to a non-obvious region (stack-class values in fabric or scratchpad).
    [[nodiscard]] dims::MemorySpace region_for(LifetimeLevel level) const;

    bool operator==(const TargetBinding&) const = default;
};

/// Value-range hints carried by the config; keyed either by a unit alias
/// (applies to every value of that dimension) or by a binding name.
struct RangeSpec {
    enum class Key { Dimension, Binding };
    Key key = Key::Dimension;
    std::string name;          // unit alias or binding name
    dims::Dimension dimension;  // resolved for Key::Dimension
    repr::ValueRange range;

    bool operator==(const RangeSpec&) const = default;
};

/// Size hints for span-typed bindings (element count), used by cache-line
/// estimates.
struct SpanHint {
    std::string binding;
    int elements = 0;

    bool operator==(const SpanHint&) const = default;
};

struct ConfigError {
    int line = 0;
    std::string field;
    std::string message;
};

struct Config {
    std::vector<TargetBinding> bindings;
    dims::UnitTable units = dims::UnitTable::builtin();
    std::vector<RangeSpec> ranges;
    std::vector<SpanHint> span_hints;
    std::vector<std::string> warnings;  // unknown capability tags etc.

    [[nodiscard]] const TargetBinding* find(std::string_view name) const;
    [[nodiscard]] const repr::ValueRange* range_for(std::string_view binding,
                                                    const dims::Dimension& dim) const;
    [[nodiscard]] std::optional<int> span_elements(std::string_view binding) const;
};

struct LoadResult {
    std::optional<Config> config;
    std::optional<ConfigError> error;

    [[nodiscard]] bool ok() const { return config.has_value(); }
};

/// Parses the line-oriented binding config (grammar in docs/config.md).
LoadResult load_config(const std::string& path);
LoadResult parse_config(std::string_view text);

/// Canonical text form; parse_config(serialize(c)) reproduces c.
std::string serialize(const Config& c);

// =============================================================================
// Transfer fidelity
// =============================================================================

struct TransferReport {
    std::string from;
    std::string to;
    repr::NumericFormat src_format;
    repr::NumericFormat dst_format;
    double fidelity = 1.0;  // in (0, 1]; 1.0 iff lossless
    bool lossless = true;
    std::string protocol;
    std::string note;
    // Lossy conversions only: worst relative conversion error over the probe
    // set / analytic profile, and the probe preservation counts behind
    // `fidelity`.
    double worst_conversion_rel_error = 0.0;
    long probes_preserved = 0;
    long probes_total = 0;
};

/// Computes the format-level fields of a TransferReport (from/to/protocol are
/// filled by graph annotation). Losslessness is decided by parameter
/// comparison (scale range and per-scale fraction width) and verified by full
/// enumeration when the source is enumerable; lossy pairs report the fraction
/// of a documented probe set preserved exactly plus the worst-case conversion
/// error.
TransferReport transfer_fidelity(const repr::NumericFormat& src,
                                 const repr::NumericFormat& dst);

}  // namespace clef::targets
