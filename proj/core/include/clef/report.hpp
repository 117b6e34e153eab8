#pragma once

// Diagnostics report assembly and rendering: the per-binding multi-target
// resolution display, escape diagnostics with restructuring alternatives,
// transfer analysis, and the versioned structured (JSON) form.

#include <optional>
#include <string>
#include <vector>

#include "clef/psg.hpp"

namespace clef::report {

struct PerTargetResolution {
    std::string target;
    bool reachable = true;
    std::optional<repr::NumericFormat> format;
    std::optional<repr::ErrorProfile> profile;
    std::vector<repr::Diagnostic> notes;  // runner-up info, range warnings
    // Quire resolution when the binding needs exact accumulation.
    bool quire_available = false;
    std::optional<repr::QuireSpec> quire;
    std::optional<int> quire_cycles_per_fma;
    std::string quire_region;
    // Span cache estimate when a span size hint applies.
    std::optional<int> span_bytes;
    double span_cache_lines = 0;
};

struct TransferEntry {
    targets::TransferReport report;
};

struct BindingReport {
    std::string name;
    dims::SourceSpan span;
    std::string scheme;  // rendered type
    infer::Type scheme_body;
    bool uses_quire = false;
    std::optional<dims::Dimension> value_dimension;
    std::optional<dims::Dimension> quire_dimension;
    std::optional<repr::ValueRange> range;
    std::string range_origin;  // "newtons" or "binding <name>"
    std::string quire_label;   // accumulator variable name, e.g. "q"
    dims::SourceSpan quire_lifetime_span;
    bool quire_escapes = false;
    std::vector<PerTargetResolution> targets;
    std::vector<TransferEntry> transfers;
};

struct EscapeEntry {
    std::string binding;
    std::string value_name;
    dims::SourceSpan span;
    escape::EscapeRecord record;
    std::vector<escape::Suggestion> suggestions;
};

struct Issue {
    enum class Severity { Error, Warning };
    Severity severity = Severity::Warning;
    std::string message;
    dims::SourceSpan span;
};

struct DiagnosticsReport {
    int report_version = 1;
    std::string source;  // basename only, for stable golden files
    std::vector<BindingReport> bindings;
    std::vector<EscapeEntry> escapes;
    std::vector<Issue> issues;

    [[nodiscard]] bool has_errors() const {
        for (const auto& i : issues) {
            if (i.severity == Issue::Severity::Error) return true;
        }
        return false;
    }
};

/// Assembles the report from a saturated graph. Deterministic ordering: by
/// source position, then target order from the config.
DiagnosticsReport build_report(const infer::TypedProgram& tp, psg::Psg& g,
                               const targets::Config& cfg,
                               const std::string& source_name);

struct RenderOptions {
    bool show_repr = true;
    bool show_escapes = true;
    bool show_transfers = true;
    std::optional<std::string> target_filter;
};

/// The tree-style text form with ASCII connectors.
std::string render_resolution(const DiagnosticsReport& r, const RenderOptions& opts);

/// The versioned JSON form (reportVersion 1). Byte-identical across runs for
/// identical inputs.
std::string render_structured(const DiagnosticsReport& r, const RenderOptions& opts);

/// Cache-line estimate text, e.g. (800, 64) -> "12.5 L1 cache lines".
std::string cache_line_estimate(double bytes, int line_bytes);

}  // namespace clef::report

namespace clef::driver {

struct CheckOptions {
    std::string source_path;
    std::string config_path;
    std::string show = "all";     // escapes | repr | transfers | all
    std::string format = "text";  // text | structured
    std::optional<std::string> target_filter;
    std::optional<std::string> report_path;  // write structured report here
};

struct CheckResult {
    int exit_code = 0;  // 0 ok, 1 program errors, 2 usage/config errors
    std::string output;          // stdout payload (text or structured)
    std::string structured;      // structured form (always built on success)
    std::string error_message;   // stderr payload for early failures
    std::optional<report::DiagnosticsReport> report;
};

/// The full pipeline: parse, desugar, infer, elaborate, saturate, analyze,
/// render.
CheckResult run_check(const CheckOptions& opts);

}  // namespace clef::driver
