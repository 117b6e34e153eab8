#include "clef/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace clef::report {

namespace {

using json = nlohmann::ordered_json;

std::string sci(double v) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "%.2e", v);
    // Compact exponent: e+00 -> e0, e-09 -> e-9.
    std::string s = buf;
    auto e = s.find('e');
    if (e == std::string::npos) return s;
    std::string mantissa = s.substr(0, e);
    std::string exp = s.substr(e + 1);
    bool neg = false;
    if (!exp.empty() && (exp[0] == '+' || exp[0] == '-')) {
        neg = exp[0] == '-';
        exp.erase(0, 1);
    }
    while (exp.size() > 1 && exp[0] == '0') exp.erase(0, 1);
    return mantissa + "e" + (neg ? "-" : "") + exp;
}

std::string decade(double v) {
    const double l = std::log10(v);
    const double r = std::round(l);
    if (std::fabs(l - r) < 1e-9) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "1e%d", static_cast<int>(r));
        return buf;
    }
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3g", v);
    return buf;
}

std::string range_text(const repr::ValueRange& r) {
    return "[" + decade(r.lo) + ", " + decade(r.hi) + "]";
}

int format_width_bits(const repr::NumericFormat& f) {
    if (const auto* i = std::get_if<repr::Ieee>(&f.kind)) return i->width;
    if (const auto* p = std::get_if<repr::Posit>(&f.kind)) return p->n;
    if (const auto* b = std::get_if<repr::BPosit>(&f.kind)) return b->n;
    if (const auto* x = std::get_if<repr::Fixed>(&f.kind)) return x->n;
    return 0;
}

int posit_width_or_default(const std::optional<repr::NumericFormat>& f) {
    // The quire is modeled at the width of the posit being accumulated; on
    // targets that select an IEEE format the standard 32-bit-posit quire is
    // what software emulation provides.
    if (f) {
        if (const auto* p = std::get_if<repr::Posit>(&f->kind)) return p->n;
        if (const auto* b = std::get_if<repr::BPosit>(&f->kind)) return b->n;
    }
    return 32;
}

// Replaces numeric leaves with the selected format's name, keeping structure:
// float<kg> -> float<kg> becomes float64 -> float64.
std::string type_with_format(const infer::Type& t, const std::string& fmt) {
    using K = infer::Type::Kind;
    switch (t.kind) {
        case K::Float:
        case K::Quire:
            return fmt;
        case K::Int: return "int";
        case K::Unit: return "unit";
        case K::Var: return "'t" + std::to_string(t.var_id);
        case K::Span: return "Span<" + type_with_format(t.args[0], fmt) + ">";
        case K::MemRef: return "byref<" + type_with_format(t.args[0], fmt) + ">";
        case K::Tuple: {
            std::string out;
            for (std::size_t i = 0; i < t.args.size(); ++i) {
                if (i) out += " * ";
                out += type_with_format(t.args[i], fmt);
            }
            return out;
        }
        case K::Arrow: {
            std::string dom = type_with_format(t.args[0], fmt);
            if (t.args[0].kind == K::Arrow) dom = "(" + dom + ")";
            return dom + " -> " + type_with_format(t.args[1], fmt);
        }
    }
    return "?";
}

// The dimension a representation decision applies to: the first numeric leaf
// of the scheme's result, looking through spans and tuples.
std::optional<dims::Dimension> numeric_leaf(const infer::Type& t) {
    if (t.kind == infer::Type::Kind::Float || t.kind == infer::Type::Kind::Quire) {
        if (!t.dim.has_variables()) return t.dim;
        return std::nullopt;
    }
    if (t.kind == infer::Type::Kind::Span || t.kind == infer::Type::Kind::MemRef) {
        return numeric_leaf(t.args[0]);
    }
    if (t.kind == infer::Type::Kind::Tuple) {
        for (const auto& m : t.args) {
            if (auto d = numeric_leaf(m)) return d;
        }
    }
    return std::nullopt;
}

std::optional<dims::Dimension> value_dimension_of(const infer::Type& scheme_body) {
    const infer::Type* t = &scheme_body;
    while (t->kind == infer::Type::Kind::Arrow) t = &t->args[1];
    return numeric_leaf(*t);
}

}  // namespace

std::string cache_line_estimate(double bytes, int line_bytes) {
    const double lines = bytes / static_cast<double>(line_bytes);
    char buf[64];
    std::snprintf(buf, sizeof buf, "%g L1 cache lines", lines);
    return buf;
}

// =============================================================================
// Assembly
// =============================================================================

DiagnosticsReport build_report(const infer::TypedProgram& tp, psg::Psg& g,
                               const targets::Config& cfg,
                               const std::string& source_name) {
    DiagnosticsReport out;
    out.source = source_name;

    // Saturation diagnostics become issues.
    for (const auto& d : g.diagnostics) {
        Issue issue;
        issue.severity = d.kind == psg::SaturationDiagnostic::Kind::CapabilityError
                             ? Issue::Severity::Error
                             : Issue::Severity::Warning;
        issue.message = d.message;
        if (d.node >= 0) issue.span = g.node(d.node).span;
        out.issues.push_back(std::move(issue));
    }

    for (std::size_t bi = 0; bi < tp.bindings.size(); ++bi) {
        const auto& typed = tp.bindings[bi];
        BindingReport br;
        br.name = typed.name;
        br.span = typed.span;
        br.scheme = typed.scheme.render(cfg.units);
        br.scheme_body = typed.scheme.body;
        br.value_dimension = value_dimension_of(typed.scheme.body);

        const int bnode = g.binding_node(typed.name);
        for (const auto& n : g.nodes) {
            if (n.binding_index == static_cast<int>(bi) &&
                n.coeffects.capabilities.contains("quire")) {
                br.uses_quire = true;
                break;
            }
        }

        // Range lookup, remembering what keyed it.
        if (br.value_dimension) {
            for (const auto& r : cfg.ranges) {
                if (r.key == targets::RangeSpec::Key::Binding && r.name == br.name) {
                    br.range = r.range;
                    br.range_origin = "binding " + r.name;
                    break;
                }
            }
            if (!br.range) {
                for (const auto& r : cfg.ranges) {
                    if (r.key == targets::RangeSpec::Key::Dimension &&
                        r.dimension == *br.value_dimension) {
                        br.range = r.range;
                        br.range_origin = r.name;
                        break;
                    }
                }
            }
        }

        // The quire accumulator inside the binding, for the dedicated display.
        int quire_node = -1;
        for (const auto& n : g.nodes) {
            if (n.binding_index == static_cast<int>(bi) &&
                n.expr_kind == syntax::ExprKind::LetMut && n.type &&
                n.type->kind == infer::Type::Kind::Quire) {
                quire_node = n.id;
                break;
            }
        }
        if (quire_node >= 0) {
            const auto& qn = g.node(quire_node);
            br.quire_label = qn.label;
            br.quire_dimension = qn.dimension;
            br.quire_lifetime_span = qn.span;
            for (int eid : g.out_edges(quire_node)) {
                const auto& to = g.node(g.edges[static_cast<std::size_t>(eid)].to);
                if (to.span.end_line > br.quire_lifetime_span.end_line) {
                    br.quire_lifetime_span.end_line = to.span.end_line;
                }
            }
            // Uses through loads reach further; widen by binding span end.
            for (const auto& n : g.nodes) {
                if (n.binding_index == static_cast<int>(bi) && n.is_value &&
                    n.expr_kind == syntax::ExprKind::Load &&
                    n.span.end_line > br.quire_lifetime_span.end_line) {
                    br.quire_lifetime_span.end_line = n.span.end_line;
                }
            }
            br.quire_escapes = qn.escape &&
                               qn.escape->kind != escape::EscapeKind::StackScoped;
        }

        // Per-target resolution, in config order.
        std::map<std::string, repr::NumericFormat> selected;
        for (std::size_t ti = 0; ti < cfg.bindings.size(); ++ti) {
            const auto& target = cfg.bindings[ti];
            PerTargetResolution res;
            res.target = target.name;
            if (bnode >= 0) {
                res.reachable = (g.node(bnode).reachability >> ti) & 1;
            }

            if (br.range && br.value_dimension && res.reachable) {
                repr::RescaleContext ctx{*br.value_dimension, &cfg.units, br.name};
                auto sel = repr::select_representation(
                    *br.range, target.format_preferences, &ctx);
                res.notes = sel.diagnostics;
                for (const auto& d : sel.diagnostics) {
                    if (d.level == repr::DiagnosticLevel::Warning) {
                        out.issues.push_back(
                            {Issue::Severity::Warning, d.message, br.span});
                    }
                }
                if (sel.ok()) {
                    res.format = *sel.format;
                    res.profile = std::move(sel.profile);
                    selected[target.name] = *res.format;
                }
            }

            if (br.uses_quire) {
                res.quire_available = target.supports_quire();
                if (res.quire_available) {
                    const int width = posit_width_or_default(res.format);
                    res.quire = repr::quire_spec(width, target.cache_line_bytes);
                    res.quire_cycles_per_fma = target.quire_cost_cycles_per_fma;
                    res.quire_region = target.region_for(LifetimeLevel::Stack).tag;
                }
            }

            if (auto elements = cfg.span_elements(br.name);
                elements && res.format) {
                res.span_bytes = *elements * format_width_bits(*res.format) / 8;
                res.span_cache_lines = static_cast<double>(*res.span_bytes) /
                                       target.cache_line_bytes;
            }
            br.targets.push_back(std::move(res));
        }

        // Transfer edges between reachable targets with configured links.
        if (bnode >= 0 && selected.size() > 1) {
            std::vector<int> fresh_edges;
            for (std::size_t i = 0; i < cfg.bindings.size(); ++i) {
                for (std::size_t j = 0; j < cfg.bindings.size(); ++j) {
                    if (i == j) continue;
                    const auto& a = cfg.bindings[i];
                    const auto& b = cfg.bindings[j];
                    const std::uint64_t reach = g.node(bnode).reachability;
                    if (!((reach >> i) & 1) || !((reach >> j) & 1)) continue;
                    if (!a.transfer_links.contains(b.name)) continue;
                    if (!selected.contains(a.name) || !selected.contains(b.name)) {
                        continue;
                    }
                    psg::PsgEdge e;
                    e.from = bnode;
                    e.to = bnode;
                    e.kind = psg::EdgeKind::Transfer;
                    e.transfer_from = a.name;
                    e.transfer_to = b.name;
                    fresh_edges.push_back(g.add_edge(std::move(e)));
                }
            }
            if (!fresh_edges.empty()) {
                auto res = targets::annotate_transfers(g, cfg.bindings, selected);
                if (!res.ok) {
                    out.issues.push_back({Issue::Severity::Error, res.error, br.span});
                }
                for (int eid : fresh_edges) {
                    const auto& e = g.edges[static_cast<std::size_t>(eid)];
                    if (e.transfer) br.transfers.push_back({*e.transfer});
                }
            }
        }

        out.bindings.push_back(std::move(br));
    }

    // Escape diagnostics: promoted named bindings, in node order (which is
    // source order).
    for (const auto& n : g.nodes) {
        if (!n.escape || !n.escape->promoted_from) continue;
        if (n.expr_kind != syntax::ExprKind::Let &&
            n.expr_kind != syntax::ExprKind::LetMut) {
            continue;
        }
        EscapeEntry e;
        e.binding = n.binding_index >= 0
                        ? tp.bindings[static_cast<std::size_t>(n.binding_index)].name
                        : "";
        e.value_name = n.label;
        e.span = n.span;
        e.record = *n.escape;
        e.suggestions = escape::suggest_restructurings(g, n.id);
        out.escapes.push_back(std::move(e));
    }

    return out;
}

// =============================================================================
// Text rendering
// =============================================================================

namespace {

// A target filter renders the active subgraph only: bindings unreachable
// on the requested target disappear from the view.
bool hidden_by_filter(const BindingReport& b, const RenderOptions& opts) {
    if (!opts.target_filter) return false;
    for (const auto& t : b.targets) {
        if (t.target == *opts.target_filter && !t.reachable) return true;
    }
    return false;
}

void render_binding(std::string& out, const BindingReport& b,
                    const RenderOptions& opts) {
    out += b.name + ": " + b.scheme + "\n";
    if (b.range) {
        out += "  Dimensional range: " + range_text(*b.range) + " (configured for " +
               b.range_origin + ")\n";
    }
    for (const auto& t : b.targets) {
        if (opts.target_filter && t.target != *opts.target_filter) continue;
        if (!t.reachable) {
            out += "  +-- " + t.target + ":  unreachable (capability mismatch)\n";
            continue;
        }
        if (t.format) {
            out += "  +-- " + t.target + ":  " +
                   type_with_format(b.scheme_body, t.format->to_string()) + "\n";
            if (t.profile) {
                const bool uniform = !t.profile->approximate;
                if (uniform) {
                    out += "  |            Precision: " + sci(t.profile->summary) +
                           " relative error (uniform)\n";
                } else {
                    // Report the best decade alongside the range maximum.
                    double near_one = t.profile->summary;
                    for (const auto& d : t.profile->decades) {
                        near_one = std::min(near_one, d.worst_rel_error);
                    }
                    out += "  |            Precision: ~" + sci(near_one) +
                           " at the precision peak, ~" + sci(t.profile->summary) +
                           " at range extremes\n";
                }
            }
            if (t.format->is_posit_family() && b.range) {
                // Format ranges render at decade resolution.
                const auto rep = repr::representable_range(*t.format);
                char lo[24], hi[24];
                std::snprintf(lo, sizeof lo, "1e%d",
                              static_cast<int>(std::lround(std::log10(rep.lo))));
                std::snprintf(hi, sizeof hi, "1e%d",
                              static_cast<int>(std::lround(std::log10(rep.hi))));
                out += std::string("  |            Dynamic range: [") + lo + ", " + hi +
                       "] covers " + range_text(*b.range) + "\n";
            }
            for (const auto& note : t.notes) {
                if (note.level == repr::DiagnosticLevel::Info) {
                    out += "  |            Note: " + note.message + "\n";
                }
            }
            if (t.span_bytes) {
                char buf[96];
                std::snprintf(buf, sizeof buf, "  |            Span buffer: %d bytes, %s\n",
                              *t.span_bytes,
                              cache_line_estimate(*t.span_bytes, 64).c_str());
                out += buf;
            }
        }
        if (!t.format && b.range) {
            out += "  +-- " + t.target + ":  no viable format (see warnings)\n";
        }
        if (b.uses_quire) {
            if (!t.quire_available) {
                out += "  |            Quire: not available (no exact accumulation support)\n";
            } else if (t.quire) {
                char buf[128];
                if (t.quire_region == "fabric") {
                    std::snprintf(buf, sizeof buf,
                                  "  |            Quire: available, %d-bit fabric pipeline\n",
                                  t.quire->bits);
                } else {
                    std::snprintf(buf, sizeof buf,
                                  "  |            Quire: available, %d bytes on %s\n",
                                  t.quire->bytes, t.quire_region.c_str());
                }
                out += buf;
            }
        } else if (t.format) {
            out += "  |            Quire: not used (no accumulation loop detected)\n";
        }
    }
    if (opts.show_transfers) {
        for (const auto& tr : b.transfers) {
            const auto& r = tr.report;
            if (opts.target_filter && r.from != *opts.target_filter &&
                r.to != *opts.target_filter) {
                continue;
            }
            out += "  +-- Transfer (" + r.from + " -> " + r.to + "): " +
                   r.src_format.to_string() + " -> " + r.dst_format.to_string() + "\n";
            out += "               Protocol: " + r.protocol + "\n";
            if (r.lossless) {
                std::string why = r.src_format == r.dst_format
                                      ? "identity"
                                      : r.dst_format.to_string() + " range exceeds " +
                                            r.src_format.to_string() + " range";
                out += "               Fidelity: 1.0 (lossless; " + why + ")\n";
            } else {
                char buf[160];
                std::snprintf(buf, sizeof buf,
                              "               Fidelity: %.3f (lossy; worst conversion error %s)\n",
                              tr.report.fidelity, sci(r.worst_conversion_rel_error).c_str());
                out += buf;
            }
        }
    }
}

void render_quire_block(std::string& out, const BindingReport& b,
                        const RenderOptions& opts) {
    if (!b.uses_quire || b.quire_label.empty()) return;
    out += b.quire_label + ": Quire (exact accumulator)\n";
    if (b.quire_dimension) {
        static const auto units = dims::UnitTable::builtin();
        out += "  Dimension: " + units.render(*b.quire_dimension) +
               " (inferred from fma operands)\n";
    }
    for (const auto& t : b.targets) {
        if (opts.target_filter && t.target != *opts.target_filter) continue;
        out += "  +-- " + t.target + ":  ";
        if (!t.quire_available) {
            out += "not available (no exact accumulation support)\n";
            continue;
        }
        if (!t.quire) {
            out += "available\n";
            continue;
        }
        char buf[160];
        if (t.quire_region == "fabric") {
            std::snprintf(buf, sizeof buf, "%d-bit fabric pipeline, %d cycle/fma\n",
                          t.quire->bits, t.quire_cycles_per_fma.value_or(1));
        } else {
            std::snprintf(buf, sizeof buf,
                          "%s, %d bytes, %d cache line%s, ~%d cycles/fma\n",
                          t.quire_region.c_str(), t.quire->bytes, t.quire->cache_lines,
                          t.quire->cache_lines == 1 ? "" : "s",
                          t.quire_cycles_per_fma.value_or(1));
        }
        out += buf;
    }
    char life[128];
    std::snprintf(life, sizeof life, "  Lifetime: lexical scope (lines %d-%d), %s\n",
                  b.quire_lifetime_span.line, b.quire_lifetime_span.end_line,
                  b.quire_escapes ? "escape detected" : "no escape detected");
    out += life;
}

void render_escape(std::string& out, const EscapeEntry& e) {
    const char* from = e.record.promoted_from
                           ? lifetime_name(*e.record.promoted_from).data()
                           : "stack";
    const char* to = e.record.promoted_to
                         ? lifetime_name(*e.record.promoted_to).data()
                         : "stack";
    std::string where;
    switch (e.record.kind) {
        case escape::EscapeKind::ReturnEscape: where = "caller's scope"; break;
        case escape::EscapeKind::ClosureCapture: where = "closure environment"; break;
        case escape::EscapeKind::ByRefEscape: where = "origin scope of the reference"; break;
        case escape::EscapeKind::StackScoped: where = "lexical scope"; break;
    }
    out += e.value_name + ": promoted " + from + " -> " + std::string(to) + " (" +
           where + ")\n";
    char buf[96];
    std::snprintf(buf, sizeof buf, "  Escape: %s at line %d\n",
                  escape::escape_kind_name(e.record.kind), e.span.line);
    out += buf;
    int i = 1;
    for (const auto& s : e.suggestions) {
        out += "  Alternative " + std::to_string(i++) + ": " + s.title + " (" +
               s.cost_note + ")\n";
    }
}

}  // namespace

std::string render_resolution(const DiagnosticsReport& r, const RenderOptions& opts) {
    std::string out;
    if (opts.show_repr) {
        for (const auto& b : r.bindings) {
            if (hidden_by_filter(b, opts)) continue;
            render_binding(out, b, opts);
            render_quire_block(out, b, opts);
            out += "\n";
        }
    }
    if (opts.show_escapes && !r.escapes.empty()) {
        for (const auto& e : r.escapes) {
            render_escape(out, e);
        }
        out += "\n";
    }
    for (const auto& issue : r.issues) {
        out += (issue.severity == Issue::Severity::Error ? "Error: " : "Warning: ");
        out += issue.message;
        if (issue.span.line > 0) {
            out += " (line " + std::to_string(issue.span.line) + ")";
        }
        out += "\n";
    }
    // Trim a trailing blank line for stable goldens.
    while (out.size() >= 2 && out[out.size() - 1] == '\n' && out[out.size() - 2] == '\n') {
        out.pop_back();
    }
    return out;
}

// =============================================================================
// Structured rendering
// =============================================================================

std::string render_structured(const DiagnosticsReport& r, const RenderOptions& opts) {
    json root;
    root["reportVersion"] = r.report_version;
    root["source"] = r.source;

    json bindings = json::array();
    for (const auto& b : r.bindings) {
        json jb;
        jb["name"] = b.name;
        jb["line"] = b.span.line;
        jb["scheme"] = b.scheme;
        if (b.range) {
            jb["range"] = {{"lo", b.range->lo},
                           {"hi", b.range->hi},
                           {"origin", b.range_origin}};
        }
        static const auto units = dims::UnitTable::builtin();
        if (b.value_dimension) {
            jb["dimension"] = units.render(*b.value_dimension);
        }
        jb["usesQuire"] = b.uses_quire;
        if (b.uses_quire && b.quire_dimension) {
            jb["quireDimension"] = units.render(*b.quire_dimension);
        }
        json jts = json::array();
        for (const auto& t : b.targets) {
            if (opts.target_filter && t.target != *opts.target_filter) continue;
            json jt;
            jt["target"] = t.target;
            jt["reachable"] = t.reachable;
            if (t.format) jt["format"] = t.format->to_string();
            if (t.profile) {
                jt["worstCaseRelError"] = t.profile->summary;
                jt["approximate"] = t.profile->approximate;
                json decades = json::array();
                for (const auto& d : t.profile->decades) {
                    decades.push_back({{"decade", d.decade},
                                       {"worstRelError", d.worst_rel_error}});
                }
                jt["decades"] = std::move(decades);
            }
            if (b.uses_quire) {
                json jq;
                jq["available"] = t.quire_available;
                if (t.quire) {
                    jq["bits"] = t.quire->bits;
                    jq["bytes"] = t.quire->bytes;
                    jq["cacheLines"] = t.quire->cache_lines;
                    jq["region"] = t.quire_region;
                    if (t.quire_cycles_per_fma) {
                        jq["cyclesPerFma"] = *t.quire_cycles_per_fma;
                    }
                }
                jt["quire"] = std::move(jq);
            }
            if (t.span_bytes) {
                jt["spanBytes"] = *t.span_bytes;
                jt["spanCacheLines"] = t.span_cache_lines;
            }
            json notes = json::array();
            for (const auto& n : t.notes) {
                notes.push_back(
                    {{"level",
                      n.level == repr::DiagnosticLevel::Warning ? "warning" : "info"},
                     {"message", n.message}});
            }
            if (!notes.empty()) jt["notes"] = std::move(notes);
            jts.push_back(std::move(jt));
        }
        jb["targets"] = std::move(jts);
        if (opts.show_transfers && !b.transfers.empty()) {
            json jtr = json::array();
            for (const auto& tr : b.transfers) {
                const auto& rep = tr.report;
                json j;
                j["from"] = rep.from;
                j["to"] = rep.to;
                j["srcFormat"] = rep.src_format.to_string();
                j["dstFormat"] = rep.dst_format.to_string();
                j["fidelity"] = rep.fidelity;
                j["lossless"] = rep.lossless;
                j["protocol"] = rep.protocol;
                if (!rep.lossless) {
                    j["worstConversionRelError"] = rep.worst_conversion_rel_error;
                    j["probesPreserved"] = rep.probes_preserved;
                    j["probesTotal"] = rep.probes_total;
                }
                jtr.push_back(std::move(j));
            }
            jb["transfers"] = std::move(jtr);
        }
        bindings.push_back(std::move(jb));
    }
    root["bindings"] = std::move(bindings);

    if (opts.show_escapes) {
        json escapes = json::array();
        for (const auto& e : r.escapes) {
            json je;
            je["binding"] = e.binding;
            je["value"] = e.value_name;
            je["line"] = e.span.line;
            je["kind"] = escape::escape_kind_name(e.record.kind);
            if (e.record.promoted_from) {
                je["promotedFrom"] = lifetime_name(*e.record.promoted_from);
                je["promotedTo"] = lifetime_name(*e.record.promoted_to);
            }
            je["chainLength"] = e.record.chain.size();
            json suggestions = json::array();
            for (const auto& s : e.suggestions) {
                suggestions.push_back({{"title", s.title}, {"cost", s.cost_note}});
            }
            je["suggestions"] = std::move(suggestions);
            escapes.push_back(std::move(je));
        }
        root["escapes"] = std::move(escapes);
    }

    json issues = json::array();
    for (const auto& i : r.issues) {
        issues.push_back(
            {{"severity", i.severity == Issue::Severity::Error ? "error" : "warning"},
             {"message", i.message},
             {"line", i.span.line}});
    }
    root["issues"] = std::move(issues);
    return root.dump(2) + "\n";
}

}  // namespace clef::report

// =============================================================================
// Driver pipeline
// =============================================================================

namespace clef::driver {

namespace {

std::string basename_of(const std::string& path) {
    auto pos = path.find_last_of('/');
    return pos == std::string::npos ? path : path.substr(pos + 1);
}

report::RenderOptions render_options(const CheckOptions& opts) {
    report::RenderOptions r;
    if (opts.show == "escapes") {
        r.show_repr = false;
        r.show_transfers = false;
    } else if (opts.show == "repr") {
        r.show_escapes = false;
        r.show_transfers = false;
    } else if (opts.show == "transfers") {
        r.show_escapes = false;
    }
    r.target_filter = opts.target_filter;
    return r;
}

CheckResult fail_with_issue(const CheckOptions& opts, std::string message,
                            dims::SourceSpan span) {
    CheckResult out;
    out.exit_code = 1;
    report::DiagnosticsReport r;
    r.source = basename_of(opts.source_path);
    r.issues.push_back({report::Issue::Severity::Error, std::move(message), span});
    auto ropts = render_options(opts);
    out.structured = report::render_structured(r, ropts);
    out.output = opts.format == "structured" ? out.structured
                                             : report::render_resolution(r, ropts);
    out.report = std::move(r);
    return out;
}

}  // namespace

CheckResult run_check(const CheckOptions& opts) {
    CheckResult out;
    if (opts.format != "text" && opts.format != "structured") {
        out.exit_code = 2;
        out.error_message = "unknown --format '" + opts.format + "'";
        return out;
    }
    if (opts.show != "all" && opts.show != "escapes" && opts.show != "repr" &&
        opts.show != "transfers") {
        out.exit_code = 2;
        out.error_message = "unknown --show '" + opts.show + "'";
        return out;
    }

    auto cfg_result = targets::load_config(opts.config_path);
    if (!cfg_result.ok()) {
        out.exit_code = 2;
        out.error_message = "config error (" + opts.config_path + ":" +
                            std::to_string(cfg_result.error->line) +
                            ", field " + cfg_result.error->field + "): " +
                            cfg_result.error->message;
        return out;
    }
    auto cfg = std::move(*cfg_result.config);
    if (opts.target_filter && cfg.find(*opts.target_filter) == nullptr) {
        out.exit_code = 2;
        out.error_message = "unknown target '" + *opts.target_filter + "'";
        return out;
    }

    std::ifstream in(opts.source_path);
    if (!in) {
        out.exit_code = 2;
        out.error_message = "cannot open source file " + opts.source_path;
        return out;
    }
    std::ostringstream buf;
    buf << in.rdbuf();

    auto parsed = syntax::parse(buf.str());
    if (!parsed.ok()) {
        std::string msg = "parse error: " + parsed.error->message;
        if (!parsed.error->expected.empty()) {
            msg += " (expected";
            for (const auto& e : parsed.error->expected) msg += " " + e;
            msg += ")";
        }
        return fail_with_issue(opts, std::move(msg), parsed.error->span);
    }

    auto inferred =
        infer::infer_program(syntax::desugar(std::move(*parsed.program)), cfg.units);
    if (!inferred.ok()) {
        std::string msg = inferred.error->message;
        if (inferred.error->span_b.line > 0 &&
            !(inferred.error->span_b == inferred.error->span_a)) {
            msg += " (other constraint at line " +
                   std::to_string(inferred.error->span_b.line) + ", column " +
                   std::to_string(inferred.error->span_b.column) + ")";
        }
        return fail_with_issue(opts, std::move(msg), inferred.error->span_a);
    }

    auto elaborated = psg::elaborate(*inferred.program, cfg.bindings);
    if (!elaborated.graph) {
        return fail_with_issue(opts, *elaborated.error, {});
    }
    psg::saturate(*elaborated.graph, cfg.bindings);

    auto report = report::build_report(*inferred.program, *elaborated.graph, cfg,
                                       basename_of(opts.source_path));
    auto ropts = render_options(opts);
    out.structured = report::render_structured(report, ropts);
    out.output = opts.format == "structured"
                     ? out.structured
                     : report::render_resolution(report, ropts);
    out.exit_code = report.has_errors() ? 1 : 0;

    if (opts.report_path) {
        std::ofstream rep(*opts.report_path);
        if (!rep) {
            out.exit_code = 2;
            out.error_message = "cannot write report to " + *opts.report_path;
            return out;
        }
        rep << out.structured;
    }
    out.report = std::move(report);
    return out;
}

}  // namespace clef::driver
