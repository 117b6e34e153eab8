#include "clef/targets.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace clef::targets {

namespace {

const char* kKnownCapabilities[] = {"float64",        "float32",  "quire-hw",
                                    "quire-sw",       "posit-pipeline",
                                    "fixed-point"};

std::vector<std::string> split_words(std::string_view s) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == ' ' || c == '\t') {
            if (!cur.empty()) out.push_back(std::move(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    return out;
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
        s.remove_suffix(1);
    }
    return s;
}

std::optional<double> parse_double(std::string_view s) {
    std::string tmp(s);
    char* end = nullptr;
    double v = std::strtod(tmp.c_str(), &end);
    if (end != tmp.c_str() + tmp.size() || tmp.empty()) return std::nullopt;
    return v;
}

std::optional<LifetimeLevel> lifetime_from_name(std::string_view s) {
    for (auto l : {LifetimeLevel::Stack, LifetimeLevel::Arena, LifetimeLevel::Heap,
                   LifetimeLevel::Static}) {
        if (s == lifetime_name(l)) return l;
    }
    return std::nullopt;
}

}  // namespace

bool TargetBinding::has_capability(std::string_view tag) const {
    return std::find(capabilities.begin(), capabilities.end(), tag) !=
           capabilities.end();
}

bool TargetBinding::supports_quire() const {
    return has_capability("quire-hw") || has_capability("quire-sw");
}

bool TargetBinding::supports_float() const {
    return has_capability("float64") || has_capability("float32") ||
           has_capability("posit-pipeline");
}

dims::MemorySpace TargetBinding::region_for(LifetimeLevel level) const {
    auto it = memory_regions.find(level);
    if (it != memory_regions.end()) return it->second;
    return {std::string(lifetime_name(level)), {}};
}

const TargetBinding* Config::find(std::string_view name) const {
    for (const auto& b : bindings) {
        if (b.name == name) return &b;
    }
    return nullptr;
}

const repr::ValueRange* Config::range_for(std::string_view binding,
                                          const dims::Dimension& dim) const {
    // Binding-name keys take precedence over dimension keys.
    for (const auto& r : ranges) {
        if (r.key == RangeSpec::Key::Binding && r.name == binding) return &r.range;
    }
    for (const auto& r : ranges) {
        if (r.key == RangeSpec::Key::Dimension && r.dimension == dim) return &r.range;
    }
    return nullptr;
}

std::optional<int> Config::span_elements(std::string_view binding) const {
    for (const auto& h : span_hints) {
        if (h.binding == binding) return h.elements;
    }
    return std::nullopt;
}

// =============================================================================
// Parser
// =============================================================================

LoadResult parse_config(std::string_view text) {
    Config cfg;
    TargetBinding* current = nullptr;
    enum class Section { None, Target, Units, Ranges, Spans };
    Section section = Section::None;
    int line_no = 0;

    auto fail = [&](std::string field, std::string msg) -> LoadResult {
        return {std::nullopt, ConfigError{line_no, std::move(field), std::move(msg)}};
    };

    std::size_t pos = 0;
    while (pos <= text.size()) {
        std::size_t eol = text.find('\n', pos);
        if (eol == std::string_view::npos) eol = text.size();
        std::string_view line = trim(text.substr(pos, eol - pos));
        pos = eol + 1;
        ++line_no;
        if (line.empty() || line.front() == '#') {
            if (pos > text.size()) break;
            continue;
        }

        if (line.front() == '[') {
            if (line.back() != ']') return fail("section", "unterminated section header");
            std::string_view head = trim(line.substr(1, line.size() - 2));
            if (head.substr(0, 7) == "target ") {
                TargetBinding b;
                b.name = std::string(trim(head.substr(7)));
                if (b.name.empty()) return fail("target", "missing target name");
                cfg.bindings.push_back(std::move(b));
                current = &cfg.bindings.back();
                section = Section::Target;
            } else if (head == "units") {
                section = Section::Units;
            } else if (head == "ranges") {
                section = Section::Ranges;
            } else if (head == "spans") {
                section = Section::Spans;
            } else {
                return fail("section", "unknown section '" + std::string(head) + "'");
            }
            if (pos > text.size()) break;
            continue;
        }

        std::size_t eq = line.find('=');
        if (eq == std::string_view::npos) return fail("line", "expected key = value");
        std::string key(trim(line.substr(0, eq)));
        std::string_view value = trim(line.substr(eq + 1));

        switch (section) {
            case Section::None:
                return fail(key, "key outside any section");
            case Section::Target: {
                if (key == "capabilities") {
                    current->capabilities = split_words(value);
                    for (const auto& tag : current->capabilities) {
                        bool known = false;
                        for (const char* k : kKnownCapabilities) {
                            if (tag == k) known = true;
                        }
                        if (!known) {
                            cfg.warnings.push_back("unknown capability tag '" + tag +
                                                   "' on target " + current->name);
                        }
                    }
                } else if (key == "formats") {
                    for (const auto& word : split_words(value)) {
                        auto f = repr::parse_format(word);
                        if (!f) return fail(key, "bad format spec '" + word + "'");
                        current->format_preferences.push_back(*f);
                    }
                } else if (key.substr(0, 7) == "memory.") {
                    auto level = lifetime_from_name(key.substr(7));
                    if (!level) return fail(key, "unknown lifetime level");
                    current->memory_regions[*level] =
                        dims::MemorySpace{std::string(value), {}};
                } else if (key == "cache_line_bytes") {
                    auto v = parse_double(value);
                    if (!v || *v <= 0) return fail(key, "expected a positive integer");
                    current->cache_line_bytes = static_cast<int>(*v);
                } else if (key == "quire_cycles_per_fma") {
                    auto v = parse_double(value);
                    if (!v || *v < 0) return fail(key, "expected an integer");
                    current->quire_cost_cycles_per_fma = static_cast<int>(*v);
                } else if (key.substr(0, 5) == "link.") {
                    std::string peer = key.substr(5);
                    TransferLink link;
                    auto bar = value.find('|');
                    if (bar == std::string_view::npos) {
                        link.protocol = std::string(value);
                    } else {
                        link.protocol = std::string(trim(value.substr(0, bar)));
                        link.note = std::string(trim(value.substr(bar + 1)));
                    }
                    current->transfer_links[peer] = std::move(link);
                } else {
                    return fail(key, "unknown target key");
                }
                break;
            }
            case Section::Units: {
                dims::UnitAlias alias;
                alias.name = key;
                for (const auto& word : split_words(value)) {
                    auto colon = word.find(':');
                    if (colon == std::string::npos) {
                        return fail(key, "expected name:exponent pairs");
                    }
                    std::string part = word.substr(0, colon);
                    auto num = parse_double(word.substr(colon + 1));
                    if (!num) return fail(key, "bad exponent in '" + word + "'");
                    if (part == "scale") {
                        alias.scale = *num;
                        continue;
                    }
                    auto base = dims::base_from_name(part);
                    if (!base) return fail(key, "unknown base dimension '" + part + "'");
                    alias.dimension = dims::dim_mul(
                        alias.dimension,
                        dims::Dimension::base(*base, static_cast<int>(*num)));
                }
                cfg.units.add(std::move(alias));
                break;
            }
            case Section::Ranges: {
                auto words = split_words(key);
                if (words.size() != 2 || (words[0] != "dim" && words[0] != "binding")) {
                    return fail(key, "expected 'dim <unit>' or 'binding <name>'");
                }
                auto bounds = split_words(value);
                if (bounds.size() != 2) return fail(key, "expected '<lo> <hi>'");
                auto lo = parse_double(bounds[0]);
                auto hi = parse_double(bounds[1]);
                if (!lo || !hi || *lo <= 0 || *hi < *lo) {
                    return fail(key, "expected 0 < lo <= hi");
                }
                RangeSpec spec;
                spec.name = words[1];
                spec.range = {*lo, *hi, true};
                if (words[0] == "dim") {
                    spec.key = RangeSpec::Key::Dimension;
                    const auto* alias = cfg.units.find(spec.name);
                    if (!alias) return fail(key, "unknown unit alias '" + spec.name + "'");
                    spec.dimension = alias->dimension;
                } else {
                    spec.key = RangeSpec::Key::Binding;
                }
                cfg.ranges.push_back(std::move(spec));
                break;
            }
            case Section::Spans: {
                auto v = parse_double(value);
                if (!v || *v <= 0) return fail(key, "expected a positive element count");
                cfg.span_hints.push_back({key, static_cast<int>(*v)});
                break;
            }
        }
        if (pos > text.size()) break;
    }

    if (cfg.bindings.empty()) {
        return {std::nullopt, ConfigError{0, "targets", "no targets defined"}};
    }
    for (const auto& b : cfg.bindings) {
        if (b.format_preferences.empty()) {
            return {std::nullopt,
                    ConfigError{0, b.name, "target defines no formats"}};
        }
        if (!b.memory_regions.contains(LifetimeLevel::Stack) ||
            !b.memory_regions.contains(LifetimeLevel::Arena)) {
            return {std::nullopt,
                    ConfigError{0, b.name,
                                "memory regions must cover stack and arena"}};
        }
    }
    return {std::move(cfg), std::nullopt};
}

LoadResult load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        return {std::nullopt, ConfigError{0, path, "cannot open config file"}};
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_config(buf.str());
}

std::string serialize(const Config& c) {
    std::ostringstream out;
    for (const auto& b : c.bindings) {
        out << "[target " << b.name << "]\n";
        if (!b.capabilities.empty()) {
            out << "capabilities =";
            for (const auto& t : b.capabilities) out << " " << t;
            out << "\n";
        }
        out << "formats =";
        for (const auto& f : b.format_preferences) out << " " << f.to_string();
        out << "\n";
        for (const auto& [level, space] : b.memory_regions) {
            out << "memory." << lifetime_name(level) << " = " << space.tag << "\n";
        }
        out << "cache_line_bytes = " << b.cache_line_bytes << "\n";
        if (b.quire_cost_cycles_per_fma) {
            out << "quire_cycles_per_fma = " << *b.quire_cost_cycles_per_fma << "\n";
        }
        for (const auto& [peer, link] : b.transfer_links) {
            out << "link." << peer << " = " << link.protocol;
            if (!link.note.empty()) out << " | " << link.note;
            out << "\n";
        }
        out << "\n";
    }

    // Only aliases beyond the builtin table need recording.
    const auto builtin = dims::UnitTable::builtin();
    std::string units_block;
    for (const auto& a : c.units.aliases()) {
        const auto* known = builtin.find(a.name);
        if (known != nullptr && known->dimension == a.dimension &&
            known->scale == a.scale) {
            continue;
        }
        units_block += a.name + " =";
        for (const auto& [base, e] : a.dimension.exponents()) {
            units_block += " " + std::string(dims::base_name(base)) + ":" +
                           std::to_string(e);
        }
        if (a.scale != 1.0) {
            char buf[48];
            std::snprintf(buf, sizeof buf, " scale:%.17g", a.scale);
            units_block += buf;
        }
        units_block += "\n";
    }
    if (!units_block.empty()) out << "[units]\n" << units_block << "\n";

    if (!c.ranges.empty()) {
        out << "[ranges]\n";
        for (const auto& r : c.ranges) {
            char buf[96];
            std::snprintf(buf, sizeof buf, "%s %s = %.9g %.9g\n",
                          r.key == RangeSpec::Key::Dimension ? "dim" : "binding",
                          r.name.c_str(), r.range.lo, r.range.hi);
            out << buf;
        }
        out << "\n";
    }
    if (!c.span_hints.empty()) {
        out << "[spans]\n";
        for (const auto& h : c.span_hints) {
            out << h.binding << " = " << h.elements << "\n";
        }
        out << "\n";
    }
    return out.str();
}

// =============================================================================
// Transfer fidelity
// =============================================================================

namespace {

// Per-scale parameter model used by the losslessness decision. For a format
// and a binary scale s, frac_bits_at() is the fraction width of values whose
// leading bit sits at 2^s, or -1 when the format has no values at that scale.
struct ScaleModel {
    long smin = 0;
    long smax = 0;
    bool valid = false;
};

ScaleModel scale_model(const repr::NumericFormat& f) {
    ScaleModel m;
    const auto range = repr::representable_range(f);
    if (range.hi <= 0) return m;
    m.smin = static_cast<long>(std::floor(std::log2(range.lo)));
    m.smax = static_cast<long>(std::floor(std::log2(range.hi)));
    m.valid = true;
    return m;
}

int frac_bits_at(const repr::NumericFormat& f, long s) {
    if (const auto* i = std::get_if<repr::Ieee>(&f.kind)) {
        const long emin = i->width == 64 ? -1022 : -126;
        const long emax = i->width == 64 ? 1023 : 127;
        if (s < emin || s > emax) return -1;
        return i->width == 64 ? 52 : 23;
    }
    int n = 0, es = 0, cap = 0, bias = 0;
    if (const auto* p = std::get_if<repr::Posit>(&f.kind)) {
        n = p->n;
        es = p->es;
        cap = p->n - 1;
    } else if (const auto* b = std::get_if<repr::BPosit>(&f.kind)) {
        n = b->n;
        es = b->es;
        cap = b->rs;
        bias = b->exp_bias;
    } else if (const auto* x = std::get_if<repr::Fixed>(&f.kind)) {
        const long top = (x->is_signed ? x->n - 1 : x->n) - 1 - x->frac_bits;
        if (s < -x->frac_bits || s > top) return -1;
        return static_cast<int>(s + x->frac_bits);
    } else {
        return -1;
    }
    const long field = s - bias;
    const long k = (field >= 0) ? field / (1L << es)
                                : -((-field + (1L << es) - 1) / (1L << es));
    const long run = k >= 0 ? k + 1 : -k;
    if (run > cap) return -1;
    const long rho = run < cap ? run + 1 : run;
    const long avail = n - 1 - rho;
    if (avail >= es) return static_cast<int>(avail - es);
    // Truncated exponent bits: only scales whose low exponent bits are zero
    // exist, with no fraction.
    const long e = field - (k << es);
    const long granule = 1L << (es - avail);
    return (e % granule == 0) ? 0 : -1;
}

bool lossless_by_parameters(const repr::NumericFormat& src,
                            const repr::NumericFormat& dst) {
    const ScaleModel sm = scale_model(src);
    const ScaleModel dm = scale_model(dst);
    if (!sm.valid || !dm.valid) return false;
    if (sm.smin < dm.smin || sm.smax > dm.smax) return false;
    for (long s = sm.smin; s <= sm.smax; ++s) {
        const int need = frac_bits_at(src, s);
        if (need < 0) continue;  // src has no values at this scale
        const int have = frac_bits_at(dst, s);
        if (have < need) return false;
    }
    return true;
}

bool round_trips(const repr::NumericFormat& dst, double v) {
    auto enc = repr::encode(dst, v);
    if (!enc.bits) return false;
    auto dec = repr::decode(dst, *enc.bits);
    return dec.value && *dec.value == v;
}

bool lossless_by_enumeration(const repr::NumericFormat& src,
                             const repr::NumericFormat& dst) {
    const auto* values = repr::enumerate_positive(src);
    if (values == nullptr) return false;
    for (double v : *values) {
        if (!round_trips(dst, v) || !round_trips(dst, -v)) return false;
    }
    return true;
}

}  // namespace

TransferReport transfer_fidelity(const repr::NumericFormat& src,
                                 const repr::NumericFormat& dst) {
    TransferReport r;
    r.src_format = src;
    r.dst_format = dst;

    if (src == dst) {
        r.lossless = true;
        r.fidelity = 1.0;
        return r;
    }

    const bool enumerable_src = repr::enumerate_positive(src) != nullptr;
    r.lossless = enumerable_src ? lossless_by_enumeration(src, dst)
                                : lossless_by_parameters(src, dst);
    if (r.lossless) {
        r.fidelity = 1.0;
        return r;
    }

    // Lossy: probe-set preservation fraction plus worst-case conversion error.
    const auto srange = repr::representable_range(src);
    const auto drange = repr::representable_range(dst);
    const double lo = std::max(srange.lo, drange.lo);
    const double hi = std::min(srange.hi, drange.hi);

    long preserved = 0, total = 0;
    double worst = 0;
    auto probe = [&](double x) {
        if (x < lo || x > hi || x <= 0) return;
        ++total;
        auto enc = repr::encode(dst, x);
        auto dec = enc.bits ? repr::decode(dst, *enc.bits) : repr::DecodeResult{};
        if (dec.value && *dec.value == x) {
            ++preserved;
        } else if (dec.value) {
            worst = std::max(worst, std::fabs(x - *dec.value) / x);
        }
    };

    if (const auto* dst_values = repr::enumerate_positive(dst)) {
        // Destination values plus the source-representable gap midpoints.
        for (std::size_t i = 0; i < dst_values->size(); ++i) {
            probe((*dst_values)[i]);
            if (i + 1 < dst_values->size()) {
                probe(((*dst_values)[i] + (*dst_values)[i + 1]) / 2);
            }
        }
    } else if (lo < hi) {
        // Deterministic log-spaced grid, 16 probes per decade.
        const int d0 = static_cast<int>(std::floor(std::log10(lo)));
        const int d1 = static_cast<int>(std::floor(std::log10(hi)));
        for (int d = d0; d <= d1; ++d) {
            for (int j = 0; j < 16; ++j) {
                probe(std::pow(10.0, d + j / 16.0));
            }
        }
        auto analysis = repr::worst_case_rel_error(dst, {lo, hi, true});
        if (analysis.profile) worst = std::max(worst, analysis.profile->summary);
    }

    r.probes_preserved = preserved;
    r.probes_total = total;
    r.worst_conversion_rel_error = worst;
    r.fidelity = total > 0 ? static_cast<double>(preserved) / static_cast<double>(total)
                           : 0.5;
    if (r.fidelity >= 1.0) r.fidelity = 0.999;  // lossy by decision; keep < 1
    return r;
}

}  // namespace clef::targets
