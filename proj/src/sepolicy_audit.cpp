#include "vrfaudit/sepolicy_audit.hpp"

#include <algorithm>
#include <exception>
#include <tuple>

#include "vrfaudit/error.hpp"
#include "vrfaudit/util.hpp"

namespace vrfaudit::sepolicy {

namespace {

bool is_container(std::string_view head) {
    static const std::set<std::string_view> kContainers = {"block", "optional", "in",   "macro",
                                                           "booleanif", "tunableif", "true", "false"};
    return kContainers.count(head) != 0;
}

bool is_conditional(std::string_view head) { return head == "booleanif" || head == "tunableif"; }

std::string symbol_text(const Sexp& s) { return s.is_list ? s.to_text() : s.atom; }

bool parse_class_perms(const Sexp& s, ClassPerms& out) {
    if (!s.is_list) {
        if (s.atom.empty()) return false;
        out.cls = s.atom;
        out.named = true;
        return true;
    }
    if (s.items.size() != 2 || s.items[0].is_list || s.items[0].atom.empty()) return false;
    out.cls = s.items[0].atom;
    const auto& perms = s.items[1];
    if (perms.is_list) {
        for (const auto& p : perms.items) out.perms.insert(symbol_text(p));
    } else {
        out.perms.insert(perms.atom);
    }
    return !out.perms.empty();
}

void walk(const Sexp& form, std::string_view origin, bool conditional, CilRuleSet& out) {
    if (!form.is_list) return;
    if (form.items.empty() || form.items[0].is_list) {
        for (const auto& child : form.items) walk(child, origin, conditional, out);
        return;
    }
    const std::string& head = form.items[0].atom;
    if (head == "allow" || head == "neverallow") {
        CilRule rule;
        rule.kind = head == "allow" ? RuleKind::Allow : RuleKind::Neverallow;
        ClassPerms cp;
        if (form.items.size() != 4 || !parse_class_perms(form.items[3], cp)) {
            ++out.diagnostics.malformed_rules;
            return;
        }
        rule.source = symbol_text(form.items[1]);
        rule.target = symbol_text(form.items[2]);
        if (rule.source.empty() || rule.target.empty()) {
            ++out.diagnostics.malformed_rules;
            return;
        }
        rule.class_perms.push_back(std::move(cp));
        rule.origin_file = std::string(origin);
        rule.origin_line = form.line;
        rule.conditional = conditional;
        out.rules.push_back(std::move(rule));
        return;
    }
    if (is_container(head)) {
        const bool cond = conditional || is_conditional(head);
        // Skip the condition expression and the macro parameter list.
        const std::size_t first = is_conditional(head) ? 2 : head == "macro" ? 3 : 1;
        for (std::size_t i = first; i < form.items.size(); ++i) walk(form.items[i], origin, cond, out);
        return;
    }
    ++out.diagnostics.skipped_forms[head];
}

}  // namespace

std::string Sexp::to_text() const {
    if (!is_list) {
        const bool needs_quotes =
            atom.empty() || atom.find_first_of(" \t\r\n();\"") != std::string::npos;
        return needs_quotes ? "\"" + atom + "\"" : atom;
    }
    std::string s = "(";
    for (std::size_t i = 0; i < items.size(); ++i) {
        if (i) s += ' ';
        s += items[i].to_text();
    }
    return s + ")";
}

std::vector<Sexp> parse_sexps(std::string_view text, std::string_view origin) {
    std::vector<Sexp> top;
    std::vector<Sexp> stack;
    std::size_t line = 1;
    const auto fail = [&](std::size_t at, const std::string& why) {
        throw Error(ErrorCode::UnbalancedParens, std::string(origin) + ":" + std::to_string(at) + ": " + why);
    };
    const auto emit = [&](Sexp s) {
        if (stack.empty()) top.push_back(std::move(s));
        else stack.back().items.push_back(std::move(s));
    };
    std::size_t i = 0;
    while (i < text.size()) {
        const char c = text[i];
        if (c == '\n') {
            ++line;
            ++i;
        } else if (c == ' ' || c == '\t' || c == '\r' || c == '\f' || c == '\v') {
            ++i;
        } else if (c == ';') {
            while (i < text.size() && text[i] != '\n') ++i;
        } else if (c == '(') {
            Sexp s;
            s.is_list = true;
            s.line = line;
            stack.push_back(std::move(s));
            ++i;
        } else if (c == ')') {
            if (stack.empty()) fail(line, "unexpected ')'");
            auto s = std::move(stack.back());
            stack.pop_back();
            emit(std::move(s));
            ++i;
        } else if (c == '"') {
            const std::size_t start_line = line;
            std::size_t j = i + 1;
            while (j < text.size() && text[j] != '"') {
                if (text[j] == '\n') ++line;
                ++j;
            }
            if (j >= text.size()) fail(start_line, "unterminated string");
            Sexp s;
            s.atom = std::string(text.substr(i + 1, j - i - 1));
            s.line = start_line;
            emit(std::move(s));
            i = j + 1;
        } else {
            std::size_t j = i;
            while (j < text.size()) {
                const char d = text[j];
                if (d == '(' || d == ')' || d == ';' || d == '"' || d == ' ' || d == '\t' || d == '\n' ||
                    d == '\r' || d == '\f' || d == '\v') {
                    break;
                }
                ++j;
            }
            Sexp s;
            s.atom = std::string(text.substr(i, j - i));
            s.line = line;
            emit(std::move(s));
            i = j;
        }
    }
    if (!stack.empty()) fail(stack.back().line, "unclosed '('");
    return top;
}

std::string_view to_string(RuleKind k) { return k == RuleKind::Allow ? "allow" : "neverallow"; }

std::string CilRule::canonical_key() const { return to_cil(); }

std::string CilRule::to_cil() const {
    std::string s = "(";
    s += to_string(kind);
    s += ' ';
    s += source;
    s += ' ';
    s += target;
    for (const auto& cp : class_perms) {
        s += ' ';
        if (cp.named) {
            s += cp.cls;
            continue;
        }
        s += '(';
        s += cp.cls;
        s += " (";
        bool first = true;
        for (const auto& p : cp.perms) {
            if (!first) s += ' ';
            s += p;
            first = false;
        }
        s += "))";
    }
    return s + ")";
}

std::size_t ParseDiagnostics::skipped_total() const {
    std::size_t n = 0;
    for (const auto& [k, v] : skipped_forms) n += v;
    return n;
}

std::size_t CilRuleSet::allow_count() const {
    return static_cast<std::size_t>(
        std::count_if(rules.begin(), rules.end(), [](const CilRule& r) { return r.kind == RuleKind::Allow; }));
}

std::size_t CilRuleSet::neverallow_count() const { return rules.size() - allow_count(); }

void CilRuleSet::merge(CilRuleSet other) {
    rules.insert(rules.end(), std::make_move_iterator(other.rules.begin()), std::make_move_iterator(other.rules.end()));
    for (const auto& [k, v] : other.diagnostics.skipped_forms) diagnostics.skipped_forms[k] += v;
    diagnostics.malformed_rules += other.diagnostics.malformed_rules;
    diagnostics.files += other.diagnostics.files;
}

std::string CilRuleSet::to_cil() const {
    std::string s;
    for (const auto& r : rules) {
        s += r.to_cil();
        s += '\n';
    }
    return s;
}

CilRuleSet parse_cil_text(std::string_view text, std::string_view origin) {
    CilRuleSet set;
    set.diagnostics.files = 1;
    for (const auto& form : parse_sexps(text, origin)) walk(form, origin, false, set);
    return set;
}

CilRuleSet parse_cil(const std::vector<std::filesystem::path>& files, unsigned jobs) {
    std::vector<CilRuleSet> parts(files.size());
    std::vector<std::exception_ptr> errors(files.size());
    parallel_for(files.size(), jobs, [&](std::size_t i) {
        try {
            parts[i] = parse_cil_text(read_text_file(files[i]), files[i].generic_string());
        } catch (...) {
            errors[i] = std::current_exception();
        }
    });
    for (const auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
    CilRuleSet merged;
    for (auto& p : parts) merged.merge(std::move(p));
    return merged;
}

RuleCounts rule_counts(const CilRuleSet& set) { return {set.allow_count(), set.neverallow_count()}; }

KeyMultiset key_multiset(const CilRuleSet& set, std::optional<RuleKind> kind) {
    KeyMultiset m;
    for (const auto& r : set.rules) {
        if (!kind || r.kind == *kind) ++m[r.canonical_key()];
    }
    return m;
}

namespace {

void one_way(const KeyMultiset& a, const KeyMultiset& b, KeyMultiset& only_a) {
    for (const auto& [k, n] : a) {
        auto it = b.find(k);
        const std::size_t m = it == b.end() ? 0 : it->second;
        if (n > m) only_a[k] = n - m;
    }
}

}  // namespace

bool PolicyDiff::empty() const {
    return added_allow.empty() && removed_allow.empty() && added_neverallow.empty() && removed_neverallow.empty();
}

PolicyDiff diff_multisets(const KeyMultiset& old_allow, const KeyMultiset& old_neverallow,
                          const KeyMultiset& new_allow, const KeyMultiset& new_neverallow) {
    PolicyDiff d;
    one_way(new_allow, old_allow, d.added_allow);
    one_way(old_allow, new_allow, d.removed_allow);
    one_way(new_neverallow, old_neverallow, d.added_neverallow);
    one_way(old_neverallow, new_neverallow, d.removed_neverallow);
    return d;
}

PolicyDiff diff_rulesets(const CilRuleSet& old_set, const CilRuleSet& new_set) {
    return diff_multisets(key_multiset(old_set, RuleKind::Allow), key_multiset(old_set, RuleKind::Neverallow),
                          key_multiset(new_set, RuleKind::Allow), key_multiset(new_set, RuleKind::Neverallow));
}

KeyMultiset apply_diff(KeyMultiset base, const PolicyDiff& diff) {
    for (const auto* removed : {&diff.removed_allow, &diff.removed_neverallow}) {
        for (const auto& [k, n] : *removed) {
            auto it = base.find(k);
            if (it == base.end()) continue;
            it->second = it->second > n ? it->second - n : 0;
            if (it->second == 0) base.erase(it);
        }
    }
    for (const auto* added : {&diff.added_allow, &diff.added_neverallow}) {
        for (const auto& [k, n] : *added) base[k] += n;
    }
    return base;
}

std::string strip_version_suffix(std::string_view name) {
    // <type>_<major>_<minor>, as emitted for versioned platform types.
    auto all_digits = [](std::string_view s) {
        return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; });
    };
    const auto last = name.rfind('_');
    if (last == std::string_view::npos || !all_digits(name.substr(last + 1))) return std::string(name);
    const auto prev = name.rfind('_', last - 1);
    if (prev == std::string_view::npos || prev == 0 || !all_digits(name.substr(prev + 1, last - prev - 1))) {
        return std::string(name);
    }
    return std::string(name.substr(0, prev));
}

std::vector<ExposureFinding> untrusted_domain_exposure(const CilRuleSet& set, const ExposureOptions& options) {
    std::vector<ExposureFinding> out;
    for (const auto& r : set.rules) {
        if (r.kind != RuleKind::Allow) continue;
        const bool untrusted = std::any_of(options.domain_prefixes.begin(), options.domain_prefixes.end(),
                                           [&](const std::string& p) { return r.source.starts_with(p); });
        if (!untrusted) continue;
        const auto target = strip_version_suffix(r.target);
        std::string reason;
        if (std::find(options.sensitive_types.begin(), options.sensitive_types.end(), target) !=
            options.sensitive_types.end()) {
            reason = "sensitive_type";
        } else if (std::any_of(options.property_suffixes.begin(), options.property_suffixes.end(),
                               [&](const std::string& s) { return target.ends_with(s); })) {
            reason = "property";
        }
        if (reason.empty()) continue;
        out.push_back({r.canonical_key(), r.source, r.target, reason, r.origin_file, r.origin_line});
    }
    std::sort(out.begin(), out.end(), [](const ExposureFinding& a, const ExposureFinding& b) {
        return std::tie(a.rule_key, a.origin_file, a.origin_line) < std::tie(b.rule_key, b.origin_file, b.origin_line);
    });
    return out;
}

}  // namespace vrfaudit::sepolicy
