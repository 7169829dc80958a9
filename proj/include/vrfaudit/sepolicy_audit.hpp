#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace vrfaudit::sepolicy {

/// Parsed s-expression. Atoms keep quoted strings without the quotes.
struct Sexp {
    bool is_list = false;
    std::string atom;
    std::vector<Sexp> items;
    std::size_t line = 0;

    std::string to_text() const;
};

/// Throws UnbalancedParens("<origin>:<line>: ...").
std::vector<Sexp> parse_sexps(std::string_view text, std::string_view origin);

enum class RuleKind { Allow, Neverallow };
std::string_view to_string(RuleKind k);

struct ClassPerms {
    std::string cls;              // class name, or the classpermission name when `named`
    std::set<std::string> perms;  // sorted; empty when `named`
    bool named = false;
    bool operator==(const ClassPerms&) const = default;
};

struct CilRule {
    RuleKind kind = RuleKind::Allow;
    std::string source;
    std::string target;
    std::vector<ClassPerms> class_perms;
    std::string origin_file;
    std::size_t origin_line = 0;
    bool conditional = false;  // inside booleanif / tunableif

    /// kind, source, target, sorted class and permissions. Position and
    /// conditional tag are not part of the identity.
    std::string canonical_key() const;
    std::string to_cil() const;
};

struct ParseDiagnostics {
    std::map<std::string, std::size_t> skipped_forms;  // head symbol -> count
    std::size_t malformed_rules = 0;
    std::size_t files = 0;

    std::size_t skipped_total() const;
};

struct CilRuleSet {
    std::vector<CilRule> rules;
    ParseDiagnostics diagnostics;

    std::size_t allow_count() const;
    std::size_t neverallow_count() const;
    void merge(CilRuleSet other);
    std::string to_cil() const;
};

CilRuleSet parse_cil_text(std::string_view text, std::string_view origin);
/// Files are parsed in parallel and merged in the given order. I/O failures
/// raise IoError.
CilRuleSet parse_cil(const std::vector<std::filesystem::path>& files, unsigned jobs = 1);

struct RuleCounts {
    std::size_t allow = 0;
    std::size_t neverallow = 0;
    bool operator==(const RuleCounts&) const = default;
};

RuleCounts rule_counts(const CilRuleSet& set);

using KeyMultiset = std::map<std::string, std::size_t>;

KeyMultiset key_multiset(const CilRuleSet& set, std::optional<RuleKind> kind = std::nullopt);

struct PolicyDiff {
    KeyMultiset added_allow;
    KeyMultiset removed_allow;
    KeyMultiset added_neverallow;
    KeyMultiset removed_neverallow;

    bool empty() const;
};

PolicyDiff diff_multisets(const KeyMultiset& old_allow, const KeyMultiset& old_neverallow,
                          const KeyMultiset& new_allow, const KeyMultiset& new_neverallow);
PolicyDiff diff_rulesets(const CilRuleSet& old_set, const CilRuleSet& new_set);

/// Applies `diff` to a combined multiset of both kinds.
KeyMultiset apply_diff(KeyMultiset base, const PolicyDiff& diff);

struct ExposureOptions {
    std::vector<std::string> domain_prefixes = {"untrusted_app", "isolated_app"};
    std::vector<std::string> property_suffixes = {"_prop"};
    std::vector<std::string> sensitive_types = {"hwservicemanager_prop"};
};

struct ExposureFinding {
    std::string rule_key;
    std::string source;
    std::string target;
    std::string reason;  // "property" or "sensitive_type"
    std::string origin_file;
    std::size_t origin_line = 0;
};

/// Drops a trailing version suffix such as "_30_0" from a type name.
std::string strip_version_suffix(std::string_view type_name);

std::vector<ExposureFinding> untrusted_domain_exposure(const CilRuleSet& set, const ExposureOptions& options = {});

inline constexpr std::string_view kSkippedBinaryPolicy = "SKIPPED_BINARY_POLICY";

}  // namespace vrfaudit::sepolicy
