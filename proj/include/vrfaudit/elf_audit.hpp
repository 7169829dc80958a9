#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "vrfaudit/util.hpp"

namespace vrfaudit::elf {

inline constexpr std::uint32_t kPtLoad = 1;
inline constexpr std::uint32_t kPtDynamic = 2;
inline constexpr std::uint32_t kPtGnuStack = 0x6474E551;
inline constexpr std::uint32_t kPtGnuRelro = 0x6474E552;
inline constexpr std::uint32_t kPfExec = 0x1;
inline constexpr std::int64_t kDtBindNow = 24;
inline constexpr std::int64_t kDtFlags = 30;
inline constexpr std::int64_t kDtFlags1 = 0x6FFFFFFB;
inline constexpr std::uint64_t kDfBindNow = 0x8;
inline constexpr std::uint64_t kDf1Now = 0x1;

enum class ElfClass { Elf32, Elf64 };
enum class ParseStatus { Ok, PartialParse, Failed };
std::string_view to_string(ParseStatus s);

struct ProgramHeader {
    std::uint32_t type = 0;
    std::uint32_t flags = 0;
    std::uint64_t offset = 0;
    std::uint64_t vaddr = 0;
    std::uint64_t filesz = 0;
    std::uint64_t memsz = 0;
};

struct DynamicEntry {
    std::int64_t tag = 0;
    std::uint64_t value = 0;
};

/// Tolerant little-endian ELF reader. Only the program header table is
/// mandatory; section headers, symbol tables and relocations degrade to
/// PartialParse when damaged. Stripped files still yield dynamic symbols
/// through DT_SYMTAB / DT_HASH / DT_GNU_HASH.
class ElfFile {
public:
    /// Throws MalformedElf (bad magic, big-endian, unreadable program headers).
    static ElfFile parse(Bytes data);

    ElfClass elf_class() const { return class_; }
    std::uint16_t machine() const { return machine_; }
    const std::vector<ProgramHeader>& program_headers() const { return phdrs_; }
    const std::vector<DynamicEntry>& dynamic_entries() const { return dynamic_; }
    const std::vector<std::string>& dynamic_symbols() const { return dynsyms_; }
    const std::vector<std::string>& static_symbols() const { return symtab_; }
    const std::vector<std::string>& relocation_symbol_names() const { return reloc_names_; }
    bool has_section_headers() const { return has_sections_; }
    ParseStatus status() const { return status_; }
    const std::vector<std::string>& warnings() const { return warnings_; }

    /// File byte ranges covered by PT_LOAD segments (clipped to the file).
    std::vector<std::pair<std::size_t, std::size_t>> loaded_ranges() const;
    ByteView bytes() const { return data_; }

private:
    ElfFile() = default;
    void degrade(std::string why);
    void read_sections();
    void read_dynamic_segment();
    void read_symbols_from_dynamic();
    void read_relocations_from_dynamic();
    std::optional<std::size_t> vaddr_to_offset(std::uint64_t vaddr) const;

    Bytes data_;
    ElfClass class_ = ElfClass::Elf64;
    std::uint16_t machine_ = 0;
    std::vector<ProgramHeader> phdrs_;
    std::vector<DynamicEntry> dynamic_;
    std::vector<std::string> dynsyms_;
    std::vector<std::string> symtab_;
    std::vector<std::string> reloc_names_;
    bool has_sections_ = false;
    bool relocs_from_sections_ = false;
    ParseStatus status_ = ParseStatus::Ok;
    std::vector<std::string> warnings_;
};

struct Evidence {
    std::vector<std::string> items;  // matched symbols / segments
    std::string note;                // explanation for negative findings
    bool operator==(const Evidence&) const = default;
};

struct CheckResult {
    bool present = false;
    Evidence evidence;
};

enum class Relro { None, Partial, Full };
std::string_view to_string(Relro r);

struct RelroResult {
    Relro status = Relro::None;
    Evidence evidence;
    bool any() const { return status != Relro::None; }
};

CheckResult check_canary(const ElfFile& elf);
CheckResult check_cfi(const ElfFile& elf);
CheckResult check_fortify(const ElfFile& elf);
CheckResult check_nx(const ElfFile& elf);
RelroResult check_relro(const ElfFile& elf);

struct ElfHardeningVerdict {
    std::string path;
    std::string sha256;
    ParseStatus parse_status = ParseStatus::Failed;
    std::string error;  // set when Failed
    CheckResult canary;
    CheckResult cfi;
    CheckResult fortify;
    CheckResult nx;
    RelroResult relro;
};

/// Pure function of the bytes; `path` is carried through for reporting.
ElfHardeningVerdict audit_elf_bytes(std::string path, Bytes bytes);

struct HardeningSummary {
    std::size_t audited = 0;  // successfully parsed
    std::size_t failed = 0;
    std::size_t unique_contents = 0;  // distinct sha256 among audited
    std::size_t no_canary = 0;
    std::size_t no_cfi = 0;
    std::size_t no_fortify = 0;
    std::size_t no_nx = 0;
    std::size_t no_relro = 0;  // relro == None
    std::size_t partial_relro = 0;
    bool operator==(const HardeningSummary&) const = default;
};

/// Failed parses are excluded from every count except `failed`.
HardeningSummary summarize(const std::vector<ElfHardeningVerdict>& verdicts);

struct ElfTarget {
    std::string path;  // as reported
    std::filesystem::path file;
};

struct BinaryAudit {
    std::vector<ElfHardeningVerdict> verdicts;  // sorted by path
    HardeningSummary summary;
};

BinaryAudit audit_binaries(const std::vector<ElfTarget>& targets, unsigned jobs = 1);

}  // namespace vrfaudit::elf
