#include "vrfaudit/elf_audit.hpp"

#include <algorithm>
#include <cstdio>
#include <set>

#include "vrfaudit/error.hpp"

namespace vrfaudit::elf {

namespace {

constexpr std::uint32_t kShtSymtab = 2;
constexpr std::uint32_t kShtRela = 4;
constexpr std::uint32_t kShtRel = 9;
constexpr std::uint32_t kShtDynsym = 11;

constexpr std::int64_t kDtNull = 0;
constexpr std::int64_t kDtPltRelSz = 2;
constexpr std::int64_t kDtHash = 4;
constexpr std::int64_t kDtStrtab = 5;
constexpr std::int64_t kDtSymtab = 6;
constexpr std::int64_t kDtRela = 7;
constexpr std::int64_t kDtRelaSz = 8;
constexpr std::int64_t kDtStrSz = 10;
constexpr std::int64_t kDtSymEnt = 11;
constexpr std::int64_t kDtRel = 17;
constexpr std::int64_t kDtRelSz = 18;
constexpr std::int64_t kDtPltRel = 20;
constexpr std::int64_t kDtJmpRel = 23;
constexpr std::int64_t kDtGnuHash = 0x6FFFFEF5;

constexpr std::size_t kMaxSymbols = std::size_t{1} << 22;
constexpr std::size_t kMaxEvidence = 16;
constexpr std::string_view kFortifyMessage = "buffer overflow detected";

struct Section {
    std::uint32_t type = 0;
    std::uint64_t offset = 0;
    std::uint64_t size = 0;
    std::uint32_t link = 0;
    std::uint64_t entsize = 0;
};

bool in_bounds(std::size_t file_size, std::uint64_t off, std::uint64_t len) {
    return off <= file_size && len <= file_size - off;
}

std::string read_cstr(ByteView data, std::size_t table_off, std::size_t table_size, std::size_t index) {
    if (index >= table_size) return {};
    const auto* begin = data.data() + table_off + index;
    const auto max = table_size - index;
    std::size_t n = 0;
    while (n < max && begin[n] != 0) ++n;
    return std::string(reinterpret_cast<const char*>(begin), n);
}

void add_evidence(Evidence& ev, std::string item) {
    if (ev.items.size() < kMaxEvidence && std::find(ev.items.begin(), ev.items.end(), item) == ev.items.end()) {
        ev.items.push_back(std::move(item));
    }
}

template <typename Pred>
CheckResult match_symbols(const ElfFile& elf, Pred&& pred) {
    CheckResult r;
    const auto scan = [&](const std::vector<std::string>& names, std::string_view tag) {
        for (const auto& n : names) {
            if (pred(n)) {
                r.present = true;
                add_evidence(r.evidence, std::string(tag) + ":" + n);
            }
        }
    };
    scan(elf.dynamic_symbols(), "dynsym");
    scan(elf.static_symbols(), "symtab");
    scan(elf.relocation_symbol_names(), "reloc");
    if (!r.present && elf.dynamic_symbols().empty() && elf.static_symbols().empty() &&
        elf.relocation_symbol_names().empty()) {
        r.evidence.note = "no symbol info";
    } else if (!r.present) {
        r.evidence.note = "no matching symbol";
    }
    return r;
}

}  // namespace

std::string_view to_string(ParseStatus s) {
    switch (s) {
        case ParseStatus::Ok: return "OK";
        case ParseStatus::PartialParse: return "PARTIAL_PARSE";
        case ParseStatus::Failed: return "FAILED";
    }
    return "FAILED";
}

std::string_view to_string(Relro r) {
    switch (r) {
        case Relro::None: return "NONE";
        case Relro::Partial: return "PARTIAL";
        case Relro::Full: return "FULL";
    }
    return "NONE";
}

void ElfFile::degrade(std::string why) {
    status_ = ParseStatus::PartialParse;
    warnings_.push_back(std::move(why));
}

ElfFile ElfFile::parse(Bytes data) {
    ElfFile f;
    f.data_ = std::move(data);
    const auto& d = f.data_;
    if (d.size() < 16 || d[0] != 0x7F || d[1] != 'E' || d[2] != 'L' || d[3] != 'F') {
        throw Error(ErrorCode::MalformedElf, "missing ELF magic");
    }
    if (d[4] != 1 && d[4] != 2) throw Error(ErrorCode::MalformedElf, "unknown ELF class");
    if (d[5] != 1) throw Error(ErrorCode::MalformedElf, "only little-endian ELF is supported");
    f.class_ = d[4] == 1 ? ElfClass::Elf32 : ElfClass::Elf64;
    const bool is64 = f.class_ == ElfClass::Elf64;
    const std::size_t ehsize = is64 ? 64 : 52;
    if (d.size() < ehsize) throw Error(ErrorCode::MalformedElf, "ELF header truncated");
    const auto* h = d.data();
    f.machine_ = load_le16(h + 18);
    const std::uint64_t phoff = is64 ? load_le64(h + 32) : load_le32(h + 28);
    const std::size_t phentsize = load_le16(h + (is64 ? 54 : 42));
    const std::size_t phnum = load_le16(h + (is64 ? 56 : 44));
    const std::size_t min_phent = is64 ? 56 : 32;
    if (phnum > 0) {
        if (phentsize < min_phent) throw Error(ErrorCode::MalformedElf, "program header entry size too small");
        if (phnum == 0xFFFF) throw Error(ErrorCode::MalformedElf, "extended program header numbering unsupported");
        if (!in_bounds(d.size(), phoff, static_cast<std::uint64_t>(phentsize) * phnum)) {
            throw Error(ErrorCode::MalformedElf, "program header table outside file");
        }
    }
    for (std::size_t i = 0; i < phnum; ++i) {
        const auto* p = h + phoff + i * phentsize;
        ProgramHeader ph;
        ph.type = load_le32(p);
        if (is64) {
            ph.flags = load_le32(p + 4);
            ph.offset = load_le64(p + 8);
            ph.vaddr = load_le64(p + 16);
            ph.filesz = load_le64(p + 32);
            ph.memsz = load_le64(p + 40);
        } else {
            ph.offset = load_le32(p + 4);
            ph.vaddr = load_le32(p + 8);
            ph.filesz = load_le32(p + 16);
            ph.memsz = load_le32(p + 20);
            ph.flags = load_le32(p + 24);
        }
        f.phdrs_.push_back(ph);
    }
    f.read_dynamic_segment();
    f.read_sections();
    if (f.dynsyms_.empty() && !f.dynamic_.empty()) f.read_symbols_from_dynamic();
    if (!f.relocs_from_sections_ && !f.dynamic_.empty()) f.read_relocations_from_dynamic();
    for (auto* names : {&f.dynsyms_, &f.symtab_, &f.reloc_names_}) {
        std::sort(names->begin(), names->end());
        names->erase(std::unique(names->begin(), names->end()), names->end());
        if (!names->empty() && names->front().empty()) names->erase(names->begin());
    }
    return f;
}

void ElfFile::read_dynamic_segment() {
    const bool is64 = class_ == ElfClass::Elf64;
    const std::size_t entsize = is64 ? 16 : 8;
    for (const auto& ph : phdrs_) {
        if (ph.type != kPtDynamic) continue;
        if (!in_bounds(data_.size(), ph.offset, ph.filesz)) {
            degrade("PT_DYNAMIC outside file");
            return;
        }
        for (std::uint64_t off = 0; off + entsize <= ph.filesz; off += entsize) {
            const auto* p = data_.data() + ph.offset + off;
            DynamicEntry e;
            e.tag = is64 ? static_cast<std::int64_t>(load_le64(p)) : static_cast<std::int32_t>(load_le32(p));
            e.value = is64 ? load_le64(p + 8) : load_le32(p + 4);
            if (e.tag == kDtNull) break;
            dynamic_.push_back(e);
        }
        return;
    }
}

void ElfFile::read_sections() {
    const bool is64 = class_ == ElfClass::Elf64;
    const auto* h = data_.data();
    const std::uint64_t shoff = is64 ? load_le64(h + 40) : load_le32(h + 32);
    const std::size_t shentsize = load_le16(h + (is64 ? 58 : 46));
    const std::size_t shnum = load_le16(h + (is64 ? 60 : 48));
    if (shoff == 0 || shnum == 0) return;
    if (shentsize < (is64 ? 64u : 40u) || !in_bounds(data_.size(), shoff, static_cast<std::uint64_t>(shentsize) * shnum)) {
        degrade("section header table outside file");
        return;
    }
    has_sections_ = true;
    std::vector<Section> sections(shnum);
    for (std::size_t i = 0; i < shnum; ++i) {
        const auto* s = h + shoff + i * shentsize;
        auto& sec = sections[i];
        sec.type = load_le32(s + 4);
        if (is64) {
            sec.offset = load_le64(s + 24);
            sec.size = load_le64(s + 32);
            sec.link = load_le32(s + 40);
            sec.entsize = load_le64(s + 56);
        } else {
            sec.offset = load_le32(s + 16);
            sec.size = load_le32(s + 20);
            sec.link = load_le32(s + 24);
            sec.entsize = load_le32(s + 36);
        }
    }
    const std::size_t sym_size = is64 ? 24 : 16;
    // Returns names indexed by symbol number, empty on failure.
    const auto load_symbols = [&](std::size_t idx) -> std::vector<std::string> {
        const auto& sec = sections[idx];
        if (sec.link >= shnum) return {};
        const auto& str = sections[sec.link];
        if (!in_bounds(data_.size(), sec.offset, sec.size) || !in_bounds(data_.size(), str.offset, str.size)) return {};
        const std::size_t count = std::min<std::uint64_t>(sec.size / sym_size, kMaxSymbols);
        std::vector<std::string> names(count);
        for (std::size_t k = 0; k < count; ++k) {
            const auto name_idx = load_le32(data_.data() + sec.offset + k * sym_size);
            names[k] = read_cstr(data_, str.offset, str.size, name_idx);
        }
        return names;
    };
    std::vector<std::vector<std::string>> by_section(shnum);
    for (std::size_t i = 0; i < shnum; ++i) {
        const auto t = sections[i].type;
        if (t != kShtSymtab && t != kShtDynsym) continue;
        by_section[i] = load_symbols(i);
        if (by_section[i].empty() && sections[i].size > 0) {
            degrade("unreadable symbol table in section " + std::to_string(i));
            continue;
        }
        auto& dest = t == kShtSymtab ? symtab_ : dynsyms_;
        dest.insert(dest.end(), by_section[i].begin(), by_section[i].end());
    }
    for (std::size_t i = 0; i < shnum; ++i) {
        const auto& sec = sections[i];
        if (sec.type != kShtRel && sec.type != kShtRela) continue;
        if (sec.link >= shnum || by_section[sec.link].empty()) continue;
        if (!in_bounds(data_.size(), sec.offset, sec.size)) {
            degrade("relocation section " + std::to_string(i) + " outside file");
            continue;
        }
        relocs_from_sections_ = true;
        const std::size_t ent = sec.type == kShtRela ? (is64 ? 24 : 12) : (is64 ? 16 : 8);
        const auto& names = by_section[sec.link];
        for (std::uint64_t off = 0; off + ent <= sec.size; off += ent) {
            const auto* r = data_.data() + sec.offset + off;
            const std::uint64_t info = is64 ? load_le64(r + 8) : load_le32(r + 4);
            const std::size_t sym = is64 ? static_cast<std::size_t>(info >> 32) : static_cast<std::size_t>(info >> 8);
            if (sym != 0 && sym < names.size()) reloc_names_.push_back(names[sym]);
        }
    }
}

std::optional<std::size_t> ElfFile::vaddr_to_offset(std::uint64_t vaddr) const {
    for (const auto& ph : phdrs_) {
        if (ph.type != kPtLoad) continue;
        if (vaddr >= ph.vaddr && vaddr - ph.vaddr < ph.filesz) {
            const auto off = ph.offset + (vaddr - ph.vaddr);
            if (off < data_.size()) return static_cast<std::size_t>(off);
        }
    }
    return std::nullopt;
}

void ElfFile::read_symbols_from_dynamic() {
    const bool is64 = class_ == ElfClass::Elf64;
    std::uint64_t symtab = 0, strtab = 0, strsz = 0, hash = 0, gnu_hash = 0;
    std::uint64_t syment = is64 ? 24 : 16;
    for (const auto& e : dynamic_) {
        switch (e.tag) {
            case kDtSymtab: symtab = e.value; break;
            case kDtStrtab: strtab = e.value; break;
            case kDtStrSz: strsz = e.value; break;
            case kDtSymEnt: syment = e.value; break;
            case kDtHash: hash = e.value; break;
            case kDtGnuHash: gnu_hash = e.value; break;
            default: break;
        }
    }
    if (!symtab || !strtab) return;
    const auto sym_off = vaddr_to_offset(symtab);
    const auto str_off = vaddr_to_offset(strtab);
    if (!sym_off || !str_off || syment < (is64 ? 24u : 16u)) {
        degrade("dynamic symbol table not mapped by PT_LOAD");
        return;
    }
    strsz = std::min<std::uint64_t>(strsz, data_.size() - *str_off);

    std::size_t count = 0;
    if (hash) {
        const auto off = vaddr_to_offset(hash);
        if (off && in_bounds(data_.size(), *off, 8)) count = load_le32(data_.data() + *off + 4);  // nchain
    } else if (gnu_hash) {
        const auto off = vaddr_to_offset(gnu_hash);
        if (off && in_bounds(data_.size(), *off, 16)) {
            const auto* g = data_.data() + *off;
            const std::uint32_t nbuckets = load_le32(g);
            const std::uint32_t symoffset = load_le32(g + 4);
            const std::uint32_t bloom_size = load_le32(g + 8);
            const std::uint64_t buckets_at = *off + 16 + static_cast<std::uint64_t>(bloom_size) * (is64 ? 8 : 4);
            if (in_bounds(data_.size(), buckets_at, static_cast<std::uint64_t>(nbuckets) * 4)) {
                std::uint32_t last = 0;
                for (std::uint32_t b = 0; b < nbuckets; ++b) {
                    last = std::max(last, load_le32(data_.data() + buckets_at + b * 4ull));
                }
                if (last < symoffset) {
                    count = symoffset;
                } else {
                    const std::uint64_t chains_at = buckets_at + nbuckets * 4ull;
                    std::uint64_t idx = last;
                    for (;;) {
                        const auto at = chains_at + (idx - symoffset) * 4;
                        if (!in_bounds(data_.size(), at, 4) || idx >= kMaxSymbols) break;
                        if (load_le32(data_.data() + at) & 1u) break;
                        ++idx;
                    }
                    count = static_cast<std::size_t>(idx + 1);
                }
            }
        }
    }
    if (count == 0) {
        degrade("dynamic symbol count unknown (no DT_HASH / DT_GNU_HASH)");
        return;
    }
    count = std::min<std::size_t>(count, kMaxSymbols);
    for (std::size_t k = 0; k < count; ++k) {
        const auto at = *sym_off + k * syment;
        if (!in_bounds(data_.size(), at, 4)) {
            degrade("dynamic symbol table truncated");
            break;
        }
        dynsyms_.push_back(read_cstr(data_, *str_off, strsz, load_le32(data_.data() + at)));
    }
}

void ElfFile::read_relocations_from_dynamic() {
    const bool is64 = class_ == ElfClass::Elf64;
    std::uint64_t symtab = 0, strtab = 0, strsz = 0;
    std::uint64_t jmprel = 0, pltrelsz = 0, pltrel = 0, rela = 0, relasz = 0, rel = 0, relsz = 0;
    for (const auto& e : dynamic_) {
        switch (e.tag) {
            case kDtSymtab: symtab = e.value; break;
            case kDtStrtab: strtab = e.value; break;
            case kDtStrSz: strsz = e.value; break;
            case kDtJmpRel: jmprel = e.value; break;
            case kDtPltRelSz: pltrelsz = e.value; break;
            case kDtPltRel: pltrel = e.value; break;
            case kDtRela: rela = e.value; break;
            case kDtRelaSz: relasz = e.value; break;
            case kDtRel: rel = e.value; break;
            case kDtRelSz: relsz = e.value; break;
            default: break;
        }
    }
    const auto sym_off = symtab ? vaddr_to_offset(symtab) : std::nullopt;
    const auto str_off = strtab ? vaddr_to_offset(strtab) : std::nullopt;
    if (!sym_off || !str_off) return;
    strsz = std::min<std::uint64_t>(strsz, data_.size() - *str_off);
    const std::size_t syment = is64 ? 24 : 16;
    const auto walk = [&](std::uint64_t vaddr, std::uint64_t size, bool with_addend) {
        if (!vaddr || !size) return;
        const auto off = vaddr_to_offset(vaddr);
        if (!off || !in_bounds(data_.size(), *off, size)) {
            degrade("relocation table not mapped by PT_LOAD");
            return;
        }
        const std::size_t ent = with_addend ? (is64 ? 24 : 12) : (is64 ? 16 : 8);
        for (std::uint64_t k = 0; k + ent <= size; k += ent) {
            const auto* r = data_.data() + *off + k;
            const std::uint64_t info = is64 ? load_le64(r + 8) : load_le32(r + 4);
            const std::uint64_t sym = is64 ? info >> 32 : info >> 8;
            if (sym == 0 || sym >= kMaxSymbols) continue;
            const auto at = *sym_off + sym * syment;
            if (!in_bounds(data_.size(), at, 4)) continue;
            auto name = read_cstr(data_, *str_off, strsz, load_le32(data_.data() + at));
            if (!name.empty()) reloc_names_.push_back(std::move(name));
        }
    };
    walk(jmprel, pltrelsz, pltrel == kDtRela);
    walk(rela, relasz, true);
    walk(rel, relsz, false);
}

std::vector<std::pair<std::size_t, std::size_t>> ElfFile::loaded_ranges() const {
    std::vector<std::pair<std::size_t, std::size_t>> out;
    for (const auto& ph : phdrs_) {
        if (ph.type != kPtLoad || ph.offset >= data_.size()) continue;
        const auto len = std::min<std::uint64_t>(ph.filesz, data_.size() - ph.offset);
        out.emplace_back(static_cast<std::size_t>(ph.offset), static_cast<std::size_t>(len));
    }
    return out;
}

CheckResult check_canary(const ElfFile& elf) {
    return match_symbols(elf, [](const std::string& n) { return n == "__stack_chk_fail" || n == "__stack_chk_fail_local"; });
}

CheckResult check_cfi(const ElfFile& elf) {
    return match_symbols(elf, [](const std::string& n) {
        return (n.size() > 4 && n.ends_with(".cfi")) || n == "__cfi_check" || n == "__cfi_slowpath";
    });
}

CheckResult check_fortify(const ElfFile& elf) {
    auto r = match_symbols(elf, [](const std::string& n) {
        return n.size() > 6 && n.starts_with("__") && n.ends_with("_chk");
    });
    for (const auto& [off, len] : elf.loaded_ranges()) {
        const auto pos = find_bytes(elf.bytes().subspan(off, len), kFortifyMessage);
        if (pos != std::string_view::npos) {
            r.present = true;
            char buf[32];
            std::snprintf(buf, sizeof buf, "@0x%zx", off + pos);
            add_evidence(r.evidence, std::string("string:") + std::string(kFortifyMessage) + buf);
            break;
        }
    }
    if (r.present) r.evidence.note.clear();
    return r;
}

CheckResult check_nx(const ElfFile& elf) {
    CheckResult r;
    for (const auto& ph : elf.program_headers()) {
        if (ph.type != kPtGnuStack) continue;
        std::string flags;
        flags += (ph.flags & 0x4) ? 'R' : '-';
        flags += (ph.flags & 0x2) ? 'W' : '-';
        flags += (ph.flags & kPfExec) ? 'X' : '-';
        if (ph.flags & kPfExec) {
            r.evidence.note = "PT_GNU_STACK flags " + flags + " (executable stack)";
        } else {
            r.present = true;
            r.evidence.items.push_back("PT_GNU_STACK flags " + flags);
        }
        return r;
    }
    r.evidence.note = "segment absent";
    return r;
}

RelroResult check_relro(const ElfFile& elf) {
    RelroResult r;
    const bool relro = std::any_of(elf.program_headers().begin(), elf.program_headers().end(),
                                   [](const ProgramHeader& ph) { return ph.type == kPtGnuRelro; });
    if (!relro) {
        r.evidence.note = "PT_GNU_RELRO absent";
        return r;
    }
    r.status = Relro::Partial;
    r.evidence.items.push_back("PT_GNU_RELRO");
    for (const auto& e : elf.dynamic_entries()) {
        if (e.tag == kDtBindNow) {
            add_evidence(r.evidence, "DT_BIND_NOW");
        } else if (e.tag == kDtFlags && (e.value & kDfBindNow)) {
            add_evidence(r.evidence, "DT_FLAGS:BIND_NOW");
        } else if (e.tag == kDtFlags1 && (e.value & kDf1Now)) {
            add_evidence(r.evidence, "DT_FLAGS_1:NOW");
        } else {
            continue;
        }
        r.status = Relro::Full;
    }
    if (r.status == Relro::Partial) r.evidence.note = "no BIND_NOW";
    return r;
}

ElfHardeningVerdict audit_elf_bytes(std::string path, Bytes bytes) {
    ElfHardeningVerdict v;
    v.path = std::move(path);
    v.sha256 = sha256_hex(ByteView(bytes));
    try {
        const auto elf = ElfFile::parse(std::move(bytes));
        v.parse_status = elf.status();
        v.canary = check_canary(elf);
        v.cfi = check_cfi(elf);
        v.fortify = check_fortify(elf);
        v.nx = check_nx(elf);
        v.relro = check_relro(elf);
    } catch (const Error& e) {
        v.parse_status = ParseStatus::Failed;
        v.error = e.what();
    }
    return v;
}

HardeningSummary summarize(const std::vector<ElfHardeningVerdict>& verdicts) {
    HardeningSummary s;
    std::set<std::string> hashes;
    for (const auto& v : verdicts) {
        if (v.parse_status == ParseStatus::Failed) {
            ++s.failed;
            continue;
        }
        ++s.audited;
        hashes.insert(v.sha256);
        s.no_canary += !v.canary.present;
        s.no_cfi += !v.cfi.present;
        s.no_fortify += !v.fortify.present;
        s.no_nx += !v.nx.present;
        s.no_relro += v.relro.status == Relro::None;
        s.partial_relro += v.relro.status == Relro::Partial;
    }
    s.unique_contents = hashes.size();
    return s;
}

BinaryAudit audit_binaries(const std::vector<ElfTarget>& targets, unsigned jobs) {
    BinaryAudit out;
    out.verdicts.resize(targets.size());
    parallel_for(targets.size(), jobs, [&](std::size_t i) {
        try {
            out.verdicts[i] = audit_elf_bytes(targets[i].path, read_file(targets[i].file));
        } catch (const Error& e) {
            out.verdicts[i].path = targets[i].path;
            out.verdicts[i].parse_status = ParseStatus::Failed;
            out.verdicts[i].error = e.what();
        }
    });
    std::sort(out.verdicts.begin(), out.verdicts.end(),
              [](const ElfHardeningVerdict& a, const ElfHardeningVerdict& b) { return a.path < b.path; });
    out.summary = summarize(out.verdicts);
    return out;
}

}  // namespace vrfaudit::elf
