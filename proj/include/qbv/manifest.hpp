#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace qbv {

enum class EntryKind { imitation, sample };

/// One row of a corpus manifest.
struct CorpusEntry {
    std::string id;
    std::string path;
    EntryKind kind = EntryKind::sample;
    std::string class_label;  // kick | snare | cymbal | hihat | tom | other
    std::optional<std::string> imitated_id;
};

const char* to_string(EntryKind kind);
bool is_valid_class(const std::string& label);

/// Parse and validate a manifest CSV (header id,path,kind,class_label,
/// imitated_id). Duplicate ids, dangling imitated_id references and
/// unknown kind/class values throw with the offending row number.
std::vector<CorpusEntry> load_manifest(const std::string& path);

void save_manifest(const std::string& path,
                   const std::vector<CorpusEntry>& entries);

/// Deterministic stratified split: shuffles under `seed` and splits each
/// kind separately so both partitions keep the imitation/sample ratio.
/// Throws if any kind has fewer than 2 entries.
std::pair<std::vector<CorpusEntry>, std::vector<CorpusEntry>> split_train_val(
    const std::vector<CorpusEntry>& entries, double fraction, uint64_t seed);

}  // namespace qbv
