#include "qbv/manifest.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>
#include <unordered_set>

#include "qbv/csv.hpp"
#include "qbv/rng.hpp"

namespace qbv {

const char* to_string(EntryKind kind) {
    return kind == EntryKind::imitation ? "imitation" : "sample";
}

bool is_valid_class(const std::string& label) {
    static const std::unordered_set<std::string> classes = {
        "kick", "snare", "cymbal", "hihat", "tom", "other"};
    return classes.contains(label);
}

std::vector<CorpusEntry> load_manifest(const std::string& path) {
    auto rows = csv::read(path, "id,path,kind,class_label,imitated_id");
    std::vector<CorpusEntry> entries;
    std::unordered_set<std::string> ids;
    auto fail = [&](size_t row, const std::string& what) {
        throw std::runtime_error("manifest " + path + " row " +
                                 std::to_string(row + 2) + ": " + what);
    };
    for (size_t r = 0; r < rows.size(); ++r) {
        const auto& f = rows[r];
        if (f.size() != 5) fail(r, "expected 5 fields");
        CorpusEntry e;
        e.id = f[0];
        e.path = f[1];
        if (f[2] == "imitation")
            e.kind = EntryKind::imitation;
        else if (f[2] == "sample")
            e.kind = EntryKind::sample;
        else
            fail(r, "unknown kind '" + f[2] + "'");
        if (!is_valid_class(f[3])) fail(r, "unknown class '" + f[3] + "'");
        e.class_label = f[3];
        if (!f[4].empty()) e.imitated_id = f[4];
        if (!ids.insert(e.id).second) fail(r, "duplicate id '" + e.id + "'");
        entries.push_back(std::move(e));
    }
    // referential integrity: imitated_id must name an existing sample
    std::unordered_set<std::string> sample_ids;
    for (const auto& e : entries)
        if (e.kind == EntryKind::sample) sample_ids.insert(e.id);
    for (size_t r = 0; r < entries.size(); ++r) {
        const auto& e = entries[r];
        if (e.imitated_id && !sample_ids.contains(*e.imitated_id))
            fail(r, "imitated_id '" + *e.imitated_id +
                        "' does not name a sample entry");
    }
    return entries;
}

void save_manifest(const std::string& path,
                   const std::vector<CorpusEntry>& entries) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("manifest: cannot write " + path);
    f << "id,path,kind,class_label,imitated_id\n";
    for (const auto& e : entries)
        f << e.id << ',' << e.path << ',' << to_string(e.kind) << ','
          << e.class_label << ',' << e.imitated_id.value_or("") << '\n';
}

std::pair<std::vector<CorpusEntry>, std::vector<CorpusEntry>> split_train_val(
    const std::vector<CorpusEntry>& entries, double fraction, uint64_t seed) {
    if (fraction <= 0.0 || fraction >= 1.0)
        throw std::invalid_argument("split fraction must be in (0, 1)");
    std::vector<CorpusEntry> train, val;
    for (EntryKind kind : {EntryKind::sample, EntryKind::imitation}) {
        std::vector<CorpusEntry> group;
        for (const auto& e : entries)
            if (e.kind == kind) group.push_back(e);
        if (group.size() < 2)
            throw std::runtime_error(
                std::string("split: fewer than 2 entries of kind ") +
                to_string(kind));
        auto eng = make_engine(seed, kind == EntryKind::sample ? 0 : 1);
        std::shuffle(group.begin(), group.end(), eng);
        const size_t n_train = size_t(std::llround(fraction * group.size()));
        for (size_t i = 0; i < group.size(); ++i)
            (i < n_train ? train : val).push_back(std::move(group[i]));
    }
    return {std::move(train), std::move(val)};
}

}  // namespace qbv
