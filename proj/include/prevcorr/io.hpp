#pragma once

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "prevcorr/errors.hpp"
#include "prevcorr/model.hpp"

namespace prevcorr {

namespace detail {

inline std::string trim(std::string_view text) {
    const auto begin = text.find_first_not_of(" \t\r");
    if (begin == std::string_view::npos) return {};
    const auto end = text.find_last_not_of(" \t\r");
    return std::string(text.substr(begin, end - begin + 1));
}

inline std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
        const std::size_t comma = line.find(',', start);
        if (comma == std::string::npos) {
            fields.push_back(trim(std::string_view(line).substr(start)));
            break;
        }
        fields.push_back(trim(std::string_view(line).substr(start, comma - start)));
        start = comma + 1;
    }
    return fields;
}

inline std::int64_t parse_int(const std::string& field, const char* what, int line) {
    std::int64_t value = 0;
    const char* first = field.data();
    const char* last = field.data() + field.size();
    const auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc{} || ptr != last || field.empty())
        throw ParseError(std::string("expected an integer for ") + what + ", got \"" + field + "\"",
                         line);
    return value;
}

inline bool parse_bool(const std::string& field, const char* what, int line) {
    std::string lower = field;
    std::transform(lower.begin(), lower.end(), lower.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    if (lower == "true" || lower == "1" || lower == "yes") return true;
    if (lower == "false" || lower == "0" || lower == "no") return false;
    throw ParseError(std::string("expected a boolean for ") + what + ", got \"" + field + "\"",
                     line);
}

/// Reads logical CSV lines: skips blanks and '#' comments, tracks line numbers.
class CsvReader {
public:
    explicit CsvReader(std::istream& in) : in_(in) {}

    /// Returns the next data line's fields, or nullopt at end of input.
    std::optional<std::vector<std::string>> next() {
        std::string raw;
        while (std::getline(in_, raw)) {
            ++line_;
            const std::string stripped = trim(raw);
            if (stripped.empty() || stripped.front() == '#') continue;
            return split_csv(stripped);
        }
        return std::nullopt;
    }

    int line() const noexcept { return line_; }

private:
    std::istream& in_;
    int line_ = 0;
};

inline void expect_header(CsvReader& reader, const std::vector<std::string>& expected) {
    const auto fields = reader.next();
    if (!fields) throw ParseError("empty input: missing header line");
    if (*fields != expected) {
        std::string want;
        for (const auto& f : expected) want += (want.empty() ? "" : ",") + f;
        std::string got;
        for (const auto& f : *fields) got += (got.empty() ? "" : ",") + f;
        throw ParseError("expected header \"" + want + "\", got \"" + got + "\"", reader.line());
    }
}

} // namespace detail

// ---------------------------------------------------------------------------
// Aggregate counts: `category,tested_positive,tested_negative`.
// ---------------------------------------------------------------------------

/// Parses per-category tallies. Categories may appear in any order; indices
/// absent from the file get zero counts and M is the highest index present.
inline TestedCounts parse_aggregate(std::istream& in, std::int64_t census) {
    detail::CsvReader reader(in);
    detail::expect_header(reader, {"category", "tested_positive", "tested_negative"});

    std::map<int, std::pair<std::int64_t, std::int64_t>> records;
    while (auto fields = reader.next()) {
        if (fields->size() != 3)
            throw ParseError("expected 3 fields, got " + std::to_string(fields->size()),
                             reader.line());
        const std::int64_t raw_cat = detail::parse_int((*fields)[0], "category", reader.line());
        if (raw_cat < 1)
            throw ParseError("category index must be >= 1, got " + std::to_string(raw_cat),
                             reader.line());
        const int category = static_cast<int>(raw_cat);
        const std::int64_t pos = detail::parse_int((*fields)[1], "tested_positive", reader.line());
        const std::int64_t neg = detail::parse_int((*fields)[2], "tested_negative", reader.line());
        if (pos < 0 || neg < 0) throw ParseError("counts must be non-negative", reader.line());
        if (!records.emplace(category, std::make_pair(pos, neg)).second)
            throw ParseError("duplicate category " + std::to_string(category), reader.line());
    }
    if (records.empty()) throw ParseError("no records: counts file has no data rows");

    const int m = records.rbegin()->first;
    std::vector<std::int64_t> positive(static_cast<std::size_t>(m), 0);
    std::vector<std::int64_t> negative(static_cast<std::size_t>(m), 0);
    for (const auto& [category, counts] : records) {
        positive[static_cast<std::size_t>(category - 1)] = counts.first;
        negative[static_cast<std::size_t>(category - 1)] = counts.second;
    }
    return TestedCounts::create(census, std::move(positive), std::move(negative));
}

/// Writes counts in the parse_aggregate dialect, one row per category
/// including zero rows, so parsing the output reproduces the input exactly.
/// The census rides along as a comment; it is carried out of band.
inline std::string serialize_aggregate(const TestedCounts& counts) {
    std::ostringstream out;
    out << "# census N=" << counts.census() << "\n";
    out << "category,tested_positive,tested_negative\n";
    for (int s = 1; s <= counts.num_categories(); ++s)
        out << s << ',' << counts.positive(s) << ',' << counts.negative(s) << "\n";
    return out.str();
}

// ---------------------------------------------------------------------------
// Line list: `id,category,tested,result`, one row per individual.
// ---------------------------------------------------------------------------

/// Aggregates a per-individual record file. Untested rows contribute only to
/// the census; when `census` is not given the file itself is the census. A
/// result must be present exactly when the row is tested.
inline TestedCounts parse_linelist(std::istream& in,
                                   std::optional<std::int64_t> census = std::nullopt) {
    detail::CsvReader reader(in);
    detail::expect_header(reader, {"id", "category", "tested", "result"});

    std::set<std::string> ids;
    std::map<int, std::pair<std::int64_t, std::int64_t>> tallies;
    std::int64_t rows = 0;
    int max_category = 0;
    while (auto fields = reader.next()) {
        if (fields->size() != 4)
            throw ParseError("expected 4 fields, got " + std::to_string(fields->size()),
                             reader.line());
        const std::string& id = (*fields)[0];
        if (id.empty()) throw ParseError("empty id", reader.line());
        if (!ids.insert(id).second) throw ParseError("duplicate id \"" + id + "\"", reader.line());
        const std::int64_t raw_cat = detail::parse_int((*fields)[1], "category", reader.line());
        if (raw_cat < 1)
            throw ParseError("category index must be >= 1, got " + std::to_string(raw_cat),
                             reader.line());
        const int category = static_cast<int>(raw_cat);
        const bool tested = detail::parse_bool((*fields)[2], "tested", reader.line());
        const std::string& result = (*fields)[3];
        if (tested && result.empty())
            throw ParseError("tested row is missing its result", reader.line());
        if (!tested && !result.empty())
            throw ParseError("untested row carries a result", reader.line());

        ++rows;
        max_category = std::max(max_category, category);
        if (tested) {
            const bool positive = detail::parse_bool(result, "result", reader.line());
            auto& tally = tallies[category];
            (positive ? tally.first : tally.second) += 1;
        }
    }
    if (rows == 0) throw ParseError("no records: line list has no data rows");
    const std::int64_t n = census.value_or(rows);
    if (census && *census < rows)
        throw ValidationError("census " + std::to_string(*census) + " is smaller than the " +
                              std::to_string(rows) + " listed individuals");

    std::vector<std::int64_t> positive(static_cast<std::size_t>(max_category), 0);
    std::vector<std::int64_t> negative(static_cast<std::size_t>(max_category), 0);
    for (const auto& [category, tally] : tallies) {
        positive[static_cast<std::size_t>(category - 1)] = tally.first;
        negative[static_cast<std::size_t>(category - 1)] = tally.second;
    }
    return TestedCounts::create(n, std::move(positive), std::move(negative));
}

// ---------------------------------------------------------------------------
// Population spec: JSON with M, N, per-category [not-infected, infected]
// pairs of cell proportions and testing probabilities.
// ---------------------------------------------------------------------------

/// Accepted shape:
///   {"M": 4, "N": 1000000,
///    "p":         [[0.45, 0.05], ...],   // cell proportions, M pairs
///    "test_prob": [[0.001, 0.001], ...], // testing probabilities, M pairs
///    "note": "optional free text"}
/// Proportions must sum to 1 within 1e-9; a file that fails is rejected, never
/// renormalized. A note, when present, is reported through `note`.
inline PopulationSpec parse_population_spec(std::istream& in, std::string* note = nullptr) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(std::string("invalid JSON: ") + e.what());
    }
    if (!doc.is_object()) throw ParseError("population spec must be a JSON object");
    for (const char* key : {"M", "N", "p", "test_prob"})
        if (!doc.contains(key)) throw ParseError(std::string("missing field \"") + key + "\"");

    if (!doc["M"].is_number_integer() || !doc["N"].is_number_integer())
        throw ParseError("\"M\" and \"N\" must be integers");
    const auto m = doc["M"].get<std::int64_t>();
    const auto n = doc["N"].get<std::int64_t>();

    auto read_pairs = [&](const char* key) {
        const auto& arr = doc[key];
        if (!arr.is_array() || static_cast<std::int64_t>(arr.size()) != m)
            throw ParseError(std::string("\"") + key + "\" must be an array of M=" +
                             std::to_string(m) + " pairs");
        std::vector<double> flat;
        flat.reserve(static_cast<std::size_t>(2 * m));
        for (const auto& pair : arr) {
            if (!pair.is_array() || pair.size() != 2)
                throw ParseError(std::string("every \"") + key +
                                 "\" entry must be a [not-infected, infected] pair");
            for (const auto& v : pair) {
                if (!v.is_number())
                    throw ParseError(std::string("non-numeric value in \"") + key + "\"");
                flat.push_back(v.get<double>());
            }
        }
        return flat;
    };

    auto props = read_pairs("p");
    auto probs = read_pairs("test_prob");
    if (note) {
        note->clear();
        if (doc.contains("note")) {
            if (!doc["note"].is_string()) throw ParseError("\"note\" must be a string");
            *note = doc["note"].get<std::string>();
        }
    }
    // File inputs get a looser simplex tolerance than in-memory construction:
    // hand-edited decimals rarely sum to 1 at machine precision.
    return PopulationSpec::create(n, std::move(props), std::move(probs), 1e-9);
}

/// Emits the parse_population_spec shape. Doubles are written with shortest
/// round-trip precision, so parse(serialize(spec)) reproduces spec exactly.
inline std::string serialize_population_spec(const PopulationSpec& spec,
                                             const std::string& note = {}) {
    nlohmann::ordered_json doc;
    doc["M"] = spec.num_categories();
    doc["N"] = spec.census();
    nlohmann::ordered_json p = nlohmann::ordered_json::array();
    nlohmann::ordered_json q = nlohmann::ordered_json::array();
    for (int s = 1; s <= spec.num_categories(); ++s) {
        p.push_back({spec.cell_prop(s, 0), spec.cell_prop(s, 1)});
        q.push_back({spec.cell_test_prob(s, 0), spec.cell_test_prob(s, 1)});
    }
    doc["p"] = std::move(p);
    doc["test_prob"] = std::move(q);
    if (!note.empty()) doc["note"] = note;
    return doc.dump(2) + "\n";
}

} // namespace prevcorr
