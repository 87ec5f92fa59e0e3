#pragma once

#include <memory>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "cpq/distribution.hpp"

namespace cpq {

// One labeled input with its recorded query results. `samples` holds oracle
// draws in the order they were produced; replay oracles hand them back in
// the same order. `truth` may be absent for prediction-only inputs.
struct QueryRecord {
    std::string id;
    std::optional<LabelId> truth;
    std::vector<LabelId> samples;
};

// Parses one record per line. Unknown fields are ignored; malformed lines,
// empty sample arrays and duplicate ids are errors naming the line.
std::vector<QueryRecord> load_records(const std::string& path);
std::vector<QueryRecord> parse_records(const std::string& text,
                                       const std::string& origin = "<memory>");

// Canonical single-line serialization; load/parse of the output
// reproduces the record byte for byte.
std::string record_to_json_line(const QueryRecord& record);

// Source of label draws for a given input id. next_sample returns nullopt
// once the source cannot supply more (finite replay logs); transport and
// protocol failures throw Error(oracle_io).
class QueryOracle {
public:
    virtual ~QueryOracle() = default;
    virtual std::optional<LabelId> next_sample(const std::string& input_id) = 0;
};

// Draws from a known per-input distribution. Each input gets its own
// substream seeded by mixing the master seed with a hash of the input id,
// so results do not depend on the order inputs are queried in.
class SyntheticOracle final : public QueryOracle {
public:
    explicit SyntheticOracle(std::uint64_t master_seed) : master_seed_(master_seed) {}

    void add_input(const std::string& id, DiscreteDistribution dist);
    std::optional<LabelId> next_sample(const std::string& input_id) override;

private:
    std::uint64_t master_seed_;
    std::unordered_map<std::string, DiscreteDistribution> dists_;
    std::unordered_map<std::string, RngState> streams_;
};

// Replays recorded samples in order; exhausted inputs yield nullopt.
// Holds a reference to the records, which must outlive the oracle.
class ReplayOracle final : public QueryOracle {
public:
    explicit ReplayOracle(const std::vector<QueryRecord>& records);

    std::optional<LabelId> next_sample(const std::string& input_id) override;
    void reset();

private:
    struct Cursor {
        const QueryRecord* record;
        std::size_t next = 0;
    };
    std::unordered_map<std::string, Cursor> cursors_;
};

// Bridges to a child process speaking line-delimited JSON on stdio:
// request {"id": "...", "n": 1}, response {"label": <integer>}. A response
// that does not arrive within the timeout, fails to parse, or follows a
// dead pipe raises Error(oracle_io).
class ExternalOracle final : public QueryOracle {
public:
    explicit ExternalOracle(const std::string& command, int timeout_ms = 30000);
    ~ExternalOracle() override;

    ExternalOracle(const ExternalOracle&) = delete;
    ExternalOracle& operator=(const ExternalOracle&) = delete;

    std::optional<LabelId> next_sample(const std::string& input_id) override;

private:
    std::string read_line();

    long pid_ = -1;
    int to_child_ = -1;
    int from_child_ = -1;
    int timeout_ms_;
    std::string buffer_;
};

} // namespace cpq
