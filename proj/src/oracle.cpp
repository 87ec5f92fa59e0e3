#include "cpq/oracle.hpp"

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <fstream>
#include <sstream>
#include <unordered_set>

#include <json.hpp>

#include "cpq/error.hpp"

namespace cpq {

namespace {

QueryRecord parse_record_line(const std::string& line, const std::string& origin,
                              std::size_t line_no) {
    const auto where = origin + ":" + std::to_string(line_no);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::parse_error, where + ": " + e.what());
    }
    if (!j.is_object())
        throw Error(ErrorKind::parse_error, where + ": record is not an object");
    QueryRecord rec;
    if (!j.contains("id") || !j["id"].is_string())
        throw Error(ErrorKind::parse_error, where + ": missing string field 'id'");
    rec.id = j["id"].get<std::string>();
    if (j.contains("truth")) {
        if (!j["truth"].is_number_integer())
            throw Error(ErrorKind::parse_error, where + ": 'truth' must be an integer");
        rec.truth = j["truth"].get<LabelId>();
    }
    if (!j.contains("samples") || !j["samples"].is_array())
        throw Error(ErrorKind::parse_error, where + ": missing array field 'samples'");
    for (const auto& s : j["samples"]) {
        if (!s.is_number_integer())
            throw Error(ErrorKind::parse_error, where + ": sample labels must be integers");
        rec.samples.push_back(s.get<LabelId>());
    }
    if (rec.samples.empty())
        throw Error(ErrorKind::parse_error, where + ": record has no samples");
    return rec;
}

} // namespace

std::vector<QueryRecord> parse_records(const std::string& text, const std::string& origin) {
    std::vector<QueryRecord> records;
    std::unordered_set<std::string> ids;
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        QueryRecord rec = parse_record_line(line, origin, line_no);
        if (!ids.insert(rec.id).second)
            throw Error(ErrorKind::duplicate_id,
                        origin + ":" + std::to_string(line_no) + ": duplicate id '" +
                            rec.id + "'");
        records.push_back(std::move(rec));
    }
    return records;
}

std::vector<QueryRecord> load_records(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw Error(ErrorKind::io, "cannot open " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_records(buf.str(), path);
}

std::string record_to_json_line(const QueryRecord& record) {
    nlohmann::ordered_json j;
    j["id"] = record.id;
    if (record.truth) j["truth"] = *record.truth;
    j["samples"] = record.samples;
    return j.dump();
}

void SyntheticOracle::add_input(const std::string& id, DiscreteDistribution dist) {
    dists_.insert_or_assign(id, std::move(dist));
}

std::optional<LabelId> SyntheticOracle::next_sample(const std::string& input_id) {
    const auto it = dists_.find(input_id);
    if (it == dists_.end())
        throw Error(ErrorKind::invalid_input, "unknown input '" + input_id + "'");
    auto st = streams_.find(input_id);
    if (st == streams_.end()) {
        const std::uint64_t seed = derive_seed(master_seed_, fnv1a64(input_id));
        st = streams_.emplace(input_id, make_rng(seed)).first;
    }
    return sample(it->second, st->second);
}

ReplayOracle::ReplayOracle(const std::vector<QueryRecord>& records) {
    for (const auto& rec : records) cursors_.emplace(rec.id, Cursor{&rec});
}

std::optional<LabelId> ReplayOracle::next_sample(const std::string& input_id) {
    const auto it = cursors_.find(input_id);
    if (it == cursors_.end())
        throw Error(ErrorKind::invalid_input, "unknown input '" + input_id + "'");
    Cursor& cur = it->second;
    if (cur.next >= cur.record->samples.size()) return std::nullopt;
    return cur.record->samples[cur.next++];
}

void ReplayOracle::reset() {
    for (auto& [id, cur] : cursors_) cur.next = 0;
}

ExternalOracle::ExternalOracle(const std::string& command, int timeout_ms)
    : timeout_ms_(timeout_ms) {
    int to_child[2];   // parent writes requests
    int from_child[2]; // parent reads responses
    if (pipe(to_child) != 0 || pipe(from_child) != 0)
        throw Error(ErrorKind::oracle_io, "pipe() failed");
    const pid_t pid = fork();
    if (pid < 0)
        throw Error(ErrorKind::oracle_io, "fork() failed");
    if (pid == 0) {
        dup2(to_child[0], STDIN_FILENO);
        dup2(from_child[1], STDOUT_FILENO);
        close(to_child[0]);
        close(to_child[1]);
        close(from_child[0]);
        close(from_child[1]);
        execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
        _exit(127);
    }
    close(to_child[0]);
    close(from_child[1]);
    pid_ = pid;
    to_child_ = to_child[1];
    from_child_ = from_child[0];
    // A dead child must surface as oracle_io on the next write, not kill us.
    signal(SIGPIPE, SIG_IGN);
}

ExternalOracle::~ExternalOracle() {
    if (to_child_ >= 0) close(to_child_);
    if (from_child_ >= 0) close(from_child_);
    if (pid_ > 0) {
        int status = 0;
        if (waitpid(static_cast<pid_t>(pid_), &status, WNOHANG) == 0) {
            kill(static_cast<pid_t>(pid_), SIGTERM);
            waitpid(static_cast<pid_t>(pid_), &status, 0);
        }
    }
}

std::string ExternalOracle::read_line() {
    for (;;) {
        const auto nl = buffer_.find('\n');
        if (nl != std::string::npos) {
            std::string line = buffer_.substr(0, nl);
            buffer_.erase(0, nl + 1);
            return line;
        }
        pollfd pfd{from_child_, POLLIN, 0};
        const int rc = poll(&pfd, 1, timeout_ms_);
        if (rc == 0)
            throw Error(ErrorKind::oracle_io, "oracle response timed out");
        if (rc < 0)
            throw Error(ErrorKind::oracle_io, "poll() failed");
        char chunk[4096];
        const ssize_t n = read(from_child_, chunk, sizeof chunk);
        if (n <= 0)
            throw Error(ErrorKind::oracle_io, "oracle closed its output");
        buffer_.append(chunk, static_cast<std::size_t>(n));
    }
}

std::optional<LabelId> ExternalOracle::next_sample(const std::string& input_id) {
    nlohmann::ordered_json req;
    req["id"] = input_id;
    req["n"] = 1;
    const std::string line = req.dump() + "\n";
    std::size_t off = 0;
    while (off < line.size()) {
        const ssize_t n = write(to_child_, line.data() + off, line.size() - off);
        if (n <= 0)
            throw Error(ErrorKind::oracle_io, "cannot write to oracle process");
        off += static_cast<std::size_t>(n);
    }
    const std::string resp = read_line();
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(resp);
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::oracle_io, std::string("bad oracle response: ") + e.what());
    }
    if (!j.is_object() || !j.contains("label") || !j["label"].is_number_integer())
        throw Error(ErrorKind::oracle_io, "oracle response lacks integer 'label'");
    return j["label"].get<LabelId>();
}

} // namespace cpq
