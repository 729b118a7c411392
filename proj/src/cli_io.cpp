#include "ridge_relay/cli_io.hpp"

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <charconv>
#include <cmath>
#include <csignal>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

namespace ridge_relay {

using nlohmann::json;

// ---------------------------------------------------------------------- CSV

namespace {

std::string trim(std::string_view s) {
    std::size_t b = 0, e = s.size();
    while (b < e && (s[b] == ' ' || s[b] == '\t')) ++b;
    while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t' || s[e - 1] == '\r')) --e;
    return std::string(s.substr(b, e - b));
}

// RFC 4180-ish: commas, optional double quotes with "" escapes, no embedded newlines.
std::vector<std::string> split_csv_line(std::string_view line, const std::string& where) {
    std::vector<std::string> cells;
    std::string cell;
    bool quoted = false, was_quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cell += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cell += c;
            }
        } else if (c == '"' && trim(cell).empty()) {
            quoted = was_quoted = true;
            cell.clear();
        } else if (c == ',') {
            cells.push_back(was_quoted ? cell : trim(cell));
            cell.clear();
            was_quoted = false;
        } else if (was_quoted) {
            if (c != ' ' && c != '\t' && c != '\r')
                throw CsvError(where + ": unexpected text after a quoted cell");
        } else {
            cell += c;
        }
    }
    if (quoted) throw CsvError(where + ": unterminated quote");
    cells.push_back(was_quoted ? cell : trim(cell));
    return cells;
}

std::optional<double> parse_number(std::string_view text) {
    if (!text.empty() && text.front() == '+') text.remove_prefix(1);
    if (text.empty()) return std::nullopt;
    double value = 0.0;
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc() || ptr != text.data() + text.size()) return std::nullopt;
    return value;
}

}  // namespace

CsvTable parse_csv(const std::string& text, const std::string& source) {
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    CsvTable table;
    std::vector<std::vector<double>> rows;
    bool have_header = false;

    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        const std::string where = source + ":" + std::to_string(line_no);
        auto cells = split_csv_line(line, where);
        if (!have_header) {
            std::set<std::string> seen;
            for (const auto& name : cells) {
                if (name.empty()) throw CsvError(where + ": empty column name in header");
                if (parse_number(name))
                    throw CsvError(where + ": header cell '" + name +
                                   "' is numeric; a header row is required");
                if (!seen.insert(name).second)
                    throw CsvError(where + ": duplicate column '" + name + "'");
            }
            table.header = std::move(cells);
            have_header = true;
            continue;
        }
        if (cells.size() != table.header.size())
            throw CsvError(where + ": expected " + std::to_string(table.header.size()) +
                           " cells, found " + std::to_string(cells.size()));
        std::vector<double> row;
        row.reserve(cells.size());
        for (std::size_t j = 0; j < cells.size(); ++j) {
            const auto value = parse_number(cells[j]);
            if (!value || !std::isfinite(*value))
                throw CsvError(where + ": column '" + table.header[j] + "' has non-numeric value '" +
                               cells[j] + "'");
            row.push_back(*value);
        }
        rows.push_back(std::move(row));
    }
    if (!have_header) throw CsvError(source + ": empty file, a header row is required");
    table.values.resize(static_cast<Eigen::Index>(rows.size()),
                        static_cast<Eigen::Index>(table.header.size()));
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < rows[i].size(); ++j)
            table.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    return table;
}

CsvTable read_csv(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CsvError("cannot open " + path.string());
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return parse_csv(buffer.str(), path.string());
}

Batch batch_from_table(const CsvTable& table, const std::string& response, Family family, int t) {
    const auto it = std::find(table.header.begin(), table.header.end(), response);
    if (it == table.header.end()) throw CsvError("response column '" + response + "' not found");
    if (table.values.rows() == 0) throw CsvError("batch has no data rows");
    const auto r = static_cast<Eigen::Index>(it - table.header.begin());
    auto [names, X] = design_from_table(table, response);
    if (names.empty()) throw CsvError("batch has no covariate columns");
    Eigen::VectorXd y = table.values.col(r);
    try {
        return Batch(t, std::move(X), std::move(y), std::move(names), family);
    } catch (const ValidationError& e) {
        throw CsvError(e.what());
    }
}

std::pair<std::vector<std::string>, Eigen::MatrixXd> design_from_table(
    const CsvTable& table, const std::optional<std::string>& response) {
    std::vector<std::string> names;
    std::vector<Eigen::Index> columns;
    for (std::size_t j = 0; j < table.header.size(); ++j) {
        if (response && table.header[j] == *response) continue;
        names.push_back(table.header[j]);
        columns.push_back(static_cast<Eigen::Index>(j));
    }
    Eigen::MatrixXd X(table.values.rows(), static_cast<Eigen::Index>(columns.size()));
    for (std::size_t k = 0; k < columns.size(); ++k)
        X.col(static_cast<Eigen::Index>(k)) = table.values.col(columns[k]);
    return {std::move(names), std::move(X)};
}

std::string format_double(double value) {
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
    if (ec != std::errc()) throw std::runtime_error("double formatting failed");
    return std::string(buf, ptr);
}

// -------------------------------------------------------------------- state

json encode_double(double value) {
    if (std::isfinite(value)) return value;
    if (std::isnan(value)) return std::signbit(value) ? "-nan" : "nan";
    return value > 0 ? "inf" : "-inf";
}

double decode_double(const json& node) {
    if (node.is_number()) return node.get<double>();
    if (node.is_string()) {
        const auto& s = node.get_ref<const std::string&>();
        if (s == "inf") return std::numeric_limits<double>::infinity();
        if (s == "-inf") return -std::numeric_limits<double>::infinity();
        if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
        if (s == "-nan") return -std::numeric_limits<double>::quiet_NaN();
    }
    throw StateError("expected a number, got " + node.dump());
}

namespace {

json encode_doubles(std::span<const double> values) {
    json out = json::array();
    for (double v : values) out.push_back(encode_double(v));
    return out;
}

std::vector<double> decode_doubles(const json& node) {
    if (!node.is_array()) throw StateError("expected an array of numbers");
    std::vector<double> out;
    out.reserve(node.size());
    for (const auto& v : node) out.push_back(decode_double(v));
    return out;
}

json encode_batch(const Batch& batch) {
    json rows = json::array();
    for (Eigen::Index i = 0; i < batch.n(); ++i) {
        json row = json::array();
        for (Eigen::Index j = 0; j < batch.p(); ++j) row.push_back(encode_double(batch.X()(i, j)));
        rows.push_back(std::move(row));
    }
    return {{"t", batch.t()},
            {"family", std::string(to_string(batch.family()))},
            {"covariates", batch.covariates()},
            {"X", std::move(rows)},
            {"y", encode_doubles({batch.y().data(), static_cast<std::size_t>(batch.y().size())})}};
}

std::shared_ptr<const Batch> decode_batch(const json& node) {
    const auto covariates = node.at("covariates").get<std::vector<std::string>>();
    const auto y_values = decode_doubles(node.at("y"));
    const auto& rows = node.at("X");
    Eigen::MatrixXd X(static_cast<Eigen::Index>(rows.size()),
                      static_cast<Eigen::Index>(covariates.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto row = decode_doubles(rows[i]);
        if (row.size() != covariates.size()) throw StateError("retained batch row has wrong width");
        for (std::size_t j = 0; j < row.size(); ++j)
            X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = row[j];
    }
    Eigen::VectorXd y = Eigen::Map<const Eigen::VectorXd>(y_values.data(),
                                                          static_cast<Eigen::Index>(y_values.size()));
    return std::make_shared<const Batch>(node.at("t").get<int>(), std::move(X), std::move(y),
                                         covariates, parse_family(node.at("family").get<std::string>()));
}

json encode_history(const HistoryRecord& record) {
    return {{"t", record.t},
            {"lambda", encode_double(record.lambda)},
            {"weights", encode_doubles(record.weights)},
            {"estimate", to_json(record.estimate)},
            {"observed", record.observed},
            {"target_used", to_json(record.target_used)},
            {"fit_loss", encode_double(record.fit_loss)},
            {"iterations", record.iterations},
            {"selection", record.selection ? to_json(*record.selection) : json(nullptr)}};
}

HistoryRecord decode_history(const json& node) {
    HistoryRecord record;
    record.t = node.at("t").get<int>();
    record.lambda = decode_double(node.at("lambda"));
    record.weights = decode_doubles(node.at("weights"));
    record.estimate = coefficients_from_json(node.at("estimate"));
    record.observed = node.at("observed").get<std::vector<std::string>>();
    record.target_used = coefficients_from_json(node.at("target_used"));
    record.fit_loss = decode_double(node.at("fit_loss"));
    record.iterations = node.at("iterations").get<int>();
    if (!node.at("selection").is_null()) record.selection = selection_from_json(node.at("selection"));
    return record;
}

}  // namespace

json to_json(const CoefficientVector& vector) {
    json out = json::object();
    for (const auto& [name, value] : vector.values()) out[name] = encode_double(value);
    return out;
}

CoefficientVector coefficients_from_json(const json& node) {
    if (!node.is_object()) throw StateError("coefficient vector must be an object");
    std::map<std::string, double> values;
    for (const auto& [name, value] : node.items()) values[name] = decode_double(value);
    try {
        return CoefficientVector(std::move(values));
    } catch (const ValidationError& e) {
        throw StateError(e.what());
    }
}

json to_json(const SelectionReport& report) {
    json curve = json::array();
    for (const auto& point : report.cv_curve)
        curve.push_back({{"lambda", encode_double(point.lambda)},
                         {"weights", encode_doubles(point.weights)},
                         {"score", encode_double(point.score)},
                         {"feasible", point.feasible},
                         {"lhs", encode_double(point.lhs)},
                         {"rhs", encode_double(point.rhs)}});
    return {{"chosen_lambda", encode_double(report.chosen_lambda)},
            {"chosen_weights", encode_doubles(report.chosen_weights)},
            {"cv_curve", std::move(curve)},
            {"constrained", report.constrained},
            {"constraint_evaluated", report.constraint_evaluated},
            {"fallback_used", report.fallback_used},
            {"f_t", encode_double(report.f_t)},
            {"folds", report.folds}};
}

SelectionReport selection_from_json(const json& node) {
    SelectionReport report;
    report.chosen_lambda = decode_double(node.at("chosen_lambda"));
    report.chosen_weights = decode_doubles(node.at("chosen_weights"));
    for (const auto& p : node.at("cv_curve")) {
        CvPoint point;
        point.lambda = decode_double(p.at("lambda"));
        point.weights = decode_doubles(p.at("weights"));
        point.score = decode_double(p.at("score"));
        point.feasible = p.at("feasible").get<bool>();
        point.lhs = decode_double(p.at("lhs"));
        point.rhs = decode_double(p.at("rhs"));
        report.cv_curve.push_back(std::move(point));
    }
    report.constrained = node.at("constrained").get<bool>();
    report.constraint_evaluated = node.at("constraint_evaluated").get<bool>();
    report.fallback_used = node.at("fallback_used").get<bool>();
    report.f_t = decode_double(node.at("f_t"));
    report.folds = node.at("folds").get<int>();
    return report;
}

json to_json(const EstimatorState& state) {
    json history = json::array();
    for (const auto& record : state.history) history.push_back(encode_history(record));
    json retained = json::array();
    for (const auto& batch : state.retained) retained.push_back(encode_batch(*batch));
    return {{"schema", kStateSchema},
            {"family", std::string(to_string(state.family))},
            {"t", state.t},
            {"registry", state.registry.names()},
            {"current", to_json(state.current)},
            {"init_target", to_json(state.init_target)},
            {"init_note", state.init_note},
            {"history", std::move(history)},
            {"retained", std::move(retained)}};
}

EstimatorState state_from_json(const json& node) {
    try {
        if (!node.is_object() || !node.contains("schema") || node.at("schema") != kStateSchema)
            throw StateError(std::string("state document lacks schema '") + kStateSchema + "'");
        EstimatorState state;
        state.family = parse_family(node.at("family").get<std::string>());
        state.t = node.at("t").get<int>();
        state.registry = CovariateRegistry(node.at("registry").get<std::vector<std::string>>());
        state.current = coefficients_from_json(node.at("current"));
        state.init_target = coefficients_from_json(node.at("init_target"));
        state.init_note = node.at("init_note").get<std::string>();
        for (const auto& record : node.at("history")) state.history.push_back(decode_history(record));
        for (const auto& batch : node.at("retained")) state.retained.push_back(decode_batch(batch));
        state.check_invariants();
        return state;
    } catch (const StateError&) {
        throw;
    } catch (const json::exception& e) {
        throw StateError(std::string("malformed state document: ") + e.what());
    } catch (const RelayError& e) {
        throw StateError(std::string("invalid state document: ") + e.what());
    }
}

std::string serialize_state(const EstimatorState& state) { return to_json(state).dump(1, '\t') + "\n"; }

EstimatorState parse_state(const std::string& text) {
    json node;
    try {
        node = json::parse(text);
    } catch (const json::parse_error& e) {
        throw StateError(std::string("state file is not valid JSON: ") + e.what());
    }
    return state_from_json(node);
}

void maybe_kill_at(const char* point) {
    const char* wanted = std::getenv("RIDGE_RELAY_KILL_POINT");
    if (wanted && std::strcmp(wanted, point) == 0) std::raise(SIGKILL);
}

void write_file_atomic(const std::filesystem::path& path, const std::string& contents) {
    const auto dir = path.has_parent_path() ? path.parent_path() : std::filesystem::path(".");
    const auto tmp = dir / ("." + path.filename().string() + ".tmp." + std::to_string(::getpid()));
    const int fd = ::open(tmp.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
    if (fd < 0) throw StateError("cannot create " + tmp.string() + ": " + std::strerror(errno));
    std::size_t written = 0;
    while (written < contents.size()) {
        const ssize_t n = ::write(fd, contents.data() + written, contents.size() - written);
        if (n < 0) {
            if (errno == EINTR) continue;
            const std::string reason = std::strerror(errno);
            ::close(fd);
            ::unlink(tmp.c_str());
            throw StateError("write to " + tmp.string() + " failed: " + reason);
        }
        written += static_cast<std::size_t>(n);
    }
    if (::fsync(fd) != 0 || ::close(fd) != 0) {
        ::unlink(tmp.c_str());
        throw StateError("cannot flush " + tmp.string());
    }
    maybe_kill_at("before-rename");
    if (::rename(tmp.c_str(), path.c_str()) != 0) {
        const std::string reason = std::strerror(errno);
        ::unlink(tmp.c_str());
        throw StateError("cannot replace " + path.string() + ": " + reason);
    }
    const int dfd = ::open(dir.c_str(), O_RDONLY | O_DIRECTORY);
    if (dfd >= 0) {
        ::fsync(dfd);
        ::close(dfd);
    }
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw StateError("cannot open " + path.string());
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

void write_state(const std::filesystem::path& path, const EstimatorState& state) {
    state.check_invariants();
    write_file_atomic(path, serialize_state(state));
}

EstimatorState read_state(const std::filesystem::path& path) { return parse_state(read_file(path)); }

StateLock::StateLock(const std::filesystem::path& state_path) {
    const auto lock_path = state_path.string() + ".lock";
    fd_ = ::open(lock_path.c_str(), O_RDWR | O_CREAT, 0644);
    if (fd_ < 0) throw LockError("cannot open lock file " + lock_path + ": " + std::strerror(errno));
    if (::flock(fd_, LOCK_EX | LOCK_NB) != 0) {
        ::close(fd_);
        fd_ = -1;
        throw LockError("state file " + state_path.string() + " is locked by another process");
    }
}

StateLock::~StateLock() {
    if (fd_ >= 0) {
        ::flock(fd_, LOCK_UN);
        ::close(fd_);
    }
}

// ---------------------------------------------------------------- plot data

void PlotDataset::add_column(std::string column, std::vector<double> values) {
    columns.emplace_back(std::move(column), std::move(values));
}

void PlotDataset::validate() const {
    if (name.empty()) throw ValidationError("plot dataset needs a name");
    std::set<std::string> seen;
    for (const auto& [column, values] : columns) {
        if (!seen.insert(column).second) throw ValidationError("duplicate plot column '" + column + "'");
        if (values.size() != rows()) throw ValidationError("plot column '" + column + "' has a different length");
    }
}

std::string PlotDataset::to_csv() const {
    validate();
    std::string out;
    for (std::size_t j = 0; j < columns.size(); ++j) out += (j ? "," : "") + columns[j].first;
    out += '\n';
    for (std::size_t i = 0; i < rows(); ++i) {
        for (std::size_t j = 0; j < columns.size(); ++j)
            out += (j ? "," : "") + format_double(columns[j].second[i]);
        out += '\n';
    }
    return out;
}

std::string PlotDataset::metadata_json() const {
    json meta = {{"name", name}, {"rows", rows()}};
    json names = json::array();
    for (const auto& column : columns) names.push_back(column.first);
    meta["columns"] = std::move(names);
    meta["metadata"] = metadata;
    return meta.dump(2) + "\n";
}

void write_plot_dataset(const std::filesystem::path& dir, const PlotDataset& dataset) {
    std::filesystem::create_directories(dir);
    write_file_atomic(dir / (dataset.name + ".csv"), dataset.to_csv());
    write_file_atomic(dir / (dataset.name + ".meta.json"), dataset.metadata_json());
}

PlotDataset quantile_dataset(const TrajectoryResult& result) {
    PlotDataset ds;
    ds.name = result.label + "_quantiles";
    std::vector<double> t, coord, truth, q05, q50, q95, defined;
    for (std::size_t c = 0; c < result.tracked.size(); ++c) {
        for (std::size_t k = 0; k < result.batches(); ++k) {
            t.push_back(static_cast<double>(k + 1));
            coord.push_back(result.tracked[c]);
            truth.push_back(result.truth[result.tracked[c] - 1]);
            q05.push_back(result.quantiles[k][c].q05);
            q50.push_back(result.quantiles[k][c].q50);
            q95.push_back(result.quantiles[k][c].q95);
            defined.push_back(result.defined_count[k]);
        }
    }
    ds.add_column("t", std::move(t));
    ds.add_column("coordinate", std::move(coord));
    ds.add_column("truth", std::move(truth));
    ds.add_column("q05", std::move(q05));
    ds.add_column("q50", std::move(q50));
    ds.add_column("q95", std::move(q95));
    ds.add_column("replicates", std::move(defined));
    ds.metadata["estimator"] = result.label;
    return ds;
}

PlotDataset mse_dataset(const std::string& name, const std::vector<const TrajectoryResult*>& results) {
    PlotDataset ds;
    ds.name = name;
    if (results.empty()) return ds;
    std::vector<double> t(results.front()->batches());
    for (std::size_t k = 0; k < t.size(); ++k) t[k] = static_cast<double>(k + 1);
    ds.add_column("t", std::move(t));
    for (const auto* result : results) ds.add_column(result->label, result->mean_loss);
    return ds;
}

PlotDataset cv_curve_dataset(const std::string& name, const SelectionReport& report) {
    PlotDataset ds;
    ds.name = name;
    std::vector<double> lambda, score, feasible, lhs, rhs;
    const std::size_t groups = report.chosen_weights.size();
    std::vector<std::vector<double>> weights(groups);
    for (const auto& point : report.cv_curve) {
        lambda.push_back(point.lambda);
        score.push_back(point.score);
        feasible.push_back(point.feasible ? 1.0 : 0.0);
        lhs.push_back(point.lhs);
        rhs.push_back(point.rhs);
        for (std::size_t g = 0; g < groups; ++g)
            weights[g].push_back(g < point.weights.size() ? point.weights[g] : std::nan(""));
    }
    ds.add_column("lambda", std::move(lambda));
    for (std::size_t g = 0; g < groups; ++g) ds.add_column("weight_" + std::to_string(g + 1), std::move(weights[g]));
    ds.add_column("score", std::move(score));
    ds.add_column("feasible", std::move(feasible));
    ds.add_column("lhs", std::move(lhs));
    ds.add_column("rhs", std::move(rhs));
    ds.metadata["chosen_lambda"] = format_double(report.chosen_lambda);
    ds.metadata["constrained"] = report.constrained ? "true" : "false";
    ds.metadata["fallback_used"] = report.fallback_used ? "true" : "false";
    ds.metadata["folds"] = std::to_string(report.folds);
    return ds;
}

PlotDataset moment_dataset(const std::string& name, const MomentReport& report) {
    PlotDataset ds;
    ds.name = name;
    const auto p = report.mean.size();
    std::vector<double> index(static_cast<std::size_t>(p)), mean(index.size()), var(index.size());
    for (Eigen::Index j = 0; j < p; ++j) {
        index[static_cast<std::size_t>(j)] = static_cast<double>(j + 1);
        mean[static_cast<std::size_t>(j)] = report.mean[j];
        var[static_cast<std::size_t>(j)] = report.covariance(j, j);
    }
    ds.add_column("coordinate", std::move(index));
    ds.add_column("mean", std::move(mean));
    ds.add_column("variance", std::move(var));
    ds.metadata["sigma_sq"] = format_double(report.sigma_sq);
    return ds;
}

// ----------------------------------------------------------------- scenario

ScenarioConfig scenario_from_json(const json& node) {
    try {
        if (!node.is_object()) throw ConfigError("scenario config must be an object");
        ScenarioConfig config;
        if (node.contains("preset")) {
            const auto preset = node.at("preset").get<std::string>();
            if (preset == "study1_paper") config = ScenarioConfig::study1_paper();
            else if (preset == "study1_reduced") config = ScenarioConfig::study1_reduced();
            else if (preset == "study2_paper") config = ScenarioConfig::study2_paper(false);
            else if (preset == "study2_paper_empty") config = ScenarioConfig::study2_paper(true);
            else if (preset == "study2_reduced") config = ScenarioConfig::study2_reduced(false);
            else if (preset == "study2_reduced_empty") config = ScenarioConfig::study2_reduced(true);
            else throw ConfigError("unknown preset '" + preset + "'");
        }
        for (const auto& [key, value] : node.items()) {
            if (key == "preset") continue;
            else if (key == "study") config.study = value.get<std::string>();
            else if (key == "p") config.p = value.get<int>();
            else if (key == "n") config.n = value.get<int>();
            else if (key == "beta") config.beta = value.get<std::vector<double>>();
            else if (key == "noise_var") config.noise_var = value.get<double>();
            else if (key == "n_batches") config.n_batches = value.get<int>();
            else if (key == "empty_every") config.empty_every = value.get<int>();
            else if (key == "n_replicates") config.n_replicates = value.get<int>();
            else if (key == "seed") config.seed = value.get<std::uint64_t>();
            else if (key == "family") config.family = parse_family(value.get<std::string>());
            else if (key == "init_mode") config.init_mode = parse_init_mode(value.get<std::string>());
            else if (key == "tracked") config.tracked = value.get<std::vector<int>>();
            else if (key == "loocv") config.loocv = value.get<bool>();
            else if (key == "k_folds") config.k_folds = value.get<int>();
            else if (key == "constrained") config.constrained = value.get<bool>();
            else if (key == "grid_min") config.grid_min = value.get<double>();
            else if (key == "grid_max") config.grid_max = value.get<double>();
            else if (key == "grid_points") config.grid_points = value.get<int>();
            else throw ConfigError("unknown scenario key '" + key + "'");
        }
        config.validate();
        return config;
    } catch (const json::exception& e) {
        throw ConfigError(std::string("malformed scenario config: ") + e.what());
    } catch (const ValidationError& e) {
        throw ConfigError(e.what());
    }
}

json to_json(const ScenarioConfig& config) {
    return {{"study", config.study},
            {"p", config.p},
            {"n", config.n},
            {"beta", config.beta},
            {"noise_var", config.noise_var},
            {"n_batches", config.n_batches},
            {"empty_every", config.empty_every},
            {"n_replicates", config.n_replicates},
            {"seed", config.seed},
            {"family", std::string(to_string(config.family))},
            {"init_mode", std::string(to_string(config.init_mode))},
            {"tracked", config.tracked},
            {"loocv", config.loocv},
            {"k_folds", config.k_folds},
            {"constrained", config.constrained},
            {"grid_min", config.grid_min},
            {"grid_max", config.grid_max},
            {"grid_points", config.grid_points}};
}

ScenarioConfig read_scenario(const std::filesystem::path& path) {
    std::string text;
    try {
        text = read_file(path);
    } catch (const StateError& e) {
        throw ConfigError(e.what());
    }
    json node;
    try {
        node = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("scenario config is not valid JSON: ") + e.what());
    }
    return scenario_from_json(node);
}

}  // namespace ridge_relay
