#include "ppde/experiment.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <chrono>
#include <fstream>
#include <iomanip>
#include <map>
#include <mutex>
#include <optional>
#include <ostream>
#include <sstream>
#include <thread>

namespace ppde {

void ExperimentConfig::validate() const {
    if (dims.empty()) throw UsageError("at least one dimension is required");
    for (int d : dims) {
        if (d < 1) throw UsageError("dimensions must be >= 1 (got " + std::to_string(d) + ")");
    }
    if (runs < 1) throw UsageError("runs must be >= 1");
    if (parallel_runs < 1) throw UsageError("parallel runs must be >= 1");
    if (oracle.samples < 2) throw UsageError("oracle samples must be >= 2");
    if (!is_known_problem(scheme.problem)) {
        throw UsageError("unknown problem '" + scheme.problem +
                         "' (expected ControlProblem, AsianOption or BarrierOption)");
    }
    try {
        const TimeGrid grid = TimeGrid::with_step(scheme.problem_params.horizon, step);
        if (grid.steps != scheme.steps) throw UsageError("time steps do not match T / h");
        SchemeConfig probe = scheme;
        probe.dim = dims.front();
        probe.validate();
    } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
    }
}

namespace {

using nlohmann::json;

void finalize(ExperimentConfig& config) {
    try {
        config.scheme.steps =
            TimeGrid::with_step(config.scheme.problem_params.horizon, config.step).steps;
    } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
    }
    config.oracle.step = config.step;
    config.validate();
}

template <typename T>
T json_get(const json& value, const std::string& key) {
    try {
        return value.get<T>();
    } catch (const json::exception&) {
        throw UsageError("config file: bad value for '" + key + "'");
    }
}

template <typename Fn>
auto as_usage(Fn&& fn) {
    try {
        return fn();
    } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
    }
}

}  // namespace

void apply_config_json(ExperimentConfig& config, const std::string& text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::exception& e) {
        throw UsageError(std::string("config file: ") + e.what());
    }
    if (!doc.is_object()) throw UsageError("config file must hold a JSON object");
    SchemeConfig& s = config.scheme;
    for (const auto& [key, value] : doc.items()) {
        if (key == "problem") s.problem = json_get<std::string>(value, key);
        else if (key == "dims") config.dims = json_get<std::vector<int>>(value, key);
        else if (key == "runs") config.runs = json_get<int>(value, key);
        else if (key == "batch") s.batch = json_get<int>(value, key);
        else if (key == "train_steps") s.train_steps = json_get<long>(value, key);
        else if (key == "h") config.step = json_get<double>(value, key);
        else if (key == "T") s.problem_params.horizon = json_get<double>(value, key);
        else if (key == "seed") config.seed = json_get<std::uint64_t>(value, key);
        else if (key == "no_variance_reduction") s.variance_reduction = !json_get<bool>(value, key);
        else if (key == "variance_reduction") s.variance_reduction = json_get<bool>(value, key);
        else if (key == "precision")
            s.precision = as_usage([&] { return parse_precision(json_get<std::string>(value, key)); });
        else if (key == "adam_compat")
            s.adam.variant =
                as_usage([&] { return parse_adam_variant(json_get<std::string>(value, key)); });
        else if (key == "sym_compat")
            s.sym = as_usage([&] { return parse_sym_variant(json_get<std::string>(value, key)); });
        else if (key == "activation")
            s.activation =
                as_usage([&] { return parse_activation(json_get<std::string>(value, key)); });
        else if (key == "width") s.width = json_get<int>(value, key);
        else if (key == "hidden_layers") s.hidden_layers = json_get<int>(value, key);
        else if (key == "oracle_samples") config.oracle.samples = json_get<long long>(value, key);
        else if (key == "oracle_seed") config.oracle.seed = json_get<std::uint64_t>(value, key);
        else if (key == "oracle_cache") config.oracle_cache = json_get<std::string>(value, key);
        else if (key == "skip_reference") config.skip_reference = json_get<bool>(value, key);
        else if (key == "parallel_runs") config.parallel_runs = json_get<int>(value, key);
        else if (key == "out_csv") config.out_csv = json_get<std::string>(value, key);
        else if (key == "out_json") config.out_json = json_get<std::string>(value, key);
        else if (key == "loss_trace") config.loss_trace = json_get<std::string>(value, key);
        else throw UsageError("config file: unknown key '" + key + "'");
    }
}

ExperimentConfig parse_config(const std::vector<std::string>& args) {
    ExperimentConfig config;

    // The config file is applied first so that explicit flags win.
    for (std::size_t k = 0; k < args.size(); ++k) {
        std::string file;
        if (args[k] == "--config" && k + 1 < args.size()) file = args[k + 1];
        else if (args[k].rfind("--config=", 0) == 0) file = args[k].substr(9);
        if (file.empty()) continue;
        std::ifstream in(file);
        if (!in) throw UsageError("cannot read config file '" + file + "'");
        std::stringstream text;
        text << in.rdbuf();
        apply_config_json(config, text.str());
    }

    SchemeConfig& s = config.scheme;
    std::string precision = to_string(s.precision);
    std::string adam = to_string(s.adam.variant);
    std::string sym_variant = to_string(s.sym);
    std::string activation = to_string(s.activation);
    std::string out_csv = config.out_csv.string();
    std::string out_json = config.out_json.string();
    std::string loss_trace = config.loss_trace.string();
    std::string oracle_cache = config.oracle_cache.string();
    std::string config_file;
    bool no_vr = false;

    CLI::App app{"Deep solver for path-dependent PDEs: benchmark runner", "ppde"};
    // --h is the time step, so help gets the long form only.
    app.set_help_flag("--help", "Print this help message and exit");
    app.add_option("--config", config_file, "JSON file with the same keys as the flags");
    app.add_option("--problem", s.problem, "ControlProblem | AsianOption | BarrierOption");
    app.add_option("--dims", config.dims, "Dimensions, e.g. 1,10,100")->delimiter(',');
    app.add_option("--runs", config.runs, "Independent runs per dimension");
    app.add_option("--batch", s.batch, "Batch size O");
    app.add_option("--train-steps", s.train_steps, "Optimizer steps P per time step");
    app.add_option("--h", config.step, "Time step h");
    app.add_option("--T", s.problem_params.horizon, "Horizon T");
    app.add_option("--seed", config.seed, "Seed of run 0; run r uses seed + r");
    app.add_flag("--no-variance-reduction", no_vr, "Plain H_k targets");
    app.add_option("--precision", precision, "f32 | f64");
    app.add_option("--adam-compat", adam, "standard | paper");
    app.add_option("--sym-compat", sym_variant, "paper | code");
    app.add_option("--activation", activation, "relu | tanh | identity");
    app.add_option("--width", s.width, "Hidden width m (0: d + 10)");
    app.add_option("--hidden-layers", s.hidden_layers, "Hidden layers l");
    app.add_option("--oracle-samples", config.oracle.samples, "Monte Carlo reference samples");
    app.add_option("--oracle-seed", config.oracle.seed, "Monte Carlo reference seed");
    app.add_option("--oracle-cache", oracle_cache, "JSON cache of reference prices");
    app.add_flag("--skip-reference", config.skip_reference, "Do not compute reference values");
    app.add_option("--parallel-runs", config.parallel_runs, "Runs solved concurrently");
    app.add_option("--out-csv", out_csv, "Per-run CSV (d,T,N,run,y0,runtime)");
    app.add_option("--out-json", out_json, "Summary as JSON");
    app.add_option("--loss-trace", loss_trace, "Per-iteration losses as JSON lines");

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        throw HelpRequested(app.help());
    } catch (const CLI::ParseError& e) {
        throw UsageError(e.what());
    }

    if (no_vr) s.variance_reduction = false;
    as_usage([&] {
        s.precision = parse_precision(precision);
        s.adam.variant = parse_adam_variant(adam);
        s.sym = parse_sym_variant(sym_variant);
        s.activation = parse_activation(activation);
        return 0;
    });
    config.out_csv = out_csv;
    config.out_json = out_json;
    config.loss_trace = loss_trace;
    config.oracle_cache = oracle_cache;
    finalize(config);
    return config;
}

std::string format_number(double value) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, value);
    return std::string(buf, res.ptr);
}

void write_csv_header(std::ostream& out) { out << kCsvHeader << '\n'; }

void write_csv_row(std::ostream& out, const RunRow& row) {
    out << row.dim << ',' << format_number(row.horizon) << ',' << row.steps << ',' << row.run << ','
        << format_number(row.v0) << ',' << format_number(row.runtime) << '\n';
}

void write_csv(const std::filesystem::path& path, const std::vector<RunRow>& rows) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write CSV '" + path.string() + "'");
    write_csv_header(out);
    for (const auto& row : rows) write_csv_row(out, row);
    if (!out) throw std::runtime_error("error writing CSV '" + path.string() + "'");
}

std::vector<SummaryRow> summarize(const std::vector<RunRow>& rows) {
    std::vector<SummaryRow> out;
    std::map<int, std::vector<const RunRow*>> by_dim;
    std::vector<int> order;
    for (const auto& row : rows) {
        if (!by_dim.count(row.dim)) order.push_back(row.dim);
        by_dim[row.dim].push_back(&row);
    }
    for (int d : order) {
        const auto& group = by_dim[d];
        std::vector<double> values;
        double runtime = 0.0;
        for (const RunRow* r : group) {
            values.push_back(r->v0);
            runtime += r->runtime;
        }
        SummaryRow s;
        s.dim = d;
        s.horizon = group.front()->horizon;
        s.steps = group.front()->steps;
        s.runs = static_cast<int>(group.size());
        if (values.size() >= 2) {
            const SummaryStats stats = summary_stats(values);
            s.mean = stats.mean;
            s.stdev = stats.stdev;
        } else {
            s.mean = values.front();
        }
        s.mean_runtime = runtime / static_cast<double>(group.size());
        out.push_back(s);
    }
    return out;
}

void print_summary_table(std::ostream& out, const std::string& title,
                         const std::vector<SummaryRow>& rows) {
    out << title << '\n';
    out << std::setw(6) << "d" << std::setw(14) << "mean" << std::setw(14) << "stdev"
        << std::setw(14) << "ref. value" << std::setw(16) << "rel. L1 error" << std::setw(14)
        << "runtime (s)" << '\n';
    for (const auto& r : rows) {
        out << std::setw(6) << r.dim << std::setw(14) << std::setprecision(7) << std::fixed
            << r.mean << std::setw(14) << std::scientific << std::setprecision(2) << r.stdev;
        if (r.has_reference) {
            out << std::setw(14) << std::fixed << std::setprecision(7) << r.reference
                << std::setw(16) << std::scientific << std::setprecision(2)
                << r.relative_l1_error;
        } else {
            out << std::setw(14) << "-" << std::setw(16) << "-";
        }
        out << std::setw(14) << std::fixed << std::setprecision(1) << r.mean_runtime << '\n';
        out << std::defaultfloat;
    }
}

std::string summary_json(const ExperimentConfig& config, const std::vector<SummaryRow>& rows) {
    const SchemeConfig& s = config.scheme;
    json doc;
    doc["problem"] = s.problem;
    doc["settings"] = {{"T", s.problem_params.horizon},
                       {"h", config.step},
                       {"N", s.steps},
                       {"batch", s.batch},
                       {"train_steps", s.train_steps},
                       {"hidden_layers", s.hidden_layers},
                       {"width", s.width},
                       {"variance_reduction", s.variance_reduction},
                       {"precision", to_string(s.precision)},
                       {"adam_compat", to_string(s.adam.variant)},
                       {"sym_compat", to_string(s.sym)},
                       {"runs", config.runs},
                       {"seed", config.seed},
                       {"oracle_samples", config.oracle.samples},
                       {"oracle_seed", config.oracle.seed}};
    doc["rows"] = json::array();
    for (const auto& r : rows) {
        json row = {{"d", r.dim},       {"T", r.horizon},
                    {"N", r.steps},     {"runs", r.runs},
                    {"mean", r.mean},   {"stdev", r.stdev},
                    {"mean_runtime", r.mean_runtime}};
        if (r.has_reference) {
            row["reference"] = r.reference;
            row["reference_standard_error"] = r.reference_standard_error;
            row["relative_l1_error"] = r.relative_l1_error;
        } else {
            row["reference"] = nullptr;
        }
        doc["rows"].push_back(row);
    }
    return doc.dump(2);
}

ExperimentResult run_experiment(const ExperimentConfig& config, std::ostream& log) {
    config.validate();

    std::optional<std::ofstream> csv;
    if (!config.out_csv.empty()) {
        csv.emplace(config.out_csv);
        if (!*csv) throw std::runtime_error("cannot write CSV '" + config.out_csv.string() + "'");
        write_csv_header(*csv);
        csv->flush();
    }
    std::optional<std::ofstream> trace_file;
    if (!config.loss_trace.empty()) {
        trace_file.emplace(config.loss_trace);
        if (!*trace_file) {
            throw std::runtime_error("cannot write loss trace '" + config.loss_trace.string() + "'");
        }
    }

    struct Cell {
        int dim;
        int run;
    };
    std::vector<Cell> cells;
    for (int d : config.dims) {
        for (int r = 0; r < config.runs; ++r) cells.push_back({d, r});
    }

    std::mutex mutex;
    std::vector<std::optional<RunRow>> done(cells.size());
    std::size_t flushed = 0;
    ExperimentResult result;

    // Rows are emitted in cell order whatever order runs finish in.
    auto flush_ready = [&] {
        while (flushed < cells.size() && done[flushed]) {
            const RunRow& row = *done[flushed];
            if (csv) {
                write_csv_row(*csv, row);
                csv->flush();
            }
            log << "d=" << row.dim << " run=" << row.run << " y0=" << format_number(row.v0)
                << " runtime=" << std::fixed << std::setprecision(1) << row.runtime
                << std::defaultfloat << "s\n";
            result.rows.push_back(row);
            ++flushed;
        }
    };

    auto run_cell = [&](std::size_t index) {
        const Cell cell = cells[index];
        SchemeConfig scheme = config.scheme;
        scheme.dim = cell.dim;
        scheme.seed = config.seed + static_cast<std::uint64_t>(cell.run);
        LossTrace trace;
        if (trace_file) {
            trace = [&, cell](int step, long iteration, double loss, double lr) {
                const json line = {{"d", cell.dim}, {"run", cell.run}, {"step", step},
                                   {"iteration", iteration}, {"loss", loss}, {"lr", lr}};
                std::lock_guard<std::mutex> lock(mutex);
                *trace_file << line.dump() << '\n';
            };
        }
        const SolverResult solved = solve(scheme, trace);
        RunRow row{cell.dim, scheme.problem_params.horizon, scheme.steps, cell.run, solved.v0,
                   solved.runtime_seconds};
        std::lock_guard<std::mutex> lock(mutex);
        done[index] = row;
        flush_ready();
    };

    const int workers = std::min<int>(config.parallel_runs, static_cast<int>(cells.size()));
    if (workers <= 1) {
        for (std::size_t k = 0; k < cells.size(); ++k) run_cell(k);
    } else {
        std::size_t next = 0;
        std::exception_ptr failure;
        std::vector<std::thread> pool;
        for (int w = 0; w < workers; ++w) {
            pool.emplace_back([&] {
                for (;;) {
                    std::size_t k;
                    {
                        std::lock_guard<std::mutex> lock(mutex);
                        if (failure || next >= cells.size()) return;
                        k = next++;
                    }
                    try {
                        run_cell(k);
                    } catch (...) {
                        std::lock_guard<std::mutex> lock(mutex);
                        if (!failure) failure = std::current_exception();
                    }
                }
            });
        }
        for (auto& t : pool) t.join();
        if (failure) std::rethrow_exception(failure);
    }

    result.summary = summarize(result.rows);
    if (!config.skip_reference) {
        std::optional<OracleCache> cache;
        if (!config.oracle_cache.empty()) cache.emplace(config.oracle_cache);
        for (auto& row : result.summary) {
            const McEstimate ref =
                reference_value(config.scheme.problem, row.dim, config.scheme.problem_params,
                                config.oracle, cache ? &*cache : nullptr);
            std::vector<double> values;
            for (const auto& r : result.rows) {
                if (r.dim == row.dim) values.push_back(r.v0);
            }
            row.reference = ref.price;
            row.reference_standard_error = ref.standard_error;
            row.relative_l1_error = relative_l1_error(values, ref.price);
            row.has_reference = true;
        }
        if (cache) cache->save();
    }

    const std::string title = config.scheme.problem + " (" +
                              (config.scheme.variance_reduction ? "variance-reduced" : "plain") +
                              ", T=" + format_number(config.scheme.problem_params.horizon) +
                              ", N=" + std::to_string(config.scheme.steps) + ")";
    print_summary_table(log, title, result.summary);
    if (!config.out_json.empty()) {
        std::ofstream out(config.out_json);
        if (!out) throw std::runtime_error("cannot write '" + config.out_json.string() + "'");
        out << summary_json(config, result.summary) << '\n';
    }
    return result;
}

}  // namespace ppde
