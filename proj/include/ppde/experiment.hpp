#pragma once

#include "ppde/reference.hpp"
#include "ppde/scheme.hpp"

#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

namespace ppde {

class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Thrown by parse_config for --help; what() is the help text.
class HelpRequested : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct ExperimentConfig {
    /// Problem, network and optimizer settings; `dim` and `seed` are set per run.
    SchemeConfig scheme;
    std::vector<int> dims{1, 10, 100};
    int runs = 10;
    /// Run r is seeded with seed + r.
    std::uint64_t seed = 0;
    double step = 0.01;  // h; N = T / h
    McConfig oracle;
    bool skip_reference = false;
    int parallel_runs = 1;
    std::filesystem::path out_csv;
    std::filesystem::path out_json;
    std::filesystem::path loss_trace;
    std::filesystem::path oracle_cache;

    void validate() const;
};

/// Flags override the JSON config file (--config), which overrides defaults.
/// args excludes the program name.
ExperimentConfig parse_config(const std::vector<std::string>& args);

/// JSON with the same keys as the long flags (dashes become underscores).
void apply_config_json(ExperimentConfig& config, const std::string& text);

struct RunRow {
    int dim = 0;
    double horizon = 0.0;
    int steps = 0;
    int run = 0;
    double v0 = 0.0;
    double runtime = 0.0;
};

struct SummaryRow {
    int dim = 0;
    double horizon = 0.0;
    int steps = 0;
    int runs = 0;
    double mean = 0.0;
    double stdev = 0.0;
    double reference = 0.0;
    double reference_standard_error = 0.0;
    double relative_l1_error = 0.0;
    double mean_runtime = 0.0;
    bool has_reference = false;
};

struct ExperimentResult {
    std::vector<RunRow> rows;
    std::vector<SummaryRow> summary;
};

inline constexpr const char* kCsvHeader = "d,T,N,run,y0,runtime";

/// Shortest decimal that reads back to the same double.
std::string format_number(double value);

void write_csv_header(std::ostream& out);
void write_csv_row(std::ostream& out, const RunRow& row);
/// Header plus one line per row.
void write_csv(const std::filesystem::path& path, const std::vector<RunRow>& rows);

/// Per-dimension mean, sample stdev (0 for a single run), mean runtime.
/// Reference columns are left empty.
std::vector<SummaryRow> summarize(const std::vector<RunRow>& rows);

void print_summary_table(std::ostream& out, const std::string& title,
                         const std::vector<SummaryRow>& rows);
std::string summary_json(const ExperimentConfig& config, const std::vector<SummaryRow>& rows);

/// Runs every (dimension, run) cell, streaming CSV rows as they finish, then
/// attaches reference values and writes the summary. Solver errors propagate
/// after the rows written so far are flushed.
ExperimentResult run_experiment(const ExperimentConfig& config, std::ostream& log);

}  // namespace ppde
