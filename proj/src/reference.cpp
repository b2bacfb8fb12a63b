#include "ppde/reference.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <thread>
#include <vector>

namespace ppde {

int default_thread_count() {
    if (const char* env = std::getenv("PPDE_THREADS")) {
        const int n = std::atoi(env);
        if (n > 0) return n;
    }
    return static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
}

namespace {

// Welford accumulator; chunks merge with Chan's formula, exact for constants.
struct ChunkSums {
    double mean = 0.0;
    double m2 = 0.0;
    long long count = 0;

    void add(double value) {
        ++count;
        const double delta = value - mean;
        mean += delta / static_cast<double>(count);
        m2 += delta * (value - mean);
    }
    void merge(const ChunkSums& other) {
        if (other.count == 0) return;
        const double n1 = static_cast<double>(count);
        const double n2 = static_cast<double>(other.count);
        const double delta = other.mean - mean;
        count += other.count;
        mean += delta * n2 / static_cast<double>(count);
        m2 += other.m2 + delta * delta * n1 * n2 / static_cast<double>(count);
    }
};

struct GbmModel {
    int dim;
    int steps;
    double horizon;
    std::vector<double> drift;  // (r - sigma^2/2) h
    std::vector<double> vol;    // sigma sqrt(h)
    double strike;
    double barrier;
    double discount;
};

// Undiscounted payoff of one path driven by the normals in `xi` (steps x d).
double path_payoff(const GbmModel& m, OptionPayoff kind, const std::vector<double>& xi,
                   double sign) {
    std::vector<double> log_x(static_cast<std::size_t>(m.dim), 0.0);
    double mean = 1.0;  // every asset starts at 1
    const double h = m.horizon / m.steps;
    double integral = 0.5 * mean;
    double max_mean = mean;
    for (int k = 0; k < m.steps; ++k) {
        double total = 0.0;
        for (int a = 0; a < m.dim; ++a) {
            const auto ia = static_cast<std::size_t>(a);
            const double noise = xi[static_cast<std::size_t>(k) * m.dim + ia];
            log_x[ia] += m.drift[ia] + m.vol[ia] * sign * noise;
            total += std::exp(log_x[ia]);
        }
        mean = total / m.dim;
        integral += (k + 1 == m.steps) ? 0.5 * mean : mean;
        max_mean = std::max(max_mean, mean);
    }
    if (kind == OptionPayoff::asian) {
        return std::max(integral * h / m.horizon - m.strike, 0.0);
    }
    if (kind == OptionPayoff::barrier && !(max_mean < m.barrier)) return 0.0;
    return std::max(mean - m.strike, 0.0);
}

ChunkSums run_chunk(const GbmModel& m, OptionPayoff kind, const McConfig& config, long long chunk,
                    long long count, std::vector<double>* sink = nullptr) {
    RngStream rng = RngStream(config.seed).split(static_cast<std::uint64_t>(chunk));
    std::vector<double> xi(static_cast<std::size_t>(m.steps) * m.dim);
    ChunkSums s;
    for (long long n = 0; n < count; ++n) {
        for (double& v : xi) v = rng.normal();
        double value = path_payoff(m, kind, xi, 1.0);
        if (config.antithetic) value = 0.5 * (value + path_payoff(m, kind, xi, -1.0));
        value *= m.discount;
        if (sink) sink->push_back(value);
        s.add(value);
    }
    return s;
}

GbmModel make_model(int dim, const OptionParams& params, double horizon, const McConfig& config) {
    if (dim < 1) throw std::invalid_argument("Monte Carlo: dimension must be >= 1");
    if (params.rates.size() != static_cast<std::size_t>(dim) ||
        params.volatilities.size() != static_cast<std::size_t>(dim)) {
        throw std::invalid_argument("Monte Carlo: need one rate and volatility per asset");
    }
    // Zero volatility is allowed here (deterministic paths), unlike in the solver.
    for (double v : params.volatilities) {
        if (!(v >= 0.0)) throw std::invalid_argument("Monte Carlo: volatilities must be >= 0");
    }
    if (config.samples < 1) throw std::invalid_argument("Monte Carlo needs at least 1 sample");
    if (config.chunk < 1) throw std::invalid_argument("Monte Carlo chunk size must be >= 1");
    const TimeGrid grid = TimeGrid::with_step(horizon, config.step);

    GbmModel m{dim, grid.steps, horizon, {}, {}, params.strike, params.barrier,
               std::exp(-params.discount_rate * horizon)};
    for (int a = 0; a < dim; ++a) {
        const double r = params.rates[static_cast<std::size_t>(a)];
        const double s = params.volatilities[static_cast<std::size_t>(a)];
        m.drift.push_back((r - 0.5 * s * s) * grid.step);
        m.vol.push_back(s * std::sqrt(grid.step));
    }
    return m;
}

}  // namespace

std::vector<double> mc_discounted_payoffs(OptionPayoff kind, int dim, const OptionParams& params,
                                          double horizon, const McConfig& config) {
    const GbmModel m = make_model(dim, params, horizon, config);
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(config.samples));
    const long long chunks = (config.samples + config.chunk - 1) / config.chunk;
    for (long long c = 0; c < chunks; ++c) {
        run_chunk(m, kind, config, c, std::min(config.chunk, config.samples - c * config.chunk),
                  &out);
    }
    return out;
}

McEstimate mc_price(OptionPayoff kind, int dim, const OptionParams& params, double horizon,
                    const McConfig& config) {
    const GbmModel m = make_model(dim, params, horizon, config);

    // Chunk c always uses stream c, so the estimate does not depend on the
    // number of workers.
    const long long chunks = (config.samples + config.chunk - 1) / config.chunk;
    std::vector<ChunkSums> sums(static_cast<std::size_t>(chunks));
    auto work = [&](long long c) {
        const long long count = std::min(config.chunk, config.samples - c * config.chunk);
        sums[static_cast<std::size_t>(c)] = run_chunk(m, kind, config, c, count);
    };
    const int threads = static_cast<int>(
        std::min<long long>(config.threads > 0 ? config.threads : default_thread_count(), chunks));
    if (threads <= 1) {
        for (long long c = 0; c < chunks; ++c) work(c);
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < threads; ++t) {
            pool.emplace_back([&, t] {
                for (long long c = t; c < chunks; c += threads) work(c);
            });
        }
        for (auto& th : pool) th.join();
    }

    ChunkSums total;
    for (const auto& s : sums) total.merge(s);
    const double n = static_cast<double>(total.count);
    if (total.count < 2) return {total.mean, 0.0, total.count};
    return {total.mean, std::sqrt(total.m2 / (n - 1.0) / n), total.count};
}

McEstimate mc_price_asian(int dim, const OptionParams& params, double horizon,
                          const McConfig& config) {
    return mc_price(OptionPayoff::asian, dim, params, horizon, config);
}

McEstimate mc_price_barrier(int dim, const OptionParams& params, double horizon,
                            const McConfig& config) {
    return mc_price(OptionPayoff::barrier, dim, params, horizon, config);
}

OracleCache::OracleCache(std::filesystem::path path) : path_(std::move(path)) {
    if (!std::filesystem::exists(path_)) return;
    std::ifstream in(path_);
    const nlohmann::json doc = nlohmann::json::parse(in);
    for (const auto& [key, value] : doc.at("entries").items()) {
        entries_[key] = {value.at("price").get<double>(), value.at("standard_error").get<double>(),
                         value.at("samples").get<long long>()};
    }
}

std::string OracleCache::key(const std::string& problem, int dim, const ProblemParams& p,
                             const McConfig& config) {
    std::ostringstream out;
    out.precision(17);
    out << problem << "|d=" << dim << "|T=" << p.horizon << "|r=" << p.option_rate
        << "|sigma=" << p.option_volatility << "|K=" << p.strike << "|B=" << p.barrier
        << "|r0=" << p.discount_rate << "|seed=" << config.seed << "|O=" << config.samples
        << "|h=" << config.step << "|anti=" << config.antithetic << "|chunk=" << config.chunk;
    return out.str();
}

std::optional<McEstimate> OracleCache::find(const std::string& key) const {
    const auto it = entries_.find(key);
    if (it == entries_.end()) return std::nullopt;
    return it->second;
}

void OracleCache::store(const std::string& key, const McEstimate& estimate) {
    entries_[key] = estimate;
}

void OracleCache::save() const {
    if (path_.empty()) return;
    nlohmann::json doc;
    doc["entries"] = nlohmann::json::object();
    for (const auto& [key, e] : entries_) {
        doc["entries"][key] = {
            {"price", e.price}, {"standard_error", e.standard_error}, {"samples", e.samples}};
    }
    if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
    std::ofstream out(path_);
    out << doc.dump(2) << '\n';
}

McEstimate reference_value(const std::string& problem, int dim, const ProblemParams& params,
                           const McConfig& config, OracleCache* cache) {
    if (problem == "ControlProblem") return {control_reference(dim), 0.0, 0};
    if (problem != "AsianOption" && problem != "BarrierOption") {
        throw std::invalid_argument("no reference for problem '" + problem + "'");
    }
    const std::string key = OracleCache::key(problem, dim, params, config);
    if (cache) {
        if (auto hit = cache->find(key)) return *hit;
    }
    const OptionParams option =
        OptionParams::uniform(dim, params.option_rate, params.option_volatility, params.strike,
                              params.barrier, params.discount_rate);
    const McEstimate estimate = problem == "AsianOption"
                                    ? mc_price_asian(dim, option, params.horizon, config)
                                    : mc_price_barrier(dim, option, params.horizon, config);
    if (cache) cache->store(key, estimate);
    return estimate;
}

}  // namespace ppde
