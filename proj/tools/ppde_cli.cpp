#include "ppde/experiment.hpp"

#include <exception>
#include <iostream>
#include <string>
#include <vector>

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    ppde::ExperimentConfig config;
    try {
        config = ppde::parse_config(args);
    } catch (const ppde::HelpRequested& help) {
        std::cout << help.what();
        return 0;
    } catch (const ppde::UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n(run with --help for the flag list)\n";
        return 2;
    }

    try {
        ppde::run_experiment(config, std::cout);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
