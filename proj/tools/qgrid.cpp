#include <csignal>

#include "qgrid/cli.hpp"

int main(int argc, char** argv) {
    std::signal(SIGINT, qgrid::cli::detail::handle_sigint);
    std::signal(SIGTERM, qgrid::cli::detail::handle_sigint);
    return qgrid::cli::run(argc, argv);
}
