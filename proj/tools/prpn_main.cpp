#include "prpn/cli.hpp"

int main(int argc, char** argv) { return prpn::cli::run(argc, argv); }
