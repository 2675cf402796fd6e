#include "taxo/cli.hpp"

int main(int argc, char** argv) { return taxo::cli::run(argc, argv); }
