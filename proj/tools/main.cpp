#include "neural_td_cli.hpp"

int main(int argc, char** argv) { return ntd::cli::run_cli(argc, argv); }
