#include "isoseg/commands.hpp"

int main(int argc, char** argv) { return isoseg::cli::run_cli(argc, argv); }
