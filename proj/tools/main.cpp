#include "lowrank/io.hpp"

int main(int argc, char** argv) { return lowrank::run_cli(argc, argv); }
