#include "grade/cli.hpp"

int main(int argc, char** argv) { return grade::run_cli(argc, argv); }
