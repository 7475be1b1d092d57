#include "mcrs/cli.hpp"

int main(int argc, char** argv) { return mcrs::run_cli(argc, argv); }
