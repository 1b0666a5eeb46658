#include "lpn/commands.hpp"

int main(int argc, char** argv) { return lpn::run_cli(argc, argv); }
