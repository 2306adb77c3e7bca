#include "chemodose/cli.hpp"

int main(int argc, char** argv) { return chemodose::run_cli(argc, argv); }
