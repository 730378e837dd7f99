#include "usr/cli.hpp"

int main(int argc, char** argv) { return usr::cli::run(argc, argv); }
