#include "cli/commands.hpp"

int main(int argc, char** argv) { return vecprobe::cli::run(argc, argv); }
