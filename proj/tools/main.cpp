#include "commands.hpp"

int main(int argc, char** argv) { return shine_cli::run(argc, argv); }
