#include "msbias/cli.hpp"

int main(int argc, char** argv) { return msbias::cli::main(argc, argv); }
