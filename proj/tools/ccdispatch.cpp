#include "ccd/cli.hpp"

int main(int argc, char** argv) { return ccd::cli::dispatch(argc, argv); }
