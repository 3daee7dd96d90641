#include "homog/cli.hpp"

int main(int argc, char** argv) { return homog::cli::dispatch(argc, argv); }
