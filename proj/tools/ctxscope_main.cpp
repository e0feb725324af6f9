#include "ctxscope/cli.hpp"

int main(int argc, char** argv) { return ctxscope::cli::dispatch(argc, argv); }
