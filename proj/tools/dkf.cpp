#include "dkf/dkf.hpp"

int main(int argc, char** argv) { return dkf::cli::run(argc, argv); }
