#include <spectra_lr_cli/cli.hpp>

int main(int argc, char** argv) { return spectra_lr::cli::run(argc, argv); }
