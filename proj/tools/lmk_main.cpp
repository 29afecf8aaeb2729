#include "lmk/cli.hpp"
#include "lmk/parallel.hpp"

int main(int argc, char** argv) {
  lmk::retain_freed_memory();
  return lmk::cli::run(argc, argv);
}
