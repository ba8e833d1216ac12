#include "hlsflow/cli.hpp"

int main(int argc, char** argv) {
  return hlsflow::cli::dispatch(argc, argv);
}
