#include "mmslab/cli.hpp"

int main(int argc, char** argv)
{
  return mmslab::cli::run(std::vector<std::string>(argv + 1, argv + argc));
}
