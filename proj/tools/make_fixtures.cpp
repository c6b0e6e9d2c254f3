// Regenerates the committed oracle fixture set.
//   maskcf_make_fixtures <out-dir>

#include <cstdio>
#include <filesystem>
#include <string>

#include "maskcf/oracle.hpp"

int main(int argc, char** argv) {
  if (argc != 2) {
    std::fprintf(stderr, "usage: %s <out-dir>\n", argv[0]);
    return 1;
  }
  const std::filesystem::path dir(argv[1]);
  std::filesystem::create_directories(dir);
  const maskcf::MaskKind kinds[] = {maskcf::MaskKind::ones, maskcf::MaskKind::binary, maskcf::MaskKind::gaussian};
  int k = 0;
  for (int n = 6; n <= 16; n += 2)
    for (int c = 0; c < 3; ++c)
      for (int div : {2, 5}) {
        const int L = 1 + k % 3;
        const int h = std::max(1, int(std::lround(double(n) / div)));
        const double lambda = (k % 2) ? 0.5 : 0.05;
        char name[64];
        std::snprintf(name, sizeof name, "fx%02d_%dx%d_L%d_%s_c%d", k, n, n, L, to_string(kinds[c]), div);
        const auto fx = maskcf::oracle::make_fixture(name, n, n, L, h, h, lambda, 1000 + std::uint64_t(k), kinds[c]);
        maskcf::oracle::write_fixture(fx, dir / (std::string(name) + ".txt"));
        ++k;
      }
  std::printf("wrote %d fixtures to %s\n", k, dir.c_str());
  return 0;
}
