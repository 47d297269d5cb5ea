#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>

#include "expertdg/nn/mlp.hpp"

namespace expertdg::nn {

// Text checkpoint, version 1:
//
//   expertdg-mlp 1
//   layers <L+1> <size_0> ... <size_L>
//   activation <tanh|relu|identity>
//   <layer 0 weights, row-major, one hexfloat per line>
//   <layer 0 bias>
//   ...
//
// Values are written with %a so a save/load round trip is bit-exact.
void save_mlp(std::ostream& out, const Mlp& model);
Mlp load_mlp(std::istream& in);

void save_mlp(const std::filesystem::path& path, const Mlp& model);
Mlp load_mlp(const std::filesystem::path& path);

// Dense matrix block in the same encoding ("matrix <rows> <cols>" then values).
void save_matrix(std::ostream& out, const Matrix& m);
Matrix load_matrix(std::istream& in);

std::string format_hexfloat(double v);
double parse_hexfloat(const std::string& token);

}  // namespace expertdg::nn
