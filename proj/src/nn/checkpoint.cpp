#include "expertdg/nn/checkpoint.hpp"

#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <ostream>
#include <stdexcept>

namespace expertdg::nn {

std::string format_hexfloat(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%a", v);
  return buf;
}

double parse_hexfloat(const std::string& token) {
  errno = 0;
  char* end = nullptr;
  const double v = std::strtod(token.c_str(), &end);
  if (end == token.c_str() || *end != '\0' || errno == ERANGE)
    throw std::runtime_error("checkpoint: bad number '" + token + "'");
  return v;
}

namespace {

void expect(std::istream& in, const std::string& word) {
  std::string got;
  if (!(in >> got) || got != word) throw std::runtime_error("checkpoint: expected '" + word + "', got '" + got + "'");
}

double read_value(std::istream& in) {
  std::string token;
  if (!(in >> token)) throw std::runtime_error("checkpoint: truncated parameter block");
  return parse_hexfloat(token);
}

}  // namespace

void save_mlp(std::ostream& out, const Mlp& model) {
  out << "expertdg-mlp 1\n";
  out << "layers " << model.layer_sizes.size();
  for (Index s : model.layer_sizes) out << ' ' << s;
  out << "\nactivation " << to_string(model.activation) << '\n';
  for (Index l = 0; l < model.num_layers(); ++l) {
    for (Index i = 0; i < model.weights[l].rows(); ++i)
      for (Index j = 0; j < model.weights[l].cols(); ++j) out << format_hexfloat(model.weights[l](i, j)) << '\n';
    for (Index i = 0; i < model.biases[l].size(); ++i) out << format_hexfloat(model.biases[l](i)) << '\n';
  }
}

Mlp load_mlp(std::istream& in) {
  expect(in, "expertdg-mlp");
  int version = 0;
  if (!(in >> version) || version != 1) throw std::runtime_error("checkpoint: unsupported version");
  expect(in, "layers");
  std::size_t count = 0;
  if (!(in >> count) || count < 2 || count > 1024) throw std::runtime_error("checkpoint: bad layer count");
  std::vector<Index> sizes(count);
  for (auto& s : sizes)
    if (!(in >> s) || s <= 0) throw std::runtime_error("checkpoint: bad layer size");
  expect(in, "activation");
  std::string act;
  in >> act;
  Mlp model(sizes, parse_activation(act));
  for (Index l = 0; l < model.num_layers(); ++l) {
    for (Index i = 0; i < model.weights[l].rows(); ++i)
      for (Index j = 0; j < model.weights[l].cols(); ++j) model.weights[l](i, j) = read_value(in);
    for (Index i = 0; i < model.biases[l].size(); ++i) model.biases[l](i) = read_value(in);
  }
  return model;
}

void save_mlp(const std::filesystem::path& path, const Mlp& model) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  save_mlp(out, model);
}

Mlp load_mlp(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  return load_mlp(in);
}

void save_matrix(std::ostream& out, const Matrix& m) {
  out << "matrix " << m.rows() << ' ' << m.cols() << '\n';
  for (Index i = 0; i < m.rows(); ++i)
    for (Index j = 0; j < m.cols(); ++j) out << format_hexfloat(m(i, j)) << '\n';
}

Matrix load_matrix(std::istream& in) {
  expect(in, "matrix");
  Index rows = 0, cols = 0;
  if (!(in >> rows >> cols) || rows < 0 || cols < 0) throw std::runtime_error("checkpoint: bad matrix shape");
  Matrix m(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) m(i, j) = read_value(in);
  return m;
}

}  // namespace expertdg::nn
