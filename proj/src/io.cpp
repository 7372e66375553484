#include "expreg/io.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "expreg/errors.hpp"

namespace expreg::io {

namespace {

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

double parse_double(const std::string& field, const std::string& path,
                    std::size_t line_no) {
  double value = 0.0;
  const char* begin = field.data();
  const char* end = begin + field.size();
  while (begin < end && (*begin == ' ' || *begin == '\t')) ++begin;
  while (end > begin && (end[-1] == ' ' || end[-1] == '\t' || end[-1] == '\r')) --end;
  const auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc() || ptr != end) {
    throw io_error(path + ":" + std::to_string(line_no) + ": cannot parse '" +
                   field + "' as a number");
  }
  return value;
}

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r");
  std::size_t b = s.find_last_not_of(" \t\r");
  if (a == std::string::npos) return "";
  return s.substr(a, b - a + 1);
}

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
};

Table read_table(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open " + path);
  Table t;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto fields = split_fields(line);
    if (t.header.empty()) {
      for (const auto& f : fields) t.header.push_back(trim(f));
      continue;
    }
    if (fields.size() != t.header.size()) {
      throw io_error(path + ":" + std::to_string(line_no) +
                     ": expected " + std::to_string(t.header.size()) + " fields");
    }
    std::vector<double> row(fields.size());
    for (std::size_t c = 0; c < fields.size(); ++c) {
      row[c] = parse_double(fields[c], path, line_no);
    }
    t.rows.push_back(std::move(row));
  }
  if (t.header.empty()) throw io_error(path + ": missing header row");
  return t;
}

}  // namespace

Dataset read_dataset_csv(const std::string& path) {
  const Table t = read_table(path);
  if (t.header.size() < 2 || t.header.back() != "y") {
    throw io_error(path + ": dataset header must be x1,...,xd,y");
  }
  const std::size_t dim = t.header.size() - 1;
  if (t.rows.empty()) throw io_error(path + ": dataset has no samples");
  std::vector<double> xs;
  std::vector<double> ys;
  xs.reserve(t.rows.size() * dim);
  ys.reserve(t.rows.size());
  for (const auto& row : t.rows) {
    xs.insert(xs.end(), row.begin(), row.begin() + static_cast<long>(dim));
    ys.push_back(row.back());
  }
  try {
    return Dataset(std::move(xs), std::move(ys), dim);
  } catch (const std::invalid_argument& e) {
    throw io_error(path + ": " + e.what());
  }
}

void write_dataset_csv(const Dataset& data, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw io_error("cannot open " + path + " for writing");
  for (std::size_t c = 1; c <= data.dim(); ++c) out << 'x' << c << ',';
  out << "y\n";
  for (std::size_t i = 0; i < data.n(); ++i) {
    const auto row = data.x_row(i);
    for (double v : row) out << format_double(v) << ',';
    out << format_double(data.y()[i]) << '\n';
  }
  if (!out) throw io_error("write to " + path + " failed");
}

Covariates read_covariates_csv(const std::string& path) {
  const Table t = read_table(path);
  std::size_t dim = t.header.size();
  if (t.header.back() == "y") {
    if (dim < 2) throw io_error(path + ": no covariate columns");
    --dim;
  }
  Covariates c;
  c.dim = dim;
  c.n = t.rows.size();
  c.x.reserve(c.n * dim);
  for (const auto& row : t.rows) {
    c.x.insert(c.x.end(), row.begin(), row.begin() + static_cast<long>(dim));
  }
  return c;
}

als::DiscreteDistribution read_distribution_csv(const std::string& path) {
  const Table t = read_table(path);
  if (t.header.size() != 2 || t.header[0] != "value" || t.header[1] != "mass") {
    throw io_error(path + ": distribution header must be value,mass");
  }
  std::vector<als::DiscreteDistribution::Atom> atoms;
  atoms.reserve(t.rows.size());
  for (const auto& row : t.rows) atoms.push_back({row[0], row[1]});
  try {
    return als::DiscreteDistribution(std::move(atoms));
  } catch (const std::invalid_argument& e) {
    throw io_error(path + ": " + e.what());
  }
}

void write_distribution_csv(const als::DiscreteDistribution& q,
                            const std::string& path) {
  std::ofstream out(path);
  if (!out) throw io_error("cannot open " + path + " for writing");
  out << "value,mass\n";
  for (const auto& a : q.atoms()) {
    out << format_double(a.value) << ',' << format_double(a.mass) << '\n';
  }
  if (!out) throw io_error("write to " + path + " failed");
}

void write_eigenvalues_csv(std::span<const double> eigenvalues,
                           const std::string& path) {
  std::ofstream out(path);
  if (!out) throw io_error("cannot open " + path + " for writing");
  out << "i,lambda\n";
  for (std::size_t i = 0; i < eigenvalues.size(); ++i) {
    out << (i + 1) << ',' << format_double(eigenvalues[i]) << '\n';
  }
  if (!out) throw io_error("write to " + path + " failed");
}

void write_validation_table_csv(const std::vector<selection::TVCell>& table,
                                const std::string& path) {
  std::ofstream out(path);
  if (!out) throw io_error("cannot open " + path + " for writing");
  out << "lambda,gamma,risk\n";
  for (const auto& cell : table) {
    out << format_double(cell.lambda) << ',' << format_double(cell.gamma) << ',';
    if (cell.ok) {
      out << format_double(cell.risk);
    } else {
      out << "nan";
    }
    out << '\n';
  }
  if (!out) throw io_error("write to " + path + " failed");
}

void write_predictions_csv(std::span<const double> predictions,
                           const std::string& path) {
  std::ofstream out(path);
  if (!out) throw io_error("cannot open " + path + " for writing");
  out << "prediction\n";
  for (double v : predictions) out << format_double(v) << '\n';
  if (!out) throw io_error("write to " + path + " failed");
}

}  // namespace expreg::io
