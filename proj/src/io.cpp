#include "ltrcsimex/io.hpp"

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <random>
#include <sstream>

#include "ltrcsimex/rng.hpp"

namespace ltrcsimex {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, ',')) out.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') out.push_back("");
  return out;
}

double parse_number(const std::string& cell, std::size_t row, const std::string& col) {
  char* end = nullptr;
  errno = 0;
  double v = std::strtod(cell.c_str(), &end);
  if (cell.empty() || end != cell.c_str() + cell.size() || errno != 0)
    throw InvalidInputError("non-numeric cell '" + cell + "' in column " + col +
                            " at data row " + std::to_string(row));
  return v;
}

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

CsvTable read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInputError("cannot open file: " + path);
  CsvTable t;
  std::string line;
  if (!std::getline(in, line))
    throw InvalidInputError("empty CSV file: " + path);
  t.header = split_csv_line(line);
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    t.rows.push_back(split_csv_line(line));
  }
  return t;
}

std::size_t find_column(const CsvTable& t, const std::string& name) {
  auto it = std::find(t.header.begin(), t.header.end(), name);
  if (it == t.header.end())
    throw InvalidInputError("missing column '" + name + "' in CSV header");
  return static_cast<std::size_t>(it - t.header.begin());
}

}  // namespace

Dataset read_dataset_csv(const std::string& path) {
  CsvTable t = read_csv(path);
  std::size_t iy = find_column(t, "y");
  std::size_t id = find_column(t, "delta");
  std::size_t ia = find_column(t, "a");
  std::vector<std::size_t> iw, iz;
  for (std::size_t c = 0; c < t.header.size(); ++c) {
    if (t.header[c].rfind("w", 0) == 0 && t.header[c].size() > 1 &&
        std::isdigit(static_cast<unsigned char>(t.header[c][1])))
      iw.push_back(c);
    else if (t.header[c].rfind("z", 0) == 0 && t.header[c].size() > 1 &&
             std::isdigit(static_cast<unsigned char>(t.header[c][1])))
      iz.push_back(c);
  }
  Dataset d;
  d.p_x = iw.size();
  d.p_z = iz.size();
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    if (row.size() != t.header.size())
      throw InvalidInputError("row " + std::to_string(r + 2) +
                              ": wrong number of cells");
    SubjectRecord s;
    s.y = parse_number(row[iy], r + 2, "y");
    s.a = parse_number(row[ia], r + 2, "a");
    double delta = parse_number(row[id], r + 2, "delta");
    if (delta != 0.0 && delta != 1.0)
      throw InvalidInputError("row " + std::to_string(r + 2) +
                              ": delta must be 0 or 1");
    s.delta = static_cast<int>(delta);
    for (std::size_t c : iw) s.w.push_back(parse_number(row[c], r + 2, t.header[c]));
    for (std::size_t c : iz) s.z.push_back(parse_number(row[c], r + 2, t.header[c]));
    d.subjects.push_back(std::move(s));
  }
  d.validate();
  return d;
}

void write_dataset_csv(const Dataset& data, const std::string& path) {
  std::ostringstream os;
  os << "y,delta,a";
  for (std::size_t j = 0; j < data.p_x; ++j) os << ",w" << j + 1;
  for (std::size_t j = 0; j < data.p_z; ++j) os << ",z" << j + 1;
  os << "\n";
  os.precision(17);
  for (const auto& s : data.subjects) {
    os << s.y << "," << s.delta << "," << s.a;
    for (double v : s.w) os << "," << v;
    for (double v : s.z) os << "," << v;
    os << "\n";
  }
  atomic_write_file(path, os.str());
}

std::map<std::string, std::string> read_key_value_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInputError("cannot open file: " + path);
  std::map<std::string, std::string> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    std::size_t eq = t.find('=');
    if (eq == std::string::npos)
      throw InvalidInputError(path + ":" + std::to_string(lineno) +
                              ": expected key=value");
    out[trim(t.substr(0, eq))] = trim(t.substr(eq + 1));
  }
  return out;
}

namespace {

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream is(s);
  std::string item;
  while (std::getline(is, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

}  // namespace

RealDataSchema read_schema_file(const std::string& path) {
  auto kv = read_key_value_file(path);
  auto need = [&](const std::string& k) {
    auto it = kv.find(k);
    if (it == kv.end())
      throw InvalidInputError("schema file missing key '" + k + "'");
    return it->second;
  };
  RealDataSchema s;
  s.time_column = need("time");
  s.trunc_column = need("trunc");
  s.status_column = need("status");
  s.w_columns = split_list(need("w"));
  s.z_columns = split_list(need("z"));
  if (kv.count("standardize_w")) s.standardize_w = kv["standardize_w"] != "false";
  if (kv.count("standardize_z")) s.standardize_z = split_list(kv["standardize_z"]);
  if (s.w_columns.empty())
    throw InvalidInputError("schema: at least one w column required");
  return s;
}

Coefficients StandardizeTransform::back_map(const Coefficients& beta) const {
  Coefficients out = beta;
  for (std::size_t j = 0; j < out.beta_x.size(); ++j)
    out.beta_x[j] /= w_sd[j];
  for (std::size_t j = 0; j < out.beta_z.size(); ++j)
    out.beta_z[j] /= z_sd[j];
  return out;
}

IngestResult ingest(const std::string& path, const RealDataSchema& schema) {
  CsvTable t = read_csv(path);
  std::size_t iy = find_column(t, schema.time_column);
  std::size_t ia = find_column(t, schema.trunc_column);
  std::size_t id = find_column(t, schema.status_column);
  std::vector<std::size_t> iw, iz;
  for (const auto& c : schema.w_columns) iw.push_back(find_column(t, c));
  for (const auto& c : schema.z_columns) iz.push_back(find_column(t, c));

  IngestResult out;
  out.data.p_x = iw.size();
  out.data.p_z = iz.size();
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    if (row.size() != t.header.size())
      throw InvalidInputError("row " + std::to_string(r + 2) +
                              ": wrong number of cells");
    SubjectRecord s;
    s.y = parse_number(row[iy], r + 2, schema.time_column);
    s.a = parse_number(row[ia], r + 2, schema.trunc_column);
    double delta = parse_number(row[id], r + 2, schema.status_column);
    if (delta != 0.0 && delta != 1.0)
      throw InvalidInputError("row " + std::to_string(r + 2) + ": status column " +
                              schema.status_column + " must be 0 or 1");
    s.delta = static_cast<int>(delta);
    if (s.a < 0.0 || s.a > s.y) {
      ++out.dropped_rows;
      continue;
    }
    for (std::size_t c : iw) s.w.push_back(parse_number(row[c], r + 2, t.header[c]));
    for (std::size_t c : iz) s.z.push_back(parse_number(row[c], r + 2, t.header[c]));
    out.data.subjects.push_back(std::move(s));
  }
  if (out.data.subjects.empty())
    throw InvalidInputError("ingest: no valid rows in " + path);

  const std::size_t n = out.data.n();
  auto standardize = [&](auto get, auto set, std::size_t j, double& mean_out,
                         double& sd_out) {
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += get(i, j);
    mean /= static_cast<double>(n);
    double ss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double d = get(i, j) - mean;
      ss += d * d;
    }
    double sd = n > 1 ? std::sqrt(ss / static_cast<double>(n - 1)) : 1.0;
    if (!(sd > 0.0))
      throw InvalidInputError("ingest: constant column cannot be standardized");
    for (std::size_t i = 0; i < n; ++i) set(i, j, (get(i, j) - mean) / sd);
    mean_out = mean;
    sd_out = sd;
  };

  out.transform.w_mean.assign(out.data.p_x, 0.0);
  out.transform.w_sd.assign(out.data.p_x, 1.0);
  out.transform.z_mean.assign(out.data.p_z, 0.0);
  out.transform.z_sd.assign(out.data.p_z, 1.0);
  if (schema.standardize_w)
    for (std::size_t j = 0; j < out.data.p_x; ++j)
      standardize([&](std::size_t i, std::size_t c) { return out.data.subjects[i].w[c]; },
                  [&](std::size_t i, std::size_t c, double v) { out.data.subjects[i].w[c] = v; },
                  j, out.transform.w_mean[j], out.transform.w_sd[j]);
  for (const auto& name : schema.standardize_z) {
    auto it = std::find(schema.z_columns.begin(), schema.z_columns.end(), name);
    if (it == schema.z_columns.end())
      throw InvalidInputError("ingest: standardize_z column '" + name +
                              "' not among z columns");
    std::size_t j = static_cast<std::size_t>(it - schema.z_columns.begin());
    standardize([&](std::size_t i, std::size_t c) { return out.data.subjects[i].z[c]; },
                [&](std::size_t i, std::size_t c, double v) { out.data.subjects[i].z[c] = v; },
                j, out.transform.z_mean[j], out.transform.z_sd[j]);
  }
  out.data.validate();
  return out;
}

Eigen::MatrixXd read_matrix_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInputError("cannot open file: " + path);
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    auto cells = split_csv_line(line);
    std::vector<double> row;
    for (const auto& c : cells) row.push_back(parse_number(c, lineno, "matrix"));
    if (!rows.empty() && row.size() != rows.front().size())
      throw InvalidInputError(path + ": ragged matrix row at line " +
                              std::to_string(lineno));
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw InvalidInputError(path + ": empty matrix");
  Eigen::MatrixXd m(rows.size(), rows.front().size());
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows.front().size(); ++j)
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  return m;
}

void atomic_write_file(const std::string& path, const std::string& content) {
  std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw InvalidInputError("cannot write file: " + tmp);
    out << content;
    if (!out) throw InvalidInputError("write failed: " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0)
    throw InvalidInputError("rename failed: " + tmp + " -> " + path +
                            " (" + std::strerror(errno) + ")");
}

namespace {

struct MimicRow {
  double lenfol, los;
  int fstat;
  double hr, sysbp, diasbp, bmi;
  double cvd, afb, sho, age, gender, chf, av3, miord, mitype;
};

std::vector<MimicRow> make_mimic_rows(std::uint64_t seed) {
  auto eng = make_engine(mix_key(seed, 0x3117));
  std::normal_distribution<double> nd(0.0, 1.0);
  std::uniform_real_distribution<double> ud(0.0, 1.0);
  std::exponential_distribution<double> ex(1.0);

  std::vector<MimicRow> rows;
  rows.reserve(461);
  while (rows.size() < 461) {
    MimicRow r;
    r.hr = 87.0 + 16.0 * nd(eng);
    r.sysbp = 145.0 + 30.0 * nd(eng);
    r.diasbp = 78.0 + 17.0 * nd(eng);
    r.bmi = 26.6 + 5.0 * nd(eng);
    r.age = std::min(104.0, std::max(30.0, 70.0 + 14.0 * nd(eng)));
    r.cvd = ud(eng) < 0.75 ? 1.0 : 0.0;
    r.afb = ud(eng) < 0.15 ? 1.0 : 0.0;
    r.sho = ud(eng) < 0.05 ? 1.0 : 0.0;
    r.gender = ud(eng) < 0.4 ? 1.0 : 0.0;
    r.chf = ud(eng) < 0.3 ? 1.0 : 0.0;
    r.av3 = ud(eng) < 0.02 ? 1.0 : 0.0;
    r.miord = ud(eng) < 0.3 ? 1.0 : 0.0;
    r.mitype = ud(eng) < 0.7 ? 1.0 : 0.0;
    // Hospital stay in days; event time measured from admission.
    r.los = 1.0 + 5.0 * ex(eng);
    double risk = 0.02 * (r.age - 70.0) + 0.4 * r.sho + 0.3 * r.chf -
                  0.03 * (r.bmi - 26.6) + 0.004 * (r.hr - 87.0);
    double t_excess = 900.0 * ex(eng) * std::exp(-risk);
    double t = r.los + t_excess;
    double c = r.los + 2400.0 * ud(eng);
    r.lenfol = std::min(t, c);
    r.fstat = t <= c ? 1 : 0;
    rows.push_back(r);
  }
  return rows;
}

}  // namespace

RealDataSchema mimic_schema() {
  RealDataSchema s;
  s.time_column = "lenfol";
  s.trunc_column = "los";
  s.status_column = "fstat";
  s.w_columns = {"hr", "sysbp", "diasbp", "bmi"};
  s.z_columns = {"cvd", "afb", "sho", "age", "gender", "chf", "av3", "miord", "mitype"};
  s.standardize_w = true;
  s.standardize_z = {"age"};
  return s;
}

void write_mimic_csv(const std::string& path, std::uint64_t seed) {
  auto rows = make_mimic_rows(seed);
  std::ostringstream os;
  os << "lenfol,los,fstat,hr,sysbp,diasbp,bmi,cvd,afb,sho,age,gender,chf,av3,miord,mitype\n";
  os.precision(10);
  for (const auto& r : rows) {
    os << r.lenfol << "," << r.los << "," << r.fstat << "," << r.hr << ","
       << r.sysbp << "," << r.diasbp << "," << r.bmi << "," << r.cvd << ","
       << r.afb << "," << r.sho << "," << r.age << "," << r.gender << ","
       << r.chf << "," << r.av3 << "," << r.miord << "," << r.mitype << "\n";
  }
  atomic_write_file(path, os.str());
}

Dataset make_mimic_dataset(std::uint64_t seed) {
  auto rows = make_mimic_rows(seed);
  Dataset d;
  d.p_x = 4;
  d.p_z = 9;
  for (const auto& r : rows) {
    SubjectRecord s;
    s.y = r.lenfol;
    s.a = r.los;
    s.delta = r.fstat;
    s.w = {r.hr, r.sysbp, r.diasbp, r.bmi};
    s.z = {r.cvd, r.afb, r.sho, r.age, r.gender, r.chf, r.av3, r.miord, r.mitype};
    d.subjects.push_back(std::move(s));
  }
  d.validate();
  return d;
}

}  // namespace ltrcsimex
