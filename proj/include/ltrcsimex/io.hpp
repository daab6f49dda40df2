#ifndef LTRCSIMEX_IO_HPP
#define LTRCSIMEX_IO_HPP

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "ltrcsimex/types.hpp"

namespace ltrcsimex {

// Dataset CSV: header `y,delta,a,w1..wpx,z1..zpz`, one row per subject.
Dataset read_dataset_csv(const std::string& path);
void write_dataset_csv(const Dataset& data, const std::string& path);

// Column mapping for real datasets plus standardization flags.
struct RealDataSchema {
  std::string time_column;    // -> y   (e.g. lenfol)
  std::string trunc_column;   // -> a   (e.g. los)
  std::string status_column;  // -> delta (e.g. fstat)
  std::vector<std::string> w_columns;
  std::vector<std::string> z_columns;
  bool standardize_w = true;
  std::vector<std::string> standardize_z;  // z columns to standardize
};

RealDataSchema read_schema_file(const std::string& path);

// Affine transform recorded during standardization, used to back-map
// coefficients to the original covariate scale.
struct StandardizeTransform {
  std::vector<double> w_mean, w_sd;
  std::vector<double> z_mean, z_sd;  // sd 1 / mean 0 for untouched columns

  // beta on the standardized scale -> beta on the raw scale.
  Coefficients back_map(const Coefficients& beta) const;
};

struct IngestResult {
  Dataset data;
  StandardizeTransform transform;
  std::size_t dropped_rows = 0;  // rows violating a <= y
};

IngestResult ingest(const std::string& path, const RealDataSchema& schema);

// Flat key=value configuration text (lines, '#' comments).
std::map<std::string, std::string> read_key_value_file(const std::string& path);

Eigen::MatrixXd read_matrix_csv(const std::string& path);

// Write-temp-then-rename so partial output never lands at the target path.
void atomic_write_file(const std::string& path, const std::string& content);

// Seeded synthetic dataset shaped like the WHAS500 analysis subset:
// 461 subjects, 4 error-prone and 9 clean covariates, with truncation and
// heavy censoring. Stands in for the real file, which is not bundled.
Dataset make_mimic_dataset(std::uint64_t seed = 20240501);
RealDataSchema mimic_schema();
void write_mimic_csv(const std::string& path, std::uint64_t seed = 20240501);

}  // namespace ltrcsimex

#endif
