#pragma once

#include <cstddef>
#include <vector>

#include "rsindex/data_model.hpp"

namespace rsindex {

// Consecutive within-house pairs in panel order; a house with J sales gives
// J - 1 pairs.
std::vector<SalePair> build_sale_pairs(const PanelDataset& panel);

// Arithmetic repeat-sales system w = X b + e with instruments Zin. Columns
// index periods 2..T. Rows are stored as (column, value) with column -1
// standing for period 1, which carries no unknown.
struct CSSystem {
  struct Row {
    int first_col = -1;
    int second_col = -1;
    double first_price = 0.0;
    double second_price = 0.0;
    int gap = 0;
  };
  std::vector<Row> rows;
  std::vector<double> w;
  int periods = 0;

  std::size_t size() const { return rows.size(); }
  // Residuals w - X b for b of length T - 1.
  std::vector<double> residuals(const std::vector<double>& b) const;
};

// Throws kDomain when a pair's quarters fall outside 1..periods or do not
// increase.
CSSystem build_cs_system(const std::vector<SalePair>& pairs, int periods);

struct CSFit {
  std::vector<double> b;  // T - 1 reciprocal indices, periods 2..T
  std::vector<double> B;  // T indices, B[0] = 1
  std::vector<double> b_stage1;
  double alpha0 = 0.0;
  double alpha1 = 0.0;
  std::vector<double> weights;  // per pair
  std::size_t pair_count = 0;
  // False when stage-1 residuals vanish; stage 3 would reproduce stage 1.
  bool weighted = true;

  int periods() const { return static_cast<int>(B.size()); }
};

// Three-step fit: instrumental-variables solve, regression of squared
// residuals on gap time, weighted instrumental-variables solve. Throws
// kEmptyInput without pairs, kIdentifiability for an ill-conditioned Zin'X
// and kNegativeWeight when a stage-2 fitted variance is not positive.
CSFit fit_cs(const std::vector<SalePair>& pairs, int periods);

// Index ratio B_target / B_prev times the previous price. Throws kDomain for
// quarters outside 1..T.
double predict_cs(const CSFit& fit, int previous_quarter, double previous_price,
                  int target_quarter);

// Price-scale residuals w - X b of the final fit, tagged with the pair gap.
std::vector<GapResidual> cs_pair_residuals(const CSFit& fit,
                                           const std::vector<SalePair>& pairs);

}  // namespace rsindex
