#pragma once

#include "rca/types.hpp"

#include <vector>

namespace rca {

struct DependencyMatrices {
    int cycle_id = 0;
    Matrix pcc;  // d x d, entries in [-1,1]; zero-variance columns score 0
    Matrix mi;   // d x d, bits; diagonal is the marginal entropy
};

// Sample Pearson correlation per feature pair. Any pair involving a constant
// column (its diagonal included) is 0. Needs n >= 2.
Matrix pearson_matrix(const CycleSeries& cycle);

// Plug-in mutual information from empirical joint counts over {0,1}^2,
// log base 2; 0*log(0/q) terms contribute 0.
Matrix mutual_information_matrix(const CycleSeries& cycle);

DependencyMatrices dependency_matrices(const CycleSeries& cycle);

// Per-feature significance is the off-diagonal row sum (|PCC| resp. MI);
// I_2 is the union of the two top-fraction selections.
std::vector<int> dependency_evidence(const CycleSeries& cycle, const SelectionPolicy& policy);

Vector pcc_significance(const Matrix& pcc);
Vector mi_significance(const Matrix& mi);

}  // namespace rca
