#pragma once
// Small dense tensors in n <= 3 dimensions. All components are stored, symmetrization
// is done by explicit permutation sums.
#include <cstddef>
#include <initializer_list>
#include <vector>

namespace heatrace {

class Tens {
public:
    Tens() = default;
    Tens(int n, int rank, double v = 0.0);

    int dim() const { return n_; }
    int rank() const { return r_; }
    std::size_t size() const { return a_.size(); }

    double& operator[](std::size_t k) { return a_[k]; }
    double operator[](std::size_t k) const { return a_[k]; }

    double& operator()(std::initializer_list<int> idx) { return a_[offset(idx.begin())]; }
    double operator()(std::initializer_list<int> idx) const { return a_[offset(idx.begin())]; }
    double& at(const int* idx) { return a_[offset(idx)]; }
    double at(const int* idx) const { return a_[offset(idx)]; }

    std::size_t offset(const int* idx) const;
    void unravel(std::size_t flat, int* idx) const;

    std::vector<double>& data() { return a_; }
    const std::vector<double>& data() const { return a_; }

    Tens& operator+=(const Tens& o);
    Tens& operator-=(const Tens& o);
    Tens& operator*=(double c);

private:
    int n_ = 0, r_ = 0;
    std::vector<double> a_;
};

Tens operator+(Tens a, const Tens& b);
Tens operator-(Tens a, const Tens& b);
Tens operator*(double c, Tens a);

// average over all permutations of the listed slots (all slots if empty)
Tens symmetrize(const Tens& t, const std::vector<int>& slots = {});
bool is_symmetric(const Tens& t, double tol);
double max_abs(const Tens& t);
double max_abs_diff(const Tens& a, const Tens& b);

// all permutations of {0..k-1}, cached
const std::vector<std::vector<int>>& permutations(int k);

} // namespace heatrace
