#include "heatrace/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <numeric>
#include <stdexcept>

namespace heatrace {

Tens::Tens(int n, int rank, double v) : n_(n), r_(rank)
{
    std::size_t sz = 1;
    for (int i = 0; i < rank; ++i) sz *= static_cast<std::size_t>(n);
    a_.assign(sz, v);
}

std::size_t Tens::offset(const int* idx) const
{
    std::size_t off = 0;
    for (int i = 0; i < r_; ++i) off = off * n_ + idx[i];
    return off;
}

void Tens::unravel(std::size_t flat, int* idx) const
{
    for (int i = r_ - 1; i >= 0; --i) {
        idx[i] = static_cast<int>(flat % n_);
        flat /= n_;
    }
}

Tens& Tens::operator+=(const Tens& o)
{
    if (o.size() != size()) throw std::invalid_argument("Tens: shape mismatch");
    for (std::size_t k = 0; k < a_.size(); ++k) a_[k] += o.a_[k];
    return *this;
}

Tens& Tens::operator-=(const Tens& o)
{
    if (o.size() != size()) throw std::invalid_argument("Tens: shape mismatch");
    for (std::size_t k = 0; k < a_.size(); ++k) a_[k] -= o.a_[k];
    return *this;
}

Tens& Tens::operator*=(double c)
{
    for (auto& x : a_) x *= c;
    return *this;
}

Tens operator+(Tens a, const Tens& b) { return a += b; }
Tens operator-(Tens a, const Tens& b) { return a -= b; }
Tens operator*(double c, Tens a) { return a *= c; }

const std::vector<std::vector<int>>& permutations(int k)
{
    static std::mutex mu;
    static std::map<int, std::vector<std::vector<int>>> cache;
    std::lock_guard<std::mutex> lock(mu);
    auto it = cache.find(k);
    if (it != cache.end()) return it->second;
    std::vector<int> p(k);
    std::iota(p.begin(), p.end(), 0);
    std::vector<std::vector<int>> all;
    do {
        all.push_back(p);
    } while (std::next_permutation(p.begin(), p.end()));
    return cache.emplace(k, std::move(all)).first->second;
}

Tens symmetrize(const Tens& t, const std::vector<int>& slots_in)
{
    std::vector<int> slots = slots_in;
    if (slots.empty()) {
        slots.resize(t.rank());
        std::iota(slots.begin(), slots.end(), 0);
    }
    const int k = static_cast<int>(slots.size());
    const auto& perms = permutations(k);
    Tens out(t.dim(), t.rank());
    std::vector<int> idx(t.rank()), src(t.rank());
    for (std::size_t f = 0; f < t.size(); ++f) {
        t.unravel(f, idx.data());
        double acc = 0.0;
        for (const auto& p : perms) {
            src = idx;
            for (int a = 0; a < k; ++a) src[slots[a]] = idx[slots[p[a]]];
            acc += t.at(src.data());
        }
        out[f] = acc / static_cast<double>(perms.size());
    }
    return out;
}

bool is_symmetric(const Tens& t, double tol)
{
    return max_abs_diff(t, symmetrize(t)) <= tol * std::max(1.0, max_abs(t));
}

double max_abs(const Tens& t)
{
    double m = 0.0;
    for (double x : t.data()) m = std::max(m, std::abs(x));
    return m;
}

double max_abs_diff(const Tens& a, const Tens& b)
{
    if (a.size() != b.size()) throw std::invalid_argument("Tens: shape mismatch");
    double m = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) m = std::max(m, std::abs(a[k] - b[k]));
    return m;
}

} // namespace heatrace
