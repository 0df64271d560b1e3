#pragma once

// Finite-dimensional Wiener chaos calculus over an orthonormal basis
// e_0, ..., e_{d-1}: symmetric kernels, contractions, the product formula,
// Malliavin derivative, and evaluation of multiple integrals on a Gaussian
// sample z (z_j = X(e_j)).

#include "chaoslab/errors.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace chaoslab {

/// Probabilists' Hermite polynomial H_q(x).
inline double hermite(int q, double x) {
    if (q < 0) throw InvalidArgument("hermite: negative order");
    if (q == 0) return 1.0;
    double prev = 1.0, cur = x;
    for (int k = 1; k < q; ++k) {
        const double next = x * cur - k * prev;
        prev = cur;
        cur = next;
    }
    return cur;
}

namespace detail {

inline double binomial(int n, int k) {
    if (k < 0 || k > n) return 0.0;
    double r = 1.0;
    for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
    return std::round(r);
}

inline double factorial(int n) {
    double r = 1.0;
    for (int i = 2; i <= n; ++i) r *= i;
    return r;
}

}  // namespace detail

/// Sorted multi-indices of a given length over {0, ..., dim-1}, ranked in
/// colexicographic order of the strictly increasing shift a_i + i.
class MultiIndexSpace {
public:
    MultiIndexSpace(int order, int dim) : order_(order), dim_(dim) {
        if (order < 0 || dim < 1) throw InvalidArgument("MultiIndexSpace: need order >= 0, dim >= 1");
        const auto count = static_cast<std::size_t>(detail::binomial(dim + order - 1, order));
        indices_.assign(count * static_cast<std::size_t>(order), 0);
        multiplicity_.assign(count, 1.0);
        std::vector<int> a(static_cast<std::size_t>(order), 0);
        for (;;) {
            const std::size_t r = rank(a);
            std::copy(a.begin(), a.end(), indices_.begin() + static_cast<std::ptrdiff_t>(r * a.size()));
            multiplicity_[r] = permutation_count(a);
            int i = order - 1;
            while (i >= 0 && a[static_cast<std::size_t>(i)] == dim - 1) --i;
            if (i < 0) break;
            const int v = a[static_cast<std::size_t>(i)] + 1;
            for (int j = i; j < order; ++j) a[static_cast<std::size_t>(j)] = v;
        }
    }

    int order() const { return order_; }
    int dim() const { return dim_; }
    std::size_t size() const { return multiplicity_.size(); }

    std::span<const int> operator[](std::size_t r) const {
        return {indices_.data() + r * static_cast<std::size_t>(order_), static_cast<std::size_t>(order_)};
    }

    /// Number of distinct orderings of the r-th multi-index.
    double multiplicity(std::size_t r) const { return multiplicity_[r]; }

    /// Rank of a sorted multi-index.
    std::size_t rank(std::span<const int> sorted) const {
        double r = 0.0;
        for (std::size_t i = 0; i < sorted.size(); ++i)
            r += detail::binomial(sorted[i] + static_cast<int>(i), static_cast<int>(i) + 1);
        return static_cast<std::size_t>(r);
    }

    static std::shared_ptr<const MultiIndexSpace> shared(int order, int dim) {
        static std::mutex m;
        static std::map<std::pair<int, int>, std::shared_ptr<const MultiIndexSpace>> cache;
        std::lock_guard lock(m);
        auto& slot = cache[{order, dim}];
        if (!slot) slot = std::make_shared<const MultiIndexSpace>(order, dim);
        return slot;
    }

private:
    static double permutation_count(std::span<const int> a) {
        double c = detail::factorial(static_cast<int>(a.size()));
        for (std::size_t i = 0; i < a.size();) {
            std::size_t j = i;
            while (j < a.size() && a[j] == a[i]) ++j;
            c /= detail::factorial(static_cast<int>(j - i));
            i = j;
        }
        return c;
    }

    int order_;
    int dim_;
    std::vector<int> indices_;
    std::vector<double> multiplicity_;
};

/// Dense (not necessarily symmetric) tensor in (R^d)^{(x) q}, row-major.
class Tensor {
public:
    Tensor(int order, int dim) : order_(order), dim_(dim) {
        if (order < 0 || dim < 1) throw InvalidArgument("Tensor: need order >= 0, dim >= 1");
        double sz = std::pow(static_cast<double>(dim), order);
        if (sz > 1 << 24) throw InvalidArgument("Tensor: dense size too large");
        data_.assign(static_cast<std::size_t>(sz), 0.0);
    }

    int order() const { return order_; }
    int dim() const { return dim_; }
    std::size_t size() const { return data_.size(); }

    std::size_t offset(std::span<const int> idx) const {
        std::size_t o = 0;
        for (int i : idx) o = o * static_cast<std::size_t>(dim_) + static_cast<std::size_t>(i);
        return o;
    }
    double& operator()(std::span<const int> idx) { return data_[offset(idx)]; }
    double operator()(std::span<const int> idx) const { return data_[offset(idx)]; }
    double& operator()(std::initializer_list<int> idx) { return (*this)(std::span<const int>(idx.begin(), idx.size())); }
    double operator()(std::initializer_list<int> idx) const {
        return (*this)(std::span<const int>(idx.begin(), idx.size()));
    }

    std::vector<double>& data() { return data_; }
    const std::vector<double>& data() const { return data_; }

    /// Multi-index of the given flat offset.
    std::vector<int> unravel(std::size_t off) const {
        std::vector<int> idx(static_cast<std::size_t>(order_));
        for (int i = order_ - 1; i >= 0; --i) {
            idx[static_cast<std::size_t>(i)] = static_cast<int>(off % static_cast<std::size_t>(dim_));
            off /= static_cast<std::size_t>(dim_);
        }
        return idx;
    }

private:
    int order_;
    int dim_;
    std::vector<double> data_;
};

/// Element of the symmetric tensor power (R^d)^{(.) q}, stored as one
/// coefficient per sorted multi-index.
class SymmetricTensor {
public:
    SymmetricTensor(int order, int dim)
        : space_(MultiIndexSpace::shared(order, dim)), coef_(space_->size(), 0.0) {}

    static SymmetricTensor scalar(double c, int dim) {
        SymmetricTensor t(0, dim);
        t.coef_[0] = c;
        return t;
    }

    /// Unit basis vector e_i as an order-1 kernel.
    static SymmetricTensor basis(int i, int dim) {
        SymmetricTensor t(1, dim);
        t.set({i}, 1.0);
        return t;
    }

    static SymmetricTensor from_vector(std::span<const double> v) {
        SymmetricTensor t(1, static_cast<int>(v.size()));
        for (std::size_t i = 0; i < v.size(); ++i) t.coef_[i] = v[i];
        return t;
    }

    static SymmetricTensor from_matrix(const Eigen::MatrixXd& a) {
        if (a.rows() != a.cols()) throw DimensionMismatch("from_matrix: matrix must be square");
        if (!a.isApprox(a.transpose(), 1e-12) && a.norm() > 0)
            throw InvalidArgument("from_matrix: matrix must be symmetric");
        const int d = static_cast<int>(a.rows());
        SymmetricTensor t(2, d);
        for (int i = 0; i < d; ++i)
            for (int j = i; j < d; ++j) t.set({i, j}, 0.5 * (a(i, j) + a(j, i)));
        return t;
    }

    int order() const { return space_->order(); }
    int dim() const { return space_->dim(); }
    std::size_t size() const { return coef_.size(); }
    const MultiIndexSpace& space() const { return *space_; }

    std::span<const int> index(std::size_t r) const { return (*space_)[r]; }
    double multiplicity(std::size_t r) const { return space_->multiplicity(r); }
    double coefficient(std::size_t r) const { return coef_[r]; }
    double& coefficient(std::size_t r) { return coef_[r]; }
    std::span<const double> coefficients() const { return coef_; }

    /// Entry at an arbitrary (unsorted) multi-index.
    double operator()(std::span<const int> idx) const { return coef_[rank_of(idx)]; }
    double operator()(std::initializer_list<int> idx) const {
        return (*this)(std::span<const int>(idx.begin(), idx.size()));
    }
    void set(std::span<const int> idx, double v) { coef_[rank_of(idx)] = v; }
    void set(std::initializer_list<int> idx, double v) { set(std::span<const int>(idx.begin(), idx.size()), v); }

    /// Squared norm in (R^d)^{(x) q}.
    double norm_sq() const { return inner(*this); }

    double inner(const SymmetricTensor& o) const {
        require_same_shape(o);
        double s = 0.0;
        for (std::size_t r = 0; r < coef_.size(); ++r) s += multiplicity(r) * coef_[r] * o.coef_[r];
        return s;
    }

    SymmetricTensor& operator+=(const SymmetricTensor& o) {
        require_same_shape(o);
        for (std::size_t r = 0; r < coef_.size(); ++r) coef_[r] += o.coef_[r];
        return *this;
    }
    SymmetricTensor& operator*=(double c) {
        for (double& x : coef_) x *= c;
        return *this;
    }
    friend SymmetricTensor operator*(double c, SymmetricTensor t) { return t *= c; }
    friend SymmetricTensor operator+(SymmetricTensor a, const SymmetricTensor& b) { return a += b; }

    /// f(., x): the order q-1 kernel obtained by fixing one slot at basis index x.
    SymmetricTensor slice(int x) const {
        if (order() < 1) throw RankError("slice: order-0 tensor has no slot");
        SymmetricTensor out(order() - 1, dim());
        std::vector<int> buf(static_cast<std::size_t>(order()));
        for (std::size_t r = 0; r < out.size(); ++r) {
            auto b = out.index(r);
            std::copy(b.begin(), b.end(), buf.begin());
            buf.back() = x;
            out.coef_[r] = (*this)(buf);
        }
        return out;
    }

    Tensor to_dense() const {
        Tensor t(order(), dim());
        for (std::size_t off = 0; off < t.size(); ++off) t.data()[off] = (*this)(t.unravel(off));
        return t;
    }

    Eigen::MatrixXd to_matrix() const {
        if (order() != 2) throw RankError("to_matrix: order must be 2");
        Eigen::MatrixXd a(dim(), dim());
        for (int i = 0; i < dim(); ++i)
            for (int j = 0; j < dim(); ++j) a(i, j) = (*this)({i, j});
        return a;
    }

    bool is_zero() const {
        return std::all_of(coef_.begin(), coef_.end(), [](double x) { return x == 0.0; });
    }

private:
    std::size_t rank_of(std::span<const int> idx) const {
        if (idx.size() != static_cast<std::size_t>(order()))
            throw RankError("index length " + std::to_string(idx.size()) + " != order " + std::to_string(order()));
        int buf[16];
        if (idx.size() > 16) throw RankError("order too large");
        for (std::size_t i = 0; i < idx.size(); ++i) {
            if (idx[i] < 0 || idx[i] >= dim()) throw DimensionMismatch("index out of range");
            buf[i] = idx[i];
        }
        std::sort(buf, buf + idx.size());
        return space_->rank({buf, idx.size()});
    }

    void require_same_shape(const SymmetricTensor& o) const {
        if (o.dim() != dim()) throw DimensionMismatch("tensor dimensions differ");
        if (o.order() != order()) throw RankError("tensor orders differ");
    }

    std::shared_ptr<const MultiIndexSpace> space_;
    std::vector<double> coef_;
};

namespace detail {

inline void check_contraction(const SymmetricTensor& f, const SymmetricTensor& g, int r) {
    if (f.dim() != g.dim())
        throw DimensionMismatch("contraction: dimensions " + std::to_string(f.dim()) + " and " +
                                std::to_string(g.dim()));
    if (r < 0 || r > std::min(f.order(), g.order()))
        throw RankError("contraction order " + std::to_string(r) + " outside [0, min(p, q)]");
}

// Calls fn(k) for every k in {0..d-1}^r.
template <class Fn>
void for_each_tuple(int r, int d, std::vector<int>& k, Fn&& fn) {
    k.assign(static_cast<std::size_t>(r), 0);
    for (;;) {
        fn(k);
        int i = r - 1;
        while (i >= 0 && k[static_cast<std::size_t>(i)] == d - 1) k[static_cast<std::size_t>(i--)] = 0;
        if (i < 0) return;
        ++k[static_cast<std::size_t>(i)];
    }
}

}  // namespace detail

/// f (x)_r g: pairs the last r slots of f with the last r slots of g. The
/// result has the p - r free slots of f followed by the q - r free slots of g.
inline Tensor contract(const SymmetricTensor& f, const SymmetricTensor& g, int r) {
    detail::check_contraction(f, g, r);
    const int p = f.order(), q = g.order(), d = f.dim();
    Tensor out(p + q - 2 * r, d);
    std::vector<int> fi(static_cast<std::size_t>(p)), gi(static_cast<std::size_t>(q)), k;
    for (std::size_t off = 0; off < out.size(); ++off) {
        const auto t = out.unravel(off);
        std::copy(t.begin(), t.begin() + (p - r), fi.begin());
        std::copy(t.begin() + (p - r), t.end(), gi.begin());
        double s = 0.0;
        detail::for_each_tuple(r, d, k, [&](const std::vector<int>& kk) {
            std::copy(kk.begin(), kk.end(), fi.begin() + (p - r));
            std::copy(kk.begin(), kk.end(), gi.begin() + (q - r));
            s += f(fi) * g(gi);
        });
        out.data()[off] = s;
    }
    return out;
}

/// Average over all index permutations.
inline SymmetricTensor symmetrize(const Tensor& t) {
    SymmetricTensor out(t.order(), t.dim());
    std::vector<int> perm;
    for (std::size_t r = 0; r < out.size(); ++r) {
        auto a = out.index(r);
        perm.assign(a.begin(), a.end());
        double s = 0.0;
        std::size_t count = 0;
        do {
            s += t(perm);
            ++count;
        } while (std::next_permutation(perm.begin(), perm.end()));
        out.coefficient(r) = s / static_cast<double>(count);
    }
    return out;
}

/// f (~x)_r g computed directly in canonical coordinates: for a sorted
/// multi-index a of length s = p + q - 2r, average over the C(s, p - r) ways
/// of routing p - r positions of a to f and the rest to g.
inline SymmetricTensor symmetrized_contraction(const SymmetricTensor& f, const SymmetricTensor& g, int r) {
    detail::check_contraction(f, g, r);
    const int p = f.order(), q = g.order(), d = f.dim(), s = p + q - 2 * r;
    SymmetricTensor out(s, d);
    std::vector<std::uint32_t> masks;
    for (std::uint32_t m = 0; m < (1u << s); ++m)
        if (std::popcount(m) == p - r) masks.push_back(m);
    const double norm = 1.0 / static_cast<double>(masks.size());
    std::vector<int> fi(static_cast<std::size_t>(p)), gi(static_cast<std::size_t>(q)), k;
    for (std::size_t ra = 0; ra < out.size(); ++ra) {
        const auto a = out.index(ra);
        double sum = 0.0;
        for (std::uint32_t m : masks) {
            std::size_t nf = 0, ng = 0;
            for (int pos = 0; pos < s; ++pos) {
                if (m & (1u << pos))
                    fi[nf++] = a[static_cast<std::size_t>(pos)];
                else
                    gi[ng++] = a[static_cast<std::size_t>(pos)];
            }
            detail::for_each_tuple(r, d, k, [&](const std::vector<int>& kk) {
                std::copy(kk.begin(), kk.end(), fi.begin() + (p - r));
                std::copy(kk.begin(), kk.end(), gi.begin() + (q - r));
                sum += f(fi) * g(gi);
            });
        }
        out.coefficient(ra) = sum * norm;
    }
    return out;
}

/// Finite Wiener chaos expansion c + sum_q I_q(f_q).
class ChaosExpansion {
public:
    explicit ChaosExpansion(int dim) : dim_(dim) {
        if (dim < 1) throw InvalidArgument("ChaosExpansion: dim must be >= 1");
    }

    /// I_q(f).
    static ChaosExpansion integral(const SymmetricTensor& f) {
        ChaosExpansion F(f.dim());
        F.add(f);
        return F;
    }

    static ChaosExpansion constant(double c, int dim) {
        ChaosExpansion F(dim);
        F.constant_ = c;
        return F;
    }

    int dim() const { return dim_; }
    double constant() const { return constant_; }
    const std::map<int, SymmetricTensor>& kernels() const { return terms_; }

    /// Adds I_q(f); an order-0 kernel adds to the constant.
    ChaosExpansion& add(const SymmetricTensor& f) {
        if (f.dim() != dim_) throw DimensionMismatch("ChaosExpansion: kernel dimension mismatch");
        if (f.order() == 0) {
            constant_ += f.coefficient(0);
            return *this;
        }
        auto it = terms_.find(f.order());
        if (it == terms_.end())
            terms_.emplace(f.order(), f);
        else
            it->second += f;
        return *this;
    }

    ChaosExpansion& operator+=(const ChaosExpansion& o) {
        if (o.dim_ != dim_) throw DimensionMismatch("ChaosExpansion: dimension mismatch");
        constant_ += o.constant_;
        for (const auto& [q, f] : o.terms_) add(f);
        return *this;
    }

    ChaosExpansion& operator*=(double c) {
        constant_ *= c;
        for (auto& [q, f] : terms_) f *= c;
        return *this;
    }
    friend ChaosExpansion operator*(double c, ChaosExpansion F) { return F *= c; }
    friend ChaosExpansion operator+(ChaosExpansion a, const ChaosExpansion& b) { return a += b; }

    /// Orders q >= 1 with a nonzero kernel.
    std::vector<int> orders() const {
        std::vector<int> out;
        for (const auto& [q, f] : terms_)
            if (!f.is_zero()) out.push_back(q);
        return out;
    }

    /// The order q if F = I_q(f) with no constant and no other chaos.
    int pure_order() const {
        const auto o = orders();
        if (o.size() != 1 || constant_ != 0.0) throw NotPureChaos("expansion is not a single-chaos element");
        return o.front();
    }

    const SymmetricTensor& kernel(int q) const {
        auto it = terms_.find(q);
        if (it == terms_.end()) throw RankError("no kernel of order " + std::to_string(q));
        return it->second;
    }

    double mean() const { return constant_; }

    /// E[F^2] = c^2 + sum_q q! ||f_q||^2.
    double second_moment() const {
        double s = constant_ * constant_;
        for (const auto& [q, f] : terms_) s += detail::factorial(q) * f.norm_sq();
        return s;
    }

private:
    int dim_;
    double constant_ = 0.0;
    std::map<int, SymmetricTensor> terms_;
};

/// I_p(f) I_q(g) = sum_{r=0}^{p^q} r! C(p,r) C(q,r) I_{p+q-2r}(f (~x)_r g).
inline ChaosExpansion product_formula(const SymmetricTensor& f, const SymmetricTensor& g) {
    if (f.dim() != g.dim()) throw DimensionMismatch("product_formula: dimensions differ");
    const int p = f.order(), q = g.order();
    ChaosExpansion out(f.dim());
    for (int r = 0; r <= std::min(p, q); ++r) {
        const double c = detail::factorial(r) * detail::binomial(p, r) * detail::binomial(q, r);
        out.add(c * symmetrized_contraction(f, g, r));
    }
    return out;
}

inline ChaosExpansion multiply(const ChaosExpansion& a, const ChaosExpansion& b) {
    if (a.dim() != b.dim()) throw DimensionMismatch("multiply: dimensions differ");
    ChaosExpansion out = ChaosExpansion::constant(a.constant() * b.constant(), a.dim());
    for (const auto& [q, g] : b.kernels()) out.add(a.constant() * g);
    for (const auto& [p, f] : a.kernels()) {
        out.add(b.constant() * f);
        for (const auto& [q, g] : b.kernels()) out += product_formula(f, g);
    }
    return out;
}

/// E[F G] via the isometry.
inline double expectation_of_product(const ChaosExpansion& a, const ChaosExpansion& b) {
    if (a.dim() != b.dim()) throw DimensionMismatch("expectation_of_product: dimensions differ");
    double s = a.constant() * b.constant();
    for (const auto& [q, f] : a.kernels()) {
        auto it = b.kernels().find(q);
        if (it != b.kernels().end()) s += detail::factorial(q) * f.inner(it->second);
    }
    return s;
}

/// I_q(f)(z) = sum over sorted multi-indices a of mult(a) f_a prod_j H_{m_j(a)}(z_j),
/// m_j(a) the number of occurrences of j in a.
inline double evaluate_hermite(const SymmetricTensor& f, std::span<const double> z) {
    if (z.size() != static_cast<std::size_t>(f.dim())) throw DimensionMismatch("evaluate: sample length");
    const int q = f.order();
    if (q == 0) return f.coefficient(0);
    const std::size_t d = z.size();
    std::vector<double> table(d * static_cast<std::size_t>(q + 1));
    for (std::size_t j = 0; j < d; ++j) {
        double* h = table.data() + j * static_cast<std::size_t>(q + 1);
        h[0] = 1.0;
        h[1] = z[j];
        for (int k = 1; k < q; ++k) h[k + 1] = z[j] * h[k] - k * h[k - 1];
    }
    double s = 0.0;
    for (std::size_t r = 0; r < f.size(); ++r) {
        const double c = f.coefficient(r);
        if (c == 0.0) continue;
        const auto a = f.index(r);
        double prod = 1.0;
        for (std::size_t i = 0; i < a.size();) {
            std::size_t j = i;
            while (j < a.size() && a[j] == a[i]) ++j;
            prod *= table[static_cast<std::size_t>(a[i]) * static_cast<std::size_t>(q + 1) + (j - i)];
            i = j;
        }
        s += f.multiplicity(r) * c * prod;
    }
    return s;
}

/// I_2(A)(z) = z^T A z - tr A.
inline double evaluate_quadratic(const SymmetricTensor& f, std::span<const double> z) {
    if (f.order() != 2) throw RankError("evaluate_quadratic: order must be 2");
    if (z.size() != static_cast<std::size_t>(f.dim())) throw DimensionMismatch("evaluate: sample length");
    double s = 0.0;
    for (std::size_t r = 0; r < f.size(); ++r) {
        const auto a = f.index(r);
        const double zi = z[static_cast<std::size_t>(a[0])], zj = z[static_cast<std::size_t>(a[1])];
        s += f.multiplicity(r) * f.coefficient(r) * (a[0] == a[1] ? zi * zi - 1.0 : zi * zj);
    }
    return s;
}

inline double evaluate(const ChaosExpansion& F, std::span<const double> z) {
    if (z.size() != static_cast<std::size_t>(F.dim())) throw DimensionMismatch("evaluate: sample length");
    double s = F.constant();
    for (const auto& [q, f] : F.kernels()) s += q == 2 ? evaluate_quadratic(f, z) : evaluate_hermite(f, z);
    return s;
}

/// D_x F for x = 0..d-1, using D_x I_q(f) = q I_{q-1}(f(., x)).
inline std::vector<ChaosExpansion> malliavin_derivative(const ChaosExpansion& F) {
    std::vector<ChaosExpansion> out(static_cast<std::size_t>(F.dim()), ChaosExpansion(F.dim()));
    for (const auto& [q, f] : F.kernels())
        for (int x = 0; x < F.dim(); ++x) out[static_cast<std::size_t>(x)].add(static_cast<double>(q) * f.slice(x));
    return out;
}

/// <DF, DG> = sum_x D_x F D_x G as a chaos expansion.
inline ChaosExpansion derivative_inner_product(const ChaosExpansion& F, const ChaosExpansion& G) {
    const auto dF = malliavin_derivative(F);
    const auto dG = malliavin_derivative(G);
    ChaosExpansion out(F.dim());
    for (std::size_t x = 0; x < dF.size(); ++x) out += multiply(dF[x], dG[x]);
    return out;
}

/// delta(DF) = sum_q q I_q(f_q); on a single chaos this is q F.
inline ChaosExpansion divergence_of_derivative(const ChaosExpansion& F) {
    ChaosExpansion out(F.dim());
    for (const auto& [q, f] : F.kernels()) out.add(static_cast<double>(q) * f);
    return out;
}

/// E[F^3] = E[F^2 F], exactly through the product formula.
inline double third_moment(const ChaosExpansion& F) { return expectation_of_product(multiply(F, F), F); }

/// E[F^4] - 3 E[F^2]^2 for F = I_q(f): E[F^4] is the L^2 norm of the
/// product-formula expansion of F^2.
inline double fourth_cumulant(const ChaosExpansion& F) {
    F.pure_order();
    const auto sq = multiply(F, F);
    const double m2 = F.second_moment();
    return sq.second_moment() - 3.0 * m2 * m2;
}

}  // namespace chaoslab
