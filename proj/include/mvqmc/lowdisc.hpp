#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "rng.hpp"

namespace mvqmc {

inline constexpr std::uint64_t kKorobovModulus = 1ULL << 31;
inline constexpr std::uint64_t kDefaultKorobovBase = 17797;

// frac with the x + u == 1 rounding case folded back to 0
inline double frac(double x) noexcept {
    double f = x - std::floor(x);
    return f >= 1.0 ? 0.0 : f;
}

struct GeneratingVector {
    std::vector<std::uint64_t> components;
    std::optional<std::uint64_t> korobov_base;

    std::size_t dimension() const noexcept { return components.size(); }
};

inline GeneratingVector korobov_vector(std::uint64_t g, std::size_t d) {
    if (d == 0) throw std::invalid_argument("korobov_vector: dimension must be positive");
    if (g == 0 || g % 2 == 0) throw std::invalid_argument("korobov_vector: base must be odd");
    GeneratingVector z;
    z.korobov_base = g;
    z.components.reserve(d);
    std::uint64_t c = 1;
    for (std::size_t j = 0; j < d; ++j) {
        z.components.push_back(c);
        c = (c * g) % kKorobovModulus;
    }
    return z;
}

// Zaremba index of the two-dimensional lattice (1, c) mod P: the smallest
// max(1,|h1|) max(1,|h2|) over nonzero dual vectors h1 + c h2 = 0 mod P.
inline std::uint64_t zaremba_index(std::uint64_t c, std::uint64_t P) {
    if (P < 2) throw std::invalid_argument("zaremba_index: P must be >= 2");
    const auto p = static_cast<std::int64_t>(P), cc = static_cast<std::int64_t>(c % P);
    std::int64_t best = p;
    for (std::int64_t h2 = 1; h2 <= p / 2; ++h2) {
        std::int64_t h1 = (p - (cc * h2) % p) % p;
        if (h1 > p / 2) h1 -= p;
        best = std::min(best, h2 * std::max<std::int64_t>(1, h1 < 0 ? -h1 : h1));
    }
    return static_cast<std::uint64_t>(best);
}

struct KorobovSearch {
    std::uint64_t base = 0;
    double worst = 0.0;     // min over P and lags of zaremba_index / P
    double geometric = 0.0; // geometric mean of the same ratios, tie-break
};

// Odd base g < g_limit whose coordinate pairs (z_j, z_{j+d}), d = 1..depth,
// have the best worst-case normalized Zaremba index over P = P_min..P_max
// (powers of two). Pairs at lag d are the lattice (1, g^d) mod P.
inline KorobovSearch korobov_base_search(std::uint64_t P_min, std::uint64_t P_max, unsigned depth,
                                         std::uint64_t g_limit) {
    if (P_min < 2 || P_max < P_min || (P_min & (P_min - 1)) || (P_max & (P_max - 1)) || depth == 0)
        throw std::invalid_argument("korobov_base_search: need powers of two 2 <= P_min <= P_max and depth >= 1");
    KorobovSearch best;
    for (std::uint64_t g = 3; g < g_limit; g += 2) {
        double worst = 1.0, log_sum = 0.0;
        std::size_t n = 0;
        for (std::uint64_t P = P_min; P <= P_max; P *= 2) {
            std::uint64_t c = 1;
            for (unsigned d = 1; d <= depth; ++d) {
                c = (c * g) % P;
                const double r = static_cast<double>(zaremba_index(c, P)) / static_cast<double>(P);
                worst = std::min(worst, r);
                log_sum += std::log(r);
                ++n;
            }
        }
        const double geo = std::exp(log_sum / static_cast<double>(n));
        if (worst > best.worst || (worst == best.worst && geo > best.geometric)) best = {g, worst, geo};
    }
    return best;
}

// How a cut thins the bridge block. every_other keeps 1-based positions
// 2, 4, ..., N (the literal x_:2 over [xi | bridge]); bridge_prefix keeps the
// first N/2 positions, which drive the coarse Brownian-bridge nodes, so the
// coarse path is the fine path sampled on the coarse grid.
enum class CutRule { every_other, bridge_prefix };

// Point coordinates are [aux | xi | bridge block]. Only the bridge block is
// thinned by a cut.
struct CoordinateLayout {
    std::size_t aux = 0;
    std::size_t bridge = 0;
    CutRule rule = CutRule::every_other;

    std::size_t dimension() const noexcept { return aux + 1 + bridge; }

    CoordinateLayout cut() const {
        if (bridge % 2 != 0) throw std::invalid_argument("CoordinateLayout::cut: bridge block length must be even");
        return {aux, bridge / 2, rule};
    }
};

template <class T>
std::vector<T> cut_coordinates(std::span<const T> x, CoordinateLayout layout) {
    if (x.size() != layout.dimension())
        throw std::invalid_argument("cut_coordinates: length " + std::to_string(x.size()) +
                                    " does not match layout dimension " + std::to_string(layout.dimension()));
    if (layout.bridge % 2 != 0) throw std::invalid_argument("cut_coordinates: bridge block length must be even");
    std::vector<T> out(x.begin(), x.begin() + static_cast<std::ptrdiff_t>(layout.aux + 1));
    out.reserve(layout.aux + 1 + layout.bridge / 2);
    const std::size_t b = layout.aux + 1;
    if (layout.rule == CutRule::every_other)
        for (std::size_t j = 1; j < layout.bridge; j += 2) out.push_back(x[b + j]);
    else
        for (std::size_t j = 0; j < layout.bridge / 2; ++j) out.push_back(x[b + j]);
    return out;
}

inline GeneratingVector cut_generating_vector(const GeneratingVector& z, CoordinateLayout layout) {
    GeneratingVector out;
    out.components = cut_coordinates<std::uint64_t>(z.components, layout);
    return out;
}

struct Provenance;

struct LatticeOrigin {
    GeneratingVector z;
    std::size_t modulus = 0;
};

struct ShiftedOrigin {
    std::shared_ptr<const Provenance> base;
    std::vector<double> shift;
};

struct ExplicitOrigin {};

struct Provenance {
    std::variant<LatticeOrigin, ShiftedOrigin, ExplicitOrigin> origin;
};

class PointSet {
public:
    PointSet() = default;

    PointSet(std::size_t count, std::size_t dimension, std::vector<double> values, Provenance provenance = {ExplicitOrigin{}})
        : count_(count), dim_(dimension), values_(std::move(values)), provenance_(std::move(provenance)) {
        if (values_.size() != count_ * dim_) throw std::invalid_argument("PointSet: value count mismatch");
        for (double v : values_)
            if (!(v >= 0.0 && v < 1.0)) throw std::invalid_argument("PointSet: coordinates must lie in [0,1)");
    }

    static PointSet from_rows(const std::vector<std::vector<double>>& rows) {
        if (rows.empty()) throw std::invalid_argument("PointSet: empty");
        std::vector<double> flat;
        for (const auto& r : rows) {
            if (r.size() != rows.front().size()) throw std::invalid_argument("PointSet: ragged rows");
            flat.insert(flat.end(), r.begin(), r.end());
        }
        return PointSet(rows.size(), rows.front().size(), std::move(flat));
    }

    std::size_t count() const noexcept { return count_; }
    std::size_t dimension() const noexcept { return dim_; }
    std::span<const double> operator[](std::size_t k) const { return {values_.data() + k * dim_, dim_}; }
    const std::vector<double>& values() const noexcept { return values_; }
    const Provenance& provenance() const noexcept { return provenance_; }

    bool has_lattice_origin() const noexcept {
        if (std::holds_alternative<LatticeOrigin>(provenance_.origin)) return true;
        if (auto s = std::get_if<ShiftedOrigin>(&provenance_.origin))
            return s->base && std::holds_alternative<LatticeOrigin>(s->base->origin);
        return false;
    }

private:
    std::size_t count_ = 0;
    std::size_t dim_ = 0;
    std::vector<double> values_;
    Provenance provenance_{ExplicitOrigin{}};
};

// Point k is {k z / P}; coordinates are formed exactly as (k z_j mod P) / P.
inline PointSet lattice_points(const GeneratingVector& z, std::size_t P) {
    if (P < 1) throw std::invalid_argument("lattice_points: P must be positive");
    if (z.dimension() == 0) throw std::invalid_argument("lattice_points: empty generating vector");
    const std::size_t d = z.dimension();
    std::vector<double> v(P * d);
    const double inv = 1.0 / static_cast<double>(P);
    std::vector<std::uint64_t> zm(d);
    for (std::size_t j = 0; j < d; ++j) zm[j] = z.components[j] % P;
    for (std::size_t k = 0; k < P; ++k)
        for (std::size_t j = 0; j < d; ++j) v[k * d + j] = static_cast<double>((k * zm[j]) % P) * inv;
    return PointSet(P, d, std::move(v), Provenance{LatticeOrigin{z, P}});
}

struct Shift {
    std::vector<double> u;
    std::uint64_t seed = 0;
    std::uint64_t level = 0;
    std::uint64_t index = 0;

    std::size_t dimension() const noexcept { return u.size(); }
};

inline Shift make_shift(std::size_t dimension, std::uint64_t seed, std::uint64_t level, std::uint64_t index) {
    Shift s{std::vector<double>(dimension), seed, level, index};
    const CounterRng rng(seed, Stream::shift, level, index);
    for (std::size_t j = 0; j < dimension; ++j) s.u[j] = rng.uniform(j);
    return s;
}

inline Shift cut_shift(const Shift& s, CoordinateLayout layout) {
    return {cut_coordinates<double>(s.u, layout), s.seed, s.level, s.index};
}

inline PointSet shift_points(const PointSet& points, std::span<const double> u) {
    if (u.size() != points.dimension()) throw std::invalid_argument("shift_points: shift dimension mismatch");
    const std::size_t d = points.dimension();
    std::vector<double> v(points.values());
    for (std::size_t k = 0; k < points.count(); ++k)
        for (std::size_t j = 0; j < d; ++j) v[k * d + j] = frac(v[k * d + j] + u[j]);
    Provenance prov{ShiftedOrigin{std::make_shared<const Provenance>(points.provenance()),
                                  std::vector<double>(u.begin(), u.end())}};
    return PointSet(points.count(), d, std::move(v), std::move(prov));
}

inline PointSet cut_points(const PointSet& points, CoordinateLayout layout) {
    if (points.dimension() != layout.dimension()) throw std::invalid_argument("cut_points: layout mismatch");
    const CoordinateLayout out_layout = layout.cut();
    std::vector<double> v;
    v.reserve(points.count() * out_layout.dimension());
    for (std::size_t k = 0; k < points.count(); ++k) {
        auto row = cut_coordinates<double>(points[k], layout);
        v.insert(v.end(), row.begin(), row.end());
    }
    Provenance prov{ExplicitOrigin{}};
    if (auto l = std::get_if<LatticeOrigin>(&points.provenance().origin)) {
        prov.origin = LatticeOrigin{cut_generating_vector(l->z, layout), l->modulus};
    } else if (auto s = std::get_if<ShiftedOrigin>(&points.provenance().origin)) {
        if (s->base && std::holds_alternative<LatticeOrigin>(s->base->origin)) {
            const auto& base = std::get<LatticeOrigin>(s->base->origin);
            auto cut_base = std::make_shared<const Provenance>(
                Provenance{LatticeOrigin{cut_generating_vector(base.z, layout), base.modulus}});
            prov.origin = ShiftedOrigin{std::move(cut_base), cut_coordinates<double>(s->shift, layout)};
        }
    }
    return PointSet(points.count(), out_layout.dimension(), std::move(v), std::move(prov));
}

// Even indices of lattice(z, P) are exactly lattice(z, P/2); the odd half is
// that set shifted by {z/P}.
inline std::pair<PointSet, PointSet> split_even_odd(const PointSet& points) {
    if (points.count() % 2 != 0) throw std::invalid_argument("split_even_odd: odd number of points");
    if (!points.has_lattice_origin()) throw std::invalid_argument("split_even_odd: point set is not a (shifted) lattice");
    const std::size_t half = points.count() / 2, d = points.dimension();
    std::vector<double> even, odd;
    even.reserve(half * d);
    odd.reserve(half * d);
    for (std::size_t k = 0; k < points.count(); ++k) {
        auto row = points[k];
        (k % 2 == 0 ? even : odd).insert((k % 2 == 0 ? even : odd).end(), row.begin(), row.end());
    }

    const LatticeOrigin* lat = std::get_if<LatticeOrigin>(&points.provenance().origin);
    std::vector<double> outer_shift(d, 0.0);
    if (!lat) {
        const auto& s = std::get<ShiftedOrigin>(points.provenance().origin);
        lat = &std::get<LatticeOrigin>(s.base->origin);
        outer_shift = s.shift;
    }
    auto half_lattice = std::make_shared<const Provenance>(Provenance{LatticeOrigin{lat->z, lat->modulus / 2}});
    std::vector<double> odd_shift(d);
    for (std::size_t j = 0; j < d; ++j)
        odd_shift[j] = frac(static_cast<double>(lat->z.components[j] % lat->modulus) / static_cast<double>(lat->modulus) +
                            outer_shift[j]);
    Provenance even_prov{ShiftedOrigin{half_lattice, outer_shift}};
    if (std::holds_alternative<LatticeOrigin>(points.provenance().origin)) even_prov = *half_lattice;
    return {PointSet(half, d, std::move(even), std::move(even_prov)),
            PointSet(half, d, std::move(odd), Provenance{ShiftedOrigin{half_lattice, std::move(odd_shift)}})};
}

inline double star_discrepancy_1d(std::span<const double> points) {
    if (points.empty()) throw std::invalid_argument("star_discrepancy_1d: empty point set");
    std::vector<double> x(points.begin(), points.end());
    for (double v : x)
        if (!(v >= 0.0 && v < 1.0)) throw std::invalid_argument("star_discrepancy_1d: value outside [0,1)");
    std::sort(x.begin(), x.end());
    const double P = static_cast<double>(x.size());
    double d = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double hi = static_cast<double>(i + 1) / P - x[i];
        const double lo = x[i] - static_cast<double>(i) / P;
        d = std::max({d, hi, lo});
    }
    return d;
}

inline double sup_shifted_discrepancy_1d(std::span<const double> points, std::size_t grid = 128) {
    if (grid == 0) throw std::invalid_argument("sup_shifted_discrepancy_1d: grid must be positive");
    std::vector<double> y(points.size());
    double sup = 0.0;
    for (std::size_t j = 0; j < grid; ++j) {
        const double u = static_cast<double>(j) / static_cast<double>(grid);
        for (std::size_t i = 0; i < points.size(); ++i) y[i] = frac(points[i] + u);
        sup = std::max(sup, star_discrepancy_1d(y));
    }
    return sup;
}

// True when the values are exactly {0, 1/P, ..., (P-1)/P} up to order, i.e.
// the finite subgroup of the circle of order P.
inline bool is_cyclic_group_1d(std::span<const double> points) {
    std::vector<double> x(points.begin(), points.end());
    std::sort(x.begin(), x.end());
    const double inv = 1.0 / static_cast<double>(x.size());
    for (std::size_t i = 0; i < x.size(); ++i)
        if (x[i] != static_cast<double>(i) * inv) return false;
    return !x.empty();
}

inline std::vector<double> column(const PointSet& points, std::size_t j) {
    if (j >= points.dimension()) throw std::out_of_range("column: coordinate index");
    std::vector<double> c(points.count());
    for (std::size_t k = 0; k < points.count(); ++k) c[k] = points[k][j];
    return c;
}

} // namespace mvqmc
