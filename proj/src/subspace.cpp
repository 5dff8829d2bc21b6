#include "drums/subspace.hpp"

#include <Eigen/SVD>

#include <cmath>

namespace drums {

SubspaceBasis decompose(const CArray &stack, std::size_t rank) {
  if (stack.rank() != 3)
    throw DataError("decompose: stack must be (contrast, y, x)");
  const std::size_t nt = stack.dim(0), ny = stack.dim(1), nx = stack.dim(2), np = ny * nx;
  if (rank < 1 || rank > std::min(nt, np))
    throw ConfigError("decompose: rank " + std::to_string(rank) + " outside [1, " +
                      std::to_string(std::min(nt, np)) + "]");

  Eigen::MatrixXcd casorati(static_cast<Eigen::Index>(np), static_cast<Eigen::Index>(nt));
  for (std::size_t t = 0; t < nt; ++t)
    for (std::size_t r = 0; r < np; ++r)
      casorati(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(t)) = stack[t * np + r];

  Eigen::BDCSVD<Eigen::MatrixXcd> svd(casorati, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const auto &U = svd.matrixU();
  const auto &V = svd.matrixV();

  SubspaceBasis b;
  b.spatial = CArray({rank, ny, nx});
  b.temporal = CArray({rank, nt});
  for (std::size_t l = 0; l < rank; ++l) {
    const auto li = static_cast<Eigen::Index>(l);
    b.singular_values.push_back(svd.singularValues()(li));

    std::size_t peak = 0;
    double peak_mag = -1.0;
    for (std::size_t t = 0; t < nt; ++t) {
      const double m = std::abs(V(static_cast<Eigen::Index>(t), li));
      if (m > peak_mag) {
        peak_mag = m;
        peak = t;
      }
    }
    const cx tp = std::conj(V(static_cast<Eigen::Index>(peak), li));
    const cx rot = peak_mag > 0.0 ? std::conj(tp) / std::abs(tp) : cx{1.0, 0.0};
    for (std::size_t t = 0; t < nt; ++t)
      b.temporal(l, t) = std::conj(V(static_cast<Eigen::Index>(t), li)) * rot;
    b.temporal(l, peak) = cx(std::abs(b.temporal(l, peak)), 0.0);
    const cx crot = std::conj(rot);
    for (std::size_t r = 0; r < np; ++r)
      b.spatial[l * np + r] = U(static_cast<Eigen::Index>(r), li) * crot;
  }
  return b;
}

SubspaceBasis truncate(const SubspaceBasis &basis, std::size_t rank) {
  if (rank < 1 || rank > basis.rank())
    throw ConfigError("truncate: rank " + std::to_string(rank) + " exceeds basis rank " +
                      std::to_string(basis.rank()));
  if (rank == basis.rank())
    return basis;
  SubspaceBasis b;
  const std::size_t np = basis.ny() * basis.nx(), nt = basis.contrasts();
  b.spatial = CArray({rank, basis.ny(), basis.nx()},
                     std::vector<cx>(basis.spatial.data(), basis.spatial.data() + rank * np));
  b.temporal = CArray({rank, nt}, std::vector<cx>(basis.temporal.data(),
                                                  basis.temporal.data() + rank * nt));
  b.singular_values.assign(basis.singular_values.begin(),
                           basis.singular_values.begin() + static_cast<std::ptrdiff_t>(rank));
  return b;
}

namespace {

long window_origin(std::size_t n) {
  return (static_cast<long>(n) - static_cast<long>(kPreparedSize)) / 2;
}

bool inside(long v, std::size_t n) { return v >= 0 && v < static_cast<long>(n); }

void check_congruent(const SubspaceBasis &b, const PreparedBasis &p) {
  if (p.rank() != b.rank() || p.ny != b.ny() || p.nx != b.nx())
    throw DataError("refined basis (rank " + std::to_string(p.rank()) + ", " +
                    std::to_string(p.ny) + "x" + std::to_string(p.nx) +
                    ") does not match subspace basis (rank " + std::to_string(b.rank()) + ", " +
                    std::to_string(b.ny()) + "x" + std::to_string(b.nx()) + ")");
  require_shape(p.channels.shape(), {2 * p.rank(), kPreparedSize, kPreparedSize},
                "refined basis channels");
}

} // namespace

PreparedBasis prepare_basis(const SubspaceBasis &basis) {
  const std::size_t L = basis.rank(), ny = basis.ny(), nx = basis.nx(), np = ny * nx;
  const std::size_t S = kPreparedSize;
  PreparedBasis p;
  p.ny = ny;
  p.nx = nx;
  p.offset_y = window_origin(ny);
  p.offset_x = window_origin(nx);
  p.channels = RArray({2 * L, S, S});

  for (std::size_t l = 0; l < L; ++l) {
    cx sum{};
    for (std::size_t r = 0; r < np; ++r)
      sum += basis.spatial[l * np + r];
    const double phi = std::abs(sum) > 0.0 ? std::arg(sum) : 0.0;
    p.phase.push_back(phi);
    const cx derot = std::polar(1.0, -phi);

    for (std::size_t i = 0; i < S; ++i)
      for (std::size_t j = 0; j < S; ++j) {
        const long y = p.offset_y + static_cast<long>(i), x = p.offset_x + static_cast<long>(j);
        cx v{};
        if (inside(y, ny) && inside(x, nx))
          v = basis.spatial(l, static_cast<std::size_t>(y), static_cast<std::size_t>(x)) * derot;
        p.channels(2 * l, i, j) = v.real();
        p.channels(2 * l + 1, i, j) = v.imag();
      }
  }

  const double n = static_cast<double>(S * S);
  for (std::size_t c = 0; c < 2 * L; ++c) {
    auto ch = p.channels.slab(c);
    double mean = 0.0;
    for (double v : ch)
      mean += v;
    mean /= n;
    double var = 0.0;
    for (double v : ch)
      var += (v - mean) * (v - mean);
    double sd = std::sqrt(var / n);
    if (!(sd > 0.0))
      sd = 1.0;
    for (double &v : ch)
      v = (v - mean) / sd;
    p.mean.push_back(mean);
    p.stddev.push_back(sd);
  }
  return p;
}

CArray unprepare(const PreparedBasis &p) {
  const std::size_t L = p.rank(), S = kPreparedSize;
  require_shape(p.channels.shape(), {2 * L, S, S}, "prepared basis");
  if (p.mean.size() != 2 * L || p.stddev.size() != 2 * L)
    throw DataError("prepared basis: z-score statistics do not match channel count");
  CArray out({L, S, S});
  for (std::size_t l = 0; l < L; ++l) {
    const cx rot = std::polar(1.0, p.phase[l]);
    for (std::size_t i = 0; i < S; ++i)
      for (std::size_t j = 0; j < S; ++j) {
        const double re = p.channels(2 * l, i, j) * p.stddev[2 * l] + p.mean[2 * l];
        const double im = p.channels(2 * l + 1, i, j) * p.stddev[2 * l + 1] + p.mean[2 * l + 1];
        out(l, i, j) = cx(re, im) * rot;
      }
  }
  return out;
}

SubspaceBasis apply_refined(const SubspaceBasis &basis, const PreparedBasis &refined) {
  check_congruent(basis, refined);
  const CArray window = unprepare(refined);
  SubspaceBasis out = basis;
  const std::size_t S = kPreparedSize;
  for (std::size_t l = 0; l < basis.rank(); ++l)
    for (std::size_t i = 0; i < S; ++i)
      for (std::size_t j = 0; j < S; ++j) {
        const long y = refined.offset_y + static_cast<long>(i);
        const long x = refined.offset_x + static_cast<long>(j);
        if (inside(y, basis.ny()) && inside(x, basis.nx()))
          out.spatial(l, static_cast<std::size_t>(y), static_cast<std::size_t>(x)) =
              window(l, i, j);
      }
  return out;
}

CArray recombine(const SubspaceBasis &basis, const PreparedBasis *refined) {
  if (refined)
    return recombine(apply_refined(basis, *refined), nullptr);
  const std::size_t L = basis.rank(), nt = basis.contrasts();
  const std::size_t ny = basis.ny(), nx = basis.nx(), np = ny * nx;
  require_shape(basis.temporal.shape(), {L, nt}, "temporal basis");
  CArray x({nt, ny, nx});
  for (std::size_t t = 0; t < nt; ++t) {
    cx *dst = x.data() + t * np;
    for (std::size_t l = 0; l < L; ++l) {
      const cx w = basis.singular_values[l] * basis.temporal(l, t);
      const cx *src = basis.spatial.data() + l * np;
      for (std::size_t r = 0; r < np; ++r)
        dst[r] += w * src[r];
    }
  }
  return x;
}

} // namespace drums
