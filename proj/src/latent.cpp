// Copyright 2026 The lcmkit Authors
// SPDX-License-Identifier: Apache-2.0

#include "lcm/latent.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>

namespace lcm {

const char* to_string(CodecKind kind) { return kind == CodecKind::identity ? "identity" : "linear"; }

CodecKind parse_codec_kind(const std::string& text) {
  if (text == "identity") return CodecKind::identity;
  if (text == "linear") return CodecKind::linear;
  fail(Errc::config_type, "unknown codec '" + text + "'");
}

LatentCodec LatentCodec::identity(int dim) {
  require(dim > 0, Errc::invalid_range, "codec dimension must be positive");
  LatentCodec c;
  c.d_data = dim;
  c.d_latent = dim;
  return c;
}

LatentCodec fit_linear_codec(const Mat& data, int d_latent) {
  const auto d = static_cast<int>(data.rows());
  require(data.cols() > 0, Errc::empty_set, "codec training set is empty");
  require(d_latent >= 1 && d_latent <= d, Errc::invalid_range, "d_latent must be in [1, d_data]");
  const Mat second = data * data.transpose() / static_cast<double>(data.cols());
  Eigen::SelfAdjointEigenSolver<Mat> eig(second);
  require(eig.info() == Eigen::Success, Errc::rank_deficient, "eigen-decomposition failed");
  // Ascending order: the leading directions are the last d_latent columns.
  const Vec& lam = eig.eigenvalues();
  const double top = lam[d - 1];
  const double floor = std::max(top, 1e-300) * 1e-12 * d;
  LatentCodec c;
  c.kind = CodecKind::linear;
  c.d_data = d;
  c.d_latent = d_latent;
  c.encode_matrix.resize(d_latent, d);
  c.decode_matrix.resize(d, d_latent);
  for (int i = 0; i < d_latent; ++i) {
    const int j = d - 1 - i;
    require(lam[j] > floor, Errc::rank_deficient,
            "data spans fewer than " + std::to_string(d_latent) + " directions");
    const double scale = std::sqrt(lam[j]);
    c.encode_matrix.row(i) = eig.eigenvectors().col(j).transpose() / scale;
    c.decode_matrix.col(i) = eig.eigenvectors().col(j) * scale;
  }
  return c;
}

Vec encode(const LatentCodec& c, const Vec& x) {
  require(x.size() == c.d_data, Errc::dimension_mismatch, "encode input dimension");
  return c.kind == CodecKind::identity ? x : Vec(c.encode_matrix * x);
}

Vec decode(const LatentCodec& c, const Vec& z) {
  require(z.size() == c.d_latent, Errc::dimension_mismatch, "decode input dimension");
  return c.kind == CodecKind::identity ? z : Vec(c.decode_matrix * z);
}

Mat encode(const LatentCodec& c, const Mat& x) {
  require(x.rows() == c.d_data, Errc::dimension_mismatch, "encode input dimension");
  return c.kind == CodecKind::identity ? x : Mat(c.encode_matrix * x);
}

Mat decode(const LatentCodec& c, const Mat& z) {
  require(z.rows() == c.d_latent, Errc::dimension_mismatch, "decode input dimension");
  return c.kind == CodecKind::identity ? z : Mat(c.decode_matrix * z);
}

}  // namespace lcm
