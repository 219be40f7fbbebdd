// Copyright 2026 The lcmkit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>

#include "lcm/common.hpp"

namespace lcm {

enum class CodecKind { identity, linear };

const char* to_string(CodecKind kind);
CodecKind parse_codec_kind(const std::string& text);

// Frozen encoder/decoder pair. The linear kind projects onto the leading
// eigenvectors of the data second-moment matrix and whitens, so encode is a
// linear map and decode(encode(x)) is an orthogonal projection.
struct LatentCodec {
  CodecKind kind = CodecKind::identity;
  int d_data = 0;
  int d_latent = 0;
  Mat encode_matrix;  // d_latent x d_data, linear kind only
  Mat decode_matrix;  // d_data x d_latent, linear kind only

  static LatentCodec identity(int dim);
};

// Columns of `data` are samples.
LatentCodec fit_linear_codec(const Mat& data, int d_latent);

Vec encode(const LatentCodec& c, const Vec& x);
Vec decode(const LatentCodec& c, const Vec& z);
Mat encode(const LatentCodec& c, const Mat& x);
Mat decode(const LatentCodec& c, const Mat& z);

}  // namespace lcm
