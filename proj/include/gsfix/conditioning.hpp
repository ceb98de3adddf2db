#pragma once

#include "gsfix/endian.hpp"
#include "gsfix/error.hpp"
#include "gsfix/io/files.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

namespace gsfix {

using TokenMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVectorF = Eigen::Matrix<float, 1, Eigen::Dynamic>;

inline constexpr int kGeometryTokenDim = 2048;
inline constexpr int kImageTokenDim = 1024;
inline constexpr int kFusionDim = 3072;
inline constexpr double kLayerNormEps = 1e-5;

inline void require_finite(const TokenMatrix &t, const char *what) {
    require(t.allFinite(), ErrorKind::InvalidArgument, std::string(what) + " contains non-finite entries");
}

// Normalization over the feature axis of every row, then per-feature scale and shift.
inline TokenMatrix layer_norm(const TokenMatrix &x, const RowVectorF &scale, const RowVectorF &shift,
                              double eps = kLayerNormEps) {
    require(scale.size() == x.cols() && shift.size() == x.cols(), ErrorKind::Shape,
            "layer_norm parameters do not match the feature dimension");
    TokenMatrix out(x.rows(), x.cols());
    const double inv_c = 1.0 / static_cast<double>(x.cols());
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
        double mean = 0.0;
        for (Eigen::Index c = 0; c < x.cols(); ++c) {
            mean += x(r, c);
        }
        mean *= inv_c;
        double var = 0.0;
        for (Eigen::Index c = 0; c < x.cols(); ++c) {
            const double d = x(r, c) - mean;
            var += d * d;
        }
        var *= inv_c;
        const double inv_std = 1.0 / std::sqrt(var + eps);
        for (Eigen::Index c = 0; c < x.cols(); ++c) {
            out(r, c) = static_cast<float>((x(r, c) - mean) * inv_std * scale[c] + shift[c]);
        }
    }
    return out;
}

struct FusionProjector {
    TokenMatrix w3d; // kGeometryTokenDim x kFusionDim
    RowVectorF b3d;
    TokenMatrix w2d; // kImageTokenDim x kFusionDim
    RowVectorF b2d;
    RowVectorF norm3d_scale, norm3d_shift;
    RowVectorF norm2d_scale, norm2d_shift;

    // Gaussian weights with std 1/sqrt(fan_in), small biases, unit norm scale, zero shift.
    static FusionProjector random(std::uint64_t seed) {
        std::mt19937_64 rng(seed);
        auto fill = [&](Eigen::Index rows, Eigen::Index cols, double stddev) {
            std::normal_distribution<float> n(0.0f, static_cast<float>(stddev));
            TokenMatrix m(rows, cols);
            for (Eigen::Index i = 0; i < m.size(); ++i) {
                m.data()[i] = n(rng);
            }
            return m;
        };
        FusionProjector p;
        p.w3d = fill(kGeometryTokenDim, kFusionDim, 1.0 / std::sqrt(double(kGeometryTokenDim)));
        p.b3d = fill(1, kFusionDim, 0.02);
        p.w2d = fill(kImageTokenDim, kFusionDim, 1.0 / std::sqrt(double(kImageTokenDim)));
        p.b2d = fill(1, kFusionDim, 0.02);
        p.norm3d_scale = RowVectorF::Ones(kFusionDim);
        p.norm3d_shift = RowVectorF::Zero(kFusionDim);
        p.norm2d_scale = RowVectorF::Ones(kFusionDim);
        p.norm2d_shift = RowVectorF::Zero(kFusionDim);
        return p;
    }

    void validate() const {
        require(w3d.rows() == kGeometryTokenDim && w3d.cols() == kFusionDim && b3d.size() == kFusionDim,
                ErrorKind::Shape, "geometry projection must be 2048 x 3072");
        require(w2d.rows() == kImageTokenDim && w2d.cols() == kFusionDim && b2d.size() == kFusionDim,
                ErrorKind::Shape, "image projection must be 1024 x 3072");
        require(norm3d_scale.size() == kFusionDim && norm3d_shift.size() == kFusionDim &&
                    norm2d_scale.size() == kFusionDim && norm2d_shift.size() == kFusionDim,
                ErrorKind::Shape, "normalization parameters must have 3072 features");
    }
};

inline TokenMatrix project_branch(const TokenMatrix &tokens, const TokenMatrix &w, const RowVectorF &b,
                                  const RowVectorF &scale, const RowVectorF &shift) {
    require(tokens.cols() == w.rows(), ErrorKind::Shape,
            "token width " + std::to_string(tokens.cols()) + " does not match projection input " +
                std::to_string(w.rows()));
    require_finite(tokens, "tokens");
    TokenMatrix lin = tokens * w;
    lin.rowwise() += b;
    return layer_norm(lin, scale, shift);
}

inline TokenMatrix project_geometry(const TokenMatrix &t3d, const FusionProjector &p) {
    return project_branch(t3d, p.w3d, p.b3d, p.norm3d_scale, p.norm3d_shift);
}

inline TokenMatrix project_image(const TokenMatrix &t2d, const FusionProjector &p) {
    return project_branch(t2d, p.w2d, p.b2d, p.norm2d_scale, p.norm2d_shift);
}

// Geometry (L x 2048) and image (L x 1024) tokens -> L x 3072 fusion tokens.
inline TokenMatrix project_and_fuse(const TokenMatrix &t3d, const TokenMatrix &t2d, const FusionProjector &p) {
    p.validate();
    require(t3d.rows() == t2d.rows(), ErrorKind::Shape,
            "geometry and image token counts differ (" + std::to_string(t3d.rows()) + " vs " +
                std::to_string(t2d.rows()) + ")");
    return project_geometry(t3d, p) + project_image(t2d, p);
}

// Stack per-view token matrices along the token axis.
inline TokenMatrix concat_tokens(const std::vector<TokenMatrix> &views) {
    require(!views.empty(), ErrorKind::InvalidArgument, "no token matrices to concatenate");
    Eigen::Index rows = 0;
    for (const TokenMatrix &v : views) {
        require(v.cols() == views.front().cols(), ErrorKind::Shape, "token widths differ");
        rows += v.rows();
    }
    TokenMatrix out(rows, views.front().cols());
    Eigen::Index r = 0;
    for (const TokenMatrix &v : views) {
        out.middleRows(r, v.rows()) = v;
        r += v.rows();
    }
    return out;
}

// ---------------------------------------------------------------------------
// Cross-attention
// ---------------------------------------------------------------------------

struct AttentionWeights {
    TokenMatrix wq, wk, wv, wo; // D x D each
    int heads = 1;

    static AttentionWeights random(int dim, std::uint64_t seed, int heads = 1) {
        std::mt19937_64 rng(seed);
        std::normal_distribution<float> n(0.0f, static_cast<float>(1.0 / std::sqrt(double(dim))));
        auto fill = [&] {
            TokenMatrix m(dim, dim);
            for (Eigen::Index i = 0; i < m.size(); ++i) {
                m.data()[i] = n(rng);
            }
            return m;
        };
        AttentionWeights w;
        w.wq = fill();
        w.wk = fill();
        w.wv = fill();
        w.wo = fill();
        w.heads = heads;
        return w;
    }

    Eigen::Index dim() const { return wq.rows(); }

    void validate() const {
        const Eigen::Index d = wq.rows();
        for (const TokenMatrix *m : {&wq, &wk, &wv, &wo}) {
            require(m->rows() == d && m->cols() == d, ErrorKind::Shape, "attention projections must all be D x D");
            require(m->allFinite(), ErrorKind::InvalidArgument, "attention weights contain non-finite entries");
        }
        require(heads >= 1 && d % heads == 0, ErrorKind::Shape, "feature dimension must be divisible by head count");
    }
};

struct AttentionTrace {
    // Row-stochastic attention weights per head, N x M.
    std::vector<Eigen::MatrixXd> probabilities;
    // Attention output before the residual add, N x D.
    Eigen::MatrixXd update;
};

// Fusion tokens act as keys and values for the view tokens; the result is
// added back onto t_view.
inline TokenMatrix cross_attention(const TokenMatrix &t_view, const TokenMatrix &t_fusion,
                                   const AttentionWeights &w, AttentionTrace *trace = nullptr) {
    w.validate();
    const Eigen::Index d = w.dim();
    require(t_view.cols() == d && t_fusion.cols() == d, ErrorKind::Shape,
            "token width does not match the attention dimension " + std::to_string(d));
    require(t_fusion.rows() >= 1, ErrorKind::Shape, "cross-attention needs at least one fusion token");
    require_finite(t_view, "view tokens");
    require_finite(t_fusion, "fusion tokens");

    const Eigen::MatrixXd view = t_view.cast<double>();
    const Eigen::MatrixXd fusion = t_fusion.cast<double>();
    const Eigen::MatrixXd q = view * w.wq.cast<double>();
    const Eigen::MatrixXd k = fusion * w.wk.cast<double>();
    const Eigen::MatrixXd v = fusion * w.wv.cast<double>();
    const Eigen::Index dh = d / w.heads;
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));

    Eigen::MatrixXd heads_out(view.rows(), d);
    if (trace) {
        trace->probabilities.clear();
    }
    for (int h = 0; h < w.heads; ++h) {
        Eigen::MatrixXd logits = q.middleCols(h * dh, dh) * k.middleCols(h * dh, dh).transpose() * inv_sqrt;
        for (Eigen::Index r = 0; r < logits.rows(); ++r) {
            const double m = logits.row(r).maxCoeff();
            logits.row(r) = (logits.row(r).array() - m).exp().matrix();
            logits.row(r) /= logits.row(r).sum();
        }
        heads_out.middleCols(h * dh, dh) = logits * v.middleCols(h * dh, dh);
        if (trace) {
            trace->probabilities.push_back(std::move(logits));
        }
    }
    const Eigen::MatrixXd update = heads_out * w.wo.cast<double>();
    if (trace) {
        trace->update = update;
    }
    return (view + update).cast<float>();
}

// ---------------------------------------------------------------------------
// Binary tensor files: "TOK1", uint32 rows, uint32 cols, row-major float32, little-endian.
// ---------------------------------------------------------------------------

inline void save_tokens(const std::filesystem::path &path, const TokenMatrix &t) {
    std::string bytes("TOK1");
    auto append = [&bytes](auto v) {
        v = detail::to_little(v);
        bytes.append(reinterpret_cast<const char *>(&v), sizeof v);
    };
    append(static_cast<std::uint32_t>(t.rows()));
    append(static_cast<std::uint32_t>(t.cols()));
    for (Eigen::Index i = 0; i < t.size(); ++i) {
        append(t.data()[i]);
    }
    atomic_write(path, bytes);
}

inline TokenMatrix load_tokens(const std::filesystem::path &path) {
    std::ifstream in(path, std::ios::binary);
    require(static_cast<bool>(in), ErrorKind::Io, "cannot open " + path.string());
    char magic[4];
    std::uint32_t dims[2];
    in.read(magic, 4);
    in.read(reinterpret_cast<char *>(dims), sizeof dims);
    require(in && std::memcmp(magic, "TOK1", 4) == 0, ErrorKind::Io, path.string() + " is not a token file");
    const std::uint32_t rows = detail::to_little(dims[0]);
    const std::uint32_t cols = detail::to_little(dims[1]);
    const auto expected = static_cast<std::uintmax_t>(rows) * cols * sizeof(float) + 12;
    require(std::filesystem::file_size(path) == expected, ErrorKind::Io,
            path.string() + ": size does not match the header dimensions");
    TokenMatrix t(rows, cols);
    in.read(reinterpret_cast<char *>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(float)));
    require(static_cast<bool>(in), ErrorKind::Io, "truncated token file " + path.string());
    for (Eigen::Index i = 0; i < t.size(); ++i) {
        t.data()[i] = detail::to_little(t.data()[i]);
    }
    return t;
}

} // namespace gsfix
