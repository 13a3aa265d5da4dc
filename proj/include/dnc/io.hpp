#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "dnc/energy_model.hpp"
#include "dnc/errors.hpp"
#include "dnc/linalg.hpp"
#include "dnc/targets.hpp"
#include "dnc/training.hpp"
#include "dnc/types.hpp"

namespace dnc {

inline std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

/// Writes draws as CSV with header dim_0..dim_{d-1}, followed by
/// score_0..score_{d-1} when scores are given.
inline void write_samples_csv(const std::string& path, const Mat& samples, const Mat* scores = nullptr) {
    if (scores && (scores->rows() != samples.rows() || scores->cols() != samples.cols()))
        throw ShapeError("write_samples_csv: scores shape differs from samples");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write '" + path + "'");
    const Eigen::Index d = samples.cols();
    for (Eigen::Index j = 0; j < d; ++j) out << (j ? "," : "") << "dim_" << j;
    if (scores)
        for (Eigen::Index j = 0; j < d; ++j) out << ",score_" << j;
    out << '\n';
    for (Eigen::Index i = 0; i < samples.rows(); ++i) {
        for (Eigen::Index j = 0; j < d; ++j) out << (j ? "," : "") << format_double(samples(i, j));
        if (scores)
            for (Eigen::Index j = 0; j < d; ++j) out << ',' << format_double((*scores)(i, j));
        out << '\n';
    }
    if (!out) throw DataError("write failed for '" + path + "'");
}

inline void write_samples_csv(const std::string& path, const ShardDraws& draws) {
    write_samples_csv(path, draws.samples, &draws.scores);
}

/// Reads a sample CSV; the score block is returned when present.
struct SampleFile {
    Mat samples;
    std::optional<Mat> scores;
};

inline SampleFile read_samples_csv(const std::string& path) {
    auto [header, table] = read_numeric_csv(path);
    Eigen::Index d = 0;
    while (d < static_cast<Eigen::Index>(header.size()) && header[static_cast<std::size_t>(d)] == "dim_" + std::to_string(d)) ++d;
    if (d == 0) throw DataError("'" + path + "': header must start with dim_0");
    SampleFile f;
    f.samples = table.leftCols(d);
    const auto rest = static_cast<Eigen::Index>(header.size()) - d;
    if (rest == d) {
        for (Eigen::Index j = 0; j < d; ++j)
            if (header[static_cast<std::size_t>(d + j)] != "score_" + std::to_string(j))
                throw DataError("'" + path + "': expected column score_" + std::to_string(j));
        f.scores = table.rightCols(d);
    } else if (rest != 0) {
        throw DataError("'" + path + "': unexpected extra columns");
    }
    if (f.samples.rows() == 0) throw DataError("'" + path + "': no data rows");
    return f;
}

/// Dataset as CSV: one column per feature, then the response column "y".
inline void write_dataset_csv(const std::string& path, const Dataset& ds) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write '" + path + "'");
    for (Eigen::Index j = 0; j < ds.n_features(); ++j)
        out << (j < static_cast<Eigen::Index>(ds.feature_names.size()) ? ds.feature_names[static_cast<std::size_t>(j)]
                                                                        : "x" + std::to_string(j))
            << ',';
    out << "y\n";
    for (Eigen::Index i = 0; i < ds.size(); ++i) {
        for (Eigen::Index j = 0; j < ds.n_features(); ++j) out << format_double(ds.features(i, j)) << ',';
        out << format_double(ds.response(i)) << '\n';
    }
    if (!out) throw DataError("write failed for '" + path + "'");
}

// ---- model files -----------------------------------------------------------
//
// Layout (all little-endian):
//   "DNCEM1"                      6 bytes
//   input_dim, hidden_dim, n_blocks   3 x uint32
//   beta_min, beta_max            2 x float64
//   mu (d), sqrt_cov (d*d), inv_sqrt_cov (d*d), log_det   float64, row-major
//   parameter count               uint64
//   parameters                    float64, declaration order

inline constexpr std::array<char, 6> kModelMagic{'D', 'N', 'C', 'E', 'M', '1'};

namespace detail {

template <typename T>
void put_le(std::vector<unsigned char>& buf, T v) {
    static_assert(std::is_trivially_copyable_v<T>);
    unsigned char bytes[sizeof(T)];
    std::memcpy(bytes, &v, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
    buf.insert(buf.end(), bytes, bytes + sizeof(T));
}

class LeReader {
public:
    LeReader(const std::vector<unsigned char>& buf, std::string path) : buf_(buf), path_(std::move(path)) {}

    template <typename T>
    T get() {
        if (pos_ + sizeof(T) > buf_.size()) {
            std::ostringstream os;
            os << "'" << path_ << "': truncated model file (header needs at least " << pos_ + sizeof(T)
               << " bytes, file has " << buf_.size() << ")";
            throw FormatError(os.str());
        }
        unsigned char bytes[sizeof(T)];
        std::memcpy(bytes, buf_.data() + pos_, sizeof(T));
        if constexpr (std::endian::native == std::endian::big) std::reverse(bytes, bytes + sizeof(T));
        pos_ += sizeof(T);
        T v;
        std::memcpy(&v, bytes, sizeof(T));
        return v;
    }
    std::size_t pos() const { return pos_; }
    std::size_t size() const { return buf_.size(); }

private:
    const std::vector<unsigned char>& buf_;
    std::string path_;
    std::size_t pos_ = 0;
};

}  // namespace detail

inline void save_model(const std::string& path, const EnergyModel& model, const AffineMap& map) {
    const auto& cfg = model.config();
    if (map.dim() != cfg.input_dim) throw ShapeError("save_model: map and model dimensions differ");
    std::vector<unsigned char> buf(kModelMagic.begin(), kModelMagic.end());
    detail::put_le<std::uint32_t>(buf, static_cast<std::uint32_t>(cfg.input_dim));
    detail::put_le<std::uint32_t>(buf, static_cast<std::uint32_t>(cfg.hidden_dim));
    detail::put_le<std::uint32_t>(buf, static_cast<std::uint32_t>(cfg.n_residual_blocks));
    detail::put_le(buf, model.schedule().beta_min());
    detail::put_le(buf, model.schedule().beta_max());
    const Eigen::Index d = map.dim();
    for (Eigen::Index i = 0; i < d; ++i) detail::put_le(buf, map.mu(i));
    for (const Mat* m : {&map.sqrt_cov, &map.inv_sqrt_cov})
        for (Eigen::Index i = 0; i < d; ++i)
            for (Eigen::Index j = 0; j < d; ++j) detail::put_le(buf, (*m)(i, j));
    detail::put_le(buf, map.log_det_sqrt_cov);
    const Vec& p = model.parameters();
    detail::put_le<std::uint64_t>(buf, static_cast<std::uint64_t>(p.size()));
    for (Eigen::Index i = 0; i < p.size(); ++i) detail::put_le(buf, p(i));

    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write '" + path + "'");
    out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (!out) throw DataError("write failed for '" + path + "'");
}

inline TrainedShard load_model(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open '" + path + "'");
    const std::vector<unsigned char> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (buf.size() < kModelMagic.size() || !std::equal(kModelMagic.begin(), kModelMagic.end(), buf.begin()))
        throw FormatError("'" + path + "': not a model file or unsupported version (expected magic DNCEM1)");
    std::vector<unsigned char> body(buf.begin() + kModelMagic.size(), buf.end());
    detail::LeReader rd(body, path);

    NetConfig cfg;
    cfg.input_dim = static_cast<int>(rd.get<std::uint32_t>());
    cfg.hidden_dim = static_cast<int>(rd.get<std::uint32_t>());
    cfg.n_residual_blocks = static_cast<int>(rd.get<std::uint32_t>());
    try {
        cfg.validate();
    } catch (const Error& e) {
        throw FormatError("'" + path + "': corrupt header: " + e.what());
    }
    const double bmin = rd.get<double>();
    const double bmax = rd.get<double>();
    const Eigen::Index d = cfg.input_dim;
    const Eigen::Index np = cfg.parameter_count();
    const std::size_t expected = kModelMagic.size() + 3 * 4 + 2 * 8 + static_cast<std::size_t>(d + 2 * d * d + 1) * 8 + 8 +
                                 static_cast<std::size_t>(np) * 8;
    if (buf.size() != expected) {
        std::ostringstream os;
        os << "'" << path << "': model file length mismatch, expected " << expected << " bytes, found " << buf.size();
        throw FormatError(os.str());
    }
    TrainedShard out;
    out.map.mu.resize(d);
    out.map.sqrt_cov.resize(d, d);
    out.map.inv_sqrt_cov.resize(d, d);
    for (Eigen::Index i = 0; i < d; ++i) out.map.mu(i) = rd.get<double>();
    for (Mat* m : {&out.map.sqrt_cov, &out.map.inv_sqrt_cov})
        for (Eigen::Index i = 0; i < d; ++i)
            for (Eigen::Index j = 0; j < d; ++j) (*m)(i, j) = rd.get<double>();
    out.map.log_det_sqrt_cov = rd.get<double>();
    const auto count = rd.get<std::uint64_t>();
    if (count != static_cast<std::uint64_t>(np)) throw FormatError("'" + path + "': parameter count does not match header");
    Vec params(np);
    for (Eigen::Index i = 0; i < np; ++i) params(i) = rd.get<double>();
    VpSchedule sched;
    try {
        sched = VpSchedule(bmin, bmax);
    } catch (const Error& e) {
        throw FormatError("'" + path + "': corrupt schedule: " + e.what());
    }
    out.model = EnergyModel(cfg, sched, std::move(params));
    return out;
}

}  // namespace dnc
