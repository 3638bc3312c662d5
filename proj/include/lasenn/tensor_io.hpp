#pragma once

// In-memory matrices and label vectors plus their binary file formats.
//
// LSNN tensor file (28-byte header, little-endian):
//   0..3   magic "LSNN"
//   4      version (1)
//   5      dtype (0 = float32; 1 = float64, used only inside model checkpoints)
//   6..7   reserved, zero
//   8..15  rows, u64
//   16..23 cols, u64
//   24..27 reserved, zero
//   then rows*cols elements, row-major
//
// LSNL label file (20-byte header):
//   0..3   magic "LSNL"
//   4      version (1)
//   5..7   reserved, zero
//   8..15  count, u64
//   16..19 num_classes, u32
//   then count u32 labels

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "lasenn/error.hpp"

namespace lasenn {

/// Dense row-major float32 matrix (samples x dims).
class TensorMatrix {
  public:
    TensorMatrix() = default;

    TensorMatrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), data_(rows * cols, 0.0f) {}

    TensorMatrix(std::size_t rows, std::size_t cols, std::vector<float> data)
        : rows_(rows), cols_(cols), data_(std::move(data)) {
        if (data_.size() != rows_ * cols_)
            throw ArgumentError("TensorMatrix: data length " + std::to_string(data_.size()) + " != rows*cols " +
                                std::to_string(rows_ * cols_));
    }

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    bool empty() const noexcept { return rows_ == 0; }

    std::span<float> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    std::span<const float> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

    float& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    float operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    std::span<float> data() noexcept { return data_; }
    std::span<const float> data() const noexcept { return data_; }

    /// Append one row; the first appended row fixes cols for an empty 0x0 matrix.
    void push_row(std::span<const float> values) {
        if (rows_ == 0 && cols_ == 0) cols_ = values.size();
        if (values.size() != cols_) throw ArgumentError("TensorMatrix::push_row: width mismatch");
        data_.insert(data_.end(), values.begin(), values.end());
        ++rows_;
    }

    bool all_finite() const noexcept {
        for (float v : data_)
            if (!std::isfinite(v)) return false;
        return true;
    }

    /// Bitwise equality (distinguishes -0.0f from 0.0f).
    friend bool operator==(const TensorMatrix& a, const TensorMatrix& b) {
        return a.rows_ == b.rows_ && a.cols_ == b.cols_ &&
               (a.data_.empty() || std::memcmp(a.data_.data(), b.data_.data(), a.data_.size() * sizeof(float)) == 0);
    }

  private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<float> data_;
};

/// Integer class labels, each < num_classes.
struct LabelVector {
    std::vector<std::uint32_t> labels;
    std::uint32_t num_classes = 0;

    std::size_t size() const noexcept { return labels.size(); }
    std::uint32_t operator[](std::size_t i) const { return labels[i]; }

    void validate() const {
        for (std::size_t i = 0; i < labels.size(); ++i)
            if (labels[i] >= num_classes)
                throw ValidationError("label " + std::to_string(labels[i]) + " at row " + std::to_string(i) +
                                      " >= num_classes " + std::to_string(num_classes));
    }

    friend bool operator==(const LabelVector&, const LabelVector&) = default;
};

/// Embeddings, network outputs and labels of one sample set; the kNN database.
struct LabeledCorpus {
    TensorMatrix embeddings;
    TensorMatrix logits;
    LabelVector labels;

    std::size_t size() const noexcept { return embeddings.rows(); }

    void validate() const {
        if (embeddings.rows() != logits.rows() || embeddings.rows() != labels.size())
            throw ValidationError("LabeledCorpus: row counts differ (embeddings " + std::to_string(embeddings.rows()) +
                                  ", logits " + std::to_string(logits.rows()) + ", labels " +
                                  std::to_string(labels.size()) + ")");
        if (logits.rows() > 0 && logits.cols() != labels.num_classes)
            throw ValidationError("LabeledCorpus: logits width != num_classes");
        labels.validate();
    }
};

namespace detail {

inline constexpr std::array<char, 4> kTensorMagic{'L', 'S', 'N', 'N'};
inline constexpr std::array<char, 4> kLabelMagic{'L', 'S', 'N', 'L'};
inline constexpr std::uint8_t kFormatVersion = 1;
inline constexpr std::uint8_t kDtypeF32 = 0;
inline constexpr std::uint8_t kDtypeF64 = 1;
inline constexpr std::size_t kTensorHeaderSize = 28;
inline constexpr std::size_t kLabelHeaderSize = 20;

template <typename U>
void put_le(unsigned char* out, U value) {
    for (std::size_t i = 0; i < sizeof(U); ++i) out[i] = static_cast<unsigned char>(value >> (8 * i));
}

template <typename U>
U get_le(const unsigned char* in) {
    U value = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) value |= static_cast<U>(in[i]) << (8 * i);
    return value;
}

inline void write_bytes(std::ostream& out, const unsigned char* bytes, std::size_t n) {
    out.write(reinterpret_cast<const char*>(bytes), static_cast<std::streamsize>(n));
    if (!out) throw IoError("write failed");
}

inline void read_bytes(std::istream& in, unsigned char* bytes, std::size_t n, const char* what) {
    in.read(reinterpret_cast<char*>(bytes), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in.gcount()) != n) throw IoError(std::string("truncated ") + what);
}

inline void write_tensor_header(std::ostream& out, std::uint8_t dtype, std::uint64_t rows, std::uint64_t cols) {
    std::array<unsigned char, kTensorHeaderSize> h{};
    std::memcpy(h.data(), kTensorMagic.data(), 4);
    h[4] = kFormatVersion;
    h[5] = dtype;
    put_le<std::uint64_t>(h.data() + 8, rows);
    put_le<std::uint64_t>(h.data() + 16, cols);
    write_bytes(out, h.data(), h.size());
}

struct TensorHeader {
    std::uint8_t dtype;
    std::uint64_t rows;
    std::uint64_t cols;
};

inline TensorHeader read_tensor_header(std::istream& in) {
    std::array<unsigned char, kTensorHeaderSize> h{};
    read_bytes(in, h.data(), h.size(), "tensor header");
    if (std::memcmp(h.data(), kTensorMagic.data(), 4) != 0) throw FormatError("bad tensor magic");
    if (h[4] != kFormatVersion) throw FormatError("unsupported tensor version " + std::to_string(h[4]));
    if (h[5] != kDtypeF32 && h[5] != kDtypeF64) throw FormatError("unsupported tensor dtype " + std::to_string(h[5]));
    const auto rows = get_le<std::uint64_t>(h.data() + 8);
    const auto cols = get_le<std::uint64_t>(h.data() + 16);
    if (cols != 0 && rows > (UINT64_MAX / 8) / cols) throw FormatError("tensor shape overflows");
    return {h[5], rows, cols};
}

/// Element-wise LE payload, read in bounded chunks so a lying header cannot force a huge allocation up front.
template <typename Float, typename Bits>
std::vector<Float> read_payload(std::istream& in, std::uint64_t count) {
    std::vector<Float> out;
    constexpr std::size_t kChunk = 1 << 16;
    std::vector<unsigned char> buf(kChunk * sizeof(Bits));
    std::uint64_t remaining = count;
    while (remaining > 0) {
        const std::size_t n = static_cast<std::size_t>(std::min<std::uint64_t>(remaining, kChunk));
        read_bytes(in, buf.data(), n * sizeof(Bits), "tensor payload");
        for (std::size_t i = 0; i < n; ++i) {
            const Float v = std::bit_cast<Float>(get_le<Bits>(buf.data() + i * sizeof(Bits)));
            if (!std::isfinite(v))
                throw ValidationError("non-finite tensor element at flat index " + std::to_string(out.size()));
            out.push_back(v);
        }
        remaining -= n;
    }
    return out;
}

template <typename Float, typename Bits>
void write_payload(std::ostream& out, std::span<const Float> values) {
    std::vector<unsigned char> buf(values.size() * sizeof(Bits));
    for (std::size_t i = 0; i < values.size(); ++i)
        put_le<Bits>(buf.data() + i * sizeof(Bits), std::bit_cast<Bits>(values[i]));
    if (!buf.empty()) write_bytes(out, buf.data(), buf.size());
}

template <typename Float>
void require_finite(std::span<const Float> values) {
    for (std::size_t i = 0; i < values.size(); ++i)
        if (!std::isfinite(values[i]))
            throw ValidationError("non-finite tensor element at flat index " + std::to_string(i));
}

} // namespace detail

/// Serialize as LSNN v1 float32.
inline void write_tensor(const TensorMatrix& m, std::ostream& out) {
    detail::require_finite(m.data());
    detail::write_tensor_header(out, detail::kDtypeF32, m.rows(), m.cols());
    detail::write_payload<float, std::uint32_t>(out, m.data());
}

inline TensorMatrix read_tensor(std::istream& in) {
    const auto h = detail::read_tensor_header(in);
    if (h.dtype != detail::kDtypeF32) throw FormatError("expected float32 tensor, got dtype " + std::to_string(h.dtype));
    auto data = detail::read_payload<float, std::uint32_t>(in, h.rows * h.cols);
    return TensorMatrix(static_cast<std::size_t>(h.rows), static_cast<std::size_t>(h.cols), std::move(data));
}

/// float64 block in LSNN layout (dtype 1). Model checkpoints keep full training precision this way.
inline void write_tensor_f64(std::ostream& out, std::size_t rows, std::size_t cols, std::span<const double> values) {
    if (values.size() != rows * cols) throw ArgumentError("write_tensor_f64: size mismatch");
    detail::require_finite(values);
    detail::write_tensor_header(out, detail::kDtypeF64, rows, cols);
    detail::write_payload<double, std::uint64_t>(out, values);
}

struct TensorF64 {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;
};

inline TensorF64 read_tensor_f64(std::istream& in) {
    const auto h = detail::read_tensor_header(in);
    if (h.dtype != detail::kDtypeF64) throw FormatError("expected float64 block, got dtype " + std::to_string(h.dtype));
    return {static_cast<std::size_t>(h.rows), static_cast<std::size_t>(h.cols),
            detail::read_payload<double, std::uint64_t>(in, h.rows * h.cols)};
}

inline void write_labels(const LabelVector& labels, std::ostream& out) {
    labels.validate();
    std::array<unsigned char, detail::kLabelHeaderSize> h{};
    std::memcpy(h.data(), detail::kLabelMagic.data(), 4);
    h[4] = detail::kFormatVersion;
    detail::put_le<std::uint64_t>(h.data() + 8, labels.size());
    detail::put_le<std::uint32_t>(h.data() + 16, labels.num_classes);
    detail::write_bytes(out, h.data(), h.size());
    std::vector<unsigned char> buf(labels.size() * 4);
    for (std::size_t i = 0; i < labels.size(); ++i) detail::put_le<std::uint32_t>(buf.data() + 4 * i, labels[i]);
    if (!buf.empty()) detail::write_bytes(out, buf.data(), buf.size());
}

inline LabelVector read_labels(std::istream& in) {
    std::array<unsigned char, detail::kLabelHeaderSize> h{};
    detail::read_bytes(in, h.data(), h.size(), "label header");
    if (std::memcmp(h.data(), detail::kLabelMagic.data(), 4) != 0) throw FormatError("bad label magic");
    if (h[4] != detail::kFormatVersion) throw FormatError("unsupported label version " + std::to_string(h[4]));
    const auto count = detail::get_le<std::uint64_t>(h.data() + 8);
    LabelVector out;
    out.num_classes = detail::get_le<std::uint32_t>(h.data() + 16);
    std::array<unsigned char, 4> word{};
    for (std::uint64_t i = 0; i < count; ++i) {
        detail::read_bytes(in, word.data(), 4, "label payload");
        out.labels.push_back(detail::get_le<std::uint32_t>(word.data()));
    }
    out.validate();
    return out;
}

// File helpers.

inline std::ofstream open_for_write(const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open for writing: " + path.string());
    return out;
}

inline std::ifstream open_for_read(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open for reading: " + path.string());
    return in;
}

inline void save_tensor(const TensorMatrix& m, const std::filesystem::path& path) {
    auto out = open_for_write(path);
    write_tensor(m, out);
}

inline TensorMatrix load_tensor(const std::filesystem::path& path) {
    auto in = open_for_read(path);
    return read_tensor(in);
}

inline void save_labels(const LabelVector& labels, const std::filesystem::path& path) {
    auto out = open_for_write(path);
    write_labels(labels, out);
}

inline LabelVector load_labels(const std::filesystem::path& path) {
    auto in = open_for_read(path);
    return read_labels(in);
}

/// Writes `<prefix>_emb.lsnn`, `<prefix>_logits.lsnn`, `<prefix>_labels.lsnl`.
inline void save_corpus(const LabeledCorpus& c, const std::filesystem::path& dir, const std::string& prefix) {
    c.validate();
    save_tensor(c.embeddings, dir / (prefix + "_emb.lsnn"));
    save_tensor(c.logits, dir / (prefix + "_logits.lsnn"));
    save_labels(c.labels, dir / (prefix + "_labels.lsnl"));
}

inline LabeledCorpus load_corpus(const std::filesystem::path& dir, const std::string& prefix) {
    LabeledCorpus c{load_tensor(dir / (prefix + "_emb.lsnn")), load_tensor(dir / (prefix + "_logits.lsnn")),
                    load_labels(dir / (prefix + "_labels.lsnl"))};
    c.validate();
    return c;
}

} // namespace lasenn
