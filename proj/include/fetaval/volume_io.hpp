#ifndef FETAVAL_VOLUME_IO_HPP
#define FETAVAL_VOLUME_IO_HPP

#include <zlib.h>

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "error.hpp"
#include "volume.hpp"

namespace fetaval {

struct LoadOptions {
    /// Strict mode rejects codes outside {0..7}; permissive maps them to
    /// background and reports through `warn`.
    bool strict_labels = true;
    std::function<void(const std::string&)> warn = [](const std::string& msg) {
        std::cerr << "warning: " << msg << '\n';
    };
};

namespace nifti {

enum DataType : std::int16_t {
    uint8 = 2,
    int16 = 4,
    int32 = 8,
    float32 = 16,
    int8 = 256,
    uint16 = 512,
};

inline constexpr int kHeaderSize = 348;
inline constexpr int kSingleFileOffset = 352;

namespace detail {

inline std::vector<char> read_all(const std::filesystem::path& path) {
    gzFile gz = gzopen(path.string().c_str(), "rb");
    if (!gz) fail(ErrorKind::io, "cannot open '" + path.string() + "'");
    std::vector<char> data;
    std::vector<char> chunk(1 << 20);
    for (;;) {
        int n = gzread(gz, chunk.data(), static_cast<unsigned>(chunk.size()));
        if (n < 0) {
            int errnum = 0;
            std::string msg = gzerror(gz, &errnum);
            gzclose(gz);
            fail(ErrorKind::format, "decompression failed for '" + path.string() + "': " + msg);
        }
        if (n == 0) break;
        data.insert(data.end(), chunk.begin(), chunk.begin() + n);
    }
    gzclose(gz);
    return data;
}

inline void write_all(const std::filesystem::path& path, const std::vector<char>& bytes) {
    const std::string p = path.string();
    const bool gzip = p.size() > 3 && p.compare(p.size() - 3, 3, ".gz") == 0;
    if (gzip) {
        gzFile gz = gzopen(p.c_str(), "wb6");
        if (!gz) fail(ErrorKind::io, "cannot write '" + p + "'");
        int n = gzwrite(gz, bytes.data(), static_cast<unsigned>(bytes.size()));
        int rc = gzclose(gz);
        if (n != static_cast<int>(bytes.size()) || rc != Z_OK) fail(ErrorKind::io, "short write to '" + p + "'");
        return;
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(ErrorKind::io, "cannot write '" + p + "'");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) fail(ErrorKind::io, "short write to '" + p + "'");
}

template <typename T>
T load(const char* p, bool swap) {
    T v;
    std::memcpy(&v, p, sizeof(T));
    if (swap && sizeof(T) > 1) {
        char* b = reinterpret_cast<char*>(&v);
        for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(b[i], b[sizeof(T) - 1 - i]);
    }
    return v;
}

template <typename T>
void store(char* p, T v, bool swap) {
    std::memcpy(p, &v, sizeof(T));
    if (swap && sizeof(T) > 1) {
        for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(p[i], p[sizeof(T) - 1 - i]);
    }
}

inline int bytes_per_voxel(std::int16_t datatype) {
    switch (datatype) {
        case uint8: case int8: return 1;
        case int16: case uint16: return 2;
        case int32: case float32: return 4;
        default: return 0;
    }
}

inline double voxel_value(const char* p, std::int16_t datatype, bool swap) {
    switch (datatype) {
        case uint8: return load<std::uint8_t>(p, swap);
        case int8: return load<std::int8_t>(p, swap);
        case int16: return load<std::int16_t>(p, swap);
        case uint16: return load<std::uint16_t>(p, swap);
        case int32: return load<std::int32_t>(p, swap);
        case float32: return load<float>(p, swap);
        default: return 0.0;
    }
}

inline bool ends_with(const std::string& s, const std::string& suffix) {
    return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

}  // namespace detail

struct Header {
    Dims dims;
    Spacing spacing;
    std::int16_t datatype = uint8;
    double vox_offset = kSingleFileOffset;
    double scl_slope = 0.0;
    double scl_inter = 0.0;
    bool swapped = false;
    bool single_file = true;
};

/// Parses the fixed 348-byte NIfTI-1 header. Endianness is detected from
/// sizeof_hdr.
inline Header parse_header(const std::vector<char>& bytes, const std::string& where) {
    using detail::load;
    if (bytes.size() < static_cast<std::size_t>(kHeaderSize))
        fail(ErrorKind::format, where + ": file shorter than a NIfTI-1 header");
    const char* h = bytes.data();
    Header hdr;
    if (load<std::int32_t>(h, false) == kHeaderSize) {
        hdr.swapped = false;
    } else if (load<std::int32_t>(h, true) == kHeaderSize) {
        hdr.swapped = true;
    } else {
        fail(ErrorKind::format, where + ": sizeof_hdr is not 348");
    }
    const bool sw = hdr.swapped;
    if (std::memcmp(h + 344, "n+1\0", 4) == 0) {
        hdr.single_file = true;
    } else if (std::memcmp(h + 344, "ni1\0", 4) == 0) {
        hdr.single_file = false;
    } else {
        fail(ErrorKind::format, where + ": bad NIfTI-1 magic");
    }
    std::int16_t dim[8];
    for (int i = 0; i < 8; ++i) dim[i] = load<std::int16_t>(h + 40 + 2 * i, sw);
    if (dim[0] < 1 || dim[0] > 7) fail(ErrorKind::format, where + ": dim[0] out of range");
    std::int64_t extent[3] = {1, 1, 1};
    for (int i = 1; i <= dim[0]; ++i) {
        if (dim[i] < 1) fail(ErrorKind::format, where + ": non-positive dimension");
        if (i <= 3) extent[i - 1] = dim[i];
        else if (dim[i] != 1) fail(ErrorKind::format, where + ": only single 3D volumes are supported");
    }
    hdr.dims = {extent[0], extent[1], extent[2]};
    hdr.datatype = load<std::int16_t>(h + 70, sw);
    if (detail::bytes_per_voxel(hdr.datatype) == 0)
        fail(ErrorKind::format, where + ": unsupported datatype " + std::to_string(hdr.datatype));
    double pix[3];
    for (int i = 0; i < 3; ++i) {
        pix[i] = (i + 1 <= dim[0]) ? std::abs(static_cast<double>(load<float>(h + 76 + 4 * (i + 1), sw))) : 1.0;
        if (!(pix[i] > 0.0) || !std::isfinite(pix[i])) fail(ErrorKind::format, where + ": non-positive pixdim");
    }
    hdr.spacing = {pix[0], pix[1], pix[2]};
    hdr.vox_offset = load<float>(h + 108, sw);
    hdr.scl_slope = load<float>(h + 112, sw);
    hdr.scl_inter = load<float>(h + 116, sw);
    if (!std::isfinite(hdr.scl_slope)) hdr.scl_slope = 0.0;
    if (!std::isfinite(hdr.scl_inter)) hdr.scl_inter = 0.0;
    return hdr;
}

/// Converts raw voxel values into label codes: applies the intensity scaling
/// when present, then requires integral values within the label alphabet.
inline std::vector<std::uint8_t> decode_labels(const char* data, const Header& hdr, const std::string& where,
                                               const LoadOptions& opts) {
    const std::size_t n = hdr.dims.voxel_count();
    const int bpv = detail::bytes_per_voxel(hdr.datatype);
    const bool scaled = hdr.scl_slope != 0.0 && !(hdr.scl_slope == 1.0 && hdr.scl_inter == 0.0);
    std::vector<std::uint8_t> codes(n);
    std::size_t remapped = 0;
    for (std::size_t i = 0; i < n; ++i) {
        double v = detail::voxel_value(data + i * static_cast<std::size_t>(bpv), hdr.datatype, hdr.swapped);
        if (scaled) v = v * hdr.scl_slope + hdr.scl_inter;
        const double r = std::round(v);
        if (!std::isfinite(v) || std::abs(v - r) > 1e-6)
            fail(ErrorKind::data, where + ": non-integral voxel value " + std::to_string(v) + " at index " +
                                      std::to_string(i));
        if (r < 0 || r >= kLabelCount) {
            if (opts.strict_labels)
                fail(ErrorKind::alphabet, where + ": label code " + std::to_string(static_cast<long long>(r)) +
                                              " outside {0..7} at index " + std::to_string(i));
            ++remapped;
            codes[i] = 0;
            continue;
        }
        codes[i] = static_cast<std::uint8_t>(r);
    }
    if (remapped > 0 && opts.warn)
        opts.warn(where + ": mapped " + std::to_string(remapped) + " voxels with unknown codes to background");
    return codes;
}

inline LabelVolume read(const std::filesystem::path& path, const LoadOptions& opts = {}) {
    const std::string where = path.string();
    std::vector<char> bytes = detail::read_all(path);
    Header hdr = parse_header(bytes, where);
    const std::size_t payload = hdr.dims.voxel_count() * static_cast<std::size_t>(detail::bytes_per_voxel(hdr.datatype));
    std::string id = path.filename().string();
    for (const char* ext : {".nii.gz", ".nii", ".hdr.gz", ".hdr"}) {
        if (detail::ends_with(id, ext)) {
            id.resize(id.size() - std::strlen(ext));
            break;
        }
    }
    if (hdr.single_file) {
        const auto offset = static_cast<std::size_t>(std::max(hdr.vox_offset, static_cast<double>(kSingleFileOffset)));
        if (bytes.size() < offset + payload) fail(ErrorKind::format, where + ": truncated voxel data");
        return LabelVolume(hdr.dims, hdr.spacing, decode_labels(bytes.data() + offset, hdr, where, opts), id);
    }
    std::string img = where;
    if (detail::ends_with(img, ".hdr.gz")) img.replace(img.size() - 7, 7, ".img.gz");
    else if (detail::ends_with(img, ".hdr")) img.replace(img.size() - 4, 4, ".img");
    else fail(ErrorKind::format, where + ": two-file NIfTI header must end in .hdr");
    std::vector<char> data = detail::read_all(img);
    const auto offset = static_cast<std::size_t>(std::max(hdr.vox_offset, 0.0));
    if (data.size() < offset + payload) fail(ErrorKind::format, img + ": truncated voxel data");
    return LabelVolume(hdr.dims, hdr.spacing, decode_labels(data.data() + offset, hdr, where, opts), id);
}

struct WriteOptions {
    std::int16_t datatype = uint8;
    bool big_endian = false;
    float scl_slope = 0.0f;
    float scl_inter = 0.0f;
};

/// Writes a single-file NIfTI-1 (gzip when the path ends in .gz) holding
/// arbitrary stored values; used for labels and for test fixtures.
inline void write_values(const std::filesystem::path& path, const Dims& dims, const Spacing& spacing,
                         std::span<const double> values, const WriteOptions& opts = {}) {
    using detail::store;
    validate_grid(dims, spacing);
    const int bpv = detail::bytes_per_voxel(opts.datatype);
    if (bpv == 0) fail(ErrorKind::usage, "unsupported NIfTI datatype for writing");
    if (values.size() != dims.voxel_count()) fail(ErrorKind::shape, "value count does not match grid");
    const bool sw = opts.big_endian == (std::endian::native == std::endian::little);
    std::vector<char> bytes(kSingleFileOffset + values.size() * static_cast<std::size_t>(bpv), 0);
    char* h = bytes.data();
    store<std::int32_t>(h, kHeaderSize, sw);
    std::int16_t dim[8] = {3, static_cast<std::int16_t>(dims.nx), static_cast<std::int16_t>(dims.ny),
                           static_cast<std::int16_t>(dims.nz), 1, 1, 1, 1};
    for (int i = 0; i < 8; ++i) store<std::int16_t>(h + 40 + 2 * i, dim[i], sw);
    store<std::int16_t>(h + 70, opts.datatype, sw);
    store<std::int16_t>(h + 72, static_cast<std::int16_t>(bpv * 8), sw);
    float pixdim[8] = {1.0f, static_cast<float>(spacing.sx), static_cast<float>(spacing.sy),
                       static_cast<float>(spacing.sz), 0, 0, 0, 0};
    for (int i = 0; i < 8; ++i) store<float>(h + 76 + 4 * i, pixdim[i], sw);
    store<float>(h + 108, static_cast<float>(kSingleFileOffset), sw);
    store<float>(h + 112, opts.scl_slope, sw);
    store<float>(h + 116, opts.scl_inter, sw);
    h[123] = 2;  // xyzt_units: mm
    std::memcpy(h + 344, "n+1\0", 4);
    char* d = h + kSingleFileOffset;
    for (std::size_t i = 0; i < values.size(); ++i) {
        char* p = d + i * static_cast<std::size_t>(bpv);
        const double v = values[i];
        switch (opts.datatype) {
            case uint8: store<std::uint8_t>(p, static_cast<std::uint8_t>(v), sw); break;
            case int8: store<std::int8_t>(p, static_cast<std::int8_t>(v), sw); break;
            case int16: store<std::int16_t>(p, static_cast<std::int16_t>(v), sw); break;
            case uint16: store<std::uint16_t>(p, static_cast<std::uint16_t>(v), sw); break;
            case int32: store<std::int32_t>(p, static_cast<std::int32_t>(v), sw); break;
            case float32: store<float>(p, static_cast<float>(v), sw); break;
            default: break;
        }
    }
    detail::write_all(path, bytes);
}

inline void write(const std::filesystem::path& path, const LabelVolume& vol) {
    std::vector<double> values(vol.voxels().begin(), vol.voxels().end());
    write_values(path, vol.dims(), vol.spacing(), values);
}

}  // namespace nifti

namespace raw {

/// Text sidecar: "LV1 nx ny nz sx sy sz" then the codes, x fastest.
inline void write(std::ostream& out, const LabelVolume& vol) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "LV1 %lld %lld %lld %.17g %.17g %.17g\n",
                  static_cast<long long>(vol.dims().nx), static_cast<long long>(vol.dims().ny),
                  static_cast<long long>(vol.dims().nz), vol.spacing().sx, vol.spacing().sy, vol.spacing().sz);
    out << buf;
    const auto nx = static_cast<std::size_t>(vol.dims().nx);
    const auto v = vol.voxels();
    for (std::size_t i = 0; i < v.size(); ++i) {
        out << static_cast<int>(v[i]) << ((i + 1) % nx == 0 ? '\n' : ' ');
    }
}

inline LabelVolume read(std::istream& in, const std::string& where, const LoadOptions& opts = {}) {
    std::string magic;
    Dims dims;
    Spacing sp;
    if (!(in >> magic) || magic != "LV1") fail(ErrorKind::format, where + ": missing LV1 header");
    if (!(in >> dims.nx >> dims.ny >> dims.nz >> sp.sx >> sp.sy >> sp.sz))
        fail(ErrorKind::format, where + ": malformed LV1 header");
    validate_grid(dims, sp);
    std::vector<std::uint8_t> codes(dims.voxel_count());
    std::size_t remapped = 0;
    for (std::size_t i = 0; i < codes.size(); ++i) {
        long long c;
        if (!(in >> c)) fail(ErrorKind::format, where + ": expected " + std::to_string(codes.size()) + " voxel codes");
        if (c < 0 || c >= kLabelCount) {
            if (opts.strict_labels)
                fail(ErrorKind::alphabet, where + ": label code " + std::to_string(c) + " outside {0..7}");
            ++remapped;
            c = 0;
        }
        codes[i] = static_cast<std::uint8_t>(c);
    }
    if (remapped > 0 && opts.warn)
        opts.warn(where + ": mapped " + std::to_string(remapped) + " voxels with unknown codes to background");
    return LabelVolume(dims, sp, std::move(codes));
}

inline void write(const std::filesystem::path& path, const LabelVolume& vol) {
    std::ofstream out(path);
    if (!out) fail(ErrorKind::io, "cannot write '" + path.string() + "'");
    write(out, vol);
}

inline LabelVolume read(const std::filesystem::path& path, const LoadOptions& opts = {}) {
    std::ifstream in(path);
    if (!in) fail(ErrorKind::io, "cannot open '" + path.string() + "'");
    return read(in, path.string(), opts).with_case_id(path.stem().string());
}

}  // namespace raw

/// Dispatches on extension: `.lv` is the raw text sidecar, anything else is
/// read as NIfTI-1 (optionally gzipped).
inline LabelVolume load_label_volume(const std::filesystem::path& path, const LoadOptions& opts = {}) {
    if (path.extension() == ".lv") return raw::read(path, opts);
    return nifti::read(path, opts);
}

inline void save_label_volume(const std::filesystem::path& path, const LabelVolume& vol) {
    if (path.extension() == ".lv") raw::write(path, vol);
    else nifti::write(path, vol);
}

}  // namespace fetaval

#endif  // FETAVAL_VOLUME_IO_HPP
