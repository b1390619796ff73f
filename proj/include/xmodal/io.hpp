#pragma once

#include <zlib.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>

#include "xmodal/geometry.hpp"

namespace xmodal {

/// One synchronized multi-modal capture. Images live on their camera's grid;
/// gt_depth is on the left polarisation frame (the evaluation frame).
struct FrameBundle {
    PolarisationImage pol_left, pol_right;
    CorrelationImage corr;
    std::optional<DepthField> struct_depth;
    std::optional<DepthField> gt_depth;
    CameraRig rig;
    int64_t frame_id = 0;
};

namespace detail {

inline void write_f32le(std::ofstream& f, const std::vector<double>& values) {
    std::vector<unsigned char> buf(values.size() * 4);
    for (size_t i = 0; i < values.size(); ++i) {
        float v = static_cast<float>(values[i]);
        uint32_t bits;
        std::memcpy(&bits, &v, 4);
        buf[4 * i + 0] = bits & 0xff;
        buf[4 * i + 1] = (bits >> 8) & 0xff;
        buf[4 * i + 2] = (bits >> 16) & 0xff;
        buf[4 * i + 3] = (bits >> 24) & 0xff;
    }
    f.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
}

inline std::vector<double> read_f32le(const std::string& path, size_t count) {
    std::ifstream f(path, std::ios::binary | std::ios::ate);
    if (!f) throw IoError("read: cannot open " + path);
    auto bytes = static_cast<size_t>(f.tellg());
    if (bytes != count * 4)
        throw FormatError("read: " + path + " has " + std::to_string(bytes) +
                          " bytes, expected " + std::to_string(count * 4));
    f.seekg(0);
    std::vector<unsigned char> buf(bytes);
    f.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(bytes));
    if (!f) throw IoError("read: short read on " + path);
    std::vector<double> out(count);
    for (size_t i = 0; i < count; ++i) {
        uint32_t bits = static_cast<uint32_t>(buf[4 * i]) |
                        (static_cast<uint32_t>(buf[4 * i + 1]) << 8) |
                        (static_cast<uint32_t>(buf[4 * i + 2]) << 16) |
                        (static_cast<uint32_t>(buf[4 * i + 3]) << 24);
        float v;
        std::memcpy(&v, &bits, 4);
        out[i] = v;
    }
    return out;
}

inline std::map<std::string, std::string> read_kv_header(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("read: cannot open " + path);
    std::map<std::string, std::string> kv;
    std::string line;
    int lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto eq = line.find('=');
        if (eq == std::string::npos)
            throw FormatError(path + ":" + std::to_string(lineno) + ": expected key=value");
        kv[line.substr(0, eq)] = line.substr(eq + 1);
    }
    return kv;
}

inline int header_int(const std::map<std::string, std::string>& kv, const std::string& key,
                      const std::string& path) {
    auto it = kv.find(key);
    if (it == kv.end()) throw FormatError(path + ": missing " + key);
    return static_cast<int>(parse_double(it->second, path + ": " + key));
}

}  // namespace detail

/// Writes `<role>.f32` (row-major, channel-planar f32le) and `<role>.txt`.
inline void write_image(const ImagePlane& img, const std::string& dir, const std::string& role) {
    namespace fs = std::filesystem;
    std::string base = (fs::path(dir) / role).string();
    {
        std::ofstream h(base + ".txt", std::ios::binary);
        if (!h) throw IoError("write: cannot open " + base + ".txt");
        h << "width=" << img.width() << "\n"
          << "height=" << img.height() << "\n"
          << "channels=" << img.channels() << "\n"
          << "dtype=f32le\n"
          << "role=" << role << "\n";
        if (!h) throw IoError("write: failed on " + base + ".txt");
    }
    std::ofstream f(base + ".f32", std::ios::binary);
    if (!f) throw IoError("write: cannot open " + base + ".f32");
    detail::write_f32le(f, img.data());
    if (!f) throw IoError("write: failed on " + base + ".f32");
}

/// `allow_nan` is reserved for depth roles; all other planes must be finite.
inline ImagePlane read_image(const std::string& dir, const std::string& role, bool allow_nan) {
    namespace fs = std::filesystem;
    std::string base = (fs::path(dir) / role).string();
    auto kv = detail::read_kv_header(base + ".txt");
    for (const auto& [k, v] : kv)
        if (k != "width" && k != "height" && k != "channels" && k != "dtype" && k != "role")
            throw FormatError(base + ".txt: unknown key '" + k + "'");
    int w = detail::header_int(kv, "width", base + ".txt");
    int h = detail::header_int(kv, "height", base + ".txt");
    int c = detail::header_int(kv, "channels", base + ".txt");
    if (w < 1 || h < 1 || c < 1) throw FormatError(base + ".txt: dimensions must be >= 1");
    auto dt = kv.find("dtype");
    if (dt == kv.end() || dt->second != "f32le")
        throw FormatError(base + ".txt: dtype must be f32le");
    ImagePlane img(w, h, c);
    img.data() = detail::read_f32le(base + ".f32", img.size());
    if (!allow_nan) {
        for (double v : img.data())
            if (!std::isfinite(v)) throw FormatError(base + ".f32: non-finite value");
    }
    return img;
}

inline bool image_exists(const std::string& dir, const std::string& role) {
    namespace fs = std::filesystem;
    return fs::exists(fs::path(dir) / (role + ".txt"));
}

inline void write_bundle(const FrameBundle& bundle, const std::string& dir) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("write_bundle: cannot create " + dir);
    {
        std::ofstream m((fs::path(dir) / "bundle.txt").string(), std::ios::binary);
        if (!m) throw IoError("write_bundle: cannot open bundle.txt");
        m << "frame_id=" << bundle.frame_id << "\n";
        m << "roles=pol_left pol_right corr";
        if (bundle.struct_depth) m << " struct_depth";
        if (bundle.gt_depth) m << " gt_depth";
        m << "\n";
        if (!m) throw IoError("write_bundle: failed on bundle.txt");
    }
    save_rig(bundle.rig, (fs::path(dir) / "rig.txt").string());
    write_image(bundle.pol_left, dir, "pol_left");
    write_image(bundle.pol_right, dir, "pol_right");
    write_image(bundle.corr, dir, "corr");
    if (bundle.struct_depth) write_image(bundle.struct_depth->to_plane(), dir, "struct_depth");
    if (bundle.gt_depth) write_image(bundle.gt_depth->to_plane(), dir, "gt_depth");
}

inline FrameBundle read_bundle(const std::string& dir) {
    namespace fs = std::filesystem;
    FrameBundle b;
    auto kv = detail::read_kv_header((fs::path(dir) / "bundle.txt").string());
    auto fid = kv.find("frame_id");
    if (fid == kv.end()) throw FormatError(dir + "/bundle.txt: missing frame_id");
    b.frame_id = static_cast<int64_t>(detail::parse_double(fid->second, "frame_id"));
    b.rig = load_rig((fs::path(dir) / "rig.txt").string());
    b.pol_left = read_image(dir, "pol_left", false);
    b.pol_right = read_image(dir, "pol_right", false);
    b.corr = read_image(dir, "corr", false);
    if (image_exists(dir, "struct_depth"))
        b.struct_depth = DepthField::from_plane(read_image(dir, "struct_depth", true));
    if (image_exists(dir, "gt_depth"))
        b.gt_depth = DepthField::from_plane(read_image(dir, "gt_depth", true));

    auto check = [&](const ImagePlane& img, CameraRole role, const char* name) {
        const auto& cam = b.rig.get(role);
        if (img.width() != cam.width || img.height() != cam.height)
            throw FormatError(std::string("read_bundle: ") + name +
                              " resolution does not match rig camera " + to_string(role));
    };
    check(b.pol_left, CameraRole::pol_left, "pol_left");
    check(b.pol_right, CameraRole::pol_right, "pol_right");
    check(b.corr, CameraRole::itof, "corr");
    if (b.pol_left.channels() % 4 != 0 || b.pol_right.channels() % 4 != 0)
        throw FormatError("read_bundle: polarisation images need 4*k channels");
    if (b.corr.channels() != 4) throw FormatError("read_bundle: corr image needs 4 channels");
    if (b.struct_depth) check(b.struct_depth->to_plane(), CameraRole::structured_light, "struct_depth");
    if (b.gt_depth) check(b.gt_depth->to_plane(), CameraRole::pol_left, "gt_depth");
    return b;
}

// ---------------------------------------------------------------- png export

namespace detail {

inline void png_append_u32(std::vector<unsigned char>& out, uint32_t v) {
    out.push_back((v >> 24) & 0xff);
    out.push_back((v >> 16) & 0xff);
    out.push_back((v >> 8) & 0xff);
    out.push_back(v & 0xff);
}

inline void png_append_chunk(std::vector<unsigned char>& out, const char type[4],
                             const std::vector<unsigned char>& payload) {
    png_append_u32(out, static_cast<uint32_t>(payload.size()));
    size_t start = out.size();
    out.insert(out.end(), type, type + 4);
    out.insert(out.end(), payload.begin(), payload.end());
    uint32_t crc = static_cast<uint32_t>(
        ::crc32(0L, out.data() + start, static_cast<uInt>(out.size() - start)));
    png_append_u32(out, crc);
}

}  // namespace detail

/// 8-bit grayscale PNG of one channel; v maps to round(255*clamp((v-lo)/(hi-lo),0,1)).
inline std::vector<unsigned char> export_png(const ImagePlane& img, int channel,
                                             double lo, double hi) {
    if (channel < 0 || channel >= img.channels()) throw ArgError("export_png: channel out of range");
    if (!(lo < hi)) throw ArgError("export_png: need lo < hi");

    const int w = img.width(), h = img.height();
    std::vector<unsigned char> raw(static_cast<size_t>(h) * (w + 1));
    for (int y = 0; y < h; ++y) {
        raw[static_cast<size_t>(y) * (w + 1)] = 0;  // filter: none
        for (int x = 0; x < w; ++x) {
            double t = (img.at(x, y, channel) - lo) / (hi - lo);
            t = clamp(t, 0.0, 1.0);
            raw[static_cast<size_t>(y) * (w + 1) + 1 + x] =
                static_cast<unsigned char>(std::floor(255.0 * t + 0.5));
        }
    }

    uLongf zsize = compressBound(static_cast<uLong>(raw.size()));
    std::vector<unsigned char> zdata(zsize);
    if (compress2(zdata.data(), &zsize, raw.data(), static_cast<uLong>(raw.size()), 9) != Z_OK)
        throw IoError("export_png: deflate failed");
    zdata.resize(zsize);

    std::vector<unsigned char> out{0x89, 'P', 'N', 'G', 0x0d, 0x0a, 0x1a, 0x0a};
    std::vector<unsigned char> ihdr;
    detail::png_append_u32(ihdr, static_cast<uint32_t>(w));
    detail::png_append_u32(ihdr, static_cast<uint32_t>(h));
    ihdr.push_back(8);  // bit depth
    ihdr.push_back(0);  // grayscale
    ihdr.push_back(0);
    ihdr.push_back(0);
    ihdr.push_back(0);
    detail::png_append_chunk(out, "IHDR", ihdr);
    detail::png_append_chunk(out, "IDAT", zdata);
    detail::png_append_chunk(out, "IEND", {});
    return out;
}

inline void save_png(const ImagePlane& img, int channel, double lo, double hi,
                     const std::string& path) {
    auto bytes = export_png(img, channel, lo, hi);
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("save_png: cannot open " + path);
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw IoError("save_png: write failed");
}

}  // namespace xmodal
