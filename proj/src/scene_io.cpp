#include "mmvs/scene_io.hpp"

#include "mmvs/geometry.hpp"

#include <png.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>
#include <vector>

namespace mmvs {

namespace {

bool is_little_endian() {
    const std::uint16_t probe = 1;
    return *reinterpret_cast<const std::uint8_t*>(&probe) == 1;
}

// Locale-independent float parsing with file/line context on failure.
double parse_double(std::string_view token, const std::filesystem::path& path, int line,
                    const char* what) {
    double value = 0.0;
    const char* begin = token.data();
    const char* end = begin + token.size();
    auto [ptr, ec] = std::from_chars(begin, end, value);
    if (ec != std::errc() || ptr != end) {
        std::ostringstream err;
        err << path.string() << ":" << line << ": cannot parse " << what << " from '" << token
            << "'";
        throw IoError(err.str());
    }
    return value;
}

std::vector<std::string> split_ws(const std::string& line) {
    std::vector<std::string> out;
    std::istringstream ss(line);
    std::string tok;
    while (ss >> tok) out.push_back(tok);
    return out;
}

struct LineReader {
    std::ifstream stream;
    std::filesystem::path path;
    int line_no = 0;

    explicit LineReader(const std::filesystem::path& p) : stream(p), path(p) {
        if (!stream) throw IoError("cannot open " + p.string());
    }

    std::string next() {
        std::string line;
        if (!std::getline(stream, line)) {
            std::ostringstream err;
            err << path.string() << ":" << line_no + 1 << ": unexpected end of file";
            throw IoError(err.str());
        }
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        return line;
    }

    // Skips blank lines, returns the next non-empty one.
    std::string next_content() {
        for (;;) {
            std::string line = next();
            if (!split_ws(line).empty()) return line;
        }
    }
};

void write_atomic_bytes(const std::filesystem::path& path, const void* bytes, std::size_t n) {
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
        out.write(static_cast<const char*>(bytes), static_cast<std::streamsize>(n));
        if (!out) throw IoError("write failed for " + tmp.string());
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw IoError("cannot rename " + tmp.string() + " to " + path.string());
}

}  // namespace

void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
    write_atomic_bytes(path, content.data(), content.size());
}

// ---------------------------------------------------------------------------
// Camera text format

Camera load_camera(const std::filesystem::path& path) {
    LineReader reader(path);
    Camera cam;

    std::string header = reader.next_content();
    if (split_ws(header).at(0) != "extrinsic")
        throw IoError(path.string() + ":" + std::to_string(reader.line_no) +
                      ": expected 'extrinsic' header");
    Eigen::Matrix4d extrinsic;
    for (int r = 0; r < 4; ++r) {
        std::string line = reader.next_content();
        auto toks = split_ws(line);
        if (toks.size() != 4)
            throw IoError(path.string() + ":" + std::to_string(reader.line_no) +
                          ": extrinsic row needs 4 values, got " + std::to_string(toks.size()));
        for (int c = 0; c < 4; ++c)
            extrinsic(r, c) = parse_double(toks[c], path, reader.line_no, "extrinsic entry");
    }

    header = reader.next_content();
    if (split_ws(header).at(0) != "intrinsic")
        throw IoError(path.string() + ":" + std::to_string(reader.line_no) +
                      ": expected 'intrinsic' header");
    for (int r = 0; r < 3; ++r) {
        std::string line = reader.next_content();
        auto toks = split_ws(line);
        if (toks.size() != 3)
            throw IoError(path.string() + ":" + std::to_string(reader.line_no) +
                          ": intrinsic row needs 3 values, got " + std::to_string(toks.size()));
        for (int c = 0; c < 3; ++c)
            cam.K(r, c) = parse_double(toks[c], path, reader.line_no, "intrinsic entry");
    }

    std::string depth_line = reader.next_content();
    auto toks = split_ws(depth_line);
    if (toks.size() != 3)
        throw IoError(path.string() + ":" + std::to_string(reader.line_no) +
                      ": depth line needs 'min interval count'");
    cam.depth_min = parse_double(toks[0], path, reader.line_no, "depth_min");
    cam.depth_interval = parse_double(toks[1], path, reader.line_no, "depth_interval");
    const double count = parse_double(toks[2], path, reader.line_no, "depth_count");
    cam.depth_count = static_cast<int>(std::llround(count));

    cam.R = extrinsic.topLeftCorner<3, 3>();
    cam.t = extrinsic.topRightCorner<3, 1>();
    validate_camera(cam);
    return cam;
}

void save_camera(const Camera& cam, const std::filesystem::path& path) {
    std::ostringstream out;
    out.precision(17);
    out << "extrinsic\n";
    for (int r = 0; r < 3; ++r)
        out << cam.R(r, 0) << " " << cam.R(r, 1) << " " << cam.R(r, 2) << " " << cam.t(r) << "\n";
    out << "0 0 0 1\n\n";
    out << "intrinsic\n";
    for (int r = 0; r < 3; ++r)
        out << cam.K(r, 0) << " " << cam.K(r, 1) << " " << cam.K(r, 2) << "\n";
    out << "\n" << cam.depth_min << " " << cam.depth_interval << " " << cam.depth_count << "\n";
    write_file_atomic(path, out.str());
}

// ---------------------------------------------------------------------------
// 8-bit images

namespace {

ImageGrid grid_from_bytes(const std::vector<unsigned char>& bytes, Eigen::Index w,
                          Eigen::Index h, Eigen::Index c) {
    ImageGrid grid(w, h, c);
    for (Eigen::Index i = 0; i < w * h * c; ++i)
        grid.data()(i % c, i / c) = double(bytes[static_cast<std::size_t>(i)]) / 255.0;
    return grid;
}

std::vector<unsigned char> bytes_from_grid(const ImageGrid& grid) {
    const Eigen::Index n = grid.pixel_count() * grid.channels();
    std::vector<unsigned char> bytes(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) {
        const double v = std::clamp(grid.data()(i % grid.channels(), i / grid.channels()), 0.0, 1.0);
        bytes[static_cast<std::size_t>(i)] = static_cast<unsigned char>(std::lround(v * 255.0));
    }
    return bytes;
}

ImageGrid load_png(const std::filesystem::path& path) {
    std::FILE* fp = std::fopen(path.string().c_str(), "rb");
    if (!fp) throw IoError("cannot open " + path.string());

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        if (png) png_destroy_read_struct(&png, &info, nullptr);
        std::fclose(fp);
        throw IoError("libpng initialization failed");
    }
    std::vector<unsigned char> data;
    std::vector<png_bytep> rows;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        std::fclose(fp);
        throw IoError("malformed PNG: " + path.string());
    }
    png_init_io(png, fp);
    png_read_info(png, info);

    const png_uint_32 w = png_get_image_width(png, info);
    const png_uint_32 h = png_get_image_height(png, info);
    const int bit_depth = png_get_bit_depth(png, info);
    const int color_type = png_get_color_type(png, info);
    if (bit_depth != 8 || (color_type != PNG_COLOR_TYPE_GRAY && color_type != PNG_COLOR_TYPE_RGB)) {
        png_destroy_read_struct(&png, &info, nullptr);
        std::fclose(fp);
        throw IoError("unsupported PNG format (need 8-bit gray or RGB): " + path.string());
    }
    const Eigen::Index channels = (color_type == PNG_COLOR_TYPE_GRAY) ? 1 : 3;

    data.resize(static_cast<std::size_t>(w) * h * static_cast<std::size_t>(channels));
    rows.resize(h);
    for (png_uint_32 y = 0; y < h; ++y)
        rows[y] = data.data() + static_cast<std::size_t>(y) * w * static_cast<std::size_t>(channels);
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);

    return grid_from_bytes(data, Eigen::Index(w), Eigen::Index(h), channels);
}

void save_png(const ImageGrid& grid, const std::filesystem::path& path) {
    const std::filesystem::path tmp = path.string() + ".tmp";
    std::FILE* fp = std::fopen(tmp.string().c_str(), "wb");
    if (!fp) throw IoError("cannot open " + tmp.string() + " for writing");

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        if (png) png_destroy_write_struct(&png, &info);
        std::fclose(fp);
        throw IoError("libpng initialization failed");
    }
    std::vector<unsigned char> bytes = bytes_from_grid(grid);
    std::vector<png_bytep> rows(static_cast<std::size_t>(grid.height()));
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        std::fclose(fp);
        throw IoError("PNG write failed: " + path.string());
    }
    png_init_io(png, fp);
    const int color_type = grid.channels() == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB;
    png_set_IHDR(png, info, static_cast<png_uint_32>(grid.width()),
                 static_cast<png_uint_32>(grid.height()), 8, color_type, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    for (Eigen::Index y = 0; y < grid.height(); ++y)
        rows[static_cast<std::size_t>(y)] =
            bytes.data() + y * grid.width() * grid.channels();
    png_set_rows(png, info, rows.data());
    png_write_png(png, info, PNG_TRANSFORM_IDENTITY, nullptr);
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);

    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw IoError("cannot rename " + tmp.string() + " to " + path.string());
}

ImageGrid load_pnm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::string magic;
    in >> magic;
    Eigen::Index channels;
    if (magic == "P5")
        channels = 1;
    else if (magic == "P6")
        channels = 3;
    else
        throw IoError("unsupported PNM magic '" + magic + "' in " + path.string());
    long w = 0, h = 0, maxval = 0;
    in >> w >> h >> maxval;
    if (!in || w <= 0 || h <= 0)
        throw IoError("malformed PNM header in " + path.string());
    if (maxval != 255) throw IoError("only 8-bit PNM supported: " + path.string());
    in.ignore(1);  // single whitespace after maxval
    std::vector<unsigned char> bytes(static_cast<std::size_t>(w) * h * channels);
    in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!in) throw IoError("truncated PNM payload in " + path.string());
    return grid_from_bytes(bytes, w, h, channels);
}

void save_pnm(const ImageGrid& grid, const std::filesystem::path& path) {
    std::ostringstream out;
    out << (grid.channels() == 1 ? "P5" : "P6") << "\n"
        << grid.width() << " " << grid.height() << "\n255\n";
    std::vector<unsigned char> bytes = bytes_from_grid(grid);
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    write_file_atomic(path, out.str());
}

std::string lower_ext(const std::filesystem::path& path) {
    std::string ext = path.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(),
                   [](unsigned char c) { return char(std::tolower(c)); });
    return ext;
}

}  // namespace

ImageGrid load_image(const std::filesystem::path& path) {
    const std::string ext = lower_ext(path);
    if (ext == ".png") return load_png(path);
    if (ext == ".pgm" || ext == ".ppm" || ext == ".pnm") return load_pnm(path);
    throw IoError("unsupported image format '" + ext + "' for " + path.string());
}

void save_image(const ImageGrid& grid, const std::filesystem::path& path) {
    if (grid.channels() != 1 && grid.channels() != 3)
        throw InvalidInput("save_image: grid must have 1 or 3 channels, got " +
                           std::to_string(grid.channels()));
    const std::string ext = lower_ext(path);
    if (ext == ".png") return save_png(grid, path);
    if (ext == ".pgm" || ext == ".ppm" || ext == ".pnm") {
        if (ext == ".pgm" && grid.channels() != 1)
            throw InvalidInput("save_image: PGM requires a single channel");
        if (ext == ".ppm" && grid.channels() != 3)
            throw InvalidInput("save_image: PPM requires 3 channels");
        return save_pnm(grid, path);
    }
    throw IoError("unsupported image format '" + ext + "' for " + path.string());
}

// ---------------------------------------------------------------------------
// PFM / PFC float rasters

namespace {

struct FloatRasterHeader {
    Eigen::Index width = 0;
    Eigen::Index height = 0;
    Eigen::Index channels = 1;
    double scale = -1.0;
};

// Payload is bottom-up, row-major, channel-interleaved float32.
void write_float_raster(const ImageGrid& grid, const std::filesystem::path& path,
                        bool feature_container) {
    for (Eigen::Index i = 0; i < grid.pixel_count(); ++i)
        for (Eigen::Index c = 0; c < grid.channels(); ++c)
            if (std::isnan(grid.data()(c, i)))
                throw InvalidInput("refusing to save NaN values to " + path.string());

    std::ostringstream out;
    if (feature_container)
        out << "PFC\n" << grid.width() << " " << grid.height() << " " << grid.channels() << "\n";
    else
        out << "Pf\n" << grid.width() << " " << grid.height() << "\n";
    out << "-1.0\n";

    std::vector<float> row(static_cast<std::size_t>(grid.width() * grid.channels()));
    for (Eigen::Index y = grid.height() - 1; y >= 0; --y) {
        std::size_t k = 0;
        for (Eigen::Index x = 0; x < grid.width(); ++x)
            for (Eigen::Index c = 0; c < grid.channels(); ++c)
                row[k++] = static_cast<float>(grid(x, y, c));
        out.write(reinterpret_cast<const char*>(row.data()),
                  static_cast<std::streamsize>(row.size() * sizeof(float)));
    }
    write_file_atomic(path, out.str());
}

ImageGrid read_float_raster(const std::filesystem::path& path, bool feature_container) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::string magic;
    in >> magic;
    const std::string expected = feature_container ? "PFC" : "Pf";
    if (magic != expected)
        throw IoError(path.string() + ": expected '" + expected + "' header, got '" + magic + "'");

    FloatRasterHeader hdr;
    long w = 0, h = 0, c = 1;
    if (feature_container)
        in >> w >> h >> c;
    else
        in >> w >> h;
    std::string scale_tok;
    in >> scale_tok;
    if (!in || w <= 0 || h <= 0 || c <= 0)
        throw IoError("malformed header in " + path.string());
    hdr.width = w;
    hdr.height = h;
    hdr.channels = c;
    hdr.scale = parse_double(scale_tok, path, 0, "scale");
    if (hdr.scale == 0.0) throw IoError("zero scale in " + path.string());
    in.ignore(1);

    const std::size_t count = static_cast<std::size_t>(w) * h * c;
    std::vector<float> payload(count);
    in.read(reinterpret_cast<char*>(payload.data()),
            static_cast<std::streamsize>(count * sizeof(float)));
    if (static_cast<std::size_t>(in.gcount()) != count * sizeof(float)) {
        std::ostringstream err;
        err << path.string() << ": payload has " << in.gcount() / sizeof(float)
            << " floats, header declares " << count;
        throw IoError(err.str());
    }

    const bool file_little = hdr.scale < 0.0;
    if (file_little != is_little_endian())
        for (float& v : payload) {
            auto* b = reinterpret_cast<unsigned char*>(&v);
            std::swap(b[0], b[3]);
            std::swap(b[1], b[2]);
        }

    ImageGrid grid(hdr.width, hdr.height, hdr.channels);
    std::size_t k = 0;
    for (Eigen::Index y = hdr.height - 1; y >= 0; --y)
        for (Eigen::Index x = 0; x < hdr.width; ++x)
            for (Eigen::Index ch = 0; ch < hdr.channels; ++ch)
                grid(x, y, ch) = double(payload[k++]);
    return grid;
}

}  // namespace

ImageGrid load_depth_pfm(const std::filesystem::path& path) {
    return read_float_raster(path, false);
}

void save_depth_pfm(const ImageGrid& grid, const std::filesystem::path& path) {
    if (grid.channels() != 1)
        throw InvalidInput("save_depth_pfm: grid must be single-channel");
    write_float_raster(grid, path, false);
}

ImageGrid load_feature_map(const std::filesystem::path& path) {
    return read_float_raster(path, true);
}

void save_feature_map(const ImageGrid& grid, const std::filesystem::path& path) {
    write_float_raster(grid, path, true);
}

// ---------------------------------------------------------------------------
// PLY point clouds

PointCloud load_pointcloud_ply(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());

    std::string line;
    if (!std::getline(in, line) || line.substr(0, 3) != "ply")
        throw IoError(path.string() + ": missing 'ply' magic");

    long vertex_count = -1;
    bool has_color = false;
    bool in_vertex_element = false;
    std::vector<std::string> vertex_props;
    bool little = false, format_seen = false;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        auto toks = split_ws(line);
        if (toks.empty()) continue;
        if (toks[0] == "comment") continue;
        if (toks[0] == "format") {
            if (toks.size() < 2) throw IoError(path.string() + ": malformed format line");
            if (toks[1] == "binary_little_endian")
                little = true;
            else
                throw IoError(path.string() + ": unsupported PLY format '" + toks[1] + "'");
            format_seen = true;
        } else if (toks[0] == "element") {
            if (toks.size() != 3) throw IoError(path.string() + ": malformed element line");
            in_vertex_element = (toks[1] == "vertex");
            if (in_vertex_element) vertex_count = std::stol(toks[2]);
            else if (std::stol(toks[2]) != 0)
                throw IoError(path.string() + ": unsupported non-vertex element '" + toks[1] + "'");
        } else if (toks[0] == "property" && in_vertex_element) {
            if (toks.size() != 3) throw IoError(path.string() + ": malformed property line");
            vertex_props.push_back(toks[2]);
        } else if (toks[0] == "end_header") {
            break;
        }
    }
    if (!format_seen || vertex_count < 0)
        throw IoError(path.string() + ": malformed PLY header");
    (void)little;

    const std::vector<std::string> plain = {"x", "y", "z"};
    const std::vector<std::string> colored = {"x", "y", "z", "red", "green", "blue"};
    if (vertex_props == colored)
        has_color = true;
    else if (vertex_props != plain)
        throw IoError(path.string() + ": unsupported vertex property layout");

    PointCloud cloud;
    cloud.points.reserve(static_cast<std::size_t>(vertex_count));
    if (has_color) cloud.colors.reserve(static_cast<std::size_t>(vertex_count));
    for (long i = 0; i < vertex_count; ++i) {
        float xyz[3];
        in.read(reinterpret_cast<char*>(xyz), sizeof(xyz));
        if (!in) {
            std::ostringstream err;
            err << path.string() << ": vertex payload ends at " << i << " of " << vertex_count;
            throw IoError(err.str());
        }
        cloud.points.emplace_back(double(xyz[0]), double(xyz[1]), double(xyz[2]));
        if (has_color) {
            unsigned char rgb[3];
            in.read(reinterpret_cast<char*>(rgb), sizeof(rgb));
            if (!in) throw IoError(path.string() + ": truncated color payload");
            cloud.colors.emplace_back(rgb[0] / 255.0, rgb[1] / 255.0, rgb[2] / 255.0);
        }
    }
    return cloud;
}

void save_pointcloud_ply(const PointCloud& cloud, const std::filesystem::path& path) {
    if (cloud.has_colors() && cloud.colors.size() != cloud.points.size())
        throw InvalidInput("point cloud colors/points length mismatch");
    if (!is_little_endian())
        throw IoError("PLY writer requires a little-endian host");

    std::ostringstream out;
    out << "ply\nformat binary_little_endian 1.0\n";
    out << "element vertex " << cloud.points.size() << "\n";
    out << "property float x\nproperty float y\nproperty float z\n";
    if (cloud.has_colors())
        out << "property uchar red\nproperty uchar green\nproperty uchar blue\n";
    out << "end_header\n";
    for (std::size_t i = 0; i < cloud.points.size(); ++i) {
        const float xyz[3] = {float(cloud.points[i].x()), float(cloud.points[i].y()),
                              float(cloud.points[i].z())};
        out.write(reinterpret_cast<const char*>(xyz), sizeof(xyz));
        if (cloud.has_colors()) {
            const auto& c = cloud.colors[i];
            const unsigned char rgb[3] = {
                static_cast<unsigned char>(std::lround(std::clamp(c.x(), 0.0, 1.0) * 255.0)),
                static_cast<unsigned char>(std::lround(std::clamp(c.y(), 0.0, 1.0) * 255.0)),
                static_cast<unsigned char>(std::lround(std::clamp(c.z(), 0.0, 1.0) * 255.0))};
            out.write(reinterpret_cast<const char*>(rgb), sizeof(rgb));
        }
    }
    write_file_atomic(path, out.str());
}

}  // namespace mmvs
