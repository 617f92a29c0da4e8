#include "parc/render.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "parc/io.hpp"

namespace parc::render {

namespace {

// Viridis anchors at t = 0, 1/8, ..., 1.
constexpr unsigned char kViridis[9][3] = {
    {68, 1, 84},    {72, 40, 120},  {62, 74, 137},  {49, 104, 142}, {38, 130, 142},
    {31, 158, 137}, {53, 183, 121}, {109, 205, 89}, {253, 231, 37},
};

void viridis(double t, unsigned char* rgb) {
    t = std::clamp(t, 0.0, 1.0) * 8.0;
    const int lo = std::min(7, static_cast<int>(t));
    const double f = t - lo;
    for (int c = 0; c < 3; ++c)
        rgb[c] = static_cast<unsigned char>(
            std::lround((1.0 - f) * kViridis[lo][c] + f * kViridis[lo + 1][c]));
}

void write_rgb_png(const std::string& path, int h, int w, const std::vector<unsigned char>& rgb) {
    FILE* fp = std::fopen(path.c_str(), "wb");
    if (!fp) throw IoError("cannot open " + path + " for writing");
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info || setjmp(png_jmpbuf(png))) {
        if (png) png_destroy_write_struct(&png, info ? &info : nullptr);
        std::fclose(fp);
        throw IoError("png write failed: " + path);
    }
    png_init_io(png, fp);
    png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), 8,
                 PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (int i = 0; i < h; ++i)
        png_write_row(png, const_cast<png_bytep>(rgb.data() + static_cast<size_t>(i) * w * 3));
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
}

}  // namespace

void write_field_png(const Field& f, const std::string& path, double lo, double hi) {
    f.check_finite("write_field_png");
    if (lo == hi) {
        lo = reduce(f, Reduce::min);
        hi = reduce(f, Reduce::max);
        if (lo == hi) hi = lo + 1.0;  // flat field renders as the low color
    }
    if (!(hi > lo)) throw ValidationError("write_field_png: need hi > lo");
    std::vector<unsigned char> rgb(static_cast<size_t>(f.height()) * f.width() * 3);
    const double inv = 1.0 / (hi - lo);
    for (int i = 0; i < f.height(); ++i)
        for (int j = 0; j < f.width(); ++j)
            viridis((f.at(i, j) - lo) * inv,
                    rgb.data() + (static_cast<size_t>(i) * f.width() + j) * 3);
    write_rgb_png(path, f.height(), f.width(), rgb);
}

namespace {

struct Series {
    std::string label;
    std::string color;
    std::vector<std::pair<double, double>> pts;
};

std::string svg_plot(const std::vector<Series>& series, const std::string& x_label,
                     const std::string& y_label) {
    constexpr double W = 640, H = 420, ml = 70, mr = 20, mt = 20, mb = 50;
    double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
    for (const auto& s : series)
        for (auto [x, y] : s.pts) {
            xmin = std::min(xmin, x);
            xmax = std::max(xmax, x);
            ymin = std::min(ymin, y);
            ymax = std::max(ymax, y);
        }
    if (xmax <= xmin) xmax = xmin + 1.0;
    if (ymax <= ymin) ymax = ymin + 1.0;
    auto px = [&](double x) { return ml + (x - xmin) / (xmax - xmin) * (W - ml - mr); };
    auto py = [&](double y) { return H - mb - (y - ymin) / (ymax - ymin) * (H - mt - mb); };

    std::ostringstream os;
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
       << "\" viewBox=\"0 0 " << W << " " << H << "\">\n"
       << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
       << "<line x1=\"" << ml << "\" y1=\"" << H - mb << "\" x2=\"" << W - mr << "\" y2=\""
       << H - mb << "\" stroke=\"black\"/>\n"
       << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\"" << H - mb
       << "\" stroke=\"black\"/>\n";
    for (int k = 0; k <= 4; ++k) {
        const double xv = xmin + (xmax - xmin) * k / 4.0;
        const double yv = ymin + (ymax - ymin) * k / 4.0;
        char xbuf[32], ybuf[32];
        std::snprintf(xbuf, sizeof xbuf, "%.4g", xv);
        std::snprintf(ybuf, sizeof ybuf, "%.4g", yv);
        os << "<text x=\"" << px(xv) << "\" y=\"" << H - mb + 18
           << "\" font-size=\"11\" text-anchor=\"middle\">" << xbuf << "</text>\n"
           << "<text x=\"" << ml - 6 << "\" y=\"" << py(yv) + 4
           << "\" font-size=\"11\" text-anchor=\"end\">" << ybuf << "</text>\n";
    }
    os << "<text x=\"" << (ml + W - mr) / 2 << "\" y=\"" << H - 12
       << "\" font-size=\"13\" text-anchor=\"middle\">" << x_label << "</text>\n"
       << "<text x=\"14\" y=\"" << (mt + H - mb) / 2
       << "\" font-size=\"13\" text-anchor=\"middle\" transform=\"rotate(-90 14 "
       << (mt + H - mb) / 2 << ")\">" << y_label << "</text>\n";
    double ly = mt + 12;
    for (const auto& s : series) {
        os << "<polyline fill=\"none\" stroke=\"" << s.color << "\" stroke-width=\"1.5\" points=\"";
        for (auto [x, y] : s.pts) os << px(x) << "," << py(y) << " ";
        os << "\"/>\n";
        if (!s.label.empty()) {
            os << "<line x1=\"" << W - mr - 120 << "\" y1=\"" << ly << "\" x2=\"" << W - mr - 100
               << "\" y2=\"" << ly << "\" stroke=\"" << s.color << "\" stroke-width=\"1.5\"/>\n"
               << "<text x=\"" << W - mr - 94 << "\" y=\"" << ly + 4 << "\" font-size=\"12\">"
               << s.label << "</text>\n";
            ly += 16;
        }
    }
    os << "</svg>\n";
    return os.str();
}

}  // namespace

void write_loss_svg(const std::vector<training::EpochRow>& curve, const std::string& path) {
    if (curve.empty()) throw ValidationError("write_loss_svg: empty curve");
    bool log_axis = true;
    double lo = 1e300, hi = 0.0;
    for (const auto& r : curve) {
        for (double v : {r.train_loss, r.val_loss}) {
            if (!(v > 0.0)) log_axis = false;
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
    }
    log_axis = log_axis && hi / lo > 10.0;
    auto yv = [&](double v) { return log_axis ? std::log10(v) : v; };
    Series train{ "train", "#1f77b4", {} }, val{ "validation", "#ff7f0e", {} };
    for (const auto& r : curve) {
        train.pts.emplace_back(static_cast<double>(r.epoch), yv(r.train_loss));
        val.pts.emplace_back(static_cast<double>(r.epoch), yv(r.val_loss));
    }
    io::write_text_file(path, svg_plot({train, val}, "epoch",
                                       log_axis ? "log10(loss)" : "loss"));
}

void write_xy_svg(const std::vector<std::pair<double, double>>& pts, const std::string& x_label,
                  const std::string& y_label, const std::string& path) {
    if (pts.empty()) throw ValidationError("write_xy_svg: no points");
    Series s{"", "#1f77b4", pts};
    io::write_text_file(path, svg_plot({s}, x_label, y_label));
}

}  // namespace parc::render
