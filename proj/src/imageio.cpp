#include "covidscreen/imageio.hpp"

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include <cmath>
#include <stdexcept>

namespace covidscreen {

Tensor read_image(const std::filesystem::path& path) {
    cv::Mat bgr = cv::imread(path.string(), cv::IMREAD_COLOR);
    if (bgr.empty())
        throw std::runtime_error("failed to decode image: " + path.string());
    Tensor out(bgr.rows, bgr.cols, 3);
    for (int y = 0; y < bgr.rows; ++y) {
        const cv::Vec3b* row = bgr.ptr<cv::Vec3b>(y);
        for (int x = 0; x < bgr.cols; ++x) {
            out.at(y, x, 0) = row[x][2] / 255.0;
            out.at(y, x, 1) = row[x][1] / 255.0;
            out.at(y, x, 2) = row[x][0] / 255.0;
        }
    }
    return out;
}

void write_png(const std::filesystem::path& path, const Tensor& image) {
    if (image.empty())
        throw std::invalid_argument("write_png: empty image");
    if (image.channels() != 1 && image.channels() != 3)
        throw std::invalid_argument("write_png: expected 1 or 3 channels");

    auto to_byte = [](double v) {
        const double clamped = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
        return static_cast<unsigned char>(std::lround(clamped * 255.0));
    };

    cv::Mat bgr(image.height(), image.width(), CV_8UC3);
    for (int y = 0; y < image.height(); ++y) {
        cv::Vec3b* row = bgr.ptr<cv::Vec3b>(y);
        for (int x = 0; x < image.width(); ++x) {
            const double r = image.at(y, x, 0);
            const double g = image.channels() == 3 ? image.at(y, x, 1) : r;
            const double b = image.channels() == 3 ? image.at(y, x, 2) : r;
            row[x] = cv::Vec3b(to_byte(b), to_byte(g), to_byte(r));
        }
    }
    if (!cv::imwrite(path.string(), bgr))
        throw std::runtime_error("failed to write PNG: " + path.string());
}

}  // namespace covidscreen
