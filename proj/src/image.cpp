#include "covidscreen/image.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace covidscreen {

Tensor resize_bilinear(const Tensor& src, int out_h, int out_w) {
    if (src.empty())
        throw std::invalid_argument("resize_bilinear: empty input");
    if (out_h < 1 || out_w < 1)
        throw std::invalid_argument("resize_bilinear: non-positive output size");

    Tensor dst(out_h, out_w, src.channels());
    if (src.height() == out_h && src.width() == out_w) {
        std::copy(src.values().begin(), src.values().end(), dst.values().begin());
        return dst;
    }

    // Align-corners-off convention: sample at pixel centers.
    const double sy = static_cast<double>(src.height()) / out_h;
    const double sx = static_cast<double>(src.width()) / out_w;
    for (int y = 0; y < out_h; ++y) {
        double fy = (y + 0.5) * sy - 0.5;
        fy = std::clamp(fy, 0.0, static_cast<double>(src.height() - 1));
        const int y0 = static_cast<int>(std::floor(fy));
        const int y1 = std::min(y0 + 1, src.height() - 1);
        const double wy = fy - y0;
        for (int x = 0; x < out_w; ++x) {
            double fx = (x + 0.5) * sx - 0.5;
            fx = std::clamp(fx, 0.0, static_cast<double>(src.width() - 1));
            const int x0 = static_cast<int>(std::floor(fx));
            const int x1 = std::min(x0 + 1, src.width() - 1);
            const double wx = fx - x0;
            for (int c = 0; c < src.channels(); ++c) {
                const double top = src.at(y0, x0, c) * (1.0 - wx) + src.at(y0, x1, c) * wx;
                const double bot = src.at(y1, x0, c) * (1.0 - wx) + src.at(y1, x1, c) * wx;
                dst.at(y, x, c) = top * (1.0 - wy) + bot * wy;
            }
        }
    }
    return dst;
}

Tensor replicate_to_rgb(const Tensor& gray) {
    if (gray.channels() != 1)
        throw std::invalid_argument("replicate_to_rgb: input must have one channel");
    Tensor out(gray.height(), gray.width(), 3);
    for (int y = 0; y < gray.height(); ++y)
        for (int x = 0; x < gray.width(); ++x) {
            const double v = gray.at(y, x, 0);
            out.at(y, x, 0) = v;
            out.at(y, x, 1) = v;
            out.at(y, x, 2) = v;
        }
    return out;
}

void clamp01(Tensor& t) {
    for (double& v : t.values()) v = std::clamp(v, 0.0, 1.0);
}

std::pair<double, double> value_range(const Tensor& t) {
    if (t.empty())
        throw std::invalid_argument("value_range: empty tensor");
    auto [lo, hi] = std::minmax_element(t.values().begin(), t.values().end());
    return {*lo, *hi};
}

}  // namespace covidscreen
