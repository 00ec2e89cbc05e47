#pragma once

// PNG previews and report plots via OpenCV. Tensors are RGB interleaved in
// [0,1]; files are 8-bit PNG.

#include <filesystem>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "ouro/evalkit.hpp"
#include "ouro/tensor.hpp"

namespace ouro {

inline void save_png(const TensorF& img, const std::filesystem::path& path) {
    if (img.c != 1 && img.c != 3) throw std::invalid_argument("save_png: expects 1 or 3 channels");
    cv::Mat m(img.h, img.w, img.c == 3 ? CV_8UC3 : CV_8UC1);
    for (int y = 0; y < img.h; ++y)
        for (int x = 0; x < img.w; ++x) {
            if (img.c == 3) {
                auto& px = m.at<cv::Vec3b>(y, x);
                for (int k = 0; k < 3; ++k)
                    px[2 - k] = cv::saturate_cast<uchar>(std::lround(std::clamp(img.at(y, x, k), 0.0f, 1.0f) * 255.0f));
            } else {
                m.at<uchar>(y, x) =
                    cv::saturate_cast<uchar>(std::lround(std::clamp(img.at(y, x, 0), 0.0f, 1.0f) * 255.0f));
            }
        }
    if (!cv::imwrite(path.string(), m)) throw std::runtime_error("save_png: failed writing " + path.string());
}

inline TensorF load_png(const std::filesystem::path& path) {
    cv::Mat m = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
    if (m.empty()) throw std::runtime_error("load_png: cannot read " + path.string());
    if (m.channels() == 4) cv::cvtColor(m, m, cv::COLOR_BGRA2BGR);
    TensorF t(m.rows, m.cols, m.channels() == 1 ? 1 : 3);
    for (int y = 0; y < t.h; ++y)
        for (int x = 0; x < t.w; ++x) {
            if (t.c == 3) {
                auto px = m.at<cv::Vec3b>(y, x);
                for (int k = 0; k < 3; ++k) t.at(y, x, k) = px[2 - k] / 255.0f;
            } else {
                t.at(y, x, 0) = m.at<uchar>(y, x) / 255.0f;
            }
        }
    return t;
}

// One bar plot per channel: bars are that channel's metrics.
inline void render_report_plots(const MetricReport& r, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    for (const auto& [name, cm] : r.channels) {
        if (cm.values.empty()) continue;
        const int W = 640, H = 400, margin = 60;
        cv::Mat img(H, W, CV_8UC3, cv::Scalar(255, 255, 255));
        double vmax = 1e-9;
        for (const auto& [k, v] : cm.values) vmax = std::max(vmax, std::abs(v));
        int n = int(cm.values.size());
        int bw = (W - 2 * margin) / std::max(1, n);
        int i = 0;
        for (const auto& [k, v] : cm.values) {
            int x0 = margin + i * bw + bw / 6;
            int x1 = margin + (i + 1) * bw - bw / 6;
            int h = int((H - 2 * margin) * std::abs(v) / vmax);
            cv::rectangle(img, {x0, H - margin - h}, {x1, H - margin}, cv::Scalar(180, 110, 40), cv::FILLED);
            char buf[48];
            std::snprintf(buf, sizeof buf, "%.3g", v);
            cv::putText(img, buf, {x0, H - margin - h - 8}, cv::FONT_HERSHEY_SIMPLEX, 0.45, cv::Scalar(0, 0, 0), 1);
            cv::putText(img, k, {x0, H - margin + 20}, cv::FONT_HERSHEY_SIMPLEX, 0.4, cv::Scalar(0, 0, 0), 1);
            ++i;
        }
        cv::putText(img, name, {margin, margin / 2}, cv::FONT_HERSHEY_SIMPLEX, 0.7, cv::Scalar(0, 0, 0), 2);
        cv::line(img, {margin, H - margin}, {W - margin, H - margin}, cv::Scalar(0, 0, 0), 1);
        cv::imwrite((dir / (name + ".png")).string(), img);
    }
}

}  // namespace ouro
