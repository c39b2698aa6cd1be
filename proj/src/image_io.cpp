#include "hmdr/image_io.hpp"

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <algorithm>
#include <cstdio>

#include "hmdr/errors.hpp"

namespace hmdr {

torch::Tensor read_image(const std::filesystem::path& path) {
  cv::Mat img = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
  if (img.empty()) throw DataError("cannot read image " + path.string());
  if (img.depth() != CV_8U) throw DataError("expected an 8-bit image: " + path.string());
  if (img.channels() == 4) cv::cvtColor(img, img, cv::COLOR_BGRA2BGR);
  if (img.channels() == 3) cv::cvtColor(img, img, cv::COLOR_BGR2RGB);
  img = img.isContinuous() ? img : img.clone();
  const int64_t c = img.channels();
  auto hwc = torch::from_blob(img.data, {img.rows, img.cols, c}, torch::kUInt8).clone();
  return hwc.permute({2, 0, 1}).contiguous().to(torch::kFloat32) / 255.0f;
}

void write_image(const std::filesystem::path& path, const torch::Tensor& image) {
  if (!image.defined() || image.dim() != 3 || (image.size(0) != 3 && image.size(0) != 1)) {
    throw ConfigError("write_image expects a 1 x H x W or 3 x H x W tensor");
  }
  auto u8 = torch::round(image.detach().to(torch::kFloat32).clamp(0.0, 1.0) * 255.0f)
                .to(torch::kUInt8)
                .permute({1, 2, 0})
                .contiguous();
  const int c = static_cast<int>(image.size(0));
  cv::Mat mat(static_cast<int>(image.size(1)), static_cast<int>(image.size(2)), CV_8UC(c), u8.data_ptr());
  cv::Mat out;
  if (c == 3) {
    cv::cvtColor(mat, out, cv::COLOR_RGB2BGR);
  } else {
    out = mat;
  }
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  if (!cv::imwrite(path.string(), out)) throw DataError("cannot write image " + path.string());
}

torch::Tensor read_mask_image(const std::filesystem::path& path) {
  auto img = read_image(path);
  if (img.size(0) == 3) img = std::get<0>(img.max(0, /*keepdim=*/true));
  return (img >= 128.0f / 255.0f).to(torch::kFloat32);
}

std::string frame_file_name(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "frame_%05zu.png", index);
  return buf;
}

std::vector<std::string> list_frame_files(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw DataError("not a directory: " + dir.string());
  std::vector<std::string> names;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    const auto name = entry.path().filename().string();
    if (entry.is_regular_file() && name.rfind("frame_", 0) == 0 && entry.path().extension() == ".png") {
      names.push_back(name);
    }
  }
  std::sort(names.begin(), names.end());
  return names;
}

}  // namespace hmdr
