#include "support.hpp"

#include <array>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

namespace testing_support {

namespace fs = std::filesystem;

std::vector<double> to_vector(const torch::Tensor& t) {
  auto c = t.detach().to(torch::kFloat64).contiguous();
  return std::vector<double>(c.data_ptr<double>(), c.data_ptr<double>() + c.numel());
}

oracle::Array to_array(const torch::Tensor& t) {
  oracle::Array a(std::vector<int64_t>(t.sizes().begin(), t.sizes().end()));
  a.v = to_vector(t);
  return a;
}

torch::Tensor from_array(const oracle::Array& a) {
  return torch::tensor(a.v, torch::kFloat64).reshape(a.dims);
}

bool identical(const torch::Tensor& a, const torch::Tensor& b) {
  if (a.sizes() != b.sizes() || a.scalar_type() != b.scalar_type()) return false;
  auto ca = a.detach().contiguous(), cb = b.detach().contiguous();
  return std::memcmp(ca.data_ptr(), cb.data_ptr(), static_cast<std::size_t>(ca.nbytes())) == 0;
}

GradCheck grad_check(const std::vector<torch::Tensor>& params, const std::function<torch::Tensor()>& loss,
                     double h) {
  for (const auto& p : params) {
    if (p.grad().defined()) p.mutable_grad().zero_();
  }
  loss().backward();
  std::vector<double> analytic, numeric;
  GradCheck r;
  for (const auto& p : params) {
    const auto g = p.grad().defined() ? to_vector(p.grad()) : std::vector<double>(p.numel(), 0.0);
    analytic.insert(analytic.end(), g.begin(), g.end());
    torch::NoGradGuard no_grad;
    auto flat = p.view({-1});
    for (int64_t i = 0; i < p.numel(); ++i) {
      const double keep = flat[i].item<double>();
      flat[i] = keep + h;
      const double up = loss().item<double>();
      flat[i] = keep - h;
      const double down = loss().item<double>();
      flat[i] = keep;
      numeric.push_back((up - down) / (2.0 * h));
    }
    r.parameters += p.numel();
  }
  r.rel_error = oracle::relative_error(analytic, numeric);
  return r;
}

fs::path scratch_dir(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("hmdr_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

fs::path cli_path() { return HMDR_CLI_PATH; }

int run_command(const std::string& command, std::string* output) {
  FILE* pipe = popen((command + " 2>&1").c_str(), "r");
  if (!pipe) return -1;
  std::array<char, 4096> buf{};
  std::string text;
  while (std::fgets(buf.data(), buf.size(), pipe)) text += buf.data();
  const int status = pclose(pipe);
  if (output) *output = text;
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

std::string golden(const std::string& name, const std::string& actual) {
  const auto path = fs::path(HMDR_GOLDEN_DIR) / name;
  if (const char* update = std::getenv("HMDR_UPDATE_GOLDEN"); update && std::string(update) == "1") {
    std::ofstream(path, std::ios::binary) << actual;
  }
  return read_text(path);
}

}  // namespace testing_support
