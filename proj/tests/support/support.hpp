#pragma once

#include <torch/torch.h>

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "oracles.hpp"

namespace testing_support {

oracle::Array to_array(const torch::Tensor& t);
torch::Tensor from_array(const oracle::Array& a);
std::vector<double> to_vector(const torch::Tensor& t);

// Bitwise equality, including the shape.
bool identical(const torch::Tensor& a, const torch::Tensor& b);

struct GradCheck {
  double rel_error = 0.0;
  int64_t parameters = 0;
};

// Autograd gradient of loss() w.r.t. params (float64 leaves) against central
// differences taken in place on the same tensors.
GradCheck grad_check(const std::vector<torch::Tensor>& params, const std::function<torch::Tensor()>& loss,
                     double h = 1e-6);

// Fresh empty directory under the system temp dir.
std::filesystem::path scratch_dir(const std::string& name);

// Path of the built CLI, passed in by CMake.
std::filesystem::path cli_path();

// Runs a shell command, returns the exit status, stdout+stderr into `output`.
int run_command(const std::string& command, std::string* output = nullptr);

std::string read_text(const std::filesystem::path& path);

// Contents of tests/golden/<name>. With HMDR_UPDATE_GOLDEN=1 the file is
// first overwritten with `actual`.
std::string golden(const std::string& name, const std::string& actual);

}  // namespace testing_support
