#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

namespace mrf {

// Real-valued activation/parameter tensor, implicit batch of 1.
// dims = {channels, spatial...} with 2 or 3 spatial dims.
struct NetTensor {
  std::vector<int64_t> dims;
  std::vector<double> v;  // values
  std::vector<double> g;  // gradient buffer, sized lazily

  NetTensor() = default;
  explicit NetTensor(std::vector<int64_t> d);

  int64_t numel() const;
  int64_t channels() const { return dims.empty() ? 0 : dims[0]; }
  int64_t spatial_numel() const;
  int spatial_rank() const { return static_cast<int>(dims.size()) - 1; }
  void ensure_grad();
  void zero_grad();
};

struct NetParam {
  std::string name;
  NetTensor t;
};

class Layer {
 public:
  virtual ~Layer() = default;
  virtual std::string describe() const = 0;
  virtual std::vector<int64_t> infer_dims(
      const std::vector<std::vector<int64_t>>& in_dims) const = 0;
  virtual void forward(const std::vector<const NetTensor*>& in, NetTensor& out) = 0;
  // Accumulates into in[i]->g (ensured by the caller) and into param grads,
  // given out.g.
  virtual void backward(const std::vector<const NetTensor*>& in,
                        const std::vector<NetTensor*>& in_grads, const NetTensor& out) = 0;
  virtual std::vector<NetParam*> params() { return {}; }
};

// Static DAG of layers; node 0 is the network input.
class Network {
 public:
  Network() = default;
  Network(Network&&) = default;
  Network& operator=(Network&&) = default;

  void set_input_dims(std::vector<int64_t> dims);
  // returns the node id of the layer output; inputs are node ids
  int add(std::unique_ptr<Layer> layer, std::vector<int> inputs);

  const NetTensor& forward(const NetTensor& input);
  // Exact reverse-mode gradients of <output_grad, output> w.r.t. parameters
  // (accumulated into param grads) and the input. Requires a prior forward.
  void backward(const NetTensor& output_grad);

  void zero_param_grads();
  std::vector<NetParam*> params();
  std::size_t n_params();
  const NetTensor& output() const;
  const NetTensor& input_grad() const { return input_; }
  const std::vector<int64_t>& output_dims() const;

  std::string descriptor();
  std::vector<double> serialize_params();
  void deserialize_params(const std::vector<double>& flat);

  // Kaiming-uniform fan-in for conv weights, zero biases.
  void init_params(uint64_t seed);

 private:
  struct Node {
    std::unique_ptr<Layer> layer;
    std::vector<int> inputs;
    NetTensor out;
  };
  NetTensor input_;
  std::vector<int64_t> input_dims_;
  std::vector<Node> nodes_;
  bool forward_done_ = false;
  std::string arch_name_ = "custom";

  friend Network build_drunet(const std::vector<int>&, int, bool,
                              const std::vector<int64_t>&);
  friend Network build_dipunet(const std::vector<int>&, const std::string&,
                               const std::vector<int64_t>&);
};

// DRUNet-style generator: head conv, per-scale residual blocks with strided
// 2x2(x2) downsampling, mirrored transpose-conv decoder with additive skips,
// tail conv. dims = {2K, spatial...}; spatial dims must be divisible by
// 2^(channels.size()-1).
Network build_drunet(const std::vector<int>& channels = {16, 32, 64, 128}, int n_res = 2,
                     bool bias = true, const std::vector<int64_t>& dims = {});

// Hourglass generator without residual units: strided-conv encoder,
// bilinear/trilinear upsampling decoder with skip concatenation.
Network build_dipunet(const std::vector<int>& channels, const std::string& upsample,
                      const std::vector<int64_t>& dims);

// Layer factories (zero-padded conv, k=s transpose conv, x2 linear upsample).
std::unique_ptr<Layer> make_conv(int spatial_rank, int in_ch, int out_ch, int k, int s, int p,
                                 bool bias, const std::string& name);
std::unique_ptr<Layer> make_transpose_conv(int spatial_rank, int in_ch, int out_ch, int k,
                                           bool bias, const std::string& name);
std::unique_ptr<Layer> make_upsample(int spatial_rank);
std::unique_ptr<Layer> make_relu();
std::unique_ptr<Layer> make_add();
std::unique_ptr<Layer> make_concat();

struct AdamState {
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  int64_t step = 0;
  std::vector<std::vector<double>> m, v;
};

// Standard Adam with bias correction; zeroes gradients after the step.
// Throws NumericalError naming the parameter if a gradient is NaN.
void adam_step(AdamState& state, const std::vector<NetParam*>& params, double lr);

// Smoothed anisotropic total variation over all channels:
// sum over channels, voxels and axes of sqrt(diff^2 + eps^2) - eps with
// forward differences and replicate boundary. If grad_accum is non-null the
// exact gradient is accumulated into it (same layout as x).
double tv_penalty(const double* x, const std::vector<int64_t>& dims, double eps,
                  double* grad_accum);

}  // namespace mrf
