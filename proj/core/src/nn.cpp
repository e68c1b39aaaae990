#include "rpnr/nn.hpp"

#include <algorithm>

#include "rpnr/random.hpp"
#include "strings.hpp"

namespace rpnr {
namespace nn = torch::nn;

namespace {

nn::Sequential conv_block(int in, int out, bool batch_norm, int stride = 1) {
  nn::Sequential block(nn::Conv2d(nn::Conv2dOptions(in, out, 3).stride(stride).padding(1)));
  if (batch_norm) block->push_back(nn::BatchNorm2d(out));
  block->push_back(nn::LeakyReLU(nn::LeakyReLUOptions().negative_slope(0.2)));
  return block;
}

}  // namespace

int UNetSpec::width_at(int level) const { return std::min(base_width << level, max_width); }

UNetImpl::UNetImpl(const UNetSpec& spec) : spec_(spec) {
  if (spec.depth < 1 || spec.base_width < 1 || spec.in_channels < 1 || spec.out_channels < 1) {
    throw std::invalid_argument("invalid UNet spec");
  }
  int in = spec.in_channels;
  for (int level = 0; level < spec.depth; ++level) {
    const int w = spec.width_at(level);
    encoders_->push_back(conv_block(in, w, spec.batch_norm));
    downs_->push_back(conv_block(w, spec.width_at(level + 1), spec.batch_norm, 2));
    in = spec.width_at(level + 1);
  }
  bottleneck_ = conv_block(in, in, spec.batch_norm);
  for (int level = spec.depth - 1; level >= 0; --level) {
    const int w = spec.width_at(level);
    decoders_->push_back(conv_block(spec.width_at(level + 1) + w, w, spec.batch_norm));
  }
  head_ = nn::Conv2d(nn::Conv2dOptions(spec.width_at(0), spec.out_channels, 1));
  register_module("encoders", encoders_);
  register_module("downs", downs_);
  register_module("bottleneck", bottleneck_);
  register_module("decoders", decoders_);
  register_module("head", head_);
  if (spec.global_head) {
    global_ = register_module("global_head", nn::Linear(spec.width_at(spec.depth), 1));
  }
}

UNetOutput UNetImpl::forward(const torch::Tensor& x) {
  if (x.dim() != 4 || x.size(1) != spec_.in_channels || x.size(2) % spec_.divisor() != 0 ||
      x.size(3) % spec_.divisor() != 0) {
    throw ShapeError(detail::cat("UNet input ", x.sizes(), " incompatible with ", spec_.in_channels,
                                 " channels / divisor ", spec_.divisor()));
  }
  std::vector<torch::Tensor> skips;
  skips.reserve(spec_.depth);
  torch::Tensor h = x;
  for (int level = 0; level < spec_.depth; ++level) {
    h = encoders_[level]->as<nn::Sequential>()->forward(h);
    skips.push_back(h);
    h = downs_[level]->as<nn::Sequential>()->forward(h);
  }
  h = bottleneck_->forward(h);

  UNetOutput out;
  if (!global_.is_empty()) {
    out.global = global_->forward(h.mean({2, 3})).squeeze(1);
  }
  for (int i = 0; i < spec_.depth; ++i) {
    const auto& skip = skips[spec_.depth - 1 - i];
    h = torch::upsample_nearest2d(h, {skip.size(2), skip.size(3)});
    h = decoders_[i]->as<nn::Sequential>()->forward(torch::cat({h, skip}, 1));
  }
  out.map = head_->forward(h);
  return out;
}

UNetOutput UNetImpl::forward_padded(const torch::Tensor& x) {
  const int64_t d = spec_.divisor();
  const int64_t h = x.size(2);
  const int64_t w = x.size(3);
  const int64_t ph = (d - h % d) % d;
  const int64_t pw = (d - w % d) % d;
  if (ph == 0 && pw == 0) return forward(x);
  auto padded = torch::replication_pad2d(x, {0, pw, 0, ph});
  auto out = forward(padded);
  out.map = out.map.index({torch::indexing::Slice(), torch::indexing::Slice(),
                           torch::indexing::Slice(0, h), torch::indexing::Slice(0, w)});
  return out;
}

torch::Tensor to_tensor(const Raster& raster) {
  return torch::from_blob(const_cast<float*>(raster.values().data()),
                          {1, raster.channels(), raster.height(), raster.width()}, torch::kFloat32)
      .clone();
}

torch::Tensor to_batch(std::span<const Raster* const> rasters) {
  std::vector<torch::Tensor> parts;
  parts.reserve(rasters.size());
  for (const Raster* r : rasters) parts.push_back(to_tensor(*r));
  return torch::cat(parts, 0);
}

Raster from_tensor(const torch::Tensor& tensor) {
  auto t = tensor.detach().to(torch::kFloat32).contiguous();
  if (t.dim() == 4) {
    if (t.size(0) != 1) throw ShapeError("from_tensor expects a single sample");
    t = t[0];
  }
  if (t.dim() != 3) throw ShapeError(detail::cat("from_tensor expects [C,H,W], got ", t.sizes()));
  Raster out(static_cast<int>(t.size(1)), static_cast<int>(t.size(2)), static_cast<int>(t.size(0)));
  std::copy_n(t.data_ptr<float>(), out.size(), out.values().begin());
  return out;
}

double mse(const Raster& a, const Raster& b) {
  if (!a.same_shape(b)) throw ShapeError("mse: shape mismatch");
  if (a.empty()) return 0.0;
  double acc = 0.0;
  const auto va = a.values();
  const auto vb = b.values();
  for (std::size_t i = 0; i < va.size(); ++i) {
    const double d = double(va[i]) - vb[i];
    acc += d * d;
  }
  return acc / static_cast<double>(va.size());
}

std::vector<std::size_t> shuffled_indices(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  Rng rng(seed);
  for (std::size_t i = n; i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.next() % i);
    std::swap(idx[i - 1], idx[j]);
  }
  return idx;
}

void seed_torch(std::uint64_t seed) {
  torch::set_num_threads(1);
  at::globalContext().setFlushDenormal(true);
  torch::manual_seed(seed);
}

}  // namespace rpnr
