#ifndef PIXELDIFF_IMAGE_IO_HPP
#define PIXELDIFF_IMAGE_IO_HPP

#include <string>

#include "pixeldiff/tensor.hpp"

namespace pxd {

// Images are [H, W, 3] float tensors in [-1, 1].

// 8-bit RGB PNG; [-1,1] -> [0,255] by round-half-even
void write_png(const std::string& path, const Tensor& image);
Tensor read_png(const std::string& path);

// bilinear resize of an [H,W,3] tensor
Tensor resize_bilinear(const Tensor& image, int out_h, int out_w);

double psnr(const Tensor& a, const Tensor& b);  // dB over the [-1,1] range

}  // namespace pxd

#endif
