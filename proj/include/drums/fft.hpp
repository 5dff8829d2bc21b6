#pragma once

#include "drums/core.hpp"

namespace drums {

/// Orthonormal centered 2-D DFT (fftshift . DFT . ifftshift) of one ny x nx plane, in place.
void fft2c_inplace(std::span<cx> plane, std::size_t ny, std::size_t nx);
void ifft2c_inplace(std::span<cx> plane, std::size_t ny, std::size_t nx);

/// Centered transforms over the last two axes of an array of any rank >= 2.
CArray fft2c(const CArray &img);
CArray ifft2c(const CArray &kspace);

} // namespace drums
