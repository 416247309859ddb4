#pragma once

#include <complex>
#include <cstddef>
#include <vector>

namespace ionlock::detail {

// Unnormalised real transforms backed by FFTW (estimate plans, cached per size).
std::vector<std::complex<double>> rfft(const std::vector<double>& x);
// Inverse of rfft including the 1/n factor; spec.size() must be n/2 + 1.
std::vector<double> irfft(const std::vector<std::complex<double>>& spec, std::size_t n);

std::size_t next_pow2(std::size_t n);

} // namespace ionlock::detail
