#include "fft.hpp"

#include <fftw3.h>

#include <cstring>
#include <map>
#include <mutex>

namespace ionlock::detail {

namespace {

struct Plans {
    fftw_plan fwd = nullptr;
    fftw_plan inv = nullptr;
};

std::mutex g_plan_mutex;

// Plans are made on scratch buffers and run with the new-array interface.
Plans& plans_for(std::size_t n)
{
    static std::map<std::size_t, Plans> cache;
    auto it = cache.find(n);
    if (it != cache.end())
        return it->second;
    double* in = fftw_alloc_real(n);
    fftw_complex* out = fftw_alloc_complex(n / 2 + 1);
    Plans p;
    int ni = static_cast<int>(n);
    p.fwd = fftw_plan_dft_r2c_1d(ni, in, out, FFTW_ESTIMATE | FFTW_UNALIGNED);
    p.inv = fftw_plan_dft_c2r_1d(ni, out, in, FFTW_ESTIMATE | FFTW_UNALIGNED);
    fftw_free(in);
    fftw_free(out);
    return cache.emplace(n, p).first->second;
}

} // namespace

std::size_t next_pow2(std::size_t n)
{
    std::size_t p = 1;
    while (p < n)
        p <<= 1;
    return p;
}

std::vector<std::complex<double>> rfft(const std::vector<double>& x)
{
    std::size_t n = x.size();
    std::vector<double> in(x);
    std::vector<std::complex<double>> out(n / 2 + 1);
    fftw_plan plan;
    {
        std::lock_guard<std::mutex> lock(g_plan_mutex);
        plan = plans_for(n).fwd;
    }
    fftw_execute_dft_r2c(plan, in.data(), reinterpret_cast<fftw_complex*>(out.data()));
    return out;
}

std::vector<double> irfft(const std::vector<std::complex<double>>& spec, std::size_t n)
{
    std::vector<std::complex<double>> in(spec); // c2r destroys its input
    std::vector<double> out(n);
    fftw_plan plan;
    {
        std::lock_guard<std::mutex> lock(g_plan_mutex);
        plan = plans_for(n).inv;
    }
    fftw_execute_dft_c2r(plan, reinterpret_cast<fftw_complex*>(in.data()), out.data());
    double s = 1.0 / static_cast<double>(n);
    for (auto& v : out)
        v *= s;
    return out;
}

} // namespace ionlock::detail
