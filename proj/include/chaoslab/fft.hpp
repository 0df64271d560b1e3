#pragma once

#include <fftw3.h>

#include <complex>
#include <cstring>
#include <cstddef>
#include <mutex>
#include <span>
#include <stdexcept>

namespace chaoslab {

namespace detail {
// FFTW planner calls are not thread-safe; execution is.
inline std::mutex& fftw_planner_mutex() {
    static std::mutex m;
    return m;
}
}  // namespace detail

enum class FftDirection { forward, backward };

/// Reusable unnormalized complex DFT of a fixed size.
///
/// forward:  Y_j = sum_k X_k exp(-2 pi i j k / N)
/// backward: Y_j = sum_k X_k exp(+2 pi i j k / N)
class FftPlan {
public:
    FftPlan(std::size_t size, FftDirection dir) : size_(size) {
        if (size == 0) throw std::invalid_argument("FftPlan: size must be positive");
        std::lock_guard lock(detail::fftw_planner_mutex());
        buf_ = fftw_alloc_complex(size);
        // FFTW_ESTIMATE keeps the plan, and so the rounding, identical across runs.
        plan_ = fftw_plan_dft_1d(static_cast<int>(size), buf_, buf_,
                                 dir == FftDirection::forward ? FFTW_FORWARD : FFTW_BACKWARD, FFTW_ESTIMATE);
        if (plan_ == nullptr) {
            fftw_free(buf_);
            throw std::runtime_error("FftPlan: FFTW planning failed");
        }
    }

    FftPlan(const FftPlan&) = delete;
    FftPlan& operator=(const FftPlan&) = delete;

    ~FftPlan() {
        std::lock_guard lock(detail::fftw_planner_mutex());
        fftw_destroy_plan(plan_);
        fftw_free(buf_);
    }

    std::size_t size() const { return size_; }

    /// In-place transform.
    /// Not safe to call concurrently on one plan.
    void execute(std::span<std::complex<double>> data) {
        if (data.size() != size_) throw std::invalid_argument("FftPlan: buffer size mismatch");
        // Runs on the plan's own SIMD-aligned buffer.
        std::memcpy(buf_, data.data(), size_ * sizeof(fftw_complex));
        fftw_execute(plan_);
        std::memcpy(static_cast<void*>(data.data()), buf_, size_ * sizeof(fftw_complex));
    }

private:
    std::size_t size_;
    fftw_complex* buf_ = nullptr;
    fftw_plan plan_ = nullptr;
};

}  // namespace chaoslab
