#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "casr/frame.hpp"
#include "casr/image.hpp"
#include "casr/sdam.hpp"

namespace casr {

enum class BackboneKind { bicubic, lanczos3, superpixel_nearest, external, noisy_bicubic };

struct BackboneSpec {
    BackboneKind kind = BackboneKind::bicubic;
    std::string command;  // external only; run through /bin/sh -c
    /// Forward the structural channel to external processes.
    bool accepts_structural = false;
    /// noisy_bicubic: standard deviation of the additive Gaussian noise.
    double noise_sigma = 0.03;
    std::uint64_t seed = 0;
    sdam::SegmentOptions segment;  // superpixel_nearest

    /// "bicubic", "lanczos3", "superpixel", "superpixel-nearest",
    /// "noisy-bicubic", "noisy-bicubic:<sigma>" or "external:<command>".
    static BackboneSpec parse(std::string_view text);
    std::string name() const;
};

struct StepContext {
    double s_max = 4.0;
    int iteration = 0;
    std::size_t patch = 0;
    double timeout_seconds = 120.0;
};

/// One long-lived child process speaking the frame protocol on its standard
/// streams, strictly one request at a time. Started lazily and restarted
/// after a failure.
class ExternalProcess {
public:
    explicit ExternalProcess(std::string command);
    ~ExternalProcess();
    ExternalProcess(const ExternalProcess&) = delete;
    ExternalProcess& operator=(const ExternalProcess&) = delete;

    /// Sends one request and waits for its response. Throws BackboneFailure
    /// on timeout (the child is killed), early exit, malformed frames or an
    /// error response; the message carries the child's stderr tail.
    frame::Response call(const frame::Request& request, double timeout_seconds);

    bool running() const noexcept { return pid_ > 0; }

private:
    void start();
    void stop(bool force) noexcept;
    [[noreturn]] void fail(const std::string& what);
    std::string stderr_tail() const;

    std::string command_;
    int pid_ = -1;
    int to_child_ = -1;
    int from_child_ = -1;
    std::string stderr_path_;
};

/// A backbone bound to its runtime resources. Slots index the external
/// process pool; concurrent callers must use distinct slots.
class Backbone {
public:
    explicit Backbone(BackboneSpec spec, int slots = 1);
    ~Backbone();

    const BackboneSpec& spec() const noexcept { return spec_; }
    int slots() const noexcept { return static_cast<int>(pool_.size()); }

    /// Upscales img to round(dims * factor). structural may be null; when
    /// given its size must match img. Throws InvalidArgument when factor is
    /// outside (1, s_max] and BackboneFailure when the dimension contract
    /// is broken.
    ImageBuffer upscale(const ImageBuffer& img, const sdam::StructuralMap* structural, double factor,
                        const StepContext& context, int slot = 0);

private:
    BackboneSpec spec_;
    std::vector<std::unique_ptr<ExternalProcess>> pool_;
};

/// Single call convenience; external specs spawn a process for this call only.
ImageBuffer upscale_step(const ImageBuffer& img, const sdam::StructuralMap* structural, double factor,
                         const BackboneSpec& spec, const StepContext& context = {});

/// round(dim * factor), the size every backbone must return.
int scaled_dim(int dim, double factor);

/// Deterministic standard normal samples from mt19937_64 (Box-Muller), so
/// the noise does not depend on the standard library's distributions.
std::vector<float> gaussian_noise(std::size_t count, std::uint64_t seed);

/// Seed of one noisy-bicubic call.
std::uint64_t noise_seed(std::uint64_t seed, int iteration, std::size_t patch);

}  // namespace casr
