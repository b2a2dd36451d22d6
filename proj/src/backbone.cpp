#include "casr/backbone.hpp"

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <numbers>
#include <random>
#include <sstream>
#include <thread>

#include "casr/error.hpp"

extern char** environ;

namespace casr {

namespace {

bool starts_with(std::string_view s, std::string_view prefix) { return s.substr(0, prefix.size()) == prefix; }

double parse_double(std::string_view text, std::string_view what) {
    const std::string s(text);
    std::size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(s, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used != s.size() || s.empty() || !std::isfinite(v)) {
        throw InvalidArgument("invalid " + std::string(what) + ": '" + s + "'");
    }
    return v;
}

std::string errno_text(const char* what) { return std::string(what) + ": " + std::strerror(errno); }

void ignore_sigpipe() {
    static std::once_flag once;
    std::call_once(once, [] { ::signal(SIGPIPE, SIG_IGN); });
}

std::uint64_t splitmix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

ImageBuffer superpixel_nearest(const ImageBuffer& img, double factor, const sdam::SegmentOptions& options) {
    sdam::SegmentOptions o = options;
    o.keep_soft_assign = false;
    const sdam::Segmentation seg = sdam::segment_superpixels(img, o);
    return sdam::render_regions(sdam::upsample_segmentation(seg, factor));
}

}  // namespace

int scaled_dim(int dim, double factor) { return static_cast<int>(std::lround(static_cast<double>(dim) * factor)); }

std::uint64_t noise_seed(std::uint64_t seed, int iteration, std::size_t patch) {
    std::uint64_t h = splitmix(seed);
    h = splitmix(h ^ static_cast<std::uint64_t>(iteration));
    return splitmix(h ^ static_cast<std::uint64_t>(patch));
}

std::vector<float> gaussian_noise(std::size_t count, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    auto uniform = [&rng] { return (static_cast<double>(rng() >> 11) + 1.0) * 0x1.0p-53; };  // (0, 1]
    std::vector<float> out(count);
    for (std::size_t i = 0; i < count; i += 2) {
        const double r = std::sqrt(-2.0 * std::log(uniform()));
        const double t = 2.0 * std::numbers::pi * uniform();
        out[i] = static_cast<float>(r * std::cos(t));
        if (i + 1 < count) out[i + 1] = static_cast<float>(r * std::sin(t));
    }
    return out;
}

BackboneSpec BackboneSpec::parse(std::string_view text) {
    BackboneSpec spec;
    if (text == "bicubic") {
        spec.kind = BackboneKind::bicubic;
    } else if (text == "lanczos3") {
        spec.kind = BackboneKind::lanczos3;
    } else if (text == "superpixel" || text == "superpixel-nearest") {
        spec.kind = BackboneKind::superpixel_nearest;
    } else if (text == "noisy-bicubic") {
        spec.kind = BackboneKind::noisy_bicubic;
    } else if (starts_with(text, "noisy-bicubic:")) {
        spec.kind = BackboneKind::noisy_bicubic;
        spec.noise_sigma = parse_double(text.substr(14), "noise sigma");
        if (spec.noise_sigma < 0.0) throw InvalidArgument("noise sigma must be non-negative");
    } else if (starts_with(text, "external:")) {
        spec.kind = BackboneKind::external;
        std::string_view cmd = text.substr(9);
        if (cmd.size() >= 2 && cmd.front() == '"' && cmd.back() == '"') cmd = cmd.substr(1, cmd.size() - 2);
        spec.command = std::string(cmd);
        if (spec.command.find_first_not_of(" \t") == std::string::npos) {
            throw InvalidArgument("external backbone needs a command");
        }
    } else {
        throw InvalidArgument("unknown backbone '" + std::string(text) +
                              "' (expected bicubic, lanczos3, superpixel, noisy-bicubic or external:<command>)");
    }
    return spec;
}

std::string BackboneSpec::name() const {
    switch (kind) {
        case BackboneKind::bicubic: return "bicubic";
        case BackboneKind::lanczos3: return "lanczos3";
        case BackboneKind::superpixel_nearest: return "superpixel-nearest";
        case BackboneKind::noisy_bicubic: return "noisy-bicubic";
        case BackboneKind::external: return "external:" + command;
    }
    return "unknown";
}

ExternalProcess::ExternalProcess(std::string command) : command_(std::move(command)) {}

ExternalProcess::~ExternalProcess() { stop(false); }

void ExternalProcess::start() {
    ignore_sigpipe();
    int in_pipe[2];
    int out_pipe[2];
    if (::pipe2(in_pipe, O_CLOEXEC) != 0) throw BackboneFailure(errno_text("pipe"));
    if (::pipe2(out_pipe, O_CLOEXEC) != 0) {
        ::close(in_pipe[0]);
        ::close(in_pipe[1]);
        throw BackboneFailure(errno_text("pipe"));
    }
    std::string tmpl = (std::filesystem::temp_directory_path() / "casr-backbone-XXXXXX").string();
    const int err_fd = ::mkostemp(tmpl.data(), O_CLOEXEC);
    if (err_fd < 0) {
        for (int fd : {in_pipe[0], in_pipe[1], out_pipe[0], out_pipe[1]}) ::close(fd);
        throw BackboneFailure(errno_text("cannot create stderr capture file"));
    }
    stderr_path_ = tmpl;

    posix_spawn_file_actions_t actions;
    posix_spawn_file_actions_init(&actions);
    posix_spawn_file_actions_adddup2(&actions, in_pipe[0], 0);
    posix_spawn_file_actions_adddup2(&actions, out_pipe[1], 1);
    posix_spawn_file_actions_adddup2(&actions, err_fd, 2);
    std::string sh = "sh";
    std::string dash_c = "-c";
    char* argv[] = {sh.data(), dash_c.data(), command_.data(), nullptr};
    pid_t pid = -1;
    const int rc = ::posix_spawn(&pid, "/bin/sh", &actions, nullptr, argv, environ);
    posix_spawn_file_actions_destroy(&actions);
    ::close(in_pipe[0]);
    ::close(out_pipe[1]);
    ::close(err_fd);
    if (rc != 0) {
        ::close(in_pipe[1]);
        ::close(out_pipe[0]);
        throw BackboneFailure("cannot start external backbone '" + command_ + "': " + std::strerror(rc));
    }
    pid_ = pid;
    to_child_ = in_pipe[1];
    from_child_ = out_pipe[0];
    ::fcntl(to_child_, F_SETFL, ::fcntl(to_child_, F_GETFL) | O_NONBLOCK);
    ::fcntl(from_child_, F_SETFL, ::fcntl(from_child_, F_GETFL) | O_NONBLOCK);
}

void ExternalProcess::stop(bool force) noexcept {
    if (to_child_ >= 0) ::close(to_child_);
    if (from_child_ >= 0) ::close(from_child_);
    to_child_ = from_child_ = -1;
    if (pid_ > 0) {
        if (force) ::kill(pid_, SIGKILL);
        int status = 0;
        bool reaped = false;
        for (int i = 0; i < 200 && !reaped; ++i) {
            if (::waitpid(pid_, &status, WNOHANG) == pid_) {
                reaped = true;
            } else {
                std::this_thread::sleep_for(std::chrono::milliseconds(10));
            }
        }
        if (!reaped) {
            ::kill(pid_, SIGKILL);
            ::waitpid(pid_, &status, 0);
        }
        pid_ = -1;
    }
    if (!stderr_path_.empty()) {
        std::error_code ec;
        std::filesystem::remove(stderr_path_, ec);
        stderr_path_.clear();
    }
}

std::string ExternalProcess::stderr_tail() const {
    if (stderr_path_.empty()) return {};
    std::ifstream in(stderr_path_, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    std::string text = ss.str();
    constexpr std::size_t keep = 2000;
    if (text.size() > keep) text = "..." + text.substr(text.size() - keep);
    while (!text.empty() && (text.back() == '\n' || text.back() == '\r')) text.pop_back();
    return text;
}

void ExternalProcess::fail(const std::string& what) {
    std::string message = "external backbone '" + command_ + "': " + what;
    if (pid_ > 0) {
        int status = 0;
        if (::waitpid(pid_, &status, WNOHANG) == pid_) {
            pid_ = -1;
            if (WIFEXITED(status)) {
                message += "; exit status " + std::to_string(WEXITSTATUS(status));
            } else if (WIFSIGNALED(status)) {
                message += "; killed by signal " + std::to_string(WTERMSIG(status));
            }
        }
    }
    const std::string err = stderr_tail();
    if (!err.empty()) message += "; stderr: " + err;
    stop(true);
    throw BackboneFailure(message);
}

frame::Response ExternalProcess::call(const frame::Request& request, double timeout_seconds) {
    if (pid_ <= 0) start();
    const std::vector<std::uint8_t> out = frame::encode(request);
    const auto deadline = std::chrono::steady_clock::now() + std::chrono::duration<double>(timeout_seconds);

    std::size_t written = 0;
    std::vector<std::uint8_t> in;
    std::size_t need = frame::prefix_size;
    int stage = 0;  // 0 prefix, 1 header, 2 payload, 3 complete

    while (stage < 3) {
        const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
        if (left.count() <= 0) {
            char seconds[32];
            std::snprintf(seconds, sizeof seconds, "%g", timeout_seconds);
            fail(std::string("no response within ") + seconds + " s, process killed");
        }
        pollfd fds[2];
        nfds_t n = 0;
        const bool writing = written < out.size();
        if (writing) fds[n++] = {to_child_, POLLOUT, 0};
        fds[n++] = {from_child_, POLLIN, 0};
        const int ready = ::poll(fds, n, static_cast<int>(std::min<long long>(left.count(), 1000)));
        if (ready < 0) {
            if (errno == EINTR) continue;
            fail(errno_text("poll"));
        }
        if (writing && fds[0].revents) {
            const ssize_t w = ::write(to_child_, out.data() + written, out.size() - written);
            if (w > 0) {
                written += static_cast<std::size_t>(w);
            } else if (w < 0 && errno != EAGAIN && errno != EINTR) {
                fail("closed its input before reading the whole request");
            }
        }
        const pollfd& rd = fds[n - 1];
        if (rd.revents & (POLLIN | POLLHUP | POLLERR)) {
            std::uint8_t buf[1 << 16];
            const std::size_t want = std::min(sizeof buf, need - in.size());
            const ssize_t r = ::read(from_child_, buf, want);
            if (r == 0) fail("exited before completing a response");
            if (r < 0) {
                if (errno != EAGAIN && errno != EINTR) fail(errno_text("read"));
                continue;
            }
            in.insert(in.end(), buf, buf + r);
            while (stage < 3 && in.size() == need) {
                try {
                    if (stage == 0) {
                        need += frame::header_length(in);
                    } else if (stage == 1) {
                        need += frame::response_payload_bytes(std::span(in).subspan(frame::prefix_size),
                                                             frame::prefix_size);
                    }
                } catch (const FrameError& e) {
                    fail(std::string("malformed response frame: ") + e.what());
                }
                ++stage;
            }
        }
    }
    if (written < out.size()) fail("responded before reading the whole request");

    frame::Response response;
    try {
        response = frame::decode_response(in);
    } catch (const FrameError& e) {
        fail(std::string("malformed response frame: ") + e.what());
    }
    if (response.error) fail("reported error: " + *response.error);
    return response;
}

Backbone::Backbone(BackboneSpec spec, int slots) : spec_(std::move(spec)) {
    if (slots < 1) throw InvalidArgument("backbone needs at least one slot");
    if (spec_.kind == BackboneKind::external) {
        if (spec_.command.empty()) throw InvalidArgument("external backbone needs a command");
        for (int i = 0; i < slots; ++i) pool_.push_back(std::make_unique<ExternalProcess>(spec_.command));
    } else {
        pool_.resize(static_cast<std::size_t>(slots));
    }
}

Backbone::~Backbone() = default;

ImageBuffer Backbone::upscale(const ImageBuffer& img, const sdam::StructuralMap* structural, double factor,
                              const StepContext& context, int slot) {
    if (img.empty()) throw InvalidArgument("backbone input is empty");
    if (!std::isfinite(factor) || factor <= 1.0 || factor > context.s_max * (1.0 + 1e-12)) {
        char buf[96];
        std::snprintf(buf, sizeof buf, "sub-scale %g outside (1, %g]", factor, context.s_max);
        throw InvalidArgument(buf);
    }
    if (structural && (structural->depth.width() != img.width() || structural->depth.height() != img.height())) {
        throw InvalidArgument("structural map size does not match the backbone input");
    }
    if (slot < 0 || slot >= slots()) throw InvalidArgument("backbone slot out of range");

    const int ow = scaled_dim(img.width(), factor);
    const int oh = scaled_dim(img.height(), factor);
    ImageBuffer out;
    switch (spec_.kind) {
        case BackboneKind::bicubic: out = resample(img, ow, oh, ResampleKernel::bicubic); break;
        case BackboneKind::lanczos3: out = resample(img, ow, oh, ResampleKernel::lanczos3); break;
        case BackboneKind::superpixel_nearest: out = superpixel_nearest(img, factor, spec_.segment); break;
        case BackboneKind::noisy_bicubic: {
            const ImageBuffer up = resample(img, ow, oh, ResampleKernel::bicubic);
            std::vector<float> values(up.data().begin(), up.data().end());
            const std::vector<float> noise =
                gaussian_noise(values.size(), noise_seed(spec_.seed, context.iteration, context.patch));
            const auto sigma = static_cast<float>(spec_.noise_sigma);
            for (std::size_t i = 0; i < values.size(); ++i) values[i] += sigma * noise[i];
            out = ImageBuffer(ow, oh, img.channels(), values);
            break;
        }
        case BackboneKind::external: {
            frame::Request req;
            req.width = img.width();
            req.height = img.height();
            req.channels = img.channels();
            req.scale = factor;
            req.iteration = context.iteration;
            req.image.assign(img.data().begin(), img.data().end());
            if (spec_.accepts_structural && structural) {
                req.structural.emplace(structural->depth.data().begin(), structural->depth.data().end());
            }
            frame::Response resp = pool_[static_cast<std::size_t>(slot)]->call(req, context.timeout_seconds);
            if (resp.width != ow || resp.height != oh || resp.channels != img.channels()) {
                throw BackboneFailure("external backbone '" + spec_.command + "' broke the dimension contract: expected " +
                                      std::to_string(ow) + "x" + std::to_string(oh) + "x" +
                                      std::to_string(img.channels()) + ", got " + std::to_string(resp.width) + "x" +
                                      std::to_string(resp.height) + "x" + std::to_string(resp.channels));
            }
            out = ImageBuffer(ow, oh, img.channels(), resp.image);
            break;
        }
    }
    if (out.width() != ow || out.height() != oh || out.channels() != img.channels()) {
        throw BackboneFailure("backbone " + spec_.name() + " broke the dimension contract");
    }
    return out;
}

ImageBuffer upscale_step(const ImageBuffer& img, const sdam::StructuralMap* structural, double factor,
                         const BackboneSpec& spec, const StepContext& context) {
    Backbone backbone(spec, 1);
    return backbone.upscale(img, structural, factor, context, 0);
}

}  // namespace casr
