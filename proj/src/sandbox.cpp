#include "zpd/toolkit.hpp"
#include "zpd/util.hpp"

#include <fcntl.h>
#include <sched.h>
#include <signal.h>
#include <sys/resource.h>
#include <sys/stat.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include <atomic>
#include <chrono>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <thread>

namespace zpd {

namespace {

namespace fs = std::filesystem;

// Sentinel exit code for "exec itself failed" (interpreter missing etc.).
constexpr int kExecFailure = 113;

std::atomic<std::uint64_t> g_scratch_counter{0};

std::string read_capped(const fs::path& path, std::size_t cap) {
    std::ifstream in(path, std::ios::binary);
    if (!in) return "";
    std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (data.size() > cap) {
        data.resize(cap);
        data += "\n...[truncated]";
    }
    return data;
}

}  // namespace

Observation CodeRunner::run(const std::string& script, const CodeLimits& limits) {
    if (trim(script).empty()) throw std::invalid_argument("script must be non-empty");
    if (limits.wall_seconds <= 0 || limits.memory_bytes <= 0)
        throw std::invalid_argument("code limits must be positive");

    std::lock_guard<std::mutex> lock(mutex_);

    fs::path scratch = fs::temp_directory_path() /
                       ("zpd-sbx-" + std::to_string(::getpid()) + "-" +
                        std::to_string(g_scratch_counter.fetch_add(1)));
    fs::create_directories(scratch);
    struct ScratchGuard {
        fs::path p;
        ~ScratchGuard() {
            std::error_code ec;
            fs::remove_all(p, ec);
        }
    } guard{scratch};

    fs::path script_path = scratch / "script.py";
    fs::path out_path = scratch / "stdout.txt";
    fs::path err_path = scratch / "stderr.txt";
    write_file_atomic(script_path.string(), script);

    pid_t pid = ::fork();
    if (pid < 0) throw ProviderError("sandbox launch failure: fork failed", true);

    if (pid == 0) {
        // Child: confine to the scratch directory, cap memory, kill network
        // where the kernel lets us, and hand stdout/stderr to capture files.
        if (::chdir(scratch.c_str()) != 0) ::_exit(kExecFailure);

        int out_fd = ::open(out_path.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
        int err_fd = ::open(err_path.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
        if (out_fd < 0 || err_fd < 0) ::_exit(kExecFailure);
        ::dup2(out_fd, STDOUT_FILENO);
        ::dup2(err_fd, STDERR_FILENO);

        rlimit as_limit{static_cast<rlim_t>(limits.memory_bytes),
                        static_cast<rlim_t>(limits.memory_bytes)};
        ::setrlimit(RLIMIT_AS, &as_limit);
        rlimit cpu_limit{static_cast<rlim_t>(limits.wall_seconds + 5),
                         static_cast<rlim_t>(limits.wall_seconds + 5)};
        ::setrlimit(RLIMIT_CPU, &cpu_limit);

#ifdef __linux__
        // Best effort; unprivileged kernels may refuse.
        ::unshare(CLONE_NEWUSER | CLONE_NEWNET);
#endif

        std::string home = "HOME=" + scratch.string();
        char path_env[] = "PATH=/usr/local/bin:/usr/bin:/bin";
        char no_pyc[] = "PYTHONDONTWRITEBYTECODE=1";
        char* envp[] = {path_env, home.data(), no_pyc, nullptr};
        char* argv[] = {const_cast<char*>(interpreter_.c_str()),
                        const_cast<char*>("script.py"), nullptr};
        ::execvpe(interpreter_.c_str(), argv, envp);
        ::_exit(kExecFailure);
    }

    auto deadline = std::chrono::steady_clock::now() + std::chrono::seconds(limits.wall_seconds);
    int status = 0;
    bool timed_out = false;
    for (;;) {
        pid_t r = ::waitpid(pid, &status, WNOHANG);
        if (r == pid) break;
        if (r < 0) throw ProviderError("sandbox wait failed", true);
        if (std::chrono::steady_clock::now() >= deadline) {
            ::kill(pid, SIGKILL);
            ::waitpid(pid, &status, 0);
            timed_out = true;
            break;
        }
        std::this_thread::sleep_for(std::chrono::milliseconds(10));
    }

    int exit_code = -1;
    if (WIFEXITED(status)) exit_code = WEXITSTATUS(status);
    if (!timed_out && exit_code == kExecFailure)
        throw ProviderError("sandbox launch failure: cannot exec " + interpreter_, true);

    std::string out = read_capped(out_path, capture_cap_);
    std::string err = read_capped(err_path, capture_cap_);

    Observation obs;
    obs.tool = Tool::code;
    obs.payload = Json{{"stdout", out}, {"stderr", err}, {"exit_code", exit_code},
                       {"timed_out", timed_out}};
    if (timed_out)
        obs.payload["error"] =
            "timeout after " + std::to_string(limits.wall_seconds) + "s wall clock";
    obs.tokens_consumed = estimate_tokens(out) + estimate_tokens(err);
    obs.error = false;  // a failing script is still a successful observation
    return obs;
}

}  // namespace zpd
