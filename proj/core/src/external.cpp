#include "fe/external.hpp"

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cctype>
#include <cerrno>
#include <charconv>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <httplib.h>
#include <iterator>
#include <sstream>

#include "fe/errors.hpp"
#include "fe/png_io.hpp"

namespace fe {

using nlohmann::json;

AdapterConfig AdapterConfig::from_json(const json& j) {
  if (!j.is_object()) throw ValidationError("adapter config must be an object");
  AdapterConfig a;
  const std::string kind = j.value("kind", std::string());
  if (kind == "command") {
    a.kind = Kind::command;
    if (!j.contains("command") || !j["command"].is_array() || j["command"].empty())
      throw ValidationError("command adapter needs a non-empty \"command\" array");
    for (const auto& part : j["command"]) {
      if (!part.is_string()) throw ValidationError("command adapter: arguments must be strings");
      a.command.push_back(part.get<std::string>());
    }
  } else if (kind == "http") {
    a.kind = Kind::http;
    a.url = j.value("url", std::string());
    if (a.url.rfind("http://", 0) != 0)
      throw ValidationError("http adapter needs an http:// \"url\"");
  } else {
    throw ValidationError("adapter kind must be \"command\" or \"http\", got \"" + kind + "\"");
  }
  a.timeout_s = j.value("timeout_s", 120.0);
  if (!(a.timeout_s > 0.0)) throw ValidationError("adapter timeout_s must be positive");
  return a;
}

json AdapterConfig::to_json() const {
  json j;
  j["kind"] = kind == Kind::command ? "command" : "http";
  if (kind == Kind::command) j["command"] = command;
  if (kind == Kind::http) j["url"] = url;
  j["timeout_s"] = timeout_s;
  return j;
}

std::string AdapterConfig::describe() const {
  if (kind == Kind::http) return url;
  return command.empty() ? std::string("command") : command.front();
}

namespace {

void set_nonblocking(int fd) { ::fcntl(fd, F_SETFL, ::fcntl(fd, F_GETFL) | O_NONBLOCK); }

}  // namespace

ProcessResult run_process(const std::vector<std::string>& argv, std::chrono::milliseconds timeout) {
  if (argv.empty()) throw Error("run_process: empty command");
  int out_pipe[2];
  int err_pipe[2];
  if (::pipe(out_pipe) != 0) throw Error(std::string("pipe: ") + std::strerror(errno));
  if (::pipe(err_pipe) != 0) {
    ::close(out_pipe[0]);
    ::close(out_pipe[1]);
    throw Error(std::string("pipe: ") + std::strerror(errno));
  }

  std::vector<char*> args;
  args.reserve(argv.size() + 1);
  for (const auto& a : argv) args.push_back(const_cast<char*>(a.c_str()));
  args.push_back(nullptr);

  const pid_t pid = ::fork();
  if (pid < 0) throw Error(std::string("fork: ") + std::strerror(errno));
  if (pid == 0) {
    ::dup2(out_pipe[1], STDOUT_FILENO);
    ::dup2(err_pipe[1], STDERR_FILENO);
    ::close(out_pipe[0]);
    ::close(out_pipe[1]);
    ::close(err_pipe[0]);
    ::close(err_pipe[1]);
    ::execvp(args[0], args.data());
    const std::string msg = std::string("exec ") + args[0] + ": " + std::strerror(errno) + "\n";
    [[maybe_unused]] auto n = ::write(STDERR_FILENO, msg.data(), msg.size());
    ::_exit(127);
  }
  ::close(out_pipe[1]);
  ::close(err_pipe[1]);
  set_nonblocking(out_pipe[0]);
  set_nonblocking(err_pipe[0]);

  ProcessResult result;
  const auto deadline = std::chrono::steady_clock::now() + timeout;
  pollfd fds[2] = {{out_pipe[0], POLLIN, 0}, {err_pipe[0], POLLIN, 0}};
  int open_fds = 2;
  char buf[4096];
  while (open_fds > 0) {
    const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
    if (left.count() <= 0) {
      result.timed_out = true;
      break;
    }
    const int ready = ::poll(fds, 2, static_cast<int>(std::min<long long>(left.count(), 1000)));
    if (ready < 0 && errno != EINTR) break;
    for (int i = 0; i < 2; ++i) {
      if (fds[i].fd < 0 || !(fds[i].revents & (POLLIN | POLLHUP | POLLERR))) continue;
      const ssize_t n = ::read(fds[i].fd, buf, sizeof(buf));
      if (n > 0) {
        (i == 0 ? result.out : result.err).append(buf, static_cast<std::size_t>(n));
      } else if (n == 0 || (errno != EAGAIN && errno != EINTR)) {
        ::close(fds[i].fd);
        fds[i].fd = -1;
        --open_fds;
      }
    }
  }
  for (auto& f : fds)
    if (f.fd >= 0) ::close(f.fd);

  int status = 0;
  if (result.timed_out) {
    ::kill(pid, SIGKILL);
    ::waitpid(pid, &status, 0);
    return result;
  }
  // Output is closed; the child may still be exiting.
  for (;;) {
    const pid_t r = ::waitpid(pid, &status, WNOHANG);
    if (r == pid) break;
    if (r < 0 && errno != EINTR) break;
    if (std::chrono::steady_clock::now() >= deadline) {
      ::kill(pid, SIGKILL);
      ::waitpid(pid, &status, 0);
      result.timed_out = true;
      return result;
    }
    ::usleep(1000);
  }
  if (WIFEXITED(status)) {
    result.exit_code = WEXITSTATUS(status);
  } else if (WIFSIGNALED(status)) {
    result.exit_code = 128 + WTERMSIG(status);
  }
  return result;
}

ScratchDir::ScratchDir() {
  std::string templ = (std::filesystem::temp_directory_path() / "fe-adapter-XXXXXX").string();
  if (::mkdtemp(templ.data()) == nullptr) throw Error(std::string("mkdtemp: ") + std::strerror(errno));
  path_ = templ;
}

ScratchDir::~ScratchDir() {
  std::error_code ec;
  std::filesystem::remove_all(path_, ec);
}

namespace {

std::string substitute(std::string arg, const std::vector<std::pair<std::string, std::string>>& vars) {
  for (const auto& [key, value] : vars) {
    const std::string token = "{" + key + "}";
    for (std::size_t pos = arg.find(token); pos != std::string::npos; pos = arg.find(token, pos + value.size()))
      arg.replace(pos, token.size(), value);
  }
  return arg;
}

struct ParsedUrl {
  std::string origin;
  std::string path;
};

ParsedUrl split_url(const std::string& url) {
  const std::size_t scheme = url.find("://");
  const std::size_t slash = url.find('/', scheme == std::string::npos ? 0 : scheme + 3);
  if (slash == std::string::npos) return {url, "/"};
  return {url.substr(0, slash), url.substr(slash)};
}

// Runs the command form of an adapter; throws BackendError on failure.
void run_command_adapter(const AdapterConfig& adapter, const std::vector<std::pair<std::string, std::string>>& vars,
                         const std::string& who, std::string* stdout_text) {
  std::vector<std::string> argv;
  argv.reserve(adapter.command.size());
  for (const auto& part : adapter.command) argv.push_back(substitute(part, vars));
  const auto timeout = std::chrono::milliseconds(static_cast<long long>(adapter.timeout_s * 1000.0));
  const ProcessResult r = run_process(argv, timeout);
  if (r.timed_out) {
    std::ostringstream msg;
    msg << "timed out after " << adapter.timeout_s << " s";
    throw BackendError(who, msg.str());
  }
  if (r.exit_code != 0)
    throw BackendError(who, "exited with status " + std::to_string(r.exit_code) +
                                (r.err.empty() ? std::string() : ": " + r.err));
  if (stdout_text) *stdout_text = r.out;
}

std::string post_http(const AdapterConfig& adapter, httplib::MultipartFormDataItems items, const std::string& who) {
  const ParsedUrl u = split_url(adapter.url);
  httplib::Client client(u.origin);
  const auto secs = static_cast<time_t>(adapter.timeout_s);
  const auto usecs = static_cast<time_t>((adapter.timeout_s - static_cast<double>(secs)) * 1e6);
  client.set_connection_timeout(secs, usecs);
  client.set_read_timeout(secs, usecs);
  client.set_write_timeout(secs, usecs);
  auto res = client.Post(u.path, items);
  if (!res) throw BackendError(who, "request failed: " + httplib::to_string(res.error()));
  if (res->status < 200 || res->status >= 300)
    throw BackendError(who, "HTTP status " + std::to_string(res->status) + ": " + res->body);
  return res->body;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

RgbImage external_inpaint(const InpaintRequest& request, const AdapterConfig& adapter) {
  validate_request(request);
  const std::string who = "external(" + adapter.describe() + ")";
  RgbImage result;
  if (adapter.kind == AdapterConfig::Kind::command) {
    ScratchDir dir;
    const auto input = dir.path() / "input.png";
    const auto mask = dir.path() / "mask.png";
    const auto output = dir.path() / "output.png";
    write_png(input, request.image);
    write_png(mask, request.mask);
    run_command_adapter(adapter, {{"input", input.string()}, {"mask", mask.string()}, {"output", output.string()}},
                        who, nullptr);
    if (!std::filesystem::exists(output)) throw BackendError(who, "adapter produced no output.png");
    try {
      result = decode_rgb_png(read_file(output));
    } catch (const Error& e) {
      throw BackendError(who, e.what());
    }
  } else {
    httplib::MultipartFormDataItems items = {
        {"input", encode_png(request.image), "input.png", "image/png"},
        {"mask", encode_png(request.mask), "mask.png", "image/png"},
    };
    const std::string body = post_http(adapter, std::move(items), who);
    try {
      result = decode_rgb_png(body);
    } catch (const Error& e) {
      throw BackendError(who, e.what());
    }
  }
  if (result.size() != request.image.size()) {
    throw BackendError(who, "output dimension mismatch: expected " + std::to_string(request.image.width()) + "x" +
                                std::to_string(request.image.height()) + ", got " + std::to_string(result.width()) +
                                "x" + std::to_string(result.height()));
  }
  copy_masked(request.image, mask_complement(request.mask), result);
  return result;
}

double parse_metric_value(std::string_view payload) {
  std::size_t b = 0;
  std::size_t e = payload.size();
  while (b < e && std::isspace(static_cast<unsigned char>(payload[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(payload[e - 1]))) --e;
  const std::string_view core = payload.substr(b, e - b);
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(core.data(), core.data() + core.size(), value);
  if (core.empty() || ec != std::errc() || ptr != core.data() + core.size()) {
    throw Error("unparseable metric value: \"" + std::string(payload) + "\"");
  }
  return value;
}

double lpips_external(const RgbImage& gt, const RgbImage& pred, const AdapterConfig& adapter) {
  require_same_size(gt.size(), pred.size(), "lpips_external");
  const std::string who = "lpips(" + adapter.describe() + ")";
  std::string payload;
  if (adapter.kind == AdapterConfig::Kind::command) {
    ScratchDir dir;
    const auto gt_path = dir.path() / "gt.png";
    const auto pred_path = dir.path() / "pred.png";
    write_png(gt_path, gt);
    write_png(pred_path, pred);
    run_command_adapter(adapter, {{"gt", gt_path.string()}, {"pred", pred_path.string()}}, who, &payload);
  } else {
    httplib::MultipartFormDataItems items = {
        {"gt", encode_png(gt), "gt.png", "image/png"},
        {"pred", encode_png(pred), "pred.png", "image/png"},
    };
    payload = post_http(adapter, std::move(items), who);
  }
  try {
    return parse_metric_value(payload);
  } catch (const Error& e) {
    throw BackendError(who, e.what());
  }
}

}  // namespace fe
