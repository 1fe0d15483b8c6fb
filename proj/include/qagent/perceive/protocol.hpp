#pragma once

#include <array>
#include <cerrno>
#include <cstring>
#include <map>
#include <memory>
#include <string>
#include <utility>

#include <arpa/inet.h>
#include <fcntl.h>
#include <netdb.h>
#include <poll.h>
#include <signal.h>
#include <sys/socket.h>
#include <sys/wait.h>
#include <unistd.h>

#include <nlohmann/json.hpp>

#include "qagent/codec.hpp"
#include "qagent/error.hpp"
#include "qagent/perceive.hpp"

// Wire protocol for an out-of-process perceiver. The question sequence —
// one yes/no question per degradation type, plus the noise-intensity
// follow-up — is serialized as newline-delimited JSON so any learned model
// can be attached behind a stdio pipe or a local socket. When the endpoint
// misbehaves, perception falls back to the built-in detectors and says so.

namespace qagent {

// One JSON request line out, one JSON response line back.
class PerceiverTransport {
  public:
    virtual ~PerceiverTransport() = default;
    virtual std::string roundtrip(const std::string& request_line) = 0;
};

struct PerceiveFallbackNote {
    bool fell_back = false;
    std::string warning;
};

namespace protodetail {

inline constexpr const char* kIntensityQuestion =
    "What is the intensity of the noise present in this image: A. low B. medium C. high.";

// question order mirrors the generator kind order; the vector mapping is
// order-independent
inline constexpr std::array<std::pair<DegradationKind, const char*>, 8> kQuestionOrder = {{
    {DegradationKind::Noise, "noise"},
    {DegradationKind::MotionBlur, "motion blur"},
    {DegradationKind::DefocusBlur, "out-of-focus blur"},
    {DegradationKind::Jpeg, "JPEG compression artifact"},
    {DegradationKind::LowLight, "low light"},
    {DegradationKind::LowRes, "low resolution"},
    {DegradationKind::Haze, "haze"},
    {DegradationKind::Rain, "rain"},
}};

inline std::string question_for(const std::string& dis) {
    return "Is there " + dis + " in this image?";
}

inline nlohmann::json parse_response(const std::string& line, int expect_id) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception&) {
        throw MalformedAnswer("perceiver response is not valid JSON: " + line);
    }
    if (!j.is_object() || !j.contains("id") || !j["id"].is_number_integer() ||
        j["id"].get<int>() != expect_id)
        throw MalformedAnswer("perceiver response id does not echo the request");
    return j;
}

inline bool parse_yes_no(const nlohmann::json& j) {
    if (!j.contains("answer") || !j["answer"].is_string())
        throw MalformedAnswer("perceiver response lacks an \"answer\" string");
    const std::string a = j["answer"].get<std::string>();
    if (a == "Yes") return true;
    if (a == "No") return false;
    throw MalformedAnswer("perceiver answer must be \"Yes\" or \"No\", got: " + a);
}

inline Severity parse_choice(const nlohmann::json& j) {
    if (!j.contains("choice") || !j["choice"].is_string())
        throw MalformedAnswer("perceiver response lacks a \"choice\" string");
    const std::string c = j["choice"].get<std::string>();
    if (c == "A") return Severity::Low;
    if (c == "B") return Severity::Mid;
    if (c == "C") return Severity::High;
    throw MalformedAnswer("perceiver choice must be \"A\", \"B\" or \"C\", got: " + c);
}

inline std::string ask(PerceiverTransport& t, int id, const std::string& image,
                       const std::string& question, const std::string& dis) {
    const nlohmann::json req = {
        {"id", id}, {"image", image}, {"question", question}, {"dis", dis}};
    return t.roundtrip(req.dump());
}

inline int presence_bit(DegradationKind kind) {
    switch (kind) {
        case DegradationKind::MotionBlur: return kBitMb;
        case DegradationKind::DefocusBlur: return kBitDb;
        case DegradationKind::Jpeg: return kBitJp;
        case DegradationKind::LowLight: return kBitLl;
        case DegradationKind::LowRes: return kBitLr;
        case DegradationKind::Haze: return kBitHa;
        case DegradationKind::Rain: return kBitRa;
        case DegradationKind::Noise: break; // has no single presence bit
    }
    return -1;
}

} // namespace protodetail

// Ask the external perceiver the full question sequence about image_ref.
// TransportError / MalformedAnswer trigger a fallback to the internal
// detectors on the image itself, recorded through `note`.
inline PerceptionVector external_perceive(const std::string& image_ref,
                                          PerceiverTransport& transport,
                                          const DetectorThresholds& fallback_thresholds = {},
                                          PerceiveFallbackNote* note = nullptr) {
    if (note) *note = {};
    std::string failure;
    try {
        PerceptionVector v{};
        int id = 0;
        for (const auto& [kind, dis] : protodetail::kQuestionOrder) {
            ++id;
            const nlohmann::json resp = protodetail::parse_response(
                protodetail::ask(transport, id, image_ref, protodetail::question_for(dis), dis),
                id);
            if (!protodetail::parse_yes_no(resp)) continue;
            if (kind == DegradationKind::Noise) {
                ++id;
                const nlohmann::json follow = protodetail::parse_response(
                    protodetail::ask(transport, id, image_ref, protodetail::kIntensityQuestion,
                                     dis),
                    id);
                const Severity sev = protodetail::parse_choice(follow);
                v.bits[static_cast<size_t>(sev == Severity::High  ? kBitNiH
                                           : sev == Severity::Mid ? kBitNiM
                                                                  : kBitNiL)] = 1;
            } else {
                v.bits[static_cast<size_t>(protodetail::presence_bit(kind))] = 1;
            }
        }
        return v;
    } catch (const TransportError& e) {
        failure = std::string("transport failure: ") + e.what();
    } catch (const MalformedAnswer& e) {
        failure = std::string("malformed answer: ") + e.what();
    }
    if (note) {
        note->fell_back = true;
        note->warning = failure + "; fell back to internal detectors";
    }
    return perceive(load_image(image_ref), fallback_thresholds).first;
}

// ---- transports -------------------------------------------------------------

// In-process endpoint that answers from a fixed table. Exercises the full
// wire path (it parses the request line like a remote peer would).
class StubPerceiverTransport : public PerceiverTransport {
  public:
    std::map<std::string, bool> yes; // keyed by <dis>
    std::string choice = "B";

    std::string roundtrip(const std::string& request_line) override {
        const nlohmann::json req = nlohmann::json::parse(request_line);
        nlohmann::json resp;
        resp["id"] = req.at("id");
        if (req.at("question").get<std::string>() == protodetail::kIntensityQuestion) {
            resp["choice"] = choice;
        } else {
            const auto it = yes.find(req.at("dis").get<std::string>());
            resp["answer"] = (it != yes.end() && it->second) ? "Yes" : "No";
        }
        return resp.dump();
    }
};

namespace protodetail {

// read from fd until a full line is buffered; deadline in ms
inline std::string read_line(int fd, std::string& buf, int timeout_ms, const char* who) {
    for (;;) {
        const size_t nl = buf.find('\n');
        if (nl != std::string::npos) {
            std::string line = buf.substr(0, nl);
            buf.erase(0, nl + 1);
            if (!line.empty() && line.back() == '\r') line.pop_back();
            return line;
        }
        pollfd p{fd, POLLIN, 0};
        const int r = ::poll(&p, 1, timeout_ms);
        if (r == 0) throw TransportError(std::string(who) + ": timed out waiting for response");
        if (r < 0) {
            if (errno == EINTR) continue;
            throw TransportError(std::string(who) + ": poll failed: " + std::strerror(errno));
        }
        char chunk[4096];
        const ssize_t n = ::read(fd, chunk, sizeof chunk);
        if (n == 0) throw TransportError(std::string(who) + ": peer closed the stream");
        if (n < 0) {
            if (errno == EINTR) continue;
            throw TransportError(std::string(who) + ": read failed: " + std::strerror(errno));
        }
        buf.append(chunk, static_cast<size_t>(n));
    }
}

inline void write_all(int fd, const std::string& data, const char* who) {
    size_t off = 0;
    while (off < data.size()) {
        const ssize_t n = ::write(fd, data.data() + off, data.size() - off);
        if (n < 0) {
            if (errno == EINTR) continue;
            throw TransportError(std::string(who) + ": write failed: " + std::strerror(errno));
        }
        off += static_cast<size_t>(n);
    }
}

} // namespace protodetail

// Child process speaking the protocol on stdin/stdout. The command is run
// through /bin/sh.
class ProcessPerceiverTransport : public PerceiverTransport {
  public:
    explicit ProcessPerceiverTransport(std::string command, int timeout_ms = 10000)
        : command_(std::move(command)), timeout_ms_(timeout_ms) {}

    ProcessPerceiverTransport(const ProcessPerceiverTransport&) = delete;
    ProcessPerceiverTransport& operator=(const ProcessPerceiverTransport&) = delete;

    ~ProcessPerceiverTransport() override { shutdown(); }

    std::string roundtrip(const std::string& request_line) override {
        ensure_spawned();
        protodetail::write_all(in_fd_, request_line + "\n", "perceiver process");
        return protodetail::read_line(out_fd_, buf_, timeout_ms_, "perceiver process");
    }

  private:
    void ensure_spawned() {
        if (pid_ > 0) return;
        int to_child[2], from_child[2];
        if (::pipe(to_child) != 0 || ::pipe(from_child) != 0)
            throw TransportError("perceiver process: pipe failed");
        const pid_t pid = ::fork();
        if (pid < 0) throw TransportError("perceiver process: fork failed");
        if (pid == 0) {
            ::dup2(to_child[0], STDIN_FILENO);
            ::dup2(from_child[1], STDOUT_FILENO);
            ::close(to_child[0]);
            ::close(to_child[1]);
            ::close(from_child[0]);
            ::close(from_child[1]);
            ::execl("/bin/sh", "sh", "-c", command_.c_str(), static_cast<char*>(nullptr));
            _exit(127);
        }
        ::close(to_child[0]);
        ::close(from_child[1]);
        pid_ = pid;
        in_fd_ = to_child[1];
        out_fd_ = from_child[0];
        ::signal(SIGPIPE, SIG_IGN); // broken pipe surfaces as EPIPE instead
    }

    void shutdown() {
        if (in_fd_ >= 0) ::close(in_fd_);
        if (out_fd_ >= 0) ::close(out_fd_);
        in_fd_ = out_fd_ = -1;
        if (pid_ > 0) {
            ::kill(pid_, SIGKILL);
            int status = 0;
            ::waitpid(pid_, &status, 0);
            pid_ = -1;
        }
    }

    std::string command_;
    int timeout_ms_;
    pid_t pid_ = -1;
    int in_fd_ = -1;
    int out_fd_ = -1;
    std::string buf_;
};

// Peer on a local TCP socket, one connection reused for the whole session.
class TcpPerceiverTransport : public PerceiverTransport {
  public:
    TcpPerceiverTransport(std::string host, int port, int timeout_ms = 10000)
        : host_(std::move(host)), port_(port), timeout_ms_(timeout_ms) {}

    TcpPerceiverTransport(const TcpPerceiverTransport&) = delete;
    TcpPerceiverTransport& operator=(const TcpPerceiverTransport&) = delete;

    ~TcpPerceiverTransport() override {
        if (fd_ >= 0) ::close(fd_);
    }

    std::string roundtrip(const std::string& request_line) override {
        ensure_connected();
        protodetail::write_all(fd_, request_line + "\n", "perceiver socket");
        return protodetail::read_line(fd_, buf_, timeout_ms_, "perceiver socket");
    }

  private:
    void ensure_connected() {
        if (fd_ >= 0) return;
        addrinfo hints{};
        hints.ai_family = AF_UNSPEC;
        hints.ai_socktype = SOCK_STREAM;
        addrinfo* res = nullptr;
        const std::string port_str = std::to_string(port_);
        if (::getaddrinfo(host_.c_str(), port_str.c_str(), &hints, &res) != 0 || !res)
            throw TransportError("perceiver socket: cannot resolve " + host_);
        int fd = -1;
        for (addrinfo* a = res; a; a = a->ai_next) {
            fd = ::socket(a->ai_family, a->ai_socktype, a->ai_protocol);
            if (fd < 0) continue;
            if (::connect(fd, a->ai_addr, a->ai_addrlen) == 0) break;
            ::close(fd);
            fd = -1;
        }
        ::freeaddrinfo(res);
        if (fd < 0)
            throw TransportError("perceiver socket: cannot connect to " + host_ + ":" + port_str);
        ::signal(SIGPIPE, SIG_IGN);
        fd_ = fd;
    }

    std::string host_;
    int port_;
    int timeout_ms_;
    int fd_ = -1;
    std::string buf_;
};

// Endpoint syntax: "tcp://HOST:PORT" for a socket peer; "stub:dis1,dis2,
// choice=C" for the built-in answer table (handy in demos and dry runs);
// anything else is a shell command spawned as a child process.
inline std::unique_ptr<PerceiverTransport> make_transport(const std::string& endpoint,
                                                          int timeout_ms = 10000) {
    if (endpoint.rfind("tcp://", 0) == 0) {
        const std::string rest = endpoint.substr(6);
        const size_t colon = rest.rfind(':');
        if (colon == std::string::npos || colon == 0 || colon + 1 >= rest.size())
            throw ConfigError("perceiver endpoint must be tcp://HOST:PORT, got: " + endpoint);
        int port = 0;
        try {
            port = std::stoi(rest.substr(colon + 1));
        } catch (const std::exception&) {
            throw ConfigError("perceiver endpoint port is not a number: " + endpoint);
        }
        return std::make_unique<TcpPerceiverTransport>(rest.substr(0, colon), port, timeout_ms);
    }
    if (endpoint.rfind("stub:", 0) == 0) {
        auto stub = std::make_unique<StubPerceiverTransport>();
        std::string spec = endpoint.substr(5);
        size_t pos = 0;
        while (pos <= spec.size() && !spec.empty()) {
            size_t comma = spec.find(',', pos);
            if (comma == std::string::npos) comma = spec.size();
            const std::string tok = spec.substr(pos, comma - pos);
            if (tok.rfind("choice=", 0) == 0)
                stub->choice = tok.substr(7);
            else if (!tok.empty())
                stub->yes[tok] = true;
            if (comma >= spec.size()) break;
            pos = comma + 1;
        }
        return stub;
    }
    if (endpoint.empty()) throw ConfigError("perceiver endpoint is empty");
    return std::make_unique<ProcessPerceiverTransport>(endpoint, timeout_ms);
}

} // namespace qagent
