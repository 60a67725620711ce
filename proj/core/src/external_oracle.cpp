#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

#include <json.hpp>

#include "mapattack/errors.hpp"
#include "mapattack/oracle.hpp"
#include "mapattack/version.hpp"

namespace mapattack::oracle {

std::vector<std::uint8_t> encode_wire_message(const std::string& json_payload) {
  std::vector<std::uint8_t> out;
  const std::uint32_t len = static_cast<std::uint32_t>(json_payload.size());
  out.push_back(static_cast<std::uint8_t>(len >> 24));
  out.push_back(static_cast<std::uint8_t>(len >> 16));
  out.push_back(static_cast<std::uint8_t>(len >> 8));
  out.push_back(static_cast<std::uint8_t>(len));
  out.insert(out.end(), json_payload.begin(), json_payload.end());
  return out;
}

std::string decode_wire_message(const std::vector<std::uint8_t>& bytes, std::size_t& offset) {
  if (offset + 4 > bytes.size())
    throw DecodeError("wire message truncated before length prefix", offset);
  const std::uint32_t len = (static_cast<std::uint32_t>(bytes[offset]) << 24) |
                            (static_cast<std::uint32_t>(bytes[offset + 1]) << 16) |
                            (static_cast<std::uint32_t>(bytes[offset + 2]) << 8) |
                            static_cast<std::uint32_t>(bytes[offset + 3]);
  if (offset + 4 + len > bytes.size())
    throw DecodeError("wire message truncated at payload", offset + 4);
  const std::string payload(bytes.begin() + offset + 4, bytes.begin() + offset + 4 + len);
  offset += 4 + len;
  return payload;
}

std::string make_handshake_json() {
  return nlohmann::ordered_json{{"type", "hello"}, {"version", kWireVersion}}.dump();
}

std::string make_predict_request_json(const std::string& frame_ref, const ImageSet& images) {
  nlohmann::ordered_json req;
  req["type"] = "predict";
  req["frame_ref"] = frame_ref;
  nlohmann::ordered_json imgs = nlohmann::ordered_json::object();
  for (const auto& [cam_id, image] : images)
    imgs[cam_id] = img::base64_encode(img::encode_png(image));
  req["images_b64"] = std::move(imgs);
  return req.dump();
}

PredictedMap parse_predict_reply_json(const std::string& payload) {
  return predicted_map_from_json(payload);
}

struct ExternalOracle::Process {
  pid_t pid = -1;
  int to_child = -1;
  int from_child = -1;
  int timeout_ms = 30000;

  ~Process() { shutdown(); }

  void shutdown() {
    if (to_child >= 0) close(to_child);
    if (from_child >= 0) close(from_child);
    to_child = from_child = -1;
    if (pid > 0) {
      kill(pid, SIGTERM);
      int status = 0;
      waitpid(pid, &status, 0);
      pid = -1;
    }
  }

  void write_all(const std::vector<std::uint8_t>& bytes) {
    std::size_t done = 0;
    while (done < bytes.size()) {
      const ssize_t n = ::write(to_child, bytes.data() + done, bytes.size() - done);
      if (n < 0) {
        if (errno == EINTR) continue;
        throw ServiceError("oracle adapter write failed: " + std::string(std::strerror(errno)));
      }
      done += static_cast<std::size_t>(n);
    }
  }

  void read_exact(std::uint8_t* buf, std::size_t len) {
    std::size_t done = 0;
    while (done < len) {
      struct pollfd pfd {
        from_child, POLLIN, 0
      };
      const int rc = poll(&pfd, 1, timeout_ms);
      if (rc == 0) throw ServiceError("oracle adapter timed out");
      if (rc < 0) {
        if (errno == EINTR) continue;
        throw ServiceError("oracle adapter poll failed");
      }
      const ssize_t n = ::read(from_child, buf + done, len - done);
      if (n == 0) throw ServiceError("oracle adapter closed its pipe");
      if (n < 0) {
        if (errno == EINTR) continue;
        throw ServiceError("oracle adapter read failed: " + std::string(std::strerror(errno)));
      }
      done += static_cast<std::size_t>(n);
    }
  }

  std::string read_message() {
    std::uint8_t header[4];
    read_exact(header, 4);
    const std::uint32_t len = (static_cast<std::uint32_t>(header[0]) << 24) |
                              (static_cast<std::uint32_t>(header[1]) << 16) |
                              (static_cast<std::uint32_t>(header[2]) << 8) |
                              static_cast<std::uint32_t>(header[3]);
    if (len > (64u << 20)) throw DecodeError("oracle reply length implausible", 0);
    std::string payload(len, '\0');
    if (len > 0) read_exact(reinterpret_cast<std::uint8_t*>(payload.data()), len);
    return payload;
  }
};

ExternalOracle::ExternalOracle(std::vector<std::string> command, int timeout_ms)
    : proc_(std::make_unique<Process>()) {
  if (command.empty()) throw ConfigError("external oracle needs a command");
  proc_->timeout_ms = timeout_ms;

  int in_pipe[2];   // parent -> child
  int out_pipe[2];  // child -> parent
  if (pipe(in_pipe) != 0 || pipe(out_pipe) != 0)
    throw OracleUnavailableError("cannot create oracle pipes");

  const pid_t pid = fork();
  if (pid < 0) throw OracleUnavailableError("cannot fork oracle adapter");
  if (pid == 0) {
    dup2(in_pipe[0], STDIN_FILENO);
    dup2(out_pipe[1], STDOUT_FILENO);
    close(in_pipe[0]);
    close(in_pipe[1]);
    close(out_pipe[0]);
    close(out_pipe[1]);
    std::vector<char*> argv;
    argv.reserve(command.size() + 1);
    for (std::string& arg : command) argv.push_back(arg.data());
    argv.push_back(nullptr);
    execvp(argv[0], argv.data());
    _exit(127);
  }
  proc_->pid = pid;
  proc_->to_child = in_pipe[1];
  proc_->from_child = out_pipe[0];
  close(in_pipe[0]);
  close(out_pipe[1]);

  // Versioned handshake before any prediction traffic.
  try {
    proc_->write_all(encode_wire_message(make_handshake_json()));
    const std::string reply = proc_->read_message();
    nlohmann::json j = nlohmann::json::parse(reply);
    if (j.value("type", "") != "hello" || j.value("version", -1) != kWireVersion)
      throw OracleUnavailableError("oracle adapter handshake rejected: " + reply);
  } catch (const OracleUnavailableError&) {
    throw;
  } catch (const std::exception& e) {
    throw OracleUnavailableError(std::string("oracle adapter handshake failed: ") + e.what());
  }
}

ExternalOracle::~ExternalOracle() = default;

PredictedMap ExternalOracle::do_predict(const ImageSet& images, const SceneFrame& frame) {
  proc_->write_all(encode_wire_message(make_predict_request_json(frame.scene_id, images)));
  const std::string reply = proc_->read_message();
  return parse_predict_reply_json(reply);
}

}  // namespace mapattack::oracle
