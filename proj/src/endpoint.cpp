#include "titok/endpoint.hpp"

#include <sys/wait.h>
#include <unistd.h>

#include <csignal>
#include <cstring>
#include <istream>
#include <ostream>

namespace titok {

Json encode_request(const GenRequest& r) {
  return Json{{"format_version", kFormatVersion},
              {"greedy", r.params.greedy},
              {"max_tokens", r.params.max_tokens},
              {"op", "generate"},
              {"prompt", r.prompt},
              {"request_index", r.request_index},
              {"role", r.role},
              {"seed", r.seed},
              {"stop_markers", r.stop_markers},
              {"system_text", r.system_text},
              {"temperature", r.params.temperature},
              {"top_p", r.params.top_p}};
}

GenRequest decode_gen_request(const Json& j) {
  GenRequest r;
  r.request_index = j.value("request_index", std::size_t{0});
  r.role = j.value("role", "query");
  r.system_text = j.value("system_text", "");
  r.prompt = j.at("prompt").get<std::string>();
  r.params.temperature = j.value("temperature", 1.0);
  r.params.top_p = j.value("top_p", 1.0);
  r.params.max_tokens = j.value("max_tokens", std::size_t{64});
  r.params.greedy = j.value("greedy", false);
  r.seed = j.at("seed").get<std::uint64_t>();
  r.stop_markers = j.value("stop_markers", std::vector<std::string>{});
  return r;
}

Json encode_response(const GenResponse& r) {
  return Json{{"finish_reason", r.finish_reason},
              {"format_version", kFormatVersion},
              {"seed", r.seed},
              {"text", r.text}};
}

GenResponse decode_gen_response(const Json& j) {
  GenResponse r;
  r.text = j.at("text").get<std::string>();
  r.finish_reason = j.value("finish_reason", "stop");
  r.seed = j.at("seed").get<std::uint64_t>();
  return r;
}

void serve_endpoint(std::istream& in, std::ostream& out, Generator* generator, Scorer* scorer) {
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    Json reply;
    try {
      Json request = Json::parse(line);
      const std::string op = request.at("op").get<std::string>();
      if (op == "generate") {
        if (!generator) throw Error("this endpoint does not serve generation");
        reply = encode_response(generator->generate(decode_gen_request(request)));
      } else if (op == "score") {
        if (!scorer) throw Error("this endpoint does not serve scoring");
        reply = Json(scorer->score(request.at("sample_id").get<std::string>(),
                                   request.at("query_text").get<std::string>(),
                                   request.at("response_text").get<std::string>()));
      } else {
        throw Error("unknown op: " + op);
      }
    } catch (const std::exception& e) {
      reply = Json{{"error", e.what()}};
    }
    out << reply.dump() << '\n';
    out.flush();
  }
}

SubprocessEndpoint::SubprocessEndpoint(const std::string& command) : command_(command) {
  std::signal(SIGPIPE, SIG_IGN);
  int down[2];
  int up[2];
  if (pipe(down) != 0) throw Error("pipe failed: " + std::string(std::strerror(errno)));
  if (pipe(up) != 0) {
    close(down[0]);
    close(down[1]);
    throw Error("pipe failed: " + std::string(std::strerror(errno)));
  }
  pid_ = fork();
  if (pid_ < 0) throw Error("fork failed: " + std::string(std::strerror(errno)));
  if (pid_ == 0) {
    dup2(down[0], STDIN_FILENO);
    dup2(up[1], STDOUT_FILENO);
    close(down[0]);
    close(down[1]);
    close(up[0]);
    close(up[1]);
    execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
    _exit(127);
  }
  close(down[0]);
  close(up[1]);
  to_child_ = down[1];
  from_child_ = fdopen(up[0], "r");
  if (!from_child_) throw Error("fdopen failed");
}

SubprocessEndpoint::~SubprocessEndpoint() {
  if (to_child_ >= 0) close(to_child_);
  if (from_child_) std::fclose(from_child_);
  if (pid_ > 0) {
    int status = 0;
    waitpid(pid_, &status, 0);
  }
}

Json SubprocessEndpoint::exchange(const Json& request) {
  std::string line = request.dump() + "\n";
  std::size_t sent = 0;
  while (sent < line.size()) {
    ssize_t n = write(to_child_, line.data() + sent, line.size() - sent);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw GeneratorFailure("endpoint '" + command_ + "' closed its input: " + std::strerror(errno));
    }
    sent += static_cast<std::size_t>(n);
  }
  std::string reply;
  char buf[4096];
  for (;;) {
    if (!std::fgets(buf, sizeof buf, from_child_)) {
      throw GeneratorFailure("endpoint '" + command_ + "' exited without replying");
    }
    reply += buf;
    if (!reply.empty() && reply.back() == '\n') break;
  }
  Json j;
  try {
    j = Json::parse(reply);
  } catch (const nlohmann::json::exception& e) {
    throw GeneratorFailure("endpoint sent malformed reply: " + std::string(e.what()));
  }
  return j;
}

GenResponse SubprocessEndpoint::generate(const GenRequest& request) {
  Json reply = exchange(encode_request(request));
  if (reply.contains("error")) throw GeneratorFailure(reply["error"].get<std::string>());
  return decode_gen_response(reply);
}

ScoredTrace SubprocessEndpoint::score(const std::string& sample_id, const std::string& query_text,
                                      const std::string& response_text) {
  Json request{{"format_version", kFormatVersion},
               {"op", "score"},
               {"query_text", query_text},
               {"response_text", response_text},
               {"sample_id", sample_id}};
  Json reply;
  try {
    reply = exchange(request);
  } catch (const GeneratorFailure& e) {
    throw ScorerFailure(e.what());
  }
  if (reply.contains("error")) throw ScorerFailure(reply["error"].get<std::string>());
  return reply.get<ScoredTrace>();
}

}  // namespace titok
