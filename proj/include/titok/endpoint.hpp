#pragma once

// Line-delimited request/response protocol shared by every generator and
// scorer runtime. One JSON object per line in each direction:
//
//   {"op":"generate", "request_index", "role", "system_text", "prompt",
//    "temperature", "top_p", "max_tokens", "greedy", "seed", "stop_markers"}
//     -> {"text", "finish_reason", "seed"}
//   {"op":"score", "sample_id", "query_text", "response_text"}
//     -> a trace record (see docs/formats.md)
//
// Any failure is answered with {"error": "<message>"} and the server keeps
// reading.

#include <cstdio>
#include <iosfwd>
#include <memory>
#include <string>

#include "titok/datamodel.hpp"
#include "titok/jsonl.hpp"
#include "titok/synthgen.hpp"

namespace titok {

class Scorer {
 public:
  virtual ~Scorer() = default;
  virtual ScoredTrace score(const std::string& sample_id, const std::string& query_text,
                            const std::string& response_text) = 0;
};

class ScorerFailure : public Error {
 public:
  using Error::Error;
};

Json encode_request(const GenRequest& request);
GenRequest decode_gen_request(const Json& j);
Json encode_response(const GenResponse& response);
GenResponse decode_gen_response(const Json& j);

/// Answers requests from `in` until EOF. Either role may be null; requests
/// for a missing role get an error record.
void serve_endpoint(std::istream& in, std::ostream& out, Generator* generator, Scorer* scorer);

/// Runs `command` under /bin/sh and talks the protocol over its stdio.
class SubprocessEndpoint final : public Generator, public Scorer {
 public:
  explicit SubprocessEndpoint(const std::string& command);
  ~SubprocessEndpoint() override;

  SubprocessEndpoint(const SubprocessEndpoint&) = delete;
  SubprocessEndpoint& operator=(const SubprocessEndpoint&) = delete;

  GenResponse generate(const GenRequest& request) override;
  ScoredTrace score(const std::string& sample_id, const std::string& query_text,
                    const std::string& response_text) override;

 private:
  Json exchange(const Json& request);

  std::string command_;
  int pid_ = -1;
  int to_child_ = -1;
  std::FILE* from_child_ = nullptr;
};

}  // namespace titok
