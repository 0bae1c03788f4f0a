#pragma once

#include <cstdio>
#include <memory>
#include <mutex>
#include <string>
#include <unordered_map>
#include <vector>

#include "unite/backend.hpp"

namespace unite {

// Wraps another backend and mirrors it transparently while appending every
// step() result to a tape file: newline-delimited JSON records of the form
//   {"ctx_sha256": <hex>, "k": <int>, "distribution": {...}}
// The tape can later drive a ReplayBackend for bit-deterministic reruns
// without the original backend (e.g. without network access).
class RecordingBackend : public Backend {
 public:
  // Truncates/creates `tape_path` and begins recording.
  RecordingBackend(std::shared_ptr<Backend> inner, const std::string& tape_path);
  ~RecordingBackend() override;

  RecordingBackend(const RecordingBackend&) = delete;
  RecordingBackend& operator=(const RecordingBackend&) = delete;

  StepDistribution step(const GenerationContext& ctx, int k) override;
  Probability prob_of(const GenerationContext& ctx, const TokenText& token,
                      Probability floor) override;
  const std::string& model_id() const override;
  std::shared_ptr<const Vocab> vocab() const override;
  bool supports_full_enumeration() const override;
  FullDistribution full_distribution(const GenerationContext& ctx) override;

 private:
  std::shared_ptr<Backend> inner_;
  std::FILE* tape_;
  std::mutex mu_;
};

// Answers step() calls solely from a previously recorded tape, consuming
// records in order. The request must match the next record's context hash
// and k exactly (TapeMismatch otherwise); stepping past the end of a
// non-empty tape raises ProtocolError("script exhausted"), while any step
// against an empty tape is a TapeMismatch.
//
// Point lookups are served from the recorded step tables for the same
// context; tokens absent from the recorded table degrade to the caller's
// floor, mirroring remote-backend semantics.
class ReplayBackend : public Backend {
 public:
  ReplayBackend(const std::string& tape_path,
                std::shared_ptr<const Vocab> vocab);

  StepDistribution step(const GenerationContext& ctx, int k) override;
  Probability prob_of(const GenerationContext& ctx, const TokenText& token,
                      Probability floor) override;
  const std::string& model_id() const override;
  std::shared_ptr<const Vocab> vocab() const override;

  // Rewinds the cursor so the tape can be replayed from the beginning.
  void rewind();

  std::size_t record_count() const { return records_.size(); }

 private:
  struct Record {
    std::string ctx_sha256;
    int k = 0;
    StepDistribution dist;
  };

  std::string model_id_;
  std::shared_ptr<const Vocab> vocab_;
  std::vector<Record> records_;
  std::unordered_map<std::string, std::unordered_map<TokenText, Probability>>
      lookup_by_ctx_;
  std::size_t cursor_ = 0;
  std::mutex mu_;
};

}  // namespace unite
