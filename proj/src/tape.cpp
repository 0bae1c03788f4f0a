#include "unite/tape.hpp"

#include <json.hpp>

#include <fstream>
#include <stdexcept>
#include <utility>

#include "unite/util.hpp"

namespace unite {

namespace {

nlohmann::json distribution_to_json(const StepDistribution& dist) {
  nlohmann::json topk = nlohmann::json::array();
  for (const auto& entry : dist.topk) {
    topk.push_back({entry.token.str(), entry.prob.value()});
  }
  nlohmann::json lookup = nlohmann::json::object();
  for (const auto& [token, prob] : dist.lookup) {
    lookup[token.str()] = prob.value();
  }
  return {{"model_id", dist.model_id}, {"topk", std::move(topk)},
          {"lookup", std::move(lookup)}};
}

StepDistribution distribution_from_json(const nlohmann::json& j,
                                        std::size_t line_no) {
  if (!j.is_object() || !j.contains("model_id") || !j["model_id"].is_string() ||
      !j.contains("topk") || !j["topk"].is_array() || !j.contains("lookup") ||
      !j["lookup"].is_object()) {
    throw ParseError(line_no, "malformed distribution record");
  }
  StepDistribution dist;
  dist.model_id = j["model_id"].get<std::string>();
  try {
    for (const auto& pair : j["topk"]) {
      if (!pair.is_array() || pair.size() != 2 || !pair[0].is_string() ||
          !pair[1].is_number()) {
        throw ParseError(line_no, "malformed topk entry");
      }
      dist.topk.push_back(TokenEntry{TokenText(pair[0].get<std::string>()),
                                     Probability(pair[1].get<double>())});
    }
    for (const auto& [token, prob] : j["lookup"].items()) {
      if (token.empty() || !prob.is_number()) {
        throw ParseError(line_no, "malformed lookup entry");
      }
      dist.lookup.emplace(TokenText(token), Probability(prob.get<double>()));
    }
  } catch (const std::invalid_argument& e) {
    throw ParseError(line_no, std::string("bad recorded value: ") + e.what());
  }
  return dist;
}

}  // namespace

RecordingBackend::RecordingBackend(std::shared_ptr<Backend> inner,
                                   const std::string& tape_path)
    : inner_(std::move(inner)), tape_(std::fopen(tape_path.c_str(), "wb")) {
  if (!inner_) {
    throw std::invalid_argument("RecordingBackend requires an inner backend");
  }
  if (!tape_) {
    throw ConfigError("tape", "cannot open tape file for writing: " + tape_path);
  }
}

RecordingBackend::~RecordingBackend() {
  if (tape_) {
    std::fclose(tape_);
  }
}

StepDistribution RecordingBackend::step(const GenerationContext& ctx, int k) {
  StepDistribution dist = inner_->step(ctx, k);
  nlohmann::json record = {{"ctx_sha256", sha256_hex(ctx.text())},
                           {"k", k},
                           {"distribution", distribution_to_json(dist)}};
  const std::string line = record.dump();
  {
    std::lock_guard<std::mutex> lock(mu_);
    std::fwrite(line.data(), 1, line.size(), tape_);
    std::fputc('\n', tape_);
    std::fflush(tape_);
  }
  return dist;
}

Probability RecordingBackend::prob_of(const GenerationContext& ctx,
                                      const TokenText& token,
                                      Probability floor) {
  return inner_->prob_of(ctx, token, floor);
}

const std::string& RecordingBackend::model_id() const {
  return inner_->model_id();
}

std::shared_ptr<const Vocab> RecordingBackend::vocab() const {
  return inner_->vocab();
}

bool RecordingBackend::supports_full_enumeration() const {
  return inner_->supports_full_enumeration();
}

FullDistribution RecordingBackend::full_distribution(
    const GenerationContext& ctx) {
  return inner_->full_distribution(ctx);
}

ReplayBackend::ReplayBackend(const std::string& tape_path,
                             std::shared_ptr<const Vocab> vocab)
    : vocab_(std::move(vocab)) {
  if (!vocab_) {
    throw std::invalid_argument("ReplayBackend requires a vocabulary");
  }
  std::ifstream in(tape_path, std::ios::binary);
  if (!in) {
    throw ConfigError("tape", "cannot open tape file: " + tape_path);
  }
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') {
      line.pop_back();
    }
    if (line.empty()) {
      continue;
    }
    nlohmann::json j = nlohmann::json::parse(line, nullptr,
                                             /*allow_exceptions=*/false);
    if (j.is_discarded() || !j.is_object() || !j.contains("ctx_sha256") ||
        !j["ctx_sha256"].is_string() || !j.contains("k") ||
        !j["k"].is_number_integer() || !j.contains("distribution")) {
      throw ParseError(line_no, "malformed tape record in " + tape_path);
    }
    Record rec;
    rec.ctx_sha256 = j["ctx_sha256"].get<std::string>();
    rec.k = j["k"].get<int>();
    rec.dist = distribution_from_json(j["distribution"], line_no);
    if (model_id_.empty()) {
      model_id_ = rec.dist.model_id;
    } else if (model_id_ != rec.dist.model_id) {
      throw ParseError(line_no, "tape mixes model ids (" + model_id_ + " vs " +
                                    rec.dist.model_id + ")");
    }
    lookup_by_ctx_[rec.ctx_sha256] = rec.dist.lookup;
    records_.push_back(std::move(rec));
  }
  if (model_id_.empty()) {
    model_id_ = "replay";
  }
}

StepDistribution ReplayBackend::step(const GenerationContext& ctx, int k) {
  std::lock_guard<std::mutex> lock(mu_);
  if (records_.empty()) {
    throw TapeMismatch("tape is empty");
  }
  if (cursor_ >= records_.size()) {
    throw ProtocolError("script exhausted");
  }
  const Record& rec = records_[cursor_];
  const std::string ctx_hash = sha256_hex(ctx.text());
  if (rec.ctx_sha256 != ctx_hash || rec.k != k) {
    throw TapeMismatch("request does not match tape record " +
                       std::to_string(cursor_ + 1) + " (context or k differ)");
  }
  ++cursor_;
  return rec.dist;
}

Probability ReplayBackend::prob_of(const GenerationContext& ctx,
                                   const TokenText& token, Probability floor) {
  if (!vocab_->contains(token)) {
    throw NotInVocabulary("token " + nlohmann::json(token.str()).dump() +
                          " is not in the vocabulary of " + model_id_);
  }
  const auto by_ctx = lookup_by_ctx_.find(sha256_hex(ctx.text()));
  if (by_ctx == lookup_by_ctx_.end()) {
    throw TapeMismatch("no recorded distribution for context");
  }
  const auto it = by_ctx->second.find(token);
  return it == by_ctx->second.end() ? floor : it->second;
}

const std::string& ReplayBackend::model_id() const { return model_id_; }

std::shared_ptr<const Vocab> ReplayBackend::vocab() const { return vocab_; }

void ReplayBackend::rewind() {
  std::lock_guard<std::mutex> lock(mu_);
  cursor_ = 0;
}

}  // namespace unite
