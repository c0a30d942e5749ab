#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "spannorm/model.hpp"

namespace spannorm {

enum class TaskKind { CopyTask, ModularAdd, CharLM };

struct TaskSpec {
  TaskKind kind = TaskKind::CopyTask;
  int modulus = 97;      // ModularAdd
  std::string path;      // CharLM source file
};

const char* to_string(TaskKind kind);
TaskKind parse_task(const std::string& text);

/// Token ids and next-token targets; a target of -1 is not scored.
struct Batch {
  TokenMatrix tokens;
  TokenMatrix targets;
};

/// Synthetic task data bound to a vocabulary and sequence length.
///
/// CopyTask: k = (seq - 1) / 2 random symbols from [1, vocab), separator 0,
/// then the same k symbols; only the repetition is scored.
/// ModularAdd: a, b, '=' (token p), (a + b) mod p; only the answer is scored.
/// CharLM: windows of a byte file mapped to a dense vocabulary of the bytes
/// that occur in it.
class TaskSource {
 public:
  TaskSource(const TaskSpec& spec, int vocab, int seq);

  /// Sequence length of one example.
  int length() const { return length_; }
  /// Examples per batch for a token budget (at least one).
  Index batch_size(int batch_tokens) const;
  /// Deterministic in (seed, index).
  Batch batch(std::uint64_t seed, std::uint64_t index, int batch_tokens) const;

 private:
  TaskSpec spec_;
  int vocab_;
  int length_;
  std::vector<int> text_;  // CharLM corpus as token ids
};

Batch make_task_batch(const TaskSpec& spec, std::uint64_t seed, int batch_tokens, int seq,
                      int vocab);

/// The single ModularAdd example a + b (mod p): tokens {a, b, p, c}.
Batch modular_add_example(int a, int b, int modulus);

}  // namespace spannorm
