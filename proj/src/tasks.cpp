#include "spannorm/tasks.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <iterator>

#include "spannorm/errors.hpp"
#include "spannorm/rng.hpp"

namespace spannorm {

const char* to_string(TaskKind kind) {
  switch (kind) {
    case TaskKind::CopyTask: return "copy";
    case TaskKind::ModularAdd: return "modadd";
    case TaskKind::CharLM: return "charlm";
  }
  return "?";
}

TaskKind parse_task(const std::string& text) {
  if (text == "copy") return TaskKind::CopyTask;
  if (text == "modadd") return TaskKind::ModularAdd;
  if (text == "charlm") return TaskKind::CharLM;
  throw ConfigError("unknown task '" + text + "' (copy, modadd, charlm)");
}

TaskSource::TaskSource(const TaskSpec& spec, int vocab, int seq)
    : spec_(spec), vocab_(vocab), length_(0) {
  switch (spec.kind) {
    case TaskKind::CopyTask:
      if (seq < 3) throw ConfigError("copy task needs seq >= 3");
      if (vocab < 2) throw ConfigError("copy task needs vocab >= 2");
      length_ = 2 * ((seq - 1) / 2) + 1;
      break;
    case TaskKind::ModularAdd:
      if (spec.modulus < 2) throw ConfigError("modadd modulus must be at least 2");
      if (vocab < spec.modulus + 1) {
        throw ConfigError("modadd with p = " + std::to_string(spec.modulus) +
                          " needs vocab >= " + std::to_string(spec.modulus + 1));
      }
      if (seq < 4) throw ConfigError("modadd needs seq >= 4");
      length_ = 4;
      break;
    case TaskKind::CharLM: {
      std::ifstream in(spec.path, std::ios::binary);
      if (!in) throw IoError("cannot open corpus file '" + spec.path + "'");
      const std::string bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
      std::array<int, 256> id{};
      id.fill(-1);
      for (const char c : bytes) id[static_cast<unsigned char>(c)] = 0;
      int next = 0;
      for (int& v : id) {
        if (v == 0) v = next++;
      }
      if (next > vocab) {
        throw ConfigError("corpus has " + std::to_string(next) + " distinct bytes but vocab is " +
                          std::to_string(vocab));
      }
      if (static_cast<int>(bytes.size()) < seq + 1) {
        throw InputError("corpus '" + spec.path + "' is shorter than seq + 1 bytes");
      }
      text_.reserve(bytes.size());
      for (const char c : bytes) text_.push_back(id[static_cast<unsigned char>(c)]);
      length_ = seq;
      break;
    }
  }
}

Index TaskSource::batch_size(int batch_tokens) const {
  if (batch_tokens < 1) throw ConfigError("batch_tokens must be positive");
  return std::max<Index>(1, batch_tokens / length_);
}

Batch TaskSource::batch(std::uint64_t seed, std::uint64_t index, int batch_tokens) const {
  const Index rows = batch_size(batch_tokens);
  SeededRng rng(seed, 1000 + index);
  Batch out;
  out.tokens = TokenMatrix::Zero(rows, length_);
  out.targets = TokenMatrix::Constant(rows, length_, -1);
  for (Index r = 0; r < rows; ++r) {
    switch (spec_.kind) {
      case TaskKind::CopyTask: {
        const int k = (length_ - 1) / 2;
        for (int j = 0; j < k; ++j) {
          const int sym = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(vocab_ - 1)));
          out.tokens(r, j) = sym;
          out.tokens(r, k + 1 + j) = sym;
        }
        out.tokens(r, k) = 0;
        for (int j = 0; j < k; ++j) out.targets(r, k + j) = out.tokens(r, k + 1 + j);
        break;
      }
      case TaskKind::ModularAdd: {
        const auto p = static_cast<std::uint64_t>(spec_.modulus);
        const int a = static_cast<int>(rng.below(p));
        const int b = static_cast<int>(rng.below(p));
        out.tokens.row(r) << a, b, spec_.modulus, (a + b) % spec_.modulus;
        out.targets(r, 2) = out.tokens(r, 3);
        break;
      }
      case TaskKind::CharLM: {
        const auto span = static_cast<std::uint64_t>(text_.size() - length_);
        const auto start = static_cast<std::size_t>(rng.below(span));
        for (int j = 0; j < length_; ++j) {
          out.tokens(r, j) = text_[start + j];
          out.targets(r, j) = text_[start + j + 1];
        }
        break;
      }
    }
  }
  return out;
}

Batch make_task_batch(const TaskSpec& spec, std::uint64_t seed, int batch_tokens, int seq,
                      int vocab) {
  return TaskSource(spec, vocab, seq).batch(seed, 0, batch_tokens);
}

Batch modular_add_example(int a, int b, int modulus) {
  if (modulus < 2 || a < 0 || b < 0 || a >= modulus || b >= modulus) {
    throw InputError("modular_add_example: operands must lie in [0, p)");
  }
  Batch out;
  out.tokens = TokenMatrix(1, 4);
  out.tokens << a, b, modulus, (a + b) % modulus;
  out.targets = TokenMatrix::Constant(1, 4, -1);
  out.targets(0, 2) = out.tokens(0, 3);
  return out;
}

}  // namespace spannorm
