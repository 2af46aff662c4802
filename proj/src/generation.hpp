#pragma once

#include <string>
#include <vector>

namespace exaranker {

/// Decoding settings for explanation generation. Defaults are greedy decoding
/// capped at 256 output tokens.
struct GenerationConfig {
    std::string model_id;
    double temperature = 0.0;
    int max_output_tokens = 256;
    std::vector<std::string> stop_sequences;

    /// Throws ConfigError on an invalid field.
    void validate() const;
    /// Compact JSON with sorted keys; part of every cache key.
    std::string canonical_json() const;
};

}  // namespace exaranker
