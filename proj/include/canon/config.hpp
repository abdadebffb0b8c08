#pragma once

#include <json.hpp>

#include "canon/errors.hpp"

namespace canon {

// One config covers both the toy Backpack and the host Transformer so a
// single JSON document can describe a run.
struct ModelConfig {
    long vocab_size = 256;
    long sense_count = 4;  // k
    long model_dim = 32;   // d, sense vector width
    long ctx_layers = 2;
    long ctx_heads = 2;
    long ctx_mlp_dim = 128;
    long max_len = 64;
    long host_layers = 4;
    long host_heads = 4;
    long host_dim = 64;
    long host_mlp_dim = 256;

    void validate() const {
        if (vocab_size < 2) throw ConfigError("vocab_size must be >= 2");
        if (sense_count < 1) throw ConfigError("sense_count must be >= 1");
        if (model_dim < 2) throw ConfigError("model_dim must be >= 2");
        if (max_len < 1) throw ConfigError("max_len must be >= 1");
        if (ctx_layers < 1 || host_layers < 1) throw ConfigError("layer counts must be >= 1");
        if (model_dim % ctx_heads != 0) throw ConfigError("model_dim must divide by ctx_heads");
        if (host_dim % host_heads != 0) throw ConfigError("host_dim must divide by host_heads");
        if (model_dim % sense_count != 0)
            throw ConfigError("model_dim must divide by sense_count");
    }

    nlohmann::json to_json() const {
        return {{"vocab_size", vocab_size},   {"sense_count", sense_count},
                {"model_dim", model_dim},     {"ctx_layers", ctx_layers},
                {"ctx_heads", ctx_heads},     {"ctx_mlp_dim", ctx_mlp_dim},
                {"max_len", max_len},         {"host_layers", host_layers},
                {"host_heads", host_heads},   {"host_dim", host_dim},
                {"host_mlp_dim", host_mlp_dim}};
    }

    static ModelConfig from_json(const nlohmann::json& j) {
        ModelConfig c;
        auto get = [&](const char* key, long& field) {
            if (j.contains(key)) field = j.at(key).get<long>();
        };
        get("vocab_size", c.vocab_size);
        get("sense_count", c.sense_count);
        get("model_dim", c.model_dim);
        get("ctx_layers", c.ctx_layers);
        get("ctx_heads", c.ctx_heads);
        get("ctx_mlp_dim", c.ctx_mlp_dim);
        get("max_len", c.max_len);
        get("host_layers", c.host_layers);
        get("host_heads", c.host_heads);
        get("host_dim", c.host_dim);
        get("host_mlp_dim", c.host_mlp_dim);
        c.validate();
        return c;
    }
};

}  // namespace canon
