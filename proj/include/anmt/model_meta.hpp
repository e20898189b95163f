#pragma once

#include <string>

#include <json.hpp>

#include "anmt/alignment_model.hpp"
#include "anmt/lexical_model.hpp"

// Checkpoint metadata: the model config travels in the container header so a
// checkpoint is self-describing.

namespace anmt {

inline nlohmann::json lexical_config_json(const LexicalConfig& c) {
  return nlohmann::json{{"enc_layers", c.enc_layers}, {"dec_layers", c.dec_layers},
                        {"heads", c.heads},           {"d_model", c.d_model},
                        {"d_ff", c.d_ff},             {"src_vocab", c.src_vocab},
                        {"trg_vocab", c.trg_vocab},   {"max_len", c.max_len},
                        {"align_head", c.align_head}, {"dropout", c.dropout}};
}

inline LexicalConfig lexical_config_from_json(const nlohmann::json& j) {
  LexicalConfig c;
  c.enc_layers = j.at("enc_layers").get<int>();
  c.dec_layers = j.at("dec_layers").get<int>();
  c.heads = j.at("heads").get<int>();
  c.d_model = j.at("d_model").get<int>();
  c.d_ff = j.at("d_ff").get<int>();
  c.src_vocab = j.at("src_vocab").get<int>();
  c.trg_vocab = j.at("trg_vocab").get<int>();
  c.max_len = j.at("max_len").get<int>();
  c.align_head = j.at("align_head").get<bool>();
  c.dropout = j.value("dropout", 0.0);
  return c;
}

inline nlohmann::json alignment_config_json(const AlignmentConfig& c) {
  return nlohmann::json{{"window", c.window},         {"enc_layers", c.enc_layers},
                        {"dec_layers", c.dec_layers}, {"heads", c.heads},
                        {"d_model", c.d_model},       {"d_ff", c.d_ff},
                        {"src_vocab", c.src_vocab},   {"trg_vocab", c.trg_vocab},
                        {"max_len", c.max_len},       {"dropout", c.dropout}};
}

inline AlignmentConfig alignment_config_from_json(const nlohmann::json& j) {
  AlignmentConfig c;
  c.window = j.at("window").get<int>();
  c.enc_layers = j.at("enc_layers").get<int>();
  c.dec_layers = j.at("dec_layers").get<int>();
  c.heads = j.at("heads").get<int>();
  c.d_model = j.at("d_model").get<int>();
  c.d_ff = j.at("d_ff").get<int>();
  c.src_vocab = j.at("src_vocab").get<int>();
  c.trg_vocab = j.at("trg_vocab").get<int>();
  c.max_len = j.at("max_len").get<int>();
  c.dropout = j.value("dropout", 0.0);
  return c;
}

inline std::string lexical_meta(const LexicalConfig& c, std::uint64_t seed) {
  nlohmann::json j{{"component", "lexical"}, {"config", lexical_config_json(c)}, {"seed", seed}};
  return j.dump();
}

// The jump-class mapping (class index = delta + window) is recorded so the
// checkpoint fully describes its output layer.
inline std::string alignment_meta(const AlignmentConfig& c, std::uint64_t seed) {
  nlohmann::json j{{"component", "alignment"},
                   {"config", alignment_config_json(c)},
                   {"seed", seed},
                   {"jump_classes",
                    {{"count", c.num_classes()}, {"delta_of_class", "class_index - window"}}}};
  return j.dump();
}

}  // namespace anmt
