#include "amsps/model.hpp"

namespace amsps {

ModelParams init_model(const ModelDims& dims, std::mt19937_64& rng) {
  if (dims.vocab_size < 1 || dims.feature_dim < 1 || dims.embed_dim < 1 || dims.word_dim < 1) {
    throw Error(ErrorCategory::Data, "init_model: all dimensions must be positive");
  }
  ModelParams p;
  p.image = init_image_encoder(dims.feature_dim, dims.embed_dim, rng);
  p.text = init_text_encoder(dims.vocab_size, dims.word_dim, dims.embed_dim, rng);
  p.consensus.visual = init_consensus_head(dims.embed_dim, rng);
  p.consensus.textual = init_consensus_head(dims.embed_dim, rng);
  return p;
}

ModelParams zeros_like(const ModelParams& p) {
  return {zeros_like(p.image), zeros_like(p.text), {zeros_like(p.consensus.visual), zeros_like(p.consensus.textual)}};
}

void validate(const ModelParams& p) {
  validate(p.image);
  validate(p.text);
  validate(p.consensus.visual);
  validate(p.consensus.textual);
  const auto d = p.image.output_dim();
  if (p.text.hidden_dim() != d || p.consensus.visual.dim() != d || p.consensus.textual.dim() != d) {
    throw Error(ErrorCategory::Shape, "model: image, text and consensus widths disagree");
  }
}

namespace {

template <typename T>
void push(std::vector<TensorRef>& out, const std::string& name, T& t) {
  out.push_back({name, t.data(), t.rows(), t.cols()});
}

void push_gru(std::vector<TensorRef>& out, const std::string& prefix, GruParams& g) {
  for (auto [name, gate] : {std::pair<const char*, GruGate*>{"update", &g.update}, {"reset", &g.reset},
                            {"candidate", &g.candidate}}) {
    push(out, prefix + "." + name + ".input", gate->input);
    push(out, prefix + "." + name + ".recurrent", gate->recurrent);
    push(out, prefix + "." + name + ".bias", gate->bias);
  }
}

void push_head(std::vector<TensorRef>& out, const std::string& prefix, ConsensusHeadParams& h) {
  push(out, prefix + ".query_proj", h.query_proj);
  push(out, prefix + ".key_proj", h.key_proj);
  push(out, prefix + ".gate_weight", h.gate_weight);
  push(out, prefix + ".gate_bias", h.gate_bias);
  push(out, prefix + ".stack_logits", h.stack_logits);
}

}  // namespace

std::vector<TensorRef> tensors(ModelParams& p) {
  std::vector<TensorRef> out;
  push(out, "image.weight", p.image.weight);
  push(out, "image.bias", p.image.bias);
  push(out, "text.embedding", p.text.embedding);
  push_gru(out, "text.forward", p.text.forward);
  push_gru(out, "text.backward", p.text.backward);
  push_head(out, "consensus.visual", p.consensus.visual);
  push_head(out, "consensus.textual", p.consensus.textual);
  return out;
}

std::size_t parameter_count(const ModelParams& p) {
  std::size_t n = 0;
  for (const auto& t : tensors(const_cast<ModelParams&>(p))) n += static_cast<std::size_t>(t.size());
  return n;
}

bool all_finite(const ModelParams& p) {
  for (const auto& t : tensors(const_cast<ModelParams&>(p))) {
    for (Eigen::Index i = 0; i < t.size(); ++i) {
      if (!std::isfinite(t.data[i])) return false;
    }
  }
  return true;
}

ImageForward embed_image_cached(const Matrix& regions, const ModelParams& p, const CorpusEmbedding& corpus,
                                const ConsensusOptions& opts) {
  ImageForward f;
  f.encoding = encode_image_cached(regions, p.image);
  f.head = consensus_forward(f.encoding.output, corpus, p.consensus.visual, opts, nullptr);
  return f;
}

void embed_image_backward(const Matrix& regions, const ImageForward& f, const Vector& d_output,
                          const ModelParams& p, const CorpusEmbedding& corpus, const ConsensusOptions& opts,
                          ModelParams& grads) {
  const Matrix d_local =
      consensus_backward(f.encoding.output, f.head, corpus, p.consensus.visual, opts, d_output, grads.consensus.visual);
  encode_image_backward(regions, f.encoding, d_local, grads.image);
}

CaptionForward embed_caption_cached(const std::vector<int>& tokens, const ConceptLabel& label, const ModelParams& p,
                                    const CorpusEmbedding& corpus, const ConsensusOptions& opts) {
  CaptionForward f;
  f.encoding = encode_text_cached(tokens, p.text);
  f.label = label;
  f.head = consensus_forward(f.encoding.output, corpus, p.consensus.textual, opts, &f.label);
  return f;
}

void embed_caption_backward(const CaptionForward& f, const Vector& d_output, const ModelParams& p,
                            const CorpusEmbedding& corpus, const ConsensusOptions& opts, ModelParams& grads) {
  const Matrix d_local = consensus_backward(f.encoding.output, f.head, corpus, p.consensus.textual, opts, d_output,
                                            grads.consensus.textual);
  encode_text_backward(f.encoding, d_local, p.text, grads.text);
}

Vector embed_image(const Matrix& regions, const ModelParams& p, const CorpusEmbedding& corpus,
                   const ConsensusOptions& opts) {
  return embed_image_cached(regions, p, corpus, opts).output();
}

Vector embed_caption(const std::vector<int>& tokens, const ConceptLabel& label, const ModelParams& p,
                     const CorpusEmbedding& corpus, const ConsensusOptions& opts) {
  return embed_caption_cached(tokens, label, p, corpus, opts).output();
}

}  // namespace amsps
