#!/usr/bin/env python3
"""Reference logits for the GPT-2 small architecture.

Every tensor of a GPT-2 small checkpoint is filled from a counter-based
splitmix64 stream (documented in docs/formats.md, mirrored by
stylescope::synthetic_checkpoint in C++). The weights are loaded into the
Hugging Face GPT2LMHeadModel and the logits for five fixed prompts are
frozen to tests/fixtures/forward_logits.bin (float32, little-endian,
concatenated row-major [T_k x vocab] blocks) plus forward_fixture.json.

Usage: python3 scripts/gen_forward_fixture.py
"""
import json
import os

import numpy as np
import tiktoken
import tiktoken.load
import torch
from transformers import GPT2Config, GPT2LMHeadModel

ROOT = os.path.join(os.path.dirname(__file__), "..")
GPT2_PATTERN = r"""'s|'t|'re|'ve|'m|'ll|'d| ?\p{L}+| ?\p{N}+| ?[^\s\p{L}\p{N}]+|\s+(?!\S)|\s+"""

SEED = 20251015
CONFIG = dict(n_layers=12, n_heads=12, d_model=768, d_mlp=3072, vocab_size=50257, n_ctx=1024)
PROMPTS = [
    "I am a rather elderly man.",
    "It was a quiet Sunday afternoon.",
    "Bartleby was an immovably calm scrivener.",
    "I would prefer not to.",
    "The nature of my avocations",
]

# half-widths of the uniform distributions, keyed by tensor role
SCALES = {
    "wte": 0.2, "wpe": 0.05,
    "ln_weight": 0.1, "ln_bias": 0.02,
    "attn_w": 0.06, "attn_proj_w": 0.04,
    "fc_w": 0.06, "fc_proj_w": 0.03,
    "bias": 0.02,
}

GAMMA = np.uint64(0x9E3779B97F4A7C15)


def tensor_layout(cfg):
    d, m = cfg["d_model"], cfg["d_mlp"]
    out = [("wte.weight", (cfg["vocab_size"], d), "wte", False),
           ("wpe.weight", (cfg["n_ctx"], d), "wpe", False)]
    for i in range(cfg["n_layers"]):
        p = f"h.{i}."
        out += [
            (p + "ln_1.weight", (d,), "ln_weight", True),
            (p + "ln_1.bias", (d,), "ln_bias", False),
            (p + "attn.c_attn.weight", (d, 3 * d), "attn_w", False),
            (p + "attn.c_attn.bias", (3 * d,), "bias", False),
            (p + "attn.c_proj.weight", (d, d), "attn_proj_w", False),
            (p + "attn.c_proj.bias", (d,), "bias", False),
            (p + "ln_2.weight", (d,), "ln_weight", True),
            (p + "ln_2.bias", (d,), "ln_bias", False),
            (p + "mlp.c_fc.weight", (d, m), "fc_w", False),
            (p + "mlp.c_fc.bias", (m,), "bias", False),
            (p + "mlp.c_proj.weight", (m, d), "fc_proj_w", False),
            (p + "mlp.c_proj.bias", (d,), "bias", False),
        ]
    out += [("ln_f.weight", (d,), "ln_weight", True), ("ln_f.bias", (d,), "ln_bias", False)]
    return out


def splitmix_uniform(seed, start, count):
    with np.errstate(over="ignore"):
        g = np.arange(start + 1, start + 1 + count, dtype=np.uint64)
        z = np.uint64(seed) + g * GAMMA
        z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
        z = z ^ (z >> np.uint64(31))
    u = (z >> np.uint64(40)).astype(np.float32) * np.float32(2.0 ** -24)
    return u


def generate(cfg, seed):
    tensors = {}
    offset = 0
    checksum = 0.0
    for name, shape, role, around_one in tensor_layout(cfg):
        n = int(np.prod(shape))
        u = splitmix_uniform(seed, offset, n)
        amp = np.float32(2.0 * SCALES[role])
        v = (u - np.float32(0.5)) * amp
        if around_one:
            v = np.float32(1.0) + v
        v = v.astype(np.float32)
        checksum += float(v.astype(np.float64).sum())
        tensors[name] = v.reshape(shape)
        offset += n
    return tensors, checksum


def main():
    ranks = tiktoken.load.data_gym_to_mergeable_bpe_ranks(
        os.path.join(ROOT, "assets/gpt2/merges.txt"), os.path.join(ROOT, "assets/gpt2/vocab.json"))
    enc = tiktoken.Encoding("gpt2-local", pat_str=GPT2_PATTERN, mergeable_ranks=ranks,
                            special_tokens={"<|endoftext|>": 50256})

    tensors, checksum = generate(CONFIG, SEED)
    hf_cfg = GPT2Config(vocab_size=CONFIG["vocab_size"], n_positions=CONFIG["n_ctx"],
                        n_embd=CONFIG["d_model"], n_layer=CONFIG["n_layers"], n_head=CONFIG["n_heads"],
                        n_inner=CONFIG["d_mlp"], activation_function="gelu_new",
                        layer_norm_epsilon=1e-5, resid_pdrop=0.0, embd_pdrop=0.0, attn_pdrop=0.0,
                        tie_word_embeddings=True)
    hf_cfg._attn_implementation = "eager"
    model = GPT2LMHeadModel(hf_cfg)
    state = {"transformer." + k: torch.from_numpy(v.copy()) for k, v in tensors.items()}
    missing, unexpected = model.load_state_dict(state, strict=False)
    missing = [k for k in missing if not k.endswith((".attn.bias", ".attn.masked_bias", "lm_head.weight"))]
    assert not missing and not unexpected, (missing, unexpected)
    model.tie_weights()
    model.eval()

    cases = []
    blobs = []
    with torch.no_grad():
        for prompt in PROMPTS:
            ids = enc.encode_ordinary(prompt)
            logits = model(torch.tensor([ids])).logits[0].numpy().astype(np.float32)
            cases.append({"prompt": prompt, "ids": ids, "argmax": logits.argmax(axis=1).tolist()})
            blobs.append(logits)

    with open(os.path.join(ROOT, "tests/fixtures/forward_logits.bin"), "wb") as f:
        for b in blobs:
            f.write(b.astype("<f4").tobytes())
    meta = {
        "reference": "transformers GPT2LMHeadModel (eager attention, float32)",
        "seed": SEED,
        "config": CONFIG,
        "scales": SCALES,
        "parameter_count": sum(int(v.size) for v in tensors.values()),
        "checksum": checksum,
        "cases": cases,
    }
    with open(os.path.join(ROOT, "tests/fixtures/forward_fixture.json"), "w") as f:
        json.dump(meta, f, indent=1)
        f.write("\n")


if __name__ == "__main__":
    main()
