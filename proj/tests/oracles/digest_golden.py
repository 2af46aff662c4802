#!/usr/bin/env python3
"""Golden prompt digests computed with hashlib.

Digest input: model_id NUL canonical_config NUL prompt [NUL salt], where the
canonical config is compact JSON with sorted keys.

    python3 tests/oracles/digest_golden.py > tests/fixtures/digest_golden.json
"""

import hashlib
import json


def canonical(model_id, temperature=0.0, max_output_tokens=256, stop=()):
    doc = {"model_id": model_id, "temperature": temperature, "max_output_tokens": max_output_tokens, "stop": list(stop)}
    return json.dumps(doc, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def digest(prompt, model_id, salt="", **cfg):
    parts = [model_id.encode(), canonical(model_id, **cfg).encode(), prompt.encode()]
    if salt:
        parts.append(salt.encode())
    return hashlib.sha256(b"\0".join(parts)).hexdigest()


cases = [
    {"prompt": "", "model_id": "llama-2-70b-chat"},
    {"prompt": "Query: a\nPassage: b\nOutput:", "model_id": "llama-2-70b-chat"},
    {"prompt": "Query: a\nPassage: b\nOutput:", "model_id": "llama-2-70b-chat", "salt": "retry=1"},
    {"prompt": "Query: a\nPassage: b\nOutput:", "model_id": "llama-2-70b-chat", "temperature": 0.7},
    {"prompt": "Query: a\nPassage: b\nOutput:", "model_id": "gpt-3.5-turbo", "max_output_tokens": 128,
     "stop": ["\n\n"]},
    {"prompt": "café naïve", "model_id": "m"},
]
out = []
for c in cases:
    c = dict(c)
    cfg = {k: c[k] for k in ("temperature", "max_output_tokens", "stop") if k in c}
    row = dict(c)
    row["canonical"] = canonical(c["model_id"], **cfg)
    row["sha256"] = digest(c["prompt"], c["model_id"], c.get("salt", ""), **cfg)
    out.append(row)
print(json.dumps(out, indent=2, ensure_ascii=False))
