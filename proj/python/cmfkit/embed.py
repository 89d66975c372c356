# Copyright 2026 The cmfkit Authors. All Rights Reserved.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

"""Export sentence-transformers embeddings of pseudo-sentences to a cmfkit table.

Reads one or more `<facility>.sentences.jsonl` files written by
`cmfkit ingest --sentences` and writes the binary table consumed by
`backbone.kind = pretrained_transformer`.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import struct
import sys

MAGIC = b"CMFEMB1\n"


def write_table(path: str, identifier: str, rows: dict[str, "list[float]"], dimension: int) -> None:
    tmp = path + ".tmp"
    with open(tmp, "wb") as out:
        ident = identifier.encode()
        out.write(MAGIC)
        out.write(struct.pack("<I", len(ident)))
        out.write(ident)
        out.write(struct.pack("<IQ", dimension, len(rows)))
        for digest, values in rows.items():
            out.write(bytes.fromhex(digest))
            out.write(struct.pack(f"<{dimension}d", *values))
    os.replace(tmp, path)


def read_sentences(paths: list[str]) -> list[str]:
    seen: dict[str, None] = {}
    for p in paths:
        with open(p, encoding="utf-8") as f:
            for line in f:
                if line.strip():
                    seen.setdefault(json.loads(line)["text"], None)
    return list(seen)


def main(argv: list[str] | None = None) -> int:
    ap = argparse.ArgumentParser(prog="cmfkit-embed", description=__doc__.splitlines()[0])
    ap.add_argument("sentences", nargs="+", help="sentences.jsonl files")
    ap.add_argument("--out", required=True, help="output table path")
    ap.add_argument("--checkpoint", default="all-mpnet-base-v2")
    ap.add_argument("--batch-size", type=int, default=64)
    args = ap.parse_args(argv)

    from sentence_transformers import SentenceTransformer

    texts = read_sentences(args.sentences)
    if not texts:
        print("no sentences found", file=sys.stderr)
        return 1
    model = SentenceTransformer(args.checkpoint)
    vectors = model.encode(texts, batch_size=args.batch_size, show_progress_bar=False)
    rows = {hashlib.sha256(t.encode()).hexdigest(): [float(x) for x in v] for t, v in zip(texts, vectors)}
    write_table(args.out, args.checkpoint, rows, int(vectors.shape[1]))
    print(f"wrote {len(rows)} embeddings of dimension {vectors.shape[1]} to {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
