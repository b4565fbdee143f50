"""A minimal wire-protocol server hosting one table model over stdio.

Loads a duet-table JSON file and answers score and embedding requests on
stdin/stdout, one JSON object per line.  This is the smallest honest
partner host: anything that speaks the same few message types — in any
language, over stdio or TCP — can stand in for it.  See protocol.md at
the repository root for the message reference.

Run:  python3 demos/serve_table.py MODEL.table.json [--margin 4.0]
(normally not by hand: RemoteScorer.from_process spawns it and talks to
its pipes; stdout carries protocol frames and nothing else)
"""

import argparse
import json
import sys
import uuid

import numpy as np

from duet.remote import PROTOCOL_VERSION, handshake_manifest
from duet.scoring import TableScorer
from duet.textspec import TokenSequence


def _reply(message: dict) -> None:
    sys.stdout.write(json.dumps(message, separators=(",", ":")) + "\n")
    sys.stdout.flush()


def _error(request: dict, text: str) -> None:
    _reply(
        {
            "v": PROTOCOL_VERSION,
            "type": "error",
            "id": request.get("id"),
            "message": text,
        }
    )


def serve(scorer: TableScorer, margin: float) -> None:
    session = uuid.uuid4().hex[:8]
    spec = scorer.spec
    for line in sys.stdin:
        line = line.strip()
        if not line:
            continue
        try:
            request = json.loads(line)
        except json.JSONDecodeError as exc:
            _error({}, "bad JSON: %s" % exc)
            continue
        kind = request.get("type")
        if kind == "hello":
            _reply(
                handshake_manifest(
                    spec,
                    server_name="serve-table",
                    session=session,
                    embeddings=scorer.embedding_dim is not None,
                    deterministic=True,
                )
            )
        elif kind == "score":
            try:
                prefix = TokenSequence(tuple(request["prefix"]), spec)
                step = scorer.score_step(request["source"], prefix)
            except Exception as exc:  # noqa: BLE001 - errors keep the session
                _error(request, str(exc))
                continue
            finite = [
                (float(step[i]), int(i))
                for i in range(len(step))
                if np.isfinite(step[i])
            ]
            finite.sort(key=lambda pair: (-pair[0], pair[1]))
            listed = finite[: int(request.get("top_n", len(finite)))]
            _reply(
                {
                    "v": PROTOCOL_VERSION,
                    "type": "score",
                    "id": request.get("id"),
                    "scores": [[tid, score] for score, tid in listed],
                    "floor": min(score for score, _ in listed) - margin,
                }
            )
        elif kind == "embedding":
            try:
                vector = scorer.embedding(int(request["token"]))
            except Exception as exc:  # noqa: BLE001
                _error(request, str(exc))
                continue
            _reply(
                {
                    "v": PROTOCOL_VERSION,
                    "type": "embedding",
                    "id": request.get("id"),
                    "vector": [float(x) for x in vector],
                }
            )
        elif kind == "close":
            return
        else:
            _error(request, "unknown message type %r" % kind)


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("model", help="duet-table JSON file to host")
    parser.add_argument(
        "--margin",
        type=float,
        default=4.0,
        help="how far below the worst listed score unlisted tokens land",
    )
    args = parser.parse_args()
    serve(TableScorer.load(args.model), args.margin)
    return 0


if __name__ == "__main__":
    sys.exit(main())
