"""Client for scorers served over the newline-delimited JSON wire protocol.

A remote scorer is a separate process (any language) that answers next-token
scoring requests.  Each message is one JSON object on one line with a "v": 1
version field.  A session is: handshake, then a strictly ordered loop of
score/embedding requests paired to responses by sequence id, then close.  The
full message schema lives in protocol.md at the repository root.

The handshake carries the server's text interface: vocabulary manifest (or
just its hash for large vocabularies), tokenization scheme descriptor,
generation order, and capability flags.  When the caller already knows the
spec, the vocabulary hash must match or the client refuses to decode.

Responses may truncate to the top-n scores; every unlisted token takes the
reported floor (the minimum served score minus a fixed server-side margin),
which keeps the client-side vector well defined.  BOS is forced to -inf
client-side like every scorer.

One connection carries one strictly ordered request stream.  A lock around
each request/response exchange lets threads share a connection (their decodes
interleave at step granularity); open separate connections for real
parallelism.
"""

from __future__ import annotations

import hashlib
import json
import os
import socket
import subprocess
import threading
from typing import IO, Optional, Sequence

import numpy as np

from .errors import CapabilityError, ProtocolError, SpecMismatchError
from .scoring import Scorer, StepScores
from .textspec import ModelTextSpec, TokenSequence, spec_from_dict, spec_to_dict

PROTOCOL_VERSION = 1
BRIDGE_ADDR_ENV = "DUET_BRIDGE_ADDR"


def vocab_hash(spec: ModelTextSpec) -> str:
    """sha256 over the vocabulary entries, one per line, UTF-8."""
    body = "\n".join(spec.vocabulary.entries) + "\n"
    return hashlib.sha256(body.encode("utf-8")).hexdigest()


def bridge_address(address: Optional[str] = None) -> tuple[str, int]:
    """Resolve a host:port string, falling back to the DUET_BRIDGE_ADDR env var."""
    address = address or os.environ.get(BRIDGE_ADDR_ENV)
    if not address or ":" not in address:
        raise ProtocolError(
            "no bridge address; pass host:port or set %s" % BRIDGE_ADDR_ENV
        )
    host, _, port = address.rpartition(":")
    try:
        return host, int(port)
    except ValueError:
        raise ProtocolError("bad bridge address %r" % address) from None


class _Transport:
    """One JSON object per line over a reader/writer pair."""

    def __init__(self, reader: IO[str], writer: IO[str], on_close=None):
        self._reader = reader
        self._writer = writer
        self._on_close = on_close

    def send(self, message: dict) -> None:
        self._writer.write(json.dumps(message, separators=(",", ":")) + "\n")
        self._writer.flush()

    def recv(self) -> dict:
        line = self._reader.readline()
        if not line:
            raise ProtocolError("connection closed mid-session")
        try:
            message = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ProtocolError("unparseable message %r: %s" % (line[:80], exc))
        if not isinstance(message, dict):
            raise ProtocolError("message is not an object: %r" % (line[:80],))
        if message.get("v") != PROTOCOL_VERSION:
            raise ProtocolError(
                "protocol version %r, expected %d"
                % (message.get("v"), PROTOCOL_VERSION)
            )
        return message

    def close(self) -> None:
        for stream in (self._writer, self._reader):
            try:
                stream.close()
            except OSError:
                pass
        if self._on_close is not None:
            self._on_close()


class RemoteScorer(Scorer):
    """A Scorer whose step scores come from a wire-protocol server."""

    def __init__(
        self,
        transport: _Transport,
        expected_spec: Optional[ModelTextSpec] = None,
        top_n: Optional[int] = None,
        client_name: str = "duet",
    ):
        self._transport = transport
        self._top_n = top_n
        self._next_id = 0
        self._closed = False
        self._lock = threading.Lock()
        self._transport.send(
            {
                "v": PROTOCOL_VERSION,
                "type": "hello",
                "client": client_name,
                "vocab_sha256": None
                if expected_spec is None
                else vocab_hash(expected_spec),
            }
        )
        hello = self._transport.recv()
        if hello.get("type") != "hello":
            raise ProtocolError("expected hello, got %r" % hello.get("type"))
        self._session = hello.get("session", "")
        self._server_name = hello.get("server", "")
        self._has_embeddings = bool(hello.get("embeddings", False))
        self.deterministic = bool(hello.get("deterministic", False))
        served_hash = hello.get("vocab_sha256")
        if hello.get("spec") is not None:
            spec = spec_from_dict(hello["spec"])
            if served_hash is not None and served_hash != vocab_hash(spec):
                raise ProtocolError("server vocabulary hash disagrees with manifest")
            if expected_spec is not None and spec != expected_spec:
                raise SpecMismatchError(
                    "served text spec differs from the expected one"
                )
            self._spec = spec
        else:
            if expected_spec is None:
                raise ProtocolError(
                    "server sent no vocabulary manifest and none was supplied"
                )
            if served_hash != vocab_hash(expected_spec):
                raise SpecMismatchError(
                    "server vocabulary hash %r does not match the expected spec"
                    % (served_hash,)
                )
            self._spec = expected_spec

    @classmethod
    def connect(
        cls,
        address: Optional[str] = None,
        expected_spec: Optional[ModelTextSpec] = None,
        top_n: Optional[int] = None,
    ) -> "RemoteScorer":
        """Open a TCP connection to host:port (or $DUET_BRIDGE_ADDR)."""
        host, port = bridge_address(address)
        sock = socket.create_connection((host, port))
        reader = sock.makefile("r", encoding="utf-8", newline="\n")
        writer = sock.makefile("w", encoding="utf-8", newline="\n")
        return cls(
            _Transport(reader, writer, on_close=sock.close),
            expected_spec=expected_spec,
            top_n=top_n,
        )

    @classmethod
    def from_process(
        cls,
        command: Sequence[str],
        expected_spec: Optional[ModelTextSpec] = None,
        top_n: Optional[int] = None,
    ) -> "RemoteScorer":
        """Spawn a server subprocess and talk to it over stdin/stdout."""
        proc = subprocess.Popen(
            list(command),
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            text=True,
            encoding="utf-8",
        )

        def stop():
            if proc.poll() is None:
                proc.terminate()
                try:
                    proc.wait(timeout=5)
                except subprocess.TimeoutExpired:
                    proc.kill()

        return cls(
            _Transport(proc.stdout, proc.stdin, on_close=stop),
            expected_spec=expected_spec,
            top_n=top_n,
        )

    @property
    def spec(self) -> ModelTextSpec:
        return self._spec

    def _request(self, message: dict) -> dict:
        with self._lock:
            self._next_id += 1
            request_id = self._next_id
            message = dict(message, v=PROTOCOL_VERSION, id=request_id,
                           session=self._session)
            self._transport.send(message)
            reply = self._transport.recv()
        if reply.get("type") == "error":
            raise ProtocolError(
                "server error for request %d: %s"
                % (request_id, reply.get("message"))
            )
        if reply.get("id") != request_id:
            raise ProtocolError(
                "response id %r for request %d (out of order?)"
                % (reply.get("id"), request_id)
            )
        if reply.get("type") != message["type"]:
            raise ProtocolError("response type %r mismatch" % reply.get("type"))
        return reply

    def _step_scores(self, source: str, prefix: TokenSequence) -> StepScores:
        size = len(self._spec.vocabulary)
        top_n = self._top_n if self._top_n is not None else size
        reply = self._request(
            {
                "type": "score",
                "source": source,
                "prefix": list(prefix.ids),
                "top_n": top_n,
            }
        )
        listed = reply.get("scores")
        floor = reply.get("floor")
        if not isinstance(listed, list) or not isinstance(floor, (int, float)):
            raise ProtocolError("malformed score response")
        vec = np.full(size, float(floor))
        for pair in listed:
            tid, score = pair
            tid = int(tid)
            if not 0 <= tid < size:
                raise ProtocolError("served score for out-of-range id %d" % tid)
            if not np.isfinite(score):
                raise ProtocolError("served score for id %d is not finite" % tid)
            vec[tid] = float(score)
        return vec

    @property
    def embedding_dim(self) -> Optional[int]:
        if not self._has_embeddings:
            return None
        return len(self.embedding(0))

    def embedding(self, token_id: int) -> np.ndarray:
        if not self._has_embeddings:
            raise CapabilityError("the server does not serve embeddings")
        reply = self._request({"type": "embedding", "token": int(token_id)})
        vector = reply.get("vector")
        if not isinstance(vector, list):
            raise ProtocolError("malformed embedding response")
        return np.asarray(vector, dtype=np.float64)

    def close(self) -> None:
        if self._closed:
            return
        self._closed = True
        try:
            self._transport.send(
                {"v": PROTOCOL_VERSION, "type": "close", "session": self._session}
            )
        except (OSError, ValueError):
            pass
        self._transport.close()

    def __enter__(self) -> "RemoteScorer":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def handshake_manifest(
    spec: ModelTextSpec,
    server_name: str,
    session: str,
    embeddings: bool,
    deterministic: bool,
    include_vocab: bool = True,
) -> dict:
    """Build the server-side hello message (used by in-process test servers)."""
    message = {
        "v": PROTOCOL_VERSION,
        "type": "hello",
        "server": server_name,
        "session": session,
        "vocab_sha256": vocab_hash(spec),
        "embeddings": embeddings,
        "deterministic": deterministic,
        "spec": spec_to_dict(spec) if include_vocab else None,
    }
    return message
