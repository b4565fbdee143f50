"""The partner model living in another process.

The guided exchange needs nothing from g but step scores, so g can sit
behind the wire protocol: a subprocess (or a TCP peer) that answers
JSON-per-line score requests.  This demo first taps the wire by hand —
one handshake, one score request — then decodes the whole scenario twice,
once with g in-process and once with g served by demos/serve_table.py,
and checks the outputs match line for line.

Run:  python3 demos/remote_partner.py
"""

import json
import subprocess
import sys
import tempfile
from pathlib import Path

from duet.remote import RemoteScorer
from duet.scoring import SourceView
from duet.synthetic import complementary_scenario
from duet.textspec import sequence_to_text, text_to_sequence
from duet.twist import DecodeSession, GuidanceConfig, twist_decode

VIEW = SourceView("plain", ("source",))
SERVER = Path(__file__).resolve().parent / "serve_table.py"


def wire_tap(table_path: Path, source: str, prefix_ids: list) -> None:
    """Speak two frames of the protocol by hand and show them."""
    proc = subprocess.Popen(
        [sys.executable, str(SERVER), str(table_path)],
        stdin=subprocess.PIPE,
        stdout=subprocess.PIPE,
        stderr=subprocess.DEVNULL,
        text=True,
        encoding="utf-8",
    )

    def exchange(message: dict) -> dict:
        print("  -> %s" % json.dumps(message, separators=(", ", ": ")))
        proc.stdin.write(json.dumps(message) + "\n")
        proc.stdin.flush()
        reply = json.loads(proc.stdout.readline())
        shown = dict(reply)
        if isinstance(shown.get("spec"), dict):
            shown["spec"] = "{... %d-token vocabulary manifest ...}" % len(
                shown["spec"]["vocabulary"]
            )
        print("  <- %s" % json.dumps(shown, separators=(", ", ": ")))
        return reply

    hello = exchange(
        {"v": 1, "type": "hello", "client": "demo", "vocab_sha256": None}
    )
    session = hello["session"]
    exchange(
        {
            "v": 1,
            "type": "score",
            "id": 1,
            "session": session,
            "source": source,
            "prefix": prefix_ids,
            "top_n": 3,
        }
    )
    proc.stdin.write(json.dumps({"v": 1, "type": "close", "session": session}) + "\n")
    proc.stdin.flush()
    proc.wait(timeout=10)


def decode_all(scenario, model_g):
    outputs = []
    for source in scenario.sources:
        session = DecodeSession(
            model_f=scenario.f,
            view_f=VIEW,
            model_g=model_g,
            view_g=VIEW,
            record={"source": source},
            beam=scenario.beam,
            guidance=GuidanceConfig(
                lambda_f=scenario.lambda_f, lambda_g=scenario.lambda_g
            ),
        )
        out, _ = twist_decode(session)
        outputs.append(sequence_to_text(out))
    return outputs


def main():
    scenario = complementary_scenario(num_items=3)
    table_path = Path(tempfile.mkdtemp(prefix="duet-demo-")) / "g.table.json"
    scenario.g.save(table_path)

    head = " ".join(scenario.references[0].split()[:2])
    prefix_ids = list(text_to_sequence(head, scenario.g.spec).ids)
    print(
        "the wire, verbatim (asking g what follows %r in %r; spec manifest"
        " elided):" % (head, scenario.sources[0])
    )
    wire_tap(table_path, scenario.sources[0], prefix_ids)
    print()

    local = decode_all(scenario, scenario.g)
    with RemoteScorer.from_process(
        [sys.executable, str(SERVER), str(table_path)],
        expected_spec=scenario.g.spec,
    ) as remote_g:
        print(
            "handshake checks passed: served vocabulary hash matches the"
            " local spec"
        )
        remote = decode_all(scenario, remote_g)

    print()
    for local_out, remote_out, reference in zip(
        local, remote, scenario.references
    ):
        marks = "==" if local_out == remote_out else "!="
        print("  in-process %-28r %s remote %r" % (local_out, marks, remote_out))
        assert local_out == remote_out == reference
    print()
    print("same beams, same candidates, same outputs; g never shared a")
    print("process, only score vectors.")


if __name__ == "__main__":
    main()
