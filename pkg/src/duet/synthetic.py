"""A constructed dataset where two models must cooperate to be right.

Each item has a four-word reference.  Model f scores the first two positions
correctly but mildly prefers a noise token on the last two; model g is the
mirror image.  Decoding either model alone yields a half-wrong output, while
the guided exchange recovers the full reference.

The margins make the default weights work and show why they are asymmetric.
In the g pass the guidance only needs to carry f's head information without
letting f's own noise-tailed candidates ride along at distance zero, so
lambda_f is small: g's strong tail margin (4.9 per position) dwarfs it, and
g's candidate set keeps correct tails plus whatever heads the pull
preserves.  In the final f pass the guidance must overturn f's wrong tail
preference, so lambda_g is larger than that weak margin (0.5 per position)
while still far below f's strong head margin.  The vocabulary is small
enough that every pass can be cross-checked against exhaustive enumeration.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product
from pathlib import Path
from typing import Union

import numpy as np

from .beam import BeamConfig
from .errors import ValidationError
from .scoring import TableScorer
from .textspec import (
    EOS_ID,
    ModelTextSpec,
    Vocabulary,
    WhitespaceScheme,
)

_ITEM_WORDS = (
    ("every", "gate", "opens", "slowly"),
    ("a", "bird", "sings", "today"),
    ("rain", "falls", "after", "dusk"),
)
NOISE_WORD = "noise"

# Step-score magnitudes.  "strong" margins beat any configured distance
# penalty, "weak" ones lose to lambda_g; everything stays <= 0.
_RIGHT = -0.1
_NEARLY_RIGHT = -0.6  # the weak wrong-way preference: margin 0.5 < lambda_g
_WRONG = -5.0  # the strong right-way margin: 4.9 > all lambdas
_OFF_PATH = -8.0
_EOS_EARLY = -30.0
_EOS_FINAL = -0.05
_DEFAULT = -12.0


@dataclass(frozen=True)
class ComplementaryScenario:
    spec: ModelTextSpec
    sources: tuple[str, ...]
    references: tuple[str, ...]
    f: TableScorer
    g: TableScorer
    beam: BeamConfig
    lambda_f: float
    lambda_g: float


def complementary_scenario(num_items: int = 3) -> ComplementaryScenario:
    """Build the scenario over the first num_items items (1..3)."""
    if not 1 <= num_items <= len(_ITEM_WORDS):
        raise ValidationError("num_items must be between 1 and %d" % len(_ITEM_WORDS))
    items = _ITEM_WORDS[:num_items]
    words = sorted({w for item in items for w in item} | {NOISE_WORD})
    spec = ModelTextSpec(
        Vocabulary.from_tokens(words), WhitespaceScheme(), name="complementary"
    )
    vocab = spec.vocabulary
    size = len(vocab)
    noise = vocab.id(NOISE_WORD)

    def step_vector(strong_first: bool, position: int, right_id: int) -> np.ndarray:
        """Scores after `position` content tokens. strong_first marks model f."""
        vec = np.full(size, _OFF_PATH)
        if position >= 4:
            vec[:] = _EOS_EARLY
            vec[EOS_ID] = _EOS_FINAL
            return vec
        vec[EOS_ID] = _EOS_EARLY
        knows_it = (position < 2) == strong_first
        if knows_it:
            vec[right_id] = _RIGHT
            vec[noise] = _WRONG
        else:
            vec[right_id] = _NEARLY_RIGHT
            vec[noise] = _RIGHT
        return vec

    def build(strong_first: bool) -> TableScorer:
        entries = {}
        for i, item in enumerate(items):
            source = "item%d" % i
            right_ids = [vocab.id(w) for w in item]
            # every prefix over {right word, noise} per position, lengths 0..4
            for length in range(5):
                for choice in product(*((rid, noise) for rid in right_ids[:length])):
                    vec = step_vector(
                        strong_first, length, right_ids[length] if length < 4 else -1
                    )
                    entries[(source, tuple(choice))] = vec
        return TableScorer(spec, entries, default=_DEFAULT)

    return ComplementaryScenario(
        spec=spec,
        sources=tuple("item%d" % i for i in range(num_items)),
        references=tuple(" ".join(item) for item in items),
        f=build(strong_first=True),
        g=build(strong_first=False),
        beam=BeamConfig(max_len=6, beam_size=5, alpha=1.0),
        lambda_f=0.3,
        lambda_g=1.0,
    )


def write_scenario_files(
    scenario: ComplementaryScenario, out_dir: Union[str, Path]
) -> dict[str, Path]:
    """Materialize the scenario as table files, datasets and a config."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "f_table": out / "f.table.json",
        "g_table": out / "g.table.json",
        "source": out / "eval.src",
        "reference": out / "eval.ref",
        "config": out / "config.yaml",
    }
    scenario.f.save(paths["f_table"])
    scenario.g.save(paths["g_table"])
    paths["source"].write_text("\n".join(scenario.sources) + "\n", encoding="utf-8")
    paths["reference"].write_text(
        "\n".join(scenario.references) + "\n", encoding="utf-8"
    )
    import yaml

    config = {
        "seed": 0,
        "beam": {
            "max_len": scenario.beam.max_len,
            "beam_size": scenario.beam.beam_size,
            "alpha": scenario.beam.alpha,
        },
        "guidance": {
            "lambda_f": scenario.lambda_f,
            "lambda_g": scenario.lambda_g,
            "iterations": 1,
            "distance": "hamming-min",
        },
        "lambda_grid": [0.1, 0.3, 1.0, 3.0],
        "metric": "bleu",
        "methods": [
            "isolation-f",
            "isolation-g",
            "rerank-fg",
            "rerank-gf",
            "twist-fg",
            "twist-gf",
            "fusion",
        ],
        "models": {
            "f": {"kind": "table", "path": "f.table.json", "view": ["source"]},
            "g": {"kind": "table", "path": "g.table.json", "view": ["source"]},
        },
        "data": {
            "eval": {"source": "eval.src", "references": ["eval.ref"]},
            "dev": {"source": "eval.src", "references": ["eval.ref"]},
        },
    }
    paths["config"].write_text(
        yaml.safe_dump(config, sort_keys=False), encoding="utf-8"
    )
    return paths
