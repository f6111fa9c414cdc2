"""Mine chosen/rejected action pairs out of a finished search tree.

Sibling actions under one parent are compared by their incoming-edge
mean value Q.  An ordered pair (chosen, rejected) survives when the gap
Q_chosen - Q_rejected clears a minimum, the chosen side clears an
absolute quality floor, and the two action texts differ.  Surviving
pairs are scored by a convex blend of chosen quality and gap, ranked,
and capped per parent, which deliberately lets a strong action appear
opposite several weaker siblings.  The export writes one JSON object
per line plus a manifest carrying the config, the counts, and a digest
of the source tree, so an identical tree and config re-export
byte-identically.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path

from .prompts import policy_prompt
from .tree import SearchTree

DATASET_SCHEMA_VERSION = 1

# Line fields, in emission order.  This is the contract downstream
# trainers parse; extend only by appending.
_LINE_FIELDS = (
    "prompt",
    "chosen",
    "rejected",
    "q_chosen",
    "q_rejected",
    "score",
    "tree_id",
    "parent_id",
)


@dataclass(frozen=True)
class MinerConfig:
    """Filter and ranking knobs for pair mining.

    ``quality_floor`` is an exclusive lower bound on the chosen side's
    Q.  ``score_weight`` blends chosen quality against the gap: 1 ranks
    purely by Q_chosen, 0 purely by the gap.
    """

    min_gap: float = 0.02
    quality_floor: float = 0.5
    score_weight: float = 0.5
    pairs_per_parent: int = 3

    def __post_init__(self) -> None:
        if not (math.isfinite(self.min_gap) and self.min_gap >= 0.0):
            raise ValueError("min_gap must be finite and >= 0")
        if not math.isfinite(self.quality_floor):
            raise ValueError("quality_floor must be finite")
        if not (0.0 <= self.score_weight <= 1.0):
            raise ValueError("score_weight must lie in [0, 1]")
        if self.pairs_per_parent < 1:
            raise ValueError("pairs_per_parent must be >= 1")

    def to_dict(self) -> dict:
        return {
            "min_gap": self.min_gap,
            "quality_floor": self.quality_floor,
            "score_weight": self.score_weight,
            "pairs_per_parent": self.pairs_per_parent,
        }


@dataclass(frozen=True)
class PreferencePair:
    """One ranked (chosen, rejected) training example."""

    prompt: str
    chosen: str
    rejected: str
    q_chosen: float
    q_rejected: float
    score: float
    parent_id: int
    chosen_id: int
    rejected_id: int


def pair_score(q_chosen: float, gap: float, score_weight: float) -> float:
    """Convex blend ``w * q_chosen + (1 - w) * gap``."""
    if not (math.isfinite(q_chosen) and math.isfinite(gap)):
        raise ValueError("pair_score inputs must be finite")
    if not (0.0 <= score_weight <= 1.0):
        raise ValueError("score_weight must lie in [0, 1]")
    return score_weight * q_chosen + (1.0 - score_weight) * gap


def mine_pairs(tree: SearchTree, cfg: MinerConfig | None = None) -> list[PreferencePair]:
    """Enumerate, filter, score, and rank sibling pairs.

    Candidates at each parent are the children whose incoming edge has
    at least one visit; Q is that edge's mean value.  Every ordered
    candidate pair passing the three filters (gap >= min_gap,
    Q_chosen > quality_floor, distinct texts) is scored, the best
    ``pairs_per_parent`` are kept per parent (rank by score descending,
    ties by chosen id then rejected id), and the survivors are returned
    ranked globally the same way with parent id as the leading
    tie-break.  An empty result is valid.
    """
    cfg = cfg or MinerConfig()
    kept: list[PreferencePair] = []
    for parent_id in sorted(tree.nodes):
        candidates = [
            (child_id, action.text, stats.mean_value)
            for action, child_id, stats in tree.children(parent_id)
            if stats.visits > 0
        ]
        if len(candidates) < 2:
            continue
        parent = tree.nodes[parent_id]
        prompt = policy_prompt(
            tree.root_premise(parent_id), parent.bullets, parent.cot_history
        )
        local: list[PreferencePair] = []
        for chosen_id, chosen_text, q_hi in candidates:
            if q_hi <= cfg.quality_floor:
                continue
            for rejected_id, rejected_text, q_lo in candidates:
                if rejected_id == chosen_id or chosen_text == rejected_text:
                    continue
                gap = q_hi - q_lo
                if gap < cfg.min_gap:
                    continue
                local.append(
                    PreferencePair(
                        prompt=prompt,
                        chosen=chosen_text,
                        rejected=rejected_text,
                        q_chosen=q_hi,
                        q_rejected=q_lo,
                        score=pair_score(q_hi, gap, cfg.score_weight),
                        parent_id=parent_id,
                        chosen_id=chosen_id,
                        rejected_id=rejected_id,
                    )
                )
        local.sort(key=lambda p: (-p.score, p.chosen_id, p.rejected_id))
        kept.extend(local[: cfg.pairs_per_parent])
    kept.sort(key=lambda p: (-p.score, p.parent_id, p.chosen_id, p.rejected_id))
    return kept


def tree_digest(tree: SearchTree) -> str:
    """Stable hex digest of the tree's canonical serialization."""
    return hashlib.sha256(tree.to_json_str().encode("utf-8")).hexdigest()


def export_dataset(
    pairs: list[PreferencePair],
    path: str | Path,
    tree: SearchTree,
    cfg: MinerConfig | None = None,
) -> Path:
    """Write the JSONL dataset plus a ``<path>.manifest.json`` sidecar.

    Each line carries exactly the fields in ``_LINE_FIELDS``; tree_id
    is a short prefix of the source-tree digest.  Rejects an empty pair
    list: exporting nothing is almost always a mining-config mistake.
    Returns the dataset path.
    """
    if not pairs:
        raise ValueError("refusing to export an empty pair list")
    cfg = cfg or MinerConfig()
    path = Path(path)
    digest = tree_digest(tree)
    tree_id = digest[:12]
    lines = []
    for pair in pairs:
        record = {
            "prompt": pair.prompt,
            "chosen": pair.chosen,
            "rejected": pair.rejected,
            "q_chosen": pair.q_chosen,
            "q_rejected": pair.q_rejected,
            "score": pair.score,
            "tree_id": tree_id,
            "parent_id": pair.parent_id,
        }
        lines.append(json.dumps(record, ensure_ascii=False))
    payload = "\n".join(lines) + "\n"
    path.write_text(payload, encoding="utf-8")
    manifest = {
        "schema_version": DATASET_SCHEMA_VERSION,
        "fields": list(_LINE_FIELDS),
        "pair_count": len(pairs),
        "parent_count": len({p.parent_id for p in pairs}),
        "config": cfg.to_dict(),
        "tree_digest": digest,
        "dataset_sha256": hashlib.sha256(payload.encode("utf-8")).hexdigest(),
    }
    manifest_path = Path(str(path) + ".manifest.json")
    manifest_path.write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    return path
