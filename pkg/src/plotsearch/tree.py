"""Search-tree data model: story states, plot actions, edge statistics.

A story state is a partial outline (a flat list of bullet points) plus
the chain-of-thought actions that produced it.  Each edge carries the
visit statistics the search updates during backpropagation; replaying
``evaluation_log`` through the engine's backpropagation reproduces every
edge's statistics exactly, which the test suite uses as an oracle.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterator, NamedTuple, Optional, Sequence

SOURCE_POLICIES = ("base", "trained")

JSON_SCHEMA_VERSION = 1


@dataclass(frozen=True)
class StoryConfig:
    """Outline geometry: total bullet budget split into fixed-size steps."""

    total_bullets: int = 32
    bullets_per_step: int = 4
    max_depth: int = 8

    def __post_init__(self):
        if min(self.total_bullets, self.bullets_per_step, self.max_depth) < 1:
            raise ValueError("all StoryConfig fields must be positive")
        if self.total_bullets != self.bullets_per_step * self.max_depth:
            raise ValueError(
                "total_bullets must equal bullets_per_step * max_depth "
                f"({self.total_bullets} != {self.bullets_per_step} * {self.max_depth})"
            )


@dataclass(frozen=True)
class PlotAction:
    """One chain-of-thought plot development step proposed by a policy."""

    text: str
    source_policy: str = "base"

    def __post_init__(self):
        if not self.text:
            raise ValueError("action text must be non-empty")
        if self.source_policy not in SOURCE_POLICIES:
            raise ValueError(f"source_policy must be one of {SOURCE_POLICIES}")


@dataclass
class StoryState:
    """A node of the search tree: a partial story outline.

    ``bullets`` accumulates the full outline so far; its length is always
    ``depth * bullets_per_step``.  ``evaluated_value`` stays None until
    the value model scores this state.
    """

    id: int
    bullets: tuple = ()
    cot_history: tuple = ()
    depth: int = 0
    evaluated_value: Optional[float] = None
    # Story premise; set on roots only, descendants read it via root_premise.
    premise: str = ""


@dataclass
class EdgeStats:
    """Visit statistics for one (parent, action) edge.

    Invariants: zero visits implies zero total; with visits the mean is
    exactly total_value / visits; every recorded value lies in [0, 1] so
    0 <= total_value <= visits.
    """

    visits: int = 0
    total_value: float = 0.0

    @property
    def mean_value(self) -> Optional[float]:
        return self.total_value / self.visits if self.visits > 0 else None

    def record(self, value: float) -> None:
        if not 0.0 <= value <= 1.0:
            raise ValueError(f"backpropagated value {value} outside [0, 1]")
        self.visits += 1
        self.total_value += value


@dataclass
class EdgeRecord:
    action: PlotAction
    child_id: int
    stats: EdgeStats = field(default_factory=EdgeStats)


class FinalValues(NamedTuple):
    v_max: float
    v_min: float
    best_id: int
    worst_id: int


class SearchTree:
    """Forest of story states with per-edge visit statistics.

    Edges are keyed by (parent id, action text); a parent therefore
    cannot carry the same action text twice, and callers deduplicate
    proposals before adding children.
    """

    def __init__(self, config: Optional[StoryConfig] = None):
        self.config = config or StoryConfig()
        self.nodes: dict[int, StoryState] = {}
        self.edges: dict[tuple[int, str], EdgeRecord] = {}
        self.roots: list[int] = []
        self.evaluation_log: list[tuple[int, float]] = []
        self.sterile: set[int] = set()
        self._children: dict[int, list[int]] = {}
        self._parent: dict[int, tuple[int, str]] = {}
        self._next_id = 0

    # -- construction -------------------------------------------------

    def add_root(
        self,
        bullets: Sequence[str] = (),
        cot_history: Sequence[str] = (),
        premise: str = "",
    ) -> int:
        """Add a root state; normally empty, but a partial outline is allowed."""
        depth = len(cot_history)
        if len(bullets) != depth * self.config.bullets_per_step:
            raise ValueError("root bullets inconsistent with cot_history length")
        if depth > self.config.max_depth:
            raise ValueError("root deeper than max_depth")
        node = StoryState(
            id=self._next_id,
            bullets=tuple(bullets),
            cot_history=tuple(cot_history),
            depth=depth,
            premise=premise,
        )
        self._next_id += 1
        self.nodes[node.id] = node
        self.roots.append(node.id)
        self._children[node.id] = []
        return node.id

    def add_child(self, parent_id: int, action: PlotAction, bullets: Sequence[str]) -> int:
        """Append one plot step below ``parent_id`` and return the new node id."""
        if parent_id not in self.nodes:
            raise KeyError(f"unknown parent id {parent_id}")
        parent = self.nodes[parent_id]
        if parent.depth >= self.config.max_depth:
            raise ValueError(f"depth overflow: parent {parent_id} is already at max_depth")
        if len(bullets) != self.config.bullets_per_step:
            raise ValueError(
                f"expected {self.config.bullets_per_step} bullets, got {len(bullets)}"
            )
        key = (parent_id, action.text)
        if key in self.edges:
            raise ValueError(f"duplicate action at parent {parent_id}: {action.text!r}")
        child = StoryState(
            id=self._next_id,
            bullets=parent.bullets + tuple(bullets),
            cot_history=parent.cot_history + (action.text,),
            depth=parent.depth + 1,
        )
        self._next_id += 1
        self.nodes[child.id] = child
        self.edges[key] = EdgeRecord(action=action, child_id=child.id)
        self._children[parent_id].append(child.id)
        self._children[child.id] = []
        self._parent[child.id] = key
        return child.id

    # -- structure queries --------------------------------------------

    def children(self, parent_id: int) -> list[tuple[PlotAction, int, EdgeStats]]:
        """Outgoing edges of a node in child-id order."""
        out = []
        for child_id in self._children.get(parent_id, []):
            key = self._parent[child_id]
            rec = self.edges[key]
            out.append((rec.action, rec.child_id, rec.stats))
        return out

    def parent_edge(self, child_id: int) -> Optional[EdgeRecord]:
        key = self._parent.get(child_id)
        return self.edges[key] if key is not None else None

    def path_from_root(self, node_id: int) -> list[int]:
        """Node ids from the root down to ``node_id`` inclusive."""
        if node_id not in self.nodes:
            raise KeyError(f"unknown node id {node_id}")
        path = [node_id]
        while path[-1] in self._parent:
            path.append(self._parent[path[-1]][0])
        path.reverse()
        return path

    def subtree_ids(self, node_id: int) -> Iterator[int]:
        """All ids in the subtree rooted at ``node_id`` (preorder)."""
        stack = [node_id]
        while stack:
            nid = stack.pop()
            yield nid
            stack.extend(reversed(self._children.get(nid, [])))

    def mark_sterile(self, node_id: int) -> None:
        if node_id not in self.nodes:
            raise KeyError(f"unknown node id {node_id}")
        self.sterile.add(node_id)

    def root_premise(self, node_id: int) -> str:
        """Premise of the root above ``node_id`` (its own, for a root)."""
        return self.nodes[self.path_from_root(node_id)[0]].premise

    # -- evaluation ---------------------------------------------------

    def record_evaluation(self, node_id: int, value: float) -> None:
        """Store a value-model score and log it in evaluation order."""
        if node_id not in self.nodes:
            raise KeyError(f"unknown node id {node_id}")
        if not 0.0 <= value <= 1.0:
            raise ValueError(f"evaluated value {value} outside [0, 1]")
        node = self.nodes[node_id]
        if node.evaluated_value is not None:
            raise ValueError(f"node {node_id} already evaluated")
        node.evaluated_value = value
        self.evaluation_log.append((node_id, value))

    def final_values(self) -> FinalValues:
        """Extremes of evaluated_value over full-depth nodes, lowest id on ties."""
        finals = [
            (n.evaluated_value, n.id)
            for n in self.nodes.values()
            if n.depth == self.config.max_depth and n.evaluated_value is not None
        ]
        if not finals:
            raise ValueError("no final-depth evaluation")
        v_max, best = max(finals, key=lambda t: (t[0], -t[1]))
        v_min, worst = min(finals)
        return FinalValues(v_max=v_max, v_min=v_min, best_id=best, worst_id=worst)

    # -- serialization ------------------------------------------------

    def to_json(self) -> dict:
        nodes = [
            {
                "id": n.id,
                "bullets": list(n.bullets),
                "cot_history": list(n.cot_history),
                "depth": n.depth,
                "evaluated_value": n.evaluated_value,
                "premise": n.premise,
            }
            for n in sorted(self.nodes.values(), key=lambda n: n.id)
        ]
        edges = [
            {
                "parent": parent_id,
                "action": rec.action.text,
                "source_policy": rec.action.source_policy,
                "child": rec.child_id,
                "visits": rec.stats.visits,
                "total_value": rec.stats.total_value,
                "mean_value": rec.stats.mean_value,
            }
            for (parent_id, _), rec in sorted(self.edges.items())
        ]
        return {
            "schema_version": JSON_SCHEMA_VERSION,
            "config": {
                "total_bullets": self.config.total_bullets,
                "bullets_per_step": self.config.bullets_per_step,
                "max_depth": self.config.max_depth,
            },
            "roots": list(self.roots),
            "nodes": nodes,
            "edges": edges,
            "evaluation_log": [[nid, v] for nid, v in self.evaluation_log],
            "sterile": sorted(self.sterile),
        }

    def to_json_str(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_json(cls, doc: dict) -> "SearchTree":
        if doc.get("schema_version") != JSON_SCHEMA_VERSION:
            raise ValueError(f"unsupported schema_version {doc.get('schema_version')!r}")
        cfg = StoryConfig(**doc["config"])
        tree = cls(cfg)
        roots = set(doc["roots"])
        for rec in sorted(doc["nodes"], key=lambda r: r["id"]):
            node = StoryState(
                id=rec["id"],
                bullets=tuple(rec["bullets"]),
                cot_history=tuple(rec["cot_history"]),
                depth=rec["depth"],
                evaluated_value=rec["evaluated_value"],
                premise=rec.get("premise", ""),
            )
            tree.nodes[node.id] = node
            tree._children[node.id] = []
            if node.id in roots:
                tree.roots.append(node.id)
        for rec in doc["edges"]:
            key = (rec["parent"], rec["action"])
            tree.edges[key] = EdgeRecord(
                action=PlotAction(text=rec["action"], source_policy=rec["source_policy"]),
                child_id=rec["child"],
                stats=EdgeStats(visits=rec["visits"], total_value=rec["total_value"]),
            )
            tree._children[rec["parent"]].append(rec["child"])
            tree._parent[rec["child"]] = key
        for children in tree._children.values():
            children.sort()
        tree.evaluation_log = [(nid, v) for nid, v in doc["evaluation_log"]]
        tree.sterile = set(doc["sterile"])
        tree._next_id = max(tree.nodes, default=-1) + 1
        return tree

    def to_dot(self) -> str:
        """GraphViz rendering: nodes colored by incoming-edge mean value,
        the path to the best completed story drawn bold."""
        best_path: set[tuple[int, int]] = set()
        try:
            finals = self.final_values()
            path = self.path_from_root(finals.best_id)
            best_path = set(zip(path, path[1:]))
        except ValueError:
            pass
        lines = [
            "digraph plot_search {",
            "  rankdir=LR;",
            '  node [shape=box, style=filled, fontname="sans-serif"];',
        ]
        for node in sorted(self.nodes.values(), key=lambda n: n.id):
            edge = self.parent_edge(node.id)
            mean = edge.stats.mean_value if edge is not None else None
            label = f"n{node.id} d{node.depth}"
            if node.evaluated_value is not None:
                label += f"\\nV={node.evaluated_value:.3f}"
            lines.append(
                f'  {node.id} [label="{label}", fillcolor="{_value_color(mean)}"];'
            )
        for (parent_id, _), rec in sorted(self.edges.items()):
            attrs = [f'label="N={rec.stats.visits}"']
            if (parent_id, rec.child_id) in best_path:
                attrs.append("penwidth=3")
                attrs.append('color="#1a9850"')
            lines.append(f"  {parent_id} -> {rec.child_id} [{', '.join(attrs)}];")
        lines.append("}")
        return "\n".join(lines) + "\n"

    # -- comparison ---------------------------------------------------

    def __eq__(self, other) -> bool:
        if not isinstance(other, SearchTree):
            return NotImplemented
        return (
            self.config == other.config
            and self.nodes == other.nodes
            and self.edges == other.edges
            and self.roots == other.roots
            and self.evaluation_log == other.evaluation_log
            and self.sterile == other.sterile
        )


# Value-bucket fill colors, low to high; unvisited nodes stay gray.
_BUCKET_COLORS = ("#d73027", "#fc8d59", "#fee08b", "#91cf60", "#1a9850")


def _value_color(mean_value: Optional[float]) -> str:
    if mean_value is None:
        return "#cccccc"
    bucket = min(int(mean_value * 5), 4)
    return _BUCKET_COLORS[bucket]


def completion_fraction(node: StoryState, cfg: StoryConfig) -> float:
    """How much of the outline budget this state has used: depth / max_depth."""
    return node.depth / cfg.max_depth


def export_tree(tree: SearchTree, format: str = "json") -> str:
    """Serialize a tree to a text document, either JSON or GraphViz DOT."""
    if format == "json":
        return tree.to_json_str()
    if format == "dot":
        return tree.to_dot()
    raise ValueError(f"unsupported export format {format!r}")
