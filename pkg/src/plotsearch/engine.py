"""Best-first plot search: select, expand, simulate, evaluate, backpropagate.

Each iteration selects a frontier of promising nodes, asks the policy
backends for new plot directions at each one, realizes those directions
into outline bullets through the simulator, scores every new state deep
enough to judge, and pushes the scores back up the tree as running edge
means.  Everything that touches a backend runs concurrently across the
frontier; every tree mutation happens on the coordinator thread between
waves, so a finished tree is a pure function of (inputs, backend seeds).
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Mapping, Optional, Sequence

import numpy as np

from .backends import BackendError, make_backend
from .prompts import parse_bullets, policy_prompt, simulator_prompt
from .tree import (
    EdgeStats,
    PlotAction,
    SearchTree,
    StoryConfig,
    StoryState,
    completion_fraction,
)

# Backend calls issued per wave never exceed this many threads.
_MAX_WORKERS = 8


class SearchExhausted(Exception):
    """No expandable node remains anywhere in the tree."""


@dataclass(frozen=True)
class SearchConfig:
    """Knobs of the search loop.

    ``expansion_schedule`` maps an iteration number to how many plot
    directions each selected node requests that iteration; iterations
    beyond the mapped ones fall back to ``default_expansion``.  The
    front-loaded default (many at first, few later) spends the budget
    where branching matters most.  ``beam_percentile`` and
    ``beam_value_picks`` control the two beam-style additions to the
    frontier; ``unvisited_prior`` is the value a claimed-but-unvisited
    edge is assumed to carry while one selection round fans out.
    """

    max_iterations: int = 100
    exploration: float = 1.414
    expansion_schedule: tuple = ((1, 300), (2, 8))
    default_expansion: int = 2
    frontier_cap: int = 100
    evaluation_threshold: float = 0.5
    beam_percentile: float = 0.9
    beam_value_picks: int = 3
    mix_ratio: float = 0.5
    unvisited_prior: float = 0.5

    def __post_init__(self):
        if isinstance(self.expansion_schedule, Mapping):
            normalized = tuple(sorted(
                (int(k), int(v)) for k, v in self.expansion_schedule.items()
            ))
            object.__setattr__(self, "expansion_schedule", normalized)
        else:
            object.__setattr__(
                self, "expansion_schedule",
                tuple((int(k), int(v)) for k, v in self.expansion_schedule),
            )
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be positive")
        if self.exploration < 0:
            raise ValueError("exploration constant must be non-negative")
        if any(v < 1 for _, v in self.expansion_schedule) or self.default_expansion < 1:
            raise ValueError("expansion counts must be >= 1")
        if not 0.0 < self.evaluation_threshold <= 1.0:
            raise ValueError("evaluation_threshold must lie in (0, 1]")
        if self.frontier_cap < 1:
            raise ValueError("frontier_cap must be >= 1")
        if not 0.0 <= self.beam_percentile <= 1.0:
            raise ValueError("beam_percentile must lie in [0, 1]")
        if self.beam_value_picks < 0:
            raise ValueError("beam_value_picks must be >= 0")
        if not 0.0 <= self.mix_ratio <= 1.0:
            raise ValueError("mix_ratio must lie in [0, 1]")
        if not 0.0 <= self.unvisited_prior <= 1.0:
            raise ValueError("unvisited_prior must lie in [0, 1]")

    def kappa(self, iteration: int) -> int:
        """Plot directions requested per selected node at this iteration."""
        for k, count in self.expansion_schedule:
            if k == iteration:
                return count
        return self.default_expansion


@dataclass(frozen=True)
class IterationReport:
    """One row of the per-iteration progress log."""

    iteration: int
    frontier_size: int
    kappa: int
    actions_requested: int
    nodes_expanded: int
    evaluations: int
    failures: int
    v_max_final: Optional[float]
    wall_time: float

    def to_dict(self) -> dict:
        return {
            "iteration": self.iteration,
            "frontier_size": self.frontier_size,
            "kappa": self.kappa,
            "actions_requested": self.actions_requested,
            "nodes_expanded": self.nodes_expanded,
            "evaluations": self.evaluations,
            "failures": self.failures,
            "v_max_final": self.v_max_final,
            "wall_time": self.wall_time,
        }


def ucb_score(stats: EdgeStats, parent_visits: int, exploration: float) -> float:
    """Mean value plus the visit-count exploration bonus.

    Unvisited edges return +inf so they are always tried before any
    visited sibling.  ``parent_visits`` is clamped to >= 1.
    """
    if stats.visits == 0:
        return math.inf
    n_parent = max(parent_visits, 1)
    return stats.mean_value + exploration * math.sqrt(
        math.log(n_parent) / stats.visits
    )


def parent_visit_count(tree: SearchTree, node_id: int) -> int:
    """Visit count of a node: its incoming edge's visits, or for a root
    the sum over its child edges; never less than 1."""
    edge = tree.parent_edge(node_id)
    if edge is not None:
        return max(edge.stats.visits, 1)
    total = sum(stats.visits for _, _, stats in tree.children(node_id))
    return max(total, 1)


def expandable(tree: SearchTree, node_id: int) -> bool:
    node = tree.nodes[node_id]
    return node.depth < tree.config.max_depth and node_id not in tree.sterile


def subtree_best_value(tree: SearchTree, node_id: int) -> Optional[float]:
    """Highest evaluated value in the subtree rooted here, if any."""
    best = None
    for nid in tree.subtree_ids(node_id):
        v = tree.nodes[nid].evaluated_value
        if v is not None and (best is None or v > best):
            best = v
    return best


def select_frontier(tree: SearchTree, cfg: SearchConfig) -> list[int]:
    """Pick the nodes to expand this iteration.

    The frontier is the deduplicated union of three routes, at most
    ``frontier_cap`` nodes, assembled by this exact rule (the test suite
    holds an independent reimplementation of it):

    1. Peak subtrees.  Among expandable nodes with an evaluated state
       anywhere in their subtree, the ``beam_value_picks`` highest by
       that subtree maximum, ties to the highest id.  Every ancestor of
       a peak ties with it, and ids grow along any root path, so the
       tie rule extends the peak node itself instead of re-treading its
       ancestors.
    2. High-value revisits.  Expandable nodes whose incoming edge has
       at least one visit and whose edge mean is at or above the
       ``beam_percentile`` quantile of all such means, highest mean
       first, ties to the lowest id, filling at most the room the cap
       leaves.
    3. Greedy descent fill.  With the remaining room as walk budget:
       starting from each root in round-robin order, walk down by
       argmax edge score (ties to the lowest child id) until reaching a
       childless node; that node joins the frontier if expandable and
       not already picked.  Edge scores are ``ucb_score`` over
       *effective* stats: each edge already walked this round carries
       extra virtual visits, each worth ``unvisited_prior``, so
       successive walks fan out instead of re-treading one path.
       Parent visit counts use ``parent_visit_count`` plus the matching
       virtual visits (the incoming edge's for a child, the summed
       child edges' for a root).  After every walk each walked edge
       gains one virtual visit.  Walks stop when the budget is spent or
       a walk lands where an earlier walk this round already landed.

    Raises SearchExhausted when no node in the tree is expandable.
    """
    if not any(expandable(tree, nid) for nid in tree.nodes):
        raise SearchExhausted("no expandable node remains")

    frontier: list[int] = []
    claimed: set[int] = set()

    # Route 1: expandable nodes over the best-evaluated subtrees.
    peaks = []
    for nid in sorted(tree.nodes):
        if not expandable(tree, nid):
            continue
        best = subtree_best_value(tree, nid)
        if best is not None:
            peaks.append((best, nid))
    peaks.sort(key=lambda t: (-t[0], -t[1]))
    for _, nid in peaks[: cfg.beam_value_picks]:
        if len(frontier) >= cfg.frontier_cap:
            break
        claimed.add(nid)
        frontier.append(nid)

    # Route 2: expandable nodes in the top slice by incoming edge mean.
    scored = []
    for nid in sorted(tree.nodes):
        if not expandable(tree, nid):
            continue
        edge = tree.parent_edge(nid)
        if edge is not None and edge.stats.visits > 0:
            scored.append((edge.stats.mean_value, nid))
    if scored:
        cutoff = float(np.quantile([q for q, _ in scored], cfg.beam_percentile))
        for q, nid in sorted(scored, key=lambda t: (-t[0], t[1])):
            if len(frontier) >= cfg.frontier_cap:
                break
            if q >= cutoff and nid not in claimed:
                claimed.add(nid)
                frontier.append(nid)

    # Route 3: greedy descents with per-round virtual visits.
    virtual: dict[tuple[int, str], int] = {}
    landed: set[int] = set()
    budget = cfg.frontier_cap - len(frontier)
    for step in range(budget):
        root = tree.roots[step % len(tree.roots)]
        node_id = root
        path_keys: list[tuple[int, str]] = []
        while tree._children.get(node_id):
            incoming = tree._parent.get(node_id)
            n_parent = parent_visit_count(tree, node_id)
            if incoming is not None:
                n_parent += virtual.get(incoming, 0)
            else:
                n_parent += sum(
                    virtual.get((node_id, a.text), 0)
                    for a, _, _ in tree.children(node_id)
                )
            best_key, best_child, best_score = None, None, -math.inf
            for action, child_id, stats in tree.children(node_id):
                key = (node_id, action.text)
                extra = virtual.get(key, 0)
                eff = EdgeStats(
                    visits=stats.visits + extra,
                    total_value=stats.total_value + extra * cfg.unvisited_prior,
                )
                score = ucb_score(eff, n_parent, cfg.exploration)
                if score > best_score:
                    best_key, best_child, best_score = key, child_id, score
            path_keys.append(best_key)
            node_id = best_child
        for key in path_keys:
            virtual[key] = virtual.get(key, 0) + 1
        if node_id in landed:
            break
        landed.add(node_id)
        if expandable(tree, node_id) and node_id not in claimed:
            claimed.add(node_id)
            frontier.append(node_id)

    return frontier


def evaluation_gate(
    node: StoryState, cfg: SearchConfig, story_config: Optional[StoryConfig] = None
) -> bool:
    """Deep enough to judge: completion fraction at or past the threshold."""
    story_config = story_config or StoryConfig()
    return completion_fraction(node, story_config) >= cfg.evaluation_threshold


def backpropagate(tree: SearchTree, node_id: int, value: float) -> None:
    """Record an evaluation and fold it into every edge up to the root."""
    tree.record_evaluation(node_id, value)
    path = tree.path_from_root(node_id)
    for child_id in path[1:]:
        tree.edges[tree._parent[child_id]].stats.record(value)


def replay_evaluation_log(tree: SearchTree) -> dict[tuple[int, str], tuple[int, float]]:
    """Edge stats implied by the evaluation log alone: key -> (N, W).

    Replays every logged (node, value) through fresh counters; a healthy
    tree's live stats must match this exactly.
    """
    stats: dict[tuple[int, str], tuple[int, float]] = {}
    for node_id, value in tree.evaluation_log:
        for child_id in tree.path_from_root(node_id)[1:]:
            key = tree._parent[child_id]
            n, w = stats.get(key, (0, 0.0))
            stats[key] = (n + 1, w + value)
    return stats


# -- expansion ---------------------------------------------------------


def _policy_slots(kappa: int, mix_ratio: float, has_trained: bool) -> list[str]:
    """Assign each of the kappa request slots to a source policy.

    With a trained policy present, slots alternate so that the trained
    share tracks ``mix_ratio`` exactly (largest-remainder walk, no
    sampling): ratio 0.5 with kappa 8 gives 4 and 4.
    """
    if not has_trained or mix_ratio == 0.0:
        return ["base"] * kappa
    slots = []
    for i in range(kappa):
        take = math.floor((i + 1) * mix_ratio) - math.floor(i * mix_ratio)
        slots.append("trained" if take else "base")
    return slots


@dataclass
class _WaveResult:
    """What one node's concurrent expansion produced."""

    node_id: int
    proposals: list  # (action_text, source_policy, bullets tuple)
    requested: int
    failures: int
    first_error: Optional[BackendError] = None


def _expand_node(
    tree: SearchTree,
    node_id: int,
    kappa: int,
    cfg: SearchConfig,
    policies: dict,
    simulator,
) -> _WaveResult:
    """Backend side of one node's expansion; reads the tree, never writes.

    Requests kappa plot directions split across the configured policies,
    deduplicates them against each other and against existing children,
    and simulates each survivor into a bullet block.  Failed calls are
    counted, not raised: the wave proceeds with whatever succeeded.
    """
    node = tree.nodes[node_id]
    premise = tree.root_premise(node_id)
    prompt = policy_prompt(premise, node.bullets, node.cot_history)
    slots = _policy_slots(kappa, cfg.mix_ratio, "trained" in policies)
    failures = 0
    first_error: Optional[BackendError] = None

    drawn: dict[str, list[str]] = {}
    for source in ("base", "trained"):
        want = slots.count(source)
        if want == 0:
            continue
        try:
            drawn[source] = policies[source].complete(prompt, n=want)
        except BackendError as exc:
            drawn[source] = []
            failures += want
            first_error = first_error or exc

    proposals = []
    seen: set[str] = set()
    cursors = {"base": 0, "trained": 0}
    for source in slots:
        texts = drawn.get(source, [])
        i = cursors[source]
        if i >= len(texts):
            continue
        cursors[source] = i + 1
        text = texts[i].strip()
        if not text or text in seen or (node_id, text) in tree.edges:
            continue
        seen.add(text)
        sim = simulator_prompt(
            premise, node.bullets, text, tree.config.bullets_per_step
        )
        try:
            reply = simulator.complete(sim, n=1)[0]
        except BackendError as exc:
            failures += 1
            first_error = first_error or exc
            continue
        bullets = parse_bullets(reply)[: tree.config.bullets_per_step]
        if len(bullets) < tree.config.bullets_per_step:
            failures += 1
            continue
        proposals.append((text, source, tuple(bullets)))

    return _WaveResult(node_id, proposals, len(slots), failures, first_error)


def _apply_wave(tree: SearchTree, result: _WaveResult) -> list[int]:
    """Coordinator side: append the wave's children, or mark the node
    sterile when nothing usable came back."""
    new_ids = []
    for text, source, bullets in result.proposals:
        if (result.node_id, text) in tree.edges:
            continue
        action = PlotAction(text=text, source_policy=source)
        new_ids.append(tree.add_child(result.node_id, action, bullets))
    if not new_ids:
        tree.mark_sterile(result.node_id)
    return new_ids


def expand(
    tree: SearchTree,
    node_id: int,
    iteration: int,
    cfg: SearchConfig,
    backends: Mapping[str, object],
) -> list[int]:
    """Expand one node synchronously; returns the new child ids."""
    node = tree.nodes[node_id]
    if node.depth >= tree.config.max_depth:
        raise ValueError(f"node {node_id} is already at max depth")
    policies, simulator = _resolve_backends(backends)
    result = _expand_node(
        tree, node_id, cfg.kappa(iteration), cfg, policies, simulator
    )
    return _apply_wave(tree, result)


def _resolve_backends(backends: Mapping[str, object]):
    """Accept either backend objects or BackendConfigs, keyed by role."""

    def resolve(entry):
        return entry if hasattr(entry, "complete") else make_backend(entry)

    policies = {"base": resolve(backends["policy_base"])}
    if backends.get("policy_trained") is not None:
        policies["trained"] = resolve(backends["policy_trained"])
    return policies, resolve(backends["simulator"])


# -- evaluation --------------------------------------------------------


Evaluator = Callable[[StoryState, float], float]


class ValueModelEvaluator:
    """Adapts a fitted value model plus scoring backends to the search.

    Callable as (state, completion fraction) -> probability of "good".
    Immutable once built, so concurrent evaluation waves share it safely.
    """

    def __init__(self, model, scorer, embedder, curiosity=None):
        from .value.features import extract_features  # local: avoids cycle
        from .value.pipeline import predict_value

        self._extract = extract_features
        self._predict = predict_value
        self.model = model
        self.scorer = scorer if hasattr(scorer, "score_tokens") else make_backend(scorer)
        self.embedder = embedder if hasattr(embedder, "embed") else make_backend(embedder)
        self.curiosity = curiosity

    def __call__(self, state: StoryState, completion: float) -> float:
        fv = self._extract(
            state.bullets,
            self.scorer,
            self.embedder,
            cfg=self.curiosity,
            completion=completion,
        )
        return self._predict(self.model, fv)


# -- the search loop ---------------------------------------------------


def run_search(
    premises: Sequence[str],
    cfg: SearchConfig,
    backends: Mapping[str, object],
    evaluator: Evaluator,
    story_config: Optional[StoryConfig] = None,
) -> tuple[SearchTree, list[IterationReport]]:
    """Grow a search tree from the given premises.

    Per iteration: select a frontier, expand and simulate every frontier
    node concurrently, evaluate each new deep-enough state concurrently,
    then apply all tree mutations serially in a fixed order (frontier
    order for children, node-id order for backpropagation).  Stops early
    once the tree is exhausted; raises only if it is exhausted before
    the first iteration completes or a whole wave fails with no
    successful backend call.
    """
    if not premises:
        raise ValueError("at least one premise is required")
    policies, simulator = _resolve_backends(backends)
    tree = SearchTree(story_config)
    for premise in premises:
        tree.add_root(premise=premise)

    reports: list[IterationReport] = []
    for iteration in range(1, cfg.max_iterations + 1):
        started = time.perf_counter()
        try:
            frontier = select_frontier(tree, cfg)
        except SearchExhausted:
            if not reports:
                raise
            break
        if not frontier:
            # Expandable nodes exist but none is reachable by any route
            # this round (all descents dead-ended); nothing left to do.
            break
        kappa = cfg.kappa(iteration)

        with ThreadPoolExecutor(max_workers=min(len(frontier), _MAX_WORKERS)) as pool:
            waves = list(pool.map(
                lambda nid: _expand_node(tree, nid, kappa, cfg, policies, simulator),
                frontier,
            ))

        new_ids: list[int] = []
        failures = 0
        for wave in waves:
            new_ids.extend(_apply_wave(tree, wave))
            failures += wave.failures
        if failures and not any(wave.proposals for wave in waves):
            # A fully failed wave means the services are down, not flaky;
            # surface the original transport-level error.
            for wave in waves:
                if wave.first_error is not None:
                    raise wave.first_error
            raise BackendError(f"iteration {iteration}: no usable expansion")

        gated = sorted(
            nid for nid in new_ids
            if evaluation_gate(tree.nodes[nid], cfg, tree.config)
        )
        if gated:
            with ThreadPoolExecutor(max_workers=min(len(gated), _MAX_WORKERS)) as pool:
                values = list(pool.map(
                    lambda nid: evaluator(
                        tree.nodes[nid],
                        completion_fraction(tree.nodes[nid], tree.config),
                    ),
                    gated,
                ))
            for nid, value in zip(gated, values):
                backpropagate(tree, nid, value)

        try:
            v_max = tree.final_values().v_max
        except ValueError:
            v_max = None
        reports.append(IterationReport(
            iteration=iteration,
            frontier_size=len(frontier),
            kappa=kappa,
            actions_requested=kappa * len(frontier),
            nodes_expanded=len(new_ids),
            evaluations=len(gated),
            failures=failures,
            v_max_final=v_max,
            wall_time=time.perf_counter() - started,
        ))
    return tree, reports
