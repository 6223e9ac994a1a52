"""Belief-support safety shield computed by backward induction.

Safety here is a reach-avoid property over belief supports rather than
beliefs: whatever the observation sequence turns out to be, the support of
the belief must stay clear of the per-lookahead unsafe state sets derived
from the agent predictions and their conformal radii. The pipeline per
planning step:

1. enumerate the belief supports reachable from the current support within
   the prediction horizon (a small transition system over supports),
2. mark states whose distance margin to any predicted agent falls below
   the scaled conformal radius as unsafe, per lookahead,
3. sweep backward over the horizon to find the winning supports, those
   from which some action keeps every observation outcome winning,
4. answer, for any support and depth, which actions are certified safe.

Supports are canonical frozensets of state indices; all structures built
here are immutable once constructed and safe to share.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidSpec, UnknownSupport


def validate_support(model, states):
    """Canonicalize a support and check members share a possible observation."""
    sup = frozenset(int(s) for s in states)
    if not sup:
        raise InvalidSpec("belief support must be nonempty")
    common = None
    for s in sup:
        if not (0 <= s < model.n_states):
            raise InvalidSpec(f"state {s} outside the model")
        obs = model.obs_support[s]
        common = obs if common is None else common & obs
    if not common:
        raise InvalidSpec(
            f"support {sorted(sup)} members share no common observation")
    return sup


class Bsts:
    """Reachable belief supports within the horizon, layered by depth.

    ``levels[q]`` holds the supports reachable in exactly q steps from the
    root; ``post(sup, q, a)`` the observation-grouped successor supports.
    With deterministic observations the successor supports partition the
    one-step successor union; with noisy observations a successor state can
    appear under every observation it may emit, so the groups form a cover.
    Either way each group is exactly the support the belief update would
    produce under that observation.
    """

    def __init__(self, model, root, horizon):
        if horizon < 1:
            raise InvalidSpec(f"horizon must be >= 1, got {horizon}")
        self.model = model
        self.horizon = horizon
        self.root = validate_support(model, root)
        self.levels = {0: {self.root}}
        self._post = {}
        for q in range(horizon):
            nxt = set()
            for sup in self.levels[q]:
                for a in range(model.n_actions):
                    grouped = {}
                    union = set()
                    for s in sup:
                        union.update(model.successors(s, a))
                    for s2 in union:
                        # group by the observations possible under THIS
                        # action; Z may be action-dependent
                        for o in model.observation_support(s2, a):
                            grouped.setdefault(o, set()).add(s2)
                    by_obs = {o: frozenset(ss) for o, ss in grouped.items()}
                    self._post[(sup, q, a)] = by_obs
                    nxt.update(by_obs.values())
            self.levels[q + 1] = nxt

    def has_node(self, support, q):
        return 0 <= q <= self.horizon and support in self.levels[q]

    def post_by_obs(self, support, q, a):
        """dict observation -> successor support for one (node, action)."""
        try:
            return self._post[(support, q, a)]
        except KeyError:
            raise UnknownSupport(
                f"({sorted(support)}, {q}) is not an expanded node") from None

    def post(self, support, q, a):
        """Set of successor supports of (support, q) under action a."""
        return frozenset(self.post_by_obs(support, q, a).values())

    def node_count(self):
        return sum(len(sups) for sups in self.levels.values())


def reachable_supports(model, root, horizon):
    """Enumerate the belief-support transition system to the given depth."""
    return Bsts(model, root, horizon)


def constraint_values(positions, agent_positions, epsilon, mode="center"):
    """Distance margin of every state to the closest predicted agent.

    positions: (n_states, 2), NaN rows for states without a location (those
    get +inf: nothing spatial can collide with them). agent_positions:
    (N, 2). Returns min_i dist(state, agent_i) - epsilon, with the min over
    zero agents +inf. mode 'center' measures to the state's center point;
    'cell' to the nearest point of its unit square (a conservative variant
    that only enlarges the unsafe sets).
    """
    pos = np.asarray(positions, dtype=float)
    agents = np.asarray(agent_positions, dtype=float).reshape(-1, 2)
    out = np.full(pos.shape[0], math.inf)
    if agents.shape[0] == 0:
        return out
    gap = np.abs(pos[:, None, :] - agents[None, :, :])
    if mode == "cell":
        gap = np.maximum(gap - 0.5, 0.0)
    elif mode != "center":
        raise InvalidSpec(f"unknown geometry mode {mode!r}")
    dists = np.sqrt((gap * gap).sum(axis=2)).min(axis=1)
    finite = np.isfinite(dists)
    out[finite] = dists[finite] - epsilon
    return out


@dataclass
class UnsafeSets:
    """Per-lookahead unsafe state sets and their constraint margins.

    f_sets[tau] holds the states whose margin to the lookahead-tau
    prediction is below lipschitz * radius(tau). Lookahead 0 is the already
    realized present and is always safe. margins[tau] keeps the raw
    constraint values for every state (used by the fallback action choice).
    """

    horizon: int
    f_sets: dict
    margins: dict
    thresholds: dict
    epsilon: float
    lipschitz: float

    def is_unsafe(self, support, q):
        if q < 1 or q > self.horizon:
            return False
        f = self.f_sets[q]
        return any(s in f for s in support)

    def psi(self, bsts):
        """BSTS nodes containing an unsafe state at their own depth."""
        return {(sup, q) for q, sups in bsts.levels.items()
                for sup in sups if self.is_unsafe(sup, q)}


def unsafe_sets(positions, predictions, regions, epsilon, lipschitz=1.0,
                mode="center"):
    """Build per-lookahead unsafe sets from predictions and their radii.

    For each lookahead tau, a state is unsafe when its distance margin to
    the predicted joint agent state (minimum over agents, minus epsilon)
    falls below lipschitz * radius(tau). An infinite radius during ACP
    warm-up therefore marks every located state unsafe, the conservative
    answer; states without a location (margin +inf) are never unsafe.
    """
    if predictions.horizon != regions.horizon:
        raise InvalidSpec(
            f"prediction horizon {predictions.horizon} != regions horizon "
            f"{regions.horizon}")
    if epsilon < 0.0:
        raise InvalidSpec(f"epsilon must be >= 0, got {epsilon}")
    if lipschitz <= 0.0:
        raise InvalidSpec(f"lipschitz constant must be > 0, got {lipschitz}")
    horizon = predictions.horizon
    f_sets, margins, thresholds = {}, {}, {}
    for tau in range(1, horizon + 1):
        vals = constraint_values(positions, predictions.at(tau).positions,
                                 epsilon, mode=mode)
        threshold = lipschitz * regions.radius(tau)
        f_sets[tau] = frozenset(np.flatnonzero(vals < threshold).tolist())
        margins[tau] = vals
        thresholds[tau] = threshold
    return UnsafeSets(horizon=horizon, f_sets=f_sets, margins=margins,
                      thresholds=thresholds, epsilon=epsilon, lipschitz=lipschitz)


def vacuous_unsafe_sets(horizon, n_states):
    """Unsafe sets with nothing unsafe (no agents or shielding disabled)."""
    inf_margin = np.full(n_states, math.inf)
    return UnsafeSets(horizon=horizon,
                      f_sets={tau: frozenset() for tau in range(1, horizon + 1)},
                      margins={tau: inf_margin for tau in range(1, horizon + 1)},
                      thresholds={tau: 0.0 for tau in range(1, horizon + 1)},
                      epsilon=0.0, lipschitz=1.0)


@dataclass
class WinningRegions:
    """Winning supports per lookahead 1..horizon, restricted to BSTS nodes."""

    horizon: int
    regions: dict                # tau -> frozenset of supports

    def winning(self, support, tau):
        if not (1 <= tau <= self.horizon):
            raise InvalidSpec(f"tau {tau} outside 1..{self.horizon}")
        return support in self.regions[tau]


def compute_winning_regions(bsts, unsafe):
    """Backward induction over the BSTS levels.

    Depth-H supports win by avoiding the depth-H unsafe states alone (no
    lookahead exists beyond the prediction horizon). Below that, a support
    wins when it is safe at its own depth and some action sends every
    observation outcome into the next level's winning set.
    """
    if unsafe.horizon != bsts.horizon:
        raise InvalidSpec(
            f"unsafe horizon {unsafe.horizon} != bsts horizon {bsts.horizon}")
    h = bsts.horizon
    regions = {h: frozenset(sup for sup in bsts.levels[h]
                            if not unsafe.is_unsafe(sup, h))}
    for tau in range(h - 1, 0, -1):
        above = regions[tau + 1]
        won = set()
        for sup in bsts.levels[tau]:
            if unsafe.is_unsafe(sup, tau):
                continue
            for a in range(bsts.model.n_actions):
                if all(child in above for child in bsts.post(sup, tau, a)):
                    won.add(sup)
                    break
        regions[tau] = frozenset(won)
    return WinningRegions(horizon=h, regions=regions)


def shield_actions(bsts, winning, support, tau):
    """Actions from (support, tau-1) whose every outcome lands in W^tau.

    May be empty: the caller decides what a deadlock means. Raises
    UnknownSupport when (support, tau-1) is not a BSTS node.
    """
    if not (1 <= tau <= bsts.horizon):
        raise InvalidSpec(f"tau {tau} outside 1..{bsts.horizon}")
    if not bsts.has_node(support, tau - 1):
        raise UnknownSupport(f"({sorted(support)}, {tau - 1}) is not a BSTS node")
    target = winning.regions[tau]
    return {a for a in range(bsts.model.n_actions)
            if all(child in target for child in bsts.post(support, tau - 1, a))}


def verify_winning_regions(bsts, unsafe, winning):
    """Independent certificate check of the two winning-region conditions.

    Walks every claimed winning support and re-derives, straight from the
    BSTS edges and unsafe sets, that (a) it contains no unsafe state at its
    depth and (b) below the horizon some action keeps all successors
    winning. Returns a list of violation descriptions, empty when the
    certificate holds.
    """
    problems = []
    for tau in range(1, bsts.horizon + 1):
        for sup in winning.regions[tau]:
            if sup not in bsts.levels[tau]:
                problems.append(f"tau={tau}: {sorted(sup)} is not a level node")
                continue
            bad = sup & unsafe.f_sets[tau]
            if bad:
                problems.append(
                    f"tau={tau}: {sorted(sup)} contains unsafe states {sorted(bad)}")
            if tau == bsts.horizon:
                continue
            if not any(all(child in winning.regions[tau + 1]
                           for child in bsts.post(sup, tau, a))
                       for a in range(bsts.model.n_actions)):
                problems.append(
                    f"tau={tau}: {sorted(sup)} has no all-winning action")
    return problems


class Shield:
    """Per-step shield: precomputed allowed actions for every BSTS node.

    ``allowed(support, depth)`` answers which actions are certified from a
    support sitting ``depth`` steps into the future (depth 0 is now).
    Depths at or beyond the horizon are unconstrained: the prediction
    regions say nothing about them.
    """

    def __init__(self, bsts, unsafe, winning):
        self.bsts = bsts
        self.unsafe = unsafe
        self.winning = winning
        self.horizon = bsts.horizon
        n_actions = bsts.model.n_actions
        self._allowed = {}
        for q in range(bsts.horizon):
            target = winning.regions[q + 1]
            for sup in bsts.levels[q]:
                acts = tuple(
                    a for a in range(n_actions)
                    if all(child in target for child in bsts.post(sup, q, a)))
                self._allowed[(sup, q)] = acts

    def allowed(self, support, depth):
        """Certified actions from (support, depth); all actions past horizon."""
        if depth >= self.horizon:
            return tuple(range(self.bsts.model.n_actions))
        try:
            return self._allowed[(support, depth)]
        except KeyError:
            raise UnknownSupport(
                f"({sorted(support)}, {depth}) is not a BSTS node") from None

    def successor(self, support, depth, action, obs):
        """Child support after (action, obs), or None if obs impossible."""
        return self.bsts.post_by_obs(support, depth, action).get(obs)


def build_shield(model, root_support, horizon, unsafe):
    """Convenience pipeline: BSTS, winning regions, shield, in one call."""
    bsts = Bsts(model, root_support, horizon)
    winning = compute_winning_regions(bsts, unsafe)
    return Shield(bsts, unsafe, winning)


def shield_snapshot(bsts, unsafe, winning):
    """JSON-ready diagnostic snapshot of one planning step's shield."""
    return {
        "horizon": bsts.horizon,
        "root": sorted(bsts.root),
        "levels": {str(q): sorted(sorted(sup) for sup in sups)
                   for q, sups in bsts.levels.items()},
        "unsafe": {str(tau): sorted(unsafe.f_sets[tau])
                   for tau in range(1, bsts.horizon + 1)},
        "thresholds": {str(tau): unsafe.thresholds[tau]
                       for tau in range(1, bsts.horizon + 1)},
        "winning": {str(tau): sorted(sorted(sup) for sup in winning.regions[tau])
                    for tau in range(1, bsts.horizon + 1)},
        "node_count": bsts.node_count(),
    }


def snapshot_json(bsts, unsafe, winning, indent=None):
    def default(obj):
        if isinstance(obj, float) and math.isinf(obj):
            return "inf"
        raise TypeError(f"not serializable: {obj!r}")
    snap = shield_snapshot(bsts, unsafe, winning)
    # json cannot carry inf literally; stringify thresholds
    snap["thresholds"] = {k: (v if math.isfinite(v) else "inf")
                          for k, v in snap["thresholds"].items()}
    return json.dumps(snap, indent=indent, default=default)
