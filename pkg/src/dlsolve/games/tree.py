"""Flat, immutable extensive-form game trees.

Every game in the library (benchmark games, depth-limited subgames, safety
gadgets) is materialized into a :class:`GameTree`: nodes are numbered in
breadth-first order and all per-node data lives in numpy arrays, so solvers
can sweep the tree level by level instead of recursing in Python.

Decision infosets own a contiguous slice of a flat "sequence" array; a
behavioral strategy for both players therefore fits in one float vector of
length ``tree.n_seqs``.
"""

from __future__ import annotations

import hashlib
from collections import deque
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Any, Protocol, Sequence

import numpy as np


class Player(IntEnum):
    P1 = 0
    P2 = 1
    CHANCE = 2


P1, P2, CHANCE = Player.P1, Player.P2, Player.CHANCE
TERMINAL = -1


class GameError(ValueError):
    """Raised for invalid descriptors or operations on the wrong kind of state."""


def opponent(player: int) -> int:
    return 1 - int(player)


class Rules(Protocol):
    """What a concrete game must provide to be materialized."""

    name: str
    big_blind: float

    def initial_state(self) -> Any: ...
    def actor(self, state) -> int: ...
    def legal_actions(self, state) -> list[str]: ...
    def chance_outcomes(self, state) -> list[tuple[str, float]]: ...
    def next_state(self, state, action: str) -> Any: ...
    def utility(self, state) -> float: ...
    def infoset_key(self, state, player: int) -> str: ...
    def public_key(self, state) -> str: ...
    def round_of(self, state) -> int: ...
    def pot(self, state) -> int: ...


def action_class(label: str) -> str | None:
    """Semantic class of an action label, used when biasing strategies."""
    if label == "f":
        return "fold"
    if label in ("c", "k", "p"):
        return "check_call"
    if label.startswith("b") or label.startswith("r") or label == "a":
        return "bet_raise"
    return None


@dataclass(frozen=True)
class Infoset:
    key: str
    player: int
    actions: tuple[str, ...]
    offset: int
    nodes: np.ndarray = field(repr=False, compare=False)

    @property
    def n_actions(self) -> int:
        return len(self.actions)

    @property
    def seqs(self) -> slice:
        return slice(self.offset, self.offset + len(self.actions))


class TreeBuilder:
    """Accumulates nodes in any order; :meth:`finalize` renumbers breadth-first."""

    def __init__(self):
        self.actor: list[int] = []
        self.parent: list[int] = []
        self.label: list[str] = []
        self.prob: list[float] = []
        self.utility: list[float] = []
        self.obs: list[tuple[str | None, str | None]] = []
        self.history: list[str] = []
        self.round: list[int] = []
        self.pot: list[float] = []
        self.public: list[str] = []
        self.children: list[list[int]] = []

    def add(self, *, actor, parent=-1, label="", prob=1.0, utility=0.0,
            obs=(None, None), history="", round=0, pot=0.0, public=""):
        idx = len(self.actor)
        self.actor.append(int(actor))
        self.parent.append(parent)
        self.label.append(label)
        self.prob.append(float(prob))
        self.utility.append(float(utility))
        self.obs.append(obs)
        self.history.append(history)
        self.round.append(int(round))
        self.pot.append(float(pot))
        self.public.append(public)
        self.children.append([])
        if parent >= 0:
            self.children[parent].append(idx)
        return idx

    def __len__(self):
        return len(self.actor)

    def finalize(self, name: str, big_blind: float = 1.0, meta: dict | None = None) -> "GameTree":
        order: list[int] = []
        queue = deque([0])
        while queue:
            n = queue.popleft()
            order.append(n)
            queue.extend(self.children[n])
        if len(order) != len(self.actor):
            raise GameError("builder contains nodes unreachable from the root")
        new_id = np.empty(len(order), dtype=np.int64)
        new_id[np.asarray(order)] = np.arange(len(order))
        return GameTree._from_builder(self, order, new_id, name, big_blind, meta or {})


class GameTree:
    """Immutable materialized game tree. Node 0 is the root.

    Per-node arrays: ``actor`` (0/1 players, 2 chance, -1 terminal),
    ``parent``, ``first_child``/``n_children`` (children are contiguous),
    ``depth``, ``chance_prob`` (edge probability for chance children),
    ``utility`` (payoff to P1 at terminals), ``node_infoset`` (decision infoset
    of the acting player), ``edge_seq`` (sequence index of the edge into a node
    whose parent is a player node), and ``obs`` (observation-key ids of both
    players, used for infoset membership of every non-terminal node).
    """

    @classmethod
    def _from_builder(cls, b: TreeBuilder, order, new_id, name, big_blind, meta):
        t = cls.__new__(cls)
        n = len(order)
        t.name = name
        t.big_blind = float(big_blind)
        t.meta = dict(meta)
        order_arr = np.asarray(order, dtype=np.int64)
        t.actor = np.asarray(b.actor, dtype=np.int8)[order_arr]
        par = np.asarray(b.parent, dtype=np.int64)[order_arr]
        t.parent = np.where(par >= 0, new_id[np.maximum(par, 0)], -1)
        t.chance_prob = np.ones(n)
        t.utility = np.asarray(b.utility, dtype=np.float64)[order_arr]
        t.round = np.asarray(b.round, dtype=np.int16)[order_arr]
        t.pot = np.asarray(b.pot, dtype=np.float64)[order_arr]
        t.history = [b.history[o] for o in order]
        t.edge_label = [b.label[o] for o in order]
        t.n_children = np.array([len(b.children[o]) for o in order], dtype=np.int64)
        t.first_child = np.full(n, -1, dtype=np.int64)
        t.action_index = np.zeros(n, dtype=np.int64)
        for i, o in enumerate(order):
            kids = b.children[o]
            if kids:
                t.first_child[i] = new_id[kids[0]]
                for j, k in enumerate(kids):
                    t.action_index[new_id[k]] = j
        depth = np.zeros(n, dtype=np.int64)
        for i in range(1, n):
            depth[i] = depth[t.parent[i]] + 1
        t.depth = depth

        # observation keys for both players
        t.obs_keys = ([], [])
        t._obs_index = ({}, {})
        obs = np.full((2, n), -1, dtype=np.int64)
        for i, o in enumerate(order):
            for p in (0, 1):
                key = b.obs[o][p]
                if key is None:
                    continue
                idx = t._obs_index[p].get(key)
                if idx is None:
                    idx = len(t.obs_keys[p])
                    t._obs_index[p][key] = idx
                    t.obs_keys[p].append(key)
                obs[p, i] = idx
        t.obs = obs

        pub_index: dict[str, int] = {}
        t.public_keys = []
        t.public_id = np.empty(n, dtype=np.int64)
        for i, o in enumerate(order):
            k = b.public[o]
            j = pub_index.get(k)
            if j is None:
                j = len(t.public_keys)
                pub_index[k] = j
                t.public_keys.append(k)
            t.public_id[i] = j

        # decision infosets, numbered by first appearance in BFS order
        infoset_of_key: dict[str, int] = {}
        members: list[list[int]] = []
        node_infoset = np.full(n, -1, dtype=np.int64)
        for i in range(n):
            a = t.actor[i]
            if a == P1 or a == P2:
                key = t.obs_keys[a][obs[a, i]]
                j = infoset_of_key.get(key)
                if j is None:
                    j = len(members)
                    infoset_of_key[key] = j
                    members.append([])
                members[j].append(i)
                node_infoset[i] = j
        t.node_infoset = node_infoset
        infosets = []
        offset = 0
        for j, nodes in enumerate(members):
            first = nodes[0]
            key = t.obs_keys[t.actor[first]][obs[t.actor[first], first]]
            fc, nc = t.first_child[first], t.n_children[first]
            actions = tuple(t.edge_label[fc:fc + nc])
            for m in nodes[1:]:
                if t.actor[m] != t.actor[first] or t.depth[m] != t.depth[first]:
                    raise GameError(f"infoset {key!r} mixes actors or depths")
                mc = t.first_child[m]
                if tuple(t.edge_label[mc:mc + t.n_children[m]]) != actions:
                    raise GameError(f"infoset {key!r} has inconsistent legal actions")
            infosets.append(Infoset(key, int(t.actor[first]), actions, offset,
                                    np.asarray(nodes, dtype=np.int64)))
            offset += len(actions)
        t.infosets = infosets
        t.infoset_index = infoset_of_key
        t.n_seqs = offset
        t.seq_infoset = np.empty(offset, dtype=np.int64)
        t.seq_player = np.empty(offset, dtype=np.int8)
        for j, I in enumerate(infosets):
            t.seq_infoset[I.seqs] = j
            t.seq_player[I.seqs] = I.player
        t.infoset_offsets = np.array([I.offset for I in infosets], dtype=np.int64)
        t.infoset_sizes = np.array([I.n_actions for I in infosets], dtype=np.int64)
        t.infoset_player = np.array([I.player for I in infosets], dtype=np.int8)
        t.infoset_rep = np.array([I.nodes[0] for I in infosets], dtype=np.int64)

        parent_actor = np.full(n, -2, dtype=np.int8)
        parent_actor[1:] = t.actor[t.parent[1:]]
        t.parent_actor = parent_actor
        edge_seq = np.full(n, -1, dtype=np.int64)
        player_child = np.nonzero((parent_actor == P1) | (parent_actor == P2))[0]
        edge_seq[player_child] = (t.infoset_offsets[node_infoset[t.parent[player_child]]]
                                  + t.action_index[player_child])
        t.edge_seq = edge_seq
        probs = np.asarray(b.prob, dtype=np.float64)[order_arr]
        chance_child = parent_actor == CHANCE
        t.chance_prob = np.where(chance_child, probs, 1.0)
        t._check_chance()
        t._build_levels()
        return t

    # -- construction helpers -------------------------------------------------

    def _check_chance(self):
        ch = np.nonzero(self.actor == CHANCE)[0]
        for c in ch:
            fc, nc = self.first_child[c], self.n_children[c]
            s = self.chance_prob[fc:fc + nc].sum()
            if abs(s - 1.0) > 1e-12:
                raise GameError(f"chance node {self.history[c]!r} sums to {s}")

    def _build_levels(self):
        d = self.depth
        self.max_depth = int(d.max())
        self.level_start = np.searchsorted(d, np.arange(self.max_depth + 2))
        self._levels = []
        for lv in range(self.max_depth + 1):
            lo, hi = self.level_start[lv], self.level_start[lv + 1]
            nodes = np.arange(lo, hi)
            internal = nodes[self.n_children[lo:hi] > 0]
            if len(internal):
                nxt = self.level_start[lv + 1]
                rel = self.first_child[internal] - nxt
            else:
                rel = np.zeros(0, dtype=np.int64)
            self._levels.append((lo, hi, internal, rel))

    # -- basic queries ----------------------------------------------------------

    @property
    def n_nodes(self) -> int:
        return len(self.actor)

    @property
    def n_infosets(self) -> int:
        return len(self.infosets)

    def is_terminal(self, node: int) -> bool:
        return self.actor[node] == TERMINAL

    def children(self, node: int) -> range:
        fc = self.first_child[node]
        return range(fc, fc + self.n_children[node]) if fc >= 0 else range(0)

    def child(self, node: int, action: str) -> int:
        for c in self.children(node):
            if self.edge_label[c] == action:
                return c
        raise GameError(f"action {action!r} not legal at {self.history[node]!r}")

    def legal_actions(self, node: int) -> list[str]:
        a = self.actor[node]
        if a == TERMINAL:
            raise GameError(f"terminal state {self.history[node]!r} has no actions")
        return [self.edge_label[c] for c in self.children(node)]

    def utility_of(self, node: int, player: int) -> float:
        if self.actor[node] != TERMINAL:
            raise GameError(f"state {self.history[node]!r} is not terminal")
        u = float(self.utility[node])
        return u if player == P1 else -u

    def chance_distribution(self, node: int) -> np.ndarray:
        if self.actor[node] != CHANCE:
            raise GameError(f"state {self.history[node]!r} is not a chance node")
        fc, nc = self.first_child[node], self.n_children[node]
        return self.chance_prob[fc:fc + nc].copy()

    def infoset_key(self, node: int, player: int) -> str:
        o = self.obs[int(player), node]
        if o < 0:
            raise GameError(f"terminal state {self.history[node]!r} has no infoset")
        return self.obs_keys[int(player)][o]

    def infoset(self, key: str) -> Infoset:
        try:
            return self.infosets[self.infoset_index[key]]
        except KeyError:
            raise KeyError(f"no decision infoset {key!r} in {self.name}") from None

    def nodes_with_obs(self, player: int, key: str) -> np.ndarray:
        o = self._obs_index[int(player)].get(key)
        if o is None:
            return np.zeros(0, dtype=np.int64)
        return np.nonzero(self.obs[int(player)] == o)[0]

    def node_by_history(self, history: str) -> int:
        if not hasattr(self, "_hist_index"):
            self._hist_index = {h: i for i, h in enumerate(self.history)}
        try:
            return self._hist_index[history]
        except KeyError:
            raise GameError(f"unknown history {history!r}") from None

    def player_infosets(self, player: int) -> list[Infoset]:
        return [I for I in self.infosets if I.player == player]

    def terminal_nodes(self) -> np.ndarray:
        return np.nonzero(self.actor == TERMINAL)[0]

    def descendants(self, nodes: Sequence[int]) -> np.ndarray:
        """All nodes in the subtrees below ``nodes`` (inclusive), BFS order."""
        mark = np.zeros(self.n_nodes, dtype=bool)
        mark[np.asarray(nodes, dtype=np.int64)] = True
        for lv in range(self.max_depth):
            lo, hi, internal, _ = self._levels[lv]
            nxt_lo, nxt_hi = self.level_start[lv + 1], self.level_start[lv + 2]
            if nxt_hi > nxt_lo:
                mark[nxt_lo:nxt_hi] |= mark[self.parent[nxt_lo:nxt_hi]]
        return np.nonzero(mark)[0]

    # -- strategy packing -------------------------------------------------------

    def uniform(self) -> np.ndarray:
        return 1.0 / self.infoset_sizes[self.seq_infoset].astype(np.float64)

    def pack(self, *strategies, default: str = "error") -> np.ndarray:
        """Flatten key->vector mappings into a sequence array.

        ``default`` is "error" (every decision infoset must be covered by one of
        the strategies) or "uniform".
        """
        out = self.uniform()
        covered = np.zeros(self.n_infosets, dtype=bool)
        for strat in strategies:
            if strat is None:
                continue
            table = getattr(strat, "table", strat)
            for j, I in enumerate(self.infosets):
                if covered[j]:
                    continue
                vec = table.get(I.key)
                if vec is not None:
                    vec = np.asarray(vec, dtype=np.float64)
                    if len(vec) != I.n_actions:
                        raise GameError(f"strategy at {I.key!r} has {len(vec)} entries, "
                                        f"expected {I.n_actions}")
                    out[I.seqs] = vec
                    covered[j] = True
        if default == "error" and not covered.all():
            missing = self.infosets[int(np.argmin(covered))].key
            raise KeyError(f"strategy missing infoset {missing!r}")
        return out

    def unpack(self, flat: np.ndarray, player: int | None = None) -> dict[str, np.ndarray]:
        return {I.key: np.array(flat[I.seqs]) for I in self.infosets
                if player is None or I.player == player}

    # -- vectorized sweeps -------------------------------------------------------

    def edge_weights(self, sigma: np.ndarray) -> np.ndarray:
        """Probability of the edge into each node under a packed profile."""
        w = self.chance_prob.copy()
        mask = self.edge_seq >= 0
        w[mask] = sigma[self.edge_seq[mask]]
        return w

    def reach(self, sigma: np.ndarray) -> np.ndarray:
        """Reach contributions, shape (3, n): rows P1, P2 and chance."""
        w = self.edge_weights(sigma)
        r = np.ones((3, self.n_nodes))
        owner = self.parent_actor
        for lv in range(1, self.max_depth + 1):
            lo, hi = self.level_start[lv], self.level_start[lv + 1]
            par = self.parent[lo:hi]
            wl, own = w[lo:hi], owner[lo:hi]
            for p in (0, 1, 2):
                r[p, lo:hi] = r[p, par] * np.where(own == p, wl, 1.0)
        return r

    def values(self, sigma: np.ndarray, leaf_values: np.ndarray | None = None) -> np.ndarray:
        """Expected payoff to P1 at every node under a packed profile."""
        w = self.edge_weights(sigma)
        v = self.utility.copy() if leaf_values is None else leaf_values.copy()
        for lv in range(self.max_depth - 1, -1, -1):
            lo, hi, internal, rel = self._levels[lv]
            if len(internal) == 0:
                continue
            nlo, nhi = self.level_start[lv + 1], self.level_start[lv + 2]
            v[internal] = np.add.reduceat(w[nlo:nhi] * v[nlo:nhi], rel)
        return v

    # -- serialization ------------------------------------------------------------

    def canonical_lines(self) -> list[str]:
        lines = []
        for i in range(self.n_nodes):
            a = int(self.actor[i])
            actor = {0: "P1", 1: "P2", 2: "chance", -1: "terminal"}[a]
            if a == TERMINAL:
                rec = f"{self.history[i]} -> {actor} | {float(self.utility[i])!r}"
            else:
                acts = ",".join(self.edge_label[c] for c in self.children(i))
                if a == CHANCE:
                    ps = ",".join(repr(float(self.chance_prob[c])) for c in self.children(i))
                    acts = f"{acts} [{ps}]"
                rec = f"{self.history[i]} -> {actor}, {acts} |"
            lines.append(rec)
        return sorted(lines)

    def canonical_serialization(self) -> str:
        return "\n".join(self.canonical_lines()) + "\n"

    def fingerprint(self) -> str:
        return hashlib.sha256(self.canonical_serialization().encode()).hexdigest()[:16]

    def __repr__(self):
        return (f"GameTree({self.name!r}, nodes={self.n_nodes}, "
                f"infosets={self.n_infosets}, depth={self.max_depth})")


def build_tree(rules: Rules, meta: dict | None = None) -> GameTree:
    """Materialize a rules object into a :class:`GameTree`."""
    b = TreeBuilder()
    root_state = rules.initial_state()
    stack = [(root_state, -1, "", 1.0, ())]
    while stack:
        state, parent, label, prob, path = stack.pop()
        actor = rules.actor(state)
        history = ";".join(path)
        common = dict(parent=parent, label=label, prob=prob, history=history,
                      round=rules.round_of(state), pot=rules.pot(state),
                      public=rules.public_key(state))
        if actor == TERMINAL:
            b.add(actor=TERMINAL, utility=rules.utility(state), **common)
            continue
        obs = (rules.infoset_key(state, P1), rules.infoset_key(state, P2))
        idx = b.add(actor=actor, obs=obs, **common)
        if actor == CHANCE:
            kids = [(rules.next_state(state, a), idx, a, p, path + (a,))
                    for a, p in rules.chance_outcomes(state)]
        else:
            kids = [(rules.next_state(state, a), idx, a, 1.0, path + (a,))
                    for a in rules.legal_actions(state)]
        stack.extend(reversed(kids))
    return b.finalize(rules.name, getattr(rules, "big_blind", 1.0), meta)
