"""Simulation of fragmentation processes restricted to labels 1..n.

Every live block carries an exponential clock at the total atom rate of the
measure. When it rings an atom is drawn and the block's labels are painted by
its paintbox. Events that keep all labels together still multiply the block
mass, which keeps the tracked masses exact. Self-similar paths are produced
from homogeneous ones by the Lamperti time change applied block by block.
"""

from __future__ import annotations

import bisect
import heapq
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .dislocation import DislocationMeasure
from .errors import DegenerateParameters, HorizonRequired, NonNegativeAlpha, NoTailBound
from .partitions import SetPartition


@dataclass(frozen=True)
class FragmentationParams:
    """Index alpha <= 0, erosion rate c >= 0, finite measure nu, and n labels.

    `horizon` is in homogeneous time. Singleton blocks whose mass drops below
    `mass_floor` after an event are treated as dead at that moment.
    """

    nu: DislocationMeasure
    alpha: float = 0.0
    c: float = 0.0
    n: int = 1
    horizon: float | None = None
    mass_floor: float = 0.0

    def __post_init__(self):
        if self.alpha > 0:
            raise NonNegativeAlpha("index must be nonpositive")
        if self.c < 0:
            raise DegenerateParameters("erosion rate must be nonnegative")
        if self.n < 1:
            raise DegenerateParameters("need at least one label")
        if self.c == 0 and self.nu.is_zero:
            raise DegenerateParameters("zero measure without erosion is the trivial process")
        if not self.nu.is_finite:
            raise NoTailBound("simulation needs a finite measure; truncate the family first")


@dataclass
class Block:
    id: int
    labels: tuple[int, ...]
    birth: float
    mass: float  # mass at birth
    parent: int | None
    end: float = math.inf
    fate: str = "alive"  # alive, split, dust, floor, horizon
    children: list[int] = field(default_factory=list)
    event: int | None = None


@dataclass
class Event:
    t: float
    block: int
    kind: str  # atom or erosion
    atom: int | None
    children: list[int]
    s_index: list[int | None]
    shatter: bool = False  # the atom has no positive part


def _time_change(mass: float, du: float, c: float, a: float) -> float:
    """Integral over [0, du] of (mass e^{-c r})^a dr."""
    if mass == 0 or du == 0:
        return 0.0
    rate = c * a
    if math.isinf(du):
        return math.inf if rate == 0 else mass**a / rate
    x = rate * du
    # relative factor (1 - e^-x)/x, by its series where division would lose precision
    factor = 1.0 - x / 2 if x < 1e-8 else -math.expm1(-x) / x
    return mass**a * du * factor


def _time_change_inverse(mass: float, dt: float, c: float, a: float) -> float:
    if dt == 0:
        return 0.0
    base = dt / mass**a
    x = c * a * base
    if x >= 1:
        return math.inf
    factor = 1.0 + x / 2 if x < 1e-8 else -math.log1p(-x) / x
    return base * factor


@dataclass
class FragmentationPath:
    """Blocks with birth/end times in the path's own clock and masses at birth.

    alpha = 0 marks a homogeneous path. For alpha < 0 the clock is the
    self-similar one and masses evolve through the inverse time change.
    """

    alpha: float
    c: float
    n: int
    blocks: list[Block]
    events: list[Event]
    erosion_times: np.ndarray
    horizon: float | None = None
    chains: dict[int, list[int]] = field(default_factory=dict)

    def __post_init__(self):
        if not self.chains:
            self.chains = {i: [] for i in range(1, self.n + 1)}
            for b in self.blocks:
                for i in b.labels:
                    self.chains[i].append(b.id)
        self._births = {i: [self.blocks[k].birth for k in ch] for i, ch in self.chains.items()}

    # ---------------------------------------------------------------- masses

    def mass_at(self, block: Block, t: float) -> float:
        if block.fate == "floor":
            return 0.0
        dt = t - block.birth
        if block.mass == 0 or self.c == 0:
            return block.mass
        if self.alpha == 0:
            return block.mass * math.exp(-self.c * dt)
        du = _time_change_inverse(block.mass, dt, self.c, -self.alpha)
        return block.mass * math.exp(-self.c * du) if math.isfinite(du) else 0.0

    def block_at(self, label: int, t: float) -> Block:
        """Block containing `label` at time t (right-continuous)."""
        k = bisect.bisect_right(self._births[label], t) - 1
        return self.blocks[self.chains[label][max(k, 0)]]

    def block_before(self, label: int, t: float) -> Block:
        """Block containing `label` just before t; the first block when t <= 0."""
        k = bisect.bisect_left(self._births[label], t) - 1
        return self.blocks[self.chains[label][max(k, 0)]]

    def mass_of(self, label: int, t: float) -> float:
        return self.mass_at(self.block_at(label, t), t)

    def mass_before(self, label: int, t: float) -> float:
        if t <= 0:
            return 1.0
        return self.mass_at(self.block_before(label, t), t)

    def masses_at(self, t: float) -> list[tuple[tuple[int, ...], float]]:
        seen: dict[int, Block] = {}
        for i in range(1, self.n + 1):
            b = self.block_at(i, t)
            seen[b.id] = b
        return [(b.labels, self.mass_at(b, t)) for b in sorted(seen.values(), key=lambda b: b.labels[0])]

    def partition_at(self, t: float) -> SetPartition:
        return SetPartition(tuple(labels for labels, _ in self.masses_at(t)))

    # ---------------------------------------------------------------- genealogy

    def death_times(self) -> np.ndarray:
        """D_i: time the label becomes dust or is floored; inf while alive."""
        out = np.full(self.n, math.inf)
        for i, chain in self.chains.items():
            last = self.blocks[chain[-1]]
            if last.fate in ("dust", "floor"):
                out[i - 1] = last.birth
        return out

    def fates(self) -> dict[int, str]:
        return {i: self.blocks[ch[-1]].fate for i, ch in self.chains.items()}

    def split_times(self) -> np.ndarray:
        """Matrix of D_{i,j}; the diagonal holds D_i."""
        n = self.n
        out = np.zeros((n, n))
        for b in self.blocks:
            if len(b.children) < 2:
                continue
            groups = [np.asarray(self.blocks[k].labels) - 1 for k in b.children]
            for a in range(len(groups)):
                for c in range(a + 1, len(groups)):
                    out[np.ix_(groups[a], groups[c])] = b.end
                    out[np.ix_(groups[c], groups[a])] = b.end
        np.fill_diagonal(out, self.death_times())
        # pairs never separated inside the path (horizon) stay together forever
        alive = [b for b in self.blocks if b.fate == "horizon" and len(b.labels) > 1]
        for b in alive:
            idx = np.asarray(b.labels) - 1
            sub = out[np.ix_(idx, idx)]
            mask = ~np.eye(len(idx), dtype=bool)
            sub[mask] = math.inf
            out[np.ix_(idx, idx)] = sub
        return out

    def event_of(self, block: Block) -> Event | None:
        return None if block.event is None else self.events[block.event]

    # ---------------------------------------------------------------- views

    def tagged_fragment(self, label: int) -> "TaggedTrace":
        chain = [self.blocks[k] for k in self.chains[label]]
        return TaggedTrace(self, chain)

    def restrict(self, m: int) -> "FragmentationPath":
        """The same path observed on labels 1..m only."""
        if not 1 <= m <= self.n:
            raise ValueError("m must lie in 1..n")
        new_id: dict[int, int] = {}
        blocks: list[Block] = []
        for b in self.blocks:
            labels = tuple(x for x in b.labels if x <= m)
            if not labels:
                continue
            nb = Block(len(blocks), labels, b.birth, b.mass, new_id.get(b.parent) if b.parent is not None else None, b.end, b.fate)
            new_id[b.id] = nb.id
            blocks.append(nb)
        events = []
        for ev in self.events:
            if ev.block not in new_id:
                continue
            kids = [(new_id[k], s) for k, s in zip(ev.children, ev.s_index) if k in new_id]
            parent = blocks[new_id[ev.block]]
            parent.children = [k for k, _ in kids]
            parent.event = len(events)
            events.append(Event(ev.t, parent.id, ev.kind, ev.atom, [k for k, _ in kids], [s for _, s in kids], ev.shatter))
        return FragmentationPath(self.alpha, self.c, m, blocks, events, self.erosion_times[:m].copy(), self.horizon)

    def to_json(self) -> dict:
        def num(x):
            return None if x is None or not math.isfinite(x) else x

        return {
            "alpha": self.alpha,
            "c": self.c,
            "n": self.n,
            "events": [
                {
                    "t": ev.t,
                    "block": list(self.blocks[ev.block].labels),
                    "kind": ev.kind,
                    "children": [
                        {"labels": list(self.blocks[k].labels), "s_index": s, "mass": self.blocks[k].mass}
                        for k, s in zip(ev.children, ev.s_index)
                    ],
                }
                for ev in self.events
            ],
            "erosion_times": [num(float(x)) for x in self.erosion_times],
        }


@dataclass
class TaggedTrace:
    """Mass of the block holding one label, as an exact function of time."""

    path: FragmentationPath
    chain: list[Block]

    @property
    def jump_times(self) -> list[float]:
        return [b.birth for b in self.chain[1:]]

    def at(self, t: float) -> float:
        k = bisect.bisect_right([b.birth for b in self.chain], t) - 1
        b = self.chain[max(k, 0)]
        if b.fate == "floor":
            return 0.0
        return self.path.mass_at(b, t)

    def __call__(self, t: float) -> float:
        return self.at(t)


# -------------------------------------------------------------------- simulation


class _Sim:
    def __init__(self, params: FragmentationParams, rng: np.random.Generator, spine_p_star: float | None):
        self.p = params
        self.rng = rng
        table = params.nu.table()
        self.table = table
        self.weights = table.weights
        self.rate = float(self.weights.sum())
        self.cdf = np.cumsum(self.weights) / self.rate if self.rate > 0 else None
        self.edges: dict[int, np.ndarray] = {}
        self.blocks: list[Block] = []
        self.events: list[Event] = []
        self.live: list[int] = []
        self.pos: dict[int, int] = {}
        self.current: dict[int, int] = {}
        self.spine = spine_p_star is not None
        if self.spine:
            sums = table.power_sums(spine_p_star)
            tilted = self.weights * sums
            self.spine_rate = float(tilted.sum())
            self.spine_cdf = np.cumsum(tilted) / self.spine_rate if self.spine_rate > 0 else None
            self.spine_p = spine_p_star
            self.spine_block: int | None = None

    # live-set bookkeeping
    def _add_live(self, bid: int):
        self.pos[bid] = len(self.live)
        self.live.append(bid)

    def _remove_live(self, bid: int):
        k = self.pos.pop(bid)
        last = self.live.pop()
        if last != bid:
            self.live[k] = last
            self.pos[last] = k

    def _new_block(self, labels, t, mass, parent, fate="alive") -> Block:
        b = Block(len(self.blocks), tuple(labels), t, mass, parent, fate=fate)
        if fate == "dust":
            b.end = math.inf
        self.blocks.append(b)
        for i in b.labels:
            self.current[i] = b.id
        if fate == "alive":
            floor = self.p.mass_floor
            if len(b.labels) == 1 and mass < floor and not (self.spine and b.labels[0] == 1):
                b.fate = "floor"
                b.end = t
            else:
                self._add_live(b.id)
                if self.spine and 1 in b.labels:
                    self.spine_block = b.id
        return b

    def _edges(self, k: int) -> np.ndarray:
        e = self.edges.get(k)
        if e is None:
            e = np.cumsum(self.table.atom(k).parts)
            self.edges[k] = e
        return e

    def _mass_now(self, b: Block, t: float) -> float:
        return b.mass * math.exp(-self.p.c * (t - b.birth)) if self.p.c else b.mass

    def run(self) -> FragmentationPath:
        p, rng = self.p, self.rng
        n = p.n
        if p.c > 0:
            erosion = rng.exponential(1.0 / p.c, size=n)
            if self.spine:
                erosion[0] = math.inf
        else:
            erosion = np.full(n, math.inf)
        heap = [(float(erosion[i]), i + 1) for i in range(n) if math.isfinite(erosion[i])]
        heapq.heapify(heap)
        self._new_block(range(1, n + 1), 0.0, 1.0, None)
        t = 0.0
        horizon = p.horizon if p.horizon is not None else math.inf
        while self.live:
            total = self.rate * len(self.live)
            if self.spine and self.spine_block is not None:
                total += self.spine_rate - self.rate
            dt = rng.exponential(1.0 / total) if total > 0 else math.inf
            while heap and self.blocks[self.current[heap[0][1]]].fate != "alive":
                heapq.heappop(heap)
            t_eros = heap[0][0] if heap else math.inf
            t_next = min(t + dt, t_eros)
            if t_next > horizon or math.isinf(t_next):
                break
            t = t_next
            if t_eros <= t:
                _, label = heapq.heappop(heap)
                self._erode(label, t)
                continue
            if self.spine and self.spine_block is not None and rng.random() * total < self.spine_rate:
                self._spine_event(self.spine_block, t)
            else:
                while True:
                    bid = self.live[int(rng.integers(len(self.live)))]
                    if not (self.spine and bid == self.spine_block):
                        break
                self._atom_event(bid, t)
        for bid in list(self.live):
            b = self.blocks[bid]
            b.fate = "horizon"
            b.end = p.horizon if p.horizon is not None else math.inf
        return FragmentationPath(0.0, p.c, n, self.blocks, self.events, erosion, p.horizon)

    def _close(self, b: Block, t: float, event_index: int):
        b.end = t
        b.fate = "split"
        b.event = event_index
        self._remove_live(b.id)

    def _erode(self, label: int, t: float):
        b = self.blocks[self.current[label]]
        m = self._mass_now(b, t)
        ev = Event(t, b.id, "erosion", None, [], [])
        self._close(b, t, len(self.events))
        self.events.append(ev)
        rest = tuple(x for x in b.labels if x != label)
        if rest:
            child = self._new_block(rest, t, m, b.id)
            ev.children.append(child.id)
            ev.s_index.append(None)
        dust = self._new_block((label,), t, 0.0, b.id, fate="dust")
        ev.children.append(dust.id)
        ev.s_index.append(-1)
        b.children = list(ev.children)

    def _apply(self, b: Block, t: float, k: int, idx: np.ndarray):
        parts = self.table.atom(k).parts
        dust_index = len(parts)
        m = self._mass_now(b, t)
        groups: dict[int, list[int]] = {}
        for label, j in zip(b.labels, idx.tolist()):
            groups.setdefault(j, []).append(label)
        ev = Event(t, b.id, "atom", k, [], [], shatter=dust_index == 0)
        self._close(b, t, len(self.events))
        self.events.append(ev)
        for j in sorted(groups):
            if j < dust_index:
                child = self._new_block(groups[j], t, m * parts[j], b.id)
                ev.children.append(child.id)
                ev.s_index.append(j)
            else:
                for label in groups[j]:
                    child = self._new_block((label,), t, 0.0, b.id, fate="dust")
                    ev.children.append(child.id)
                    ev.s_index.append(-1)
        b.children = list(ev.children)

    def _atom_event(self, bid: int, t: float):
        b = self.blocks[bid]
        k = min(int(np.searchsorted(self.cdf, self.rng.random(), side="right")), len(self.cdf) - 1)
        idx = np.searchsorted(self._edges(k), self.rng.random(len(b.labels)), side="right")
        self._apply(b, t, k, idx)

    def _spine_event(self, bid: int, t: float):
        b = self.blocks[bid]
        k = min(int(np.searchsorted(self.spine_cdf, self.rng.random(), side="right")), len(self.spine_cdf) - 1)
        parts = np.asarray(self.table.atom(k).parts)
        w = parts**self.spine_p
        i = min(int(np.searchsorted(np.cumsum(w) / w.sum(), self.rng.random(), side="right")), len(parts) - 1)
        idx = np.searchsorted(self._edges(k), self.rng.random(len(b.labels)), side="right")
        idx[b.labels.index(1)] = i
        self._apply(b, t, k, idx)


def _never_dies(params: FragmentationParams) -> bool:
    if params.c > 0 or params.mass_floor > 0:
        return False
    for _, s in params.nu.atoms:
        if s.dust > 0:
            return False
    return True


def simulate_homogeneous(params: FragmentationParams, rng: np.random.Generator, spine_p_star: float | None = None) -> FragmentationPath:
    """Homogeneous process on labels 1..n, in homogeneous time.

    With `spine_p_star`, label 1 follows the tilted spine dynamics: its block
    receives atoms at rate sum_k w_k sum_i (s_i^k)^p*, label 1 is placed in
    fragment i with probability proportional to s_i^p*, and it is never eroded.
    """
    if params.horizon is None and _never_dies(params) and spine_p_star is None:
        raise HorizonRequired("no label can ever die; give a horizon or a mass floor")
    if spine_p_star is not None and params.horizon is None:
        raise HorizonRequired("the spine never dies; give a horizon")
    return _Sim(params, rng, spine_p_star).run()


def apply_lamperti(path: FragmentationPath, alpha: float) -> FragmentationPath:
    """Self-similar path: a block of mass m advances its clock at rate m^|alpha|."""
    if alpha >= 0:
        raise NonNegativeAlpha("the time change needs alpha < 0")
    if path.alpha != 0:
        raise ValueError("path is already self-similar")
    a = -alpha
    blocks = [replace(b, children=list(b.children)) for b in path.blocks]
    for b, old in zip(blocks, path.blocks):
        if b.parent is not None:
            b.birth = blocks[b.parent].end
        if old.fate in ("dust",):
            b.end = math.inf
        elif old.fate == "floor":
            b.end = b.birth
        else:
            b.end = b.birth + _time_change(old.mass, old.end - old.birth, path.c, a)
    events = [replace(ev, t=blocks[ev.block].end) for ev in path.events]
    order = sorted(range(len(events)), key=lambda k: events[k].t)
    remap = {old: new for new, old in enumerate(order)}
    for b in blocks:
        if b.event is not None:
            b.event = remap[b.event]
    return FragmentationPath(alpha, path.c, path.n, blocks, [events[k] for k in order], path.erosion_times, path.horizon, path.chains)


def invert_lamperti(path: FragmentationPath) -> FragmentationPath:
    """Homogeneous path recovered from a self-similar one."""
    if path.alpha >= 0:
        raise NonNegativeAlpha("path is not self-similar")
    a = -path.alpha
    blocks = [replace(b, children=list(b.children)) for b in path.blocks]
    for b, old in zip(blocks, path.blocks):
        if b.parent is not None:
            b.birth = blocks[b.parent].end
        if old.fate == "dust":
            b.end = math.inf
        elif old.fate == "floor":
            b.end = b.birth
        elif old.fate == "horizon" and path.horizon is not None:
            b.end = path.horizon
        else:
            b.end = b.birth + _time_change_inverse(old.mass, old.end - old.birth, path.c, a)
    events = [replace(ev, t=blocks[ev.block].end) for ev in path.events]
    order = sorted(range(len(events)), key=lambda k: events[k].t)
    remap = {old: new for new, old in enumerate(order)}
    for b in blocks:
        if b.event is not None:
            b.event = remap[b.event]
    return FragmentationPath(0.0, path.c, path.n, blocks, [events[k] for k in order], path.erosion_times, path.horizon, path.chains)


def simulate_self_similar(params: FragmentationParams, rng: np.random.Generator) -> FragmentationPath:
    if params.alpha >= 0:
        raise NonNegativeAlpha("self-similar simulation needs alpha < 0")
    return apply_lamperti(simulate_homogeneous(params, rng), params.alpha)


# -------------------------------------------------------------------- stopping lines


@dataclass(frozen=True)
class StoppingLine:
    eps: float
    times: np.ndarray  # indexed by label - 1
    blocks: tuple[int, ...]  # block id holding each label at its line time

    def partition(self) -> SetPartition:
        return SetPartition.from_labels(self.blocks)


def stopping_line_first_below(path: FragmentationPath, eps: float) -> StoppingLine:
    """First time the mass of each label's block is strictly below eps."""
    times = np.full(path.n, math.inf)
    holders = [-1] * path.n
    a = -path.alpha
    for i, chain in path.chains.items():
        for bid in chain:
            b = path.blocks[bid]
            if b.mass < eps or b.fate == "floor":
                times[i - 1], holders[i - 1] = b.birth, b.id
                break
            if path.c > 0 and b.mass > 0:
                du = math.log(b.mass / eps) / path.c
                dt = du if path.alpha == 0 else _time_change(b.mass, du, path.c, a)
                if b.birth + dt < b.end:
                    times[i - 1], holders[i - 1] = b.birth + dt, b.id
                    break
    return StoppingLine(eps, times, tuple(holders))


# -------------------------------------------------------------------- mass trees


@dataclass
class MassBlock:
    id: int
    parent: int | None
    birth: float  # self-similar time
    mass: float
    end: float = math.inf
    fate: str = "alive"  # split, killed, floor, cap
    children: list[int] = field(default_factory=list)


@dataclass
class MassTree:
    """Genealogy of all blocks with positive mass, without labels.

    Blocks are followed until their mass drops below `floor`; those end with
    fate "floor" at the self-similar time of the crossing.
    """

    alpha: float
    c: float
    floor: float
    blocks: list[MassBlock]
    capped: bool = False

    @property
    def extinct(self) -> bool:
        return not any(b.fate in ("floor", "cap") for b in self.blocks)

    def crossing_time(self, b: MassBlock, eps: float) -> float | None:
        """Time at which block b's mass first drops below eps, if within its lifetime."""
        if b.mass < eps:
            return b.birth
        if self.c > 0:
            du = math.log(b.mass / eps) / self.c
            t = b.birth + _time_change(b.mass, du, self.c, -self.alpha)
            if t < b.end or (b.fate == "floor" and t <= b.end):
                return t
        return None


def simulate_mass_tree(
    nu: DislocationMeasure,
    c: float,
    alpha: float,
    floor: float,
    rng: np.random.Generator,
    max_blocks: int = 200_000,
) -> MassTree:
    """All blocks of the self-similar process down to mass `floor`.

    Requires a finite measure with finitely many parts per atom. Blocks
    killed by an atom without parts end with fate "killed".
    """
    if alpha >= 0:
        raise NonNegativeAlpha("mass trees are built in self-similar time")
    table = nu.table()
    weights = table.weights
    rate = float(weights.sum())
    cdf = np.cumsum(weights) / rate if rate > 0 else None
    a = -alpha
    blocks = [MassBlock(0, None, 0.0, 1.0)]
    stack = [0]
    capped = False
    while stack:
        bid = stack.pop()
        b = blocks[bid]
        if b.mass < floor:
            b.fate, b.end = "floor", b.birth
            continue
        du = rng.exponential(1.0 / rate) if rate > 0 else math.inf
        if c > 0:
            du_floor = math.log(b.mass / floor) / c
            if du_floor <= du:
                b.fate = "floor"
                b.end = b.birth + _time_change(b.mass, du_floor, c, a)
                continue
        b.end = b.birth + _time_change(b.mass, du, c, a)
        m = b.mass * math.exp(-c * du) if c else b.mass
        k = min(int(np.searchsorted(cdf, rng.random(), side="right")), len(cdf) - 1)
        parts = table.atom(k).parts
        if not parts:
            b.fate = "killed"
            continue
        b.fate = "split"
        if len(blocks) + len(parts) > max_blocks:
            b.fate = "cap"
            capped = True
            continue
        for s in parts:
            child = MassBlock(len(blocks), bid, b.end, m * s)
            blocks.append(child)
            b.children.append(child.id)
            stack.append(child.id)
    return MassTree(alpha, c, floor, blocks, capped)
