"""Event-exact simulator for (two-speed) branching Brownian motion.

Particles branch at unit-rate exponential times into k children with
probability p_k and diffuse with the profile's phase variance between
events; increments never straddle a barrier time (prune checks,
checkpoints, the speed change at t/2), so every increment has constant
variance and the run is exact in distribution -- no Euler-Maruyama grid.

Replicates are batched into flat arrays tagged by a replicate column,
and the hot loop is a compiled kernel that walks each particle's event
chain within a barrier segment. Every particle draws from its own
counter-based stream (same streams as :mod:`vsbbm.rng`), which makes
runs reproducible bit-for-bit, independent of batch composition and
scheduling, and couples runs that differ only in pruning depth: a
lineage that survives both depths follows the identical path.

Pruning removes particles more than ``depth`` below the running
per-replicate maximum at every check interval. The maximum itself always
survives, so populations cannot go extinct, but the doubled-depth rerun
path demanded by the sampling contract is kept anyway.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numba
import numpy as np

from . import rng as crng
from .model import SQRT2, BranchingLaw, Sign, SpeedProfile

#: default per-replicate population abort threshold
HARD_CAP = 50_000_000

_TIME_EPS = 1e-9

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_SALT = np.uint64(0x8BB84B93962EACC9)


class ResourceCapError(RuntimeError):
    """A replicate's population crossed the hard cap."""

    def __init__(self, replicate: int, size: int, cap: int):
        super().__init__(
            f"replicate {replicate} reached population {size} > cap {cap}")
        self.replicate = replicate
        self.size = size
        self.cap = cap


@dataclass(frozen=True)
class PruneRule:
    """Relative pruning barrier: kill below (running max - depth)."""

    depth: float
    check_interval: float = 1.0

    def __post_init__(self):
        if not (self.depth > 0.0 and self.check_interval > 0.0):
            raise ValueError("depth and check_interval must be positive")

    @classmethod
    def default_for(cls, horizon: float, check_interval: float = 1.0) -> "PruneRule":
        """Default policy 3 sqrt(t) + 6, which sits above the 2 sqrt(t) floor."""
        return cls(depth=3.0 * math.sqrt(horizon) + 6.0,
                   check_interval=check_interval)

    def doubled(self) -> "PruneRule":
        return PruneRule(self.depth * 2.0, self.check_interval)


# -- compiled inner loop -----------------------------------------------


@numba.njit(inline="always")
def _mix64(x):
    x = np.uint64(x)
    x ^= x >> np.uint64(30)
    x *= _MIX1
    x ^= x >> np.uint64(27)
    x *= _MIX2
    x ^= x >> np.uint64(31)
    return x


@numba.njit(inline="always")
def _u01(key, ctr):
    z = _mix64(np.uint64(key) + np.uint64(ctr) * _GOLDEN)
    return (float(z >> np.uint64(11)) + 0.5) * (2.0 ** -53)


@numba.njit(inline="always")
def _child_key(key, ctr, slot):
    ev = _mix64(np.uint64(ctr) * _GOLDEN + np.uint64(slot) * _SALT + np.uint64(1))
    return _mix64(np.uint64(key) ^ ev)


@numba.njit(cache=True)
def _ndtri(p):
    """Inverse standard normal CDF (Wichura's PPND16, ~1e-16 accurate)."""
    q = p - 0.5
    if abs(q) <= 0.425:
        r = 0.180625 - q * q
        num = (((((((2.5090809287301226727e3 * r + 3.3430575583588128105e4) * r
                    + 6.7265770927008700853e4) * r + 4.5921953931549871457e4) * r
                  + 1.3731693765509461125e4) * r + 1.9715909503065514427e3) * r
                + 1.3314166789178437745e2) * r + 3.3871328727963666080e0)
        den = (((((((5.2264952788528545610e3 * r + 2.8729085735721942674e4) * r
                    + 3.9307895800092710610e4) * r + 2.1213794301586595867e4) * r
                  + 5.3941960214247511077e3) * r + 6.8718700749205790830e2) * r
                + 4.2313330701600911252e1) * r + 1.0)
        return q * num / den
    if q < 0.0:
        r = p
    else:
        r = 1.0 - p
    r = math.sqrt(-math.log(r))
    if r <= 5.0:
        r = r - 1.6
        num = (((((((7.74545014278341407640e-4 * r + 2.27238449892691845833e-2) * r
                    + 2.41780725177450611770e-1) * r + 1.27045825245236838258e0) * r
                  + 3.64784832476320460504e0) * r + 5.76949722146069140550e0) * r
                + 4.63033784615654529590e0) * r + 1.42343711074968357734e0)
        den = (((((((1.05075007164441684324e-9 * r + 5.47593808499534494600e-4) * r
                    + 1.51986665636164571966e-2) * r + 1.48103976427480074590e-1) * r
                  + 6.89767334985100004550e-1) * r + 1.67638483018380384940e0) * r
                + 2.05319162663775882187e0) * r + 1.0)
    else:
        r = r - 5.0
        num = (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r
                    + 1.24266094738807843860e-3) * r + 2.65321895265761230930e-2) * r
                  + 2.96560571828504891230e-1) * r + 1.78482653991729133580e0) * r
                + 5.46378491116411436990e0) * r + 6.65790464350110377720e0)
        den = (((((((2.04426310338993978564e-15 * r + 1.42151175831644588870e-7) * r
                    + 1.84631831751005468180e-5) * r + 7.86869131145613259100e-4) * r
                  + 1.48753612908506148525e-2) * r + 1.36929880922735805310e-1) * r
                + 5.99832206555887937690e-1) * r + 1.0)
    val = num / den
    return -val if q < 0.0 else val


@numba.njit(cache=True)
def _segment_kernel(pos, cur, nbt, key, ctr, rep, extra_f, extra_i,
                    n, b, sig2, cum_probs, binary_law,
                    track_gen, gen_parent, gen_birth, gen_n, cap):
    """Advance particles [0, n) to barrier b, appending children in place.

    Each particle's event chain, including all descendants born inside
    the segment, is processed depth-first through a small register stack
    so the hot path touches the arrays once per particle (this host is
    memory-bound). Returns (new population size, new genealogy-node
    count); (-1, _) signals exhausted capacity, which callers prevent by
    pre-sizing.
    """
    eps = 1e-9
    m = n
    g = gen_n
    nf = extra_f.shape[0]
    ni = extra_i.shape[0]
    kmax = cum_probs.shape[0]
    sq_sig = math.sqrt(sig2)
    depth = 64
    st_pos = np.empty(depth)
    st_time = np.empty(depth)
    st_nbt = np.empty(depth)
    st_key = np.empty(depth, np.uint64)
    st_node = np.empty(depth, np.int64)

    lo = 0
    hi = n
    while lo < hi:
        for i in range(lo, hi):
            if cur[i] >= b - eps:
                continue  # already finished (only after a spill rescan)
            p = pos[i]
            tcur = cur[i]
            k = key[i]
            c = np.uint64(ctr[i])
            nb = nbt[i]
            nd = extra_i[0, i] if track_gen else np.int64(0)
            sp = 0
            first = True
            while True:
                while nb < b - eps:
                    dt = nb - tcur
                    if dt < 0.0:
                        dt = 0.0
                    u = _u01(k, c)
                    c += np.uint64(1)
                    p += _ndtri(u) * sq_sig * math.sqrt(dt)
                    tcur = nb
                    if binary_law:
                        kk = 2
                    else:
                        u = _u01(k, c)
                        c += np.uint64(1)
                        kk = 1
                        for j in range(kmax):
                            if u > cum_probs[j]:
                                kk = j + 2
                        if kk > kmax:
                            kk = kmax
                    e = -math.log(_u01(k, c))
                    c += np.uint64(1)
                    nb = tcur + e
                    for slot in range(kk - 1):
                        ck = _child_key(k, c, slot)
                        cnb = tcur - math.log(_u01(ck, np.uint64(0)))
                        cnd = np.int64(0)
                        if track_gen:
                            gen_parent[g] = nd
                            gen_birth[g] = tcur
                            cnd = np.int64(g)
                            g += 1
                        if sp < depth:
                            st_pos[sp] = p
                            st_time[sp] = tcur
                            st_nbt[sp] = cnb
                            st_key[sp] = ck
                            st_node[sp] = cnd
                            sp += 1
                        else:
                            # stack spill: park the child as a pending row
                            if m >= cap:
                                return -1, g
                            pos[m] = p
                            cur[m] = tcur
                            nbt[m] = cnb
                            key[m] = ck
                            ctr[m] = np.uint32(1)
                            rep[m] = rep[i]
                            for cc in range(nf):
                                extra_f[cc, m] = extra_f[cc, i]
                            for cc in range(ni):
                                extra_i[cc, m] = extra_i[cc, i]
                            if track_gen:
                                extra_i[0, m] = cnd
                            m += 1
                # final diffusion step up to the barrier
                dt = b - tcur
                if dt < 0.0:
                    dt = 0.0
                u = _u01(k, c)
                c += np.uint64(1)
                p += _ndtri(u) * sq_sig * math.sqrt(dt)
                if first:
                    pos[i] = p
                    cur[i] = b
                    nbt[i] = nb
                    ctr[i] = np.uint32(c)
                    first = False
                else:
                    if m >= cap:
                        return -1, g
                    pos[m] = p
                    cur[m] = b
                    nbt[m] = nb
                    key[m] = k
                    ctr[m] = np.uint32(c)
                    rep[m] = rep[i]
                    for cc in range(nf):
                        extra_f[cc, m] = extra_f[cc, i]
                    for cc in range(ni):
                        extra_i[cc, m] = extra_i[cc, i]
                    if track_gen:
                        extra_i[0, m] = nd
                    m += 1
                if sp == 0:
                    break
                sp -= 1
                p = st_pos[sp]
                tcur = st_time[sp]
                nb = st_nbt[sp]
                k = st_key[sp]
                c = np.uint64(1)
                nd = st_node[sp]
        lo, hi = hi, m  # rescan only rows appended by spills
    return m, g


class _State:
    """Growable population arrays plus named extra columns."""

    def __init__(self, n, seed, rep_offset, genealogy):
        cap = max(2 * n, 1024)
        self.n = n
        self.pos = np.zeros(cap)
        self.cur = np.zeros(cap)
        self.nbt = np.zeros(cap)
        self.key = np.zeros(cap, dtype=np.uint64)
        self.ctr = np.zeros(cap, dtype=np.uint32)
        self.rep = np.zeros(cap, dtype=np.int32)
        self.rep[:n] = np.arange(n, dtype=np.int32)
        self.key[:n] = [crng.replicate_key(seed, rep_offset + i) for i in range(n)]
        self.nbt[:n] = crng.exponentials(self.key[:n], self.ctr[:n])
        self.ctr[:n] = 1
        self.f_names: list = []
        self.i_names: list = []
        self.extra_f = np.zeros((0, cap))
        self.extra_i = np.zeros((0, cap), dtype=np.int64)
        if genealogy:
            self.add_i_column("node", np.arange(n, dtype=np.int64))

    @property
    def cap(self):
        return self.pos.shape[0]

    def reserve(self, need):
        if need <= self.cap:
            return
        cap = max(need, int(self.cap * 1.7) + 64)
        for name in ("pos", "cur", "nbt", "key", "ctr", "rep"):
            old = getattr(self, name)
            grown = np.empty(cap, dtype=old.dtype)
            grown[: self.n] = old[: self.n]
            setattr(self, name, grown)
        for name2 in ("extra_f", "extra_i"):
            old = getattr(self, name2)
            grown = np.empty((old.shape[0], cap), dtype=old.dtype)
            grown[:, : self.n] = old[:, : self.n]
            setattr(self, name2, grown)

    def add_f_column(self, name, values):
        new = np.empty((self.extra_f.shape[0] + 1, self.cap))
        new[:-1] = self.extra_f
        new[-1, : self.n] = values
        self.extra_f = new
        self.f_names.append(name)

    def add_i_column(self, name, values):
        new = np.empty((self.extra_i.shape[0] + 1, self.cap), dtype=np.int64)
        new[:-1] = self.extra_i
        new[-1, : self.n] = values
        self.extra_i = new
        self.i_names.append(name)

    def compress(self, keep):
        m = int(np.count_nonzero(keep))
        for name in ("pos", "cur", "nbt", "key", "ctr", "rep"):
            arr = getattr(self, name)
            arr[:m] = arr[: self.n][keep]
        for name2 in ("extra_f", "extra_i"):
            arr = getattr(self, name2)
            arr[:, :m] = arr[:, : self.n][:, keep]
        self.n = m


@dataclass
class SimulationResult:
    """Final population of one batch of replicates, sorted by replicate.

    ``snapshots`` maps a checkpoint time to the per-particle ancestral
    position at that time; ``snapshot_ids`` to the ancestral particle
    index (the cluster label for genealogy-at-a-distance grouping).
    ``captures`` holds frozen whole-population states (positions,
    replicate tags, both replicate-sorted) recorded at martingale
    checkpoints before any pruning at that instant.
    """

    profile: SpeedProfile
    law: BranchingLaw
    n_replicates: int
    rep_offset: int
    rep: np.ndarray
    pos: np.ndarray
    pruned: np.ndarray
    snapshots: dict = field(default_factory=dict)
    snapshot_ids: dict = field(default_factory=dict)
    captures: dict = field(default_factory=dict)
    rerun_counts: np.ndarray | None = None
    genealogy: "Genealogy | None" = None

    def sizes(self) -> np.ndarray:
        return np.bincount(self.rep, minlength=self.n_replicates)

    def boundaries(self) -> np.ndarray:
        return np.searchsorted(self.rep, np.arange(self.n_replicates))

    def max_positions(self) -> np.ndarray:
        return np.maximum.reduceat(self.pos, self.boundaries())

    def top_particles(self, window: float):
        """Rows within ``window`` of their replicate's maximum: returns
        (replicate tags, positions, snapshots dict, snapshot-ids dict)."""
        rmax = self.max_positions()
        mask = self.pos >= rmax[self.rep] - window
        snaps = {t: col[mask] for t, col in self.snapshots.items()}
        ids = {t: col[mask] for t, col in self.snapshot_ids.items()}
        return self.rep[mask], self.pos[mask], snaps, ids


@dataclass
class Genealogy:
    """Parent links and birth times of every particle ever created."""

    parent: np.ndarray
    birth: np.ndarray
    leaf_node: np.ndarray  # node id of each row of the final arrays

    def split_time(self, node_a: int, node_b: int) -> float:
        """Time at which the lineages of two leaves diverge."""
        chain_a = set()
        v = node_a
        while v >= 0:
            chain_a.add(v)
            v = int(self.parent[v]) if v < self.parent.size else -1
        v, child_birth = node_b, math.inf
        while v not in chain_a:
            child_birth = float(self.birth[v])
            v = int(self.parent[v])
            if v < 0:
                raise ValueError("leaves share no ancestor")
        meet = v
        v, other_birth = node_a, math.inf
        while v != meet:
            other_birth = float(self.birth[v])
            v = int(self.parent[v])
        return min(child_birth, other_birth)


def _barrier_times(horizon, prune, extra_times):
    times = {float(horizon), horizon / 2.0}
    times.update(float(t) for t in extra_times if t > 0.0)
    if prune is not None:
        k = 1
        while k * prune.check_interval <= horizon + _TIME_EPS:
            times.add(min(k * prune.check_interval, float(horizon)))
            k += 1
    out = sorted(times)
    merged = []
    for t in out:
        if not merged or t - merged[-1] > _TIME_EPS:
            merged.append(min(t, float(horizon)))
    return merged


def simulate(profile: SpeedProfile, law: BranchingLaw | None = None, *,
             prune: PruneRule | None = None, checkpoints=(), capture_times=(),
             seed: int = 0, replicates: int = 1, rep_offset: int = 0,
             hard_cap: int = HARD_CAP, genealogy: bool = False,
             _depth_doublings: int = 0) -> SimulationResult:
    """Run a batch of independent replicates to the profile's horizon.

    ``checkpoints`` are times whose positions are carried along lineages
    (ancestor snapshots); ``capture_times`` freeze whole-population
    copies for martingale evaluation. ``prune=None`` disables pruning.
    Deterministic: the output is a pure function of (seed, rep_offset,
    parameters), byte-identical across runs and thread counts.
    """
    law = law or BranchingLaw.binary()
    horizon = profile.horizon
    if replicates < 0:
        raise ValueError("replicates must be non-negative")
    if replicates == 0:
        return SimulationResult(profile, law, 0, rep_offset,
                                np.empty(0, np.int32), np.empty(0),
                                np.zeros(0, np.int64))
    checkpoints = sorted(set(float(c) for c in checkpoints))
    capture_set = sorted(set(float(t) for t in capture_times))
    for c in checkpoints + capture_set:
        if not (0.0 < c <= horizon + _TIME_EPS):
            raise ValueError(f"checkpoint {c} outside (0, {horizon}]")
    if prune is not None and prune.depth < 2.0 * math.sqrt(horizon):
        warnings.warn("prune depth below the 2*sqrt(horizon) default floor; "
                      "statistics of deep-diving lineages may be truncated",
                      stacklevel=2)

    state = _State(replicates, seed, rep_offset, genealogy)
    gen_parent = np.full(state.cap if genealogy else 0, -1, dtype=np.int64)
    gen_birth = np.zeros(state.cap if genealogy else 0)
    gen_n = replicates if genealogy else 0
    if genealogy:
        gen_parent[:replicates] = -1

    pruned = np.zeros(replicates, dtype=np.int64)
    captures = {}
    cum_probs = np.cumsum(law.probabilities)
    binary_law = law.probabilities == (0.0, 1.0)
    prune_every = prune.check_interval if prune is not None else None

    barriers = _barrier_times(horizon, prune, checkpoints + capture_set)
    prev = 0.0
    for b in barriers:
        sig2 = profile.sigma_squared(0.5 * (prev + b))
        # size the buffers so the kernel cannot overflow: expected
        # growth factor e^dt plus slack for branching fluctuations
        need = int(state.n * math.exp(b - prev) * 1.05) + 8192
        state.reserve(need)
        if genealogy and gen_parent.size < gen_n + state.cap:
            gp = np.full(gen_n + state.cap, -1, dtype=np.int64)
            gp[:gen_n] = gen_parent[:gen_n]
            gb = np.zeros(gen_n + state.cap)
            gb[:gen_n] = gen_birth[:gen_n]
            gen_parent, gen_birth = gp, gb
        new_n, gen_n = _segment_kernel(
            state.pos, state.cur, state.nbt, state.key, state.ctr, state.rep,
            state.extra_f, state.extra_i, state.n, b, sig2, cum_probs,
            binary_law, genealogy, gen_parent, gen_birth, gen_n, state.cap)
        if new_n < 0:
            raise ResourceCapError(rep_offset, state.cap, state.cap)
        state.n = new_n

        # barrier bookkeeping: capture, snapshot, then prune
        for c in capture_set:
            if abs(b - c) <= _TIME_EPS:
                captures[c] = (state.pos[: state.n].copy(),
                               state.rep[: state.n].copy())
        for c in checkpoints:
            if abs(b - c) <= _TIME_EPS:
                state.add_f_column(f"snap:{c!r}", state.pos[: state.n])
                state.add_i_column(f"sid:{c!r}",
                                   np.arange(state.n, dtype=np.int64))
        is_prune = prune_every is not None and _is_multiple(b, prune_every)
        if is_prune:
            rmax = np.full(replicates, -np.inf)
            np.maximum.at(rmax, state.rep[: state.n], state.pos[: state.n])
            keep = state.pos[: state.n] >= rmax[state.rep[: state.n]] - prune.depth
            if not np.all(keep):
                pruned += np.bincount(state.rep[: state.n][~keep],
                                      minlength=replicates)
                state.compress(keep)
        if is_prune or b == barriers[-1]:
            sizes = np.bincount(state.rep[: state.n], minlength=replicates)
            worst = int(np.argmax(sizes))
            if sizes[worst] > hard_cap:
                raise ResourceCapError(rep_offset + worst, int(sizes[worst]),
                                       hard_cap)
        prev = b

    # final ordering by replicate for grouped reductions
    order = np.argsort(state.rep[: state.n], kind="stable")
    rep = state.rep[: state.n][order]
    pos = state.pos[: state.n][order]
    snapshots = {}
    snapshot_ids = {}
    for c in checkpoints:
        snapshots[c] = state.extra_f[state.f_names.index(f"snap:{c!r}")][: state.n][order]
        snapshot_ids[c] = state.extra_i[state.i_names.index(f"sid:{c!r}")][: state.n][order]
    gen = None
    if genealogy:
        node_row = state.i_names.index("node")
        gen = Genealogy(parent=gen_parent[:gen_n].copy(),
                        birth=gen_birth[:gen_n].copy(),
                        leaf_node=state.extra_i[node_row][: state.n][order])
    sorted_captures = {}
    for t, (cpos, crep) in captures.items():
        o = np.argsort(crep, kind="stable")
        sorted_captures[t] = (cpos[o], crep[o])

    result = SimulationResult(profile, law, replicates, rep_offset, rep, pos,
                              pruned, snapshots, snapshot_ids, sorted_captures,
                              rerun_counts=np.zeros(replicates, dtype=np.int32),
                              genealogy=gen)

    # relative pruning preserves the argmax, so extinction cannot happen;
    # the rerun-with-doubled-depth contract is kept for safety
    empty = np.flatnonzero(result.sizes() == 0)
    if empty.size:
        if _depth_doublings >= 6:
            raise RuntimeError("replicates stayed extinct after depth doublings")
        for idx in empty:
            redo = simulate(profile, law,
                            prune=prune.doubled() if prune else None,
                            checkpoints=checkpoints, capture_times=capture_times,
                            seed=seed, replicates=1,
                            rep_offset=rep_offset + int(idx), hard_cap=hard_cap,
                            genealogy=genealogy,
                            _depth_doublings=_depth_doublings + 1)
            result = _merge_single(result, int(idx), redo)
    return result


def _is_multiple(t, step):
    k = round(t / step)
    return abs(t - k * step) <= _TIME_EPS and k >= 1


def _merge_single(result: SimulationResult, idx: int, redo: SimulationResult):
    """Splice a rerun replicate back into the batch (rare path)."""
    mask = result.rep != idx
    insert_rep = np.full(redo.rep.size, idx, dtype=result.rep.dtype)
    rep = np.concatenate([result.rep[mask], insert_rep])
    pos = np.concatenate([result.pos[mask], redo.pos])
    order = np.argsort(rep, kind="stable")
    result.snapshots = {t: np.concatenate([c[mask], redo.snapshots[t]])[order]
                        for t, c in result.snapshots.items()}
    result.snapshot_ids = {t: np.concatenate([c[mask], redo.snapshot_ids[t]])[order]
                           for t, c in result.snapshot_ids.items()}
    result.rep = rep[order]
    result.pos = pos[order]
    result.rerun_counts[idx] += 1 + (redo.rerun_counts[0]
                                     if redo.rerun_counts is not None else 0)
    result.pruned[idx] = redo.pruned[0]
    return result


def sample_max(result: SimulationResult) -> np.ndarray:
    """Maximum alive-particle position per replicate (not recentered)."""
    if result.n_replicates == 0 or result.rep.size == 0:
        raise ValueError("empty population")
    return result.max_positions()


def classify_path(profile: SpeedProfile, snapshots: dict, horizon: float,
                  params: dict) -> dict:
    """Localisation flags of ancestral paths, checked at snapshot times.

    ``snapshots`` maps checkpoint times to raw ancestral positions (one
    row per classified particle); paths are rescaled by 1/sigma1 before
    the windows apply. The plus-case window demands the half-time
    ancestor sit [B t^gamma, A t^gamma] below sqrt(2) t/2, the minus
    case within A sqrt(t) of sqrt(2) sigma1 t/2. The below-the-line
    barrier event is a discrete surrogate checked at the recorded times
    only, and the early localisation flag tests the t^(beta delta)
    pull-back at time t^beta.
    """
    a_win = float(params.get("A", 4.0))
    b_win = float(params.get("B", 0.25))
    beta = float(params.get("beta", 0.4))
    delta = float(params.get("delta", 0.45))
    r_start = float(params.get("r", 1.0))
    half = horizon / 2.0
    t_beta = horizon ** beta
    sigma1 = profile.sigma1

    def rescaled(time):
        for t, col in snapshots.items():
            if abs(t - time) <= _TIME_EPS:
                return np.asarray(col) / sigma1
        raise ValueError(f"missing ancestor snapshot at {time}")

    x_half = rescaled(half)
    if profile.sign is Sign.MINUS:
        center = SQRT2 * sigma1 * half
        in_g = np.abs(x_half - center) <= a_win * math.sqrt(horizon)
    else:
        gamma = float(params.get("gamma", profile.alpha))
        offset = SQRT2 * half - x_half
        in_g = (offset >= b_win * horizon ** gamma) & (offset <= a_win * horizon ** gamma)

    in_t = np.ones_like(in_g)
    for time in sorted(snapshots):
        if r_start <= time <= half + _TIME_EPS:
            in_t &= rescaled(time) <= SQRT2 * time
    in_h = rescaled(t_beta) <= SQRT2 * t_beta - t_beta ** delta
    return {"in_g": in_g, "in_t": in_t, "in_h": in_h}


def pair_covariance_samples(result: SimulationResult, n_pairs: int,
                            seed: int = 0):
    """Sample same-replicate particle pairs; return (split time, product).

    Requires a genealogy-tracked run. The product of the two terminal
    positions has expectation equal to the accumulated variance at the
    pair's lineage split time.
    """
    if result.genealogy is None:
        raise ValueError("pair sampling needs genealogy=True at simulate time")
    rng = np.random.default_rng(seed)
    bounds = np.concatenate([result.boundaries(), [result.rep.size]])
    ds, prods = [], []
    reps = rng.integers(0, result.n_replicates, size=n_pairs)
    for rep_idx in reps:
        lo, hi = bounds[rep_idx], bounds[rep_idx + 1]
        if hi - lo < 2:
            continue
        i, j = rng.choice(hi - lo, size=2, replace=False) + lo
        d = result.genealogy.split_time(int(result.genealogy.leaf_node[i]),
                                        int(result.genealogy.leaf_node[j]))
        ds.append(min(d, result.profile.horizon))
        prods.append(result.pos[i] * result.pos[j])
    return np.asarray(ds), np.asarray(prods)


def gaussian_consistency(result: SimulationResult, n_pairs: int = 20_000,
                         n_buckets: int = 8, seed: int = 0) -> dict:
    """Compare empirical pair covariances against the accumulated
    variance at the split time, bucketed by split time.

    Returns per-bucket rows and the maximum absolute deviation in
    standard-error units.
    """
    profile = result.profile
    ds, prods = pair_covariance_samples(result, n_pairs, seed=seed)
    edges = np.linspace(0.0, profile.horizon, n_buckets + 1)
    rows = []
    worst = 0.0
    for k in range(n_buckets):
        hi_edge = edges[k + 1]
        sel = (ds >= edges[k]) & ((ds < hi_edge) if k < n_buckets - 1 else (ds <= hi_edge))
        if np.count_nonzero(sel) < 10:
            continue
        sample = prods[sel]
        mean = float(sample.mean())
        se = float(sample.std(ddof=1) / math.sqrt(sample.size))
        mid_d = float(ds[sel].mean())
        target = profile.covariance(profile.horizon, profile.horizon, mid_d)
        dev = abs(mean - target) / se if se > 0 else 0.0
        worst = max(worst, dev)
        rows.append({"d_mean": mid_d, "covariance": mean, "se": se,
                     "target": target, "deviation_se": dev, "n": int(sample.size)})
    return {"buckets": rows, "max_deviation_se": worst}


def estimate_population(profile: SpeedProfile, prune: PruneRule | None) -> float:
    """Rough expected final population, used to size replicate batches."""
    t = float(profile.horizon)
    if prune is None:
        return math.exp(min(t, 25.0))
    eff = prune.depth + 1.06 * math.log(max(t, 2.0))
    exponent = min(SQRT2 * eff - eff * eff / (2.0 * t), t)
    lead = SQRT2 * t - eff
    geom = math.sqrt(t) / (math.sqrt(2.0 * math.pi) * max(lead, 1.0))
    return max(min(math.exp(exponent) * geom, math.exp(min(t, 25.0))), 1.0)


def batch_size_for(profile: SpeedProfile, prune: PruneRule | None,
                   target_rows: float = 2.0e6) -> int:
    return max(1, int(target_rows / estimate_population(profile, prune)))
