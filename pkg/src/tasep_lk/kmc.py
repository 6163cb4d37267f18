"""Exact continuous-time simulation of TASEP with Langmuir kinetics.

Events and rates on a lattice of N sites (0-based here):

* entry at site 0 with rate alpha when it is empty,
* hop i -> i+1 with rate 1 when i is occupied and i+1 empty,
* exit from site N-1 with rate beta when it is occupied,
* attachment at any empty site with rate omega_a = Omega_a / N,
* detachment from any occupied site with rate omega_d = Omega_d / N.

Each of the three bulk categories has one rate shared by all its members,
so the members live in swap-remove index sets and an event is drawn in O(1):
pick the category by its total rate, then a uniform member.
"""

from __future__ import annotations

import dataclasses
import math
import time
import warnings
from dataclasses import dataclass, field

import numba
import numpy as np

from .domain_wall import CompositeProfile, meanfield_density

RNG_ALGORITHM = "PCG64 (numpy.random.default_rng, SeedSequence-seeded)"

ENTRY, EXIT, HOP, ATTACH, DETACH = range(5)
EVENT_NAMES = ("entry", "exit", "hop", "attach", "detach")


class AbsorbingState(RuntimeError):
    """No event is enabled; the chain cannot leave the current configuration."""


class NonStationaryWarning(UserWarning):
    pass


class ConfigMismatch(ValueError):
    pass


@dataclass(frozen=True)
class LatticeConfig:
    n_sites: int
    alpha: float
    beta: float
    omega_a: float
    omega_d: float
    seed: int = 0
    burn_in_time: float | None = None
    measure_time: float = 1e4
    sample_interval: float | None = None
    initial: str | float = "empty"
    stationarity_threshold: float = 0.1

    def __post_init__(self):
        if int(self.n_sites) != self.n_sites or self.n_sites < 2:
            raise ValueError(f"n_sites must be an integer >= 2, got {self.n_sites}")
        for name in ("alpha", "beta", "omega_a", "omega_d"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v >= 0.0):
                raise ValueError(f"{name} must be finite and >= 0, got {v}")
        if self.burn_in_time is not None and not self.burn_in_time > 0:
            raise ValueError("burn_in_time must be > 0")
        if not self.measure_time > 0:
            raise ValueError("measure_time must be > 0")
        if self.sample_interval is not None and not 0 < self.sample_interval <= self.measure_time:
            raise ValueError("sample_interval must lie in (0, measure_time]")
        if isinstance(self.initial, str):
            if self.initial not in ("empty", "full"):
                raise ValueError("initial must be 'empty', 'full' or a density in [0, 1]")
        elif not 0.0 <= float(self.initial) <= 1.0:
            raise ValueError("initial density must lie in [0, 1]")

    @property
    def site_attach_rate(self) -> float:
        return self.omega_a / self.n_sites

    @property
    def site_detach_rate(self) -> float:
        return self.omega_d / self.n_sites

    @property
    def resolved_burn_in(self) -> float:
        if self.burn_in_time is not None:
            return float(self.burn_in_time)
        n = self.n_sites
        slow = min(self.omega_a, self.omega_d)
        if slow <= 0.0:
            return 10.0 * n
        return max(10.0 * n, 5.0 * n / slow)

    @property
    def resolved_sample_interval(self) -> float:
        if self.sample_interval is not None:
            return float(self.sample_interval)
        return self.measure_time / 20.0

    def rates(self) -> np.ndarray:
        return np.array([self.alpha, self.beta, 1.0,
                         self.site_attach_rate, self.site_detach_rate])

    def as_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["resolved_burn_in"] = self.resolved_burn_in
        d["resolved_sample_interval"] = self.resolved_sample_interval
        return d

    def replace(self, **changes) -> "LatticeConfig":
        return dataclasses.replace(self, **changes)


def particle_hole_transform(config: LatticeConfig) -> LatticeConfig:
    """(alpha, beta, Omega_a, Omega_d) -> (beta, alpha, Omega_d, Omega_a)."""
    return config.replace(alpha=config.beta, beta=config.alpha,
                          omega_a=config.omega_d, omega_d=config.omega_a)


# --- index sets -------------------------------------------------------------
# sets[k] holds members, pos[k, i] the slot of site i in set k (or -1).
_OCC, _EMP, _HOP = 0, 1, 2


@numba.njit(cache=True, inline="always")
def _category_rates(occ, counts, rates, n, out):
    out[ENTRY] = rates[ENTRY] if occ[0] == 0 else 0.0
    out[EXIT] = rates[EXIT] if occ[n - 1] == 1 else 0.0
    out[HOP] = rates[HOP] * counts[_HOP]
    out[ATTACH] = rates[ATTACH] * counts[_EMP]
    out[DETACH] = rates[DETACH] * counts[_OCC]
    return out[0] + out[1] + out[2] + out[3] + out[4]


@numba.njit(cache=True, inline="always")
def _select(occ, members, counts, cat_rates, total, rng, n):
    """Draw (category, site) proportionally to rate."""
    u = rng.random() * total
    cat = 4
    acc = 0.0
    for c in range(5):
        acc += cat_rates[c]
        if u < acc and cat_rates[c] > 0.0:
            cat = c
            break
    if cat == 4 and cat_rates[4] == 0.0:
        # round-off fell past the last enabled category
        for c in range(4, -1, -1):
            if cat_rates[c] > 0.0:
                cat = c
                break
    if cat == ENTRY:
        return cat, 0
    if cat == EXIT:
        return cat, n - 1
    k = _HOP if cat == HOP else (_EMP if cat == ATTACH else _OCC)
    # floor(u * m) is uniform on 0..m-1 up to 2**-53 bias
    j = int(rng.random() * counts[k])
    if j >= counts[k]:
        j = counts[k] - 1
    return cat, members[k, j]


@numba.njit(cache=True)
def _advance(occ, members, pos, counts, since, acc, rates, event_counts,
             t, t_end, max_events, rng):
    """Run events until t_end or max_events; returns (t, n_events, absorbed).

    Set updates are written out by hand: routing the arrays through helper
    calls made the loop ~7x slower (refcounting survives inlining).
    """
    n = occ.shape[0]
    cat_rates = np.zeros(5)
    done = 0
    while done < max_events:
        total = _category_rates(occ, counts, rates, n, cat_rates)
        if total <= 0.0:
            return t_end if t_end < np.inf else t, done, True
        dt = rng.exponential(1.0 / total)
        if t + dt > t_end:
            # memoryless: discard the pending event at the window edge
            return t_end, done, False
        t += dt

        u = rng.random() * total
        cat = -1
        cum = 0.0
        for c in range(5):
            cum += cat_rates[c]
            if u < cum and cat_rates[c] > 0.0:
                cat = c
                break
        if cat < 0:
            for c in range(4, -1, -1):
                if cat_rates[c] > 0.0:
                    cat = c
                    break
        if cat == ENTRY:
            i = 0
        elif cat == EXIT:
            i = n - 1
        else:
            k = _HOP if cat == HOP else (_EMP if cat == ATTACH else _OCC)
            j = int(rng.random() * counts[k])
            if j >= counts[k]:
                j = counts[k] - 1
            i = members[k, j]

        n_flip = 2 if cat == HOP else 1
        for f in range(n_flip):
            s = i + f
            if occ[s] == 1:
                acc[s] += t - since[s]
                occ[s] = 0
                src_set, dst_set = _OCC, _EMP
            else:
                since[s] = t
                occ[s] = 1
                src_set, dst_set = _EMP, _OCC
            # remove s from src_set
            p = pos[src_set, s]
            last = counts[src_set] - 1
            m = members[src_set, last]
            members[src_set, p] = m
            pos[src_set, m] = p
            pos[src_set, s] = -1
            counts[src_set] = last
            # add s to dst_set
            c = counts[dst_set]
            members[dst_set, c] = s
            pos[dst_set, s] = c
            counts[dst_set] = c + 1
            # bonds s-1 -> s and s -> s+1
            for b in range(s - 1, s + 1):
                if b < 0 or b >= n - 1:
                    continue
                if occ[b] == 1 and occ[b + 1] == 0:
                    if pos[_HOP, b] < 0:
                        c = counts[_HOP]
                        members[_HOP, c] = b
                        pos[_HOP, b] = c
                        counts[_HOP] = c + 1
                else:
                    p = pos[_HOP, b]
                    if p >= 0:
                        last = counts[_HOP] - 1
                        m = members[_HOP, last]
                        members[_HOP, p] = m
                        pos[_HOP, m] = p
                        pos[_HOP, b] = -1
                        counts[_HOP] = last
        event_counts[cat] += 1
        done += 1
    return t, done, False


@numba.njit(cache=True)
def _draw_histogram(occ, members, counts, rates, rng, n_draws):
    n = occ.shape[0]
    cat_rates = np.zeros(5)
    hist = np.zeros((5, n), dtype=np.int64)
    total = _category_rates(occ, counts, rates, n, cat_rates)
    for _ in range(n_draws):
        cat, i = _select(occ, members, counts, cat_rates, total, rng, n)
        hist[cat, i] += 1
    return hist


@dataclass
class LatticeState:
    occupation: np.ndarray
    time: float = 0.0
    event_counts: np.ndarray = field(default_factory=lambda: np.zeros(5, dtype=np.int64))
    # bookkeeping for O(1) event selection and time-weighted averaging
    members: np.ndarray = field(default=None, repr=False)
    pos: np.ndarray = field(default=None, repr=False)
    counts: np.ndarray = field(default=None, repr=False)
    since: np.ndarray = field(default=None, repr=False)
    acc: np.ndarray = field(default=None, repr=False)

    @classmethod
    def from_occupation(cls, occupation, t: float = 0.0) -> "LatticeState":
        occ = np.ascontiguousarray(occupation, dtype=np.int8)
        if occ.ndim != 1 or occ.size < 2 or not np.all((occ == 0) | (occ == 1)):
            raise ValueError("occupation must be a 0/1 vector of length >= 2")
        n = occ.size
        st = cls(occ.copy(), float(t))
        st.members = np.zeros((3, n), dtype=np.int64)
        st.pos = np.full((3, n), -1, dtype=np.int64)
        st.counts = np.zeros(3, dtype=np.int64)
        st.since = np.full(n, float(t))
        st.acc = np.zeros(n)
        st._rebuild()
        return st

    def _rebuild(self):
        occ, n = self.occupation, self.occupation.size
        self.pos[:] = -1
        self.counts[:] = 0
        for i in range(n):
            k = _OCC if occ[i] else _EMP
            self.members[k, self.counts[k]] = i
            self.pos[k, i] = self.counts[k]
            self.counts[k] += 1
        for i in range(n - 1):
            if occ[i] == 1 and occ[i + 1] == 0:
                self.members[_HOP, self.counts[_HOP]] = i
                self.pos[_HOP, i] = self.counts[_HOP]
                self.counts[_HOP] += 1

    @property
    def n_sites(self) -> int:
        return self.occupation.size

    def copy(self) -> "LatticeState":
        return dataclasses.replace(
            self, occupation=self.occupation.copy(), event_counts=self.event_counts.copy(),
            members=self.members.copy(), pos=self.pos.copy(), counts=self.counts.copy(),
            since=self.since.copy(), acc=self.acc.copy())

    def reset_accumulators(self):
        self.since[:] = self.time
        self.acc[:] = 0.0

    def flush(self) -> np.ndarray:
        """Occupied time per site since the last flush, closed at ``self.time``."""
        out = self.acc + np.where(self.occupation == 1, self.time - self.since, 0.0)
        self.reset_accumulators()
        return out


def initial_state(config: LatticeConfig, rng: np.random.Generator) -> LatticeState:
    n = config.n_sites
    if config.initial == "empty":
        occ = np.zeros(n, dtype=np.int8)
    elif config.initial == "full":
        occ = np.ones(n, dtype=np.int8)
    else:
        occ = (rng.random(n) < float(config.initial)).astype(np.int8)
    return LatticeState.from_occupation(occ)


def enabled_events(state: LatticeState, config: LatticeConfig) -> list[tuple[str, int, float]]:
    """Plain enumeration of (event, site, rate) for every enabled transition."""
    occ = state.occupation
    n = occ.size
    out = []
    if occ[0] == 0 and config.alpha > 0:
        out.append(("entry", 0, config.alpha))
    for i in range(n - 1):
        if occ[i] == 1 and occ[i + 1] == 0:
            out.append(("hop", i, 1.0))
    if occ[n - 1] == 1 and config.beta > 0:
        out.append(("exit", n - 1, config.beta))
    for i in range(n):
        if occ[i] == 0 and config.site_attach_rate > 0:
            out.append(("attach", i, config.site_attach_rate))
        elif occ[i] == 1 and config.site_detach_rate > 0:
            out.append(("detach", i, config.site_detach_rate))
    return out


def total_rate(state: LatticeState, config: LatticeConfig) -> float:
    return sum(r for _, _, r in enabled_events(state, config))


def step(state: LatticeState, config: LatticeConfig, rng: np.random.Generator) -> LatticeState:
    """Apply one Gillespie event in place and return the state."""
    if state.n_sites != config.n_sites:
        raise ConfigMismatch("state and config disagree on the lattice size")
    before = state.occupation.copy()
    counts_before = state.event_counts.copy()
    t, done, absorbed = _advance(state.occupation, state.members, state.pos, state.counts,
                                 state.since, state.acc, config.rates(), state.event_counts,
                                 state.time, np.inf, 1, rng)
    if absorbed:
        raise AbsorbingState(f"no enabled events at t = {state.time}")
    _check_transition(before, state.occupation, int(np.argmax(state.event_counts - counts_before)))
    state.time = t
    return state


def _check_transition(before: np.ndarray, after: np.ndarray, event: int):
    """The fired event must have been enabled in ``before`` and explain the change."""
    changed = np.flatnonzero(before != after)
    n = before.size
    if event == HOP:
        ok = changed.size == 2 and changed[1] == changed[0] + 1 \
            and before[changed[0]] == 1 and before[changed[1]] == 0
    elif event == ENTRY:
        ok = changed.tolist() == [0] and before[0] == 0
    elif event == EXIT:
        ok = changed.tolist() == [n - 1] and before[n - 1] == 1
    else:
        want = 0 if event == ATTACH else 1
        ok = changed.size == 1 and before[changed[0]] == want
    if not ok:
        raise AssertionError(f"{EVENT_NAMES[event]} fired on a configuration where it was disabled")


def advance(state: LatticeState, config: LatticeConfig, rng: np.random.Generator,
            t_end: float, max_events: int = 2 ** 62) -> int:
    """Run until ``t_end``; returns the number of events fired."""
    t, done, absorbed = _advance(state.occupation, state.members, state.pos, state.counts,
                                 state.since, state.acc, config.rates(), state.event_counts,
                                 state.time, float(t_end), max_events, rng)
    state.time = t
    return int(done)


def event_histogram(state: LatticeState, config: LatticeConfig, rng: np.random.Generator,
                    n_draws: int) -> np.ndarray:
    """Counts of (category, site) over ``n_draws`` selections from one fixed state."""
    return _draw_histogram(state.occupation, state.members, state.counts, config.rates(),
                           rng, int(n_draws))


@dataclass
class ProfileEstimate:
    density: np.ndarray
    stderr: np.ndarray
    n_samples: int
    half_window_gap: float
    event_counts: dict
    config: LatticeConfig
    rng_algorithm: str = RNG_ALGORITHM
    wall_time: float = 0.0

    @property
    def n_sites(self) -> int:
        return self.density.size

    @property
    def x(self) -> np.ndarray:
        n = self.density.size
        return (np.arange(1, n + 1) - 0.5) / n

    def metadata(self) -> dict:
        return {"config": self.config.as_dict(), "seed": self.config.seed,
                "rng_algorithm": self.rng_algorithm, "event_counts": dict(self.event_counts),
                "n_samples": self.n_samples, "half_window_gap": self.half_window_gap}


def run(config: LatticeConfig) -> ProfileEstimate:
    """Burn in from the initial configuration, then time-average site occupations.

    The measurement window is cut into equal batches of about
    ``sample_interval``; their means give per-site standard errors, and the
    two window halves give the stationarity gap.
    """
    t0 = time.perf_counter()
    rng = np.random.default_rng(config.seed)
    state = initial_state(config, rng)
    burn = config.resolved_burn_in
    advance(state, config, rng, burn)
    state.time = burn
    state.reset_accumulators()

    n_batches = max(2, int(round(config.measure_time / config.resolved_sample_interval)))
    length = config.measure_time / n_batches
    batches = np.empty((n_batches, config.n_sites))
    for b in range(n_batches):
        advance(state, config, rng, burn + (b + 1) * length)
        batches[b] = state.flush() / length
    density = batches.mean(axis=0)
    stderr = batches.std(axis=0, ddof=1) / math.sqrt(n_batches)
    half = n_batches // 2
    gap = float(np.max(np.abs(batches[:half].mean(axis=0) - batches[half:].mean(axis=0))))
    counts = {name: int(c) for name, c in zip(EVENT_NAMES, state.event_counts)}
    est = ProfileEstimate(density, stderr, n_batches, gap, counts, config,
                          wall_time=time.perf_counter() - t0)
    if gap > config.stationarity_threshold:
        warnings.warn(f"half-window gap {gap:.3g} exceeds {config.stationarity_threshold}; "
                      "measurement may not be stationary", NonStationaryWarning, stacklevel=2)
    return est


def smoothed_wall_position(density: np.ndarray, window: int | None = None) -> float:
    """x of the steepest increase of the moving-average profile."""
    n = density.size
    w = window or math.ceil(math.sqrt(n))
    w = max(1, min(w, n - 1))
    s = np.convolve(density, np.ones(w) / w, mode="valid")
    d = np.diff(s)
    j = int(np.argmax(d))
    return (j + 0.5 + w / 2.0) / n


@dataclass
class Comparison:
    sup_norm: float
    l1: float
    wall_site_x: float
    wall_gap: float | None
    excluded_halfwidth: float
    n_compared: int

    def as_dict(self) -> dict:
        return dict(self.__dict__)


def compare_to_meanfield(profile: ProfileEstimate, composite: CompositeProfile,
                         exclusion_halfwidth: float = 0.05,
                         rel_tol: float = 1e-12) -> Comparison:
    """Distances between a simulated profile and the mean-field profile at x_i = (i - 1/2)/N."""
    cfg, p = profile.config, composite.params
    pairs = [(cfg.alpha, p.alpha), (cfg.beta, p.beta),
             (cfg.omega_a, p.omega_a), (cfg.omega_d, p.omega_d)]
    if any(abs(a - b) > rel_tol * max(1.0, abs(b)) for a, b in pairs):
        raise ConfigMismatch(f"simulation {pairs} and mean-field parameters differ")
    x = profile.x
    mf = meanfield_density(composite, x)
    keep = np.isfinite(mf)
    if composite.wall is not None:
        keep &= np.abs(x - composite.wall.x_s) > exclusion_halfwidth
    diff = np.abs(profile.density[keep] - mf[keep])
    wall_x = smoothed_wall_position(profile.density)
    gap = abs(wall_x - composite.wall.x_s) if composite.wall is not None else None
    return Comparison(float(diff.max()) if diff.size else math.nan,
                      float(diff.sum() / profile.n_sites), wall_x, gap,
                      exclusion_halfwidth if composite.wall is not None else 0.0,
                      int(keep.sum()))
