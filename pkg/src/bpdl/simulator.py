"""Event-driven simulation of the spatial birth and death process with logistic competition.

Two engines sample the same law:

``faithful``
    Proposes events at the envelope rates ``(C*gbar*N, mbar*N, abar*Ubar*N^2)``
    and thins them.  Rejected proposals are fictitious events.
``indexed``
    Draws events from the exact total rates, keeping every competition
    sum ``S_i`` current through a cell list.

``auto`` (the default) uses the indexed engine whenever the population
exceeds ``threshold`` individuals and the faithful one otherwise.
"""

from __future__ import annotations

import csv
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import _engine as E
from .errors import BudgetExceeded, EmptyPopulation, EnvelopeViolated, IndexStale
from .model import ModelParams, Population
from .rng import Stream

DEFAULT_EVENT_CAP = 10**8
DEFAULT_THRESHOLD = 200
_AUTO_CHUNK = 4096

KIND_NAMES = {
    E.BIRTH: "birth",
    E.NDEATH: "natural_death",
    E.CDEATH: "competition_death",
    E.FICTITIOUS: "fictitious",
    E.LOST: "lost",
}


@dataclass(frozen=True)
class Event:
    """One proposal of the event loop.

    ``index`` is the storage slot of the affected individual (the child's slot
    for a birth), ``parent`` the parent's slot for births and the competitor
    ``j`` for faithful competition deaths.
    """

    kind: str
    time: float
    index: int = -1
    parent: int = -1
    id: int = -1
    position: np.ndarray | None = None


@dataclass
class LineageTable:
    """Every individual that ever lived: ``birth``/``death`` times, position, parent id.

    Rows are indexed by individual id.  ``death`` is ``inf`` for the living;
    ``kind`` is 1 for natural and 2 for competition deaths, -1 if alive.
    """

    birth: np.ndarray
    death: np.ndarray
    positions: np.ndarray
    parent: np.ndarray
    kind: np.ndarray
    t0: float = 0.0

    def __len__(self):
        return len(self.birth)

    def alive_at(self, t: float) -> np.ndarray:
        return (self.birth <= t) & (self.death > t)


@dataclass
class Trace:
    """Snapshots of one replicate.

    Arrays ``t, count, births, ndeaths, cdeaths, fictitious`` are aligned with
    the snapshot schedule.  ``positions`` holds one ``(n, d)`` array per
    snapshot when requested; ``load`` holds the interaction load.
    """

    replicate: int
    seed: int
    engine: str
    t: np.ndarray
    count: np.ndarray
    births: np.ndarray
    ndeaths: np.ndarray
    cdeaths: np.ndarray
    fictitious: np.ndarray
    positions: list | None = None
    load: np.ndarray | None = None
    extinction_time: float | None = None
    lineage: LineageTable | None = None
    n_events: int = 0
    lost: int = 0
    final: Population | None = None
    summary: object = None

    def snapshot_index(self, t: float) -> int:
        from .errors import NoSnapshot

        k = np.flatnonzero(np.isclose(self.t, t, rtol=0, atol=1e-12))
        if len(k) == 0:
            raise NoSnapshot(f"no snapshot at t={t!r} in replicate {self.replicate}")
        return int(k[0])

    def positions_at(self, t: float) -> np.ndarray:
        from .errors import NoSnapshot

        if self.positions is None:
            raise NoSnapshot("trace was recorded without positions")
        return self.positions[self.snapshot_index(t)]

    @property
    def extinct(self) -> bool:
        return self.extinction_time is not None


def make_cell_grid(params: ModelParams, positions: np.ndarray, max_cells: int = 1 << 20) -> np.ndarray:
    """Cell grid ``[d, periodic, n.., lo.., h..]`` with cell side >= the competition radius."""
    dom = params.domain
    d = dom.d
    R = params.U.support_radius
    if dom.periodic:
        lo = -np.asarray(dom.side) / 2
        extent = np.asarray(dom.side, dtype=float)
    elif dom.mode == "box":
        b = np.asarray(dom.bounds)
        lo, extent = b[:, 0].copy(), b[:, 1] - b[:, 0]
    else:
        if len(positions) == 0:
            mn, mx = -np.ones(d), np.ones(d)
        else:
            mn, mx = positions.min(axis=0), positions.max(axis=0)
        pad = np.maximum(0.25 * (mx - mn), 1.0)
        if np.isfinite(R):
            pad = np.maximum(pad, 2 * R)
        lo, extent = mn - pad, (mx - mn) + 2 * pad
    if not np.isfinite(R):
        n = np.ones(d, dtype=int)
    else:
        hmin = R if R > 0 else 1.0
        per_axis = max(1, int(max_cells ** (1.0 / d)))
        n = np.clip(np.floor(extent / hmin).astype(int), 1, per_axis)
        if dom.periodic:
            n[n < 3] = 1
    h = extent / n
    if not dom.periodic:
        h = h * (1 + 1e-12)
    return np.concatenate([[d, 1.0 if dom.periodic else 0.0], n, lo, h]).astype(float)


class SimState:
    """Mutable simulation state for one replicate.

    Parameters
    ----------
    params : ModelParams
    population : Population
        Initial configuration (copied).
    seed, replicate : int
        Stream identity; ignored if ``stream`` is given.
    engine : {"auto", "faithful", "indexed"}
    threshold : int
        Population size above which ``auto`` switches to the indexed engine.
    record_lineage : bool
        Keep the full birth/death table (needed for exact path integrals).
    """

    def __init__(self, params: ModelParams, population: Population, seed: int = 0, replicate: int = 0,
                 stream: Stream | None = None, t0: float = 0.0, engine: str = "auto",
                 threshold: int = DEFAULT_THRESHOLD, record_lineage: bool = False, capacity: int | None = None):
        if engine not in ("auto", "faithful", "indexed"):
            raise ValueError(f"unknown engine {engine!r}")
        self.params = params
        self.stream = stream if stream is not None else Stream(seed, replicate)
        self.seed, self.replicate = self.stream.master, self.stream.replicate
        self.engine = engine
        self.threshold = int(threshold)
        d = params.d
        pos0 = np.asarray(population.positions, dtype=float).reshape(-1, d)
        pos0 = np.array([params.domain.wrap(p) for p in pos0]).reshape(-1, d)
        n0 = len(pos0)
        cap = max(64, 2 * n0, capacity or 0)
        self.pos = np.zeros((cap, d))
        self.pos[:n0] = pos0
        self.ids = np.full(cap, -1, dtype=np.int64)
        self.ids[:n0] = np.arange(n0)
        self.iscal = np.zeros(9, dtype=np.int64)
        self.iscal[E.N_] = n0
        self.iscal[E.NEXT_ID] = n0
        self.fscal = np.array([float(t0), np.nan])
        self.n0 = n0
        self.t0 = float(t0)
        self._dom = params.domain.encode()
        self._gam, self._mu, self._alp = params.gamma.encode(), params.mu.encode(), params.alpha.encode()
        self._U, self._D, self._Dt = params.U.encode(), params.D.encode(), params.D_env.encode()
        self._bars = params.bars()
        self.flags = np.array([int(record_lineage), int(params.gamma.is_constant), int(params.mu.is_constant)],
                              dtype=np.int64)
        capL = max(256, 4 * n0) if record_lineage else 1
        self.lin_bt = np.zeros(capL)
        self.lin_dt = np.full(capL, np.inf)
        self.lin_pos = np.zeros((capL, d))
        self.lin_par = np.full(capL, -1, dtype=np.int64)
        self.lin_kind = np.full(capL, -1, dtype=np.int64)
        if record_lineage:
            self.lin_bt[:n0] = t0
            self.lin_pos[:n0] = pos0
            self.iscal[E.LIN_LEN] = n0
        self._ev = np.zeros(5 + d)
        self._alloc_index(cap)
        self.index_valid = False

    # ------------------------------------------------------------------
    # basic views
    @property
    def t(self) -> float:
        return float(self.fscal[E.T_])

    @property
    def count(self) -> int:
        return int(self.iscal[E.N_])

    @property
    def positions(self) -> np.ndarray:
        return self.pos[:self.count].copy()

    @property
    def population(self) -> Population:
        n = self.count
        return Population(self.pos[:n].copy(), self.ids[:n].copy())

    @property
    def counters(self) -> dict:
        s = self.iscal
        return {"births": int(s[E.BIRTHS]), "natural_deaths": int(s[E.NDEATHS]),
                "competition_deaths": int(s[E.CDEATHS]), "fictitious": int(s[E.FICT]),
                "lost": int(s[E.LOSTS]), "events": int(s[E.EVENTS])}

    @property
    def lineage(self) -> LineageTable | None:
        if not self.flags[E.F_RECORD]:
            return None
        k = int(self.iscal[E.LIN_LEN])
        return LineageTable(self.lin_bt[:k].copy(), self.lin_dt[:k].copy(), self.lin_pos[:k].copy(),
                            self.lin_par[:k].copy(), self.lin_kind[:k].copy(), self.t0)

    def event_rates(self) -> tuple[float, float, float]:
        """Envelope rates ``(m1, m2, m3)`` of the faithful engine."""
        n = self.count
        g, m, a, u, C = self._bars
        return C * g * n, m * n, a * u * n * n

    def exact_rates(self) -> tuple[float, float, float]:
        """Exact total rates (birth, natural death, competition death), by brute force."""
        pop = self.population
        p = self.params
        if len(pop) == 0:
            return 0.0, 0.0, 0.0
        S = pop.competition_sums(p)
        x = pop.positions
        return (float(np.sum(p.gamma(x))), float(np.sum(p.mu(x))), float(np.sum(p.alpha(x) * S)))

    # ------------------------------------------------------------------
    # buffers
    def _alloc_index(self, cap):
        P = 1
        while P < cap:
            P *= 2
        self.S = np.zeros(cap)
        self.nxt = np.full(cap, -1, dtype=np.int64)
        self.prv = np.full(cap, -1, dtype=np.int64)
        self.cell_of = np.full(cap, -1, dtype=np.int64)
        self.tree_b = np.zeros(2 * P)
        self.tree_d = np.zeros(2 * P)
        self.tree_c = np.zeros(2 * P)
        self.head = np.full(1, -1, dtype=np.int64)
        self.grid = None

    def _grow(self):
        cap = 2 * self.pos.shape[0]
        pos = np.zeros((cap, self.pos.shape[1]))
        pos[:len(self.pos)] = self.pos
        ids = np.full(cap, -1, dtype=np.int64)
        ids[:len(self.ids)] = self.ids
        self.pos, self.ids = pos, ids
        self._alloc_index(cap)
        self.index_valid = False

    def _grow_lineage(self):
        k = len(self.lin_bt)
        self.lin_bt = np.concatenate([self.lin_bt, np.zeros(k)])
        self.lin_dt = np.concatenate([self.lin_dt, np.full(k, np.inf)])
        self.lin_pos = np.concatenate([self.lin_pos, np.zeros_like(self.lin_pos)])
        self.lin_par = np.concatenate([self.lin_par, np.full(k, -1, dtype=np.int64)])
        self.lin_kind = np.concatenate([self.lin_kind, np.full(k, -1, dtype=np.int64)])

    def rebuild_index(self):
        """Recompute the cell grid, every competition sum and the rate trees."""
        n = self.count
        self.grid = make_cell_grid(self.params, self.pos[:n])
        ncell = int(np.prod(self.grid[2:2 + self.params.d]))
        if len(self.head) != ncell:
            self.head = np.full(ncell, -1, dtype=np.int64)
        off = E.build_index(self.pos, n, self.S, self.head, self.nxt, self.prv, self.cell_of, self.grid,
                            self._dom, self._U, self._gam, self._mu, self._alp,
                            self.tree_b, self.tree_d, self.tree_c)
        if off:
            raise IndexStale(f"{off} individuals fell outside a freshly built grid")
        self.index_valid = True

    def check_index(self, rtol: float = 1e-9):
        """Compare cached competition sums with the brute-force oracle."""
        if not self.index_valid:
            return
        ref = self.population.competition_sums(self.params)
        got = self.S[:self.count]
        if not np.allclose(got, ref, rtol=rtol, atol=rtol * max(1.0, self.params.U_bar)):
            k = int(np.argmax(np.abs(got - ref)))
            raise IndexStale(f"S[{k}] = {got[k]!r}, brute force {ref[k]!r}")

    # ------------------------------------------------------------------
    # event loop
    def _choose(self, engine):
        engine = engine or self.engine
        if engine == "auto":
            return "indexed" if self.count > self.threshold else "faithful"
        return engine

    def advance(self, t_stop: float, max_events: int, engine: str | None = None) -> tuple[int, int]:
        """Run until ``t_stop``, extinction or ``max_events`` proposals.

        Returns ``(status, events_done)`` with status one of
        ``REACHED, BUDGET, EXTINCT`` from the engine module.
        """
        start = int(self.iscal[E.EVENTS])
        auto = (engine or self.engine) == "auto"
        while True:
            left = int(max_events) - (int(self.iscal[E.EVENTS]) - start)
            if left <= 0:
                return E.BUDGET, int(self.iscal[E.EVENTS]) - start
            chunk = min(left, _AUTO_CHUNK) if auto else left
            eng = self._choose(engine)
            if eng == "indexed":
                if not self.index_valid:
                    self.rebuild_index()
                st = E.indexed_loop(self.pos, self.ids, self.S, self.head, self.nxt, self.prv, self.cell_of,
                                    self.grid, self._dom, self._gam, self._mu, self._alp, self._U, self._D,
                                    self._Dt, self._bars, self.flags, self.iscal, self.fscal, self.stream.state,
                                    self.tree_b, self.tree_d, self.tree_c, self.lin_bt, self.lin_dt,
                                    self.lin_pos, self.lin_par, self.lin_kind, 0, float(t_stop), chunk, self._ev)
            else:
                before = int(self.iscal[E.EVENTS])
                st = E.faithful_loop(self.pos, self.ids, self._dom, self._gam, self._mu, self._alp, self._U,
                                     self._D, self._Dt, self._bars, self.flags, self.iscal, self.fscal,
                                     self.stream.state, self.lin_bt, self.lin_dt, self.lin_pos, self.lin_par,
                                     self.lin_kind, 0, float(t_stop), chunk, self._ev)
                if int(self.iscal[E.EVENTS]) != before:
                    self.index_valid = False
            if st == E.NEED_CAP:
                self._grow()
            elif st == E.NEED_LINEAGE:
                self._grow_lineage()
            elif st == E.REBUILD:
                self.index_valid = False
            elif st == E.DISPERSAL_STUCK:
                raise EnvelopeViolated("dispersal thinning accepted no proposal in 1e7 tries")
            elif st in (E.REACHED, E.EXTINCT):
                return st, int(self.iscal[E.EVENTS]) - start

    def _event(self) -> Event:
        ev = self._ev
        kind = KIND_NAMES[int(ev[0])]
        pos = ev[5:].copy() if kind in ("birth", "natural_death", "competition_death", "lost") else None
        return Event(kind, float(ev[1]), int(ev[2]), int(ev[3]), int(ev[4]), pos)

    def step(self, engine: str = "faithful") -> Event:
        """Execute one proposal (faithful engine by default) and return it."""
        if self.count == 0:
            raise EmptyPopulation("no individuals left; extinction is absorbing")
        self._ev[0] = E.NO_EVENT
        st, done = self.advance(np.inf, 1, engine)
        if st == E.REACHED and done == 0:
            # every rate is zero: the state is frozen forever
            return Event("fictitious", np.inf)
        return self._event()

    # ------------------------------------------------------------------
    def run(self, t_end: float | None = None, snapshot_times: Sequence[float] | None = None,
            max_events: int | None = None, until_extinct: bool = False, keep_positions: bool = False,
            load_radius: float | None = None, event_cap: int = DEFAULT_EVENT_CAP) -> Trace:
        """Advance the state and record snapshots.

        The horizon is ``t_end`` (time), ``max_events`` (number of proposals)
        or ``until_extinct``.  Snapshots at ``snapshot_times`` record the
        count, the cumulative event counters and optionally positions and
        the interaction load ``sum_{|x_i|<=r} sum_j U(x_i, x_j)``.

        Raises
        ------
        BudgetExceeded
            More than ``event_cap`` proposals were needed.
        """
        if t_end is None and max_events is None and not until_extinct:
            raise ValueError("give a horizon: t_end, max_events or until_extinct")
        horizon = np.inf if t_end is None else float(t_end)
        snaps = () if snapshot_times is None else np.asarray(snapshot_times, dtype=float).ravel()
        times = sorted(float(s) for s in snaps if self.t <= s <= horizon)
        if t_end is not None and (not times or times[-1] < horizon):
            times.append(horizon)
        budget = int(min(max_events, event_cap)) if max_events is not None else int(event_cap)
        rows = []
        pos_snaps = [] if keep_positions else None
        loads = [] if load_radius is not None else None
        ext_time = None
        used = 0

        def snap(ts):
            c = self.counters
            rows.append((ts, self.count, c["births"], c["natural_deaths"], c["competition_deaths"], c["fictitious"]))
            if keep_positions:
                pos_snaps.append(self.positions)
            if loads is not None:
                loads.append(interaction_load_of(self.positions, self.params, load_radius))

        targets = times + ([np.inf] if t_end is None else [])
        for ts in targets:
            if ext_time is None:
                st, done = self.advance(ts, budget - used)
                used += done
                if st == E.EXTINCT:
                    ext_time = self.t
                elif st == E.BUDGET:
                    if max_events is not None and used >= max_events:
                        snap(self.t)
                        break
                    err = BudgetExceeded(f"replicate {self.replicate}: more than {event_cap} events by t={self.t:g}")
                    err.state = self
                    raise err
            if np.isfinite(ts):
                snap(ts)
            elif ext_time is not None:
                snap(ext_time)
        arr = np.array(rows, dtype=float).reshape(-1, 6)
        return Trace(
            replicate=self.replicate, seed=self.seed, engine=self.engine,
            t=arr[:, 0], count=arr[:, 1].astype(np.int64), births=arr[:, 2].astype(np.int64),
            ndeaths=arr[:, 3].astype(np.int64), cdeaths=arr[:, 4].astype(np.int64),
            fictitious=arr[:, 5].astype(np.int64), positions=pos_snaps,
            load=None if loads is None else np.array(loads), extinction_time=ext_time,
            lineage=self.lineage, n_events=int(self.iscal[E.EVENTS]), lost=int(self.iscal[E.LOSTS]),
            final=self.population,
        )


def event_rates(state: SimState) -> tuple[float, float, float]:
    return state.event_rates()


def step(state: SimState) -> Event:
    """One faithful-engine proposal."""
    return state.step("faithful")


def indexed_engine_step(state: SimState, debug: bool = False) -> Event:
    """One exact-rate event; with ``debug`` the cached sums are checked afterwards."""
    ev = state.step("indexed")
    if debug:
        state.check_index()
    return ev


def run(state: SimState, **kwargs) -> Trace:
    return state.run(**kwargs)


def multiplicity_check(pop: Population | np.ndarray, params: ModelParams | None = None) -> int | None:
    """Largest number of individuals sharing one exact position (``None`` on a lattice)."""
    if params is not None and params.domain.mode == "lattice":
        return None
    x = pop.positions if isinstance(pop, Population) else np.asarray(pop, dtype=float)
    if len(x) == 0:
        return 0
    _, counts = np.unique(x.reshape(len(x), -1), axis=0, return_counts=True)
    return int(counts.max())


def interaction_load_of(positions: np.ndarray, params: ModelParams, radius: float) -> float:
    """``sum_i 1{|x_i| <= r} sum_j U(x_i, x_j)`` with the self pair included."""
    x = np.asarray(positions, dtype=float).reshape(-1, params.d)
    if len(x) == 0:
        return 0.0
    inner = np.linalg.norm(x, axis=1) <= radius
    if not inner.any():
        return 0.0
    S = E.competition_sums_brute(np.ascontiguousarray(x), len(x), params.domain.encode(), params.U.encode())
    return float(S[inner].sum())


# ---------------------------------------------------------------------------
# replicate fleet


@dataclass
class FleetSpec:
    """Everything a worker needs to run one replicate (picklable)."""

    params: ModelParams
    initial: object
    t_end: float | None
    seed: int
    snapshot_times: tuple = ()
    engine: str = "auto"
    threshold: int = DEFAULT_THRESHOLD
    keep_positions: bool = False
    load_radius: float | None = None
    record_lineage: bool = False
    until_extinct: bool = False
    event_cap: int = DEFAULT_EVENT_CAP
    reducer: Callable | None = None
    keep_lineage: bool = True
    extra: dict = field(default_factory=dict)


def initial_population(initial, stream: Stream, d: int) -> Population:
    if isinstance(initial, Population):
        return initial.copy()
    if callable(initial):
        return initial(stream)
    return Population(np.asarray(initial, dtype=float).reshape(-1, d))


def run_one(spec: FleetSpec, replicate: int) -> Trace:
    stream = Stream(spec.seed, replicate)
    pop = initial_population(spec.initial, stream, spec.params.d)
    state = SimState(spec.params, pop, stream=stream, engine=spec.engine, threshold=spec.threshold,
                     record_lineage=spec.record_lineage)
    tr = state.run(t_end=spec.t_end, snapshot_times=spec.snapshot_times, until_extinct=spec.until_extinct,
                   keep_positions=spec.keep_positions, load_radius=spec.load_radius, event_cap=spec.event_cap)
    if spec.reducer is not None:
        tr.summary = spec.reducer(tr)
        if not spec.keep_lineage:
            tr.lineage = None
    return tr


def _run_block(args):
    spec, reps = args
    return [run_one(spec, r) for r in reps]


def default_threads() -> int:
    env = os.environ.get("BPDL_THREADS")
    return max(1, int(env)) if env else 1


def run_replicates(spec: FleetSpec, replicates: int | Sequence[int], threads: int | None = None) -> list[Trace]:
    """Run a fleet of replicates; results do not depend on ``threads``."""
    reps = list(range(replicates)) if isinstance(replicates, int) else list(replicates)
    threads = threads or default_threads()
    if threads <= 1 or len(reps) < 2:
        return [run_one(spec, r) for r in reps]
    blocks = [reps[i::threads] for i in range(threads)]
    out = {}
    with ProcessPoolExecutor(max_workers=threads) as ex:
        for block, res in zip(blocks, ex.map(_run_block, [(spec, b) for b in blocks])):
            for r, tr in zip(block, res):
                out[r] = tr
    return [out[r] for r in reps]


# ---------------------------------------------------------------------------
# trace files


def _fmt(x) -> str:
    return format(float(x), ".17g")


def write_traces_csv(traces: Sequence[Trace], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["replicate_id", "t", "count", "births_cum", "ndeaths_cum", "cdeaths_cum", "fictitious_cum"])
        for tr in traces:
            for k in range(len(tr.t)):
                w.writerow([tr.replicate, _fmt(tr.t[k]), tr.count[k], tr.births[k], tr.ndeaths[k],
                            tr.cdeaths[k], tr.fictitious[k]])


def write_positions_csv(traces: Sequence[Trace], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        d = None
        for tr in traces:
            if tr.positions is None:
                continue
            for k, x in enumerate(tr.positions):
                if d is None:
                    d = x.shape[1] if x.ndim == 2 else 1
                    w.writerow(["replicate_id", "t"] + [f"x_{i + 1}" for i in range(d)])
                for row in x.reshape(-1, d):
                    w.writerow([tr.replicate, _fmt(tr.t[k])] + [_fmt(v) for v in row])


def read_traces_csv(path, positions_path=None, d: int = 1) -> list[Trace]:
    """Load traces written by :func:`write_traces_csv` (and optionally positions)."""
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    traces = []
    for rep in np.unique(data[:, 0]).astype(int):
        rows = data[data[:, 0] == rep]
        traces.append(Trace(int(rep), -1, "file", rows[:, 1], rows[:, 2].astype(np.int64),
                            rows[:, 3].astype(np.int64), rows[:, 4].astype(np.int64),
                            rows[:, 5].astype(np.int64), rows[:, 6].astype(np.int64)))
    if positions_path is not None:
        pdata = np.loadtxt(positions_path, delimiter=",", skiprows=1, ndmin=2)
        for tr in traces:
            sel = pdata[pdata[:, 0] == tr.replicate]
            tr.positions = [sel[sel[:, 1] == t, 2:2 + d] for t in tr.t]
    return traces


def write_json(obj, path) -> None:
    with open(path, "w") as fh:
        json.dump(to_jsonable(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


def to_jsonable(obj):
    """Convert numpy scalars/arrays and non-finite floats for JSON output."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [to_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if np.isnan(x):
            return "NaN"
        if np.isinf(x):
            return "Infinity" if x > 0 else "-Infinity"
        return float(format(x, ".17g"))
    return obj
