"""Monte-Carlo engine: Euler-Maruyama paths, Cox-process randomized
stopping, objective estimators, hitting-time objectives, and the
local-time/exit-time relation check.

Randomness is counter-chunked: paths are partitioned into fixed blocks of
CHUNK_PATHS, each block owning a Philox stream seeded by
(master_seed, block index).  Within a block the exponential thresholds are
drawn first, then the Brownian increments in time order, so every path's
noise is a deterministic function of (master_seed, path index) and results
do not depend on how consumers schedule the work.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterator

import numpy as np

from .model import Grid, ProblemSpec
from .pde_kernel import GridField
from .vi_limit import VISolution

__all__ = ["MCConfig", "MCEstimate", "CoxStoppingSample", "ObjectiveEstimate",
           "StopRegion", "simulate_paths", "sample_cox_stopping",
           "estimate_objective", "estimate_hitting_objective",
           "estimate_local_time_relation", "intensity_function"]

CHUNK_PATHS = 4096


@dataclass(frozen=True)
class MCConfig:
    n_paths: int
    dt_sim: float
    master_seed: int
    antithetic: bool = False

    def __post_init__(self):
        if self.n_paths < 1:
            raise ValueError("n_paths must be >= 1")
        if self.dt_sim <= 0:
            raise ValueError("dt_sim must be positive")


@dataclass(frozen=True)
class MCEstimate:
    mean: float
    se: float
    n_paths: int
    kind: str


def _estimate(values: np.ndarray, kind: str) -> MCEstimate:
    n = len(values)
    se = float(np.std(values, ddof=1) / np.sqrt(n)) if n > 1 else 0.0
    return MCEstimate(float(np.mean(values)), se, n, kind)


def _time_axis(t0: float, T: float, dt: float) -> np.ndarray:
    n_full = int(np.floor((T - t0) / dt + 1e-12))
    times = t0 + dt * np.arange(n_full + 1)
    if T - times[-1] > 1e-12 * max(1.0, T):
        times = np.append(times, T)
    else:
        times[-1] = T
    return times


def _chunk_ranges(n_paths: int) -> Iterator[tuple[int, int, int]]:
    for c, lo in enumerate(range(0, n_paths, CHUNK_PATHS)):
        yield c, lo, min(lo + CHUNK_PATHS, n_paths)


def _chunk_rng(master_seed: int, chunk: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence((master_seed, chunk))))


class PathBatch:
    """Euler-Maruyama paths, materialized chunk by chunk."""

    def __init__(self, spec: ProblemSpec, t0: float, x0: float, mc: MCConfig):
        if t0 >= spec.horizon:
            raise ValueError("t0 must be before the horizon")
        self.spec = spec
        self.t0 = float(t0)
        self.x0 = float(x0)
        self.mc = mc
        self.times = _time_axis(t0, spec.horizon, mc.dt_sim)

    @property
    def n_steps(self) -> int:
        return len(self.times) - 1

    def iter_chunks(self):
        """Yields (theta, states) per chunk: theta are the unit-exponential
        stopping thresholds, states has shape (rows, n_steps+1)."""
        spec, mc = self.spec, self.mc
        for c, lo, hi in _chunk_ranges(mc.n_paths):
            rows = hi - lo
            rng = _chunk_rng(mc.master_seed, c)
            theta = rng.exponential(1.0, size=rows)
            states = np.empty((rows, self.n_steps + 1))
            states[:, 0] = self.x0
            x = states[:, 0].copy()
            for k in range(self.n_steps):
                z = rng.standard_normal(rows)
                if mc.antithetic:
                    # pair (2j, 2j+1): the odd path mirrors its even twin's draw
                    # (CHUNK_PATHS is even, so pairs never straddle chunks)
                    ridx = np.arange(rows)
                    odd = ((lo + ridx) % 2) == 1
                    z = np.where(odd, -z[ridx - odd.astype(int)], z)
                t = self.times[k]
                dt = self.times[k + 1] - t
                b = np.asarray(spec.drift(t, x), dtype=float)
                s = np.asarray(spec.diffusion(t, x), dtype=float)
                x = x + b * dt + s * np.sqrt(dt) * z
                states[:, k + 1] = x
            yield theta, states

    def terminal_states(self) -> np.ndarray:
        out = []
        for _, states in self.iter_chunks():
            out.append(states[:, -1])
        return np.concatenate(out)


def simulate_paths(spec: ProblemSpec, t0: float, x0: float, mc: MCConfig) -> PathBatch:
    return PathBatch(spec, t0, x0, mc)


def intensity_function(pi) -> Callable[[float, np.ndarray], np.ndarray]:
    """Normalize an intensity given as a constant, a GridField (bilinear
    interpolation in (t, x), clamped at the edges) or a callable."""
    if isinstance(pi, GridField):
        field = pi
        times = field.times
        nodes = field.grid.nodes

        def lookup(t, x):
            t = min(max(float(t), times[0]), times[-1])
            j = int(np.searchsorted(times, t, side="right")) - 1
            j = min(max(j, 0), len(times) - 2)
            wt = (t - times[j]) / (times[j + 1] - times[j])
            xc = np.clip(x, nodes[0], nodes[-1])
            row = (1 - wt) * field.values[j] + wt * field.values[j + 1]
            return np.interp(xc, nodes, row)

        return lookup
    if callable(pi):
        return pi
    v = float(pi)
    return lambda t, x: np.full_like(np.asarray(x, dtype=float), v)


def _entropy(rate: np.ndarray) -> np.ndarray:
    """H(pi) = pi - pi*log(pi), continuously extended by 0 at pi = 0."""
    rate = np.asarray(rate, dtype=float)
    out = np.zeros_like(rate)
    pos = rate > 0
    out[pos] = rate[pos] - rate[pos] * np.log(rate[pos])
    return out


@dataclass
class CoxStoppingSample:
    t0: float
    T: float
    tau: np.ndarray
    x_at_tau: np.ndarray
    stopped_by_intensity: np.ndarray
    hazard_at_tau: np.ndarray
    f_at_tau: np.ndarray
    raw_entropy: np.ndarray          # int_t0^tau H(pi) ds, undiscounted
    cond_f: np.ndarray               # int f pi e^-haz + f(X_T) e^-haz_T
    cond_f2: np.ndarray
    cond_reward: np.ndarray          # same with f - (gamma/2) f^2
    cond_entropy: np.ndarray         # int H(pi) e^-haz ds
    gamma: float


def sample_cox_stopping(paths: PathBatch, pi, t0: float | None = None) -> CoxStoppingSample:
    """Stop each path at the first time its accumulated hazard crosses an
    independent unit exponential, capped at the horizon.  The crossing is
    located by linear interpolation inside the step."""
    spec = paths.spec
    gamma = spec.gamma
    pi_fn = intensity_function(pi)
    times = paths.times
    dts = np.diff(times)
    f = spec.reward_on
    acc = {k: [] for k in ("tau", "x", "byint", "haz", "ftau", "rawH",
                           "cf", "cf2", "cr", "cH")}
    for theta, states in paths.iter_chunks():
        rows, n1 = states.shape
        rates = np.empty_like(states)
        for k in range(n1):
            rates[:, k] = pi_fn(times[k], states[:, k])
        if np.any(rates < 0):
            raise ValueError("negative intensity encountered")
        inc = 0.5 * (rates[:, :-1] + rates[:, 1:]) * dts
        haz = np.concatenate([np.zeros((rows, 1)), np.cumsum(inc, axis=1)], axis=1)
        crossed = haz >= theta[:, None]
        byint = crossed[:, -1]
        kstop = np.where(byint, np.argmax(crossed, axis=1), n1 - 1)
        r = np.arange(rows)
        # linear interpolation of the crossing inside step kstop-1
        k1 = np.maximum(kstop, 1)
        h0 = haz[r, k1 - 1]
        h1 = haz[r, k1]
        frac = np.where(byint, (theta - h0) / np.maximum(h1 - h0, 1e-300), 1.0)
        frac = np.clip(frac, 0.0, 1.0)
        tau = np.where(byint, times[k1 - 1] + frac * dts[k1 - 1], times[-1])
        x_tau = np.where(byint,
                         states[r, k1 - 1] + frac * (states[r, k1] - states[r, k1 - 1]),
                         states[:, -1])
        haz_tau = np.where(byint, theta, haz[:, -1])
        fx = f(states)
        disc = np.exp(-haz)
        Hrates = _entropy(rates)
        # conditional (F_T) integrals by trapezoid along the whole path
        def _trap(integrand):
            return np.sum(0.5 * (integrand[:, :-1] + integrand[:, 1:]) * dts, axis=1)
        cf = _trap(fx * rates * disc) + fx[:, -1] * disc[:, -1]
        cf2 = _trap(fx ** 2 * rates * disc) + fx[:, -1] ** 2 * disc[:, -1]
        rw = fx - 0.5 * gamma * fx ** 2
        cr = _trap(rw * rates * disc) + rw[:, -1] * disc[:, -1]
        cH = _trap(Hrates * disc)
        # realized entropy integral up to tau
        Hcum = np.concatenate([np.zeros((rows, 1)),
                               np.cumsum(0.5 * (Hrates[:, :-1] + Hrates[:, 1:]) * dts, axis=1)],
                              axis=1)
        rawH = np.where(byint,
                        Hcum[r, k1 - 1] + frac * (Hcum[r, k1] - Hcum[r, k1 - 1]),
                        Hcum[:, -1])
        f_tau = f(x_tau)
        for key, val in (("tau", tau), ("x", x_tau), ("byint", byint),
                         ("haz", haz_tau), ("ftau", f_tau), ("rawH", rawH),
                         ("cf", cf), ("cf2", cf2), ("cr", cr), ("cH", cH)):
            acc[key].append(val)
    cat = {k: np.concatenate(v) for k, v in acc.items()}
    return CoxStoppingSample(t0=paths.t0, T=paths.times[-1], tau=cat["tau"],
                             x_at_tau=cat["x"], stopped_by_intensity=cat["byint"],
                             hazard_at_tau=cat["haz"], f_at_tau=cat["ftau"],
                             raw_entropy=cat["rawH"], cond_f=cat["cf"],
                             cond_f2=cat["cf2"], cond_reward=cat["cr"],
                             cond_entropy=cat["cH"], gamma=gamma)


@dataclass
class ObjectiveEstimate:
    mean_reward: MCEstimate     # E[f(X_tau)]
    second_moment: MCEstimate   # E[f^2(X_tau)]
    objective: MCEstimate       # J (or J^lambda when entropy is included)
    kind: str

    @property
    def variance(self) -> MCEstimate:
        """Var[f(X_tau)] = E[f^2] - E[f]^2 with a delta-method SE."""
        m1, m2 = self.mean_reward, self.second_moment
        se = float(np.hypot(m2.se, 2.0 * m1.mean * m1.se))
        return MCEstimate(m2.mean - m1.mean ** 2, se, m1.n_paths, self.kind)


def _assemble_objective(a: np.ndarray, b: np.ndarray, b2: np.ndarray,
                        gamma: float, kind: str) -> ObjectiveEstimate:
    """J = mean(a) + (gamma/2) mean(b)^2 with a delta-method standard error;
    a is the per-path h-part, b the per-path f-part."""
    n = len(a)
    mb = float(np.mean(b))
    jmean = float(np.mean(a)) + 0.5 * gamma * mb ** 2
    if n > 1:
        cov = np.cov(np.vstack([a, b]), ddof=1)
        var_j = cov[0, 0] + 2 * gamma * mb * cov[0, 1] + (gamma * mb) ** 2 * cov[1, 1]
        se_j = float(np.sqrt(max(var_j, 0.0) / n))
    else:
        se_j = 0.0
    return ObjectiveEstimate(
        mean_reward=_estimate(b, kind),
        second_moment=_estimate(b2, kind),
        objective=MCEstimate(jmean, se_j, n, kind),
        kind=kind,
    )


def estimate_objective(sample: CoxStoppingSample, spec: ProblemSpec,
                       kind: str = "raw", lam: float | None = None) -> ObjectiveEstimate:
    """Estimate E[f(X_tau)], E[f^2(X_tau)] and the assembled objective.

    kind "raw" averages the realized stopped values; "conditional" uses
    the F_T-conditional integral representation (lower variance).  With
    lam given, the entropy running term is added (the regularized
    objective)."""
    gamma = spec.gamma
    ent = 0.0 if lam is None else float(lam)
    if kind == "raw":
        b = sample.f_at_tau
        b2 = sample.f_at_tau ** 2
        a = b - 0.5 * gamma * b2 + ent * sample.raw_entropy
    elif kind == "conditional":
        b = sample.cond_f
        b2 = sample.cond_f2
        a = sample.cond_reward + ent * sample.cond_entropy
    else:
        raise ValueError(f"unknown estimator kind {kind!r}")
    return _assemble_objective(a, b, b2, gamma, kind)


@dataclass(frozen=True)
class StopRegion:
    """Stop/continue mask on a lattice, looked up by nearest node and
    nearest time slice."""

    grid: Grid
    times: np.ndarray
    mask: np.ndarray

    @classmethod
    def from_vi(cls, sol: VISolution) -> "StopRegion":
        return cls(sol.grid, sol.value.times, sol.stop_mask)

    @classmethod
    def from_threshold(cls, grid: Grid, T: float, threshold: float,
                       side: str = "above") -> "StopRegion":
        times = grid.times(T)
        x = grid.nodes
        row = x >= threshold if side == "above" else x <= threshold
        mask = np.tile(row, (len(times), 1))
        return cls(grid, times, mask)

    def is_stop(self, t: float, x: np.ndarray) -> np.ndarray:
        j = int(np.argmin(np.abs(self.times - t)))
        g = self.grid
        idx = np.clip(np.rint((np.asarray(x) - g.x_min) / g.dx - 1.0).astype(int),
                      0, g.n_x - 1)
        return self.mask[j, idx]


def estimate_hitting_objective(spec: ProblemSpec, region: StopRegion | VISolution,
                               t0: float, x0: float, mc: MCConfig) -> ObjectiveEstimate:
    """Objective of the hitting rule: stop at the first simulated step whose
    nearest-node mask entry says stop, capped at the horizon."""
    if isinstance(region, VISolution):
        region = StopRegion.from_vi(region)
    times = _time_axis(t0, spec.horizon, mc.dt_sim)
    n_steps = len(times) - 1
    f = spec.reward_on
    f_tau_all = []
    for c, lo, hi in _chunk_ranges(mc.n_paths):
        rows = hi - lo
        rng = _chunk_rng(mc.master_seed, c)
        _ = rng.exponential(1.0, size=rows)  # keep stream layout shared with Cox sampling
        x = np.full(rows, float(x0))
        f_tau = np.empty(rows)
        active = ~region.is_stop(times[0], x)
        f_tau[~active] = f(x[~active])
        for k in range(n_steps):
            if not np.any(active):
                break
            z = rng.standard_normal(rows)
            t = times[k]
            dt = times[k + 1] - t
            xa = x[active]
            b = np.asarray(spec.drift(t, xa), dtype=float)
            s = np.asarray(spec.diffusion(t, xa), dtype=float)
            x[active] = xa + b * dt + s * np.sqrt(dt) * z[active]
            stop_now = np.zeros(rows, dtype=bool)
            stop_now[active] = region.is_stop(times[k + 1], x[active])
            if k == n_steps - 1:
                stop_now = active.copy()  # horizon cap
            f_tau[stop_now] = f(x[stop_now])
            active &= ~stop_now
        f_tau_all.append(f_tau)
    f_tau = np.concatenate(f_tau_all)
    b = f_tau
    b2 = f_tau ** 2
    a = b - 0.5 * spec.gamma * b2
    return _assemble_objective(a, b, b2, spec.gamma, "hitting")


def estimate_local_time_relation(spec: ProblemSpec, curve: Callable[[float], float],
                                 t0: float, x0: float, eps_list, mc: MCConfig,
                                 delta_factor: float = 0.1,
                                 bridge: bool = False) -> list[dict]:
    """Check the exit-time/local-time relation: simulate to
    tau = inf{s: |X_s - x0| >= eps} ^ (t0 + eps) ^ T and compare
    (E[l])^2 / E[tau - t0] with sigma^2(t0, x0), where l is the
    occupation-time approximation of the local time at the curve with
    band half-width delta = delta_factor * eps.

    bridge=True refines exit detection with the Brownian-bridge crossing
    probability exp(-2 (b - x_k)(b - x_{k+1}) / (sigma^2 dt)), removing
    the O(sqrt(dt)) barrier overshoot of endpoint monitoring."""
    if abs(curve(t0) - x0) > 1e-9:
        raise ValueError("x0 must sit on the curve at t0")
    sig2_ref = float(spec.diffusion(t0, x0)) ** 2
    reports = []
    for eps in eps_list:
        eps = float(eps)
        if eps <= 0:
            raise ValueError("eps must be positive")
        delta = delta_factor * eps
        t_cap = min(t0 + eps, spec.horizon)
        times = _time_axis(t0, t_cap, mc.dt_sim)
        n_steps = len(times) - 1
        taus, ltimes = [], []
        for c, lo, hi in _chunk_ranges(mc.n_paths):
            rows = hi - lo
            rng = _chunk_rng(mc.master_seed, c)
            _ = rng.exponential(1.0, size=rows)
            x = np.full(rows, float(x0))
            occ = np.zeros(rows)
            tau = np.full(rows, times[-1])
            active = np.ones(rows, dtype=bool)
            prev_band = np.abs(x - curve(times[0])) <= delta
            prev_sig2 = np.asarray(spec.diffusion(times[0], x), dtype=float) ** 2
            for k in range(n_steps):
                if not np.any(active):
                    break
                z = rng.standard_normal(rows)
                t = times[k]
                dt = times[k + 1] - t
                xa = x[active]
                b = np.asarray(spec.drift(t, xa), dtype=float)
                s = np.asarray(spec.diffusion(t, xa), dtype=float)
                xn = xa + b * dt + s * np.sqrt(dt) * z[active]
                x[active] = xn
                u = rng.random(rows) if bridge else None
                band = np.abs(x - curve(times[k + 1])) <= delta
                sig2 = np.asarray(spec.diffusion(times[k + 1], x), dtype=float) ** 2
                contrib = 0.5 * (np.where(prev_band, prev_sig2, 0.0)
                                 + np.where(band, sig2, 0.0)) * dt
                occ[active] += contrib[active]
                exited = active & (np.abs(x - x0) >= eps)
                tau[exited] = times[k + 1]
                if bridge:
                    var = np.broadcast_to(s * s * dt, xa.shape)
                    up, dn = x0 + eps, x0 - eps
                    a_up = np.maximum(up - xa, 0.0) * np.maximum(up - xn, 0.0)
                    a_dn = np.maximum(xa - dn, 0.0) * np.maximum(xn - dn, 0.0)
                    with np.errstate(divide="ignore", over="ignore"):
                        p = np.where(var > 0.0,
                                     np.exp(-2.0 * a_up / np.where(var > 0, var, 1.0))
                                     + np.exp(-2.0 * a_dn / np.where(var > 0, var, 1.0)),
                                     0.0)
                    hit = np.zeros(rows, dtype=bool)
                    hit[active] = u[active] < np.minimum(p, 1.0)
                    hit &= ~exited
                    tau[hit] = times[k] + 0.5 * dt
                    exited |= hit
                active &= ~exited
                prev_band, prev_sig2 = band, sig2
            taus.append(tau)
            ltimes.append(occ / (2 * delta))
        tau = np.concatenate(taus)
        lt = np.concatenate(ltimes)
        e_tau = _estimate(tau - t0, "exit-time")
        e_lt = _estimate(lt, "local-time")
        ratio = e_lt.mean ** 2 / e_tau.mean if e_tau.mean > 0 else np.nan
        reports.append({
            "eps": eps,
            "delta": delta,
            "exit_time": e_tau,
            "local_time": e_lt,
            "ratio": float(ratio),
            "sigma_sq": sig2_ref,
            "abs_error": float(abs(ratio - sig2_ref)),
        })
    return reports
