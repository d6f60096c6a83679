"""Experiment configuration and end-to-end runs.

A run is fully determined by an ``ExperimentConfig``.  Sample ``i`` of a
distribution draws its seed from ``(config seed, distribution, role, i)``, so
two sides configured identically see identical samples, and distinct
distributions see independent ones.  Output files carry the config hash and
seed in both their names and their contents.
"""
from __future__ import annotations

import hashlib
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from typing import Sequence

import numpy as np

from .errors import ConfigError, InvalidSubsampleSize
from .geometry import (
    PersistenceDiagram,
    bottleneck_distance,
    diagram,
    hausdorff_distance,
    write_diagrams_csv,
    write_points_csv,
)
from .inference import (
    NULL_METHODS,
    ConfidenceBand,
    TwoSampleReport,
    _jsonable,
    bootstrap_band,
    error_rate_from_gram,
    index_grid,
)
from .point_processes import (
    MATERN_VARIANTS,
    NOISE_FAMILIES,
    LatticeSpec,
    MaternSpec,
    perturbed_lattice,
    sample,
)
from .rng import derive_seed, substream
from .vectorization import (
    KERNEL_NAMES,
    WEIGHT_FAMILIES,
    DiagramGram,
    DiagramKernel,
    KernelSpec,
    WeightSpec,
    diagram_gram,
    median_c_arc,
    median_sigma,
    pwk_inner_matrix,
    pwk_vector,
    rkhs_distance,
)

EXPERIMENTS = ("lattice-twosample", "matern-twosample", "band", "stability-audit")
MODELS = ("lattice", "matern")
PAPER_SCALE = {"m_L": 20, "n": 50, "m": 40, "N": 1000, "b": 10_000}

# default band grids: the lattice's generic pair and a near-diagonal Matérn point
DEFAULT_GRIDS = {
    "lattice": ((0.5, math.sqrt(2.0) / 2.0), 0.05, 0, 20),
    "matern": ((0.03, 0.04), 0.01, 1, 20),
}


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str = "lattice-twosample"
    model: str = "lattice"
    seed: int = 0
    q: int = 1
    # perturbed lattices: P uses (noise_p, scale_p), Q uses (noise_q, scale_q)
    m_L: int = 10
    noise_p: str = "uniform"
    scale_p: float = 0.1 * math.sqrt(3.0)
    noise_q: str = "gaussian"
    scale_q: float = 0.1
    # Poisson / Matérn
    lam: float = 200.0
    R: float = 0.03
    variant_p: str = "none"
    variant_q: str = "typeII"
    # two-sample loop
    n: int = 20
    m: int = 16
    N: int = 200
    alpha: float = 0.01
    null_method: str = "spectral"
    null_draws: int = 10_000
    permutations: int = 1000
    # diagram kernels
    kernels: tuple = KERNEL_NAMES
    p_arc: int = 5
    sw_directions: int = 64
    bandwidth_multiplier: float = 1.0
    reestimate_tau: bool = True
    # confidence bands
    band_alpha: float = 0.05
    b: int = 500
    band_weights: tuple = WEIGHT_FAMILIES
    grid_center: tuple | None = None
    grid_radius: float | None = None
    grid_start: int | None = None
    grid_stop: int | None = None
    # stability audit
    audit_pairs: int = 100
    audit_points: int = 30
    audit_noise: float = 0.05
    audit_sigma: float = 0.5
    audit_m_L: int = 5
    audit_mc: int = 1000
    audit_shift: float = 0.05
    audit_p: float = 2.0

    # -- construction ---------------------------------------------------
    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = {f.name: f for f in fields(cls)}
        unknown = sorted(set(data) - set(known))
        if unknown:
            raise ConfigError(f"unknown config field(s): {', '.join(unknown)}")
        kwargs = {}
        for key, value in data.items():
            kwargs[key] = _coerce(key, value, known[key].default)
        if "model" not in data and kwargs.get("experiment", "").endswith("-twosample"):
            kwargs["model"] = kwargs["experiment"].split("-")[0]
        return cls(**kwargs).validated()

    def to_dict(self) -> dict:
        d = asdict(self)
        for key, value in d.items():
            if isinstance(value, tuple):
                d[key] = list(value)
        return d

    def with_overrides(self, **changes) -> "ExperimentConfig":
        merged = self.to_dict()
        merged.update(changes)
        return ExperimentConfig.from_dict(merged)

    def paper_scale(self) -> "ExperimentConfig":
        return self.with_overrides(**PAPER_SCALE)

    # -- validation -----------------------------------------------------
    def validated(self) -> "ExperimentConfig":
        def need(ok: bool, name: str, why: str):
            if not ok:
                raise ConfigError(f"config field {name!r}={getattr(self, name)!r}: {why}")

        need(self.experiment in EXPERIMENTS, "experiment", f"must be one of {EXPERIMENTS}")
        need(self.model in MODELS, "model", f"must be one of {MODELS}")
        if self.experiment.endswith("-twosample"):
            need(self.model == self.experiment.split("-")[0], "model", f"conflicts with experiment {self.experiment!r}")
        need(self.q in (0, 1), "q", "homology degree must be 0 or 1")
        need(self.m_L >= 1, "m_L", "must be >= 1")
        for side in ("p", "q"):
            need(getattr(self, f"noise_{side}") in NOISE_FAMILIES, f"noise_{side}", f"must be one of {NOISE_FAMILIES}")
            need(getattr(self, f"scale_{side}") >= 0, f"scale_{side}", "must be >= 0")
            need(getattr(self, f"variant_{side}") in MATERN_VARIANTS, f"variant_{side}", f"must be one of {MATERN_VARIANTS}")
        need(self.lam > 0, "lam", "must be > 0")
        need(self.R >= 0, "R", "must be >= 0")
        need(self.n >= 2, "n", "must be >= 2")
        need(self.m >= 2, "m", "must be >= 2")
        if self.m > self.n:
            raise InvalidSubsampleSize(f"config field 'm'={self.m} exceeds config field 'n'={self.n}")
        need(self.N >= 1, "N", "must be >= 1")
        need(0 < self.alpha < 1, "alpha", "must lie in (0, 1)")
        need(self.null_method in NULL_METHODS, "null_method", f"must be one of {NULL_METHODS}")
        need(self.null_draws >= 1, "null_draws", "must be >= 1")
        need(self.permutations >= 1, "permutations", "must be >= 1")
        need(len(self.kernels) > 0, "kernels", "at least one kernel is required")
        for name in self.kernels:
            need(name in KERNEL_NAMES, "kernels", f"{name!r} is not one of {KERNEL_NAMES}")
        need(self.p_arc >= 1, "p_arc", "must be a positive integer")
        need(self.sw_directions >= 1, "sw_directions", "must be >= 1")
        need(self.bandwidth_multiplier > 0, "bandwidth_multiplier", "must be > 0")
        need(0 < self.band_alpha < 1, "band_alpha", "must lie in (0, 1)")
        need(self.b >= 1, "b", "must be >= 1")
        for wname in self.band_weights:
            need(wname in WEIGHT_FAMILIES, "band_weights", f"{wname!r} is not one of {WEIGHT_FAMILIES}")
        if self.grid_center is not None:
            need(len(self.grid_center) == 2, "grid_center", "must be a pair (x1, x2)")
        if self.grid_radius is not None:
            need(self.grid_radius > 0, "grid_radius", "must be > 0")
        _, _, start, stop = self.grid()
        need(stop >= start, "grid_stop", "must be >= grid_start")
        need(self.audit_pairs >= 1, "audit_pairs", "must be >= 1")
        need(self.audit_points >= 1, "audit_points", "must be >= 1")
        need(self.audit_noise >= 0, "audit_noise", "must be >= 0")
        need(self.audit_sigma > 0, "audit_sigma", "must be > 0")
        need(self.audit_m_L >= 2, "audit_m_L", "must be >= 2")
        need(self.audit_mc >= 2, "audit_mc", "must be >= 2")
        need(self.audit_shift >= 0, "audit_shift", "must be >= 0")
        need(self.audit_p >= 1, "audit_p", "must be >= 1")
        return self

    # -- derived --------------------------------------------------------
    def grid(self):
        center, radius, start, stop = DEFAULT_GRIDS[self.model]
        return (
            tuple(self.grid_center) if self.grid_center is not None else center,
            self.grid_radius if self.grid_radius is not None else radius,
            self.grid_start if self.grid_start is not None else start,
            self.grid_stop if self.grid_stop is not None else stop,
        )

    def distributions(self) -> dict:
        if self.model == "lattice":
            return {
                "P": LatticeSpec(self.m_L, self.noise_p, self.scale_p),
                "Q": LatticeSpec(self.m_L, self.noise_q, self.scale_q),
            }
        return {
            "P": MaternSpec(self.lam, self.R, self.variant_p),
            "Q": MaternSpec(self.lam, self.R, self.variant_q),
        }

    def kernel(self, name: str) -> DiagramKernel:
        return DiagramKernel(name, p_arc=self.p_arc, directions=self.sw_directions,
                             bandwidth_multiplier=self.bandwidth_multiplier,
                             reestimate_tau=self.reestimate_tau)


def _coerce(key: str, value, default):
    if key in ("kernels", "band_weights"):
        if isinstance(value, str):
            value = [v.strip() for v in value.split(",") if v.strip()]
        return tuple(value)
    if key == "grid_center":
        if value is None:
            return None
        if isinstance(value, str):
            value = [float(v) for v in value.split(",")]
        return tuple(float(v) for v in value)
    if value is None:
        return None
    if isinstance(default, bool):
        if isinstance(value, str):
            low = value.lower()
            if low not in ("true", "false", "1", "0"):
                raise ConfigError(f"config field {key!r}: expected a boolean, got {value!r}")
            return low in ("true", "1")
        return bool(value)
    try:
        if isinstance(default, int) or key in ("grid_start", "grid_stop"):
            f = float(value)
            if f != int(f):
                raise ValueError
            return int(f)
        if isinstance(default, float) or key == "grid_radius":
            return float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"config field {key!r}: cannot interpret {value!r} as {type(default).__name__}") from None
    return str(value)


def config_hash(cfg: ExperimentConfig) -> str:
    canonical = json.dumps(cfg.to_dict(), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:12]


def load_config(path) -> dict:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"config file {path} must hold a JSON object")
    return data


def resolve_config(file_data: dict | None = None, paper_scale: bool = False,
                   overrides: dict | None = None) -> ExperimentConfig:
    """Defaults, then the config file, then the full-scale preset, then explicit overrides."""
    merged: dict = dict(file_data or {})
    if paper_scale:
        merged.update(PAPER_SCALE)
    merged.update(overrides or {})
    return ExperimentConfig.from_dict(merged)


# ---------------------------------------------------------------------------
# Samples and diagrams
# ---------------------------------------------------------------------------

def _spec_key(spec) -> str:
    return type(spec).__name__ + json.dumps(spec.to_dict(), sort_keys=True)


def sample_seeds(cfg: ExperimentConfig, spec, role: str, count: int) -> list[int]:
    key = _spec_key(spec)
    return [derive_seed(cfg.seed, "sample", key, role, i) for i in range(count)]


def _diagram_job(job) -> np.ndarray:
    spec, seed, q = job
    return diagram(sample(spec, seed), q).pairs


def _map(fn, jobs: Sequence, threads: int) -> list:
    if threads <= 1 or len(jobs) < 2:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, jobs, chunksize=max(1, len(jobs) // (4 * threads))))


def point_sets(cfg: ExperimentConfig, side: str, role: str = "main", count: int | None = None) -> list[np.ndarray]:
    spec = cfg.distributions()[side]
    return [sample(spec, s) for s in sample_seeds(cfg, spec, role, count or cfg.n)]


def diagrams_for(cfg: ExperimentConfig, side: str, role: str = "main", count: int | None = None,
                 threads: int = 1) -> list[PersistenceDiagram]:
    spec = cfg.distributions()[side]
    jobs = [(spec, s, cfg.q) for s in sample_seeds(cfg, spec, role, count or cfg.n)]
    return [PersistenceDiagram(p, dim=cfg.q) for p in _map(_diagram_job, jobs, threads)]


def _prefix(cfg: ExperimentConfig, kind: str) -> str:
    return f"{kind}_{config_hash(cfg)}_seed{cfg.seed}"


def _provenance(cfg: ExperimentConfig) -> dict:
    return {"config_hash": config_hash(cfg), "seed": cfg.seed, "config": cfg.to_dict()}


def _write_json(path, payload: dict) -> None:
    with open(path, "w") as fh:
        json.dump(_jsonable(payload), fh, indent=2, sort_keys=True)
        fh.write("\n")


def _ensure_dir(out_dir):
    os.makedirs(out_dir, exist_ok=True)
    return out_dir


def run_generate(cfg: ExperimentConfig, out_dir) -> list[str]:
    """Write the configured point sets for both distributions as CSV files."""
    out = _ensure_dir(out_dir)
    prefix = _prefix(cfg, "points")
    written, index = [], {}
    for side, spec in cfg.distributions().items():
        seeds = sample_seeds(cfg, spec, "main", cfg.n)
        index[side] = {"spec": spec.to_dict(), "seeds": seeds}
        for i, s in enumerate(seeds):
            path = os.path.join(out, f"{prefix}_{side}_{i:03d}.csv")
            write_points_csv(path, sample(spec, s))
            written.append(path)
    meta = os.path.join(out, f"{prefix}.json")
    _write_json(meta, {**_provenance(cfg), "samples": index})
    return written + [meta]


def run_diagrams(cfg: ExperimentConfig, out_dir, threads: int = 1) -> list[str]:
    """Write degree-``q`` diagrams of the configured samples."""
    out = _ensure_dir(out_dir)
    prefix = _prefix(cfg, "diagrams")
    written = []
    for side in ("P", "Q"):
        for i, d in enumerate(diagrams_for(cfg, side, threads=threads)):
            path = os.path.join(out, f"{prefix}_{side}_{i:03d}.csv")
            write_diagrams_csv(path, [d])
            written.append(path)
    meta = os.path.join(out, f"{prefix}.json")
    _write_json(meta, _provenance(cfg))
    return written + [meta]


def run_gram(cfg: ExperimentConfig, out_dir, threads: int = 1) -> list[str]:
    """Gram matrices of every configured kernel over the pooled P and Q samples."""
    out = _ensure_dir(out_dir)
    pooled = diagrams_for(cfg, "P", threads=threads) + diagrams_for(cfg, "Q", threads=threads)
    written = []
    for name in cfg.kernels:
        G = diagram_gram(pooled, cfg.kernel(name))
        G = DiagramGram(G.matrix, G.kernel, {**G.params, "config_hash": config_hash(cfg), "seed": cfg.seed})
        base = os.path.join(out, f"{_prefix(cfg, 'gram')}_{name}")
        G.write(base + ".csv", base + ".json")
        written += [base + ".csv", base + ".json"]
    return written


# ---------------------------------------------------------------------------
# Two-sample tables
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TwoSampleRow:
    kernel: str
    type_I: float
    type_II: float
    null_report: TwoSampleReport
    alternative_report: TwoSampleReport


@dataclass(frozen=True)
class TwoSampleResult:
    config: ExperimentConfig
    rows: tuple

    def row(self, kernel: str) -> TwoSampleRow:
        for r in self.rows:
            if r.kernel == kernel:
                return r
        raise KeyError(kernel)

    def to_dict(self) -> dict:
        return {
            **_provenance(self.config),
            "rows": [
                {"kernel": r.kernel, "type_I": r.type_I, "type_II": r.type_II,
                 "null_report": r.null_report.to_dict(),
                 "alternative_report": r.alternative_report.to_dict()}
                for r in self.rows
            ],
        }


def run_twosample(cfg: ExperimentConfig, out_dir=None, threads: int = 1) -> TwoSampleResult:
    """One table row per kernel.

    ``type_I`` is the rejection rate of the subsampled test on two independent
    samples of P; ``type_II`` is the acceptance rate on P against Q.
    """
    P = diagrams_for(cfg, "P", threads=threads)
    P2 = diagrams_for(cfg, "P", role="replicate", threads=threads)
    Q = diagrams_for(cfg, "Q", threads=threads)
    rows = []
    n = cfg.n
    common = dict(null_method=cfg.null_method, draws=cfg.null_draws, permutations=cfg.permutations)
    for name in cfg.kernels:
        kernel = cfg.kernel(name)
        null = error_rate_from_gram(diagram_gram(P + P2, kernel), n, n, cfg.alpha, cfg.m, cfg.N,
                                    derive_seed(cfg.seed, "twosample", name, "null"), **common)
        alt = error_rate_from_gram(diagram_gram(P + Q, kernel), n, n, cfg.alpha, cfg.m, cfg.N,
                                   derive_seed(cfg.seed, "twosample", name, "alternative"), **common)
        rows.append(TwoSampleRow(name, null.rejection_rate, alt.acceptance_rate, null, alt))
    result = TwoSampleResult(cfg, tuple(rows))
    if out_dir is not None:
        out = _ensure_dir(out_dir)
        prefix = _prefix(cfg, "twosample")
        _write_json(os.path.join(out, prefix + ".json"), result.to_dict())
        with open(os.path.join(out, prefix + ".csv"), "w") as fh:
            fh.write("kernel,type_I,type_II,config_hash,seed\n")
            for r in rows:
                fh.write(f"{r.kernel},{r.type_I:.6f},{r.type_II:.6f},{config_hash(cfg)},{cfg.seed}\n")
    return result


# ---------------------------------------------------------------------------
# Confidence bands
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BandComparison:
    weight: str
    band_p: ConfidenceBand
    band_q: ConfidenceBand

    @property
    def disjoint(self) -> np.ndarray:
        return self.band_p.disjoint(self.band_q)

    def disjoint_labels(self) -> list[int]:
        return [lab for lab, d in zip(self.band_p.grid.labels, self.disjoint) if d]


@dataclass(frozen=True)
class BandResult:
    config: ExperimentConfig
    sigma: float
    c_arc: float
    comparisons: tuple

    def comparison(self, weight: str) -> BandComparison:
        for c in self.comparisons:
            if c.weight == weight:
                return c
        raise KeyError(weight)

    def to_dict(self) -> dict:
        return {
            **_provenance(self.config), "sigma": self.sigma, "c_arc": self.c_arc,
            "comparisons": [
                {"weight": c.weight, "disjoint": c.disjoint.tolist(),
                 "disjoint_labels": c.disjoint_labels(),
                 "P": c.band_p.to_dict(), "Q": c.band_q.to_dict()}
                for c in self.comparisons
            ],
        }


def run_band(cfg: ExperimentConfig, out_dir=None, threads: int = 1) -> BandResult:
    """Bands for P and Q on the configured grid, one pair per weight family.

    ``sigma`` and ``C_arc`` come from the median heuristics on the pooled samples.
    """
    specs = cfg.distributions()
    P = diagrams_for(cfg, "P", threads=threads)
    Q = diagrams_for(cfg, "Q", threads=threads)
    pooled = P + Q
    sigma = median_sigma(pooled)
    c_arc = median_c_arc(pooled, cfg.p_arc) if "warc" in cfg.band_weights else 1.0
    k = KernelSpec(sigma)
    center, radius, start, stop = cfg.grid()
    grid = index_grid(center, radius, start, stop)
    comps = []
    for wname in cfg.band_weights:
        w = WeightSpec(wname, c_arc=c_arc, p_arc=cfg.p_arc)
        bands = [
            bootstrap_band(D, k, w, grid, cfg.band_alpha, cfg.b,
                           derive_seed(cfg.seed, "band", _spec_key(specs[side]), wname))
            for side, D in (("P", P), ("Q", Q))
        ]
        comps.append(BandComparison(wname, *bands))
    result = BandResult(cfg, sigma, c_arc, tuple(comps))
    if out_dir is not None:
        out = _ensure_dir(out_dir)
        prefix = _prefix(cfg, "band")
        for c in comps:
            c.band_p.write_csv(os.path.join(out, f"{prefix}_{c.weight}_P.csv"))
            c.band_q.write_csv(os.path.join(out, f"{prefix}_{c.weight}_Q.csv"))
            with open(os.path.join(out, f"{prefix}_{c.weight}_overlap.csv"), "w") as fh:
                fh.write("zx,zy,lo_P,hi_P,lo_Q,hi_Q,disjoint\n")
                for (zx, zy), a, b_, cc, d, dj in zip(grid.points, c.band_p.lo, c.band_p.hi,
                                                      c.band_q.lo, c.band_q.hi, c.disjoint):
                    vals = ",".join(format(float(v), ".17g") for v in (zx, zy, a, b_, cc, d))
                    fh.write(f"{vals},{int(dj)}\n")
        _write_json(os.path.join(out, prefix + ".json"), result.to_dict())
    return result


# ---------------------------------------------------------------------------
# Stability audit
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AuditCheck:
    name: str
    max_ratio: float
    trials: int
    details: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.max_ratio <= 1.0 + 1e-6


@dataclass(frozen=True)
class AuditReport:
    config: ExperimentConfig
    checks: tuple

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def check(self, name: str) -> AuditCheck:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {
            **_provenance(self.config), "passed": self.passed,
            "checks": [{"name": c.name, "max_ratio": c.max_ratio, "passed": c.passed,
                        "trials": c.trials, "details": c.details} for c in self.checks],
        }


def _ratio(lhs: float, rhs: float) -> float:
    if rhs > 0:
        return lhs / rhs
    return 0.0 if lhs <= 1e-12 else math.inf


def kernel_stability_constant(sigma: float, max_points: int, max_persistence: float) -> float:
    """``Lip(k) Bdd(w1) + sqrt(Bdd(k)) L_inf(w1)`` for the Gaussian kernel and ``w1``.

    ``Bdd(w1) = N P_max``; ``L_inf(w1) = 4 N`` because a matching moves at most
    ``2 N`` points (diagonal partners included) and each persistence changes
    by at most twice the sup-norm displacement.
    """
    return math.sqrt(2.0) / sigma * max_points * max_persistence + 4.0 * max_points


def _perturbation_pairs(cfg: ExperimentConfig):
    for t in range(cfg.audit_pairs):
        rng = substream(cfg.seed, "audit-pairs", t)
        X = rng.uniform(0.0, 1.0, size=(cfg.audit_points, 2))
        Y = X + cfg.audit_noise * rng.uniform() * rng.uniform(-1.0, 1.0, size=X.shape)
        yield X, Y


def run_stability_audit(cfg: ExperimentConfig, out_dir=None) -> AuditReport:
    """Empirical left/right ratios for the three stability inequalities."""
    # diagram stability under Hausdorff perturbation, degrees 0 and 1
    worst_pd, worst_k = 0.0, 0.0
    k = KernelSpec(cfg.audit_sigma)
    w1 = WeightSpec("w1")
    for X, Y in _perturbation_pairs(cfg):
        dh = hausdorff_distance(X, Y)
        for q in (0, 1):
            Dx, Dy = diagram(X, q), diagram(Y, q)
            db = bottleneck_distance(Dx, Dy)
            worst_pd = max(worst_pd, _ratio(db, dh))
            if q == 1:
                both = [p for p in (Dx.pairs, Dy.pairs) if len(p)]
                n_max = max((len(p) for p in both), default=0)
                p_max = max((float((p[:, 1] - p[:, 0]).max()) for p in both), default=0.0)
                lhs = rkhs_distance(pwk_vector(Dx, k, w1), pwk_vector(Dy, k, w1))
                worst_k = max(worst_k, _ratio(lhs, kernel_stability_constant(cfg.audit_sigma, n_max, p_max) * db))
    checks = [
        AuditCheck("diagram-stability", worst_pd, cfg.audit_pairs),
        AuditCheck("kernel-stability", worst_k, cfg.audit_pairs,
                   {"sigma": cfg.audit_sigma, "weight": "w1"}),
        _expectation_check(cfg),
    ]
    report = AuditReport(cfg, tuple(checks))
    if out_dir is not None:
        out = _ensure_dir(out_dir)
        _write_json(os.path.join(out, _prefix(cfg, "audit") + ".json"), report.to_dict())
    return report


def _expectation_check(cfg: ExperimentConfig) -> AuditCheck:
    """Shifted-lattice check of the bound on expected PWK vectors.

    Site ``i`` of Q is site ``i`` of P translated by ``shift_i`` with the same
    noise law.  Translating each noise draw couples the two site laws, so
    ``W_p(mu_i, nu_i) <= |shift_i|``.
    """
    spec = LatticeSpec(cfg.audit_m_L, cfg.noise_p, cfg.scale_p)
    rng = substream(cfg.seed, "audit-shift")
    n_sites = cfg.audit_m_L ** 2
    theta = rng.uniform(0.0, 2.0 * math.pi, n_sites)
    radius = cfg.audit_shift * rng.uniform(0.0, 1.0, n_sites)
    shifts = radius[:, None] * np.column_stack([np.cos(theta), np.sin(theta)])
    mc = cfg.audit_mc
    # the same noise draw feeds P_i and Q_i: the translation coupling itself
    clouds = [perturbed_lattice(spec, derive_seed(cfg.seed, "audit", i)) for i in range(mc)]
    P = [diagram(X, cfg.q) for X in clouds]
    Q = [diagram(X + shifts, cfg.q) for X in clouds]
    k = KernelSpec(cfg.audit_sigma)
    w1 = WeightSpec("w1")
    G = pwk_inner_matrix(P + Q, k, w1)
    Gpp, Gqq, Gpq = G[:mc, :mc], G[mc:, mc:], G[:mc, mc:]
    lhs = math.sqrt(max(Gpp.mean() + Gqq.mean() - 2.0 * Gpq.mean(), 0.0))
    # standard error of the mean of the paired differences V(P_i) - V(Q_i)
    sq = np.diag(Gpp) + np.diag(Gqq) - 2.0 * np.diag(Gpq)
    se = math.sqrt(max(sq.mean() - lhs ** 2, 0.0) / mc)
    n_max = max(len(d) for d in P + Q)
    p_max = max((float(d.persistence.max()) for d in P + Q if len(d)), default=0.0)
    const = kernel_stability_constant(cfg.audit_sigma, n_max, p_max)
    wass = float(np.sum(np.linalg.norm(shifts, axis=1) ** cfg.audit_p) ** (1.0 / cfg.audit_p))
    rhs = const * wass
    return AuditCheck("expectation-stability", _ratio(lhs, rhs + 2.0 * se), mc,
                      {"lhs": lhs, "rhs": rhs, "standard_error": se, "constant": const,
                       "wasserstein_bound": wass, "max_points": n_max, "max_persistence": p_max})
